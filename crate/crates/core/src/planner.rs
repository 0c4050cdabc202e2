//! Random-shooting singulation planner.
//!
//! Each interaction samples a batch of slide actions, rolls every one out
//! in the frictionless simulator, and executes the cheapest. The loop stops
//! once every target part can be grasped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::PartClass;
use crate::par::Execution;
use crate::perception::{perceive_scene, PerceptionConfig, PerceptionError};
use crate::scene::Scene;
use crate::sim::{
    all_graspable, apply_slide, simulate_slide, sweep_collides, GripperFootprint, SimError, SlideAction, SlipModel,
    DEFAULT_STEP_MM, MAX_SLIDE_MM,
};

/// Weights of the slide cost. Separation and centring weights are per mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub collision: f64,
    pub gear: f64,
    pub separation: f64,
    pub centering: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            collision: 10.0,
            gear: 1.0,
            separation: 0.02,
            centering: 0.005,
        }
    }
}

/// Raw terms of the slide cost before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub collision: bool,
    pub gear: bool,
    /// Gain in minimum clearance to any other part (after minus before).
    pub separation_gain: f64,
    /// Distance of the moved part's final centre from the workspace centre.
    pub center_distance: f64,
}

impl CostTerms {
    pub fn total(&self, w: &CostWeights) -> f64 {
        let indicator = |b: bool| if b { 1.0 } else { 0.0 };
        w.collision * indicator(self.collision) - w.gear * indicator(self.gear) - w.separation * self.separation_gain
            + w.centering * self.center_distance
    }
}

/// Clearance of `part` to its nearest obstacle, with the table edge counted
/// as one. Without the edge, separating parts drives them off the table
/// where the fingers no longer fit.
pub fn free_space(scene: &Scene, part: PartClass) -> Option<f64> {
    match (scene.min_clearance(part), scene.edge_clearance(part)) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Evaluates the cost terms on a zero-slip rollout. `None` when the rollout
/// drops a part off the table.
pub fn cost_terms(scene: &Scene, action: &SlideAction) -> Result<Option<CostTerms>, SimError> {
    let collision = sweep_collides(scene, action, DEFAULT_STEP_MM)?;
    let outcome = simulate_slide(scene, action, DEFAULT_STEP_MM)?;
    if outcome.off_table {
        return Ok(None);
    }
    let after = &outcome.final_scene;
    let separation_gain = match (free_space(scene, action.part), free_space(after, action.part)) {
        (Some(before), Some(after)) => after - before,
        _ => 0.0,
    };
    let end = after
        .pose(action.part)
        .ok_or(SimError::UnknownPart(action.part))?
        .position();
    Ok(Some(CostTerms {
        collision,
        gear: action.part.is_gear(),
        separation_gain,
        center_distance: (end - scene.workspace.center()).norm(),
    }))
}

/// Slide cost; lower is better. Actions that drop a part off the table
/// cost `+inf`.
pub fn action_cost(scene: &Scene, action: &SlideAction, weights: &CostWeights) -> Result<f64, SimError> {
    Ok(cost_terms(scene, action)?.map_or(f64::INFINITY, |t| t.total(weights)))
}

/// Uniform part among those on the table, uniform displacement in
/// [-300, 300] mm per axis.
pub fn sample_action<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> SlideAction {
    let part = scene.parts[rng.random_range(0..scene.parts.len())].class;
    let dx = rng.random_range(-MAX_SLIDE_MM..=MAX_SLIDE_MM);
    let dy = rng.random_range(-MAX_SLIDE_MM..=MAX_SLIDE_MM);
    SlideAction { part, dx, dy }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub best_action: SlideAction,
    pub best_cost: f64,
    pub best_index: usize,
    pub samples_evaluated: usize,
    pub per_sample_costs: Vec<f64>,
}

/// Lowest cost, ties to the lowest index.
fn argmin(costs: &[f64]) -> usize {
    costs
        .iter()
        .enumerate()
        .fold(0, |best, (i, c)| if *c < costs[best] { i } else { best })
}

pub fn plan<R: Rng + ?Sized>(scene: &Scene, weights: &CostWeights, n_samples: usize, rng: &mut R) -> PlanResult {
    plan_with(scene, weights, n_samples, rng, Execution::default())
}

/// Samples are drawn sequentially from `rng`, then scored with `exec`.
pub fn plan_with<R: Rng + ?Sized>(
    scene: &Scene,
    weights: &CostWeights,
    n_samples: usize,
    rng: &mut R,
    exec: Execution,
) -> PlanResult {
    assert!(n_samples >= 1, "plan needs at least one sample");
    let actions: Vec<SlideAction> = (0..n_samples).map(|_| sample_action(scene, rng)).collect();
    evaluate_actions(scene, weights, actions, exec)
}

/// Scores a fixed candidate set and picks the cheapest.
pub fn evaluate_actions(scene: &Scene, weights: &CostWeights, actions: Vec<SlideAction>, exec: Execution) -> PlanResult {
    assert!(!actions.is_empty(), "no candidate actions");
    let per_sample_costs = exec.map(&actions, |_, a| {
        action_cost(scene, a, weights).expect("sampled actions reference scene parts")
    });
    let best_index = argmin(&per_sample_costs);
    PlanResult {
        best_action: actions[best_index],
        best_cost: per_sample_costs[best_index],
        best_index,
        samples_evaluated: actions.len(),
        per_sample_costs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingulationConfig {
    pub samples: usize,
    pub max_interactions: usize,
    pub weights: CostWeights,
    pub slip: SlipModel,
    pub gripper: GripperFootprint,
}

impl Default for SingulationConfig {
    fn default() -> Self {
        SingulationConfig {
            samples: 100,
            max_interactions: 10,
            weights: CostWeights::default(),
            slip: SlipModel::default(),
            gripper: GripperFootprint::default(),
        }
    }
}

/// One executed slide of the singulation loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub interaction: usize,
    pub chosen_part: PartClass,
    pub dx: f64,
    pub dy: f64,
    pub cost: f64,
    pub slipped: bool,
    pub collided: bool,
    pub off_table: bool,
    pub pegs_graspable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingulationResult {
    pub final_scene: Scene,
    /// Poses the last graspability check saw; equal to `final_scene` when
    /// planning on exact poses.
    pub final_belief: Scene,
    pub interactions: usize,
    pub success: bool,
    pub records: Vec<InteractionRecord>,
}

/// Random streams consumed by the singulation loop.
pub struct SingulationStreams<'a, R: Rng + ?Sized> {
    pub planner: &'a mut R,
    pub slip: &'a mut R,
    /// `None` plans on exact poses.
    pub perception: Option<(&'a PerceptionConfig, &'a mut R)>,
}

/// Singulates until every part in `targets` still on the table is
/// graspable. Fails when the interaction budget runs out or a part leaves
/// the table.
pub fn singulate<R: Rng + ?Sized>(
    scene: &Scene,
    targets: &[PartClass],
    config: &SingulationConfig,
    streams: SingulationStreams<'_, R>,
    exec: Execution,
) -> Result<SingulationResult, PerceptionError> {
    let SingulationStreams {
        planner,
        slip,
        mut perception,
    } = streams;
    let mut truth = scene.clone();
    let mut records = Vec::new();
    loop {
        let belief = match perception.as_mut() {
            Some((cfg, rng)) => perceive_scene(&truth, cfg, &mut **rng)?,
            None => truth.clone(),
        };
        if all_graspable(&belief, targets, &config.gripper) {
            return Ok(SingulationResult {
                final_scene: truth,
                final_belief: belief,
                interactions: records.len(),
                success: true,
                records,
            });
        }
        if records.len() >= config.max_interactions {
            return Ok(SingulationResult {
                final_scene: truth,
                final_belief: belief,
                interactions: records.len(),
                success: false,
                records,
            });
        }
        let plan = plan_with(&belief, &config.weights, config.samples, planner, exec);
        let outcome = apply_slide(&truth, &plan.best_action, &config.slip, slip)
            .expect("planned part is on the table");
        truth = outcome.final_scene;
        let last_belief = belief;
        records.push(InteractionRecord {
            interaction: records.len() + 1,
            chosen_part: plan.best_action.part,
            dx: plan.best_action.dx,
            dy: plan.best_action.dy,
            cost: plan.best_cost,
            slipped: outcome.slipped,
            collided: outcome.collided,
            off_table: outcome.off_table,
            pegs_graspable: !outcome.off_table && all_graspable(&truth, targets, &config.gripper),
        });
        if outcome.off_table {
            return Ok(SingulationResult {
                final_scene: truth,
                final_belief: last_belief,
                interactions: records.len(),
                success: false,
                records,
            });
        }
    }
}

/// Standalone singulation of the two pegs on exact poses.
pub fn singulate_pegs<R: Rng + ?Sized>(
    scene: &Scene,
    config: &SingulationConfig,
    planner: &mut R,
    slip: &mut R,
    exec: Execution,
) -> SingulationResult {
    singulate(
        scene,
        &PartClass::PEGS,
        config,
        SingulationStreams {
            planner,
            slip,
            perception: None,
        },
        exec,
    )
    .expect("exact perception cannot fail")
}
