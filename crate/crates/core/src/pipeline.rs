//! Closed-loop assembly state machine.
//!
//! Each `step` runs one stage against the simulated world, logs an event
//! with the stage's configured robot-motion time, and picks the next stage.
//! Grasp and insertion failures put the part back on the table and go
//! through Perceive -> Singulate -> Grasp again until the part's retry
//! budget is spent.

use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::inhand::{
    fit_offset_estimator, inject_grasp_error, insert_peg, observe_tactile, plan_peg_grasp, radial_clearance,
    simulate_reorientation, GraspConfig, GraspState, OffsetEstimator, PivotModel, DEFAULT_TACTILE_SIGMA,
};
use crate::insertion::{fit_insertion_policy, insert_gear_loop, GearInsertConfig, InsertionPolicy, DEFAULT_FORCE_SIGMA};
use crate::meshing::{mesh_gears, mesh_pitch, MeshConfig, MeshError, MeshOutcome};
use crate::model::{AssemblyStep, PartClass, Pose2D, Vec2, PEG_DIAMETER_MM};
use crate::par::Execution;
use crate::perception::{perceive_scene, PerceptionConfig, Point3, PoseEstimate, PrincipalAxes};
use crate::planner::{singulate, CostWeights, SingulationConfig, SingulationStreams};
use crate::rng::{
    stream, StreamRng, FORCE_NOISE, GRASP, INSERTION_TRAIN, MESH, OFFSET_TRAIN, PERCEPTION, PLANNER, SLIP,
    TACTILE_NOISE,
};
use crate::scene::Scene;
use crate::sim::{graspable, GripperFootprint, SlipModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GearSlot {
    Large,
    Small,
}

impl GearSlot {
    pub fn class(self) -> PartClass {
        match self {
            GearSlot::Large => PartClass::GearLarge,
            GearSlot::Small => PartClass::GearSmall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stage {
    Perceive,
    Singulate,
    GraspPeg(u8),
    Reorient(u8),
    EstimateOffset(u8),
    InsertPeg(u8),
    GraspGear(GearSlot),
    InsertGear(GearSlot),
    MeshGears,
    Done,
    Failed { stage: Box<Stage>, cause: String },
}

impl Stage {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Stage::Done | Stage::Failed { .. })
    }

    /// Assembly step a stage works on; `None` for perception, singulation
    /// and terminals.
    pub fn assembly_step(&self) -> Option<AssemblyStep> {
        match self {
            Stage::MeshGears => Some(AssemblyStep::Mesh),
            _ => self.part().map(|p| match p {
                PartClass::Peg1 => AssemblyStep::Peg1,
                PartClass::Peg2 => AssemblyStep::Peg2,
                PartClass::GearLarge => AssemblyStep::GearLarge,
                PartClass::GearSmall => AssemblyStep::GearSmall,
            }),
        }
    }

    /// Part handled by a peg or gear stage.
    pub fn part(&self) -> Option<PartClass> {
        match self {
            Stage::GraspPeg(i) | Stage::Reorient(i) | Stage::EstimateOffset(i) | Stage::InsertPeg(i) => {
                Some(peg_class(*i))
            }
            Stage::GraspGear(g) | Stage::InsertGear(g) => Some(g.class()),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gear = |g: &GearSlot| match g {
            GearSlot::Large => "large",
            GearSlot::Small => "small",
        };
        match self {
            Stage::Perceive => write!(f, "perceive"),
            Stage::Singulate => write!(f, "singulate"),
            Stage::GraspPeg(i) => write!(f, "grasp_peg_{i}"),
            Stage::Reorient(i) => write!(f, "reorient_{i}"),
            Stage::EstimateOffset(i) => write!(f, "estimate_offset_{i}"),
            Stage::InsertPeg(i) => write!(f, "insert_peg_{i}"),
            Stage::GraspGear(g) => write!(f, "grasp_gear_{}", gear(g)),
            Stage::InsertGear(g) => write!(f, "insert_gear_{}", gear(g)),
            Stage::MeshGears => write!(f, "mesh_gears"),
            Stage::Done => write!(f, "done"),
            Stage::Failed { stage, .. } => write!(f, "failed({stage})"),
        }
    }
}

fn peg_class(i: u8) -> PartClass {
    if i == 1 { PartClass::Peg1 } else { PartClass::Peg2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Retry,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub seq: usize,
    pub stage: String,
    pub outcome: Outcome,
    /// Simulated robot time at the end of the stage.
    pub sim_time_s: f64,
    /// Measured computation time of the stage.
    pub wall_time_s: f64,
    pub detail: Value,
}

/// One JSON object per line. Without wall time the log is a pure function
/// of (scene, config, seed).
pub fn write_event_log<W: Write>(events: &[PipelineEvent], mut out: W, with_wall_time: bool) -> io::Result<()> {
    for e in events {
        let mut v = serde_json::to_value(e)?;
        if !with_wall_time {
            v.as_object_mut().expect("event is an object").remove("wall_time_s");
        }
        serde_json::to_writer(&mut out, &v)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Simulated robot-motion seconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageDurations {
    pub perceive: f64,
    pub singulate_per_interaction: f64,
    pub grasp_peg: f64,
    pub reorient: f64,
    pub estimate_offset: f64,
    pub insert_peg: f64,
    pub grasp_gear: f64,
    pub insert_gear: f64,
    pub insert_gear_per_correction: f64,
    pub mesh_per_attempt: f64,
}

impl Default for StageDurations {
    fn default() -> Self {
        StageDurations {
            perceive: 2.0,
            singulate_per_interaction: 8.0,
            grasp_peg: 6.0,
            reorient: 4.0,
            estimate_offset: 1.5,
            insert_peg: 8.0,
            grasp_gear: 5.0,
            insert_gear: 4.0,
            insert_gear_per_correction: 2.5,
            mesh_per_attempt: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub perception_sigma_mm: f64,
    pub slip_prob: f64,
    pub tactile_sigma: f64,
    pub force_sigma: f64,
    /// Draw the peg's in-hand offset from U(-10, 10) mm; zero otherwise.
    pub peg_grasp_error: bool,
    /// Gear bore misalignment is U(-e, e) along a random axis.
    pub gear_grasp_error_mm: f64,
    /// Chance that a grasp closes on nothing.
    pub grasp_failure_prob: f64,
    pub mesh_jitter: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            perception_sigma_mm: 1.0,
            slip_prob: SlipModel::default().p_slip,
            tactile_sigma: DEFAULT_TACTILE_SIGMA,
            force_sigma: DEFAULT_FORCE_SIGMA,
            peg_grasp_error: true,
            gear_grasp_error_mm: 4.0,
            grasp_failure_prob: 0.02,
            mesh_jitter: 0.05,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig {
            perception_sigma_mm: 0.0,
            slip_prob: 0.0,
            tactile_sigma: 0.0,
            force_sigma: 0.0,
            peg_grasp_error: false,
            gear_grasp_error_mm: 0.0,
            grasp_failure_prob: 0.0,
            mesh_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryBudgets {
    /// Re-perceive and re-grasp cycles per part.
    pub per_part: usize,
    pub singulation_interactions: usize,
    pub mesh_attempts: usize,
    pub gear_insert_iters: usize,
}

impl Default for RetryBudgets {
    fn default() -> Self {
        RetryBudgets {
            per_part: 3,
            singulation_interactions: 10,
            mesh_attempts: 5,
            gear_insert_iters: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub noise: NoiseConfig,
    pub budgets: RetryBudgets,
    pub durations: StageDurations,
    pub singulation_samples: usize,
    pub weights: CostWeights,
    pub gripper: GripperFootprint,
    pub perception_points: usize,
    pub grasp: GraspConfig,
    pub pivot: PivotModel,
    pub offset_train_size: usize,
    pub insertion_train_per_class: usize,
    pub gear_step_mm: f64,
    pub mesh: MeshConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            noise: NoiseConfig::default(),
            budgets: RetryBudgets::default(),
            durations: StageDurations::default(),
            singulation_samples: 100,
            weights: CostWeights::default(),
            gripper: GripperFootprint::default(),
            perception_points: PerceptionConfig::default().points,
            grasp: GraspConfig::default(),
            pivot: PivotModel::default(),
            offset_train_size: 1000,
            insertion_train_per_class: 50,
            gear_step_mm: 1.0,
            mesh: MeshConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        let d = &self.durations;
        let durations = [
            d.perceive,
            d.singulate_per_interaction,
            d.grasp_peg,
            d.reorient,
            d.estimate_offset,
            d.insert_peg,
            d.grasp_gear,
            d.insert_gear,
            d.insert_gear_per_correction,
            d.mesh_per_attempt,
        ];
        if durations.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("stage durations must be finite and non-negative".into());
        }
        let p = [self.noise.slip_prob, self.noise.grasp_failure_prob];
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("probabilities must lie in [0, 1]".into());
        }
        if self.singulation_samples == 0 || self.perception_points < 3 {
            return Err("singulation samples and perception points must be positive".into());
        }
        if self.gear_step_mm.is_nan() || self.gear_step_mm <= 0.0 {
            return Err("gear step must be positive".into());
        }
        if self.noise.gear_grasp_error_mm > 5.0 {
            return Err("gear grasp error beyond the force model range (5 mm)".into());
        }
        self.grasp.validate().map_err(|e| e.to_string())
    }

    fn perception(&self) -> PerceptionConfig {
        PerceptionConfig {
            noise_sigma: self.noise.perception_sigma_mm,
            points: self.perception_points,
        }
    }

    fn mesh_config(&self) -> MeshConfig {
        MeshConfig {
            max_attempts: self.budgets.mesh_attempts,
            jitter: self.noise.mesh_jitter,
            ..self.mesh
        }
    }
}

/// Meshing strategy, swappable for fault injection.
pub trait Mesher: Sync {
    fn mesh(&self, theta0: f64, config: &MeshConfig, rng: &mut StreamRng) -> Result<MeshOutcome, MeshError>;
}

pub struct CompliantMesher;

impl Mesher for CompliantMesher {
    fn mesh(&self, theta0: f64, config: &MeshConfig, rng: &mut StreamRng) -> Result<MeshOutcome, MeshError> {
        mesh_gears(theta0, config, rng)
    }
}

struct Streams {
    perception: StreamRng,
    planner: StreamRng,
    slip: StreamRng,
    grasp: StreamRng,
    tactile: StreamRng,
    force: StreamRng,
    mesh: StreamRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            perception: stream(seed, PERCEPTION),
            planner: stream(seed, PLANNER),
            slip: stream(seed, SLIP),
            grasp: stream(seed, GRASP),
            tactile: stream(seed, TACTILE_NOISE),
            force: stream(seed, FORCE_NOISE),
            mesh: stream(seed, MESH),
        }
    }
}

/// Part currently in the gripper and where it was picked from.
#[derive(Debug, Clone, Copy)]
struct Held {
    part: PartClass,
    origin: Pose2D,
    /// Perceived pose the grasp was planned on.
    frame: Pose2D,
    peg: Option<GraspState>,
    correction: f64,
    gear_error: Vec2,
}

pub struct Pipeline<'m> {
    config: PipelineConfig,
    mesher: &'m dyn Mesher,
    exec: Execution,
    truth: Scene,
    belief: Scene,
    state: Stage,
    /// Grasp stage Singulate hands over to.
    pending_grasp: Stage,
    /// Parts Singulate must make graspable.
    targets: Vec<PartClass>,
    held: Option<Held>,
    retries: [usize; 4],
    sim_time: f64,
    events: Vec<PipelineEvent>,
    estimator: OffsetEstimator,
    policy: InsertionPolicy,
    rng: Streams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub terminal: Stage,
    pub events: Vec<PipelineEvent>,
    pub sim_time_s: f64,
    pub final_scene: Scene,
}

impl PipelineResult {
    pub fn success(&self) -> bool {
        self.terminal == Stage::Done
    }

    /// The stage named by the terminal failure, if any.
    pub fn failed_stage(&self) -> Option<&Stage> {
        match &self.terminal {
            Stage::Failed { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

struct StepResult {
    outcome: Outcome,
    duration: f64,
    detail: Value,
    next: Stage,
}

impl<'m> Pipeline<'m> {
    pub fn new(scene: &Scene, config: PipelineConfig, seed: u64, mesher: &'m dyn Mesher, exec: Execution) -> Self {
        let estimator = fit_offset_estimator(
            config.offset_train_size,
            config.noise.tactile_sigma,
            &mut stream(seed, OFFSET_TRAIN),
        );
        let policy = fit_insertion_policy(
            config.insertion_train_per_class,
            config.noise.force_sigma,
            &mut stream(seed, INSERTION_TRAIN),
        );
        Pipeline {
            config,
            mesher,
            exec,
            truth: scene.clone(),
            belief: scene.clone(),
            state: Stage::Perceive,
            pending_grasp: Stage::GraspPeg(1),
            targets: PartClass::PEGS.to_vec(),
            held: None,
            retries: [0; 4],
            sim_time: 0.0,
            events: Vec::new(),
            estimator,
            policy,
            rng: Streams::new(seed),
        }
    }

    pub fn state(&self) -> &Stage {
        &self.state
    }

    pub fn events(&self) -> &[PipelineEvent] {
        &self.events
    }

    pub fn truth(&self) -> &Scene {
        &self.truth
    }

    /// Runs the current stage and returns the events it appended. A no-op
    /// once terminal.
    pub fn step(&mut self) -> &[PipelineEvent] {
        let first = self.events.len();
        if self.state.is_terminal() {
            return &self.events[first..];
        }
        let start = Instant::now();
        let stage = self.state.clone();
        let r = self.execute(&stage);
        self.sim_time += r.duration;
        let mut detail = r.detail;
        detail["duration_s"] = json!(r.duration);
        self.push_event(stage.to_string(), r.outcome, start.elapsed().as_secs_f64(), detail);
        if let Stage::Failed { stage: failed, cause } = &r.next {
            let terminal = json!({ "stage": failed.to_string(), "cause": cause, "duration_s": 0.0 });
            self.push_event(r.next.to_string(), Outcome::Fail, 0.0, terminal);
        } else if r.next == Stage::Done {
            self.push_event("done".into(), Outcome::Ok, 0.0, json!({ "duration_s": 0.0 }));
        }
        self.state = r.next;
        &self.events[first..]
    }

    fn push_event(&mut self, stage: String, outcome: Outcome, wall: f64, detail: Value) {
        self.events.push(PipelineEvent {
            seq: self.events.len(),
            stage,
            outcome,
            sim_time_s: self.sim_time,
            wall_time_s: wall,
            detail,
        });
    }

    pub fn run(mut self) -> PipelineResult {
        while !self.state.is_terminal() {
            self.step();
        }
        PipelineResult {
            terminal: self.state,
            events: self.events,
            sim_time_s: self.sim_time,
            final_scene: self.truth,
        }
    }

    fn ok(duration: f64, detail: Value, next: Stage) -> StepResult {
        StepResult {
            outcome: Outcome::Ok,
            duration,
            detail,
            next,
        }
    }

    fn fail(stage: &Stage, duration: f64, detail: Value, cause: impl Into<String>) -> StepResult {
        StepResult {
            outcome: Outcome::Fail,
            duration,
            detail,
            next: Stage::Failed {
                stage: Box::new(stage.clone()),
                cause: cause.into(),
            },
        }
    }

    /// Puts any held part back, then re-perceives and re-grasps `part`, or
    /// fails if its budget is spent.
    fn retry(&mut self, stage: &Stage, part: PartClass, duration: f64, mut detail: Value, cause: &str) -> StepResult {
        if let Some(h) = self.held.take() {
            self.truth.set_pose(h.part, h.origin);
        }
        let slot = part_index(part);
        detail["cause"] = json!(cause);
        if self.retries[slot] >= self.config.budgets.per_part {
            return Self::fail(stage, duration, detail, cause);
        }
        self.retries[slot] += 1;
        detail["retry"] = json!(self.retries[slot]);
        self.pending_grasp = grasp_stage_for(part);
        self.targets = vec![part];
        StepResult {
            outcome: Outcome::Retry,
            duration,
            detail,
            next: Stage::Perceive,
        }
    }

    fn execute(&mut self, stage: &Stage) -> StepResult {
        let d = self.config.durations;
        match stage {
            Stage::Perceive => {
                match perceive_scene(&self.truth, &self.config.perception(), &mut self.rng.perception) {
                    Ok(b) => {
                        self.belief = b;
                        Self::ok(d.perceive, json!({ "parts": self.belief.parts.len() }), Stage::Singulate)
                    }
                    Err(e) => Self::fail(stage, d.perceive, json!({}), e.to_string()),
                }
            }
            Stage::Singulate => self.singulate(stage),
            Stage::GraspPeg(i) => {
                let part = peg_class(*i);
                let Some(feasible) = self.grasp_feasible(part) else {
                    return Self::fail(stage, d.grasp_peg, json!({}), "peg missing");
                };
                if !feasible {
                    return self.retry(stage, part, d.grasp_peg, json!({}), "not graspable");
                }
                if self.rng.grasp.random_bool(self.config.noise.grasp_failure_prob) {
                    return self.retry(stage, part, d.grasp_peg, json!({}), "grasp slipped");
                }
                let dx = if self.config.noise.peg_grasp_error {
                    inject_grasp_error(&mut self.rng.grasp)
                } else {
                    0.0
                };
                self.pick(part, Some(GraspState { part, dx, reoriented: false }), Vec2::zeros());
                Self::ok(d.grasp_peg, json!({ "part": part, "dx_mm": dx }), Stage::Reorient(*i))
            }
            Stage::Reorient(i) => {
                let part = peg_class(*i);
                let Some(frame) = self.held.map(|h| h.frame) else {
                    return Self::fail(stage, d.reorient, json!({}), "no peg in hand");
                };
                let estimate = PoseEstimate {
                    position: Point3::new(frame.x, frame.y, 0.0),
                    yaw: frame.yaw(),
                    label: part,
                    degenerate: false,
                    axes: PrincipalAxes {
                        values: [0.0; 3],
                        vectors: [Point3::zeros(); 3],
                    },
                };
                let grasp = match plan_peg_grasp(&estimate, &self.config.grasp) {
                    Ok(g) => g,
                    Err(e) => return Self::fail(stage, d.reorient, json!({}), e.to_string()),
                };
                let up = simulate_reorientation(&grasp, &part.geometry(), &self.config.pivot);
                let detail = json!({
                    "gravity_torque_nmm": self.config.pivot.gravity_torque(&grasp),
                    "holding_torque_nmm": self.config.pivot.holding_torque(&grasp),
                });
                if !up {
                    return self.retry(stage, part, d.reorient, detail, "peg did not pivot");
                }
                if let Some(GraspState { reoriented, .. }) = self.held.as_mut().and_then(|h| h.peg.as_mut()) {
                    *reoriented = true;
                }
                Self::ok(d.reorient, detail, Stage::EstimateOffset(*i))
            }
            Stage::EstimateOffset(i) => {
                let Some(state) = self.held.and_then(|h| h.peg) else {
                    return Self::fail(stage, d.estimate_offset, json!({}), "no peg in hand");
                };
                let obs = observe_tactile(state.dx, self.config.noise.tactile_sigma, &mut self.rng.tactile);
                match self.estimator.estimate(&obs) {
                    Ok(dx_hat) => {
                        if let Some(h) = self.held.as_mut() {
                            h.correction = dx_hat;
                        }
                        Self::ok(d.estimate_offset, json!({ "dx_hat_mm": dx_hat }), Stage::InsertPeg(*i))
                    }
                    Err(e) => Self::fail(stage, d.estimate_offset, json!({}), e.to_string()),
                }
            }
            Stage::InsertPeg(i) => {
                let part = peg_class(*i);
                let Some(h) = self.held else {
                    return Self::fail(stage, d.insert_peg, json!({}), "no peg in hand");
                };
                let state = h.peg.expect("peg grasp state");
                let clearance = radial_clearance(self.truth.workspace.hole_diameter, PEG_DIAMETER_MM);
                let residual = state.dx - h.correction;
                let detail = json!({ "residual_mm": residual });
                if !insert_peg(&state, h.correction, clearance) {
                    return self.retry(stage, part, d.insert_peg, detail, "peg missed the hole");
                }
                self.held = None;
                let next = if *i == 1 {
                    self.pending_grasp = Stage::GraspPeg(2);
                    Stage::GraspPeg(2)
                } else {
                    self.pending_grasp = Stage::GraspGear(GearSlot::Large);
                    Stage::GraspGear(GearSlot::Large)
                };
                Self::ok(d.insert_peg, detail, next)
            }
            Stage::GraspGear(g) => {
                let part = g.class();
                let Some(feasible) = self.grasp_feasible(part) else {
                    return Self::fail(stage, d.grasp_gear, json!({}), "gear missing");
                };
                if !feasible {
                    return self.retry(stage, part, d.grasp_gear, json!({}), "not graspable");
                }
                if self.rng.grasp.random_bool(self.config.noise.grasp_failure_prob) {
                    return self.retry(stage, part, d.grasp_gear, json!({}), "grasp slipped");
                }
                let e = self.config.noise.gear_grasp_error_mm;
                let along_x = self.rng.grasp.random_bool(0.5);
                let mag = if e > 0.0 { self.rng.grasp.random_range(-e..=e) } else { 0.0 };
                let error = if along_x { Vec2::new(mag, 0.0) } else { Vec2::new(0.0, mag) };
                self.pick(part, None, error);
                Self::ok(
                    d.grasp_gear,
                    json!({ "part": part, "error_mm": [error.x, error.y] }),
                    Stage::InsertGear(*g),
                )
            }
            Stage::InsertGear(g) => {
                let part = g.class();
                let Some(h) = self.held else {
                    return Self::fail(stage, d.insert_gear, json!({}), "no gear in hand");
                };
                let cfg = GearInsertConfig {
                    step_mm: self.config.gear_step_mm,
                    max_iters: self.config.budgets.gear_insert_iters,
                    sigma: self.config.noise.force_sigma,
                    ..Default::default()
                };
                let out = match insert_gear_loop(h.gear_error, &self.policy, &cfg, &mut self.rng.force) {
                    Ok(o) => o,
                    Err(e) => return Self::fail(stage, d.insert_gear, json!({}), e.to_string()),
                };
                let duration = d.insert_gear + d.insert_gear_per_correction * out.corrections as f64;
                let detail = json!({
                    "corrections": out.corrections,
                    "residual_mm": [out.residual.x, out.residual.y],
                });
                if !out.success {
                    return self.retry(stage, part, duration, detail, "gear did not seat");
                }
                self.held = None;
                let next = match g {
                    GearSlot::Large => {
                        self.pending_grasp = Stage::GraspGear(GearSlot::Small);
                        Stage::GraspGear(GearSlot::Small)
                    }
                    GearSlot::Small => Stage::MeshGears,
                };
                Self::ok(duration, detail, next)
            }
            Stage::MeshGears => {
                let theta0 = self.rng.mesh.random_range(0.0..mesh_pitch());
                let cfg = self.config.mesh_config();
                match self.mesher.mesh(theta0, &cfg, &mut self.rng.mesh) {
                    Ok(out) => {
                        let duration = d.mesh_per_attempt * out.attempts as f64;
                        let detail = json!({ "theta0_rad": theta0, "attempts": out.attempts });
                        if out.success {
                            Self::ok(duration, detail, Stage::Done)
                        } else {
                            Self::fail(stage, duration, detail, format!("no mesh after {} attempts", out.attempts))
                        }
                    }
                    Err(e) => Self::fail(stage, 0.0, json!({}), e.to_string()),
                }
            }
            Stage::Done | Stage::Failed { .. } => unreachable!("terminal stages are not executed"),
        }
    }

    fn singulate(&mut self, stage: &Stage) -> StepResult {
        let d = self.config.durations;
        let targets = self.targets.clone();
        let cfg = SingulationConfig {
            samples: self.config.singulation_samples,
            max_interactions: self.config.budgets.singulation_interactions,
            weights: self.config.weights,
            slip: SlipModel {
                p_slip: self.config.noise.slip_prob,
            },
            gripper: self.config.gripper,
        };
        let perception = self.config.perception();
        let result = singulate(
            &self.truth,
            &targets,
            &cfg,
            SingulationStreams {
                planner: &mut self.rng.planner,
                slip: &mut self.rng.slip,
                perception: Some((&perception, &mut self.rng.perception)),
            },
            self.exec,
        );
        let result = match result {
            Ok(r) => r,
            Err(e) => return Self::fail(stage, 0.0, json!({}), e.to_string()),
        };
        let duration = d.singulate_per_interaction * result.interactions as f64;
        let detail = json!({
            "targets": targets,
            "interactions": result.interactions,
            "slips": result.records.iter().filter(|r| r.slipped).count(),
        });
        self.truth = result.final_scene;
        self.belief = result.final_belief;
        if result.success {
            Self::ok(duration, detail, self.pending_grasp.clone())
        } else {
            let off = result.records.last().is_some_and(|r| r.off_table);
            let cause = if off { "part left the table" } else { "interaction budget spent" };
            Self::fail(stage, duration, detail, cause)
        }
    }

    /// Grasp check at the perceived pose against the true positions of the
    /// other parts. `None` when the part is not on the table.
    fn grasp_feasible(&self, part: PartClass) -> Option<bool> {
        let estimated = self.belief.pose(part)?;
        self.truth.pose(part)?;
        let mut probe = self.truth.clone();
        probe.set_pose(part, estimated);
        Some(graspable(&probe, part, &self.config.gripper).unwrap_or(false))
    }

    fn pick(&mut self, part: PartClass, peg: Option<GraspState>, gear_error: Vec2) {
        let origin = self.truth.pose(part).expect("part on the table");
        let frame = self.belief.pose(part).unwrap_or(origin);
        self.truth = self.truth.without(part);
        self.belief = self.belief.without(part);
        self.held = Some(Held {
            part,
            origin,
            frame,
            peg,
            correction: 0.0,
            gear_error,
        });
    }
}

fn part_index(part: PartClass) -> usize {
    PartClass::ALL.iter().position(|p| *p == part).expect("known part")
}

fn grasp_stage_for(part: PartClass) -> Stage {
    match part {
        PartClass::Peg1 => Stage::GraspPeg(1),
        PartClass::Peg2 => Stage::GraspPeg(2),
        PartClass::GearLarge => Stage::GraspGear(GearSlot::Large),
        PartClass::GearSmall => Stage::GraspGear(GearSlot::Small),
    }
}

/// Runs the full pipeline with the compliant mesher.
pub fn run_pipeline(scene: &Scene, config: &PipelineConfig, seed: u64, exec: Execution) -> PipelineResult {
    Pipeline::new(scene, *config, seed, &CompliantMesher, exec).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenes::scene_for_index;
    use crate::scene::WorkspaceConfig;
    use crate::sim::all_pegs_graspable;

    struct NeverMeshes;

    impl Mesher for NeverMeshes {
        fn mesh(&self, _theta0: f64, config: &MeshConfig, _rng: &mut StreamRng) -> Result<MeshOutcome, MeshError> {
            Ok(MeshOutcome {
                success: false,
                attempts: config.max_attempts,
                final_state: crate::meshing::MeshState {
                    theta: 0.1,
                    attempts: config.max_attempts,
                },
            })
        }
    }

    fn spread_scene() -> Scene {
        Scene::new(
            WorkspaceConfig::default(),
            [
                (PartClass::Peg1, Pose2D::new(150.0, 120.0, 0.3)),
                (PartClass::Peg2, Pose2D::new(450.0, 120.0, -0.4)),
                (PartClass::GearLarge, Pose2D::new(150.0, 320.0, 0.0)),
                (PartClass::GearSmall, Pose2D::new(450.0, 320.0, 0.0)),
            ],
        )
    }

    fn cluttered_scene() -> Scene {
        let gripper = GripperFootprint::default();
        (0..)
            .map(|i| scene_for_index(11, i, &WorkspaceConfig::default()).unwrap().scene)
            .find(|s| !all_pegs_graspable(s, &gripper))
            .unwrap()
    }

    fn quiet() -> PipelineConfig {
        PipelineConfig {
            noise: NoiseConfig::none(),
            offset_train_size: 200,
            ..Default::default()
        }
    }

    fn stages(r: &PipelineResult) -> Vec<String> {
        r.events.iter().map(|e| e.stage.clone()).collect()
    }

    #[test]
    fn nominal_run_visits_stages_in_order() {
        let r = run_pipeline(&spread_scene(), &quiet(), 1, Execution::Sequential);
        assert!(r.success(), "{:?}", r.terminal);
        let expected = [
            "perceive",
            "singulate",
            "grasp_peg_1",
            "reorient_1",
            "estimate_offset_1",
            "insert_peg_1",
            "grasp_peg_2",
            "reorient_2",
            "estimate_offset_2",
            "insert_peg_2",
            "grasp_gear_large",
            "insert_gear_large",
            "grasp_gear_small",
            "insert_gear_small",
            "mesh_gears",
            "done",
        ];
        assert_eq!(stages(&r), expected);
        assert!(r.final_scene.parts.is_empty());
    }

    #[test]
    fn graspable_scene_needs_no_singulation() {
        let r = run_pipeline(&spread_scene(), &quiet(), 2, Execution::Sequential);
        let sing = &r.events[1];
        assert_eq!(sing.stage, "singulate");
        assert_eq!(sing.detail["interactions"], 0);
        assert_eq!(sing.detail["duration_s"], 0.0);
        assert_eq!(r.events[2].stage, "grasp_peg_1");
    }

    #[test]
    fn failing_mesher_ends_in_failed_mesh() {
        let r = Pipeline::new(&spread_scene(), quiet(), 3, &NeverMeshes, Execution::Sequential).run();
        assert_eq!(r.failed_stage(), Some(&Stage::MeshGears));
        let mesh = r.events.iter().find(|e| e.stage == "mesh_gears").unwrap();
        assert_eq!(mesh.detail["attempts"], 5);
        assert_eq!(mesh.outcome, Outcome::Fail);
        assert_eq!(r.events.last().unwrap().stage, "failed(mesh_gears)");
    }

    #[test]
    fn exhausted_singulation_fails() {
        let cfg = PipelineConfig {
            budgets: RetryBudgets {
                singulation_interactions: 0,
                ..Default::default()
            },
            ..quiet()
        };
        let r = run_pipeline(&cluttered_scene(), &cfg, 4, Execution::Sequential);
        assert_eq!(r.failed_stage(), Some(&Stage::Singulate));
    }

    #[test]
    fn always_slipping_grasp_exhausts_retries() {
        let cfg = PipelineConfig {
            noise: NoiseConfig {
                grasp_failure_prob: 1.0,
                ..NoiseConfig::none()
            },
            ..quiet()
        };
        let r = run_pipeline(&spread_scene(), &cfg, 5, Execution::Sequential);
        assert_eq!(r.failed_stage(), Some(&Stage::GraspPeg(1)));
        let retries = r.events.iter().filter(|e| e.outcome == Outcome::Retry).count();
        assert_eq!(retries, cfg.budgets.per_part);
        // the peg went back on the table every time
        assert!(r.final_scene.contains(PartClass::Peg1));
    }

    #[test]
    fn non_pivoting_grasp_retries_then_fails() {
        let cfg = PipelineConfig {
            pivot: PivotModel {
                friction: 5.0,
                ..Default::default()
            },
            ..quiet()
        };
        let r = run_pipeline(&spread_scene(), &cfg, 6, Execution::Sequential);
        assert_eq!(r.failed_stage(), Some(&Stage::Reorient(1)));
    }

    #[test]
    fn sim_time_is_sum_of_durations() {
        let r = run_pipeline(&cluttered_scene(), &PipelineConfig::default(), 7, Execution::Sequential);
        let total: f64 = r.events.iter().map(|e| e.detail["duration_s"].as_f64().unwrap()).sum();
        assert!((total - r.sim_time_s).abs() < 1e-9);
        assert!(r.events.windows(2).all(|w| w[1].sim_time_s >= w[0].sim_time_s));
        assert!(r.events.iter().enumerate().all(|(i, e)| e.seq == i));
    }

    #[test]
    fn deterministic_apart_from_wall_time() {
        let log = |exec| {
            let r = run_pipeline(&cluttered_scene(), &PipelineConfig::default(), 8, exec);
            let mut buf = Vec::new();
            write_event_log(&r.events, &mut buf, false).unwrap();
            buf
        };
        let a = log(Execution::Sequential);
        assert_eq!(a, log(Execution::Sequential));
        assert_eq!(a, log(Execution::Parallel));
        assert!(!String::from_utf8(a).unwrap().contains("wall_time_s"));
    }

    #[test]
    fn step_is_inert_after_terminal() {
        let mut p = Pipeline::new(&spread_scene(), quiet(), 9, &CompliantMesher, Execution::Sequential);
        while !p.state().is_terminal() {
            p.step();
        }
        let n = p.events().len();
        assert!(p.step().is_empty());
        assert_eq!(p.events().len(), n);
    }

    #[test]
    fn config_round_trips_and_fills_defaults() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"noise": {"slip_prob": 0.5}}"#).unwrap();
        assert_eq!(partial.noise.slip_prob, 0.5);
        assert_eq!(partial.noise.tactile_sigma, DEFAULT_TACTILE_SIGMA);
        assert!(partial.validate().is_ok());
        let bad = PipelineConfig {
            noise: NoiseConfig {
                slip_prob: 1.5,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
