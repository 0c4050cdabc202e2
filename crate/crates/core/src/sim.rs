//! Planar kinematic simulator for sliding parts across the table.
//!
//! Parts are circumscribed discs. A slide moves one part along a straight
//! line in small steps; any part it touches is pushed out along the contact
//! normal. Grasp feasibility is a finger-disc clearance test.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PartClass, Pose2D, Vec2};
use crate::scene::Scene;

pub const MAX_SLIDE_MM: f64 = 300.0;
pub const DEFAULT_STEP_MM: f64 = 1.0;
pub const GRASP_ANGLES: usize = 16;

const MAX_PUSH_PASSES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("part {0} is not in the scene")]
    UnknownPart(PartClass),
    #[error("step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("slide ({0}, {1}) exceeds +/-{MAX_SLIDE_MM} mm")]
    ActionOutOfRange(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlideAction {
    pub part: PartClass,
    pub dx: f64,
    pub dy: f64,
}

impl SlideAction {
    pub fn new(part: PartClass, dx: f64, dy: f64) -> Result<Self, SimError> {
        if !(dx.abs() <= MAX_SLIDE_MM && dy.abs() <= MAX_SLIDE_MM) {
            return Err(SimError::ActionOutOfRange(dx, dy));
        }
        Ok(SlideAction { part, dx, dy })
    }

    pub fn delta(&self) -> Vec2 {
        Vec2::new(self.dx, self.dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipModel {
    pub p_slip: f64,
}

impl Default for SlipModel {
    fn default() -> Self {
        SlipModel { p_slip: 0.15 }
    }
}

impl SlipModel {
    pub fn none() -> Self {
        SlipModel { p_slip: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlideOutcome {
    pub final_scene: Scene,
    pub collided: bool,
    pub slipped: bool,
    pub off_table: bool,
    pub executed_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperFootprint {
    pub finger_radius: f64,
    /// Distance between the two finger centres.
    pub opening: f64,
}

impl Default for GripperFootprint {
    fn default() -> Self {
        GripperFootprint {
            finger_radius: 10.0,
            opening: 70.0,
        }
    }
}

impl GripperFootprint {
    pub fn fits(&self, part: PartClass) -> bool {
        self.finger_radius > 0.0 && self.opening >= part.geometry().grasp_width()
    }

    /// Finger centres for a grasp whose closing axis points along `angle`.
    pub fn finger_centers(&self, center: Vec2, angle: f64) -> [Vec2; 2] {
        let u = Vec2::new(angle.cos(), angle.sin()) * (self.opening / 2.0);
        [center + u, center - u]
    }
}

fn check_step(step_mm: f64) -> Result<(), SimError> {
    if step_mm > 0.0 && step_mm.is_finite() {
        Ok(())
    } else {
        Err(SimError::InvalidStep(step_mm))
    }
}

fn step_count(length: f64, step_mm: f64) -> usize {
    ((length / step_mm).ceil() as usize).max(1)
}

/// True iff, at any interpolated position after the start (spacing at most
/// `step_mm`), the moving footprint touches another footprint.
pub fn sweep_collides(scene: &Scene, action: &SlideAction, step_mm: f64) -> Result<bool, SimError> {
    check_step(step_mm)?;
    let start = scene
        .pose(action.part)
        .ok_or(SimError::UnknownPart(action.part))?
        .position();
    let r = action.part.footprint_radius();
    let d = action.delta();
    let n = step_count(d.norm(), step_mm);
    let others: Vec<(Vec2, f64)> = scene
        .parts
        .iter()
        .filter(|p| p.class != action.part)
        .map(|p| (p.pose.position(), r + p.class.footprint_radius()))
        .collect();
    Ok((1..=n).any(|i| {
        let p = start + d * (i as f64 / n as f64);
        others.iter().any(|(c, reach)| (p - c).norm() <= *reach)
    }))
}

/// Separates interpenetrating footprints. The part at `active` is never
/// moved; passive pairs split the correction.
fn resolve_overlaps(positions: &mut [Vec2], radii: &[f64], active: usize, fallback_dir: Vec2) -> bool {
    let mut any = false;
    for _ in 0..MAX_PUSH_PASSES {
        let mut moved = false;
        for j in 0..positions.len() {
            for k in j + 1..positions.len() {
                let d = positions[k] - positions[j];
                let dist = d.norm();
                let need = radii[j] + radii[k];
                if dist >= need {
                    continue;
                }
                let normal = if dist > 1e-12 { d / dist } else { fallback_dir };
                let depth = need - dist;
                if j == active {
                    positions[k] += normal * depth;
                } else if k == active {
                    positions[j] -= normal * depth;
                } else {
                    positions[j] -= normal * (depth / 2.0);
                    positions[k] += normal * (depth / 2.0);
                }
                moved = true;
            }
        }
        any |= moved;
        if !moved {
            break;
        }
    }
    any
}

/// Moves `action.part` along `fraction` of the commanded displacement,
/// pushing anything in the way.
fn rollout(scene: &Scene, action: &SlideAction, fraction: f64, slipped: bool, step_mm: f64) -> Result<SlideOutcome, SimError> {
    check_step(step_mm)?;
    let active = scene
        .index_of(action.part)
        .ok_or(SimError::UnknownPart(action.part))?;
    let ws = scene.workspace;
    let start = scene.parts[active].pose.position();
    let commanded = action.delta() * fraction;

    // The part falls once its centre crosses the table edge.
    let exit = ws.exit_fraction(start, commanded);
    let travel = commanded * exit.unwrap_or(1.0);

    let radii: Vec<f64> = scene.parts.iter().map(|p| p.class.footprint_radius()).collect();
    let mut positions: Vec<Vec2> = scene.parts.iter().map(|p| p.pose.position()).collect();
    let dir = if commanded.norm() > 0.0 {
        commanded.normalize()
    } else {
        Vec2::x()
    };

    let n = step_count(travel.norm(), step_mm);
    let mut collided = false;
    let mut executed = fraction * exit.unwrap_or(1.0);
    let mut pushed_off = false;
    for i in 1..=n {
        let t = i as f64 / n as f64;
        positions[active] = start + travel * t;
        collided |= positions
            .iter()
            .enumerate()
            .any(|(k, p)| k != active && (p - positions[active]).norm() <= radii[k] + radii[active]);
        if resolve_overlaps(&mut positions, &radii, active, dir) {
            collided = true;
            if positions
                .iter()
                .enumerate()
                .any(|(k, p)| k != active && !ws.contains(*p))
            {
                pushed_off = true;
                executed = fraction * exit.unwrap_or(1.0) * (i - 1) as f64 / n as f64;
                break;
            }
        }
    }
    if exit.is_some() {
        positions[active] = start + commanded;
    }

    let mut final_scene = scene.clone();
    for (part, p) in final_scene.parts.iter_mut().zip(&positions) {
        part.pose = part.pose.with_position(*p);
    }
    Ok(SlideOutcome {
        final_scene,
        collided,
        slipped,
        off_table: exit.is_some() || pushed_off,
        executed_fraction: executed,
    })
}

/// Deterministic full-length slide without slip, as used by planning
/// rollouts.
pub fn simulate_slide(scene: &Scene, action: &SlideAction, step_mm: f64) -> Result<SlideOutcome, SimError> {
    rollout(scene, action, 1.0, false, step_mm)
}

/// Executes a slide. With probability `p_slip` the contact slips at a
/// uniform fraction of the path and the part stops there.
pub fn apply_slide<R: Rng + ?Sized>(
    scene: &Scene,
    action: &SlideAction,
    slip: &SlipModel,
    rng: &mut R,
) -> Result<SlideOutcome, SimError> {
    let slipped = rng.random::<f64>() < slip.p_slip;
    let fraction = if slipped {
        loop {
            let f: f64 = rng.random();
            if f > 0.0 {
                break f;
            }
        }
    } else {
        1.0
    };
    rollout(scene, action, fraction, slipped, DEFAULT_STEP_MM)
}

fn grasp_angles(class: PartClass, pose: Pose2D) -> impl Iterator<Item = f64> {
    (0..GRASP_ANGLES)
        // Pegs only close across their long axis (local x), both directions
        // being the same finger pair.
        .filter(move |k| class.is_gear() || k % (GRASP_ANGLES / 2) == 0)
        .map(move |k| pose.yaw() + k as f64 * 2.0 * PI / GRASP_ANGLES as f64)
}

pub fn graspable(scene: &Scene, part: PartClass, gripper: &GripperFootprint) -> Result<bool, SimError> {
    let pose = scene.pose(part).ok_or(SimError::UnknownPart(part))?;
    if !gripper.fits(part) {
        return Ok(false);
    }
    let finger_free = |f: &Vec2| {
        scene.workspace.contains(*f)
            && scene
                .parts
                .iter()
                .filter(|p| p.class != part)
                .all(|p| (p.pose.position() - f).norm() > gripper.finger_radius + p.class.footprint_radius())
    };
    Ok(grasp_angles(part, pose).any(|angle| {
        gripper
            .finger_centers(pose.position(), angle)
            .iter()
            .all(finger_free)
    }))
}

/// Pegs absent from the table (already picked) count as graspable.
pub fn all_pegs_graspable(scene: &Scene, gripper: &GripperFootprint) -> bool {
    all_graspable(scene, &PartClass::PEGS, gripper)
}

pub fn all_graspable(scene: &Scene, parts: &[PartClass], gripper: &GripperFootprint) -> bool {
    parts
        .iter()
        .filter(|p| scene.contains(**p))
        .all(|p| graspable(scene, *p, gripper).unwrap_or(false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, SLIP};
    use crate::scene::{validate_scene, WorkspaceConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn four(parts: [(f64, f64); 4]) -> Scene {
        Scene::new(
            WorkspaceConfig::default(),
            PartClass::ALL
                .into_iter()
                .zip(parts)
                .map(|(c, (x, y))| (c, Pose2D::new(x, y, 0.0))),
        )
    }

    fn two_pegs(a: (f64, f64), b: (f64, f64)) -> Scene {
        Scene::new(
            WorkspaceConfig::default(),
            [
                (PartClass::Peg1, Pose2D::new(a.0, a.1, 0.0)),
                (PartClass::Peg2, Pose2D::new(b.0, b.1, 0.0)),
            ],
        )
    }

    #[test]
    fn sweep_through_and_away() {
        let s = two_pegs((100.0, 200.0), (300.0, 200.0));
        let through = SlideAction::new(PartClass::Peg1, 250.0, 0.0).unwrap();
        assert!(sweep_collides(&s, &through, 1.0).unwrap());
        let away = SlideAction::new(PartClass::Peg1, -80.0, 0.0).unwrap();
        assert!(!sweep_collides(&s, &away, 1.0).unwrap());
    }

    #[test]
    fn sweep_tangent_endpoint_collides() {
        let s = two_pegs((100.0, 200.0), (300.0, 200.0));
        let a = SlideAction::new(PartClass::Peg1, 140.0, 0.0).unwrap();
        assert!(sweep_collides(&s, &a, 1.0).unwrap());
        let a = SlideAction::new(PartClass::Peg1, 139.5, 0.0).unwrap();
        assert!(!sweep_collides(&s, &a, 1.0).unwrap());
    }

    #[test]
    fn sweep_errors() {
        let s = two_pegs((100.0, 200.0), (300.0, 200.0));
        let a = SlideAction::new(PartClass::GearLarge, 1.0, 0.0).unwrap();
        assert_eq!(sweep_collides(&s, &a, 1.0), Err(SimError::UnknownPart(PartClass::GearLarge)));
        let a = SlideAction::new(PartClass::Peg1, 1.0, 0.0).unwrap();
        assert_eq!(sweep_collides(&s, &a, 0.0), Err(SimError::InvalidStep(0.0)));
        assert!(SlideAction::new(PartClass::Peg1, 300.5, 0.0).is_err());
    }

    #[test]
    fn slide_without_slip_reaches_endpoint() {
        let s = four([(100.0, 100.0), (500.0, 100.0), (100.0, 350.0), (500.0, 350.0)]);
        let a = SlideAction::new(PartClass::Peg1, 123.4, 56.7).unwrap();
        let out = apply_slide(&s, &a, &SlipModel::none(), &mut stream(0, SLIP)).unwrap();
        let p = out.final_scene.pose(PartClass::Peg1).unwrap();
        assert_eq!(p.x, 100.0 + 123.4);
        assert_eq!(p.y, 100.0 + 56.7);
        assert_eq!(out.executed_fraction, 1.0);
        assert!(!out.slipped && !out.off_table && !out.collided);
    }

    #[test]
    fn forced_slip_stops_on_segment() {
        let s = four([(100.0, 100.0), (500.0, 100.0), (100.0, 350.0), (500.0, 350.0)]);
        let a = SlideAction::new(PartClass::Peg1, 200.0, 0.0).unwrap();
        let out = apply_slide(&s, &a, &SlipModel { p_slip: 1.0 }, &mut stream(1, SLIP)).unwrap();
        assert!(out.slipped);
        assert!(out.executed_fraction > 0.0 && out.executed_fraction < 1.0);
        let p = out.final_scene.pose(PartClass::Peg1).unwrap();
        assert_abs_diff_eq!(p.y, 100.0);
        assert_abs_diff_eq!(p.x, 100.0 + 200.0 * out.executed_fraction, epsilon = 1e-9);
    }

    #[test]
    fn sliding_past_the_edge_is_off_table() {
        let s = four([(550.0, 100.0), (300.0, 100.0), (100.0, 350.0), (500.0, 350.0)]);
        let a = SlideAction::new(PartClass::Peg1, 100.0, 0.0).unwrap();
        let out = apply_slide(&s, &a, &SlipModel::none(), &mut stream(2, SLIP)).unwrap();
        assert!(out.off_table);
        assert!(out.executed_fraction < 1.0);
        assert!(!s.workspace.contains(out.final_scene.pose(PartClass::Peg1).unwrap().position()));
    }

    #[test]
    fn collision_pushes_contacted_part() {
        let s = four([(100.0, 200.0), (200.0, 200.0), (100.0, 400.0), (500.0, 60.0)]);
        let a = SlideAction::new(PartClass::Peg1, 100.0, 0.0).unwrap();
        let out = apply_slide(&s, &a, &SlipModel::none(), &mut stream(3, SLIP)).unwrap();
        assert!(out.collided && !out.off_table);
        assert_eq!(out.final_scene.pose(PartClass::Peg1).unwrap().x, 200.0);
        let peg2 = out.final_scene.pose(PartClass::Peg2).unwrap();
        assert!((peg2.x - 260.0).abs() < 1e-6, "{peg2:?}");
        assert_eq!(validate_scene(&out.final_scene), Ok(()));
    }

    #[test]
    fn lone_peg_is_graspable() {
        let s = Scene::new(WorkspaceConfig::default(), [(PartClass::Peg1, Pose2D::new(300.0, 200.0, 0.7))]);
        assert!(graspable(&s, PartClass::Peg1, &GripperFootprint::default()).unwrap());
        assert!(all_pegs_graspable(&s, &GripperFootprint::default()));
    }

    /// Independent oracle: enumerate the 16 closing angles and test every
    /// finger against every other footprint.
    fn graspable_oracle(scene: &Scene, part: PartClass, g: &GripperFootprint) -> bool {
        let pose = scene.pose(part).unwrap();
        (0..16).any(|k| {
            let angle = pose.yaw() + k as f64 * PI / 8.0;
            if part.is_peg() && k != 0 && k != 8 {
                return false;
            }
            [1.0, -1.0].iter().all(|s| {
                let f = pose.position() + Vec2::new(angle.cos(), angle.sin()) * (s * g.opening / 2.0);
                f.x >= 0.0
                    && f.y >= 0.0
                    && f.x <= scene.workspace.width
                    && f.y <= scene.workspace.height
                    && scene.parts.iter().filter(|p| p.class != part).all(|p| {
                        (p.pose.position() - f).norm() > g.finger_radius + p.class.footprint_radius()
                    })
            })
        })
    }

    #[test]
    fn peg_tangent_to_large_gear_not_graspable() {
        // Peg axis along y; fingers close along x and land inside the gap.
        let s = four([(300.0, 225.0), (100.0, 60.0), (377.0, 225.0), (500.0, 400.0)]);
        let g = GripperFootprint::default();
        assert_eq!(validate_scene(&s), Ok(()));
        assert!(!graspable_oracle(&s, PartClass::Peg1, &g));
        assert!(!graspable(&s, PartClass::Peg1, &g).unwrap());
        assert!(!all_pegs_graspable(&s, &g));
    }

    #[test]
    fn isolated_peg_graspable() {
        let s = four([(300.0, 225.0), (80.0, 80.0), (520.0, 80.0), (300.0, 425.0 - 0.0)]);
        let g = GripperFootprint::default();
        for p in s.parts.iter().filter(|p| p.class != PartClass::Peg1) {
            assert!((p.pose.position() - Vec2::new(300.0, 225.0)).norm() >= 200.0);
        }
        assert!(graspable_oracle(&s, PartClass::Peg1, &g));
        assert!(graspable(&s, PartClass::Peg1, &g).unwrap());
    }

    #[test]
    fn gear_uses_any_of_sixteen_angles() {
        // Obstacles block the x and y closing axes but not the diagonals.
        let ws = WorkspaceConfig::default();
        let s = Scene::new(
            ws,
            [
                (PartClass::GearSmall, Pose2D::new(300.0, 225.0, 0.0)),
                (PartClass::Peg1, Pose2D::new(375.0, 225.0, 0.0)),
                (PartClass::Peg2, Pose2D::new(300.0, 300.0, 0.0)),
            ],
        );
        let g = GripperFootprint::default();
        assert_eq!(graspable(&s, PartClass::GearSmall, &g).unwrap(), graspable_oracle(&s, PartClass::GearSmall, &g));
        assert!(graspable(&s, PartClass::GearSmall, &g).unwrap());
    }

    fn random_scene() -> impl Strategy<Value = Scene> {
        proptest::collection::vec((30.0..570.0f64, 30.0..420.0f64, -3.0..3.0f64), 4).prop_filter_map(
            "overlapping",
            |coords| {
                let s = Scene::new(
                    WorkspaceConfig::default(),
                    PartClass::ALL
                        .into_iter()
                        .zip(coords)
                        .map(|(c, (x, y, t))| (c, Pose2D::new(x, y, t))),
                );
                validate_scene(&s).ok().map(|_| s)
            },
        )
    }

    fn action() -> impl Strategy<Value = SlideAction> {
        (0..4usize, -300.0..300.0f64, -300.0..300.0f64)
            .prop_map(|(i, dx, dy)| SlideAction::new(PartClass::ALL[i], dx, dy).unwrap())
    }

    /// Closed-form minimum distance from a segment to a point.
    fn segment_point_distance(a: Vec2, d: Vec2, c: Vec2) -> f64 {
        let t = if d.norm_squared() > 0.0 {
            ((c - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (a + d * t - c).norm()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn sweep_matches_analytic_distance(scene in random_scene(), a in action()) {
            let step = 0.1;
            let start = scene.pose(a.part).unwrap().position();
            let r = a.part.footprint_radius();
            let mut analytic = false;
            let mut ambiguous = false;
            for p in scene.parts.iter().filter(|p| p.class != a.part) {
                let reach = r + p.class.footprint_radius();
                let dmin = segment_point_distance(start, a.delta(), p.pose.position());
                analytic |= dmin <= reach;
                // Grazing contacts narrower than the sampling sagitta.
                let sagitta = (reach * reach - step * step / 4.0).max(0.0).sqrt();
                ambiguous |= dmin > sagitta - 1e-9 && dmin <= reach + 1e-9;
            }
            prop_assume!(!ambiguous);
            prop_assert_eq!(sweep_collides(&scene, &a, step).unwrap(), analytic);
        }

        #[test]
        fn noslip_slide_lands_on_command(scene in random_scene(), a in action(), seed in any::<u64>()) {
            let out = apply_slide(&scene, &a, &SlipModel::none(), &mut stream(seed, SLIP)).unwrap();
            let start = scene.pose(a.part).unwrap().position();
            let end = out.final_scene.pose(a.part).unwrap().position();
            if !out.off_table {
                prop_assert!((end - (start + a.delta())).norm() < 1e-9);
                prop_assert_eq!(out.executed_fraction, 1.0);
            }
        }

        #[test]
        fn slide_outcome_keeps_scene_valid(scene in random_scene(), a in action(), seed in any::<u64>()) {
            let out = apply_slide(&scene, &a, &SlipModel::default(), &mut stream(seed, SLIP)).unwrap();
            prop_assert_eq!(out.executed_fraction == 1.0, !out.slipped && !out.off_table);
            if !out.off_table {
                prop_assert_eq!(validate_scene(&out.final_scene), Ok(()));
            }
        }

        #[test]
        fn graspable_is_monotone_under_removal(scene in random_scene(), target in 0..4usize, removed in 0..4usize) {
            prop_assume!(target != removed);
            let g = GripperFootprint::default();
            let part = PartClass::ALL[target];
            let before = graspable(&scene, part, &g).unwrap();
            let after = graspable(&scene.without(PartClass::ALL[removed]), part, &g).unwrap();
            prop_assert!(!before || after);
            prop_assert_eq!(before, graspable_oracle(&scene, part, &g));
        }
    }
}
