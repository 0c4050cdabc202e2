//! Peg grasp, gravity pivot in the fingers, and the tactile offset estimator.
//!
//! Only the offset along the gripper's local x axis is modelled. The tactile
//! sensor is replaced by a fixed smooth embedding of that offset plus
//! Gaussian noise; the estimator is a weighted k-nearest-neighbour average.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PartClass, PartGeometry, Pose2D, Shape, PEG_DIAMETER_MM, PEG_LENGTH_MM};
use crate::perception::PoseEstimate;

pub const GRAVITY: f64 = 9.81;
/// Injected grasp error is uniform on `[-MAX_OFFSET_MM, MAX_OFFSET_MM]`.
pub const MAX_OFFSET_MM: f64 = 10.0;
pub const TACTILE_DIM: usize = 8;
pub const DEFAULT_TACTILE_SIGMA: f64 = 0.2;
pub const MAX_NEIGHBOURS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InHandError {
    #[error("{0:?} is not a peg")]
    NotAPeg(PartClass),
    #[error("pose estimate is degenerate")]
    DegenerateEstimate,
    #[error("invalid grasp: {0}")]
    InvalidGrasp(&'static str),
    #[error("offset estimator has no training data")]
    NotFitted,
}

/// Grasp on a lying peg: `x_p` along the peg axis from the centre of mass,
/// `z_p` height above the table, `f_p` squeeze force in N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PegGrasp {
    pub x_p: f64,
    pub z_p: f64,
    pub f_p: f64,
    /// Estimated peg frame the grasp is expressed in.
    pub frame: Pose2D,
}

impl PegGrasp {
    /// Grasp centre in the world frame. The peg axis is the frame's local y.
    pub fn world_point(&self) -> crate::model::Vec2 {
        self.frame.transform_point(crate::model::Vec2::new(0.0, self.x_p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspConfig {
    pub x_p: f64,
    pub z_p: f64,
    pub f_p: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        GraspConfig {
            x_p: 20.0,
            z_p: PEG_DIAMETER_MM / 2.0,
            f_p: 8.0,
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<(), InHandError> {
        if !(self.x_p.is_finite() && self.z_p.is_finite() && self.f_p.is_finite()) {
            return Err(InHandError::InvalidGrasp("non-finite parameter"));
        }
        if self.x_p == 0.0 {
            return Err(InHandError::InvalidGrasp("x_p = 0 gives no pivot moment"));
        }
        if self.x_p.abs() > PEG_LENGTH_MM / 2.0 {
            return Err(InHandError::InvalidGrasp("x_p beyond the peg end"));
        }
        if self.f_p <= 0.0 {
            return Err(InHandError::InvalidGrasp("f_p must be positive"));
        }
        Ok(())
    }
}

pub fn plan_peg_grasp(estimate: &PoseEstimate, config: &GraspConfig) -> Result<PegGrasp, InHandError> {
    if !estimate.label.is_peg() {
        return Err(InHandError::NotAPeg(estimate.label));
    }
    if estimate.degenerate {
        return Err(InHandError::DegenerateEstimate);
    }
    config.validate()?;
    Ok(PegGrasp {
        x_p: config.x_p,
        z_p: config.z_p,
        f_p: config.f_p,
        frame: estimate.pose2d(),
    })
}

/// Quasi-static pivot constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotModel {
    pub mass_kg: f64,
    pub friction: f64,
    /// Effective radius of the pad contact patch.
    pub pad_radius_mm: f64,
}

impl Default for PivotModel {
    fn default() -> Self {
        PivotModel {
            mass_kg: 0.1,
            friction: 0.5,
            pad_radius_mm: 4.0,
        }
    }
}

impl PivotModel {
    /// Gravity torque about the grip line, N mm.
    pub fn gravity_torque(&self, grasp: &PegGrasp) -> f64 {
        self.mass_kg * GRAVITY * grasp.x_p.abs()
    }

    /// Frictional torque the pads can hold, N mm.
    pub fn holding_torque(&self, grasp: &PegGrasp) -> f64 {
        self.friction * grasp.f_p * self.pad_radius_mm
    }
}

/// True when the peg swings to hanging vertically under gravity.
pub fn simulate_reorientation(grasp: &PegGrasp, peg: &PartGeometry, model: &PivotModel) -> bool {
    if !matches!(peg.shape, Shape::Peg { .. }) {
        return false;
    }
    model.gravity_torque(grasp) > model.holding_torque(grasp)
}

pub fn inject_grasp_error<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-MAX_OFFSET_MM..=MAX_OFFSET_MM)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspState {
    pub part: PartClass,
    /// True offset along the gripper's local x, mm.
    pub dx: f64,
    pub reoriented: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TactileObservation {
    pub features: [f64; TACTILE_DIM],
}

// Sigmoid centres spread over the offset range, with distinct gains (1/mm).
const EMBED_CENTERS: [f64; TACTILE_DIM] = [-8.75, -6.25, -3.75, -1.25, 1.25, 3.75, 6.25, 8.75];
const EMBED_GAINS: [f64; TACTILE_DIM] = [0.55, 0.45, 0.6, 0.5, 0.4, 0.55, 0.5, 0.45];
const EMBED_AMPLITUDE: f64 = 8.0;

/// Noise-free tactile features of offset `dx`. Each coordinate is strictly
/// increasing in `dx`.
pub fn tactile_embedding(dx: f64) -> [f64; TACTILE_DIM] {
    std::array::from_fn(|j| EMBED_AMPLITUDE * (EMBED_GAINS[j] * (dx - EMBED_CENTERS[j])).tanh())
}

pub fn observe_tactile<R: Rng + ?Sized>(dx: f64, sigma: f64, rng: &mut R) -> TactileObservation {
    let mut features = tactile_embedding(dx);
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        for f in &mut features {
            *f += noise.sample(rng);
        }
    }
    TactileObservation { features }
}

fn squared_distance(a: &[f64; TACTILE_DIM], b: &[f64; TACTILE_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OffsetEstimator {
    samples: Vec<(TactileObservation, f64)>,
}

impl OffsetEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<(TactileObservation, f64)>) -> Self {
        OffsetEstimator { samples }
    }

    pub fn training_count(&self) -> usize {
        self.samples.len()
    }

    pub fn is_fitted(&self) -> bool {
        !self.samples.is_empty()
    }

    pub fn k(&self) -> usize {
        self.samples.len().min(MAX_NEIGHBOURS)
    }

    /// Distance-weighted mean offset of the k nearest training observations,
    /// clamped to the injection range. Distance ties go to the earlier sample.
    pub fn estimate(&self, obs: &TactileObservation) -> Result<f64, InHandError> {
        if !self.is_fitted() {
            return Err(InHandError::NotFitted);
        }
        let mut d: Vec<(f64, usize)> = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, (o, _))| (squared_distance(&o.features, &obs.features), i))
            .collect();
        let k = self.k();
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // Inverse squared distance weights; exact matches take all the weight.
        let near = &d[..k];
        let exact: Vec<f64> = near.iter().filter(|e| e.0 == 0.0).map(|&(_, i)| self.samples[i].1).collect();
        let mean = if exact.is_empty() {
            let d_min = near.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
            let (num, den) = near.iter().fold((0.0, 0.0), |(n, w), &(d2, i)| {
                let wi = d_min / d2;
                (n + wi * self.samples[i].1, w + wi)
            });
            num / den
        } else {
            exact.iter().sum::<f64>() / exact.len() as f64
        };
        Ok(mean.clamp(-MAX_OFFSET_MM, MAX_OFFSET_MM))
    }
}

pub fn estimate_offset(est: &OffsetEstimator, obs: &TactileObservation) -> Result<f64, InHandError> {
    est.estimate(obs)
}

/// Draws `m` (observation, offset) training pairs.
pub fn fit_offset_estimator<R: Rng + ?Sized>(m: usize, sigma: f64, rng: &mut R) -> OffsetEstimator {
    let samples = (0..m)
        .map(|_| {
            let dx = inject_grasp_error(rng);
            (observe_tactile(dx, sigma, rng), dx)
        })
        .collect();
    OffsetEstimator { samples }
}

/// Mean absolute error on `n` fresh draws.
pub fn holdout_mae<R: Rng + ?Sized>(est: &OffsetEstimator, n: usize, sigma: f64, rng: &mut R) -> Result<f64, InHandError> {
    let mut total = 0.0;
    for _ in 0..n {
        let dx = inject_grasp_error(rng);
        total += (est.estimate(&observe_tactile(dx, sigma, rng))? - dx).abs();
    }
    Ok(total / n as f64)
}

/// Radial clearance between a peg and its hole.
pub fn radial_clearance(hole_diameter: f64, peg_diameter: f64) -> f64 {
    (hole_diameter - peg_diameter) / 2.0
}

/// A single corrected placement; succeeds iff the residual offset fits the
/// clearance (boundary inclusive).
pub fn insert_peg(state: &GraspState, correction: f64, clearance: f64) -> bool {
    state.reoriented && (state.dx - correction).abs() <= clearance
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::PrincipalAxes;
    use crate::rng::{stream, GRASP, TACTILE_NOISE};
    use nalgebra::Vector3;

    fn estimate(label: PartClass, degenerate: bool) -> PoseEstimate {
        PoseEstimate {
            position: Vector3::new(100.0, 50.0, 7.0),
            yaw: 0.3,
            label,
            degenerate,
            axes: PrincipalAxes {
                values: [1.0, 2.0, 3.0],
                vectors: [Vector3::x(), Vector3::y(), Vector3::z()],
            },
        }
    }

    fn peg_grasp(x_p: f64, f_p: f64) -> PegGrasp {
        PegGrasp {
            x_p,
            z_p: 7.0,
            f_p,
            frame: Pose2D::new(0.0, 0.0, 0.0),
        }
    }

    #[test]
    fn default_grasp_plans_and_reorients() {
        let g = plan_peg_grasp(&estimate(PartClass::Peg1, false), &GraspConfig::default()).unwrap();
        assert_eq!((g.x_p, g.f_p), (20.0, 8.0));
        assert_eq!(g.frame, Pose2D::new(100.0, 50.0, 0.3));
        assert!(simulate_reorientation(&g, &PartGeometry::of(PartClass::Peg1), &PivotModel::default()));
    }

    #[test]
    fn grasp_planning_rejects() {
        let cfg = GraspConfig::default();
        assert_eq!(
            plan_peg_grasp(&estimate(PartClass::GearLarge, false), &cfg),
            Err(InHandError::NotAPeg(PartClass::GearLarge))
        );
        assert_eq!(
            plan_peg_grasp(&estimate(PartClass::Peg2, true), &cfg),
            Err(InHandError::DegenerateEstimate)
        );
        let zero = GraspConfig { x_p: 0.0, ..cfg };
        assert!(matches!(
            plan_peg_grasp(&estimate(PartClass::Peg2, false), &zero),
            Err(InHandError::InvalidGrasp(_))
        ));
    }

    #[test]
    fn pivot_rule_cases() {
        let peg = PartGeometry::of(PartClass::Peg1);
        let m = PivotModel::default();
        assert!(!simulate_reorientation(&peg_grasp(0.0, 8.0), &peg, &m));
        // at x_p = 20 the gravity torque is 19.62 N mm; f_p = 4.905 N holds 9.81
        let g = peg_grasp(20.0, 4.905);
        assert!((m.gravity_torque(&g) - 2.0 * m.holding_torque(&g)).abs() < 1e-12);
        assert!(simulate_reorientation(&g, &peg, &m));
        assert!(!simulate_reorientation(&peg_grasp(30.0, 1e12), &peg, &m));
        assert!(!simulate_reorientation(&peg_grasp(20.0, 8.0), &PartGeometry::of(PartClass::GearSmall), &m));
    }

    #[test]
    fn injected_error_is_uniform() {
        let mut rng = stream(4, GRASP);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| inject_grasp_error(&mut rng)).collect();
        assert!(draws.iter().all(|d| d.abs() <= MAX_OFFSET_MM));
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.35, "{mean}");
        let mut bins = [0usize; 10];
        for d in &draws {
            bins[(((d + 10.0) / 2.0) as usize).min(9)] += 1;
        }
        let e = n as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        // chi-square 9 dof, p = 0.001
        assert!(chi2 < 27.88, "{chi2}");
    }

    #[test]
    fn embedding_is_monotone_and_injective() {
        let mut rng = stream(0, TACTILE_NOISE);
        assert_eq!(observe_tactile(0.0, 0.0, &mut rng).features, tactile_embedding(0.0));
        assert_ne!(tactile_embedding(5.0), tactile_embedding(-5.0));
        let mut prev = tactile_embedding(-10.0);
        for i in 1..=200 {
            let cur = tactile_embedding(-10.0 + i as f64 * 0.1);
            assert!(cur.iter().zip(&prev).all(|(c, p)| c > p));
            prev = cur;
        }
    }

    #[test]
    fn observation_is_deterministic() {
        let a = observe_tactile(3.0, 0.2, &mut stream(8, TACTILE_NOISE));
        let b = observe_tactile(3.0, 0.2, &mut stream(8, TACTILE_NOISE));
        assert_eq!(a, b);
        assert!(a.features.iter().all(|f| f.is_finite()));
    }

    #[test]
    fn single_sample_estimator_is_constant() {
        let est = fit_offset_estimator(1, 0.2, &mut stream(1, TACTILE_NOISE));
        let only = est.samples[0].1;
        for dx in [-9.0, 0.0, 4.0] {
            assert_eq!(est.estimate(&observe_tactile(dx, 0.0, &mut stream(2, TACTILE_NOISE))), Ok(only));
        }
    }

    #[test]
    fn noiseless_k1_interpolates_at_nodes() {
        for d in [-7.5, 2.0] {
            let obs = TactileObservation { features: tactile_embedding(d) };
            let est = OffsetEstimator::from_samples(vec![(obs, d)]);
            assert_eq!(est.k(), 1);
            assert_eq!(est.estimate(&obs), Ok(d));
        }
    }

    #[test]
    fn symmetric_training_set_is_unbiased_at_zero() {
        let samples: Vec<_> = (-10..=10)
            .map(|i| (TactileObservation { features: tactile_embedding(i as f64) }, i as f64))
            .collect();
        let est = OffsetEstimator::from_samples(samples);
        let q = TactileObservation { features: tactile_embedding(0.0) };
        assert!(est.estimate(&q).unwrap().abs() < 1e-9);
    }

    #[test]
    fn unfitted_estimator_errors() {
        let q = TactileObservation { features: tactile_embedding(0.0) };
        assert_eq!(OffsetEstimator::new().estimate(&q), Err(InHandError::NotFitted));
    }

    #[test]
    fn estimate_is_clamped() {
        let est = OffsetEstimator::from_samples(vec![(TactileObservation { features: [0.0; TACTILE_DIM] }, 25.0)]);
        assert_eq!(est.estimate(&TactileObservation { features: [0.0; TACTILE_DIM] }), Ok(10.0));
    }

    #[test]
    fn insertion_threshold() {
        let c = radial_clearance(15.0, PEG_DIAMETER_MM);
        assert_eq!(c, 0.5);
        let s = |dx| GraspState { part: PartClass::Peg1, dx, reoriented: true };
        assert!(!insert_peg(&s(7.0), 0.0, c));
        assert!(insert_peg(&s(7.0), 6.8, c));
        assert!(insert_peg(&s(0.5), 0.0, c));
        assert!(!insert_peg(&GraspState { reoriented: false, ..s(0.0) }, 0.0, c));
    }

    #[test]
    fn large_training_set_is_accurate() {
        let est = fit_offset_estimator(1000, DEFAULT_TACTILE_SIGMA, &mut stream(3, TACTILE_NOISE));
        let mae = holdout_mae(&est, 500, DEFAULT_TACTILE_SIGMA, &mut stream(4, TACTILE_NOISE)).unwrap();
        assert!(mae <= 0.3, "{mae}");
    }

    proptest::proptest! {
        #[test]
        fn pivot_rule_is_monotone(x in 0.1f64..30.0, f in 0.1f64..50.0, df in 0.0f64..50.0, dxp in 0.0f64..10.0) {
            let peg = PartGeometry::of(PartClass::Peg1);
            let m = PivotModel::default();
            let base = simulate_reorientation(&peg_grasp(x, f), &peg, &m);
            if !base {
                proptest::prop_assert!(!simulate_reorientation(&peg_grasp(x, f + df), &peg, &m));
            } else {
                proptest::prop_assert!(simulate_reorientation(&peg_grasp((x + dxp).min(30.0), f), &peg, &m));
            }
        }
    }
}
