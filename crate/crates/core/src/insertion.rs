//! Gear insertion from wrist force traces.
//!
//! Traces are synthetic: a lateral reaction proportional to the misalignment,
//! an axial reaction when the bore lands on the gear face instead of sliding
//! over the peg, and white noise on all six channels. The policy is a
//! nearest-centroid classifier over the per-channel means of the filtered
//! trace.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Vec2;

pub const SAMPLE_RATE_HZ: f64 = 280.0;
pub const TRACE_DURATION_S: f64 = 3.0;
pub const TRACE_LEN: usize = 840;
pub const CHANNELS: usize = 6;
pub const FILTER_WINDOW: usize = 70;

/// Lateral reaction per mm of misalignment, N/mm.
pub const LATERAL_GAIN: f64 = 0.5;
pub const AXIAL_CONTACT_N: f64 = 5.0;
pub const DEFAULT_FORCE_SIGMA: f64 = 0.3;
/// Radial clearance between the gear bore and its peg.
pub const GEAR_CLEARANCE_MM: f64 = 0.5;
/// Largest error the trace model accepts per axis.
pub const MAX_TRACE_ERROR_MM: f64 = 5.0;
/// Error magnitude used for training traces.
pub const TRAINING_ERROR_MM: f64 = 4.0;

pub type Reading = [f64; CHANNELS];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InsertionError {
    #[error("window {window} does not fit a trace of {len} samples")]
    WindowTooLarge { window: usize, len: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("insertion policy is not fitted")]
    NotFitted,
    #[error("error ({0}, {1}) mm outside the trace model range")]
    ErrorOutOfRange(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDirection {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    Centered,
}

impl ErrorDirection {
    /// Also the tie-break order.
    pub const ALL: [ErrorDirection; 5] = [
        ErrorDirection::PlusX,
        ErrorDirection::MinusX,
        ErrorDirection::PlusY,
        ErrorDirection::MinusY,
        ErrorDirection::Centered,
    ];

    pub fn unit(self) -> Vec2 {
        match self {
            ErrorDirection::PlusX => Vec2::new(1.0, 0.0),
            ErrorDirection::MinusX => Vec2::new(-1.0, 0.0),
            ErrorDirection::PlusY => Vec2::new(0.0, 1.0),
            ErrorDirection::MinusY => Vec2::new(0.0, -1.0),
            ErrorDirection::Centered => Vec2::zeros(),
        }
    }

    pub fn index(self) -> usize {
        ErrorDirection::ALL.iter().position(|d| *d == self).unwrap()
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorDirection::PlusX => "+x",
            ErrorDirection::MinusX => "-x",
            ErrorDirection::PlusY => "+y",
            ErrorDirection::MinusY => "-y",
            ErrorDirection::Centered => "centered",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceTrace {
    /// (fx, fy, fz) in N then (tx, ty, tz) in N mm.
    pub samples: Vec<Reading>,
    pub injected_error: Vec2,
}

impl ForceTrace {
    pub fn time_s(i: usize) -> f64 {
        i as f64 / SAMPLE_RATE_HZ
    }

    /// Columnar CSV: `t_s,fx,fy,fz,tx,ty,tz`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "fx", "fy", "fz", "tx", "ty", "tz"])?;
        for (i, r) in self.samples.iter().enumerate() {
            let mut row = vec![Self::time_s(i).to_string()];
            row.extend(r.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> csv::Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Mean of each channel with no noise.
pub fn expected_reading(error: Vec2) -> Reading {
    let axial = if error.norm() > GEAR_CLEARANCE_MM { AXIAL_CONTACT_N } else { 0.0 };
    [0.0 - LATERAL_GAIN * error.x, 0.0 - LATERAL_GAIN * error.y, axial, 0.0, 0.0, 0.0]
}

/// Trace recorded from contact formation for `TRACE_DURATION_S`.
pub fn synth_force_trace<R: Rng + ?Sized>(error: Vec2, sigma: f64, rng: &mut R) -> Result<ForceTrace, InsertionError> {
    if !(error.x.abs() <= MAX_TRACE_ERROR_MM && error.y.abs() <= MAX_TRACE_ERROR_MM) {
        return Err(InsertionError::ErrorOutOfRange(error.x, error.y));
    }
    let mean = expected_reading(error);
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
    let samples = (0..TRACE_LEN)
        .map(|_| {
            let mut r = mean;
            if let Some(n) = &noise {
                for v in &mut r {
                    *v += n.sample(rng);
                }
            }
            r
        })
        .collect();
    Ok(ForceTrace {
        samples,
        injected_error: error,
    })
}

/// Causal per-channel moving mean; output sample `i` averages inputs
/// `i..i + window`.
pub fn moving_average(samples: &[Reading], window: usize) -> Result<Vec<Reading>, InsertionError> {
    if window == 0 {
        return Err(InsertionError::ZeroWindow);
    }
    if window > samples.len() {
        return Err(InsertionError::WindowTooLarge {
            window,
            len: samples.len(),
        });
    }
    // prefix sums per channel
    let mut prefix = vec![[0.0; CHANNELS]; samples.len() + 1];
    for (i, r) in samples.iter().enumerate() {
        for c in 0..CHANNELS {
            prefix[i + 1][c] = prefix[i][c] + r[c];
        }
    }
    let w = window as f64;
    Ok((0..=samples.len() - window)
        .map(|i| std::array::from_fn(|c| (prefix[i + window][c] - prefix[i][c]) / w))
        .collect())
}

/// Per-channel means of the filtered trace.
pub fn trace_features(trace: &ForceTrace) -> Reading {
    let filtered = moving_average(&trace.samples, FILTER_WINDOW).expect("traces are longer than the filter window");
    let n = filtered.len() as f64;
    std::array::from_fn(|c| filtered.iter().map(|r| r[c]).sum::<f64>() / n)
}

pub trait DirectionClassifier {
    fn predict(&self, trace: &ForceTrace) -> Result<ErrorDirection, InsertionError>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InsertionPolicy {
    centroids: Option<[Reading; 5]>,
}

impl InsertionPolicy {
    pub fn from_centroids(centroids: [Reading; 5]) -> Self {
        InsertionPolicy {
            centroids: Some(centroids),
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.centroids.is_some()
    }

    pub fn centroids(&self) -> Option<&[Reading; 5]> {
        self.centroids.as_ref()
    }

    pub fn classify_features(&self, f: &Reading) -> Result<ErrorDirection, InsertionError> {
        let centroids = self.centroids.as_ref().ok_or(InsertionError::NotFitted)?;
        let mut best = (f64::INFINITY, ErrorDirection::Centered);
        for (dir, c) in ErrorDirection::ALL.into_iter().zip(centroids) {
            let d: f64 = f.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, dir);
            }
        }
        Ok(best.1)
    }
}

impl DirectionClassifier for InsertionPolicy {
    fn predict(&self, trace: &ForceTrace) -> Result<ErrorDirection, InsertionError> {
        self.classify_features(&trace_features(trace))
    }
}

pub fn class_error(dir: ErrorDirection) -> Vec2 {
    dir.unit() * TRAINING_ERROR_MM
}

pub fn fit_insertion_policy<R: Rng + ?Sized>(n_per_class: usize, sigma: f64, rng: &mut R) -> InsertionPolicy {
    if n_per_class == 0 {
        return InsertionPolicy::default();
    }
    let centroids = ErrorDirection::ALL.map(|dir| {
        let mut sum = [0.0; CHANNELS];
        for _ in 0..n_per_class {
            let t = synth_force_trace(class_error(dir), sigma, rng).expect("training errors are in range");
            for (s, v) in sum.iter_mut().zip(trace_features(&t)) {
                *s += v;
            }
        }
        sum.map(|s| s / n_per_class as f64)
    });
    InsertionPolicy::from_centroids(centroids)
}

pub fn predict_error_direction<C: DirectionClassifier + ?Sized>(
    policy: &C,
    trace: &ForceTrace,
) -> Result<ErrorDirection, InsertionError> {
    policy.predict(trace)
}

/// Held-out accuracy and confusion counts `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: [[usize; 5]; 5],
}

pub fn evaluate_policy<C: DirectionClassifier + ?Sized, R: Rng + ?Sized>(
    policy: &C,
    n_per_class: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Evaluation, InsertionError> {
    let mut confusion = [[0usize; 5]; 5];
    for dir in ErrorDirection::ALL {
        for _ in 0..n_per_class {
            let t = synth_force_trace(class_error(dir), sigma, rng)?;
            confusion[dir.index()][policy.predict(&t)?.index()] += 1;
        }
    }
    let correct: usize = (0..5).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / (5 * n_per_class).max(1) as f64,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GearInsertConfig {
    pub step_mm: f64,
    pub clearance_mm: f64,
    pub max_iters: usize,
    pub sigma: f64,
}

impl Default for GearInsertConfig {
    fn default() -> Self {
        GearInsertConfig {
            step_mm: 1.5,
            clearance_mm: GEAR_CLEARANCE_MM,
            max_iters: 6,
            sigma: DEFAULT_FORCE_SIGMA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GearInsertOutcome {
    pub success: bool,
    pub corrections: usize,
    pub residual: Vec2,
}

/// Probe, classify, step opposite the predicted error, until the residual
/// fits the clearance or `max_iters` corrections are spent.
pub fn insert_gear_loop<C: DirectionClassifier + ?Sized, R: Rng + ?Sized>(
    true_error: Vec2,
    policy: &C,
    config: &GearInsertConfig,
    rng: &mut R,
) -> Result<GearInsertOutcome, InsertionError> {
    let mut residual = true_error;
    let mut corrections = 0;
    loop {
        if residual.norm() <= config.clearance_mm {
            return Ok(GearInsertOutcome {
                success: true,
                corrections,
                residual,
            });
        }
        if corrections == config.max_iters {
            return Ok(GearInsertOutcome {
                success: false,
                corrections,
                residual,
            });
        }
        // beyond the model range the reaction saturates
        let probe = residual.map(|v| v.clamp(-MAX_TRACE_ERROR_MM, MAX_TRACE_ERROR_MM));
        let trace = synth_force_trace(probe, config.sigma, rng)?;
        residual -= policy.predict(&trace)?.unit() * config.step_mm;
        corrections += 1;
    }
}
