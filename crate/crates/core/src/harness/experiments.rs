//! Monte Carlo experiment runners.
//!
//! Trial `i` of every experiment draws from streams seeded by
//! `derive_seed(master_seed, i)`, so a trial's outcome does not depend on
//! the grid or on how many other trials run. Trials are evaluated through
//! [`Execution`] and gathered in index order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::report::{Report, ReportRow, Table, TrialRecord};
use super::scenes::{frozen_benchmark_dir, load_scene_set, scene_for_index};
use crate::inhand::{
    fit_offset_estimator, holdout_mae, inject_grasp_error, insert_peg, observe_tactile, radial_clearance,
    GraspState, DEFAULT_TACTILE_SIGMA,
};
use crate::insertion::{
    class_error, fit_insertion_policy, insert_gear_loop, synth_force_trace, DirectionClassifier, ErrorDirection,
    GearInsertConfig, DEFAULT_FORCE_SIGMA,
};
use crate::meshing::{mesh_gears, mesh_pitch, MeshConfig};
use crate::model::{Vec2, HOLE_DIAMETER_MM, PEG_DIAMETER_MM};
use crate::par::Execution;
use crate::pipeline::{run_pipeline, PipelineConfig, Stage};
use crate::planner::{singulate_pegs, SingulationConfig};
use crate::rng::{
    derive_seed, stream, RngStream, FORCE_NOISE, GRASP, INSERTION_TRAIN, MESH, OFFSET_HOLDOUT, OFFSET_TRAIN,
    PLANNER, SLIP, TACTILE_NOISE,
};
use crate::scene::{SceneFile, WorkspaceConfig};

/// Seeds averaged for the offset estimator's held-out error.
pub const MAE_SEEDS: u64 = 10;
pub const MAE_HOLDOUT: usize = 1000;
/// Trials for the no-correction insertion baseline.
pub const BASELINE_TRIALS: usize = 1000;
pub const POLICY_TRAIN_PER_CLASS: usize = 50;
pub const GEAR_LOOP_TRIALS: usize = 100;
pub const GEAR_LOOP_ERROR_MM: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    SingulationAblation,
    OffsetAblation,
    InsertionAccuracy,
    MeshingSweep,
    EndToEnd,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::SingulationAblation,
        ExperimentId::OffsetAblation,
        ExperimentId::InsertionAccuracy,
        ExperimentId::MeshingSweep,
        ExperimentId::EndToEnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::SingulationAblation => "singulation-ablation",
            ExperimentId::OffsetAblation => "offset-ablation",
            ExperimentId::InsertionAccuracy => "insertion-accuracy",
            ExperimentId::MeshingSweep => "meshing-sweep",
            ExperimentId::EndToEnd => "end-to-end",
        }
    }

    /// What the grid values mean.
    pub fn grid_parameter(self) -> &'static str {
        match self {
            ExperimentId::SingulationAblation => "n_samples",
            ExperimentId::OffsetAblation => "train_size",
            ExperimentId::InsertionAccuracy => "sigma",
            ExperimentId::MeshingSweep => "transmission",
            ExperimentId::EndToEnd => "slip_prob",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    pub trials: usize,
    /// Values of [`ExperimentId::grid_parameter`].
    pub grid: Vec<f64>,
    pub master_seed: u64,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("trial {index}: {message}")]
    Trial { index: usize, message: String },
    #[error("benchmark: {0}")]
    Benchmark(String),
}

fn trial_err(index: usize) -> impl Fn(String) -> ExperimentError {
    move |message| ExperimentError::Trial { index, message }
}

impl ExperimentSpec {
    pub fn default_for(experiment: ExperimentId, master_seed: u64) -> Self {
        let (trials, grid) = match experiment {
            ExperimentId::SingulationAblation => (100, vec![1.0, 10.0, 100.0, 1000.0]),
            ExperimentId::OffsetAblation => (20, vec![10.0, 100.0, 1000.0]),
            ExperimentId::InsertionAccuracy => (200, vec![DEFAULT_FORCE_SIGMA]),
            ExperimentId::MeshingSweep => (1000, vec![0.5, 0.6, 0.7, 0.8, 0.9]),
            ExperimentId::EndToEnd => (225, vec![PipelineConfig::default().noise.slip_prob]),
        };
        ExperimentSpec {
            experiment,
            trials,
            grid,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidSpec(m.to_string()));
        if self.trials == 0 {
            return bad("trial count must be at least 1");
        }
        if self.grid.is_empty() {
            return bad("grid must not be empty");
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return bad("grid values must be finite");
        }
        let counts = self.grid.iter().all(|v| *v >= 1.0 && v.fract() == 0.0);
        match self.experiment {
            ExperimentId::SingulationAblation | ExperimentId::OffsetAblation if !counts => {
                bad("grid values must be positive integers")
            }
            ExperimentId::InsertionAccuracy if self.grid.iter().any(|s| *s < 0.0) => bad("sigma must be >= 0"),
            ExperimentId::MeshingSweep if self.grid.iter().any(|r| !(*r > 0.0 && *r < 1.0)) => {
                bad("transmission must lie in (0, 1)")
            }
            ExperimentId::EndToEnd if self.grid.iter().any(|p| !(0.0..=1.0).contains(p)) => {
                bad("slip probability must lie in [0, 1]")
            }
            _ => Ok(()),
        }
    }

    fn label(&self, value: f64) -> String {
        format!("{}={value}", self.experiment.grid_parameter())
    }

    fn trial_seed(&self, i: usize) -> u64 {
        derive_seed(self.master_seed, i as u64)
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn rate(successes: usize, trials: usize) -> f64 {
    successes as f64 / trials as f64
}

fn collect<T>(results: Vec<Result<T, ExperimentError>>) -> Result<Vec<T>, ExperimentError> {
    results.into_iter().collect()
}

/// Accumulates a report while timing each grid point.
struct Builder {
    spec: ExperimentSpec,
    rows: Vec<ReportRow>,
    trials: Vec<TrialRecord>,
    tables: Vec<Table>,
    wall: Vec<(String, f64)>,
}

impl Builder {
    fn new(spec: &ExperimentSpec) -> Self {
        Builder {
            spec: spec.clone(),
            rows: Vec::new(),
            trials: Vec::new(),
            tables: Vec::new(),
            wall: Vec::new(),
        }
    }

    fn timed<T>(&mut self, label: &str, trials: usize, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.wall.push((label.to_string(), start.elapsed().as_secs_f64() / trials as f64));
        out
    }

    fn finish(self) -> Report {
        Report {
            spec: self.spec,
            rows: self.rows,
            trials: self.trials,
            tables: self.tables,
            wall_time_s: self.wall,
        }
    }
}

pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<Report, ExperimentError> {
    spec.validate()?;
    match spec.experiment {
        ExperimentId::SingulationAblation => {
            let scenes = load_scene_set(frozen_benchmark_dir()).map_err(|e| ExperimentError::Benchmark(e.to_string()))?;
            singulation_ablation(spec, &scenes, exec)
        }
        ExperimentId::OffsetAblation => offset_ablation(spec, exec),
        ExperimentId::InsertionAccuracy => insertion_accuracy(spec, exec),
        ExperimentId::MeshingSweep => meshing_sweep(spec, exec),
        ExperimentId::EndToEnd => end_to_end(spec, exec),
    }
}

/// Singulates the first `trials` benchmark scenes at each sample count.
/// Failed trials count as the full interaction budget.
pub fn singulation_ablation(
    spec: &ExperimentSpec,
    scenes: &[SceneFile],
    exec: Execution,
) -> Result<Report, ExperimentError> {
    spec.validate()?;
    if scenes.len() < spec.trials {
        return Err(ExperimentError::Benchmark(format!(
            "{} scenes available, {} trials requested",
            scenes.len(),
            spec.trials
        )));
    }
    let scenes = &scenes[..spec.trials];
    let mut b = Builder::new(spec);
    let budget = SingulationConfig::default().max_interactions;
    let mut interactions_hist = Table::new("interactions", &["parameters", "interactions", "count"]);
    let mut slips_hist = Table::new("slips", &["parameters", "slips", "count"]);
    for &n in &spec.grid {
        let label = spec.label(n);
        let cfg = SingulationConfig {
            samples: n as usize,
            ..Default::default()
        };
        let results = b.timed(&label, spec.trials, || {
            exec.map(scenes, |i, f| {
                let seed = spec.trial_seed(i);
                let r = singulate_pegs(
                    &f.scene,
                    &cfg,
                    &mut stream(seed, PLANNER),
                    &mut stream(seed, SLIP),
                    Execution::Sequential,
                );
                (seed, r)
            })
        });
        let mut by_interactions = vec![0usize; budget + 1];
        let mut by_slips = vec![0usize; budget + 1];
        for (i, (seed, r)) in results.iter().enumerate() {
            let slips = r.records.iter().filter(|x| x.slipped).count();
            by_interactions[r.interactions.min(budget)] += 1;
            by_slips[slips.min(budget)] += 1;
            b.trials.push(TrialRecord {
                parameters: label.clone(),
                trial: i,
                seed: *seed,
                success: r.success,
                interactions: Some(r.interactions),
                slips: Some(slips),
                error_mm: None,
                detail: json!({ "off_table": r.records.last().is_some_and(|x| x.off_table) }),
            });
        }
        for (k, c) in by_interactions.iter().enumerate() {
            interactions_hist.push(vec![label.clone(), k.to_string(), c.to_string()]);
        }
        for (k, c) in by_slips.iter().enumerate() {
            slips_hist.push(vec![label.clone(), k.to_string(), c.to_string()]);
        }
        let successes = results.iter().filter(|(_, r)| r.success).count();
        b.rows.push(ReportRow {
            success_rate: Some(rate(successes, spec.trials)),
            mean_interactions: Some(mean(
                results
                    .iter()
                    .map(|(_, r)| if r.success { r.interactions } else { budget } as f64),
            )),
            ..ReportRow::new(label)
        });
    }
    b.tables.push(interactions_hist);
    b.tables.push(slips_hist);
    Ok(b.finish())
}

/// Held-out MAE of the offset estimator, averaged over [`MAE_SEEDS`]
/// training seeds, and `trials` corrected insertions with the seed-0
/// estimator. A final row is the uncorrected baseline.
pub fn offset_ablation(spec: &ExperimentSpec, exec: Execution) -> Result<Report, ExperimentError> {
    spec.validate()?;
    let sigma = DEFAULT_TACTILE_SIGMA;
    let clearance = radial_clearance(HOLE_DIAMETER_MM, PEG_DIAMETER_MM);
    let mut b = Builder::new(spec);
    let mut mae_table = Table::new("mae", &["parameters", "training_seed", "mae_mm"]);
    let trial_offset = |i: usize| {
        let seed = spec.trial_seed(i);
        (seed, inject_grasp_error(&mut stream(seed, GRASP)))
    };
    for &m in &spec.grid {
        let label = spec.label(m);
        let m = m as usize;
        let (maes, trials) = b.timed(&label, spec.trials, || {
            let maes = exec.map_range(MAE_SEEDS as usize, |s| {
                let seed = derive_seed(spec.master_seed, s as u64);
                let est = fit_offset_estimator(m, sigma, &mut stream(seed, OFFSET_TRAIN));
                holdout_mae(&est, MAE_HOLDOUT, sigma, &mut stream(seed, OFFSET_HOLDOUT))
                    .map_err(|e| trial_err(s)(e.to_string()))
            });
            let est = fit_offset_estimator(m, sigma, &mut stream(spec.trial_seed(0), OFFSET_TRAIN));
            let trials = exec.map_range(spec.trials, |i| {
                let (seed, dx) = trial_offset(i);
                let obs = observe_tactile(dx, sigma, &mut stream(seed, TACTILE_NOISE));
                let dx_hat = est.estimate(&obs).map_err(|e| trial_err(i)(e.to_string()))?;
                let state = GraspState {
                    part: crate::model::PartClass::Peg1,
                    dx,
                    reoriented: true,
                };
                Ok((seed, dx, dx_hat, insert_peg(&state, dx_hat, clearance)))
            });
            (maes, trials)
        });
        let maes = collect(maes)?;
        let trials = collect(trials)?;
        for (s, mae) in maes.iter().enumerate() {
            mae_table.push(vec![label.clone(), s.to_string(), mae.to_string()]);
        }
        for (i, (seed, dx, dx_hat, ok)) in trials.iter().enumerate() {
            b.trials.push(TrialRecord {
                parameters: label.clone(),
                trial: i,
                seed: *seed,
                success: *ok,
                interactions: None,
                slips: None,
                error_mm: Some((dx - dx_hat).abs()),
                detail: json!({ "dx_mm": dx, "dx_hat_mm": dx_hat }),
            });
        }
        b.rows.push(ReportRow {
            success_rate: Some(rate(trials.iter().filter(|t| t.3).count(), spec.trials)),
            mean_error_mm: Some(mean(maes.iter().copied())),
            ..ReportRow::new(label)
        });
    }

    let label = "train_size=0".to_string();
    let baseline = b.timed(&label, BASELINE_TRIALS, || {
        (0..BASELINE_TRIALS).map(trial_offset).collect::<Vec<_>>()
    });
    let successes = baseline.iter().filter(|(_, dx)| dx.abs() <= clearance).count();
    b.rows.push(ReportRow {
        success_rate: Some(rate(successes, BASELINE_TRIALS)),
        mean_error_mm: Some(mean(baseline.iter().map(|(_, dx)| dx.abs()))),
        ..ReportRow::new(label)
    });
    b.tables.push(mae_table);
    Ok(b.finish())
}

/// Direction accuracy of the nearest-centroid policy on `trials` held-out
/// traces (classes in rotation), then the closed correction loop from a
/// 4 mm error along a random axis.
pub fn insertion_accuracy(spec: &ExperimentSpec, exec: Execution) -> Result<Report, ExperimentError> {
    spec.validate()?;
    let mut b = Builder::new(spec);
    let mut confusion = Table::new("confusion", &["parameters", "true", "predicted", "count"]);
    for &sigma in &spec.grid {
        let label = spec.label(sigma);
        let policy = fit_insertion_policy(
            POLICY_TRAIN_PER_CLASS,
            sigma,
            &mut stream(spec.master_seed, INSERTION_TRAIN),
        );
        let held_out = b.timed(&label, spec.trials, || {
            exec.map_range(spec.trials, |i| {
                let seed = spec.trial_seed(i);
                let truth = ErrorDirection::ALL[i % ErrorDirection::ALL.len()];
                let trace = synth_force_trace(class_error(truth), sigma, &mut stream(seed, FORCE_NOISE))
                    .map_err(|e| trial_err(i)(e.to_string()))?;
                let predicted = policy.predict(&trace).map_err(|e| trial_err(i)(e.to_string()))?;
                Ok((seed, truth, predicted))
            })
        });
        let held_out = collect(held_out)?;
        let mut counts = [[0usize; 5]; 5];
        for (i, (seed, truth, predicted)) in held_out.iter().enumerate() {
            counts[truth.index()][predicted.index()] += 1;
            b.trials.push(TrialRecord {
                parameters: label.clone(),
                trial: i,
                seed: *seed,
                success: truth == predicted,
                interactions: None,
                slips: None,
                error_mm: None,
                detail: json!({ "true": truth.label(), "predicted": predicted.label() }),
            });
        }
        for t in ErrorDirection::ALL {
            for p in ErrorDirection::ALL {
                confusion.push(vec![
                    label.clone(),
                    t.label().to_string(),
                    p.label().to_string(),
                    counts[t.index()][p.index()].to_string(),
                ]);
            }
        }
        let correct = held_out.iter().filter(|(_, t, p)| t == p).count();
        b.rows.push(ReportRow {
            success_rate: Some(rate(correct, spec.trials)),
            ..ReportRow::new(label.clone())
        });

        let loop_label = format!("gear_loop {label} error_mm={GEAR_LOOP_ERROR_MM}");
        let cfg = GearInsertConfig {
            sigma,
            ..Default::default()
        };
        let loops = b.timed(&loop_label, GEAR_LOOP_TRIALS, || {
            exec.map_range(GEAR_LOOP_TRIALS, |i| {
                let seed = spec.trial_seed(i);
                let mut g = stream(seed, GRASP);
                let sign = if g.random_bool(0.5) { 1.0 } else { -1.0 };
                let error = if g.random_bool(0.5) {
                    Vec2::new(sign * GEAR_LOOP_ERROR_MM, 0.0)
                } else {
                    Vec2::new(0.0, sign * GEAR_LOOP_ERROR_MM)
                };
                let mut rng = RngStream::new(seed, FORCE_NOISE).substream(1).rng();
                insert_gear_loop(error, &policy, &cfg, &mut rng)
                    .map(|o| (seed, error, o))
                    .map_err(|e| trial_err(i)(e.to_string()))
            })
        });
        let loops = collect(loops)?;
        for (i, (seed, error, o)) in loops.iter().enumerate() {
            b.trials.push(TrialRecord {
                parameters: loop_label.clone(),
                trial: i,
                seed: *seed,
                success: o.success,
                interactions: Some(o.corrections),
                slips: None,
                error_mm: Some(o.residual.norm()),
                detail: json!({ "initial_error_mm": [error.x, error.y] }),
            });
        }
        b.rows.push(ReportRow {
            success_rate: Some(rate(loops.iter().filter(|l| l.2.success).count(), GEAR_LOOP_TRIALS)),
            mean_interactions: Some(mean(loops.iter().map(|l| l.2.corrections as f64))),
            mean_error_mm: Some(mean(loops.iter().map(|l| l.2.residual.norm()))),
            ..ReportRow::new(loop_label)
        });
    }
    b.tables.push(confusion);
    Ok(b.finish())
}

/// For each transmission ratio, meshes from `trials` evenly spaced initial
/// tooth offsets across one pitch. `mean_interactions` is mean attempts.
pub fn meshing_sweep(spec: &ExperimentSpec, exec: Execution) -> Result<Report, ExperimentError> {
    spec.validate()?;
    let pitch = mesh_pitch();
    let mut b = Builder::new(spec);
    let defaults = MeshConfig::default();
    let mut attempts_hist = Table::new("attempts", &["parameters", "attempts", "success", "count"]);
    for &rho in &spec.grid {
        let label = spec.label(rho);
        let cfg = MeshConfig {
            transmission: rho,
            ..defaults
        };
        let out = b.timed(&label, spec.trials, || {
            exec.map_range(spec.trials, |i| {
                let seed = spec.trial_seed(i);
                let theta0 = pitch * (i as f64 + 0.5) / spec.trials as f64;
                mesh_gears(theta0, &cfg, &mut stream(seed, MESH))
                    .map(|o| (seed, theta0, o))
                    .map_err(|e| trial_err(i)(e.to_string()))
            })
        });
        let out = collect(out)?;
        let mut hist: BTreeMap<(usize, bool), usize> = BTreeMap::new();
        for (i, (seed, theta0, o)) in out.iter().enumerate() {
            *hist.entry((o.attempts, o.success)).or_default() += 1;
            b.trials.push(TrialRecord {
                parameters: label.clone(),
                trial: i,
                seed: *seed,
                success: o.success,
                interactions: Some(o.attempts),
                slips: None,
                error_mm: None,
                detail: json!({ "theta0_rad": theta0 }),
            });
        }
        for ((a, s), c) in hist {
            attempts_hist.push(vec![label.clone(), a.to_string(), s.to_string(), c.to_string()]);
        }
        b.rows.push(ReportRow {
            success_rate: Some(rate(out.iter().filter(|o| o.2.success).count(), spec.trials)),
            mean_interactions: Some(mean(out.iter().map(|o| o.2.attempts as f64))),
            ..ReportRow::new(label)
        });
    }
    b.tables.push(attempts_hist);
    Ok(b.finish())
}

/// Stage name without the part suffix, e.g. `grasp_peg_1` -> `grasp_peg`.
pub fn stage_group(stage: &str) -> &str {
    stage.trim_end_matches(|c: char| c.is_ascii_digit() || c == '_').trim_end_matches("_large").trim_end_matches("_small")
}

/// Full pipeline runs on freshly generated scenes. `mean_interactions` is
/// the mean number of singulation pushes per run.
pub fn end_to_end(spec: &ExperimentSpec, exec: Execution) -> Result<Report, ExperimentError> {
    spec.validate()?;
    let ws = WorkspaceConfig::default();
    let mut b = Builder::new(spec);
    let mut stage_times = Table::new("stage-times", &["parameters", "stage", "mean_sim_time_s"]);
    let mut failures = Table::new("failures", &["parameters", "stage", "count"]);
    for &p in &spec.grid {
        let label = spec.label(p);
        let mut config = PipelineConfig::default();
        config.noise.slip_prob = p;
        let runs = b.timed(&label, spec.trials, || {
            exec.map_range(spec.trials, |i| {
                let seed = spec.trial_seed(i);
                let scene = scene_for_index(spec.master_seed, i as u64, &ws).map_err(|e| trial_err(i)(e.to_string()))?;
                Ok((seed, run_pipeline(&scene.scene, &config, seed, Execution::Sequential)))
            })
        });
        let runs = collect(runs)?;
        let mut per_stage: BTreeMap<String, f64> = BTreeMap::new();
        let mut failed: BTreeMap<String, usize> = BTreeMap::new();
        let mut pushes = Vec::with_capacity(runs.len());
        for (i, (seed, r)) in runs.iter().enumerate() {
            let mut interactions = 0;
            for e in &r.events {
                let d = e.detail["duration_s"].as_f64().unwrap_or(0.0);
                *per_stage.entry(stage_group(&e.stage).to_string()).or_default() += d;
                interactions += e.detail["interactions"].as_u64().unwrap_or(0) as usize;
            }
            pushes.push(interactions as f64);
            let failed_stage = r.failed_stage().map(Stage::to_string);
            if let Some(s) = &failed_stage {
                *failed.entry(s.clone()).or_default() += 1;
            }
            b.trials.push(TrialRecord {
                parameters: label.clone(),
                trial: i,
                seed: *seed,
                success: r.success(),
                interactions: Some(interactions),
                slips: None,
                error_mm: None,
                detail: json!({
                    "terminal": r.terminal.to_string(),
                    "failed_stage": failed_stage,
                    "sim_time_s": r.sim_time_s,
                    "events": r.events.len(),
                }),
            });
        }
        per_stage.remove("done");
        per_stage.retain(|k, _| !k.starts_with("failed"));
        for (stage, total) in &per_stage {
            stage_times.push(vec![label.clone(), stage.clone(), (total / runs.len() as f64).to_string()]);
        }
        for (stage, count) in failed {
            failures.push(vec![label.clone(), stage, count.to_string()]);
        }
        b.rows.push(ReportRow {
            success_rate: Some(rate(runs.iter().filter(|r| r.1.success()).count(), spec.trials)),
            mean_interactions: Some(mean(pushes)),
            ..ReportRow::new(label)
        });
    }
    b.tables.push(stage_times);
    b.tables.push(failures);
    Ok(b.finish())
}
