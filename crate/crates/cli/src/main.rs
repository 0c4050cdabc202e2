use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use gearbox_core::harness::experiments::{run_experiment, ExperimentId, ExperimentSpec};
use gearbox_core::harness::report::emit_report;
use gearbox_core::harness::scenes::{scene_for_index, singulation_benchmark, write_scene_set, BENCHMARK_SEED};
use gearbox_core::inhand::{fit_offset_estimator, holdout_mae, DEFAULT_TACTILE_SIGMA};
use gearbox_core::insertion::{class_error, evaluate_policy, fit_insertion_policy, synth_force_trace, ErrorDirection};
use gearbox_core::par::Execution;
use gearbox_core::pipeline::{run_pipeline, write_event_log, PipelineConfig};
use gearbox_core::planner::{singulate_pegs, SingulationConfig};
use gearbox_core::rng::{stream, FORCE_NOISE, INSERTION_TRAIN, OFFSET_HOLDOUT, OFFSET_TRAIN, PLANNER, SLIP};
use gearbox_core::scene::{SceneFile, WorkspaceConfig};
use gearbox_core::sim::SlipModel;

const HOLDOUT: usize = 1000;
const EVAL_PER_CLASS: usize = 40;

#[derive(Parser)]
#[command(name = "gearbox", version, about = "Simulated autonomous gearbox assembly")]
struct Cli {
    /// Default output directory.
    #[arg(long, global = true, env = "GEARBOX_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Run trials on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated scene files.
    GenScenes {
        #[arg(long, default_value_t = BENCHMARK_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Keep only scenes that need singulation (the benchmark set).
        #[arg(long)]
        benchmark: bool,
        /// Defaults to <out-dir>/scenes.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment and write its report.
    Experiment {
        id: ExperimentId,
        #[arg(long, default_value_t = BENCHMARK_SEED)]
        seed: u64,
        /// Defaults to <out-dir>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Assembly pipeline.
    Pipeline {
        #[command(subcommand)]
        action: PipelineAction,
    },
    /// Singulate the pegs of one scene; one JSON record per interaction.
    Singulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        max_interactions: usize,
        #[arg(long, default_value_t = SlipModel::default().p_slip)]
        slip: f64,
    },
    /// Fit the in-hand offset estimator and report held-out error.
    FitOffset {
        #[arg(long)]
        train_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TACTILE_SIGMA)]
        sigma: f64,
    },
    /// Fit the gear insertion policy and report held-out accuracy.
    FitInsertion {
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write one +x force trace as CSV.
        #[arg(long)]
        dump_trace: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineAction {
    /// Run one scene to a terminal state; prints the event log.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON pipeline configuration; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the log here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include measured wall time in each event.
        #[arg(long)]
        wall_time: bool,
    },
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_scene(path: &Path) -> Result<SceneFile> {
    SceneFile::load(path).with_context(|| format!("loading scene {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let exec = exec(cli.sequential);
    match cli.command {
        Command::GenScenes {
            seed,
            count,
            benchmark,
            out,
        } => {
            let dir = out.unwrap_or_else(|| cli.out_dir.join("scenes"));
            let files = if benchmark {
                singulation_benchmark(seed, count)
            } else {
                let ws = WorkspaceConfig::default();
                (0..count as u64)
                    .map(|i| scene_for_index(seed, i, &ws))
                    .collect::<Result<Vec<_>, _>>()?
            };
            write_scene_set(&files, &dir)?;
            eprintln!("wrote {} scenes to {}", files.len(), dir.display());
        }
        Command::Experiment {
            id,
            seed,
            out,
            trials,
            grid,
        } => {
            let mut spec = ExperimentSpec::default_for(id, seed);
            if let Some(t) = trials {
                spec.trials = t;
            }
            if let Some(g) = grid {
                spec.grid = g;
            }
            let report = run_experiment(&spec, exec)?;
            let dir = out.unwrap_or(cli.out_dir);
            let paths = emit_report(&report, &dir)?;
            let body = std::fs::read_to_string(&paths[0])?;
            print!("{body}");
            eprintln!("wrote {} files to {}", paths.len(), dir.display());
        }
        Command::Pipeline {
            action:
                PipelineAction::Run {
                    scene,
                    seed,
                    config,
                    out,
                    wall_time,
                },
        } => {
            let file = load_scene(&scene)?;
            let config: PipelineConfig = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing config {}", p.display()))?,
                None => PipelineConfig::default(),
            };
            if let Err(e) = config.validate() {
                bail!("invalid config: {e}");
            }
            let result = run_pipeline(&file.scene, &config, seed, exec);
            let mut w = writer(out.as_deref())?;
            write_event_log(&result.events, &mut w, wall_time)?;
            w.flush()?;
            eprintln!("terminal: {} after {:.1} s simulated", result.terminal, result.sim_time_s);
        }
        Command::Singulate {
            scene,
            samples,
            seed,
            max_interactions,
            slip,
        } => {
            if samples == 0 {
                bail!("--samples must be at least 1");
            }
            if !(0.0..=1.0).contains(&slip) {
                bail!("--slip must lie in [0, 1]");
            }
            let file = load_scene(&scene)?;
            let cfg = SingulationConfig {
                samples,
                max_interactions,
                slip: SlipModel { p_slip: slip },
                ..Default::default()
            };
            let r = singulate_pegs(&file.scene, &cfg, &mut stream(seed, PLANNER), &mut stream(seed, SLIP), exec);
            let mut w = writer(None)?;
            for rec in &r.records {
                serde_json::to_writer(&mut w, rec)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            eprintln!("success: {} after {} interactions", r.success, r.interactions);
        }
        Command::FitOffset { train_size, seed, sigma } => {
            if train_size == 0 {
                bail!("--train-size must be at least 1");
            }
            let est = fit_offset_estimator(train_size, sigma, &mut stream(seed, OFFSET_TRAIN));
            let mae = holdout_mae(&est, HOLDOUT, sigma, &mut stream(seed, OFFSET_HOLDOUT))?;
            println!("{}", json!({ "M": train_size, "holdout_mae_mm": mae }));
        }
        Command::FitInsertion {
            per_class,
            sigma,
            seed,
            dump_trace,
        } => {
            if per_class == 0 {
                bail!("--per-class must be at least 1");
            }
            let policy = fit_insertion_policy(per_class, sigma, &mut stream(seed, INSERTION_TRAIN));
            let eval = evaluate_policy(&policy, EVAL_PER_CLASS, sigma, &mut stream(seed, FORCE_NOISE))?;
            let labels: Vec<_> = ErrorDirection::ALL.iter().map(|d| d.label()).collect();
            println!(
                "{}",
                json!({ "accuracy": eval.accuracy, "classes": labels, "confusion": eval.confusion })
            );
            if let Some(p) = dump_trace {
                let trace = synth_force_trace(class_error(ErrorDirection::ALL[0]), sigma, &mut stream(seed, FORCE_NOISE))?;
                trace.save_csv(&p).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
