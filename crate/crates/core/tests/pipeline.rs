use std::collections::BTreeMap;

use proptest::prelude::*;

use gearbox_core::harness::experiments::stage_group;
use gearbox_core::harness::scenes::scene_for_index;
use gearbox_core::model::AssemblyConfig;
use gearbox_core::par::Execution;
use gearbox_core::pipeline::{run_pipeline, CompliantMesher, NoiseConfig, Outcome, Pipeline, PipelineConfig, Stage};
use gearbox_core::rng::derive_seed;
use gearbox_core::scene::{Scene, WorkspaceConfig};

fn scene(master: u64, i: u64) -> Scene {
    scene_for_index(master, i, &WorkspaceConfig::default()).unwrap().scene
}

/// Stages in execution order, recorded before each step.
fn trace(scene: &Scene, config: PipelineConfig, seed: u64) -> (Vec<Stage>, Stage) {
    let mut p = Pipeline::new(scene, config, seed, &CompliantMesher, Execution::Sequential);
    let mut visited = Vec::new();
    while !p.state().is_terminal() {
        visited.push(p.state().clone());
        p.step();
    }
    (visited, p.state().clone())
}

#[test]
fn twenty_nominal_runs_finish_and_peg_work_dominates() {
    let mut per_group: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..20 {
        let r = run_pipeline(&scene(31, i), &PipelineConfig::default(), derive_seed(31, i), Execution::Sequential);
        assert!(r.success(), "run {i}: {:?}", r.terminal);
        for e in &r.events {
            *per_group.entry(stage_group(&e.stage).to_string()).or_default() +=
                e.detail["duration_s"].as_f64().unwrap();
        }
    }
    let sum = |names: &[&str]| names.iter().map(|n| per_group.get(*n).copied().unwrap_or(0.0)).sum::<f64>();
    let pegs = sum(&["grasp_peg", "reorient", "estimate_offset", "insert_peg"]);
    let gears = sum(&["grasp_gear", "insert_gear"]);
    let rest = sum(&["perceive", "singulate", "mesh_gears"]);
    assert!(pegs > gears && pegs > rest, "pegs {pegs} gears {gears} rest {rest}");
}

#[test]
fn retried_parts_are_singulated_on_their_own() {
    let cfg = PipelineConfig {
        noise: NoiseConfig {
            grasp_failure_prob: 0.3,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut retries = 0;
    for i in 0..10 {
        let r = run_pipeline(&scene(5, i), &cfg, derive_seed(5, i), Execution::Sequential);
        for w in r.events.windows(3) {
            if w[0].outcome == Outcome::Retry {
                retries += 1;
                assert_eq!(w[1].stage, "perceive");
                assert_eq!(w[2].stage, "singulate");
                assert_eq!(w[2].detail["targets"].as_array().unwrap().len(), 1);
            }
        }
    }
    assert!(retries > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stages_follow_assembly_order(master in 0u64..1000, slip in 0.0f64..0.5, fail in 0.0f64..0.3) {
        let cfg = PipelineConfig {
            noise: NoiseConfig { slip_prob: slip, grasp_failure_prob: fail, ..Default::default() },
            ..Default::default()
        };
        let (visited, terminal) = trace(&scene(master, 0), cfg, master);
        let order = AssemblyConfig::default();
        let positions: Vec<usize> = visited
            .iter()
            .filter_map(|s| s.assembly_step())
            .map(|s| order.position(s))
            .collect();
        // retries repeat a step but never return to an earlier one
        prop_assert!(positions.windows(2).all(|w| w[1] >= w[0]), "{visited:?}");
        if terminal == Stage::Done {
            prop_assert_eq!(positions.last().copied(), Some(order.steps().len() - 1));
        }
    }

    #[test]
    fn logs_are_replayable_and_time_is_conserved(master in 0u64..1000) {
        let cfg = PipelineConfig::default();
        let s = scene(master, 1);
        let a = run_pipeline(&s, &cfg, master, Execution::Sequential);
        let b = run_pipeline(&s, &cfg, master, Execution::Parallel);
        prop_assert_eq!(&a.terminal, &b.terminal);
        let strip = |r: &gearbox_core::pipeline::PipelineResult| {
            r.events.iter().map(|e| (e.seq, e.stage.clone(), e.outcome, e.sim_time_s, e.detail.clone())).collect::<Vec<_>>()
        };
        prop_assert_eq!(strip(&a), strip(&b));
        let total: f64 = a.events.iter().map(|e| e.detail["duration_s"].as_f64().unwrap()).sum();
        prop_assert!((total - a.sim_time_s).abs() < 1e-9);
        let terminals = a.events.iter().filter(|e| e.stage == "done" || e.stage.starts_with("failed")).count();
        prop_assert_eq!(terminals, 1);
        prop_assert!(a.events.last().unwrap().stage == "done" || a.failed_stage().is_some());
    }
}
