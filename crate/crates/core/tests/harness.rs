use gearbox_core::harness::experiments::{run_experiment, ExperimentId, ExperimentSpec};
use gearbox_core::harness::report::{emit_report, read_rows, read_trials};
use gearbox_core::harness::scenes::{
    frozen_benchmark_dir, load_scene_set, singulation_benchmark, BENCHMARK_SEED, BENCHMARK_SIZE,
};
use gearbox_core::par::Execution;
use gearbox_core::scene::validate_scene;
use gearbox_core::sim::{all_pegs_graspable, GripperFootprint};

#[test]
fn frozen_benchmark_matches_generator() {
    let frozen = load_scene_set(frozen_benchmark_dir()).unwrap();
    assert_eq!(frozen.len(), BENCHMARK_SIZE);
    let fresh = singulation_benchmark(BENCHMARK_SEED, BENCHMARK_SIZE);
    let gripper = GripperFootprint::default();
    for (f, g) in frozen.iter().zip(&fresh) {
        assert_eq!(f.seed, g.seed);
        assert_eq!(f.scene, g.scene);
        assert_eq!(validate_scene(&f.scene), Ok(()));
        assert!(!all_pegs_graspable(&f.scene, &gripper));
    }
}

#[test]
fn emitted_reports_read_back() {
    let dir = tempfile::tempdir().unwrap();
    for id in [ExperimentId::MeshingSweep, ExperimentId::OffsetAblation] {
        let spec = ExperimentSpec {
            trials: 20,
            ..ExperimentSpec::default_for(id, 4)
        };
        let report = run_experiment(&spec, Execution::default()).unwrap();
        let paths = emit_report(&report, dir.path()).unwrap();
        assert_eq!(read_rows(&paths[0]).unwrap(), report.rows);
        assert_eq!(read_trials(&paths[1]).unwrap(), report.trials);
    }
}

#[test]
fn trial_outcomes_ignore_trial_count() {
    let spec = |trials| ExperimentSpec {
        trials,
        grid: vec![10.0],
        ..ExperimentSpec::default_for(ExperimentId::SingulationAblation, 8)
    };
    let short = run_experiment(&spec(5), Execution::default()).unwrap();
    let long = run_experiment(&spec(12), Execution::default()).unwrap();
    assert_eq!(short.trials[..], long.trials[..5]);
}
