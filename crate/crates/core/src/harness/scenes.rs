//! Random initial scenes and the frozen singulation benchmark.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::model::{PartClass, Pose2D, Vec2};
use crate::rng::{derive_seed, stream, SCENE_GEN};
use crate::scene::{validate_scene, Scene, SceneFile, SceneFileError, WorkspaceConfig};
use crate::sim::{all_pegs_graspable, GripperFootprint};

pub const MAX_REJECTIONS: usize = 10_000;
pub const CLUTTER_PROBABILITY: f64 = 0.5;
/// Radius of the disc that clutter-biased part centres are drawn from.
pub const CLUTTER_RADIUS_MM: f64 = 70.0;
/// Minimum distance from a generated centre to the table edge: the reach of
/// the default gripper (half opening plus finger radius).
pub const EDGE_MARGIN_MM: f64 = 45.0;

pub const BENCHMARK_SEED: u64 = 2024;
pub const BENCHMARK_SIZE: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("no valid scene after {0} rejections")]
    GenerationTimeout(usize),
}

fn uniform_coord<R: Rng + ?Sized>(rng: &mut R, margin: f64, extent: f64) -> f64 {
    if extent - margin > margin {
        rng.random_range(margin..extent - margin)
    } else {
        extent / 2.0
    }
}

/// Rejection-samples four non-overlapping poses at least a gripper reach
/// from the table edge. With probability 0.5 all centres are drawn from one
/// 140 mm disc so the scene usually needs singulation.
pub fn generate_scene<R: Rng + ?Sized>(rng: &mut R, workspace: &WorkspaceConfig) -> Result<Scene, GenerationError> {
    let clutter = rng.random_bool(CLUTTER_PROBABILITY)
        && workspace.width > 2.0 * (CLUTTER_RADIUS_MM + EDGE_MARGIN_MM)
        && workspace.height > 2.0 * (CLUTTER_RADIUS_MM + EDGE_MARGIN_MM);
    for _ in 0..MAX_REJECTIONS {
        let disc = clutter.then(|| {
            Vec2::new(
                uniform_coord(rng, CLUTTER_RADIUS_MM + EDGE_MARGIN_MM, workspace.width),
                uniform_coord(rng, CLUTTER_RADIUS_MM + EDGE_MARGIN_MM, workspace.height),
            )
        });
        let parts: Vec<(PartClass, Pose2D)> = PartClass::ALL
            .into_iter()
            .map(|class| {
                let r = class.footprint_radius();
                let margin = r.max(EDGE_MARGIN_MM);
                let p = match disc {
                    Some(c) => {
                        let rho = CLUTTER_RADIUS_MM * rng.random::<f64>().sqrt();
                        let t = rng.random_range(0.0..2.0 * PI);
                        c + Vec2::new(rho * t.cos(), rho * t.sin())
                    }
                    None => Vec2::new(
                        uniform_coord(rng, margin, workspace.width),
                        uniform_coord(rng, margin, workspace.height),
                    ),
                };
                (class, Pose2D::new(p.x, p.y, rng.random_range(-PI..PI)))
            })
            .collect();
        let scene = Scene::new(*workspace, parts);
        if validate_scene(&scene).is_ok() {
            return Ok(scene);
        }
    }
    Err(GenerationError::GenerationTimeout(MAX_REJECTIONS))
}

/// Scene number `index` of the stream rooted at `master_seed`.
pub fn scene_for_index(master_seed: u64, index: u64, workspace: &WorkspaceConfig) -> Result<SceneFile, GenerationError> {
    let seed = derive_seed(master_seed, index);
    let scene = generate_scene(&mut stream(seed, SCENE_GEN), workspace)?;
    Ok(SceneFile { seed, scene })
}

/// The first `count` generated scenes in which at least one peg cannot be
/// grasped, so every benchmark entry requires singulation.
pub fn singulation_benchmark(master_seed: u64, count: usize) -> Vec<SceneFile> {
    let ws = WorkspaceConfig::default();
    let gripper = GripperFootprint::default();
    (0u64..)
        .map(|i| scene_for_index(master_seed, i, &ws).expect("default workspace always fits four parts"))
        .filter(|f| !all_pegs_graspable(&f.scene, &gripper))
        .take(count)
        .collect()
}

pub fn benchmark_file_name(index: usize) -> String {
    format!("scene_{index:03}.json")
}

pub fn write_scene_set(files: &[SceneFile], dir: impl AsRef<Path>) -> Result<(), SceneFileError> {
    fs::create_dir_all(dir.as_ref())?;
    for (i, f) in files.iter().enumerate() {
        f.save(dir.as_ref().join(benchmark_file_name(i)))?;
    }
    Ok(())
}

/// Loads `scene_000.json`, `scene_001.json`, ... until the first gap.
pub fn load_scene_set(dir: impl AsRef<Path>) -> Result<Vec<SceneFile>, SceneFileError> {
    let mut out = Vec::new();
    loop {
        let path = dir.as_ref().join(benchmark_file_name(out.len()));
        if !path.exists() {
            return Ok(out);
        }
        out.push(SceneFile::load(path)?);
    }
}

/// Location of the committed benchmark inside this crate.
pub fn frozen_benchmark_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("benchmark").join("singulation")
}
