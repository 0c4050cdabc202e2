//! Tabletop scene: which parts lie where on the manipulation surface.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PartClass, Pose2D, Vec2, HOLE_DIAMETER_MM, HOLE_SPACING_MM};

/// Footprints closer than `sum of radii - CONTACT_EPSILON_MM` interpenetrate.
pub const CONTACT_EPSILON_MM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("parts {0} and {1} overlap")]
    Overlap(PartClass, PartClass),
    #[error("part {0} lies outside the workspace")]
    OutOfBounds(PartClass),
    #[error("part {0} is missing from the scene")]
    MissingPart(PartClass),
    #[error("part {0} appears more than once")]
    DuplicatePart(PartClass),
}

#[derive(Debug, Error)]
pub enum SceneFileError {
    #[error("scene file i/o")]
    Io(#[from] std::io::Error),
    #[error("scene file parse")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene")]
    Invalid(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkspaceConfig {
    pub width: f64,
    pub height: f64,
    /// Hole centres in the assembly-plate frame, which is separate from
    /// the manipulation surface.
    pub hole_positions: [Vec2; 2],
    pub hole_diameter: f64,
    pub hole_spacing: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig::with_size(600.0, 450.0)
    }
}

impl WorkspaceConfig {
    pub fn with_size(width: f64, height: f64) -> Self {
        WorkspaceConfig {
            width,
            height,
            hole_positions: [Vec2::new(0.0, 0.0), Vec2::new(HOLE_SPACING_MM, 0.0)],
            hole_diameter: HOLE_DIAMETER_MM,
            hole_spacing: HOLE_SPACING_MM,
        }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x.is_finite()
            && p.y.is_finite()
            && (0.0..=self.width).contains(&p.x)
            && (0.0..=self.height).contains(&p.y)
    }

    /// Fraction `t` in [0, 1] at which the segment `from -> from + d` first
    /// leaves the workspace, or `None` if it stays inside.
    pub fn exit_fraction(&self, from: Vec2, d: Vec2) -> Option<f64> {
        if !self.contains(from + d) {
            let mut t_exit = 1.0_f64;
            for (p, dp, hi) in [(from.x, d.x, self.width), (from.y, d.y, self.height)] {
                if dp > 0.0 && p + dp > hi {
                    t_exit = t_exit.min((hi - p) / dp);
                } else if dp < 0.0 && p + dp < 0.0 {
                    t_exit = t_exit.min(-p / dp);
                }
            }
            Some(t_exit.clamp(0.0, 1.0))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedPart {
    pub class: PartClass,
    pub pose: Pose2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub parts: Vec<PlacedPart>,
    pub workspace: WorkspaceConfig,
}

impl Scene {
    pub fn new(workspace: WorkspaceConfig, parts: impl IntoIterator<Item = (PartClass, Pose2D)>) -> Self {
        Scene {
            parts: parts
                .into_iter()
                .map(|(class, pose)| PlacedPart { class, pose })
                .collect(),
            workspace,
        }
    }

    pub fn pose(&self, class: PartClass) -> Option<Pose2D> {
        self.parts.iter().find(|p| p.class == class).map(|p| p.pose)
    }

    pub fn index_of(&self, class: PartClass) -> Option<usize> {
        self.parts.iter().position(|p| p.class == class)
    }

    pub fn contains(&self, class: PartClass) -> bool {
        self.index_of(class).is_some()
    }

    pub fn classes(&self) -> impl Iterator<Item = PartClass> + '_ {
        self.parts.iter().map(|p| p.class)
    }

    pub fn set_pose(&mut self, class: PartClass, pose: Pose2D) {
        match self.index_of(class) {
            Some(i) => self.parts[i].pose = pose,
            None => self.parts.push(PlacedPart { class, pose }),
        }
    }

    pub fn without(&self, class: PartClass) -> Scene {
        Scene {
            parts: self.parts.iter().copied().filter(|p| p.class != class).collect(),
            workspace: self.workspace,
        }
    }

    /// Smallest surface gap between `class` and any other part, or `None`
    /// when the part is alone (or absent).
    pub fn min_clearance(&self, class: PartClass) -> Option<f64> {
        let me = self.parts.iter().find(|p| p.class == class)?;
        let r = me.class.footprint_radius();
        self.parts
            .iter()
            .filter(|p| p.class != class)
            .map(|p| (p.pose.position() - me.pose.position()).norm() - r - p.class.footprint_radius())
            .reduce(f64::min)
    }

    /// Gap between the footprint of `class` and the nearest table edge.
    pub fn edge_clearance(&self, class: PartClass) -> Option<f64> {
        let p = self.pose(class)?.position();
        let ws = &self.workspace;
        Some(p.x.min(ws.width - p.x).min(p.y).min(ws.height - p.y) - class.footprint_radius())
    }

    /// Bounds and pairwise overlap checks only. Partial scenes (parts
    /// already removed by the robot) pass if what remains is consistent.
    pub fn check_layout(&self) -> Result<(), SceneError> {
        for (i, a) in self.parts.iter().enumerate() {
            if self.parts[..i].iter().any(|b| b.class == a.class) {
                return Err(SceneError::DuplicatePart(a.class));
            }
            if !a.pose.is_finite() || !self.workspace.contains(a.pose.position()) {
                return Err(SceneError::OutOfBounds(a.class));
            }
        }
        for (i, a) in self.parts.iter().enumerate() {
            for b in &self.parts[i + 1..] {
                if overlaps(a, b) {
                    return Err(SceneError::Overlap(a.class, b.class));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn overlaps(a: &PlacedPart, b: &PlacedPart) -> bool {
    let d = (a.pose.position() - b.pose.position()).norm();
    d < a.class.footprint_radius() + b.class.footprint_radius() - CONTACT_EPSILON_MM
}

/// Full validation: exactly one entry per part class, in bounds, no
/// interpenetration. Tangency is contact, not overlap.
pub fn validate_scene(scene: &Scene) -> Result<(), SceneError> {
    for class in PartClass::ALL {
        if !scene.contains(class) {
            return Err(SceneError::MissingPart(class));
        }
    }
    scene.check_layout()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct WorkspaceRecord {
    w: f64,
    h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct PartRecord {
    class: PartClass,
    x_mm: f64,
    y_mm: f64,
    yaw_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct SceneRecord {
    seed: u64,
    workspace: WorkspaceRecord,
    parts: Vec<PartRecord>,
}

/// A scene together with the seed that produced it, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub seed: u64,
    pub scene: Scene,
}

impl SceneFile {
    pub fn to_json(&self) -> String {
        let record = SceneRecord {
            seed: self.seed,
            workspace: WorkspaceRecord {
                w: self.scene.workspace.width,
                h: self.scene.workspace.height,
            },
            parts: self
                .scene
                .parts
                .iter()
                .map(|p| PartRecord {
                    class: p.class,
                    x_mm: p.pose.x,
                    y_mm: p.pose.y,
                    yaw_rad: p.pose.yaw(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&record).expect("scene record serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, SceneFileError> {
        let record: SceneRecord = serde_json::from_str(text)?;
        let scene = Scene::new(
            WorkspaceConfig::with_size(record.workspace.w, record.workspace.h),
            record
                .parts
                .into_iter()
                .map(|p| (p.class, Pose2D::new(p.x_mm, p.y_mm, p.yaw_rad))),
        );
        Ok(SceneFile {
            seed: record.seed,
            scene,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneFileError> {
        let file = Self::from_json(&fs::read_to_string(path)?)?;
        validate_scene(&file.scene)?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneFileError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}
