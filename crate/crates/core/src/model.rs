//! Part catalogue, planar poses and the fixed assembly order.
//!
//! Lengths are millimetres, angles radians, time seconds. Nothing in the
//! crate converts units at runtime.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Planar point or displacement in millimetres.
pub type Vec2 = Vector2<f64>;

pub const HOLE_DIAMETER_MM: f64 = 15.0;
pub const HOLE_SPACING_MM: f64 = 70.0;

pub const PEG_DIAMETER_MM: f64 = 14.0;
pub const PEG_LENGTH_MM: f64 = 60.0;
pub const GEAR_BORE_DIAMETER_MM: f64 = 15.0;
pub const GEAR_THICKNESS_MM: f64 = 10.0;
/// Radial distance from pitch circle to tooth tip.
pub const TOOTH_TIP_MM: f64 = 2.0;
/// Diameter of the raised hub the gripper closes on.
pub const GEAR_HUB_DIAMETER_MM: f64 = 25.0;

/// Radial clearance between peg and hole (or gear bore and peg).
pub const RADIAL_CLEARANCE_MM: f64 = (HOLE_DIAMETER_MM - PEG_DIAMETER_MM) / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartClass {
    Peg1,
    Peg2,
    GearLarge,
    GearSmall,
}

impl PartClass {
    pub const ALL: [PartClass; 4] = [
        PartClass::Peg1,
        PartClass::Peg2,
        PartClass::GearLarge,
        PartClass::GearSmall,
    ];
    pub const PEGS: [PartClass; 2] = [PartClass::Peg1, PartClass::Peg2];

    pub fn is_peg(self) -> bool {
        matches!(self, PartClass::Peg1 | PartClass::Peg2)
    }

    pub fn is_gear(self) -> bool {
        !self.is_peg()
    }

    /// Symbol used for the part in the assembly literature (p1, p2, g_l, g_s).
    pub fn symbol(self) -> &'static str {
        match self {
            PartClass::Peg1 => "p1",
            PartClass::Peg2 => "p2",
            PartClass::GearLarge => "g_l",
            PartClass::GearSmall => "g_s",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartClass::Peg1 => "peg1",
            PartClass::Peg2 => "peg2",
            PartClass::GearLarge => "gear_large",
            PartClass::GearSmall => "gear_small",
        }
    }

    pub fn geometry(self) -> PartGeometry {
        PartGeometry::of(self)
    }

    pub fn footprint_radius(self) -> f64 {
        self.geometry().footprint_radius
    }
}

impl fmt::Display for PartClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPartName(pub String);

impl fmt::Display for UnknownPartName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown part class `{}`", self.0)
    }
}

impl std::error::Error for UnknownPartName {}

impl FromStr for PartClass {
    type Err = UnknownPartName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PartClass::ALL
            .into_iter()
            .find(|c| c.name() == s || c.symbol() == s)
            .ok_or_else(|| UnknownPartName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Lying cylinder. Its long axis is the local +y axis, so the in-plane
    /// minor axis coincides with local +x.
    Peg { diameter: f64, length: f64 },
    Gear {
        bore_diameter: f64,
        pitch_radius: f64,
        tooth_count: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartGeometry {
    pub class: PartClass,
    /// Circumscribed disc of the part lying on the table.
    pub footprint_radius: f64,
    pub shape: Shape,
}

impl PartGeometry {
    pub fn of(class: PartClass) -> Self {
        let shape = match class {
            PartClass::Peg1 | PartClass::Peg2 => Shape::Peg {
                diameter: PEG_DIAMETER_MM,
                length: PEG_LENGTH_MM,
            },
            PartClass::GearLarge => Shape::Gear {
                bore_diameter: GEAR_BORE_DIAMETER_MM,
                pitch_radius: 45.0,
                tooth_count: 45,
            },
            PartClass::GearSmall => Shape::Gear {
                bore_diameter: GEAR_BORE_DIAMETER_MM,
                pitch_radius: 25.0,
                tooth_count: 25,
            },
        };
        let footprint_radius = match shape {
            Shape::Peg { length, .. } => length / 2.0,
            Shape::Gear { pitch_radius, .. } => pitch_radius + TOOTH_TIP_MM,
        };
        PartGeometry {
            class,
            footprint_radius,
            shape,
        }
    }

    pub fn tooth_pitch_angle(&self) -> Option<f64> {
        match self.shape {
            Shape::Gear { tooth_count, .. } => Some(TAU / tooth_count as f64),
            Shape::Peg { .. } => None,
        }
    }

    pub fn pitch_radius(&self) -> Option<f64> {
        match self.shape {
            Shape::Gear { pitch_radius, .. } => Some(pitch_radius),
            Shape::Peg { .. } => None,
        }
    }

    /// Width the gripper closes across: peg diameter or gear hub diameter.
    pub fn grasp_width(&self) -> f64 {
        match self.shape {
            Shape::Peg { diameter, .. } => diameter,
            Shape::Gear { .. } => GEAR_HUB_DIAMETER_MM,
        }
    }

    /// Height of the top surface seen by the depth camera.
    pub fn top_height(&self) -> f64 {
        match self.shape {
            Shape::Peg { diameter, .. } => diameter,
            Shape::Gear { .. } => GEAR_THICKNESS_MM,
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = angle.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Folds an angle to (-pi/2, pi/2], i.e. modulo pi.
pub fn fold_half_turn(angle: f64) -> f64 {
    if angle > -PI / 2.0 && angle <= PI / 2.0 {
        return angle;
    }
    let wrapped = angle.rem_euclid(PI);
    if wrapped > PI / 2.0 {
        wrapped - PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    yaw: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose2D {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Pose2D::new(0.0, 0.0, 0.0)
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn with_position(&self, p: Vec2) -> Self {
        Pose2D { x: p.x, y: p.y, yaw: self.yaw }
    }

    pub fn translated(&self, d: Vec2) -> Self {
        self.with_position(self.position() + d)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    /// Local point expressed in the parent frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        Vec2::new(
            c * local.x - s * local.y + self.x,
            s * local.x + c * local.y + self.y,
        )
    }

    /// Unit vector of the local x axis in the parent frame.
    pub fn x_axis(&self) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        Vec2::new(c, s)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.yaw.sin_cos();
        Pose2D::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.yaw)
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose2D) -> Self {
        let p = self.transform_point(other.position());
        Pose2D::new(p.x, p.y, self.yaw + other.yaw)
    }
}

pub fn transform_point(pose: &Pose2D, local: Vec2) -> Vec2 {
    pose.transform_point(local)
}

/// Ordered assembly steps. The order is fixed by the task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyStep {
    Peg1,
    Peg2,
    GearLarge,
    GearSmall,
    Mesh,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssemblyConfig {
    steps: [AssemblyStep; 5],
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            steps: [
                AssemblyStep::Peg1,
                AssemblyStep::Peg2,
                AssemblyStep::GearLarge,
                AssemblyStep::GearSmall,
                AssemblyStep::Mesh,
            ],
        }
    }
}

impl AssemblyConfig {
    pub fn steps(&self) -> &[AssemblyStep] {
        &self.steps
    }

    pub fn position(&self, step: AssemblyStep) -> usize {
        self.steps.iter().position(|s| *s == step).expect("order is total")
    }
}
