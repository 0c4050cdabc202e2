//! Synthetic depth clouds of segmented parts and PCA pose estimation.
//!
//! The pose of a segmented cluster is its centroid plus the yaw of the
//! in-plane minor principal axis. For a flat patch the smallest principal
//! axis is the surface normal, so the yaw comes from the middle one.

use std::io::{self, Write};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{fold_half_turn, PartClass, Pose2D, Shape, Vec2};
use crate::scene::Scene;

pub const MIN_CLOUD_POINTS: usize = 10;
/// Relative in-plane eigenvalue gap below which the yaw is undefined.
pub const DEGENERACY_RATIO: f64 = 0.1;

pub type Point3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("cloud needs at least {MIN_CLOUD_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("cloud is empty")]
    EmptyCloud,
    #[error("covariance needs at least two points")]
    SinglePoint,
    #[error("matrix is not symmetric")]
    NotSymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub points: Vec<Point3>,
    pub label: PartClass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxes {
    /// Ascending.
    pub values: [f64; 3],
    pub vectors: [Vector3<f64>; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub position: Point3,
    /// Yaw of the in-plane minor axis, folded to (-pi/2, pi/2]. Zero when
    /// `degenerate`.
    pub yaw: f64,
    pub label: PartClass,
    pub degenerate: bool,
    pub axes: PrincipalAxes,
}

impl PoseEstimate {
    pub fn pose2d(&self) -> Pose2D {
        Pose2D::new(self.position.x, self.position.y, self.yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PerceptionConfig {
    pub noise_sigma: f64,
    pub points: usize,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            noise_sigma: 1.0,
            points: 2000,
        }
    }
}

fn gaussian_offset<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Point3 {
    if sigma == 0.0 {
        return Point3::zeros();
    }
    // Truncated at 3 sigma so every point stays within the dilated footprint.
    loop {
        let v = Point3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if v.norm() <= 3.0 {
            return v * sigma;
        }
    }
}

/// Draws `n` points uniformly over the visible top surface of `part`
/// placed at `pose`, with isotropic Gaussian noise.
pub fn sample_cloud<R: Rng + ?Sized>(
    part: PartClass,
    pose: &Pose2D,
    n: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<LabeledCloud, PerceptionError> {
    if n < MIN_CLOUD_POINTS {
        return Err(PerceptionError::TooFewPoints(n));
    }
    let geometry = part.geometry();
    let points = (0..n)
        .map(|_| {
            let (local, z) = match geometry.shape {
                Shape::Peg { diameter, length } => {
                    let r = diameter / 2.0;
                    let x = rng.random_range(-r..=r);
                    let y = rng.random_range(-length / 2.0..=length / 2.0);
                    (Vec2::new(x, y), r + (r * r - x * x).max(0.0).sqrt())
                }
                Shape::Gear {
                    bore_diameter,
                    pitch_radius,
                    ..
                } => {
                    let r0 = bore_diameter / 2.0;
                    let r = rng.random_range(r0 * r0..=pitch_radius * pitch_radius).sqrt();
                    let t = rng.random_range(0.0..std::f64::consts::TAU);
                    (Vec2::new(r * t.cos(), r * t.sin()), geometry.top_height())
                }
            };
            let p = pose.transform_point(local);
            Point3::new(p.x, p.y, z) + gaussian_offset(noise_sigma, rng)
        })
        .collect();
    Ok(LabeledCloud { points, label: part })
}

pub fn centroid(cloud: &LabeledCloud) -> Result<Point3, PerceptionError> {
    if cloud.points.is_empty() {
        return Err(PerceptionError::EmptyCloud);
    }
    let sum: Point3 = cloud.points.iter().sum();
    Ok(sum / cloud.points.len() as f64)
}

/// Population covariance `(1/n) sum (p - mean)(p - mean)^T`.
pub fn covariance(cloud: &LabeledCloud) -> Result<Matrix3<f64>, PerceptionError> {
    match cloud.points.len() {
        0 => return Err(PerceptionError::EmptyCloud),
        1 => return Err(PerceptionError::SinglePoint),
        _ => {}
    }
    let mean = centroid(cloud)?;
    let mut c = Matrix3::zeros();
    for p in &cloud.points {
        let d = p - mean;
        c += d * d.transpose();
    }
    Ok(c / cloud.points.len() as f64)
}

pub fn principal_axes(c: &Matrix3<f64>) -> Result<PrincipalAxes, PerceptionError> {
    let scale = c.abs().max().max(f64::MIN_POSITIVE);
    if (c - c.transpose()).abs().max() > 1e-9 * scale {
        return Err(PerceptionError::NotSymmetric);
    }
    let eig = SymmetricEigen::new(*c);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = [0.0; 3];
    let mut vectors = [Vector3::zeros(); 3];
    for (slot, &k) in order.iter().enumerate() {
        values[slot] = eig.eigenvalues[k];
        let mut v: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
        // Sign: the largest-magnitude component is nonnegative.
        let dominant = v.iamax();
        if v[dominant] < 0.0 {
            v = -v;
        }
        vectors[slot] = v;
    }
    Ok(PrincipalAxes { values, vectors })
}

pub fn estimate_pose(cloud: &LabeledCloud) -> Result<PoseEstimate, PerceptionError> {
    let position = centroid(cloud)?;
    let axes = principal_axes(&covariance(cloud)?)?;
    let [_, l1, l2] = axes.values;
    let degenerate = l2 <= 0.0 || (l2 - l1) / l2 < DEGENERACY_RATIO;
    let yaw = if degenerate {
        0.0
    } else {
        let minor = axes.vectors[1];
        fold_half_turn(minor.y.atan2(minor.x))
    };
    Ok(PoseEstimate {
        position,
        yaw,
        label: cloud.label,
        degenerate,
        axes,
    })
}

/// Re-estimates every part pose from fresh synthetic clouds.
pub fn perceive_scene<R: Rng + ?Sized>(
    truth: &Scene,
    config: &PerceptionConfig,
    rng: &mut R,
) -> Result<Scene, PerceptionError> {
    let mut belief = truth.clone();
    for part in &mut belief.parts {
        let cloud = sample_cloud(part.class, &part.pose, config.points, config.noise_sigma, rng)?;
        part.pose = estimate_pose(&cloud)?.pose2d();
    }
    Ok(belief)
}

/// Debug dump, one whitespace-separated `x y z label` row per point.
pub fn write_cloud<W: Write>(cloud: &LabeledCloud, mut out: W) -> io::Result<()> {
    writeln!(out, "x y z label")?;
    for p in &cloud.points {
        writeln!(out, "{} {} {} {}", p.x, p.y, p.z, cloud.label)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, PERCEPTION};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cloud(points: &[[f64; 3]]) -> LabeledCloud {
        LabeledCloud {
            points: points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
            label: PartClass::Peg1,
        }
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&cloud(&[[0., 0., 0.], [2., 0., 0.]])).unwrap(), Point3::new(1., 0., 0.));
        assert_eq!(centroid(&cloud(&[[5., -3., 1.]])).unwrap(), Point3::new(5., -3., 1.));
        assert_eq!(centroid(&cloud(&[])), Err(PerceptionError::EmptyCloud));
    }

    #[test]
    fn covariance_examples() {
        let c = covariance(&cloud(&[[-1., 0., 0.], [1., 0., 0.]])).unwrap();
        assert_eq!(c, Matrix3::from_diagonal(&Vector3::new(1., 0., 0.)));
        let c = covariance(&cloud(&[[3., 3., 3.]; 5])).unwrap();
        assert_eq!(c, Matrix3::zeros());
        assert_eq!(covariance(&cloud(&[[1., 2., 3.]])), Err(PerceptionError::SinglePoint));
    }

    #[test]
    fn principal_axes_of_diagonal() {
        let axes = principal_axes(&Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 0.1))).unwrap();
        assert_abs_diff_eq!(axes.values[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(axes.values[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(axes.values[2], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(axes.vectors[0].z.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_is_degenerate() {
        let axes = principal_axes(&Matrix3::identity()).unwrap();
        assert_eq!(axes.values, [1.0, 1.0, 1.0]);
        for i in 0..3 {
            for j in 0..3 {
                let d = axes.vectors[i].dot(&axes.vectors[j]);
                assert_abs_diff_eq!(d, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 0.5;
        assert_eq!(principal_axes(&m), Err(PerceptionError::NotSymmetric));
    }

    #[test]
    fn sign_convention() {
        let mut rng = stream(11, PERCEPTION);
        let c = sample_cloud(PartClass::Peg1, &Pose2D::new(50.0, 60.0, 2.5), 500, 1.0, &mut rng).unwrap();
        let axes = principal_axes(&covariance(&c).unwrap()).unwrap();
        for v in axes.vectors {
            assert!(v[v.iamax()] >= 0.0);
        }
    }

    #[test]
    fn noiseless_peg_stays_in_footprint() {
        let mut rng = stream(1, PERCEPTION);
        let c = sample_cloud(PartClass::Peg1, &Pose2D::identity(), 1000, 0.0, &mut rng).unwrap();
        for p in &c.points {
            assert!(p.x.abs() <= 7.0 && p.y.abs() <= 30.0, "{p:?}");
        }
    }

    #[test]
    fn too_few_points() {
        let mut rng = stream(1, PERCEPTION);
        assert_eq!(
            sample_cloud(PartClass::Peg1, &Pose2D::identity(), 5, 0.0, &mut rng),
            Err(PerceptionError::TooFewPoints(5))
        );
    }

    #[test]
    fn gear_centroid_near_center() {
        let mut rng = stream(2, PERCEPTION);
        let c = sample_cloud(PartClass::GearLarge, &Pose2D::new(100.0, 100.0, 0.0), 2000, 0.0, &mut rng)
            .unwrap();
        let m = centroid(&c).unwrap();
        assert!((Vec2::new(m.x, m.y) - Vec2::new(100.0, 100.0)).norm() < 1.0);
    }

    #[test]
    fn peg_yaw_examples() {
        let mut rng = stream(3, PERCEPTION);
        let c = sample_cloud(PartClass::Peg2, &Pose2D::identity(), 2000, 0.0, &mut rng).unwrap();
        let e = estimate_pose(&c).unwrap();
        assert!(!e.degenerate);
        assert!(e.yaw.abs() <= 0.01, "{}", e.yaw);

        let c = sample_cloud(PartClass::Peg2, &Pose2D::new(0.0, 0.0, 0.52), 2000, 0.0, &mut rng).unwrap();
        let e = estimate_pose(&c).unwrap();
        assert!((e.yaw - 0.52).abs() <= 0.01, "{}", e.yaw);
        assert_eq!(e.label, PartClass::Peg2);
    }

    #[test]
    fn gear_estimate_is_degenerate() {
        let mut rng = stream(4, PERCEPTION);
        for part in [PartClass::GearLarge, PartClass::GearSmall] {
            let c = sample_cloud(part, &Pose2D::new(200.0, 200.0, 1.0), 2000, 1.0, &mut rng).unwrap();
            let e = estimate_pose(&c).unwrap();
            assert!(e.degenerate);
            assert_eq!(e.yaw, 0.0);
        }
    }

    #[test]
    fn noiseless_yaw_over_seeds() {
        for seed in 0..100u64 {
            let mut rng = stream(seed, PERCEPTION);
            let theta = rng.random_range(-PI..PI);
            let c = sample_cloud(PartClass::Peg1, &Pose2D::new(300.0, 200.0, theta), 2000, 0.0, &mut rng)
                .unwrap();
            let e = estimate_pose(&c).unwrap();
            assert!(fold_half_turn(e.yaw - theta).abs() <= 0.02, "seed {seed}");
        }
    }

    #[test]
    fn cloud_dump_has_one_row_per_point() {
        let c = cloud(&[[1., 2., 3.], [4., 5., 6.]]);
        let mut buf = Vec::new();
        write_cloud(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(1).unwrap(), "1 2 3 peg1");
    }
}
