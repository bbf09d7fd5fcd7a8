//! Object models: surface samplings of the provided shapes plus the
//! derived quantities the planner and grasp sampler need.

use crate::geometry::PointCloud;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Primitive descriptor or a reference to a surface-point file
/// (whitespace-separated `x y z` per line, meters).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
    Points { path: String },
}

/// Orientation symmetry used when scoring orientation errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    #[default]
    None,
    ZFold(u32),
    ZContinuous,
}

/// An object known to the system: precomputed uniform surface sampling in
/// the object frame plus footprint and graspability extents.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub id: String,
    pub surface_points: PointCloud,
    /// Approximate spacing of the surface sampling, meters.
    pub sample_pitch: f64,
    /// Circumscribed circle of the XY projection at identity orientation.
    pub footprint_radius: f64,
    /// Minimum caliper width; anything larger than the gripper opening
    /// cannot be grasped.
    pub max_width: f64,
    pub symmetry: Symmetry,
}

pub const DEFAULT_SAMPLE_PITCH: f64 = 0.004;

impl ObjectModel {
    pub fn from_shape(id: &str, shape: &Shape, pitch: f64, symmetry: Symmetry) -> ObjectModel {
        let (points, footprint_radius, max_width) = match shape {
            Shape::Box { size } => {
                let pts = sample_box(size[0], size[1], size[2], pitch);
                let fp = 0.5 * (size[0] * size[0] + size[1] * size[1]).sqrt();
                let mw = size[0].min(size[1]).min(size[2]);
                (pts, fp, mw)
            }
            Shape::Cylinder { radius, height } => {
                let pts = sample_cylinder(*radius, *height, pitch);
                (pts, *radius, (2.0 * radius).min(*height))
            }
            Shape::Sphere { radius } => {
                let pts = sample_sphere(*radius, pitch);
                (pts, *radius, 2.0 * radius)
            }
            Shape::Points { .. } => {
                panic!("point-file shapes are loaded via ObjectModel::from_points")
            }
        };
        ObjectModel {
            id: id.to_string(),
            surface_points: PointCloud::from_points(points),
            sample_pitch: pitch,
            footprint_radius,
            max_width,
            symmetry,
        }
    }

    /// Builds a model from raw surface points: the pitch is estimated from
    /// nearest-neighbor spacing, the footprint from the XY extent, and the
    /// caliper width from the principal-axis extents.
    pub fn from_points(id: &str, points: Vec<Vector3<f64>>, symmetry: Symmetry) -> ObjectModel {
        assert!(!points.is_empty(), "model {id} has no surface points");
        let pitch = estimate_pitch(&points);
        let footprint_radius = points
            .iter()
            .map(|p| (p.x * p.x + p.y * p.y).sqrt())
            .fold(0.0f64, f64::max);
        let max_width = min_principal_extent(&points);
        ObjectModel {
            id: id.to_string(),
            surface_points: PointCloud::from_points(points),
            sample_pitch: pitch,
            footprint_radius,
            max_width,
            symmetry,
        }
    }
}

fn linspace(a: f64, b: f64, pitch: f64) -> Vec<f64> {
    let n = (((b - a) / pitch).round() as usize).max(1) + 1;
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn sample_box(sx: f64, sy: f64, sz: f64, pitch: f64) -> Vec<Vector3<f64>> {
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let xs = linspace(-hx, hx, pitch);
    let ys = linspace(-hy, hy, pitch);
    let zs = linspace(-hz, hz, pitch);
    let mut pts = Vec::new();
    for &x in &xs {
        for &y in &ys {
            pts.push(Vector3::new(x, y, -hz));
            pts.push(Vector3::new(x, y, hz));
        }
    }
    // Interior z rows only; the rims are already covered by the caps.
    for &z in &zs[1..zs.len() - 1] {
        for &x in &xs {
            pts.push(Vector3::new(x, -hy, z));
            pts.push(Vector3::new(x, hy, z));
        }
        for &y in &ys[1..ys.len() - 1] {
            pts.push(Vector3::new(-hx, y, z));
            pts.push(Vector3::new(hx, y, z));
        }
    }
    pts
}

fn sample_cylinder(radius: f64, height: f64, pitch: f64) -> Vec<Vector3<f64>> {
    let hz = height / 2.0;
    let n_theta = ((2.0 * PI * radius / pitch).ceil() as usize).max(8);
    let mut pts = Vec::new();
    for &z in &linspace(-hz, hz, pitch) {
        for i in 0..n_theta {
            let th = 2.0 * PI * i as f64 / n_theta as f64;
            pts.push(Vector3::new(radius * th.cos(), radius * th.sin(), z));
        }
    }
    // Caps: concentric rings inward from just inside the rim.
    for z in [-hz, hz] {
        pts.push(Vector3::new(0.0, 0.0, z));
        let mut rho = radius - pitch;
        while rho > pitch * 0.5 {
            let n = ((2.0 * PI * rho / pitch).ceil() as usize).max(4);
            for i in 0..n {
                let th = 2.0 * PI * i as f64 / n as f64;
                pts.push(Vector3::new(rho * th.cos(), rho * th.sin(), z));
            }
            rho -= pitch;
        }
    }
    pts
}

fn sample_sphere(radius: f64, pitch: f64) -> Vec<Vector3<f64>> {
    let n = ((4.0 * PI * radius * radius / (pitch * pitch)).ceil() as usize).max(64);
    let golden = PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            Vector3::new(radius * rho * th.cos(), radius * rho * th.sin(), radius * z)
        })
        .collect()
}

fn estimate_pitch(points: &[Vector3<f64>]) -> f64 {
    let sample: Vec<usize> = (0..points.len()).step_by((points.len() / 200).max(1)).collect();
    let mut dists: Vec<f64> = sample
        .iter()
        .map(|&i| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| (p - points[i]).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists.get(dists.len() / 2).copied().unwrap_or(DEFAULT_SAMPLE_PITCH)
}

fn min_principal_extent(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let c: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = (cov / n).symmetric_eigen();
    (0..3)
        .map(|k| {
            let axis = eig.eigenvectors.column(k);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in points {
                let t = axis.dot(&(p - c));
                lo = lo.min(t);
                hi = hi.max(t);
            }
            hi - lo
        })
        .fold(f64::INFINITY, f64::min)
}

/// Immutable id → model map shared by every episode.
#[derive(Debug, Clone, Default)]
pub struct ModelCatalog {
    models: BTreeMap<String, ObjectModel>,
}

impl ModelCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: ObjectModel) {
        self.models.insert(model.id.clone(), model);
    }

    pub fn get(&self, id: &str) -> Option<&ObjectModel> {
        self.models.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.models.keys()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// id → footprint radius view used by occupancy goal augmentation.
    pub fn footprints(&self) -> BTreeMap<String, f64> {
        self.models
            .iter()
            .map(|(id, m)| (id.clone(), m.footprint_radius))
            .collect()
    }
}
