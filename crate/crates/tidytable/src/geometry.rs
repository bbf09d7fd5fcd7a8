//! Frame algebra, point-cloud container, and the rigid least-squares fit
//! shared by RANSAC scoring, ICP, and placement-pose computation.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    /// Fewer than three points, or the point sets do not span a plane.
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

/// A rigid pose: rotation (unit quaternion) followed by translation.
///
/// Maps a point `p` to `R p + t`. All lengths in meters, angles in radians.
/// The quaternion is renormalized on construction so long compose chains
/// do not drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    /// Meters, `[x, y, z]`.
    translation: [f64; 3],
    /// Unit quaternion, `[w, x, y, z]`.
    rotation: [f64; 4],
}

impl From<TransformRepr> for RigidTransform {
    fn from(r: TransformRepr) -> Self {
        RigidTransform::new(Vector3::from(r.translation), r.rotation)
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let q = t.rotation.quaternion();
        TransformRepr {
            translation: t.translation.into(),
            rotation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Builds a transform from a translation and a `[w, x, y, z]` quaternion.
    /// The quaternion is normalized; a zero quaternion yields identity rotation.
    pub fn new(translation: Vector3<f64>, quat_wxyz: [f64; 4]) -> Self {
        let [w, x, y, z] = quat_wxyz;
        let q = Quaternion::new(w, x, y, z);
        let rotation = UnitQuaternion::try_new(q, 1e-12).unwrap_or_else(UnitQuaternion::identity);
        Self {
            translation,
            rotation,
        }
    }

    pub fn from_parts(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            translation,
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Rotation of `angle` radians about the world z axis.
    pub fn rotation_z(angle: f64) -> Self {
        Self::from_parts(
            Vector3::zeros(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
        )
    }

    pub fn from_axis_angle(axis: &UnitVector3<f64>, angle: f64) -> Self {
        Self::from_parts(Vector3::zeros(), UnitQuaternion::from_axis_angle(axis, angle))
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Composition `self ∘ other`: the result maps `p` to `self(other(p))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            translation: self.rotation * other.translation + self.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn invert(&self) -> RigidTransform {
        let inv_rot = self.rotation.inverse();
        RigidTransform {
            translation: -(inv_rot * self.translation),
            rotation: inv_rot,
        }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotates then translates every point; labels are preserved in order.
    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply_point(p)).collect(),
            labels: cloud.labels.clone(),
        }
    }

    /// Angle in radians of the rotation carrying `self`'s orientation onto `other`'s.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// Translation distance plus rotation angle to another transform.
    pub fn distance_to(&self, other: &RigidTransform) -> (f64, f64) {
        (
            (self.translation - other.translation).norm(),
            self.rotation_angle_to(other),
        )
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// An ordered set of 3D points, optionally carrying a per-point instance
/// label (the segmentation channel). The empty label is reserved for the
/// table surface.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    labels: Option<Vec<String>>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            labels: None,
        }
    }

    /// Panics if the label list length differs from the point list length.
    pub fn with_labels(points: Vec<Vector3<f64>>, labels: Vec<String>) -> Self {
        assert_eq!(points.len(), labels.len(), "label/point length mismatch");
        Self {
            points,
            labels: Some(labels),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn push(&mut self, p: Vector3<f64>) {
        assert!(self.labels.is_none(), "cannot push unlabeled into labeled cloud");
        self.points.push(p);
    }

    pub fn push_labeled(&mut self, p: Vector3<f64>, label: String) {
        let labels = self
            .labels
            .get_or_insert_with(|| Vec::with_capacity(self.points.len() + 1));
        assert_eq!(labels.len(), self.points.len(), "cloud already has unlabeled points");
        self.points.push(p);
        labels.push(label);
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        t.apply_cloud(self)
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64)
    }

    /// Subset of points carrying the given label.
    pub fn filter_label(&self, label: &str) -> PointCloud {
        match &self.labels {
            None => PointCloud::new(),
            Some(labels) => {
                let points = self
                    .points
                    .iter()
                    .zip(labels)
                    .filter(|(_, l)| l.as_str() == label)
                    .map(|(p, _)| *p)
                    .collect();
                PointCloud::from_points(points)
            }
        }
    }

    pub fn strip_labels(&self) -> PointCloud {
        PointCloud::from_points(self.points.clone())
    }
}

/// An oriented plane `{p : normal · p = offset}` with the normal kept unit
/// length and pointing upward (`normal.z >= 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: UnitVector3<f64>,
    offset: f64,
}

impl Plane {
    /// Normalizes and canonicalizes to an upward normal. Returns an error
    /// for a near-zero normal vector.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self, GeometryError> {
        let norm = normal.norm();
        if norm < 1e-12 {
            return Err(GeometryError::DegenerateInput("zero plane normal"));
        }
        let mut n = normal / norm;
        let mut d = offset / norm;
        if n.z < 0.0 {
            n = -n;
            d = -d;
        }
        Ok(Self {
            normal: UnitVector3::new_unchecked(n),
            offset: d,
        })
    }

    /// Plane through three points. Fails when they are (nearly) collinear.
    pub fn from_three_points(
        a: &Vector3<f64>,
        b: &Vector3<f64>,
        c: &Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let n = (b - a).cross(&(c - a));
        if n.norm() < 1e-12 {
            return Err(GeometryError::DegenerateInput("collinear points"));
        }
        let unit = n / n.norm();
        Self::new(unit, unit.dot(a))
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal.into_inner()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed distance; positive is above the plane (along the normal).
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Height of the plane surface at a world XY location, assuming the
    /// plane is not vertical.
    pub fn z_at(&self, x: f64, y: f64) -> f64 {
        let n = self.normal;
        (self.offset - n.x * x - n.y * y) / n.z
    }
}

/// Least-squares rigid fit of `source` onto `target` (points paired by
/// index): returns the transform minimizing the sum of squared distances,
/// with the reflection corrected so the rotation is proper.
pub fn kabsch_fit(source: &PointCloud, target: &PointCloud) -> Result<RigidTransform, GeometryError> {
    kabsch_fit_points(source.points(), target.points())
}

pub fn kabsch_fit_points(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> Result<RigidTransform, GeometryError> {
    if source.len() != target.len() {
        return Err(GeometryError::DegenerateInput("length mismatch"));
    }
    if source.len() < 3 {
        return Err(GeometryError::DegenerateInput("need at least 3 points"));
    }
    let n = source.len() as f64;
    let sc: Vector3<f64> = source.iter().sum::<Vector3<f64>>() / n;
    let tc: Vector3<f64> = target.iter().sum::<Vector3<f64>>() / n;

    let mut h = Matrix3::<f64>::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s - sc) * (t - tc).transpose();
    }

    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    // Rank < 2 leaves a rotation degree of freedom undetermined.
    if sv[1] <= 1e-10 * sv[0].max(1e-12) {
        return Err(GeometryError::DegenerateInput("rank-deficient covariance"));
    }
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let sign = if det < 0.0 { -1.0 } else { 1.0 };
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let r = v * d * u.transpose();

    let rotation = UnitQuaternion::from_matrix(&r);
    let translation = tc - rotation * sc;
    Ok(RigidTransform::from_parts(translation, rotation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let axis = if axis.norm() < 1e-6 {
            Vector3::z()
        } else {
            axis
        };
        let angle = rng.random_range(-3.0..3.0);
        RigidTransform::from_parts(
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
            UnitQuaternion::from_axis_angle(&UnitVector3::new_normalize(axis), angle),
        )
    }

    #[test]
    fn compose_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_transform(&mut rng);
        let id = RigidTransform::identity();
        let (dt, dr) = id.compose(&t).distance_to(&t);
        assert!(dt < 1e-12 && dr < 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let t = random_transform(&mut rng);
            let (dt, dr) = t.compose(&t.invert()).distance_to(&RigidTransform::identity());
            assert!(dt < 1e-9, "translation residual {dt}");
            assert!(dr < 1e-9, "rotation residual {dr}");
        }
    }

    #[test]
    fn compose_matches_matrix_multiplication() {
        // Oracle: multiply the 3x3 rotation matrices directly.
        let a = RigidTransform::rotation_z(FRAC_PI_2);
        let b = RigidTransform::rotation_z(FRAC_PI_2);
        let composed = a.compose(&b);
        let oracle = a.rotation_matrix() * b.rotation_matrix();
        assert_relative_eq!(composed.rotation_matrix(), oracle, epsilon = 1e-12);
        let expected = RigidTransform::rotation_z(std::f64::consts::PI);
        assert!(composed.rotation_angle_to(&expected) < 1e-12);
    }

    #[test]
    fn apply_identity_and_translation() {
        let cloud = PointCloud::from_points(vec![Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0)]);
        let id = RigidTransform::identity();
        assert_eq!(id.apply_cloud(&cloud), cloud);

        let t = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let moved = t.apply_cloud(&cloud);
        assert_relative_eq!(moved.points()[0], Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn apply_rotation_matches_matrix_oracle() {
        let t = RigidTransform::rotation_z(FRAC_PI_2);
        let p = Vector3::new(1.0, 0.0, 0.0);
        let rotated = t.apply_point(&p);
        assert_relative_eq!(rotated, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-9);
        // Matrix route agrees.
        assert_relative_eq!(t.rotation_matrix() * p, rotated, epsilon = 1e-12);
    }

    #[test]
    fn apply_preserves_labels() {
        let cloud = PointCloud::with_labels(
            vec![Vector3::zeros(), Vector3::x()],
            vec!["a".into(), "b".into()],
        );
        let moved = RigidTransform::from_translation(Vector3::y()).apply_cloud(&cloud);
        assert_eq!(moved.labels().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn kabsch_identity_on_equal_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..50)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let cloud = PointCloud::from_points(pts);
        let fit = kabsch_fit(&cloud, &cloud).unwrap();
        let (dt, dr) = fit.distance_to(&RigidTransform::identity());
        assert!(dt < 1e-9 && dr < 1e-9);
    }

    #[test]
    fn kabsch_recovers_random_rigid_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let g = random_transform(&mut rng);
            let source: Vec<_> = (0..100)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    )
                })
                .collect();
            let target: Vec<_> = source.iter().map(|p| g.apply_point(p)).collect();
            let fit = kabsch_fit_points(&source, &target).unwrap();
            let (dt, dr) = fit.distance_to(&g);
            assert!(dt < 1e-9, "translation error {dt}");
            assert!(dr < 1e-9, "rotation error {dr}");
        }
    }

    #[test]
    fn kabsch_rejects_two_points() {
        let a = vec![Vector3::zeros(), Vector3::x()];
        let b = vec![Vector3::zeros(), Vector3::y()];
        assert!(matches!(
            kabsch_fit_points(&a, &b),
            Err(GeometryError::DegenerateInput(_))
        ));
    }

    #[test]
    fn kabsch_rejects_collinear_points() {
        let a: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let b: Vec<_> = (0..10).map(|i| Vector3::new(0.0, i as f64, 0.0)).collect();
        assert!(matches!(
            kabsch_fit_points(&a, &b),
            Err(GeometryError::DegenerateInput(_))
        ));
    }

    #[test]
    fn kabsch_rotation_is_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let source: Vec<_> = (0..30)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let target: Vec<_> = (0..30)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let fit = kabsch_fit_points(&source, &target).unwrap();
            let r = fit.rotation_matrix();
            assert_relative_eq!(r * r.transpose(), Matrix3::identity(), epsilon = 1e-9);
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-9);

            // Optimality sanity bound: fit residual never exceeds identity residual.
            let res = |t: &RigidTransform| -> f64 {
                source
                    .iter()
                    .zip(&target)
                    .map(|(s, d)| (t.apply_point(s) - d).norm_squared())
                    .sum()
            };
            assert!(res(&fit) <= res(&RigidTransform::identity()) + 1e-12);
        }
    }

    #[test]
    fn plane_canonical_upward() {
        let p = Plane::new(Vector3::new(0.0, 0.0, -2.0), -1.5).unwrap();
        assert_relative_eq!(p.normal(), Vector3::z(), epsilon = 1e-12);
        assert_relative_eq!(p.offset(), 0.75, epsilon = 1e-12);
        assert_relative_eq!(p.signed_distance(&Vector3::new(0.0, 0.0, 1.0)), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn serde_roundtrip() {
        let t = RigidTransform::new(Vector3::new(0.1, -0.2, 0.3), [0.5, 0.5, 0.5, 0.5]);
        let json = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&json).unwrap();
        let (dt, dr) = t.distance_to(&back);
        assert!(dt < 1e-12 && dr < 1e-12);
    }

    proptest! {
        #[test]
        fn roundtrip_apply_invert(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_transform(&mut rng);
            let pts: Vec<_> = (0..20)
                .map(|_| Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ))
                .collect();
            let cloud = PointCloud::from_points(pts.clone());
            let back = t.invert().apply_cloud(&t.apply_cloud(&cloud));
            for (orig, round) in pts.iter().zip(back.points()) {
                prop_assert!((orig - round).amax() < 1e-9);
            }
        }

        #[test]
        fn quaternion_never_denormalized(w in -2.0f64..2.0, x in -2.0f64..2.0,
                                         y in -2.0f64..2.0, z in -2.0f64..2.0) {
            let t = RigidTransform::new(Vector3::zeros(), [w, x, y, z]);
            prop_assert!((t.rotation().norm() - 1.0).abs() < 1e-9);
        }
    }
}
