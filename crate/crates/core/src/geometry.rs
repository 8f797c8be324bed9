//! Points, rigid transforms and pinhole intrinsics.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Maximum deviation from orthonormality accepted for rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A point (or free vector) in 3D, meters. Serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[S; 3]", into = "[S; 3]")]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct Point3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S> From<[S; 3]> for Point3<S> {
    fn from([x, y, z]: [S; 3]) -> Self {
        Self { x, y, z }
    }
}

impl<S> From<Point3<S>> for [S; 3] {
    fn from(p: Point3<S>) -> Self {
        [p.x, p.y, p.z]
    }
}

impl<S: Scalar> Point3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn origin() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn to_array(self) -> [S; 3] {
        self.into()
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> S {
        (self - o).norm()
    }

    pub fn scale(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Largest per-axis absolute difference.
    pub fn max_abs_diff(self, o: Self) -> S {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }
}

impl<S: Scalar> Add for Point3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Scalar> Sub for Point3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Scalar> Neg for Point3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

pub type Mat3<S> = [[S; 3]; 3];

fn mat_mul<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn transpose<S: Scalar>(a: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

fn det<S: Scalar>(m: &Mat3<S>) -> S {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Proper rigid motion `p ↦ R·p + t`.
///
/// JSON form is `{"rotation": [9 reals, row-major], "translation": [x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr<S>", into = "TransformRepr<S>")]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct RigidTransform<S> {
    pub rotation: Mat3<S>,
    pub translation: Point3<S>,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr<S> {
    rotation: Vec<S>,
    translation: [S; 3],
}

impl<S: Scalar> TryFrom<TransformRepr<S>> for RigidTransform<S> {
    type Error = String;
    fn try_from(r: TransformRepr<S>) -> std::result::Result<Self, String> {
        if r.rotation.len() != 9 {
            return Err(format!("rotation needs 9 row-major entries, got {}", r.rotation.len()));
        }
        let mut rot = [[S::zero(); 3]; 3];
        for (k, v) in r.rotation.into_iter().enumerate() {
            rot[k / 3][k % 3] = v;
        }
        Ok(Self { rotation: rot, translation: r.translation.into() })
    }
}

impl<S: Scalar> From<RigidTransform<S>> for TransformRepr<S> {
    fn from(t: RigidTransform<S>) -> Self {
        Self { rotation: t.rotation.iter().flatten().copied().collect(), translation: t.translation.into() }
    }
}

impl<S: Scalar> RigidTransform<S> {
    pub fn identity() -> Self {
        let (o, z) = (S::one(), S::zero());
        Self { rotation: [[o, z, z], [z, o, z], [z, z, o]], translation: Point3::origin() }
    }

    /// Builds a transform, rejecting rotations that are not proper orthonormal
    /// within `tol`.
    pub fn new(rotation: Mat3<S>, translation: Point3<S>, tol: f64) -> Result<Self> {
        let t = Self { rotation, translation };
        t.check(tol)?;
        Ok(t)
    }

    pub fn from_translation(x: S, y: S, z: S) -> Self {
        Self { translation: Point3::new(x, y, z), ..Self::identity() }
    }

    pub fn rot_x(angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (S::one(), S::zero());
        Self { rotation: [[o, z, z], [z, c, -s], [z, s, c]], translation: Point3::origin() }
    }

    pub fn rot_y(angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (S::one(), S::zero());
        Self { rotation: [[c, z, s], [z, o, z], [-s, z, c]], translation: Point3::origin() }
    }

    pub fn rot_z(angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (S::one(), S::zero());
        Self { rotation: [[c, -s, z], [s, c, z], [z, z, o]], translation: Point3::origin() }
    }

    /// Rotation `Rz(yaw)·Ry(pitch)·Rx(roll)` followed by translation.
    pub fn from_rpy_translation(roll: S, pitch: S, yaw: S, t: Point3<S>) -> Self {
        let r = Self::rot_z(yaw).compose(&Self::rot_y(pitch)).compose(&Self::rot_x(roll));
        Self { translation: t, ..r }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: mat_mul(&self.rotation, &other.rotation),
            translation: self.rotate(other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let inv = Self { rotation: rt, translation: Point3::origin() };
        Self { rotation: rt, translation: -inv.rotate(self.translation) }
    }

    pub fn rotate(&self, p: Point3<S>) -> Point3<S> {
        let r = &self.rotation;
        Point3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
        )
    }

    /// `R·p + t`.
    pub fn apply(&self, p: Point3<S>) -> Point3<S> {
        self.rotate(p) + self.translation
    }

    /// Homogeneous 4×4 form, row-major.
    pub fn to_homogeneous(&self) -> [[S; 4]; 4] {
        let r = &self.rotation;
        let t = self.translation;
        let (z, o) = (S::zero(), S::one());
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [z, z, z, o],
        ]
    }

    /// Largest entry of `|RᵀR − I|` together with `|det R − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = mat_mul(&transpose(&self.rotation), &self.rotation);
        let mut e = 0.0f64;
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                e = e.max((v.as_f64() - want).abs());
            }
        }
        e.max((det(&self.rotation).as_f64() - 1.0).abs())
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let finite = self.rotation.iter().flatten().all(|v| v.is_finite()) && self.translation.is_finite();
        if !finite {
            return Err(Error::InvalidConfig("transform has non-finite entries".into()));
        }
        let e = self.orthonormality_error();
        if e > tol {
            return Err(Error::InvalidConfig(format!("rotation is not proper orthonormal (error {e:.3e} > {tol:.1e})")));
        }
        Ok(())
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: usize,
    pub height: usize,
}

impl<S: Scalar> CameraIntrinsics<S> {
    pub fn new(fx: S, fy: S, cx: S, cy: S, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.check()?;
        Ok(k)
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.fx > S::zero()
            && self.fy > S::zero()
            && self.width > 0
            && self.height > 0
            && self.cx >= S::zero()
            && self.cx < S::from_usize_lossy(self.width)
            && self.cy >= S::zero()
            && self.cy < S::from_usize_lossy(self.height);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "intrinsics need fx, fy > 0 and principal point inside the {}x{} image",
                self.width, self.height
            )))
        }
    }
}

impl<S: Scalar> Mul<Point3<S>> for &RigidTransform<S> {
    type Output = Point3<S>;
    fn mul(self, p: Point3<S>) -> Point3<S> {
        self.apply(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_transform() -> impl Strategy<Value = RigidTransform<f64>> {
        (-3.2f64..3.2, -1.5f64..1.5, -3.2f64..3.2, prop::array::uniform3(-5.0f64..5.0))
            .prop_map(|(r, p, y, t)| RigidTransform::from_rpy_translation(r, p, y, t.into()))
    }

    proptest! {
        #[test]
        fn inverse_undoes_transform(t in arb_transform(), p in prop::array::uniform3(-10.0f64..10.0)) {
            let p: Point3<f64> = p.into();
            let back = t.inverse().apply(t.apply(p));
            prop_assert!(back.max_abs_diff(p) < 1e-12);
        }

        #[test]
        fn composition_stays_rigid(a in arb_transform(), b in arb_transform()) {
            prop_assert!(a.compose(&b).orthonormality_error() < 1e-12);
            prop_assert!(a.compose(&a.inverse()).translation.norm() < 1e-12);
        }
    }

    #[test]
    fn json_uses_row_major_rotation() {
        let t = RigidTransform::rot_z(std::f64::consts::FRAC_PI_2).compose(&RigidTransform::from_translation(1.0, 2.0, 3.0));
        let s = serde_json::to_string(&t).unwrap();
        let back: RigidTransform<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["rotation"].as_array().unwrap().len(), 9);
        assert!((v["rotation"][1].as_f64().unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_reflection() {
        let mut t = RigidTransform::<f64>::identity();
        t.rotation[2][2] = -1.0;
        assert!(t.check(ROTATION_TOLERANCE).is_err());
        let bad: std::result::Result<RigidTransform<f64>, _> = serde_json::from_str(r#"{"rotation":[1,0,0],"translation":[0,0,0]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).is_ok());
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 640.0, 240.0, 640, 480).is_err());
    }
}
