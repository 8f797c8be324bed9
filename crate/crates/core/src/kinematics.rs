//! Forward kinematics for serial chains in the standard (distal)
//! Denavit-Hartenberg convention: `T_i = Rz(θ_i + offset)·Tz(d)·Tx(a)·Rx(α)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};
use crate::scalar::Scalar;

/// One revolute link in standard DH form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhLink<S> {
    pub a: S,
    pub alpha: S,
    pub d: S,
    pub theta_offset: S,
}

impl<S: Scalar> DhLink<S> {
    pub fn new(a: S, alpha: S, d: S, theta_offset: S) -> Self {
        Self { a, alpha, d, theta_offset }
    }
}

/// Serial arm mounted at `base` (expressed in the robot base frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct KinematicChain<S> {
    pub name: String,
    pub base: RigidTransform<S>,
    pub links: Vec<DhLink<S>>,
}

impl<S: Scalar> KinematicChain<S> {
    pub fn dof(&self) -> usize {
        self.links.len()
    }
}

/// Link transform for joint variable `theta`.
pub fn dh_transform<S: Scalar>(link: &DhLink<S>, theta: S) -> RigidTransform<S> {
    let (st, ct) = (theta + link.theta_offset).sin_cos();
    let (sa, ca) = link.alpha.sin_cos();
    RigidTransform {
        rotation: [[ct, -st * ca, st * sa], [st, ct * ca, -ct * sa], [S::zero(), sa, ca]],
        translation: Point3::new(link.a * ct, link.a * st, link.d),
    }
}

/// Base-frame pose of every frame along the chain: the mount, then one per
/// link. The last entry is the end-effector.
pub fn fk_frames<S: Scalar>(chain: &KinematicChain<S>, q: &[S]) -> Result<Vec<RigidTransform<S>>> {
    if q.len() != chain.dof() {
        return Err(Error::DofMismatch { expected: chain.dof(), got: q.len() });
    }
    let mut frames = Vec::with_capacity(chain.dof() + 1);
    let mut acc = chain.base;
    frames.push(acc);
    for (link, &theta) in chain.links.iter().zip(q) {
        acc = acc.compose(&dh_transform(link, theta));
        frames.push(acc);
    }
    Ok(frames)
}

/// Joint-frame origins in chain order followed by the end-effector origin
/// (`links + 1` points).
pub fn fk_positions<S: Scalar>(chain: &KinematicChain<S>, q: &[S]) -> Result<Vec<Point3<S>>> {
    Ok(fk_frames(chain, q)?.into_iter().map(|f| f.translation).collect())
}

/// Splits a concatenated joint vector into per-chain slices.
pub fn split_joints<'a, S: Scalar>(chains: &[KinematicChain<S>], q: &'a [S]) -> Result<Vec<&'a [S]>> {
    let expected: usize = chains.iter().map(KinematicChain::dof).sum();
    if q.len() != expected {
        return Err(Error::DofMismatch { expected, got: q.len() });
    }
    let mut out = Vec::with_capacity(chains.len());
    let mut start = 0;
    for c in chains {
        out.push(&q[start..start + c.dof()]);
        start += c.dof();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_arm_links;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    type M4 = [[f64; 4]; 4];

    fn mul4(a: &M4, b: &M4) -> M4 {
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    }
    fn rz(t: f64) -> M4 {
        [[t.cos(), -t.sin(), 0.0, 0.0], [t.sin(), t.cos(), 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    }
    fn rx(t: f64) -> M4 {
        [[1.0, 0.0, 0.0, 0.0], [0.0, t.cos(), -t.sin(), 0.0], [0.0, t.sin(), t.cos(), 0.0], [0.0, 0.0, 0.0, 1.0]]
    }
    fn tz(d: f64) -> M4 {
        [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, d], [0.0, 0.0, 0.0, 1.0]]
    }
    fn tx(a: f64) -> M4 {
        [[1.0, 0.0, 0.0, a], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    }
    /// Elementary-factor oracle: Rz(θ)·Tz(d)·Tx(a)·Rx(α).
    fn oracle_link(l: &DhLink<f64>, theta: f64) -> M4 {
        mul4(&mul4(&mul4(&rz(theta + l.theta_offset), &tz(l.d)), &tx(l.a)), &rx(l.alpha))
    }
    fn max_diff(a: &M4, b: &M4) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn planar(n: usize) -> KinematicChain<f64> {
        KinematicChain {
            name: "planar".into(),
            base: RigidTransform::identity(),
            links: vec![DhLink::new(1.0, 0.0, 0.0, 0.0); n],
        }
    }

    fn arm() -> KinematicChain<f64> {
        KinematicChain {
            name: "arm".into(),
            base: RigidTransform::from_rpy_translation(0.1, 0.2, -0.3, Point3::new(0.1, 0.2, 1.0)),
            links: default_arm_links(),
        }
    }

    #[test]
    fn zero_link_is_identity() {
        let t = dh_transform(&DhLink::new(0.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(t, RigidTransform::identity());
    }

    #[test]
    fn pure_a_is_x_translation() {
        let t = dh_transform(&DhLink::new(1.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(t.translation, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(t.rotation, RigidTransform::<f64>::identity().rotation);
    }

    #[test]
    fn general_link_matches_factor_product() {
        let l = DhLink::new(1.0, FRAC_PI_2, 0.5, 0.0);
        let got = dh_transform(&l, FRAC_PI_4).to_homogeneous();
        assert!(max_diff(&got, &oracle_link(&l, FRAC_PI_4)) < 1e-15);
    }

    #[test]
    fn planar_two_link() {
        let c = planar(2);
        let p = fk_positions(&c, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)]);
        let ee = *fk_positions(&c, &[FRAC_PI_2, 0.0]).unwrap().last().unwrap();
        let t1 = FRAC_PI_2;
        let want = Point3::new(t1.cos() + t1.cos(), t1.sin() + t1.sin(), 0.0);
        assert!(ee.max_abs_diff(want) < 1e-15);
        assert!(ee.max_abs_diff(Point3::new(0.0, 2.0, 0.0)) < 1e-15);
    }

    #[test]
    fn dof_mismatch() {
        assert_eq!(fk_positions(&planar(2), &[0.0]), Err(Error::DofMismatch { expected: 2, got: 1 }));
    }

    fn oracle_chain(c: &KinematicChain<f64>, q: &[f64]) -> Vec<M4> {
        let mut acc = c.base.to_homogeneous();
        let mut out = vec![acc];
        for (l, &t) in c.links.iter().zip(q) {
            acc = mul4(&acc, &oracle_link(l, t));
            out.push(acc);
        }
        out
    }

    #[test]
    fn seven_link_home_pose_matches_oracle() {
        let c = arm();
        let q = [0.0; 7];
        let frames = fk_frames(&c, &q).unwrap();
        for (f, o) in frames.iter().zip(oracle_chain(&c, &q)) {
            assert!(max_diff(&f.to_homogeneous(), &o) < 1e-12);
        }
        assert_eq!(fk_positions(&c, &q).unwrap().len(), 8);
    }

    proptest! {
        #[test]
        fn fk_matches_homogeneous_product(q in prop::array::uniform7(-PI..PI)) {
            let c = arm();
            let frames = fk_frames(&c, &q).unwrap();
            for (f, o) in frames.iter().zip(oracle_chain(&c, &q)) {
                prop_assert!(max_diff(&f.to_homogeneous(), &o) < 1e-12);
            }
        }

        #[test]
        fn consecutive_origins_within_reach(q in prop::array::uniform7(-PI..PI)) {
            let c = arm();
            let p = fk_positions(&c, &q).unwrap();
            for (k, l) in c.links.iter().enumerate() {
                prop_assert!(p[k].distance(p[k + 1]) <= l.a.abs() + l.d.abs() + 1e-12);
            }
        }

        #[test]
        fn link_length_independent_of_later_joints(
            q in prop::array::uniform7(-PI..PI),
            r in prop::array::uniform7(-PI..PI),
            k in 0usize..7,
        ) {
            let c = arm();
            let mut q2 = q;
            q2[(k + 1)..].copy_from_slice(&r[(k + 1)..]);
            let a = fk_positions(&c, &q).unwrap();
            let b = fk_positions(&c, &q2).unwrap();
            prop_assert!((a[k].distance(a[k + 1]) - b[k].distance(b[k + 1])).abs() < 1e-12);
        }
    }

    #[test]
    fn split_joints_by_chain() {
        let chains = vec![planar(2), planar(3)];
        let q = [1.0, 2.0, 3.0, 4.0, 5.0];
        let parts = split_joints(&chains, &q).unwrap();
        assert_eq!(parts, vec![&q[..2], &q[2..]]);
        assert!(split_joints(&chains, &q[..4]).is_err());
    }
}
