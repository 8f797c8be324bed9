//! Per-frame observation records and their validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::projection::DepthGrid;
use crate::scalar::Scalar;

/// Seconds since episode start.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub f64);

impl Timestamp {
    pub fn seconds(self) -> f64 {
        self.0
    }
}

/// Joint angles in radians, all arms concatenated in chain order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig<S>(pub Vec<S>);

impl<S: Scalar> JointConfig<S> {
    pub fn zeros(dof: usize) -> Self {
        Self(vec![S::zero(); dof])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }
}

/// Axis-aligned detection box in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<S> {
    pub label: String,
    pub x_min: S,
    pub y_min: S,
    pub x_max: S,
    pub y_max: S,
}

impl<S: Scalar> BoundingBox<S> {
    pub fn new(label: impl Into<String>, x_min: S, y_min: S, x_max: S, y_max: S) -> Self {
        Self { label: label.into(), x_min, y_min, x_max, y_max }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x_min < self.x_max && self.y_min < self.y_max)
    }

    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.x_min >= S::zero()
            && self.y_min >= S::zero()
            && self.x_max <= S::from_usize_lossy(width)
            && self.y_max <= S::from_usize_lossy(height)
    }
}

/// One time-aligned observation: detections, depth and joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<S> {
    pub t: Timestamp,
    pub detections: Vec<BoundingBox<S>>,
    pub depth: DepthGrid<S>,
    pub q: JointConfig<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DegenerateBox { index: usize, label: String },
    BoxOutOfImage { index: usize, label: String },
    DepthShape { expected: (usize, usize), got: (usize, usize) },
    NanDepth { count: usize },
    JointCount { expected: usize, got: usize },
    JointLimit { joint: usize, value: f64, lower: f64, upper: f64 },
    NonFiniteJoint { joint: usize },
    NegativeTimestamp(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DegenerateBox { index, label } => {
                write!(f, "degenerate bounding box #{index} ({label})")
            }
            Violation::BoxOutOfImage { index, label } => {
                write!(f, "bounding box #{index} ({label}) leaves the image")
            }
            Violation::DepthShape { expected, got } => {
                write!(f, "depth grid is {}x{}, camera is {}x{}", got.0, got.1, expected.0, expected.1)
            }
            Violation::NanDepth { count } => write!(f, "NaN depth in {count} pixels"),
            Violation::JointCount { expected, got } => {
                write!(f, "joint configuration has {got} angles, expected {expected}")
            }
            Violation::JointLimit { joint, value, lower, upper } => {
                write!(f, "joint limit: joint {joint} = {value} outside [{lower}, {upper}]")
            }
            Violation::NonFiniteJoint { joint } => write!(f, "joint {joint} is not finite"),
            Violation::NegativeTimestamp(t) => write!(f, "negative timestamp {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Lists every invariant the frame breaks; an empty report means usable.
pub fn validate_frame<S: Scalar>(frame: &FrameRecord<S>, cfg: &PipelineConfig) -> ValidationReport {
    let mut violations = Vec::new();
    let k = &cfg.intrinsics;
    if frame.t.0 < 0.0 {
        violations.push(Violation::NegativeTimestamp(frame.t.0));
    }
    for (index, b) in frame.detections.iter().enumerate() {
        if b.is_degenerate() {
            violations.push(Violation::DegenerateBox { index, label: b.label.clone() });
        } else if !b.inside(k.width, k.height) {
            violations.push(Violation::BoxOutOfImage { index, label: b.label.clone() });
        }
    }
    let got = (frame.depth.width(), frame.depth.height());
    if got != (k.width, k.height) {
        violations.push(Violation::DepthShape { expected: (k.width, k.height), got });
    }
    let nan = frame.depth.nan_count();
    if nan > 0 {
        violations.push(Violation::NanDepth { count: nan });
    }
    if frame.q.len() != cfg.joint_dof {
        violations.push(Violation::JointCount { expected: cfg.joint_dof, got: frame.q.len() });
    }
    let limits = cfg.joint_limits();
    for (joint, v) in frame.q.as_slice().iter().enumerate() {
        let v = v.as_f64();
        if !v.is_finite() {
            violations.push(Violation::NonFiniteJoint { joint });
            continue;
        }
        if let Some(&(lower, upper)) = limits.get(joint) {
            if v < lower || v > upper {
                violations.push(Violation::JointLimit { joint, value: v, lower, upper });
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{JointLimits, PipelineConfig};

    fn frame(cfg: &PipelineConfig) -> FrameRecord<f64> {
        FrameRecord {
            t: Timestamp(0.0),
            detections: vec![BoundingBox::new("egg", 10.0, 10.0, 30.0, 30.0)],
            depth: DepthGrid::filled(cfg.intrinsics.width, cfg.intrinsics.height, 2.0),
            q: JointConfig::zeros(cfg.joint_dof),
        }
    }

    #[test]
    fn well_formed_frame_passes() {
        let cfg = PipelineConfig::default();
        assert!(validate_frame(&frame(&cfg), &cfg).is_ok());
    }

    #[test]
    fn degenerate_box_reported() {
        let cfg = PipelineConfig::default();
        let mut f = frame(&cfg);
        f.detections[0].x_max = f.detections[0].x_min;
        let r = validate_frame(&f, &cfg);
        assert_eq!(r.violations.len(), 1);
        assert!(r.messages()[0].contains("degenerate bounding box"));
    }

    #[test]
    fn joint_limit_breach_reported() {
        let mut cfg = PipelineConfig::default();
        let n = cfg.joint_dof;
        cfg.joint_limits = Some(JointLimits { lower: vec![-1.0; n], upper: vec![1.0; n] });
        let mut f = frame(&cfg);
        f.q.0[3] = 1.0 + 0.1;
        let r = validate_frame(&f, &cfg);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::JointLimit { joint: 3, .. }));
        assert!(r.messages()[0].contains("joint limit"));
        // exactly at the limit is allowed
        f.q.0[3] = 1.0;
        assert!(validate_frame(&f, &cfg).is_ok());
    }

    #[test]
    fn nan_depth_and_shape_reported() {
        let cfg = PipelineConfig::default();
        let mut f = frame(&cfg);
        f.depth.set(5, 0, f64::NAN);
        f.q.0.pop();
        let r = validate_frame(&f, &cfg);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::NanDepth { count: 1 })));
        assert!(r.violations.iter().any(|v| matches!(v, Violation::JointCount { .. })));
    }
}
