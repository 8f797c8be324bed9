//! Pipeline configuration and its JSON file format.
//!
//! Every section has defaults, so a config file only needs the keys it
//! overrides. Rotations are serialized as 9 row-major reals.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform, ROTATION_TOLERANCE};
use crate::graph::GraphOptions;
use crate::kinematics::{DhLink, KinematicChain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub rotation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rotation: ROTATION_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub root: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { root: 0x5EED }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub camera_rate_hz: f64,
    pub control_rate_hz: f64,
    /// Detection box side, pixels.
    pub box_size: f64,
    /// Depth written outside detection boxes, meters.
    pub far_depth: f64,
    /// Per-axis translation jitter bound (x, y), meters.
    pub jitter_translation: f64,
    /// Yaw jitter bound, radians.
    pub jitter_yaw: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            camera_rate_hz: 30.0,
            control_rate_hz: 150.0,
            box_size: 20.0,
            far_depth: 10.0,
            jitter_translation: 0.10,
            jitter_yaw: 30f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnDims {
    pub d: usize,
    pub h: usize,
    pub d_out: usize,
}

impl Default for GnnDims {
    fn default() -> Self {
        Self { d: 32, h: 32, d_out: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub horizon: usize,
    pub hidden: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub euler_steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            hidden: 64,
            alpha: 1.5,
            beta: 1.0,
            sigma: 1.0,
            euler_steps: 10,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CotConfig {
    /// Future-frame interval, frames.
    pub interval: usize,
    pub window: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub dropout_p: f64,
    pub lambda_cot: f64,
    pub lambda_action: f64,
}

impl Default for CotConfig {
    fn default() -> Self {
        Self { interval: 30, window: 3, hidden: 64, max_len: 320, dropout_p: 0.5, lambda_cot: 1.0, lambda_action: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub intrinsics: CameraIntrinsics<f64>,
    /// Head camera to robot base.
    pub extrinsics: RigidTransform<f64>,
    pub chains: Vec<KinematicChain<f64>>,
    pub joint_dof: usize,
    /// Absent means ±π on every joint.
    pub joint_limits: Option<JointLimits>,
    pub tolerances: Tolerances,
    pub seeds: Seeds,
    pub graph: GraphOptions,
    pub gnn: GnnDims,
    pub sim: SimConfig,
    pub flow: FlowConfig,
    pub cot: CotConfig,
}

/// 7-DOF arm in standard DH parameters with non-zero joint offsets.
pub fn default_arm_links() -> Vec<DhLink<f64>> {
    vec![
        DhLink::new(0.0, -FRAC_PI_2, 0.333, 0.0),
        DhLink::new(0.0, FRAC_PI_2, 0.0, 0.15),
        DhLink::new(0.0825, FRAC_PI_2, 0.316, 0.0),
        DhLink::new(-0.0825, -FRAC_PI_2, 0.0, -0.4),
        DhLink::new(0.0, FRAC_PI_2, 0.384, 0.0),
        DhLink::new(0.088, FRAC_PI_2, 0.0, 0.3),
        DhLink::new(0.0, 0.0, 0.107, FRAC_PI_2 / 2.0),
    ]
}

/// Head camera pose: 1.45 m up, looking forward and down at the table.
pub fn default_extrinsics() -> RigidTransform<f64> {
    let fwd = Point3::new(1.0, 0.0, -0.9);
    let z = fwd.scale(1.0 / fwd.norm());
    let x = Point3::new(0.0, -1.0, 0.0);
    // y = z × x keeps the frame right-handed
    let y = Point3::new(z.y * x.z - z.z * x.y, z.z * x.x - z.x * x.z, z.x * x.y - z.y * x.x);
    RigidTransform {
        rotation: [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]],
        translation: Point3::new(0.05, 0.0, 1.45),
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let arm = |name: &str, y: f64| KinematicChain {
            name: name.to_string(),
            base: RigidTransform::from_rpy_translation(0.0, FRAC_PI_2, 0.0, Point3::new(0.1, y, 1.05)),
            links: default_arm_links(),
        };
        Self {
            intrinsics: CameraIntrinsics { fx: 525.0, fy: 525.0, cx: 319.5, cy: 239.5, width: 640, height: 480 },
            extrinsics: default_extrinsics(),
            chains: vec![arm("left", 0.22), arm("right", -0.22)],
            joint_dof: 14,
            joint_limits: None,
            tolerances: Tolerances::default(),
            seeds: Seeds::default(),
            graph: GraphOptions::default(),
            gnn: GnnDims::default(),
            sim: SimConfig::default(),
            flow: FlowConfig::default(),
            cot: CotConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Per-joint `(lower, upper)` limits, radians.
    pub fn joint_limits(&self) -> Vec<(f64, f64)> {
        match &self.joint_limits {
            Some(l) => l.lower.iter().copied().zip(l.upper.iter().copied()).collect(),
            None => vec![(-PI, PI); self.joint_dof],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.check()?;
        let tol = self.tolerances.rotation;
        self.extrinsics.check(tol)?;
        for c in &self.chains {
            c.base.check(tol).map_err(|e| Error::InvalidConfig(format!("chain `{}`: {e}", c.name)))?;
        }
        let total: usize = self.chains.iter().map(|c| c.dof()).sum();
        if total != self.joint_dof {
            return Err(Error::InvalidConfig(format!(
                "chains carry {total} joints but joint_dof = {}",
                self.joint_dof
            )));
        }
        if let Some(l) = &self.joint_limits {
            if l.lower.len() != self.joint_dof || l.upper.len() != self.joint_dof {
                return Err(Error::InvalidConfig("joint_limits length must equal joint_dof".into()));
            }
            if l.lower.iter().zip(&l.upper).any(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::InvalidConfig("joint_limits need lower <= upper".into()));
            }
        }
        if self.graph.depth_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig("graph.depth_window must be odd".into()));
        }
        if !(self.flow.alpha > 0.0 && self.flow.beta > 0.0 && self.flow.sigma > 0.0) {
            return Err(Error::InvalidConfig("flow alpha, beta, sigma must be positive".into()));
        }
        if self.flow.horizon == 0 || self.flow.euler_steps == 0 || self.cot.interval == 0 {
            return Err(Error::InvalidConfig("horizon, euler_steps and cot.interval must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.cot.dropout_p) {
            return Err(Error::InvalidConfig("cot.dropout_p must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
