//! Synthetic scenes and episodes used as ground truth for every stage.
//!
//! Objects sit at preset nominal positions with per-axis translation jitter
//! and yaw jitter. Frames are rendered by projecting object centers through
//! the head camera: each visible object yields a fixed-size detection box and
//! a constant-depth patch over a far background.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SimConfig};
use crate::error::{Error, Result};
use crate::frame::{BoundingBox, FrameRecord, JointConfig, Timestamp};
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};
use crate::projection::{project, DepthGrid};
use crate::rng::SeededRng;

type P3 = Point3<f64>;

/// An instruction family with its object universe and availability rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionScenario {
    pub name: String,
    /// Position in [`scenarios`]; drives the context one-hot.
    pub index: usize,
    pub universe: Vec<String>,
    /// Objects the instruction needs, in grasp order.
    pub required: Vec<String>,
    pub available_variants: Vec<Vec<String>>,
    pub instruction_text: String,
    /// Collective noun used in feedback text.
    pub item_noun: String,
    pub nominal: Vec<(String, P3)>,
}

impl InstructionScenario {
    pub fn variant(&self, variant: usize) -> Result<&[String]> {
        self.available_variants
            .get(variant)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidVariant { scenario: self.name.clone(), variant })
    }

    pub fn nominal_position(&self, label: &str) -> Option<P3> {
        self.nominal.iter().find(|(l, _)| l == label).map(|(_, p)| *p)
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Food preparation: a spicy fish dish needs fish and pepper.
pub fn food_preparation() -> InstructionScenario {
    InstructionScenario {
        name: "food".into(),
        index: 0,
        universe: strings(&["egg", "tomato", "fish", "pepper"]),
        required: strings(&["fish", "pepper"]),
        available_variants: vec![
            strings(&["egg", "tomato", "fish", "pepper"]),
            strings(&["egg", "tomato", "pepper"]),
            strings(&["egg", "tomato"]),
        ],
        instruction_text: "cook me a spicy fish dish".into(),
        item_noun: "ingredients".into(),
        nominal: vec![
            ("egg".into(), Point3::new(0.60, 0.24, 0.78)),
            ("tomato".into(), Point3::new(0.62, 0.08, 0.78)),
            ("fish".into(), Point3::new(0.64, -0.08, 0.77)),
            ("pepper".into(), Point3::new(0.60, -0.24, 0.78)),
        ],
    }
}

/// Outfit selection: warm weather calls for a T-shirt and shorts.
pub fn outfit_selection() -> InstructionScenario {
    InstructionScenario {
        name: "outfit".into(),
        index: 1,
        universe: strings(&["sweater", "T-shirt", "shorts"]),
        required: strings(&["T-shirt", "shorts"]),
        available_variants: vec![
            strings(&["sweater", "T-shirt", "shorts"]),
            strings(&["sweater", "T-shirt"]),
            strings(&["sweater"]),
        ],
        instruction_text: "dress me for a hot day".into(),
        item_noun: "clothes".into(),
        nominal: vec![
            ("sweater".into(), Point3::new(0.85, 0.25, 1.05)),
            ("T-shirt".into(), Point3::new(0.85, 0.0, 1.05)),
            ("shorts".into(), Point3::new(0.85, -0.25, 1.05)),
        ],
    }
}

pub fn scenarios() -> Vec<InstructionScenario> {
    vec![food_preparation(), outfit_selection()]
}

pub fn scenario_by_name(name: &str) -> Result<InstructionScenario> {
    scenarios().into_iter().find(|s| s.name == name).ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub label: String,
    pub position: P3,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub table_min: P3,
    pub table_max: P3,
}

impl Scene {
    pub fn labels(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.label.as_str()).collect()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.objects.iter().any(|o| o.label == label)
    }

    pub fn within_bounds(&self) -> bool {
        self.objects.iter().all(|o| {
            let p = o.position;
            p.x >= self.table_min.x
                && p.x <= self.table_max.x
                && p.y >= self.table_min.y
                && p.y <= self.table_max.y
                && p.z >= self.table_min.z
                && p.z <= self.table_max.z
        })
    }
}

/// Places the variant's objects at their nominal spots plus uniform jitter of
/// up to `jitter_translation` per horizontal axis and `jitter_yaw` in yaw.
pub fn gen_scene(scenario: &InstructionScenario, variant: usize, sim: &SimConfig, rng: &mut SeededRng) -> Result<Scene> {
    let available = scenario.variant(variant)?;
    let (j, jy) = (sim.jitter_translation, sim.jitter_yaw);
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for (_, p) in &scenario.nominal {
        lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    let margin = Point3::new(j + 0.05, j + 0.05, 0.05);
    let mut objects = Vec::with_capacity(available.len());
    for label in &scenario.universe {
        if !available.contains(label) {
            continue;
        }
        let nominal = scenario.nominal_position(label).expect("preset covers universe");
        let dx = rng.uniform_range(-j, j);
        let dy = rng.uniform_range(-j, j);
        let yaw = rng.uniform_range(-jy, jy);
        objects.push(SceneObject { label: label.clone(), position: nominal + Point3::new(dx, dy, 0.0), yaw });
    }
    Ok(Scene { objects, table_min: lo - margin, table_max: hi + margin })
}

#[derive(Debug, Clone, PartialEq)]
pub enum OmitReason {
    OffImage,
    /// Center pixel covered by a nearer object's patch.
    Occluded,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RenderReport {
    pub omitted: Vec<(String, OmitReason)>,
}

/// Forward model: object centers → detection boxes and depth patches.
pub fn render_frame(
    scene: &Scene,
    q: &JointConfig<f64>,
    t: Timestamp,
    k: &CameraIntrinsics<f64>,
    cam_to_base: &RigidTransform<f64>,
    sim: &SimConfig,
) -> Result<(FrameRecord<f64>, RenderReport)> {
    let half = sim.box_size / 2.0;
    let base_to_cam = cam_to_base.inverse();
    let mut report = RenderReport::default();
    let mut visible = Vec::new();
    for (i, o) in scene.objects.iter().enumerate() {
        let (px, z) = project(base_to_cam.apply(o.position), k)?;
        let b = BoundingBox::new(o.label.clone(), px.u - half, px.v - half, px.u + half, px.v + half);
        if b.inside(k.width, k.height) {
            visible.push((i, b, z, px));
        } else {
            report.omitted.push((o.label.clone(), OmitReason::OffImage));
        }
    }
    let mut depth = DepthGrid::filled(k.width, k.height, sim.far_depth);
    let mut order: Vec<usize> = (0..visible.len()).collect();
    // far to near so nearer patches end up on top
    order.sort_by(|&a, &b| visible[b].2.total_cmp(&visible[a].2).then(a.cmp(&b)));
    for &v in &order {
        depth.fill_box(&visible[v].1, visible[v].2);
    }
    let mut detections = Vec::with_capacity(visible.len());
    for (_, b, z, px) in visible {
        let (c, r) = (px.u.round() as usize, px.v.round() as usize);
        if depth.get(c.min(k.width - 1), r.min(k.height - 1)) == z {
            detections.push(b);
        } else {
            report.omitted.push((b.label.clone(), OmitReason::Occluded));
        }
    }
    Ok((FrameRecord { t, detections, depth, q: q.clone() }, report))
}

/// Cubic ease `3s² − 2s³` between two joint configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTrajectory {
    pub home: Vec<f64>,
    pub goal: Vec<f64>,
    /// Time at which the goal is reached, seconds.
    pub duration: f64,
}

impl ScriptedTrajectory {
    pub fn at(&self, t: f64) -> JointConfig<f64> {
        let s = if self.duration > 0.0 { (t / self.duration).clamp(0.0, 1.0) } else { 0.0 };
        let w = s * s * (3.0 - 2.0 * s);
        JointConfig(self.home.iter().zip(&self.goal).map(|(h, g)| h + (g - h) * w).collect())
    }
}

/// Goal pose reaching toward the first required object present in the scene,
/// or a fixed raised-arm pose when none is.
pub fn scripted_goal(cfg: &PipelineConfig, scenario: &InstructionScenario, scene: &Scene) -> Vec<f64> {
    let mut goal = vec![0.0; cfg.joint_dof];
    let limits = cfg.joint_limits();
    let target = scenario
        .required
        .iter()
        .find_map(|l| scene.objects.iter().find(|o| &o.label == l));
    let offsets: Vec<usize> = cfg
        .chains
        .iter()
        .scan(0, |acc, c| {
            let o = *acc;
            *acc += c.dof();
            Some(o)
        })
        .collect();
    match target {
        Some(o) => {
            let arm = if o.position.y >= 0.0 || cfg.chains.len() < 2 { 0 } else { 1 };
            if let Some(chain) = cfg.chains.get(arm) {
                let base = chain.base.translation;
                let yaw = 0.5 * (o.position.y - base.y).atan2(o.position.x - base.x);
                let reach = 0.5 + (o.position.x - 0.6);
                let pose = [yaw, reach, 0.0, -1.0, 0.0, 0.7 + 0.5 * (o.position.z - 0.78), o.yaw];
                for (k, v) in pose.iter().take(chain.dof()).enumerate() {
                    goal[offsets[arm] + k] = *v;
                }
            }
        }
        None => {
            for (arm, chain) in cfg.chains.iter().enumerate() {
                if chain.dof() > 3 {
                    goal[offsets[arm] + 1] = -0.4;
                    goal[offsets[arm] + 3] = -0.6;
                }
            }
        }
    }
    goal.iter()
        .zip(limits.iter().chain(std::iter::repeat(&(-PI, PI))))
        .map(|(g, &(lo, hi))| g.clamp(lo, hi))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub scenario: InstructionScenario,
    pub variant: usize,
    pub seed: u64,
    pub scene: Scene,
    pub trajectory: Vec<JointConfig<f64>>,
    pub frames: Vec<FrameRecord<f64>>,
    pub reports: Vec<RenderReport>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn episode_scene(cfg: &PipelineConfig, scenario: &InstructionScenario, variant: usize, seed: u64) -> Result<Scene> {
    gen_scene(scenario, variant, &cfg.sim, &mut SeededRng::new(seed).derive(0))
}

pub fn episode_trajectory(cfg: &PipelineConfig, scenario: &InstructionScenario, scene: &Scene, n_frames: usize) -> ScriptedTrajectory {
    ScriptedTrajectory {
        home: vec![0.0; cfg.joint_dof],
        goal: scripted_goal(cfg, scenario, scene),
        duration: n_frames.saturating_sub(1) as f64 / cfg.sim.camera_rate_hz,
    }
}

/// Frame timestamp `i / camera_rate`.
pub fn frame_time(cfg: &PipelineConfig, i: usize) -> Timestamp {
    Timestamp(i as f64 / cfg.sim.camera_rate_hz)
}

/// Renders a scripted episode. Everything is derived from `rng.seed()`, so
/// the same seed reproduces the same episode regardless of stream state.
pub fn gen_episode(
    cfg: &PipelineConfig,
    scenario: &InstructionScenario,
    variant: usize,
    n_frames: usize,
    rng: &SeededRng,
) -> Result<Episode> {
    if n_frames == 0 {
        return Err(Error::EmptyEpisode);
    }
    let seed = rng.seed();
    let scene = episode_scene(cfg, scenario, variant, seed)?;
    let traj = episode_trajectory(cfg, scenario, &scene, n_frames);
    let mut trajectory = Vec::with_capacity(n_frames);
    let mut frames = Vec::with_capacity(n_frames);
    let mut reports = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let t = frame_time(cfg, i);
        let q = traj.at(t.0);
        let (f, r) = render_frame(&scene, &q, t, &cfg.intrinsics, &cfg.extrinsics, &cfg.sim)?;
        trajectory.push(q);
        frames.push(f);
        reports.push(r);
    }
    Ok(Episode { scenario: scenario.clone(), variant, seed, scene, trajectory, frames, reports })
}

/// A random but valid camera model: resolution from a few common sizes,
/// focal lengths in [300, 900] px, principal point in the central 40 %,
/// arbitrary orientation and a translation within ±2 m.
pub fn random_camera(rng: &mut SeededRng) -> (CameraIntrinsics<f64>, RigidTransform<f64>) {
    const SIZES: [(usize, usize); 3] = [(640, 480), (320, 240), (1280, 720)];
    let (w, h) = SIZES[rng.index(SIZES.len())];
    let k = CameraIntrinsics {
        fx: rng.uniform_range(300.0, 900.0),
        fy: rng.uniform_range(300.0, 900.0),
        cx: rng.uniform_range(0.3, 0.7) * w as f64,
        cy: rng.uniform_range(0.3, 0.7) * h as f64,
        width: w,
        height: h,
    };
    let t = RigidTransform::from_rpy_translation(
        rng.uniform_range(-PI, PI),
        rng.uniform_range(-PI / 2.0, PI / 2.0),
        rng.uniform_range(-PI, PI),
        Point3::new(rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0)),
    );
    (k, t)
}

/// `n` objects placed directly in the camera frustum with pairwise disjoint
/// boxes, so every one of them renders and none is occluded.
pub fn frustum_scene(
    n: usize,
    k: &CameraIntrinsics<f64>,
    cam_to_base: &RigidTransform<f64>,
    sim: &SimConfig,
    rng: &mut SeededRng,
) -> Scene {
    let margin = sim.box_size / 2.0 + 2.0;
    let mut pixels: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut objects = Vec::with_capacity(n);
    let mut tries = 0;
    while objects.len() < n && tries < 10_000 {
        tries += 1;
        let u = rng.uniform_range(margin, k.width as f64 - margin);
        let v = rng.uniform_range(margin, k.height as f64 - margin);
        if pixels.iter().any(|&(a, b)| (a - u).abs() <= sim.box_size + 2.0 && (b - v).abs() <= sim.box_size + 2.0) {
            continue;
        }
        let z = rng.uniform_range(0.4, 4.0);
        let p_cam = Point3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z);
        pixels.push((u, v));
        objects.push(SceneObject {
            label: format!("object{}", objects.len()),
            position: cam_to_base.apply(p_cam),
            yaw: 0.0,
        });
    }
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for o in &objects {
        let p = o.position;
        lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    if objects.is_empty() {
        (lo, hi) = (Point3::origin(), Point3::origin());
    }
    Scene { objects, table_min: lo, table_max: hi }
}
