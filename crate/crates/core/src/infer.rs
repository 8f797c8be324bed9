//! Hybrid-reasoning inference loop: reasoning text on scheduled frames only,
//! actions on every frame, with per-stage timing kept apart from outputs.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::context::observation_context;
use crate::cot::{generate_cot, CotHead, TokenVocab};
use crate::error::{Error, Result};
use crate::flow::{sample_actions, FlowExpert};
use crate::gnn::GnnWeights;
use crate::graph::build_graph;
use crate::io::CotArtifact;
use crate::rng::SeededRng;
use crate::sim::Episode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceSchedule {
    pub cot_on_first_frame: bool,
    /// Absent means the first frame only.
    pub cot_period: Option<usize>,
    pub rate_budget_hz: f64,
    /// Sleep to hold `rate_budget_hz`; off means free-running.
    pub pacing: bool,
}

impl Default for InferenceSchedule {
    fn default() -> Self {
        Self { cot_on_first_frame: true, cot_period: None, rate_budget_hz: 10.0, pacing: false }
    }
}

impl InferenceSchedule {
    pub fn check(&self) -> Result<()> {
        if self.cot_period == Some(0) {
            return Err(Error::InvalidConfig("cot_period must be at least 1".into()));
        }
        if !(self.rate_budget_hz > 0.0 && self.rate_budget_hz.is_finite()) {
            return Err(Error::InvalidConfig(format!("rate budget must be positive, got {}", self.rate_budget_hz)));
        }
        Ok(())
    }

    pub fn emits_cot(&self, frame: usize) -> bool {
        match self.cot_period {
            _ if frame == 0 => self.cot_on_first_frame,
            Some(p) => frame.is_multiple_of(p),
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutput {
    pub frame: usize,
    pub t: f64,
    /// `H × J` joint targets.
    pub actions: Vec<Vec<f64>>,
    pub cot: Option<String>,
}

/// Per-frame wall time of each stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameTiming {
    pub graph_build: f64,
    pub encode: f64,
    pub cot_generation: f64,
    pub action_sampling: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub p95_ms: f64,
}

impl StageStats {
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = ((0.95 * s.len() as f64).ceil() as usize).clamp(1, s.len());
        Self { mean_ms: s.iter().sum::<f64>() / s.len() as f64, p95_ms: s[rank - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub repeat: usize,
    pub objects: usize,
    pub graph_build: StageStats,
    pub encode: StageStats,
    /// Over frames that generated reasoning text only.
    pub cot_generation: StageStats,
    pub action_sampling: StageStats,
    pub frame_total: StageStats,
    /// Mean over repeats of frame 0's total.
    pub first_frame_ms: f64,
    /// Median total over frames that skipped reasoning.
    pub steady_median_ms: f64,
    pub steady_p95_ms: f64,
    pub achieved_hz: f64,
    pub paced: bool,
}

impl BenchReport {
    pub fn from_timings(runs: &[Vec<FrameTiming>], schedule: &InferenceSchedule, wall: Duration, objects: usize) -> Self {
        let all: Vec<&FrameTiming> = runs.iter().flatten().collect();
        let pick = |f: fn(&FrameTiming) -> f64| all.iter().map(|t| f(t)).collect::<Vec<_>>();
        let cot: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.iter().enumerate().filter(|(k, _)| schedule.emits_cot(*k)).map(|(_, t)| t.cot_generation))
            .collect();
        let steady: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.iter().enumerate().filter(|(k, _)| !schedule.emits_cot(*k)).map(|(_, t)| t.total))
            .collect();
        let first: Vec<f64> = runs.iter().filter_map(|r| r.first().map(|t| t.total)).collect();
        let secs = wall.as_secs_f64();
        Self {
            frames: runs.first().map_or(0, Vec::len),
            repeat: runs.len(),
            objects,
            graph_build: StageStats::of(&pick(|t| t.graph_build)),
            encode: StageStats::of(&pick(|t| t.encode)),
            cot_generation: StageStats::of(&cot),
            action_sampling: StageStats::of(&pick(|t| t.action_sampling)),
            frame_total: StageStats::of(&pick(|t| t.total)),
            first_frame_ms: if first.is_empty() { 0.0 } else { first.iter().sum::<f64>() / first.len() as f64 },
            steady_median_ms: median(&steady),
            steady_p95_ms: StageStats::of(&steady).p95_ms,
            achieved_hz: if secs > 0.0 { all.len() as f64 / secs } else { 0.0 },
            paced: schedule.pacing,
        }
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

/// Everything the loop needs besides the episode.
#[derive(Debug, Clone)]
pub struct Models {
    pub gnn: GnnWeights<f64>,
    pub expert: FlowExpert<f64>,
    pub cot: CotArtifact,
}

/// Seeded initial weights, shaped by `cfg`.
pub fn init_gnn(cfg: &PipelineConfig, seed: u64) -> GnnWeights<f64> {
    GnnWeights::init(cfg.gnn, &mut SeededRng::new(seed))
}

pub fn init_expert(cfg: &PipelineConfig, seed: u64) -> FlowExpert<f64> {
    FlowExpert::init(cfg.flow.horizon, cfg.joint_dof, crate::context::context_dim(cfg), &cfg.flow, &mut SeededRng::new(seed))
}

pub fn init_cot(cfg: &PipelineConfig, seed: u64) -> CotArtifact {
    let vocab = TokenVocab::standard();
    let head = CotHead::init(crate::context::context_dim(cfg), &vocab, &cfg.cot, &mut SeededRng::new(seed));
    CotArtifact { vocab, head }
}

impl Models {
    pub fn init(cfg: &PipelineConfig, seed: u64) -> Self {
        Self { gnn: init_gnn(cfg, seed), expert: init_expert(cfg, seed), cot: init_cot(cfg, seed) }
    }

    pub fn check(&self, cfg: &PipelineConfig) -> Result<()> {
        self.gnn.check()?;
        self.expert.check()?;
        self.cot.head.check()?;
        let dim = crate::context::context_dim(cfg);
        if self.gnn.dims != cfg.gnn || self.expert.context_dim != dim || self.cot.head.context_dim != dim {
            return Err(Error::ArtifactLoad(format!(
                "artifacts expect contexts of {} / {}, configuration gives {dim}",
                self.expert.context_dim, self.cot.head.context_dim
            )));
        }
        if self.expert.dof != cfg.joint_dof {
            return Err(Error::ArtifactLoad(format!("expert has {} joints, configuration {}", self.expert.dof, cfg.joint_dof)));
        }
        Ok(())
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs the pipeline over every frame. Outputs depend only on the inputs and
/// `seed`: frame `k` samples actions from `SeededRng::new(seed).derive(k)`.
pub fn run_inference_loop(
    cfg: &PipelineConfig,
    episode: &Episode,
    models: &Models,
    schedule: &InferenceSchedule,
    seed: u64,
) -> Result<(Vec<FrameOutput>, Vec<FrameTiming>)> {
    if episode.frames.is_empty() {
        return Err(Error::EmptyEpisode);
    }
    schedule.check()?;
    models.check(cfg)?;
    let root = SeededRng::new(seed);
    let period = Duration::from_secs_f64(1.0 / schedule.rate_budget_hz);
    let loop_start = Instant::now();
    let mut outputs = Vec::with_capacity(episode.frames.len());
    let mut timings = Vec::with_capacity(episode.frames.len());
    for (k, frame) in episode.frames.iter().enumerate() {
        let start = Instant::now();
        let mut tm = FrameTiming::default();

        let s = Instant::now();
        let (graph, _) = build_graph(frame, &cfg.intrinsics, &cfg.extrinsics, &cfg.chains, &cfg.graph)?;
        tm.graph_build = ms(s);

        let s = Instant::now();
        let ctx = observation_context(&graph, &models.gnn, frame.q.as_slice(), episode.scenario.index)?;
        tm.encode = ms(s);

        let cot = if schedule.emits_cot(k) {
            let s = Instant::now();
            let ids = generate_cot(&models.cot.head, &ctx, cfg.cot.max_len)?;
            let text = models.cot.vocab.detokenize(&ids)?;
            tm.cot_generation = ms(s);
            Some(text)
        } else {
            None
        };

        let s = Instant::now();
        let mut rng = root.derive(k as u64);
        let chunk = sample_actions(&models.expert, &ctx, cfg.flow.euler_steps, &mut rng)?;
        tm.action_sampling = ms(s);
        tm.total = ms(start);

        outputs.push(FrameOutput { frame: k, t: frame.t.0, actions: chunk.rows(), cot });
        timings.push(tm);
        if schedule.pacing {
            let due = loop_start + period * (k as u32 + 1);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
    }
    Ok((outputs, timings))
}

/// Repeats the loop free-running (unless the schedule paces) and summarizes.
pub fn bench(cfg: &PipelineConfig, episode: &Episode, models: &Models, schedule: &InferenceSchedule, seed: u64, repeat: usize) -> Result<BenchReport> {
    let mut runs = Vec::with_capacity(repeat.max(1));
    let start = Instant::now();
    for _ in 0..repeat.max(1) {
        runs.push(run_inference_loop(cfg, episode, models, schedule, seed)?.1);
    }
    let objects = episode.frames.iter().map(|f| f.detections.len()).max().unwrap_or(0);
    Ok(BenchReport::from_timings(&runs, schedule, start.elapsed(), objects))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_arithmetic() {
        let d = InferenceSchedule::default();
        assert_eq!((0..10).filter(|&k| d.emits_cot(k)).count(), 1);
        let p = InferenceSchedule { cot_period: Some(5), ..d.clone() };
        assert_eq!((0..10).filter(|&k| p.emits_cot(k)).collect::<Vec<_>>(), vec![0, 5]);
        for f in 1..40 {
            for per in 1..9 {
                let s = InferenceSchedule { cot_period: Some(per), ..d.clone() };
                assert_eq!((0..f).filter(|&k| s.emits_cot(k)).count(), 1 + (f - 1) / per);
            }
        }
        assert!(InferenceSchedule { cot_period: Some(0), ..d.clone() }.check().is_err());
        assert!(InferenceSchedule { rate_budget_hz: 0.0, ..d }.check().is_err());
    }

    #[test]
    fn stats() {
        let s = StageStats::of(&(1..=20).map(f64::from).collect::<Vec<_>>());
        assert_eq!(s.mean_ms, 10.5);
        assert_eq!(s.p95_ms, 19.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
