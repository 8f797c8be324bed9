//! Supervision pairs derived from recorded episodes.

use crate::config::PipelineConfig;
use crate::context::frame_context;
use crate::cot::{make_cot_label, TokenVocab};
use crate::error::{Error, Result};
use crate::flow::{ActionChunk, FlowSample};
use crate::gnn::GnnWeights;
use crate::io::CotRecord;
use crate::sim::Episode;

/// `q_{t+1..t+H}`, repeating the final configuration past the episode end.
pub fn action_chunk(ep: &Episode, t: usize, horizon: usize) -> Result<ActionChunk<f64>> {
    let n = ep.frames.len();
    if n == 0 {
        return Err(Error::EmptyEpisode);
    }
    let rows: Vec<Vec<f64>> = (1..=horizon).map(|k| ep.frames[(t + k).min(n - 1)].q.0.clone()).collect();
    ActionChunk::from_rows(&rows)
}

pub fn episode_contexts(cfg: &PipelineConfig, gnn: &GnnWeights<f64>, ep: &Episode) -> Result<Vec<Vec<f64>>> {
    ep.frames.iter().map(|f| frame_context(cfg, gnn, f, ep.scenario.index).map(|(_, _, c)| c)).collect()
}

/// One sample every `stride` frames of every episode.
pub fn flow_samples(cfg: &PipelineConfig, gnn: &GnnWeights<f64>, episodes: &[Episode], stride: usize) -> Result<Vec<FlowSample<f64>>> {
    let mut out = Vec::new();
    for ep in episodes {
        let ctx = episode_contexts(cfg, gnn, ep)?;
        for t in (0..ep.frames.len()).step_by(stride.max(1)) {
            out.push(FlowSample { action: action_chunk(ep, t, cfg.flow.horizon)?, context: ctx[t].clone() });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Reasoning labels at frames `0, Δt, 2Δt, …` of every episode.
pub fn cot_records(cfg: &PipelineConfig, gnn: &GnnWeights<f64>, vocab: &TokenVocab, episodes: &[Episode]) -> Result<Vec<CotRecord>> {
    let mut out = Vec::new();
    for ep in episodes {
        for t in (0..ep.frames.len()).step_by(cfg.cot.interval.max(1)) {
            let label = make_cot_label(&ep.scene, &ep.scenario, ep, t, cfg.cot.interval)?;
            let text = label.text();
            let (_, _, context) = frame_context(cfg, gnn, &ep.frames[t], ep.scenario.index)?;
            out.push(CotRecord { context, tokens: vocab.tokenize(&text)?, text });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}
