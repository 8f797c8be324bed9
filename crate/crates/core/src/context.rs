//! Conditioning vector shared by the action expert and the reasoning head:
//! pooled graph embedding ⊕ joint state ⊕ scenario one-hot.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::frame::FrameRecord;
use crate::gnn::{encode, pooled_embedding, GnnWeights};
use crate::graph::{build_graph, BuildReport, PoseObjectGraph};
use crate::scalar::Scalar;
use crate::sim::scenarios;

pub fn scenario_count() -> usize {
    scenarios().len()
}

pub fn context_dim(cfg: &PipelineConfig) -> usize {
    cfg.gnn.d_out + cfg.joint_dof + scenario_count()
}

pub fn observation_context<S: Scalar>(
    graph: &PoseObjectGraph<S>,
    weights: &GnnWeights<S>,
    q: &[S],
    scenario_index: usize,
) -> Result<Vec<S>> {
    let n = scenario_count();
    if scenario_index >= n {
        return Err(Error::ShapeMismatch(format!("scenario index {scenario_index} of {n}")));
    }
    let mut ctx = pooled_embedding(&encode(graph, weights)?)?;
    ctx.extend_from_slice(q);
    ctx.extend((0..n).map(|i| if i == scenario_index { S::one() } else { S::zero() }));
    Ok(ctx)
}

/// Graph and context for one recorded frame.
pub fn frame_context(
    cfg: &PipelineConfig,
    weights: &GnnWeights<f64>,
    frame: &FrameRecord<f64>,
    scenario_index: usize,
) -> Result<(PoseObjectGraph<f64>, BuildReport, Vec<f64>)> {
    let (g, report) = build_graph(frame, &cfg.intrinsics, &cfg.extrinsics, &cfg.chains, &cfg.graph)?;
    let ctx = observation_context(&g, weights, frame.q.as_slice(), scenario_index)?;
    Ok((g, report, ctx))
}
