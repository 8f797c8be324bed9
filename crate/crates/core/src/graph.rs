//! Per-frame pose-object graph: backprojected object centers plus
//! forward-kinematics robot nodes, fully connected object↔end-effector.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameRecord, Timestamp};
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};
use crate::kinematics::{fk_positions, split_joints, KinematicChain};
use crate::linalg::Matrix;
use crate::projection::{backproject, bbox_center, depth_at, transform_point};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Object,
    EndEffector,
    Joint,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Object, NodeKind::EndEffector, NodeKind::Joint];

    pub fn index(self) -> usize {
        match self {
            NodeKind::Object => 0,
            NodeKind::EndEffector => 1,
            NodeKind::Joint => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct GraphNode<S> {
    pub id: usize,
    pub kind: NodeKind,
    pub label: String,
    pub position: Point3<S>,
}

/// Node and edge layout. JSON field order is fixed: `t, nodes, edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct PoseObjectGraph<S> {
    pub t: Timestamp,
    pub nodes: Vec<GraphNode<S>>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphOptions {
    /// Emit every joint origin of a chain, not only its end-effector.
    pub joints_as_nodes: bool,
    /// Connect consecutive nodes along each chain (needs `joints_as_nodes`).
    pub kinematic_edges: bool,
    /// Neighbourhood for the invalid-depth median fallback (odd).
    pub depth_window: usize,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self { joints_as_nodes: true, kinematic_edges: true, depth_window: 3 }
    }
}

impl GraphOptions {
    /// End-effector nodes only, bipartite edges only.
    pub fn paper_literal() -> Self {
        Self { joints_as_nodes: false, kinematic_edges: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedObject {
    pub detection: usize,
    pub label: String,
    pub reason: Error,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildReport {
    pub skipped: Vec<SkippedObject>,
}

impl<S: Scalar> PoseObjectGraph<S> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn to_json(&self) -> String
    where
        S: Serialize,
    {
        serde_json::to_string(self).expect("graph serializes")
    }

    /// Structural invariants: dense ids, no self-loops, no duplicate edges.
    pub fn check(&self) -> Result<()> {
        if self.nodes.iter().enumerate().any(|(i, n)| n.id != i) {
            return Err(Error::ShapeMismatch("node ids are not dense 0..N-1".into()));
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.edges {
            if a == b || a >= self.len() || b >= self.len() {
                return Err(Error::ShapeMismatch(format!("invalid edge ({a}, {b})")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::ShapeMismatch(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(())
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let nodes = perm
            .iter()
            .enumerate()
            .map(|(new, &old)| GraphNode { id: new, ..self.nodes[old].clone() })
            .collect();
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (inv[a], inv[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        edges.sort_unstable();
        Self { t: self.t, nodes, edges }
    }
}

/// Builds the graph for one frame. Objects whose depth lookup or
/// backprojection fails are skipped and listed in the report.
pub fn build_graph<S: Scalar>(
    frame: &FrameRecord<S>,
    k: &CameraIntrinsics<S>,
    t: &RigidTransform<S>,
    chains: &[KinematicChain<S>],
    opts: &GraphOptions,
) -> Result<(PoseObjectGraph<S>, BuildReport)> {
    let q_parts = split_joints(chains, frame.q.as_slice())?;
    let mut nodes = Vec::new();
    let mut report = BuildReport::default();
    for (detection, b) in frame.detections.iter().enumerate() {
        let center = bbox_center(b);
        let p = depth_at(&frame.depth, center, opts.depth_window).and_then(|d| backproject(center, d, k));
        match p {
            Ok(p_head) => nodes.push(GraphNode {
                id: nodes.len(),
                kind: NodeKind::Object,
                label: b.label.clone(),
                position: transform_point(t, p_head),
            }),
            Err(reason) => report.skipped.push(SkippedObject { detection, label: b.label.clone(), reason }),
        }
    }
    let n_objects = nodes.len();
    let mut ee_ids = Vec::with_capacity(chains.len());
    let mut chain_edges = Vec::new();
    for (chain, q) in chains.iter().zip(q_parts) {
        let points = fk_positions(chain, q)?;
        let last = points.len() - 1;
        if opts.joints_as_nodes {
            let first = nodes.len();
            for (j, p) in points.into_iter().enumerate() {
                let (kind, label) = if j == last {
                    (NodeKind::EndEffector, format!("{}/ee", chain.name))
                } else {
                    (NodeKind::Joint, format!("{}/j{j}", chain.name))
                };
                nodes.push(GraphNode { id: nodes.len(), kind, label, position: p });
            }
            ee_ids.push(first + last);
            if opts.kinematic_edges {
                chain_edges.extend((first..first + last).map(|i| (i, i + 1)));
            }
        } else {
            let id = nodes.len();
            nodes.push(GraphNode {
                id,
                kind: NodeKind::EndEffector,
                label: format!("{}/ee", chain.name),
                position: points[last],
            });
            ee_ids.push(id);
        }
    }
    let mut edges = Vec::with_capacity(n_objects * ee_ids.len() + chain_edges.len());
    for o in 0..n_objects {
        for &e in &ee_ids {
            edges.push((o, e));
        }
    }
    edges.extend(chain_edges);
    Ok((PoseObjectGraph { t: frame.t, nodes, edges }, report))
}

/// Symmetric 0/1 adjacency; diagonal set iff `self_loops`.
pub fn adjacency_matrix<S: Scalar>(g: &PoseObjectGraph<S>, self_loops: bool) -> Matrix<S> {
    let n = g.len();
    let mut a = if self_loops { Matrix::identity(n) } else { Matrix::zeros(n, n) };
    for &(i, j) in &g.edges {
        a[(i, j)] = S::one();
        a[(j, i)] = S::one();
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::frame::{BoundingBox, JointConfig};
    use crate::projection::DepthGrid;

    fn frame(cfg: &PipelineConfig, n_obj: usize) -> FrameRecord<f64> {
        let mut depth = DepthGrid::filled(cfg.intrinsics.width, cfg.intrinsics.height, 1.5);
        // hole under the last detection forces the fallback path elsewhere
        depth.set(0, 0, 0.0);
        FrameRecord {
            t: Timestamp(0.5),
            detections: (0..n_obj)
                .map(|i| BoundingBox::new(format!("o{i}"), 100.0 + 30.0 * i as f64, 100.0, 120.0 + 30.0 * i as f64, 120.0))
                .collect(),
            depth,
            q: JointConfig::zeros(cfg.joint_dof),
        }
    }

    fn build(cfg: &PipelineConfig, f: &FrameRecord<f64>, opts: GraphOptions) -> PoseObjectGraph<f64> {
        build_graph(f, &cfg.intrinsics, &cfg.extrinsics, &cfg.chains, &opts).unwrap().0
    }

    #[test]
    fn paper_literal_counts() {
        let cfg = PipelineConfig::default();
        let g = build(&cfg, &frame(&cfg, 2), GraphOptions::paper_literal());
        assert_eq!(g.len(), 4);
        assert_eq!(g.edges.len(), 2 * 2);
        assert_eq!(g.count(NodeKind::EndEffector), 2);
        g.check().unwrap();
    }

    #[test]
    fn default_mode_counts() {
        let cfg = PipelineConfig::default();
        let g = build(&cfg, &frame(&cfg, 3), GraphOptions::default());
        assert_eq!(g.len(), 3 + 2 * 8);
        assert_eq!(g.edges.len(), 3 * 2 + 2 * 7);
        assert_eq!(g.count(NodeKind::Joint), 14);
        g.check().unwrap();
    }

    #[test]
    fn no_objects_no_bipartite_edges() {
        let cfg = PipelineConfig::default();
        let g = build(&cfg, &frame(&cfg, 0), GraphOptions::paper_literal());
        assert_eq!(g.len(), 2);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn failed_depth_skips_object() {
        let cfg = PipelineConfig::default();
        let mut f = frame(&cfg, 2);
        let (c0, r0, c1, r1) = f.depth.box_pixels(&f.detections[1]);
        for r in r0..=r1 {
            for c in c0..=c1 {
                f.depth.set(c, r, 0.0);
            }
        }
        let (g, report) = build_graph(&f, &cfg.intrinsics, &cfg.extrinsics, &cfg.chains, &GraphOptions::paper_literal()).unwrap();
        assert_eq!(g.count(NodeKind::Object), 1);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].label, "o1");
        assert!(matches!(report.skipped[0].reason, Error::NoValidDepth { .. }));
    }

    #[test]
    fn dof_mismatch_propagates() {
        let cfg = PipelineConfig::default();
        let mut f = frame(&cfg, 1);
        f.q.0.push(0.0);
        let r = build_graph(&f, &cfg.intrinsics, &cfg.extrinsics, &cfg.chains, &GraphOptions::default());
        assert!(matches!(r, Err(Error::DofMismatch { .. })));
    }

    #[test]
    fn adjacency_definitions() {
        let cfg = PipelineConfig::default();
        let g = build(&cfg, &frame(&cfg, 2), GraphOptions::paper_literal());
        let a = adjacency_matrix::<f64>(&g, false);
        let want = [[0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]];
        assert_eq!(a.to_rows(), want.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        assert_eq!(a, a.transpose());
        let a1 = adjacency_matrix::<f64>(&g, true);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a1[(i, j)], want[i][j] + if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn adjacency_without_edges() {
        let g = PoseObjectGraph::<f64> {
            t: Timestamp(0.0),
            nodes: (0..3)
                .map(|id| GraphNode { id, kind: NodeKind::Joint, label: format!("j{id}"), position: Point3::origin() })
                .collect(),
            edges: vec![],
        };
        assert_eq!(adjacency_matrix::<f64>(&g, false), Matrix::zeros(3, 3));
        assert_eq!(adjacency_matrix::<f64>(&g, true), Matrix::identity(3));
    }

    #[test]
    fn serialization_is_stable() {
        let cfg = PipelineConfig::default();
        let f = frame(&cfg, 2);
        let a = build(&cfg, &f, GraphOptions::default()).to_json();
        let b = build(&cfg, &f, GraphOptions::default()).to_json();
        assert_eq!(a, b);
        assert!(a.starts_with(r#"{"t":0.5,"nodes":[{"id":0,"kind":"object","label":"o0","position":["#));
        let back: PoseObjectGraph<f64> = serde_json::from_str(&a).unwrap();
        assert_eq!(back.to_json(), a);
    }

    #[test]
    fn permutation_round_trip() {
        let cfg = PipelineConfig::default();
        let g = build(&cfg, &frame(&cfg, 2), GraphOptions::default());
        let perm: Vec<usize> = (0..g.len()).rev().collect();
        let p = g.permuted(&perm);
        p.check().unwrap();
        assert_eq!(p.nodes[0].label, g.nodes[g.len() - 1].label);
        assert_eq!(p.permuted(&perm).edges.len(), g.edges.len());
    }
}
