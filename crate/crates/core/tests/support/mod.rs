//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use poseflow::geometry::Point3;
use poseflow::gnn::GnnWeights;
use poseflow::graph::{GraphNode, NodeKind, PoseObjectGraph};
use poseflow::{SeededRng, Timestamp};

/// Graph encoder written out with nested vectors and explicit loops: lift,
/// then twice `ReLU(Σ_j Ā_ij · (LN(h_j)·W) + b)`, with Ā built entry by
/// entry from degrees of `A + I`.
pub fn dense_encode(g: &PoseObjectGraph<f64>, w: &GnnWeights<f64>) -> Vec<Vec<f64>> {
    let n = g.nodes.len();
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j) in &g.edges {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let abar: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect()).collect();

    let affine = |x: &[f64], m: &poseflow::linalg::Dense<f64>| -> Vec<f64> {
        (0..m.w.cols()).map(|c| (0..x.len()).map(|r| x[r] * m.w[(r, c)]).sum::<f64>()).collect()
    };
    let mut h: Vec<Vec<f64>> = g
        .nodes
        .iter()
        .map(|node| {
            let p = node.position;
            let mut x = vec![p.x, p.y, p.z, 0.0, 0.0, 0.0];
            x[3 + node.kind.index()] = 1.0;
            let mut y = affine(&x, &w.lift);
            for (v, b) in y.iter_mut().zip(&w.lift.b) {
                *v += b;
            }
            y
        })
        .collect();
    for layer in [&w.layer1, &w.layer2] {
        let normed: Vec<Vec<f64>> = h
            .iter()
            .map(|r| {
                let m = r.iter().sum::<f64>() / r.len() as f64;
                let var = r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / r.len() as f64;
                r.iter().map(|v| (v - m) / (var + 1e-5).sqrt()).collect()
            })
            .collect();
        let xw: Vec<Vec<f64>> = normed.iter().map(|r| affine(r, layer)).collect();
        h = (0..n)
            .map(|i| {
                (0..layer.w.cols())
                    .map(|c| ((0..n).map(|j| abar[i][j] * xw[j][c]).sum::<f64>() + layer.b[c]).max(0.0))
                    .collect()
            })
            .collect();
    }
    h
}

/// Random graph with `n` nodes of random kinds, positions in ±1 m and each
/// undirected edge present with probability 0.4.
pub fn random_graph(n: usize, rng: &mut SeededRng) -> PoseObjectGraph<f64> {
    let nodes = (0..n)
        .map(|id| GraphNode {
            id,
            kind: NodeKind::ALL[rng.index(3)],
            label: format!("n{id}"),
            position: Point3::new(rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)),
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.uniform() < 0.4 {
                edges.push((i, j));
            }
        }
    }
    PoseObjectGraph { t: Timestamp(0.0), nodes, edges }
}

/// GNN weights with non-zero biases so bias handling is exercised.
pub fn random_weights(dims: poseflow::config::GnnDims, rng: &mut SeededRng) -> GnnWeights<f64> {
    let mut w = GnnWeights::init(dims, rng);
    for b in w.lift.b.iter_mut().chain(w.layer1.b.iter_mut()).chain(w.layer2.b.iter_mut()) {
        *b = rng.uniform_range(-0.3, 0.3);
    }
    w
}

pub fn max_diff(a: &[Vec<f64>], b: &poseflow::Matrix) -> f64 {
    let mut worst = 0.0f64;
    for (i, r) in a.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            worst = worst.max((v - b[(i, j)]).abs());
        }
    }
    worst
}
