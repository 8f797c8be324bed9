//! Two-layer graph encoder. Each layer applies layer normalization, a
//! symmetric-normalized graph convolution and ReLU:
//! `H' = ReLU(Ā · LN(H) · W + b)` with `Ā = D̃^{-1/2} (A + I) D̃^{-1/2}`.

use serde::{Deserialize, Serialize};

use crate::config::GnnDims;
use crate::error::{Error, Result};
use crate::graph::{adjacency_matrix, NodeKind, PoseObjectGraph};
use crate::linalg::{Dense, Matrix};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Raw per-node input: position (3) followed by the node-kind one-hot (3).
pub const INPUT_DIM: usize = 6;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct GnnWeights<S> {
    pub dims: GnnDims,
    pub lift: Dense<S>,
    pub layer1: Dense<S>,
    pub layer2: Dense<S>,
}

impl<S: Scalar> GnnWeights<S> {
    pub fn zeros(dims: GnnDims) -> Self {
        Self {
            dims,
            lift: Dense::zeros(INPUT_DIM, dims.d),
            layer1: Dense::zeros(dims.d, dims.h),
            layer2: Dense::zeros(dims.h, dims.d_out),
        }
    }

    pub fn init(dims: GnnDims, rng: &mut SeededRng) -> Self {
        Self {
            dims,
            lift: Dense::glorot(INPUT_DIM, dims.d, rng),
            layer1: Dense::glorot(dims.d, dims.h, rng),
            layer2: Dense::glorot(dims.h, dims.d_out, rng),
        }
    }

    pub fn check(&self) -> Result<()> {
        let GnnDims { d, h, d_out } = self.dims;
        let want = [(INPUT_DIM, d), (d, h), (h, d_out)];
        for (layer, (i, o)) in [&self.lift, &self.layer1, &self.layer2].into_iter().zip(want) {
            layer.check()?;
            if layer.w.shape() != (i, o) {
                return Err(Error::ShapeMismatch(format!("layer is {:?}, expected {:?}", layer.w.shape(), (i, o))));
            }
        }
        Ok(())
    }
}

/// Raw inputs `[x, y, z, onehot(kind)]`, one row per node.
pub fn node_inputs<S: Scalar>(g: &PoseObjectGraph<S>) -> Matrix<S> {
    let mut x = Matrix::zeros(g.len(), INPUT_DIM);
    for (i, n) in g.nodes.iter().enumerate() {
        let row = x.row_mut(i);
        row[..3].copy_from_slice(&n.position.to_array());
        row[3 + n.kind.index()] = S::one();
    }
    x
}

pub fn initial_embedding<S: Scalar>(g: &PoseObjectGraph<S>, w: &GnnWeights<S>) -> Result<Matrix<S>> {
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    lift(&node_inputs(g), &w.lift)
}

fn lift<S: Scalar>(x: &Matrix<S>, layer: &Dense<S>) -> Result<Matrix<S>> {
    let mut h = x.matmul(&layer.w)?;
    h.add_row(&layer.b)?;
    Ok(h)
}

/// Per-row `(x − mean) / sqrt(var + eps)`, population variance, no affine.
pub fn layer_norm<S: Scalar>(h: &Matrix<S>) -> Matrix<S> {
    let eps = S::lit(LAYER_NORM_EPS);
    let n = S::from_usize_lossy(h.cols());
    let mut out = h.clone();
    for i in 0..h.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().copied().sum::<S>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
        let inv = S::one() / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
    out
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` for an adjacency without self-loops.
pub fn normalized_adjacency<S: Scalar>(a: &Matrix<S>) -> Result<Matrix<S>> {
    if a.rows() != a.cols() {
        return Err(Error::ShapeMismatch(format!("adjacency is {}x{}", a.rows(), a.cols())));
    }
    let n = a.rows();
    let mut at = a.clone();
    for i in 0..n {
        at[(i, i)] = at[(i, i)] + S::one();
    }
    let inv_sqrt: Vec<S> = (0..n).map(|i| S::one() / at.row(i).iter().copied().sum::<S>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            at[(i, j)] = at[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(at)
}

fn conv_normalized<S: Scalar>(h: &Matrix<S>, a_norm: &Matrix<S>, layer: &Dense<S>) -> Result<Matrix<S>> {
    if a_norm.rows() != h.rows() {
        return Err(Error::ShapeMismatch(format!("adjacency has {} nodes, features {}", a_norm.rows(), h.rows())));
    }
    if layer.w.rows() != h.cols() || layer.b.len() != layer.w.cols() {
        return Err(Error::ShapeMismatch(format!(
            "weights {:?} with bias {} for {}-dim features",
            layer.w.shape(),
            layer.b.len(),
            h.cols()
        )));
    }
    let mut out = a_norm.matmul(h)?.matmul(&layer.w)?;
    out.add_row(&layer.b)?;
    Ok(out)
}

/// `Ā · H · W + b` for the raw adjacency `a` (self-loops are added here).
pub fn graph_conv<S: Scalar>(h: &Matrix<S>, a: &Matrix<S>, w: &Matrix<S>, b: &[S]) -> Result<Matrix<S>> {
    let layer = Dense { w: w.clone(), b: b.to_vec() };
    conv_normalized(h, &normalized_adjacency(a)?, &layer)
}

fn relu<S: Scalar>(m: &Matrix<S>) -> Matrix<S> {
    m.map(|v| v.max(S::zero()))
}

/// Encoder body on an explicit adjacency (no self-loops) and lifted features.
pub fn encode_features<S: Scalar>(a: &Matrix<S>, h0: &Matrix<S>, w: &GnnWeights<S>) -> Result<Matrix<S>> {
    let a_norm = normalized_adjacency(a)?;
    let h1 = relu(&conv_normalized(&layer_norm(h0), &a_norm, &w.layer1)?);
    Ok(relu(&conv_normalized(&layer_norm(&h1), &a_norm, &w.layer2)?))
}

pub fn encode<S: Scalar>(g: &PoseObjectGraph<S>, w: &GnnWeights<S>) -> Result<Matrix<S>> {
    let h0 = initial_embedding(g, w)?;
    encode_features(&adjacency_matrix(g, false), &h0, w)
}

/// Mean over node rows.
pub fn pooled_embedding<S: Scalar>(h: &Matrix<S>) -> Result<Vec<S>> {
    if h.rows() == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = S::from_usize_lossy(h.rows());
    let mut acc = vec![S::zero(); h.cols()];
    for i in 0..h.rows() {
        for (a, &v) in acc.iter_mut().zip(h.row(i)) {
            *a = *a + v;
        }
    }
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Kind-count summary used in diagnostics.
pub fn kind_histogram<S: Scalar>(g: &PoseObjectGraph<S>) -> [usize; 3] {
    let mut h = [0; 3];
    for k in NodeKind::ALL {
        h[k.index()] = g.count(k);
    }
    h
}
