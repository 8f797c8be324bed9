//! Conditional flow-matching action expert.
//!
//! Training pairs a clean chunk `A` with noise `ε ~ N(0, σ²I)` and a time
//! `τ ~ Beta(α, β)`, forms `A^τ = τA + (1 − τ)ε`, and regresses the network
//! `v(A^τ, context, τ)` onto `u = ε − A`. Since `dA^τ/dτ = A − ε = −u`,
//! sampling integrates `A ← A − v·Δτ` from `τ = 0` (pure noise) to `τ = 1`.
//!
//! The vector field is a two-hidden-layer tanh MLP whose gradients are
//! derived by hand; [`grad_check`] compares them with central differences.

use serde::{Deserialize, Serialize};

use crate::config::FlowConfig;
use crate::error::{Error, Result};
use crate::linalg::{Dense, Matrix};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// `horizon × dof` block of future joint targets, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk<S> {
    horizon: usize,
    dof: usize,
    data: Vec<S>,
}

impl<S: Scalar> ActionChunk<S> {
    pub fn new(horizon: usize, dof: usize, data: Vec<S>) -> Result<Self> {
        if horizon == 0 || data.len() != horizon * dof {
            return Err(Error::ShapeMismatch(format!("{} values for a {horizon}x{dof} chunk", data.len())));
        }
        Ok(Self { horizon, dof, data })
    }

    pub fn zeros(horizon: usize, dof: usize) -> Self {
        Self { horizon, dof, data: vec![S::zero(); horizon * dof] }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let dof = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dof) {
            return Err(Error::ShapeMismatch("ragged action rows".into()));
        }
        Self::new(rows.len(), dof, rows.iter().flatten().copied().collect())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<S>> {
        self.data.chunks(self.dof.max(1)).map(<[S]>::to_vec).collect()
    }

    pub fn l2_distance(&self, other: &Self) -> S {
        self.data.iter().zip(&other.data).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<S>().sqrt()
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if (self.horizon, self.dof) != (other.horizon, other.dof) {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{} chunks",
                self.horizon, self.dof, other.horizon, other.dof
            )));
        }
        Ok(())
    }

    fn with_data(&self, data: Vec<S>) -> Self {
        Self { horizon: self.horizon, dof: self.dof, data }
    }
}

/// `τ·A + (1 − τ)·ε`, exact at both endpoints.
pub fn interpolate<S: Scalar>(a: &ActionChunk<S>, eps: &ActionChunk<S>, tau: S) -> Result<ActionChunk<S>> {
    a.same_shape(eps)?;
    if tau == S::one() {
        return Ok(a.clone());
    }
    if tau == S::zero() {
        return Ok(eps.clone());
    }
    let one_minus = S::one() - tau;
    Ok(a.with_data(a.data.iter().zip(&eps.data).map(|(&x, &e)| tau * x + one_minus * e).collect()))
}

/// Conditional target `u = ε − A`.
pub fn target_field<S: Scalar>(a: &ActionChunk<S>, eps: &ActionChunk<S>) -> Result<ActionChunk<S>> {
    a.same_shape(eps)?;
    Ok(a.with_data(a.data.iter().zip(&eps.data).map(|(&x, &e)| e - x).collect()))
}

pub fn sample_tau(alpha: f64, beta: f64, rng: &mut SeededRng) -> Result<f64> {
    rng.beta(alpha, beta)
}

/// One supervised pair: a clean chunk and its conditioning vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample<S> {
    pub action: ActionChunk<S>,
    pub context: Vec<S>,
}

/// The stochastic inputs of one loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw<S> {
    pub tau: S,
    pub eps: ActionChunk<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct FlowExpert<S> {
    pub horizon: usize,
    pub dof: usize,
    pub context_dim: usize,
    pub hidden: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub lr: f64,
    pub momentum: f64,
    pub l1: Dense<S>,
    pub l2: Dense<S>,
    pub l3: Dense<S>,
    #[serde(skip)]
    velocity: Option<Vec<S>>,
}

/// Gradient with the expert's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGrads<S> {
    pub l1: Dense<S>,
    pub l2: Dense<S>,
    pub l3: Dense<S>,
}

impl<S: Scalar> FlowGrads<S> {
    pub fn flat(&self) -> Vec<S> {
        self.l1.params().chain(self.l2.params()).chain(self.l3.params()).copied().collect()
    }
}

struct Trace<S> {
    x: Vec<S>,
    h1: Vec<S>,
    h2: Vec<S>,
    out: Vec<S>,
}

impl<S: Scalar> FlowExpert<S> {
    pub fn init(horizon: usize, dof: usize, context_dim: usize, cfg: &FlowConfig, rng: &mut SeededRng) -> Self {
        let d_a = horizon * dof;
        let input = d_a + context_dim + 1;
        Self {
            horizon,
            dof,
            context_dim,
            hidden: cfg.hidden,
            alpha: cfg.alpha,
            beta: cfg.beta,
            sigma: cfg.sigma,
            lr: cfg.lr,
            momentum: cfg.momentum,
            l1: Dense::glorot(input, cfg.hidden, rng),
            l2: Dense::glorot(cfg.hidden, cfg.hidden, rng),
            l3: Dense::glorot(cfg.hidden, d_a, rng),
            velocity: None,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.horizon * self.dof
    }

    pub fn input_dim(&self) -> usize {
        self.action_dim() + self.context_dim + 1
    }

    pub fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count() + self.l3.param_count()
    }

    pub fn params(&self) -> Vec<S> {
        self.l1.params().chain(self.l2.params()).chain(self.l3.params()).copied().collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.l1.params_mut().chain(self.l2.params_mut()).chain(self.l3.params_mut())
    }

    pub fn check(&self) -> Result<()> {
        let want = [
            (self.input_dim(), self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, self.action_dim()),
        ];
        for (l, shape) in [&self.l1, &self.l2, &self.l3].into_iter().zip(want) {
            l.check()?;
            if l.w.shape() != shape {
                return Err(Error::ShapeMismatch(format!("expert layer {:?}, expected {shape:?}", l.w.shape())));
            }
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidShapeParam { alpha: self.alpha, beta: self.beta });
        }
        Ok(())
    }

    fn input(&self, a: &[S], context: &[S], tau: S) -> Result<Vec<S>> {
        if a.len() != self.action_dim() || context.len() != self.context_dim {
            return Err(Error::ShapeMismatch(format!(
                "expert expects action {} + context {}, got {} + {}",
                self.action_dim(),
                self.context_dim,
                a.len(),
                context.len()
            )));
        }
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(a);
        x.extend_from_slice(context);
        x.push(tau);
        Ok(x)
    }

    fn trace(&self, x: Vec<S>) -> Trace<S> {
        let h1: Vec<S> = self.l1.forward_vec(&x).into_iter().map(S::tanh).collect();
        let h2: Vec<S> = self.l2.forward_vec(&h1).into_iter().map(S::tanh).collect();
        let out = self.l3.forward_vec(&h2);
        Trace { x, h1, h2, out }
    }

    /// `v(a, context, τ)`.
    pub fn velocity(&self, a: &[S], context: &[S], tau: S) -> Result<Vec<S>> {
        Ok(self.trace(self.input(a, context, tau)?).out)
    }

    /// Draws `(τ, ε)` for every batch element, in batch order.
    pub fn draw_noise(&self, n: usize, rng: &mut SeededRng) -> Result<Vec<NoiseDraw<S>>> {
        (0..n)
            .map(|_| {
                let tau = S::lit(sample_tau(self.alpha, self.beta, rng)?);
                let eps = (0..self.action_dim()).map(|_| S::lit(self.sigma * rng.standard_normal())).collect();
                Ok(NoiseDraw { tau, eps: ActionChunk { horizon: self.horizon, dof: self.dof, data: eps } })
            })
            .collect()
    }

    /// Mean squared regression error for fixed draws, with its gradient.
    pub fn loss_and_grad(&self, batch: &[FlowSample<S>], draws: &[NoiseDraw<S>]) -> Result<(S, FlowGrads<S>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if draws.len() != batch.len() {
            return Err(Error::ShapeMismatch(format!("{} draws for {} samples", draws.len(), batch.len())));
        }
        let mut g = FlowGrads {
            l1: Dense::zeros(self.l1.input_dim(), self.hidden),
            l2: Dense::zeros(self.hidden, self.hidden),
            l3: Dense::zeros(self.hidden, self.action_dim()),
        };
        let scale = S::two() / S::from_usize_lossy(batch.len());
        let mut total = S::zero();
        let mut dh2 = vec![S::zero(); self.hidden];
        let mut dh1 = vec![S::zero(); self.hidden];
        for (s, d) in batch.iter().zip(draws) {
            let a_tau = interpolate(&s.action, &d.eps, d.tau)?;
            let u = target_field(&s.action, &d.eps)?;
            let tr = self.trace(self.input(a_tau.as_slice(), &s.context, d.tau)?);
            let resid: Vec<S> = tr.out.iter().zip(u.as_slice()).map(|(&o, &t)| o - t).collect();
            total = total + resid.iter().map(|&r| r * r).sum::<S>();
            let dout: Vec<S> = resid.iter().map(|&r| r * scale).collect();
            outer_acc(&mut g.l3, &tr.h2, &dout);
            back_through(&self.l3.w, &dout, &mut dh2);
            for (v, &h) in dh2.iter_mut().zip(&tr.h2) {
                *v = *v * (S::one() - h * h);
            }
            outer_acc(&mut g.l2, &tr.h1, &dh2);
            back_through(&self.l2.w, &dh2, &mut dh1);
            for (v, &h) in dh1.iter_mut().zip(&tr.h1) {
                *v = *v * (S::one() - h * h);
            }
            outer_acc(&mut g.l1, &tr.x, &dh1);
        }
        Ok((total / S::from_usize_lossy(batch.len()), g))
    }

    /// Loss only, for fixed draws.
    pub fn loss_with(&self, batch: &[FlowSample<S>], draws: &[NoiseDraw<S>]) -> Result<S> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if draws.len() != batch.len() {
            return Err(Error::ShapeMismatch(format!("{} draws for {} samples", draws.len(), batch.len())));
        }
        let mut total = S::zero();
        for (s, d) in batch.iter().zip(draws) {
            let a_tau = interpolate(&s.action, &d.eps, d.tau)?;
            let u = target_field(&s.action, &d.eps)?;
            let v = self.velocity(a_tau.as_slice(), &s.context, d.tau)?;
            total = total + v.iter().zip(u.as_slice()).map(|(&o, &t)| (o - t) * (o - t)).sum::<S>();
        }
        Ok(total / S::from_usize_lossy(batch.len()))
    }

    /// Momentum update `m ← μm + g; θ ← θ − lr·m`.
    pub fn apply_gradient(&mut self, g: &FlowGrads<S>, lr: S) {
        let flat = g.flat();
        let mu = S::lit(self.momentum);
        let vel = self.velocity.get_or_insert_with(|| vec![S::zero(); flat.len()]);
        for (m, &gi) in vel.iter_mut().zip(&flat) {
            *m = mu * *m + gi;
        }
        let step: Vec<S> = vel.iter().map(|&m| lr * m).collect();
        for (p, s) in self.params_mut().zip(step) {
            *p = *p - s;
        }
    }

    pub fn reset_momentum(&mut self) {
        self.velocity = None;
    }
}

fn outer_acc<S: Scalar>(layer: &mut Dense<S>, x: &[S], d: &[S]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == S::zero() {
            continue;
        }
        for (w, &dj) in layer.w.row_mut(i).iter_mut().zip(d) {
            *w = *w + xi * dj;
        }
    }
    for (b, &dj) in layer.b.iter_mut().zip(d) {
        *b = *b + dj;
    }
}

/// `out = W · d` (gradient flowing back through `y = x·W`).
fn back_through<S: Scalar>(w: &Matrix<S>, d: &[S], out: &mut [S]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = w.row(i).iter().zip(d).map(|(&a, &b)| a * b).sum();
    }
}

/// Flow-matching loss with fresh `(τ, ε)` per element.
pub fn fm_loss<S: Scalar>(expert: &FlowExpert<S>, batch: &[FlowSample<S>], rng: &mut SeededRng) -> Result<S> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let draws = expert.draw_noise(batch.len(), rng)?;
    expert.loss_with(batch, &draws)
}

/// One gradient step; returns the loss before the update.
pub fn train_step<S: Scalar>(expert: &mut FlowExpert<S>, batch: &[FlowSample<S>], lr: S, rng: &mut SeededRng) -> Result<S> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let draws = expert.draw_noise(batch.len(), rng)?;
    let (loss, g) = expert.loss_and_grad(batch, &draws)?;
    expert.apply_gradient(&g, lr);
    Ok(loss)
}

/// Minibatch training with replacement; returns the per-step loss curve.
pub fn train<S: Scalar>(
    expert: &mut FlowExpert<S>,
    data: &[FlowSample<S>],
    steps: usize,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<S>> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let lr = S::lit(expert.lr);
    let mut curve = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch: Vec<FlowSample<S>> = (0..batch_size.max(1)).map(|_| data[rng.index(data.len())].clone()).collect();
        curve.push(train_step(expert, &batch, lr, rng)?);
    }
    Ok(curve)
}

/// Euler integration of `dA/dτ = −v` from `start` at `τ = 0` to `τ = 1`.
pub fn integrate_from<S: Scalar>(expert: &FlowExpert<S>, context: &[S], steps: usize, start: ActionChunk<S>) -> Result<ActionChunk<S>> {
    let steps = steps.max(1);
    let n = S::from_usize_lossy(steps);
    let dt = S::one() / n;
    let mut a = start;
    for k in 0..steps {
        let tau = S::from_usize_lossy(k) / n;
        let v = expert.velocity(a.as_slice(), context, tau)?;
        for (x, vi) in a.data.iter_mut().zip(v) {
            *x = *x - vi * dt;
        }
    }
    Ok(a)
}

/// Samples a chunk starting from `ε ~ N(0, σ²I)`.
pub fn sample_actions<S: Scalar>(expert: &FlowExpert<S>, context: &[S], steps: usize, rng: &mut SeededRng) -> Result<ActionChunk<S>> {
    let eps = (0..expert.action_dim()).map(|_| S::lit(expert.sigma * rng.standard_normal())).collect();
    integrate_from(expert, context, steps, ActionChunk { horizon: expert.horizon, dof: expert.dof, data: eps })
}

/// Largest relative disagreement between analytic and central-difference
/// gradients over `n_params` randomly chosen parameters.
pub fn grad_check<S: Scalar>(
    expert: &FlowExpert<S>,
    batch: &[FlowSample<S>],
    draws: &[NoiseDraw<S>],
    h: S,
    n_params: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let (_, g) = expert.loss_and_grad(batch, draws)?;
    let analytic = g.flat();
    let total = analytic.len();
    let mut probe = expert.clone();
    let mut worst = 0.0f64;
    for _ in 0..n_params {
        let idx = rng.index(total);
        let orig = probe.params()[idx];
        set_param(&mut probe, idx, orig + h);
        let up = probe.loss_with(batch, draws)?;
        set_param(&mut probe, idx, orig - h);
        let down = probe.loss_with(batch, draws)?;
        set_param(&mut probe, idx, orig);
        let cd = ((up - down) / (S::two() * h)).as_f64();
        let an = analytic[idx].as_f64();
        worst = worst.max((an - cd).abs() / (an.abs() + cd.abs() + 1e-12));
    }
    Ok(worst)
}

fn set_param<S: Scalar>(e: &mut FlowExpert<S>, idx: usize, v: S) {
    if let Some(p) = e.params_mut().nth(idx) {
        *p = v;
    }
}
