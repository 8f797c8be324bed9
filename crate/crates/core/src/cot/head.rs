//! Toy autoregressive reasoning head.
//!
//! The next token is predicted from the observation context, the previous
//! `window` tokens and the position:
//! `h = tanh(c·Wc + bc + Σ_k E_k[y_{i−1−k}] + P[i])`, `logits = h·Wo + bo`.

use serde::{Deserialize, Serialize};

use super::loss::{ce_loss, log_sum_exp, softmax};
use super::vocab::TokenVocab;
use crate::config::CotConfig;
use crate::error::{Error, Result};
use crate::linalg::{Dense, Matrix};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct CotHead<S> {
    pub context_dim: usize,
    pub vocab_size: usize,
    pub window: usize,
    pub hidden: usize,
    pub pad: usize,
    pub bos: usize,
    pub eos: usize,
    pub ctx: Dense<S>,
    /// One `V × H` table per window slot; slot 0 is the previous token.
    pub emb: Vec<Matrix<S>>,
    /// Position table; positions past the end share the last row.
    pub pos: Matrix<S>,
    pub out: Dense<S>,
}

/// Gradient with the head's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CotGrads<S> {
    pub ctx: Dense<S>,
    pub emb: Vec<Matrix<S>>,
    pub pos: Matrix<S>,
    pub out: Dense<S>,
}

impl<S: Scalar> CotGrads<S> {
    fn zeros_like(h: &CotHead<S>) -> Self {
        Self {
            ctx: Dense::zeros(h.context_dim, h.hidden),
            emb: (0..h.window).map(|_| Matrix::zeros(h.vocab_size, h.hidden)).collect(),
            pos: Matrix::zeros(h.pos.rows(), h.hidden),
            out: Dense::zeros(h.hidden, h.vocab_size),
        }
    }

    pub fn flat(&self) -> Vec<S> {
        let mut v: Vec<S> = self.ctx.params().copied().collect();
        for e in &self.emb {
            v.extend_from_slice(e.as_slice());
        }
        v.extend_from_slice(self.pos.as_slice());
        v.extend(self.out.params().copied());
        v
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.ctx
            .params_mut()
            .chain(self.emb.iter_mut().flat_map(|e| e.as_mut_slice().iter_mut()))
            .chain(self.pos.as_mut_slice().iter_mut())
            .chain(self.out.params_mut())
    }
}

impl<S: Scalar> CotHead<S> {
    pub fn init(context_dim: usize, vocab: &TokenVocab, cfg: &CotConfig, rng: &mut SeededRng) -> Self {
        let v = vocab.len();
        let h = cfg.hidden;
        Self {
            context_dim,
            vocab_size: v,
            window: cfg.window.max(1),
            hidden: h,
            pad: vocab.pad(),
            bos: vocab.bos(),
            eos: vocab.eos(),
            ctx: Dense::glorot(context_dim, h, rng),
            emb: (0..cfg.window.max(1)).map(|_| Matrix::glorot(v, h, rng)).collect(),
            pos: Matrix::glorot(cfg.max_len + 1, h, rng),
            out: Dense::glorot(h, v, rng),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.ctx.check()?;
        self.out.check()?;
        let bad = |what: &str, got: (usize, usize), want: (usize, usize)| {
            Error::ShapeMismatch(format!("reasoning head {what} is {got:?}, expected {want:?}"))
        };
        if self.ctx.w.shape() != (self.context_dim, self.hidden) {
            return Err(bad("context projection", self.ctx.w.shape(), (self.context_dim, self.hidden)));
        }
        if self.out.w.shape() != (self.hidden, self.vocab_size) {
            return Err(bad("output layer", self.out.w.shape(), (self.hidden, self.vocab_size)));
        }
        if self.emb.len() != self.window || self.window == 0 {
            return Err(Error::ShapeMismatch(format!("{} embedding tables for window {}", self.emb.len(), self.window)));
        }
        for e in &self.emb {
            if e.shape() != (self.vocab_size, self.hidden) || !e.is_finite() {
                return Err(bad("embedding", e.shape(), (self.vocab_size, self.hidden)));
            }
        }
        if self.pos.rows() == 0 || self.pos.cols() != self.hidden || !self.pos.is_finite() {
            return Err(bad("position table", self.pos.shape(), (self.pos.rows().max(1), self.hidden)));
        }
        for id in [self.pad, self.bos, self.eos] {
            if id >= self.vocab_size {
                return Err(Error::UnknownTokenId(id));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.ctx.param_count() + self.window * self.vocab_size * self.hidden + self.pos.as_slice().len() + self.out.param_count()
    }

    pub fn params(&self) -> Vec<S> {
        let mut v: Vec<S> = self.ctx.params().copied().collect();
        for e in &self.emb {
            v.extend_from_slice(e.as_slice());
        }
        v.extend_from_slice(self.pos.as_slice());
        v.extend(self.out.params().copied());
        v
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.ctx
            .params_mut()
            .chain(self.emb.iter_mut().flat_map(|e| e.as_mut_slice().iter_mut()))
            .chain(self.pos.as_mut_slice().iter_mut())
            .chain(self.out.params_mut())
    }

    fn project_context(&self, context: &[S]) -> Result<Vec<S>> {
        if context.len() != self.context_dim {
            return Err(Error::ShapeMismatch(format!(
                "reasoning head expects a context of {}, got {}",
                self.context_dim,
                context.len()
            )));
        }
        Ok(self.ctx.forward_vec(context))
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&t| t >= self.vocab_size) {
            Some(&t) => Err(Error::UnknownTokenId(t)),
            None => Ok(()),
        }
    }

    /// Window token for slot `k` when predicting position `i` of `seq`,
    /// where `seq` starts with the begin marker.
    fn slot(&self, seq: &[usize], i: usize, k: usize) -> usize {
        if i > k {
            seq[i - 1 - k]
        } else {
            self.pad
        }
    }

    fn hidden_at(&self, cz: &[S], seq: &[usize], i: usize) -> Vec<S> {
        let mut z = cz.to_vec();
        for (k, table) in self.emb.iter().enumerate() {
            let row = table.row(self.slot(seq, i, k));
            for (a, &b) in z.iter_mut().zip(row) {
                *a = *a + b;
            }
        }
        let p = self.pos.row(i.saturating_sub(1).min(self.pos.rows() - 1));
        z.iter().zip(p).map(|(&a, &b)| (a + b).tanh()).collect()
    }

    /// Teacher-forced input: begin marker, content, end marker.
    fn framed(&self, tokens: &[usize]) -> Vec<usize> {
        let mut seq = Vec::with_capacity(tokens.len() + 2);
        seq.push(self.bos);
        seq.extend_from_slice(tokens);
        seq.push(self.eos);
        seq
    }

    /// `T × V` logits predicting every content token and the end marker.
    pub fn sequence_logits(&self, context: &[S], tokens: &[usize]) -> Result<Matrix<S>> {
        self.check_ids(tokens)?;
        let cz = self.project_context(context)?;
        let seq = self.framed(tokens);
        let t = seq.len() - 1;
        let mut m = Matrix::zeros(t, self.vocab_size);
        for i in 1..seq.len() {
            let h = self.hidden_at(&cz, &seq, i);
            m.row_mut(i - 1).copy_from_slice(&self.out.forward_vec(&h));
        }
        Ok(m)
    }

    /// Targets aligned with [`Self::sequence_logits`].
    pub fn targets(&self, tokens: &[usize]) -> Vec<usize> {
        self.framed(tokens)[1..].to_vec()
    }

    pub fn loss(&self, context: &[S], tokens: &[usize]) -> Result<S> {
        ce_loss(&self.sequence_logits(context, tokens)?, &self.targets(tokens))
    }

    /// Summed sequence loss and its gradient.
    pub fn loss_and_grad(&self, context: &[S], tokens: &[usize]) -> Result<(S, CotGrads<S>)> {
        self.check_ids(tokens)?;
        let cz = self.project_context(context)?;
        let seq = self.framed(tokens);
        let mut g = CotGrads::zeros_like(self);
        let mut dz_total = vec![S::zero(); self.hidden];
        let mut loss = S::zero();
        for i in 1..seq.len() {
            let h = self.hidden_at(&cz, &seq, i);
            let logits = self.out.forward_vec(&h);
            let y = seq[i];
            loss = loss + log_sum_exp(&logits) - logits[y];
            let mut dl = softmax(&logits);
            dl[y] = dl[y] - S::one();
            for (r, &hr) in h.iter().enumerate() {
                for (w, &d) in g.out.w.row_mut(r).iter_mut().zip(&dl) {
                    *w = *w + hr * d;
                }
            }
            for (b, &d) in g.out.b.iter_mut().zip(&dl) {
                *b = *b + d;
            }
            let dz: Vec<S> = (0..self.hidden)
                .map(|r| {
                    let dh: S = self.out.w.row(r).iter().zip(&dl).map(|(&w, &d)| w * d).sum();
                    dh * (S::one() - h[r] * h[r])
                })
                .collect();
            for k in 0..self.window {
                let row = g.emb[k].row_mut(self.slot(&seq, i, k));
                for (a, &d) in row.iter_mut().zip(&dz) {
                    *a = *a + d;
                }
            }
            let prow = g.pos.row_mut(i.saturating_sub(1).min(self.pos.rows() - 1));
            for (a, &d) in prow.iter_mut().zip(&dz) {
                *a = *a + d;
            }
            for (a, &d) in dz_total.iter_mut().zip(&dz) {
                *a = *a + d;
            }
        }
        for (r, &c) in context.iter().enumerate() {
            for (w, &d) in g.ctx.w.row_mut(r).iter_mut().zip(&dz_total) {
                *w = *w + c * d;
            }
        }
        g.ctx.b = dz_total;
        Ok((loss, g))
    }

    /// `θ ← θ − lr·g`.
    pub fn apply_gradient(&mut self, g: &CotGrads<S>, lr: S) {
        for (p, gi) in self.params_mut().zip(g.flat()) {
            *p = *p - lr * gi;
        }
    }

    /// Next-token logits after `history` (which starts with the begin marker).
    pub fn next_logits(&self, context: &[S], history: &[usize]) -> Result<Vec<S>> {
        self.check_ids(history)?;
        let cz = self.project_context(context)?;
        let mut seq = history.to_vec();
        seq.push(self.pad);
        Ok(self.out.forward_vec(&self.hidden_at(&cz, &seq, history.len())))
    }

    /// Flat indices of the parameters one sequence can influence.
    pub fn touched_params(&self, tokens: &[usize]) -> Vec<usize> {
        let seq = self.framed(tokens);
        let (v, h) = (self.vocab_size, self.hidden);
        let mut idx: Vec<usize> = (0..self.ctx.param_count()).collect();
        let mut off = self.ctx.param_count();
        for k in 0..self.window {
            let mut rows: Vec<usize> = (1..seq.len()).map(|i| self.slot(&seq, i, k)).collect();
            rows.sort_unstable();
            rows.dedup();
            for r in rows {
                idx.extend(off + r * h..off + (r + 1) * h);
            }
            off += v * h;
        }
        let last = (seq.len() - 2).min(self.pos.rows() - 1);
        idx.extend(off..off + (last + 1) * h);
        off += self.pos.as_slice().len();
        idx.extend(off..off + self.out.param_count());
        idx
    }
}

/// Greedy argmax decoding; ties go to the lowest id.
pub fn generate_cot<S: Scalar>(head: &CotHead<S>, context: &[S], max_len: usize) -> Result<Vec<usize>> {
    let cz = head.project_context(context)?;
    let mut seq = vec![head.bos];
    let mut out = Vec::new();
    while out.len() < max_len {
        seq.push(head.pad);
        let h = head.hidden_at(&cz, &seq, seq.len() - 1);
        seq.pop();
        let logits = head.out.forward_vec(&h);
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        if best == head.eos {
            break;
        }
        seq.push(best);
        out.push(best);
    }
    Ok(out)
}

/// One entry of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CotEpoch {
    pub epoch: usize,
    /// Mean over sequences of the summed sequence loss.
    pub sequence_loss: f64,
    /// Total loss divided by total predicted tokens.
    pub token_loss: f64,
}

/// Dataset loss without updating anything.
pub fn evaluate<S: Scalar>(head: &CotHead<S>, data: &[(Vec<S>, Vec<usize>)]) -> Result<CotEpoch> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (c, toks) in data {
        total += head.loss(c, toks)?.as_f64();
        count += toks.len() + 1;
    }
    Ok(CotEpoch { epoch: 0, sequence_loss: total / data.len() as f64, token_loss: total / count as f64 })
}

/// Teacher-forced SGD, one sequence per step in shuffled order. The step uses
/// the per-token mean gradient so `lr` does not depend on label length.
/// Each epoch reports the losses seen before each sequence's update.
pub fn train_cot_head<S: Scalar>(
    head: &mut CotHead<S>,
    data: &[(Vec<S>, Vec<usize>)],
    lr: f64,
    epochs: usize,
    rng: &mut SeededRng,
) -> Result<Vec<CotEpoch>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let count: usize = data.iter().map(|(_, t)| t.len() + 1).sum();
    let mut curve = Vec::with_capacity(epochs);
    let mut seen = vec![0.0; data.len()];
    for epoch in 0..epochs {
        for i in rng.permutation(data.len()) {
            let (c, toks) = &data[i];
            let (l, g) = head.loss_and_grad(c, toks)?;
            seen[i] = l.as_f64();
            let step = S::lit(lr) / S::from_usize_lossy(toks.len() + 1);
            head.apply_gradient(&g, step);
        }
        let total: f64 = seen.iter().sum();
        curve.push(CotEpoch { epoch, sequence_loss: total / data.len() as f64, token_loss: total / count as f64 });
    }
    Ok(curve)
}

/// Largest relative disagreement between analytic and central-difference
/// gradients, over parameters drawn from those the sequence touches.
pub fn grad_check<S: Scalar>(
    head: &CotHead<S>,
    context: &[S],
    tokens: &[usize],
    h: S,
    n_params: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let (_, g) = head.loss_and_grad(context, tokens)?;
    let analytic = g.flat();
    let candidates = head.touched_params(tokens);
    let mut probe = head.clone();
    let mut worst = 0.0f64;
    for _ in 0..n_params {
        let idx = candidates[rng.index(candidates.len())];
        let orig = head.params()[idx];
        set_param(&mut probe, idx, orig + h);
        let up = probe.loss(context, tokens)?;
        set_param(&mut probe, idx, orig - h);
        let down = probe.loss(context, tokens)?;
        set_param(&mut probe, idx, orig);
        let cd = ((up - down) / (S::two() * h)).as_f64();
        let an = analytic[idx].as_f64();
        worst = worst.max((an - cd).abs() / (an.abs() + cd.abs() + 1e-12));
    }
    Ok(worst)
}

fn set_param<S: Scalar>(head: &mut CotHead<S>, idx: usize, v: S) {
    if let Some(p) = head.params_mut().nth(idx) {
        *p = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(ctx: usize, rng: &mut SeededRng) -> (CotHead<f64>, TokenVocab) {
        let vocab = TokenVocab::standard();
        let cfg = CotConfig { hidden: 16, window: 2, max_len: 40, ..CotConfig::default() };
        (CotHead::init(ctx, &vocab, &cfg, rng), vocab)
    }

    #[test]
    fn logits_shape() {
        let mut rng = SeededRng::new(1);
        let (head, vocab) = small(3, &mut rng);
        head.check().unwrap();
        let toks = vocab.tokenize("plan: none.").unwrap();
        let m = head.sequence_logits(&[0.1, 0.2, 0.3], &toks).unwrap();
        assert_eq!(m.shape(), (toks.len() + 1, vocab.len()));
        assert_eq!(head.next_logits(&[0.1, 0.2, 0.3], &[vocab.bos()]).unwrap().len(), vocab.len());
        assert_eq!(head.params().len(), head.param_count());
    }

    #[test]
    fn gradient_matches_differences() {
        let mut rng = SeededRng::new(2);
        let (head, vocab) = small(4, &mut rng);
        let toks = vocab.tokenize("scene: egg, tomato.\nplan: grasp fish; grasp pepper.").unwrap();
        let err = grad_check(&head, &[0.3, -0.2, 0.5, 1.0], &toks, 1e-5, 100, &mut rng).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn loss_agrees_with_ce() {
        let mut rng = SeededRng::new(3);
        let (head, vocab) = small(2, &mut rng);
        let toks = vocab.tokenize("state at frame 3: 0.10 -0.20.").unwrap();
        let (l, _) = head.loss_and_grad(&[1.0, 0.0], &toks).unwrap();
        assert!((l - head.loss(&[1.0, 0.0], &toks).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn zero_rate_is_flat() {
        let mut rng = SeededRng::new(4);
        let (mut head, vocab) = small(2, &mut rng);
        let data = vec![
            (vec![1.0, 0.0], vocab.tokenize("scene: egg.").unwrap()),
            (vec![0.0, 1.0], vocab.tokenize("scene: nothing.").unwrap()),
        ];
        let before = head.clone();
        let curve = train_cot_head(&mut head, &data, 0.0, 4, &mut rng).unwrap();
        assert!(curve.windows(2).all(|w| w[0].sequence_loss == w[1].sequence_loss));
        assert_eq!(head, before);
        assert_eq!(train_cot_head(&mut head, &[], 0.1, 1, &mut rng), Err(Error::EmptyDataset));
    }

    #[test]
    fn memorises_and_reproduces() {
        let mut rng = SeededRng::new(5);
        let (mut head, vocab) = small(2, &mut rng);
        let a = vocab.tokenize("scene: egg, fish.\nplan: grasp fish.").unwrap();
        let b = vocab.tokenize("scene: sweater.\nplan: none.").unwrap();
        let data = vec![(vec![1.0, 0.0], a.clone()), (vec![0.0, 1.0], b.clone())];
        let curve = train_cot_head(&mut head, &data, 0.5, 150, &mut rng).unwrap();
        assert!(curve.last().unwrap().token_loss < 0.05, "{:?}", curve.last());
        assert!(curve.last().unwrap().sequence_loss < curve[0].sequence_loss);
        assert_eq!(generate_cot(&head, &[1.0, 0.0], 100).unwrap(), a);
        assert_eq!(generate_cot(&head, &[0.0, 1.0], 100).unwrap(), b);
    }

    #[test]
    fn untrained_generation_and_ties() {
        let mut rng = SeededRng::new(6);
        let (mut head, _) = small(2, &mut rng);
        let out = generate_cot(&head, &[0.5, 0.5], 25).unwrap();
        assert!(out.len() <= 25);
        assert_eq!(out, generate_cot(&head, &[0.5, 0.5], 25).unwrap());
        // all-zero output layer: every logit ties, so the lowest id wins
        head.out = Dense::zeros(head.hidden, head.vocab_size);
        let out = generate_cot(&head, &[0.5, 0.5], 7).unwrap();
        assert_eq!(out, vec![0; 7]);
    }
}
