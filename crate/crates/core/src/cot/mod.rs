//! Structured reasoning supervision: future-frame arithmetic, rule-based
//! labels, a closed vocabulary, the token loss, a small autoregressive head,
//! and the dropout co-training combiner.

mod head;
mod label;
mod loss;
mod vocab;

pub use head::{evaluate, generate_cot, grad_check, train_cot_head, CotEpoch, CotGrads, CotHead};
pub use label::{feasibility, future_indices, make_cot_label, CotLabel, CotSections, FeasibilityBranch};
pub use loss::{ce_loss, log_sum_exp, loss_weights, sample_dropout, softmax, total_loss};
pub use vocab::{number_token, TokenVocab, BOS, EOS, NUMBER_LIMIT, PAD};

use crate::config::CotConfig;
use crate::error::{Error, Result};
use crate::flow::{FlowExpert, FlowSample};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// A context with both supervision targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CotrainSample<S> {
    pub flow: FlowSample<S>,
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CotrainStep {
    /// Per-sample dropout draws, 1 = reasoning loss dropped.
    pub dropout: Vec<u8>,
    pub l_cot: f64,
    pub l_action: f64,
    pub total: f64,
}

/// One joint update of expert and head on the batch mean of the combined
/// loss. Each sample draws its own `d`; both losses use the same context.
pub fn cotrain_step<S: Scalar>(
    expert: &mut FlowExpert<S>,
    head: &mut CotHead<S>,
    batch: &[CotrainSample<S>],
    cfg: &CotConfig,
    lr_action: f64,
    lr_cot: f64,
    rng: &mut SeededRng,
) -> Result<CotrainStep> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut step = CotrainStep { dropout: Vec::with_capacity(batch.len()), l_cot: 0.0, l_action: 0.0, total: 0.0 };
    let mut g_action: Option<Vec<S>> = None;
    let mut g_cot: Option<Vec<S>> = None;
    for s in batch {
        let d = sample_dropout(cfg.dropout_p, rng)?;
        let draws = expert.draw_noise(1, rng)?;
        let (la, ga) = expert.loss_and_grad(std::slice::from_ref(&s.flow), &draws)?;
        let (lc, gc) = head.loss_and_grad(&s.flow.context, &s.tokens)?;
        let (la, lc) = (la.as_f64(), lc.as_f64());
        let (wc, wa) = loss_weights(d, cfg.lambda_cot, cfg.lambda_action);
        step.dropout.push(d);
        step.l_action += la / n;
        step.l_cot += lc / n;
        step.total += total_loss(lc, la, d, cfg.lambda_cot, cfg.lambda_action) / n;
        accumulate(&mut g_action, ga.flat(), S::lit(wa / n));
        accumulate(&mut g_cot, gc.flat(), S::lit(wc / n));
    }
    if let Some(g) = g_action {
        for (p, gi) in expert.params_mut().zip(g) {
            *p = *p - S::lit(lr_action) * gi;
        }
    }
    if let Some(g) = g_cot {
        for (p, gi) in head.params_mut().zip(g) {
            *p = *p - S::lit(lr_cot) * gi;
        }
    }
    Ok(step)
}

fn accumulate<S: Scalar>(acc: &mut Option<Vec<S>>, g: Vec<S>, w: S) {
    match acc {
        Some(a) => a.iter_mut().zip(g).for_each(|(x, y)| *x = *x + w * y),
        None => *acc = Some(g.into_iter().map(|y| w * y).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FlowConfig;
    use crate::flow::ActionChunk;

    fn setup(p: f64) -> (FlowExpert<f64>, CotHead<f64>, Vec<CotrainSample<f64>>, CotConfig) {
        let mut rng = SeededRng::new(12);
        let vocab = TokenVocab::standard();
        let cfg = CotConfig { hidden: 8, window: 2, max_len: 20, dropout_p: p, ..CotConfig::default() };
        let expert = FlowExpert::init(2, 2, 2, &FlowConfig { hidden: 8, ..FlowConfig::default() }, &mut rng);
        let head = CotHead::init(2, &vocab, &cfg, &mut rng);
        let batch = vec![CotrainSample {
            flow: FlowSample { action: ActionChunk::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(), context: vec![1.0, 0.0] },
            tokens: vocab.tokenize("plan: none.").unwrap(),
        }];
        (expert, head, batch, cfg)
    }

    #[test]
    fn full_dropout_leaves_head_untouched() {
        let (mut e, mut h, batch, cfg) = setup(1.0);
        let (e0, h0) = (e.clone(), h.clone());
        let s = cotrain_step(&mut e, &mut h, &batch, &cfg, 0.1, 0.1, &mut SeededRng::new(1)).unwrap();
        assert_eq!(s.dropout, vec![1]);
        assert_eq!(s.total, s.l_action);
        assert_eq!(h, h0);
        assert_ne!(e.params(), e0.params());
    }

    #[test]
    fn no_dropout_updates_both() {
        let (mut e, mut h, batch, cfg) = setup(0.0);
        let h0 = h.clone();
        let s = cotrain_step(&mut e, &mut h, &batch, &cfg, 0.1, 0.1, &mut SeededRng::new(1)).unwrap();
        assert_eq!(s.dropout, vec![0]);
        assert!((s.total - (s.l_cot + s.l_action)).abs() < 1e-12);
        assert_ne!(h, h0);
        assert!(cotrain_step(&mut e, &mut h, &[], &cfg, 0.1, 0.1, &mut SeededRng::new(1)).is_err());
    }
}
