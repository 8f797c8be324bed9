use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// `log Σ exp(x)` with the max shifted out.
pub fn log_sum_exp<S: Scalar>(x: &[S]) -> S {
    let m = x.iter().copied().fold(S::neg_infinity(), S::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|&v| (v - m).exp()).sum::<S>().ln()
}

/// Row-wise softmax of one logit vector.
pub fn softmax<S: Scalar>(x: &[S]) -> Vec<S> {
    let lse = log_sum_exp(x);
    x.iter().map(|&v| (v - lse).exp()).collect()
}

/// Summed token cross-entropy `−Σ_i log softmax(logits_i)[target_i]`.
pub fn ce_loss<S: Scalar>(logits: &Matrix<S>, targets: &[usize]) -> Result<S> {
    let (t, v) = logits.shape();
    if t == 0 || t != targets.len() {
        return Err(Error::ShapeMismatch(format!("{t} logit rows for {} targets", targets.len())));
    }
    let mut total = S::zero();
    for (i, &y) in targets.iter().enumerate() {
        if y >= v {
            return Err(Error::ShapeMismatch(format!("target {y} outside vocabulary of {v}")));
        }
        let row = logits.row(i);
        total = total + log_sum_exp(row) - row[y];
    }
    Ok(total)
}

/// `d ~ Bernoulli(p)`, with `d = 1` meaning the reasoning loss is dropped.
pub fn sample_dropout(p: f64, rng: &mut SeededRng) -> Result<u8> {
    Ok(u8::from(rng.bernoulli(p)?))
}

/// `(1 − d)·(λ_cot·L_cot + λ_action·L_action) + d·L_action`.
pub fn total_loss(l_cot: f64, l_action: f64, d: u8, lambda_cot: f64, lambda_action: f64) -> f64 {
    let d = f64::from(d);
    (1.0 - d) * (lambda_cot * l_cot + lambda_action * l_action) + d * l_action
}

/// Weights the combined loss places on `(L_cot, L_action)`.
pub fn loss_weights(d: u8, lambda_cot: f64, lambda_action: f64) -> (f64, f64) {
    let d = f64::from(d);
    ((1.0 - d) * lambda_cot, (1.0 - d) * lambda_action + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits() {
        let l = ce_loss(&Matrix::<f64>::zeros(3, 4), &[0, 1, 3]).unwrap();
        assert!((l - 3.0 * 4f64.ln()).abs() < 1e-9);
        assert!((l - 4.158883).abs() < 1e-6);
    }

    #[test]
    fn confident_and_hand_softmax() {
        let mut m = Matrix::<f64>::zeros(1, 5);
        m[(0, 2)] = 50.0;
        assert!(ce_loss(&m, &[2]).unwrap() < 1e-9);
        let m = Matrix::from_rows(&[vec![0.0, 3f64.ln()]]).unwrap();
        let l = ce_loss(&m, &[1]).unwrap();
        assert!((l + (0.75f64).ln()).abs() < 1e-12);
        assert!((l - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(ce_loss(&Matrix::<f64>::zeros(2, 4), &[0]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(ce_loss(&Matrix::<f64>::zeros(0, 4), &[]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(ce_loss(&Matrix::<f64>::zeros(1, 4), &[4]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn dropout_frequencies() {
        let mut r = SeededRng::new(8);
        assert!((0..1000).all(|_| sample_dropout(0.0, &mut r).unwrap() == 0));
        assert!((0..1000).all(|_| sample_dropout(1.0, &mut r).unwrap() == 1));
        let hits: u32 = (0..10_000).map(|_| u32::from(sample_dropout(0.3, &mut r).unwrap())).sum();
        let f = f64::from(hits) / 1e4;
        assert!((0.28..=0.32).contains(&f), "{f}");
        assert_eq!(sample_dropout(1.5, &mut r), Err(Error::InvalidProbability(1.5)));
        assert_eq!(sample_dropout(-0.1, &mut r), Err(Error::InvalidProbability(-0.1)));
    }

    #[test]
    fn combined_loss_cases() {
        assert_eq!(total_loss(7.0, 1.25, 1, 3.0, 9.0), 1.25);
        assert_eq!(total_loss(4.0, 1.0, 0, 1.0, 1.0), 5.0);
        assert_eq!(total_loss(4.0, 1.0, 0, 0.5, 2.0), 4.0);
    }

    proptest! {
        #[test]
        fn ce_nonnegative(rows in prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 6), 1..8)) {
            let m = Matrix::from_rows(&rows).unwrap();
            let targets: Vec<usize> = (0..rows.len()).map(|i| i % 6).collect();
            prop_assert!(ce_loss(&m, &targets).unwrap() >= 0.0);
        }

        #[test]
        fn uniform_is_t_ln_v(t in 1usize..20, v in 1usize..50, c in -5.0f64..5.0) {
            let m = Matrix::from_vec(t, v, vec![c; t * v]).unwrap();
            let targets = vec![v - 1; t];
            prop_assert!((ce_loss(&m, &targets).unwrap() - t as f64 * (v as f64).ln()).abs() < 1e-9);
        }

        #[test]
        fn dropped_ignores_reasoning(lc in -1e6f64..1e6, la in -1e6f64..1e6, a in 0.0f64..10.0, b in 0.0f64..10.0) {
            prop_assert_eq!(total_loss(lc, la, 1, a, b).to_bits(), la.to_bits());
        }
    }
}
