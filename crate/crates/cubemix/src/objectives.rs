//! Training losses and evaluation metrics for scalar regression targets.
//!
//! Covariance and variance terms use the population convention (divide by
//! N); the 1/N factors cancel inside the concordance ratio but the choice is
//! fixed so tests can be bit-exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Denominator guard for the concordance ratio; constant batches otherwise
/// divide by zero during early training.
pub const CCC_DENOM_GUARD: f64 = 1e-12;

/// Predictions paired with labels; entries finite, lengths equal, non-empty.
#[derive(Clone, Debug)]
pub struct PredictionBatch<T> {
    y_hat: Vec<T>,
    y: Vec<T>,
}

impl<T: Scalar> PredictionBatch<T> {
    pub fn new(y_hat: Vec<T>, y: Vec<T>) -> Result<Self> {
        if y_hat.is_empty() {
            return Err(Error::shape("prediction_batch", "empty batch"));
        }
        if y_hat.len() != y.len() {
            return Err(Error::shape(
                "prediction_batch",
                format!("{} predictions vs {} labels", y_hat.len(), y.len()),
            ));
        }
        if !y_hat.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                op: "prediction_batch",
            });
        }
        Ok(PredictionBatch { y_hat, y })
    }

    pub fn len(&self) -> usize {
        self.y_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn y_hat(&self) -> &[T] {
        &self.y_hat
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn to_f64(&self) -> PredictionBatch<f64> {
        PredictionBatch {
            y_hat: self.y_hat.iter().map(|v| v.to_f64()).collect(),
            y: self.y.iter().map(|v| v.to_f64()).collect(),
        }
    }
}

/// Full evaluation report. `corr` is set to the 0.0 sentinel when Pearson is
/// undefined (a constant series); every other field is always computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    #[serde(rename = "corr")]
    pub pearson_r: f64,
    pub ccc: f64,
    pub acc2: f64,
    pub f1: f64,
    pub acc7: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "mae,corr,ccc,acc2,f1,acc7";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.mae, self.pearson_r, self.ccc, self.acc2, self.f1, self.acc7
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain float fields")
    }
}

/// Mean absolute error and its per-prediction subgradient, with sign(0) = 0.
pub fn mae_loss<T: Scalar>(batch: &PredictionBatch<T>) -> (T, Vec<T>) {
    let n = T::from_f64(batch.len() as f64);
    let inv_n = T::ONE / n;
    let mut total = T::ZERO;
    let mut grads = Vec::with_capacity(batch.len());
    for (&p, &t) in batch.y_hat.iter().zip(&batch.y) {
        let diff = p - t;
        total += diff.abs();
        let sign = if diff > T::ZERO {
            T::ONE
        } else if diff < T::ZERO {
            -T::ONE
        } else {
            T::ZERO
        };
        grads.push(sign * inv_n);
    }
    (total * inv_n, grads)
}

struct CccTerms<T> {
    mean_hat: T,
    mean_y: T,
    cov: T,
    denom: T,
}

fn ccc_terms<T: Scalar>(batch: &PredictionBatch<T>) -> Result<CccTerms<T>> {
    if batch.len() < 2 {
        return Err(Error::Degenerate(
            "concordance needs at least two samples".into(),
        ));
    }
    let inv_n = T::ONE / T::from_f64(batch.len() as f64);
    let mean_hat = batch.y_hat.iter().copied().sum::<T>() * inv_n;
    let mean_y = batch.y.iter().copied().sum::<T>() * inv_n;
    let mut cov = T::ZERO;
    let mut var_hat = T::ZERO;
    let mut var_y = T::ZERO;
    for (&p, &t) in batch.y_hat.iter().zip(&batch.y) {
        let dp = p - mean_hat;
        let dt = t - mean_y;
        cov += dp * dt;
        var_hat += dp * dp;
        var_y += dt * dt;
    }
    cov *= inv_n;
    var_hat *= inv_n;
    var_y *= inv_n;
    let shift = mean_hat - mean_y;
    let denom = var_hat + var_y + shift * shift;
    Ok(CccTerms {
        mean_hat,
        mean_y,
        cov,
        denom,
    })
}

/// Concordance correlation coefficient `2*cov / (var_hat + var_y + shift^2)`.
/// Returns 0 when the denominator degenerates below [`CCC_DENOM_GUARD`].
pub fn ccc_metric<T: Scalar>(batch: &PredictionBatch<T>) -> Result<T> {
    let t = ccc_terms(batch)?;
    if t.denom.to_f64() < CCC_DENOM_GUARD {
        return Ok(T::ZERO);
    }
    Ok(T::from_f64(2.0) * t.cov / t.denom)
}

/// Concordance loss `1 - CCC` with its analytic gradient. On a degenerate
/// denominator the loss is 1 with zero gradient.
pub fn ccc_loss<T: Scalar>(batch: &PredictionBatch<T>) -> Result<(T, Vec<T>)> {
    let t = ccc_terms(batch)?;
    let n = batch.len();
    if t.denom.to_f64() < CCC_DENOM_GUARD {
        return Ok((T::ONE, vec![T::ZERO; n]));
    }
    let two = T::from_f64(2.0);
    let ccc = two * t.cov / t.denom;
    let inv_n = T::ONE / T::from_f64(n as f64);
    let shift = t.mean_hat - t.mean_y;
    let denom_sq = t.denom * t.denom;
    let mut grads = Vec::with_capacity(n);
    for (&p, &label) in batch.y_hat.iter().zip(&batch.y) {
        // d cov / d p_i = (y_i - mean_y)/N; d var_hat / d p_i = 2(p_i - mean_hat)/N;
        // d shift^2 / d p_i = 2*shift/N.
        let dcov = (label - t.mean_y) * inv_n;
        let ddenom = two * (p - t.mean_hat) * inv_n + two * shift * inv_n;
        let dccc = (two * dcov * t.denom - two * t.cov * ddenom) / denom_sq;
        grads.push(-dccc);
    }
    Ok((T::ONE - ccc, grads))
}

/// Sample Pearson correlation. Errors when either series is constant.
pub fn pearson<T: Scalar>(batch: &PredictionBatch<T>) -> Result<f64> {
    if batch.len() < 2 {
        return Err(Error::Degenerate(
            "pearson needs at least two samples".into(),
        ));
    }
    let b = batch.to_f64();
    let n = b.len() as f64;
    let mean_hat: f64 = b.y_hat.iter().sum::<f64>() / n;
    let mean_y: f64 = b.y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut ss_hat = 0.0;
    let mut ss_y = 0.0;
    for (&p, &t) in b.y_hat.iter().zip(&b.y) {
        cov += (p - mean_hat) * (t - mean_y);
        ss_hat += (p - mean_hat) * (p - mean_hat);
        ss_y += (t - mean_y) * (t - mean_y);
    }
    if ss_hat == 0.0 || ss_y == 0.0 {
        return Err(Error::Degenerate(
            "pearson undefined for a constant series".into(),
        ));
    }
    Ok(cov / (ss_hat.sqrt() * ss_y.sqrt()))
}

/// Binary accuracy and positive-class F1 over the sign of predictions and
/// labels. Samples with a label of exactly zero are excluded.
pub fn acc2_f1<T: Scalar>(batch: &PredictionBatch<T>) -> Result<(f64, f64)> {
    let mut kept = 0usize;
    let mut agree = 0usize;
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&p, &t) in batch.y_hat.iter().zip(&batch.y) {
        let t = t.to_f64();
        if t == 0.0 {
            continue;
        }
        kept += 1;
        let pred_pos = p.to_f64() > 0.0;
        let label_pos = t > 0.0;
        if pred_pos == label_pos {
            agree += 1;
        }
        match (pred_pos, label_pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    if kept == 0 {
        return Err(Error::Degenerate(
            "binary accuracy undefined: every label is zero".into(),
        ));
    }
    let acc2 = agree as f64 / kept as f64;
    let f1 = if 2 * tp + fp + fne == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fne) as f64
    };
    Ok((acc2, f1))
}

/// Seven-class label: round half away from zero, then clamp to [-3, 3].
pub fn acc7_class(v: f64) -> i32 {
    (v.round() as i64).clamp(-3, 3) as i32
}

/// Seven-class accuracy after rounding both series.
pub fn acc7<T: Scalar>(batch: &PredictionBatch<T>) -> f64 {
    let hits = batch
        .y_hat
        .iter()
        .zip(&batch.y)
        .filter(|(p, t)| acc7_class(p.to_f64()) == acc7_class(t.to_f64()))
        .count();
    hits as f64 / batch.len() as f64
}

/// Assembles the full metric report. Pearson degeneracy is mapped to the
/// documented 0.0 sentinel; other degeneracies propagate as errors.
pub fn evaluate<T: Scalar>(batch: &PredictionBatch<T>) -> Result<MetricReport> {
    let b = batch.to_f64();
    let (mae, _) = mae_loss(&b);
    let pearson_r = match pearson(&b) {
        Ok(r) => r,
        Err(Error::Degenerate(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let ccc = if b.len() < 2 { 0.0 } else { ccc_metric(&b)? };
    let (acc2, f1) = acc2_f1(&b)?;
    let acc7 = acc7(&b);
    Ok(MetricReport {
        mae,
        pearson_r,
        ccc,
        acc2,
        f1,
        acc7,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(y_hat: &[f64], y: &[f64]) -> PredictionBatch<f64> {
        PredictionBatch::new(y_hat.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn mae_hand_examples() {
        let b = batch(&[1.0, -2.0], &[1.0, -2.0]);
        assert_eq!(mae_loss(&b).0, 0.0);

        let b = batch(&[0.0], &[2.0]);
        let (loss, grads) = mae_loss(&b);
        assert_eq!(loss, 2.0);
        assert_eq!(grads, vec![-1.0]);

        let b = batch(&[0.0, 0.0], &[1.0, -1.0]);
        let (loss, grads) = mae_loss(&b);
        assert_eq!(loss, 1.0);
        assert_eq!(grads, vec![-0.5, 0.5]);
    }

    #[test]
    fn mae_sign_zero_convention() {
        let b = batch(&[1.0, 3.0], &[1.0, 1.0]);
        let (_, grads) = mae_loss(&b);
        assert_eq!(grads[0], 0.0);
        assert_eq!(grads[1], 0.5);
    }

    #[test]
    fn mae_translation_equivariance() {
        let y_hat = [0.3, -1.2, 2.0, 0.7];
        let y = [0.1, -0.9, 1.4, 1.0];
        let (base, _) = mae_loss(&batch(&y_hat, &y));
        for c in [-2.5, 0.7, 10.0] {
            let shifted_hat: Vec<f64> = y_hat.iter().map(|v| v + c).collect();
            let shifted_y: Vec<f64> = y.iter().map(|v| v + c).collect();
            let (shifted, _) = mae_loss(&batch(&shifted_hat, &shifted_y));
            assert!((base - shifted).abs() < 1e-12);
        }
    }

    #[test]
    fn ccc_hand_examples() {
        let b = batch(&[0.5, 1.5, -0.5], &[0.5, 1.5, -0.5]);
        let (loss, _) = ccc_loss(&b).unwrap();
        assert!(loss.abs() < 1e-15);
        assert!((ccc_metric(&b).unwrap() - 1.0).abs() < 1e-15);

        // Anti-concordant pair: means 0, variances 1, covariance -1.
        let b = batch(&[-1.0, 1.0], &[1.0, -1.0]);
        assert_eq!(ccc_metric(&b).unwrap(), -1.0);
        assert_eq!(ccc_loss(&b).unwrap().0, 2.0);

        // Location shift: 2*0.25 / (0.25 + 0.25 + 25).
        let b = batch(&[5.0, 6.0], &[0.0, 1.0]);
        let want = 0.5 / 25.5;
        assert!((ccc_metric(&b).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn ccc_degenerate_guard() {
        let b = batch(&[2.0, 2.0], &[2.0, 2.0]);
        let (loss, grads) = ccc_loss(&b).unwrap();
        assert_eq!(loss, 1.0);
        assert!(grads.iter().all(|&g| g == 0.0));
        assert_eq!(ccc_metric(&b).unwrap(), 0.0);
    }

    #[test]
    fn ccc_rejects_singleton() {
        let b = batch(&[1.0], &[1.0]);
        assert!(ccc_loss(&b).is_err());
        assert!(ccc_metric(&b).is_err());
    }

    #[test]
    fn ccc_loss_is_one_minus_metric() {
        let cases = [
            (vec![0.1, 0.9, -0.4], vec![0.2, 1.1, -0.3]),
            (vec![3.0, -2.0, 0.5, 0.5], vec![-1.0, 2.0, 0.0, 1.0]),
        ];
        for (y_hat, y) in cases {
            let b = PredictionBatch::new(y_hat, y).unwrap();
            let (loss, _) = ccc_loss(&b).unwrap();
            let metric = ccc_metric(&b).unwrap();
            assert_eq!(loss, 1.0 - metric);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let y = vec![0.7, -1.1, 0.3, 1.9, -0.2];
        let y_hat = vec![0.5, -0.8, 0.9, 1.2, 0.1];
        let h = 1e-6;

        type LossFn = fn(&PredictionBatch<f64>) -> (f64, Vec<f64>);
        let mae: LossFn = |b| mae_loss(b);
        let ccc: LossFn = |b| ccc_loss(b).unwrap();
        for (name, f) in [("mae", mae), ("ccc", ccc)] {
            let b = PredictionBatch::new(y_hat.clone(), y.clone()).unwrap();
            let (_, grads) = f(&b);
            for i in 0..y_hat.len() {
                let mut plus = y_hat.clone();
                plus[i] += h;
                let mut minus = y_hat.clone();
                minus[i] -= h;
                let lp = f(&PredictionBatch::new(plus, y.clone()).unwrap()).0;
                let lm = f(&PredictionBatch::new(minus, y.clone()).unwrap()).0;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - grads[i]).abs() / (fd.abs() + grads[i].abs()).max(1e-8);
                assert!(rel < 1e-5, "{name} grad[{i}]: fd={fd} analytic={}", grads[i]);
            }
        }
    }

    #[test]
    fn pearson_hand_examples() {
        let y = [1.0, 2.0, 4.0];
        let scaled: Vec<f64> = y.iter().map(|v| 2.0 * v + 3.0).collect();
        let b = PredictionBatch::new(scaled, y.to_vec()).unwrap();
        assert!((pearson(&b).unwrap() - 1.0).abs() < 1e-12);

        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let b = PredictionBatch::new(neg, y.to_vec()).unwrap();
        assert!((pearson(&b).unwrap() + 1.0).abs() < 1e-12);

        let b = batch(&[1.0, 3.0, 2.0], &[1.0, 2.0, 3.0]);
        assert!((pearson(&b).unwrap() - 0.5).abs() < 1e-12);

        let b = batch(&[1.0, 1.0], &[1.0, 2.0]);
        assert!(matches!(pearson(&b), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pearson_affine_invariance() {
        let y = [0.4, -0.7, 1.3, 2.2, -1.5];
        let y_hat = [0.1, -0.2, 1.1, 1.8, -1.0];
        let base = pearson(&batch(&y_hat, &y)).unwrap();
        let transformed: Vec<f64> = y_hat.iter().map(|v| 3.7 * v + 11.0).collect();
        let b = PredictionBatch::new(transformed, y.to_vec()).unwrap();
        assert!((pearson(&b).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn ccc_equals_pearson_for_matched_mean_and_variance() {
        // A permutation has identical mean and variance exactly.
        let y = [0.3, -1.4, 0.9, 2.0, -0.8];
        let y_hat = [2.0, 0.9, -0.8, 0.3, -1.4];
        let b = batch(&y_hat, &y);
        let c = ccc_metric(&b).unwrap();
        let r = pearson(&b).unwrap();
        assert!((c - r).abs() < 1e-12, "ccc={c} pearson={r}");
    }

    #[test]
    fn acc2_excludes_zero_labels() {
        let b = batch(&[2.0, 3.0, 9.0], &[1.0, -1.0, 0.0]);
        let (acc2, f1) = acc2_f1(&b).unwrap();
        assert_eq!(acc2, 0.5);
        // tp=1, fp=1, fn=0 -> precision 0.5, recall 1.
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn acc2_perfect_and_all_positive_cases() {
        let b = batch(&[-1.0, 2.0], &[-1.0, 2.0]);
        let (acc2, f1) = acc2_f1(&b).unwrap();
        assert_eq!((acc2, f1), (1.0, 1.0));

        let b = batch(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0, -1.0, -1.0]);
        let (_, f1) = acc2_f1(&b).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);

        let b = batch(&[1.0, -1.0], &[0.0, 0.0]);
        assert!(matches!(acc2_f1(&b), Err(Error::Degenerate(_))));
    }

    #[test]
    fn acc7_rounding_and_clamping() {
        assert_eq!(acc7_class(1.8), 2);
        assert_eq!(acc7_class(4.2), 3);
        assert_eq!(acc7_class(-4.2), -3);
        assert_eq!(acc7_class(-1.5), -2); // half away from zero
        assert_eq!(acc7_class(2.5), 3);
        for k in -3..=3 {
            assert_eq!(acc7_class(k as f64), k);
            assert_eq!(acc7_class(acc7_class(k as f64) as f64), k);
        }
        let b = batch(&[1.8, -0.2], &[2.0, 0.0]);
        assert_eq!(acc7(&b), 1.0);
    }

    #[test]
    fn evaluate_assembles_all_fields() {
        let b = batch(&[-1.0, 2.0, 0.5], &[-1.0, 2.0, 0.5]);
        let r = evaluate(&b).unwrap();
        assert_eq!(r.mae, 0.0);
        assert!((r.pearson_r - 1.0).abs() < 1e-12);
        assert!((r.ccc - 1.0).abs() < 1e-12);
        assert_eq!((r.acc2, r.f1, r.acc7), (1.0, 1.0, 1.0));

        let b = batch(&[1.0, -1.0], &[-1.0, 1.0]);
        let r = evaluate(&b).unwrap();
        assert_eq!(r.mae, 2.0);
        assert!((r.pearson_r + 1.0).abs() < 1e-12);
        assert!((r.ccc + 1.0).abs() < 1e-12);
        assert_eq!(r.acc2, 0.0);
    }

    #[test]
    fn evaluate_constant_predictions_use_sentinel() {
        let b = batch(&[0.5, 0.5, 0.5], &[1.0, -1.0, 2.0]);
        let r = evaluate(&b).unwrap();
        assert_eq!(r.pearson_r, 0.0);
        assert!(r.mae > 0.0);
        assert!(r.ccc.is_finite());
    }

    #[test]
    fn csv_row_matches_fixed_column_order() {
        let r = MetricReport {
            mae: 1.0,
            pearson_r: 0.5,
            ccc: 0.25,
            acc2: 0.75,
            f1: 0.8,
            acc7: 0.4,
        };
        assert_eq!(MetricReport::CSV_HEADER, "mae,corr,ccc,acc2,f1,acc7");
        assert_eq!(r.csv_row(), "1,0.5,0.25,0.75,0.8,0.4");
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["corr"], 0.5);
        assert_eq!(json["mae"], 1.0);
    }
}
