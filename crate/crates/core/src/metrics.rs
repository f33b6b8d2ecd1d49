//! Evaluation metrics: AUROC, aggregation, hierarchy violation rate, and a
//! paired t-test for comparing per-label AUROC vectors across runs.
//!
//! AUROC uses the Mann–Whitney rank formulation with average ranks for
//! ties, which equals exhaustive pair counting (ties worth 1/2). Label sets
//! with no positives or no negatives have no defined AUROC and are reported
//! as an explicit error rather than a sentinel value.
//!
//! The t-test converts `t` to a two-sided p-value through the regularized
//! incomplete beta function, built here from a Lanczos log-gamma and a
//! modified Lentz continued fraction so the crate stays dependency-free.

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("scores and labels have different lengths ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("labels must be 0 or 1, got {0}")]
    NonBinaryLabel(u8),
    #[error("scores must be finite, got {0}")]
    NonFiniteScore(f64),
    #[error("AUROC undefined: {positives} positives and {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("input is empty")]
    Empty,
    #[error("weights sum to zero")]
    ZeroWeight,
    #[error("expected 2-D (batch, labels) predictions, got shape {0:?}")]
    NotTwoDim(Vec<usize>),
    #[error("prediction {value} at ({row}, {col}) lies outside [0, 1]")]
    PredictionOutOfRange { row: usize, col: usize, value: f64 },
    #[error("edge ({parent}, {child}) out of range for {labels} labels")]
    EdgeOutOfRange {
        parent: usize,
        child: usize,
        labels: usize,
    },
    #[error("threshold must lie strictly inside (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("margin delta must be non-negative and keep threshold ± delta inside (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("paired t-test needs at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired t-test undefined: differences have zero variance")]
    ZeroVariance,
    #[error("degrees of freedom must be positive")]
    ZeroDf,
}

/// A defined AUROC together with the class counts that defined it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocResult {
    pub auroc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Area under the ROC curve for one label.
///
/// Computed as `U / (n_pos * n_neg)` where `U` is the Mann–Whitney statistic
/// derived from average ranks, so tied scores earn half credit.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<RocResult, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    for &s in scores {
        if !s.is_finite() {
            return Err(MetricsError::NonFiniteScore(s));
        }
    }
    let mut positives = 0usize;
    for &l in labels {
        match l {
            0 => {}
            1 => positives += 1,
            other => return Err(MetricsError::NonBinaryLabel(other)),
        }
    }
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // average 1-based rank per tied group
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let p = positives as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(RocResult {
        auroc: u / (p * negatives as f64),
        positives,
        negatives,
    })
}

/// Unweighted mean over defined per-label results.
pub fn mean_auroc(per_label: &[RocResult]) -> Result<f64, MetricsError> {
    if per_label.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(per_label.iter().map(|r| r.auroc).sum::<f64>() / per_label.len() as f64)
}

/// Mean weighted by each label's positive count (the default prevalence
/// weighting).
pub fn weighted_auroc(per_label: &[RocResult]) -> Result<f64, MetricsError> {
    let aurocs: Vec<f64> = per_label.iter().map(|r| r.auroc).collect();
    let weights: Vec<f64> = per_label.iter().map(|r| r.positives as f64).collect();
    weighted_auroc_with(&aurocs, &weights)
}

/// Mean weighted by caller-supplied non-negative weights.
pub fn weighted_auroc_with(per_label: &[f64], weights: &[f64]) -> Result<f64, MetricsError> {
    if per_label.len() != weights.len() {
        return Err(MetricsError::LengthMismatch {
            scores: per_label.len(),
            labels: weights.len(),
        });
    }
    if per_label.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(MetricsError::ZeroWeight);
    }
    let weighted: f64 = per_label.iter().zip(weights).map(|(&a, &w)| a * w).sum();
    Ok(weighted / total)
}

/// Fraction of (sample, edge) pairs where the child prediction exceeds the
/// threshold while the parent prediction falls below it (both strict).
pub fn violation_rate(
    y_pred: &Tensor,
    edges: &[(usize, usize)],
    threshold: f64,
) -> Result<f64, MetricsError> {
    violation_rate_margins(y_pred, edges, threshold, 0.0)
}

/// Like [`violation_rate`] but only counts decisive violations: child above
/// `threshold + delta` and parent below `threshold - delta`. Growing `delta`
/// can only shrink the counted set, so the rate is non-increasing in it.
pub fn violation_rate_margins(
    y_pred: &Tensor,
    edges: &[(usize, usize)],
    threshold: f64,
    delta: f64,
) -> Result<f64, MetricsError> {
    if y_pred.shape().len() != 2 {
        return Err(MetricsError::NotTwoDim(y_pred.shape().to_vec()));
    }
    let (b, l) = (y_pred.shape()[0], y_pred.shape()[1]);
    if !threshold.is_finite() || threshold <= 0.0 || threshold >= 1.0 {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    if !delta.is_finite() || delta < 0.0 || threshold - delta <= 0.0 || threshold + delta >= 1.0 {
        return Err(MetricsError::InvalidDelta(delta));
    }
    for &(parent, child) in edges {
        if parent >= l || child >= l {
            return Err(MetricsError::EdgeOutOfRange {
                parent,
                child,
                labels: l,
            });
        }
    }
    for row in 0..b {
        for col in 0..l {
            let v = y_pred.at2(row, col);
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::PredictionOutOfRange { row, col, value: v });
            }
        }
    }
    // with no samples or no edges there is nothing to violate
    if b == 0 || edges.is_empty() {
        return Ok(0.0);
    }
    let mut violations = 0usize;
    for row in 0..b {
        for &(parent, child) in edges {
            if y_pred.at2(row, parent) < threshold - delta
                && y_pred.at2(row, child) > threshold + delta
            {
                violations += 1;
            }
        }
    }
    Ok(violations as f64 / (b * edges.len()) as f64)
}

/// Result of a paired two-sided t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Paired two-sided t-test on per-position differences `a[i] - b[i]`.
///
/// Uses the sample standard deviation (K - 1 denominator). Differences with
/// zero variance (including a constant non-zero shift) make the statistic
/// undefined or infinite and are reported as an error.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            scores: a.len(),
            labels: b.len(),
        });
    }
    let k = a.len();
    if k < 2 {
        return Err(MetricsError::TooFewPairs(k));
    }
    for &v in a.iter().chain(b.iter()) {
        if !v.is_finite() {
            return Err(MetricsError::NonFiniteScore(v));
        }
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let kf = k as f64;
    let mean = diffs.iter().sum::<f64>() / kf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    if var == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let t = mean / (var.sqrt() / kf.sqrt());
    let df = k - 1;
    let p = student_t_p_two_sided(t, df)?;
    Ok(TTestResult { t, df, p })
}

/// Two-sided p-value of a t statistic:
/// `p = I_x(df/2, 1/2)` with `x = df / (df + t^2)`.
pub fn student_t_p_two_sided(t: f64, df: usize) -> Result<f64, MetricsError> {
    if df == 0 {
        return Err(MetricsError::ZeroDf);
    }
    if !t.is_finite() {
        return Err(MetricsError::NonFiniteScore(t));
    }
    let dff = df as f64;
    let x = dff / (dff + t * t);
    Ok(reg_inc_beta(0.5 * dff, 0.5, x))
}

/// Lanczos approximation (g = 7, 9 coefficients), valid for positive `z`.
fn ln_gamma(z: f64) -> f64 {
    const COEFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // reflection keeps the small-argument branch accurate
        return std::f64::consts::PI.ln() - (std::f64::consts::PI * z).sin().ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = COEFS[0];
    for (i, &c) in COEFS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`, using the continued fraction on
/// whichever side of the symmetry point converges fast.
fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_hand_example() {
        let r = auroc(&[0.8, 0.6, 0.4, 0.2], &[1, 0, 1, 0]).unwrap();
        assert!((r.auroc - 0.75).abs() < 1e-15);
        assert_eq!((r.positives, r.negatives), (2, 2));
    }

    #[test]
    fn auroc_extremes() {
        assert_eq!(
            auroc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap().auroc,
            1.0
        );
        assert_eq!(
            auroc(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap().auroc,
            0.0
        );
    }

    #[test]
    fn auroc_all_tied_is_half() {
        let r = auroc(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]).unwrap();
        assert!((r.auroc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auroc_invariant_under_monotone_transform() {
        let scores = [0.31, 0.77, 0.12, 0.55, 0.91, 0.04];
        let labels = [0u8, 1, 0, 1, 1, 0];
        let base = auroc(&scores, &labels).unwrap().auroc;
        let squashed: Vec<f64> = scores.iter().map(|&s| (5.0 * s).tanh()).collect();
        let transformed = auroc(&squashed, &labels).unwrap().auroc;
        assert!((base - transformed).abs() < 1e-15);
    }

    #[test]
    fn auroc_matches_pair_counting() {
        // brute force: ties between a positive and a negative earn half
        fn brute(scores: &[f64], labels: &[u8]) -> f64 {
            let mut num = 0.0;
            let mut pairs = 0.0;
            for (i, &li) in labels.iter().enumerate() {
                if li != 1 {
                    continue;
                }
                for (j, &lj) in labels.iter().enumerate() {
                    if lj != 0 {
                        continue;
                    }
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
            num / pairs
        }
        let scores = [0.31, 0.77, 0.77, 0.12, 0.55, 0.55, 0.55, 0.91, 0.04, 0.31];
        let labels = [0u8, 1, 0, 0, 1, 1, 0, 1, 0, 1];
        let fast = auroc(&scores, &labels).unwrap().auroc;
        let slow = brute(&scores, &labels);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn auroc_degenerate_labels_error() {
        assert_eq!(
            auroc(&[0.1, 0.9], &[1, 1]).unwrap_err(),
            MetricsError::DegenerateLabels {
                positives: 2,
                negatives: 0
            }
        );
        assert_eq!(
            auroc(&[0.1, 0.9], &[0, 0]).unwrap_err(),
            MetricsError::DegenerateLabels {
                positives: 0,
                negatives: 2
            }
        );
        assert!(matches!(auroc(&[], &[]), Err(MetricsError::Empty)));
        assert!(matches!(
            auroc(&[0.5], &[2]),
            Err(MetricsError::NonBinaryLabel(2))
        ));
        assert!(matches!(
            auroc(&[f64::NAN, 0.2], &[1, 0]),
            Err(MetricsError::NonFiniteScore(_))
        ));
    }

    #[test]
    fn aggregation_hand_values() {
        fn rr(auroc: f64, positives: usize) -> RocResult {
            RocResult {
                auroc,
                positives,
                negatives: 100,
            }
        }
        let mean = mean_auroc(&[rr(0.9, 1), rr(0.7, 1)]).unwrap();
        assert!((mean - 0.8).abs() < 1e-15);
        // prevalences 30 and 10 pull the mean toward the first label
        let w = weighted_auroc(&[rr(0.9, 30), rr(0.7, 10)]).unwrap();
        assert!((w - 0.85).abs() < 1e-15);
        // equal weights reduce to the plain mean
        let eq = weighted_auroc(&[rr(0.9, 5), rr(0.7, 5)]).unwrap();
        assert!((eq - mean).abs() < 1e-15);
        // degenerate weight picks out one label
        let one = weighted_auroc_with(&[0.8, 0.2], &[1.0, 0.0]).unwrap();
        assert!((one - 0.8).abs() < 1e-15);
        assert!(matches!(mean_auroc(&[]), Err(MetricsError::Empty)));
        assert_eq!(
            weighted_auroc(&[rr(0.9, 0)]).unwrap_err(),
            MetricsError::ZeroWeight
        );
        assert!(matches!(
            weighted_auroc_with(&[0.9, 0.8], &[1.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn violation_rate_hand_example() {
        // two samples, one edge; only the first sample violates
        let p = Tensor::from_vec(&[2, 2], vec![0.3, 0.8, 0.8, 0.9]).unwrap();
        let v = violation_rate(&p, &[(0, 1)], 0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn violation_rate_is_strict_at_threshold() {
        let p = Tensor::from_vec(&[1, 2], vec![0.5, 0.8]).unwrap();
        assert_eq!(violation_rate(&p, &[(0, 1)], 0.5).unwrap(), 0.0);
        let p = Tensor::from_vec(&[1, 2], vec![0.3, 0.5]).unwrap();
        assert_eq!(violation_rate(&p, &[(0, 1)], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn violation_rate_uniform_predictions_near_quarter() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let data: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p = Tensor::from_vec(&[n, 2], data).unwrap();
        // P(parent < 0.5) * P(child > 0.5) = 0.25 for independent uniforms
        let v = violation_rate(&p, &[(0, 1)], 0.5).unwrap();
        assert!((v - 0.25).abs() < 0.02, "rate {v}");
    }

    #[test]
    fn violation_rate_margins_monotone_in_delta() {
        let p = Tensor::from_vec(
            &[4, 2],
            vec![0.30, 0.80, 0.45, 0.56, 0.49, 0.52, 0.10, 0.95],
        )
        .unwrap();
        let edges = [(0usize, 1usize)];
        let mut last = f64::INFINITY;
        for &delta in &[0.0, 0.02, 0.06, 0.15, 0.3] {
            let v = violation_rate_margins(&p, &edges, 0.5, delta).unwrap();
            assert!(v <= last, "rate must not grow with delta");
            last = v;
        }
        // widest margin keeps only the most decisive violation
        assert!((last - 0.25).abs() < 1e-15);
    }

    #[test]
    fn violation_rate_input_validation() {
        let p = Tensor::from_vec(&[1, 2], vec![0.3, 0.8]).unwrap();
        // nothing to violate without edges
        assert_eq!(violation_rate(&p, &[], 0.5).unwrap(), 0.0);
        assert!(matches!(
            violation_rate(&p, &[(0, 5)], 0.5),
            Err(MetricsError::EdgeOutOfRange { .. })
        ));
        assert!(matches!(
            violation_rate(&p, &[(0, 1)], 1.5),
            Err(MetricsError::InvalidThreshold(_))
        ));
        assert!(matches!(
            violation_rate_margins(&p, &[(0, 1)], 0.5, 0.6),
            Err(MetricsError::InvalidDelta(_))
        ));
        let bad = Tensor::from_vec(&[1, 2], vec![0.3, 1.8]).unwrap();
        assert!(matches!(
            violation_rate(&bad, &[(0, 1)], 0.5),
            Err(MetricsError::PredictionOutOfRange { .. })
        ));
        let one_d = Tensor::from_vec(&[2], vec![0.3, 0.8]).unwrap();
        assert!(matches!(
            violation_rate(&one_d, &[(0, 1)], 0.5),
            Err(MetricsError::NotTwoDim(_))
        ));
    }

    // Reference values below were frozen from SciPy (special.betainc and
    // stats.ttest_rel) on the same inputs.

    #[test]
    fn reg_inc_beta_matches_reference() {
        let cases = [
            (0.5, 0.5, 0.3, 0.369_010_119_565_545_36),
            (1.0, 0.5, 0.7, 0.452_277_442_494_833_8),
            (2.5, 3.5, 0.4, 0.486_904_191_526_117_6),
            (5.0, 0.5, 0.9, 0.316_642_915_020_012_2),
            (0.5, 5.0, 0.05, 0.515_208_786_901_603),
        ];
        for (a, b, x, want) in cases {
            let got = reg_inc_beta(a, b, x);
            assert!(
                (got - want).abs() < 1e-13,
                "I_{x}({a}, {b}) = {got}, want {want}"
            );
        }
        assert_eq!(reg_inc_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(reg_inc_beta(2.0, 3.0, 1.0), 1.0);
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        // Γ(1) = Γ(2) = 1, Γ(5) = 24, Γ(1/2) = sqrt(pi)
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!(ln_gamma(2.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn t_to_p_matches_reference() {
        let cases = [
            (1.0, 1, 0.5),
            (2.0, 3, 0.139_325_968_558_843_1),
            (3.464_101_615_137_754_4, 2, 0.074_179_900_227_448_54),
            (0.5, 10, 0.627_893_605_742_972_9),
            (4.2, 7, 0.004_035_559_925_219_957),
            (2.776, 4, 0.050_022_778_319_976_4),
            (0.001, 5, 0.999_240_786_772_197_6),
            (12.0, 2, 0.006_872_933_677_158_46),
            (2.5, 30, 0.018_115_649_068_066_706),
        ];
        for (t, df, want) in cases {
            let got = student_t_p_two_sided(t, df).unwrap();
            assert!(
                (got - want).abs() < 1e-12,
                "p(t={t}, df={df}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn t_to_p_df2_closed_form() {
        // for df = 2 the two-sided p has the closed form 1 - t / sqrt(2 + t^2)
        for &t in &[0.1f64, 0.5, 1.0, 2.0, 3.5, 7.0, 20.0] {
            let want = 1.0 - t / (2.0 + t * t).sqrt();
            let got = student_t_p_two_sided(t, 2).unwrap();
            assert!((got - want).abs() < 1e-13, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn paired_t_test_simple_oracle() {
        // differences 1, 2, 3: t = 2 / (1 / sqrt(3)) = 2 sqrt(3)
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((r.t - 3.464_101_615_137_754).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert!((r.p - 0.074_179_900_227_448_55).abs() < 1e-12);
    }

    #[test]
    fn paired_t_test_auroc_vectors() {
        let a = [0.88, 0.91, 0.84, 0.90, 0.87];
        let b = [0.85, 0.90, 0.82, 0.91, 0.83];
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.t - 2.092_457_497_388_747).abs() < 1e-12);
        assert_eq!(r.df, 4);
        assert!((r.p - 0.104_539_999_778_375_39).abs() < 1e-12);
    }

    #[test]
    fn paired_t_test_is_antisymmetric() {
        let a = [0.8, 0.6, 0.9];
        let b = [0.7, 0.65, 0.8];
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        assert!((ab.t + ba.t).abs() < 1e-15);
        assert!((ab.p - ba.p).abs() < 1e-15);
    }

    #[test]
    fn paired_t_test_degenerate_cases() {
        // identical vectors: zero variance
        assert_eq!(
            paired_t_test(&[0.5, 0.5], &[0.5, 0.5]).unwrap_err(),
            MetricsError::ZeroVariance
        );
        // a constant non-zero shift is just as degenerate (dyadic values so
        // the differences are bit-identical)
        assert_eq!(
            paired_t_test(&[0.5, 0.75, 1.0], &[0.25, 0.5, 0.75]).unwrap_err(),
            MetricsError::ZeroVariance
        );
        assert_eq!(
            paired_t_test(&[0.5], &[0.4]).unwrap_err(),
            MetricsError::TooFewPairs(1)
        );
        assert!(matches!(
            paired_t_test(&[0.5, 0.4], &[0.4]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(student_t_p_two_sided(1.0, 0).unwrap_err(), MetricsError::ZeroDf);
    }
}
