use crate::error::{Error, Result};

/// Trapezoidal area under a per-episode curve, one unit per episode step.
pub fn compute_auc(curve: &[f64]) -> f64 {
    curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

/// Pointwise mean across equally long curves.
pub fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let Some(len) = curves.first().map(Vec::len) else {
        return Vec::new();
    };
    let n = curves.len() as f64;
    (0..len).map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / n).collect()
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `q·(n−1)` in the sorted sample).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Pointwise `q_low` / `q_high` percentiles across trial curves, plus the mean curve.
pub fn percentile_bands(curves: &[Vec<f64>], q_low: f64, q_high: f64) -> Result<Bands> {
    if curves.len() < 2 {
        return Err(Error::TooFewTrials {
            needed: 2,
            got: curves.len(),
        });
    }
    let len = curves[0].len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidConfig("trial curves differ in length".into()));
    }
    let mut lower = Vec::with_capacity(len);
    let mut upper = Vec::with_capacity(len);
    let mut column = vec![0.0; curves.len()];
    for i in 0..len {
        for (slot, c) in column.iter_mut().zip(curves) {
            *slot = c[i];
        }
        column.sort_by(f64::total_cmp);
        lower.push(quantile(&column, q_low));
        upper.push(quantile(&column, q_high));
    }
    Ok(Bands {
        lower,
        mean: mean_curve(curves),
        upper,
    })
}

/// Trailing moving average; the first points average over what is available.
pub fn smooth(curve: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(curve.len());
    let mut acc = 0.0;
    for i in 0..curve.len() {
        acc += curve[i];
        if i >= w {
            acc -= curve[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    /// P(at least `wins` successes in `wins + losses` fair coin flips).
    pub p_value: f64,
}

/// One-sided paired sign test of `a > b`; ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "sign test needs paired samples");
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let n = wins + losses;
    // Σ_{k ≥ wins} C(n, k) / 2^n, accumulated in log space for stability
    let ln_choose = |k: usize| -> f64 { (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum() };
    let p_value = if n == 0 {
        1.0
    } else {
        (wins..=n)
            .map(|k| (ln_choose(k) - n as f64 * std::f64::consts::LN_2).exp())
            .sum::<f64>()
            .min(1.0)
    };
    SignTest { wins, losses, p_value }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: String,
    pub trials: usize,
    pub bands: Option<Bands>,
    pub mean_curve: Vec<f64>,
    /// AUC of the across-trial mean curve.
    pub auc: f64,
    /// 5th / 95th percentile of the per-trial AUCs.
    pub auc_ci_low: f64,
    pub auc_ci_high: f64,
    pub per_trial_auc: Vec<f64>,
}

pub fn summarize_arm(arm: &str, curves: &[Vec<f64>]) -> ArmSummary {
    let mean = mean_curve(curves);
    let per_trial_auc: Vec<f64> = curves.iter().map(|c| compute_auc(c)).collect();
    let mut sorted = per_trial_auc.clone();
    sorted.sort_by(f64::total_cmp);
    let auc = compute_auc(&mean);
    let (lo, hi) = if sorted.is_empty() {
        (auc, auc)
    } else {
        (quantile(&sorted, 0.05), quantile(&sorted, 0.95))
    };
    ArmSummary {
        arm: arm.to_string(),
        trials: curves.len(),
        bands: percentile_bands(curves, 0.05, 0.95).ok(),
        mean_curve: mean,
        auc,
        auc_ci_low: lo,
        auc_ci_high: hi,
        per_trial_auc,
    }
}
