//! Maximum null rejection probability, weighted average power and the
//! size-corrected power.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mnrp: Option<f64>,
    pub wap: Option<f64>,
    pub sc_wap: Option<f64>,
    /// Amount added to every critical value to bring the maximum null
    /// rejection rate to the nominal level.
    pub size_correction: Option<f64>,
}

/// Share of margins `T - cv` above `shift`, i.e. rejections when `shift`
/// is added to the critical value.
pub fn rejection_rate(margins: &[f64], shift: f64) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    margins.iter().filter(|&&m| m > shift).count() as f64 / margins.len() as f64
}

fn max_rate(margins: &[Vec<f64>], ids: &[usize], shift: f64) -> f64 {
    ids.iter().map(|&i| rejection_rate(&margins[i], shift)).fold(0.0, f64::max)
}

/// Smallest shift `c` with maximum null rejection at most `α`, found by
/// bisection. When lowering the critical value to `c` would not change any
/// null decision the correction is reported as zero.
pub fn size_correction(margins: &[Vec<f64>], null: &[usize], alpha: f64) -> f64 {
    let finite = null.iter().flat_map(|&i| margins[i].iter().copied()).filter(|m| m.is_finite());
    let (lo_m, hi_m) = finite.fold((0.0_f64, 0.0_f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
    let mut lo = lo_m - 1.0;
    let mut hi = hi_m + 1.0;
    // Invariant: max_rate(lo) > α (or lo is below every margin), max_rate(hi) <= α.
    if max_rate(margins, null, lo) <= alpha {
        hi = lo;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if max_rate(margins, null, mid) <= alpha {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    // Snap to the margin value the bisection converged to.
    let snapped = null
        .iter()
        .flat_map(|&i| margins[i].iter().copied())
        .filter(|&m| m.is_finite() && m >= lo && m <= hi)
        .fold(hi, f64::min);
    let c = if max_rate(margins, null, snapped) <= alpha { snapped } else { hi };
    if c < 0.0 && max_rate(margins, null, c) == max_rate(margins, null, 0.0) {
        0.0
    } else {
        c
    }
}

/// Metrics from stored margins per point (`margins[point][rep]`).
pub fn compute_metrics(margins: &[Vec<f64>], null: &[usize], alt: &[usize], alpha: f64) -> Metrics {
    let mnrp = (!null.is_empty()).then(|| max_rate(margins, null, 0.0));
    let mean_rate = |shift: f64| alt.iter().map(|&i| rejection_rate(&margins[i], shift)).sum::<f64>() / alt.len() as f64;
    let wap = (!alt.is_empty()).then(|| mean_rate(0.0));
    let correction = (!null.is_empty()).then(|| size_correction(margins, null, alpha));
    let sc_wap = match (correction, alt.is_empty()) {
        (Some(c), false) => Some(mean_rate(c)),
        _ => None,
    };
    Metrics { mnrp, wap, sc_wap, size_correction: correction }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_rates() {
        let margins = vec![vec![-1.0, -2.0, -0.5], vec![-3.0, -1.0, -2.0]];
        let m = compute_metrics(&margins, &[0], &[1], 0.05);
        assert_eq!(m.mnrp, Some(0.0));
        assert_eq!(m.wap, Some(0.0));
        assert!(m.size_correction.unwrap() <= 0.0);
    }

    #[test]
    fn exact_level_needs_no_correction() {
        let mut null: Vec<f64> = (0..100).map(|i| -(i as f64) - 1.0).collect();
        for v in null.iter_mut().take(5) {
            *v = 1.0;
        }
        let alt: Vec<f64> = (0..100).map(|i| i as f64 / 10.0 - 0.5).collect();
        let margins = vec![null, alt];
        let m = compute_metrics(&margins, &[0], &[1], 0.05);
        assert_eq!(m.mnrp, Some(0.05));
        assert_eq!(m.size_correction, Some(0.0));
        assert_eq!(m.sc_wap, m.wap);
    }

    #[test]
    fn oversized_is_corrected_upward() {
        let null: Vec<f64> = (0..100).map(|i| 1.0 - i as f64 / 50.0).collect();
        let margins = vec![null];
        let c = size_correction(&margins, &[0], 0.05);
        assert!(c > 0.0);
        assert!(rejection_rate(&margins[0], c) <= 0.05);
        assert!(rejection_rate(&margins[0], c - 1e-9) > 0.05);
    }
}
