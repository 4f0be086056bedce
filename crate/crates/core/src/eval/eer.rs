//! Equal error rate from target and nontarget similarity scores.

use crate::error::{Error, Result};

/// Error rates at threshold `t`: targets below `t` are rejected, nontargets
/// at or above `t` are accepted. Returns fractions.
pub fn error_rates(target: &[f64], nontarget: &[f64], t: f64) -> (f64, f64) {
    let frr = target.iter().filter(|&&s| s < t).count() as f64 / target.len() as f64;
    let far = nontarget.iter().filter(|&&s| s >= t).count() as f64 / nontarget.len() as f64;
    (frr, far)
}

/// Sweeps every score (and +∞) as a threshold and interpolates linearly
/// between the two thresholds where `FRR − FAR` changes sign. Percent.
pub fn eer(target: &[f64], nontarget: &[f64]) -> Result<f64> {
    if target.is_empty() || nontarget.is_empty() {
        return Err(Error::Empty("EER needs target and nontarget scores".into()));
    }
    if target.iter().chain(nontarget).any(|s| s.is_nan()) {
        return Err(Error::Invalid("scores contain NaN".into()));
    }
    let mut tgt = target.to_vec();
    let mut non = nontarget.to_vec();
    tgt.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = tgt.iter().chain(&non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    // Sorted lists let each rate be read off with a partition point.
    let (nt, nn) = (tgt.len() as f64, non.len() as f64);
    let rates = |t: f64| {
        let frr = tgt.partition_point(|&s| s < t) as f64 / nt;
        let far = (non.len() - non.partition_point(|&s| s < t)) as f64 / nn;
        (frr, far)
    };

    // At the smallest score FRR is 0 and FAR is positive.
    let mut prev = rates(thresholds[0]);
    for &t in &thresholds[1..] {
        let cur = rates(t);
        let (d0, d1) = (prev.0 - prev.1, cur.0 - cur.1);
        if d1 >= 0.0 {
            let w = -d0 / (d1 - d0);
            return Ok(100.0 * (prev.0 + w * (cur.0 - prev.0)));
        }
        prev = cur;
    }
    unreachable!("FRR reaches 1 and FAR reaches 0 at +inf")
}
