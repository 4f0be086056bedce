//! Change-detection accounting over regions of interest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdReport {
    /// Percent of regions with exactly one detection.
    pub idr: f64,
    /// Percent of regions with no detection.
    pub mr: f64,
    /// Percent of regions with more than one detection.
    pub far: f64,
    /// Mean absolute timing error (seconds) over exactly-one regions.
    pub dm: f64,
    pub regions: usize,
    pub identified: usize,
    pub missed: usize,
    pub over_detected: usize,
}

impl CpdReport {
    /// Builds the percentages from counts. The false-acceptance share is
    /// the complement so that the three always sum to exactly 100.
    pub fn from_counts(identified: usize, missed: usize, over_detected: usize, dm: f64) -> Result<Self> {
        let n = identified + missed + over_detected;
        if n == 0 {
            return Err(Error::Empty("no regions of interest".into()));
        }
        let idr = 100.0 * identified as f64 / n as f64;
        let mr = 100.0 * missed as f64 / n as f64;
        Ok(CpdReport {
            idr,
            mr,
            far: 100.0 - (idr + mr),
            dm,
            regions: n,
            identified,
            missed,
            over_detected,
        })
    }
}

/// Region `k` runs from the midpoint between reference changes `k-1` and
/// `k` to the midpoint between `k` and `k+1`; the outer regions extend to the
/// span edges. Regions are half-open except the last, which includes the
/// span end.
pub fn roi_bounds(ref_changes: &[f64], span: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    if ref_changes.is_empty() {
        return Err(Error::Empty("reference has no change points".into()));
    }
    if ref_changes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("reference change points must be strictly increasing".into()));
    }
    if ref_changes[0] < span.0 || *ref_changes.last().unwrap() > span.1 {
        return Err(Error::Invalid("reference change points lie outside the span".into()));
    }
    let n = ref_changes.len();
    Ok((0..n)
        .map(|k| {
            let lo = if k == 0 { span.0 } else { (ref_changes[k - 1] + ref_changes[k]) / 2.0 };
            let hi = if k + 1 == n { span.1 } else { (ref_changes[k] + ref_changes[k + 1]) / 2.0 };
            (lo, hi)
        })
        .collect())
}

/// Counts detections per region of interest.
pub fn cpd_metrics(ref_changes: &[f64], hyp_changes: &[f64], span: (f64, f64)) -> Result<CpdReport> {
    let rois = roi_bounds(ref_changes, span)?;
    let last = rois.len() - 1;
    let (mut identified, mut missed, mut over) = (0, 0, 0);
    let mut dev = 0.0;
    for (k, &(lo, hi)) in rois.iter().enumerate() {
        let inside: Vec<f64> = hyp_changes
            .iter()
            .copied()
            .filter(|&h| h >= lo && (h < hi || (k == last && h <= hi)))
            .collect();
        match inside.len() {
            0 => missed += 1,
            1 => {
                identified += 1;
                dev += (inside[0] - ref_changes[k]).abs();
            }
            _ => over += 1,
        }
    }
    let dm = if identified > 0 { dev / identified as f64 } else { 0.0 };
    CpdReport::from_counts(identified, missed, over, dm)
}
