//! Divergence contour, smoothing, threshold and peak picking.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::backend::{ProjectionSet, Scorer};
use crate::embedding::{sliding_extract_with, Extractor};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::parallel::{try_map_range, Parallelism};

/// Change-detection hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePointConfig {
    /// Threshold amplification factor.
    pub alpha: f64,
    /// Smoothing window is `N / delta` frames.
    pub delta: f64,
    /// Minimum peak distance is `gamma * N` frames.
    pub gamma: f64,
    /// Analysis window `N` in voiced frames.
    pub window: usize,
}

impl ChangePointConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("delta", self.delta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        if self.window == 0 {
            return Err(Error::Config("analysis window must be at least 1 frame".into()));
        }
        Ok(())
    }

    /// Hamming length: `N / delta` rounded to the nearest odd integer.
    pub fn smoothing_len(&self) -> usize {
        round_to_odd(self.window as f64 / self.delta)
    }

    /// `round(gamma * N)`, at least 1.
    pub fn min_peak_distance(&self) -> usize {
        ((self.gamma * self.window as f64).round() as usize).max(1)
    }
}

/// Nearest odd integer (halfway cases go up), at least 1.
pub fn round_to_odd(x: f64) -> usize {
    if !(x.is_finite() && x > 1.0) {
        return 1;
    }
    2 * ((x - 1.0) / 2.0).round() as usize + 1
}

/// Per-position divergence between adjacent windows.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceContour {
    pub values: Vec<f64>,
    /// Voiced-frame index where the right window starts.
    pub positions: Vec<usize>,
    /// Start time of that voiced frame.
    pub times: Vec<f64>,
}

impl DivergenceContour {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Contour from projected window embeddings: `window_vectors[j]` embeds
/// voiced frames `j..j+n`. For each `i` in `n..=l-n` the left window is
/// `i-n..i` and the right window `i..i+n`.
pub fn contour_from_windows(
    window_vectors: &[DVector<f64>],
    frame_starts: &[f64],
    n: usize,
    scorer: &Scorer,
    par: Parallelism,
) -> Result<DivergenceContour> {
    let l = frame_starts.len();
    if n == 0 || l < 2 * n {
        return Err(Error::TooShort {
            available: l,
            required: 2 * n.max(1),
        });
    }
    if window_vectors.len() != l - n + 1 {
        return Err(Error::DimensionMismatch {
            expected: l - n + 1,
            found: window_vectors.len(),
        });
    }
    let count = l - 2 * n + 1;
    let values = try_map_range(count, par, |k| {
        let i = n + k;
        let d = scorer.distance(&window_vectors[i - n], &window_vectors[i])?;
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Invalid(format!("non-finite divergence at voiced frame {i}")))
        }
    })?;
    let positions: Vec<usize> = (n..=l - n).collect();
    Ok(DivergenceContour {
        times: positions.iter().map(|&p| frame_starts[p]).collect(),
        values,
        positions,
    })
}

/// Embeds every window of `voiced`, projects it, and scores adjacent pairs.
pub fn divergence_contour(
    voiced: &FeatureSequence,
    extractor: &dyn Extractor,
    projection: &ProjectionSet,
    scorer: &Scorer,
    n: usize,
    par: Parallelism,
) -> Result<DivergenceContour> {
    if n == 0 || voiced.len() < 2 * n {
        return Err(Error::TooShort {
            available: voiced.len(),
            required: 2 * n.max(1),
        });
    }
    let emb = sliding_extract_with(extractor, voiced, n, 1, par)?;
    let projected = projection.apply_all(&emb.vectors, par)?;
    contour_from_windows(&projected, &voiced.frame_starts, n, scorer, par)
}

/// Hamming window of odd length scaled to unit sum.
pub fn normalized_hamming(len: usize) -> Vec<f64> {
    if len <= 1 {
        return vec![1.0; len];
    }
    let w: Vec<f64> = (0..len)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / (len - 1) as f64).cos())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Same-length convolution with a unit-sum Hamming window, reflecting the
/// contour at both ends (`d c b | a b c d | c b a`).
pub fn smooth_contour(values: &[f64], h_len: usize) -> Result<Vec<f64>> {
    if h_len == 0 || h_len.is_multiple_of(2) {
        return Err(Error::Config(format!("smoothing length {h_len} must be odd and positive")));
    }
    if h_len > values.len() {
        return Err(Error::TooShort {
            available: values.len(),
            required: h_len,
        });
    }
    let h = normalized_hamming(h_len);
    let half = (h_len / 2) as isize;
    let len = values.len() as isize;
    let at = |i: isize| -> f64 {
        let mut j = i;
        if j < 0 {
            j = -j;
        }
        if j >= len {
            j = 2 * (len - 1) - j;
        }
        values[j.clamp(0, len - 1) as usize]
    };
    Ok((0..len)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(k, w)| w * at(i + half - k as isize))
                .sum()
        })
        .collect())
}

/// Constant threshold `alpha * mean(values)` at every position.
pub fn threshold_contour(values: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("empty contour".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(vec![alpha * mean; values.len()])
}

/// Interior local maxima strictly above the threshold, suppressed greedily
/// by height (ties to the earlier index): a peak closer than `min_dist` to
/// an already kept peak is dropped. Plateaus report their middle index.
/// Returns sorted contour indices.
pub fn pick_change_points(values: &[f64], threshold: &[f64], min_dist: usize) -> Result<Vec<usize>> {
    if threshold.len() != values.len() && threshold.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            found: threshold.len(),
        });
    }
    let th = |i: usize| if threshold.len() == 1 { threshold[0] } else { threshold[i] };
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < values.len() {
        if values[i] > values[i - 1] {
            let mut e = i;
            while e + 1 < values.len() && values[e + 1] == values[i] {
                e += 1;
            }
            if e + 1 < values.len() && values[e + 1] < values[i] {
                let mid = (i + e) / 2;
                if values[mid] > th(mid) {
                    peaks.push(mid);
                }
            }
            i = e + 1;
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in peaks {
        if kept.iter().all(|&k| k.abs_diff(p) >= min_dist) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    Ok(kept)
}
