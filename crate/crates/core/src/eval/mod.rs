//! Scoring: DER/JER, change-detection accounting and EER.

mod cpd;
mod der;
mod eer;

pub use cpd::{cpd_metrics, roi_bounds, CpdReport};
pub use der::{best_mapping, der, jer, score, ScoreReport, MAX_MAPPING_CLASSES};
pub use eer::{eer, error_rates};

use serde::{Deserialize, Serialize};

use crate::diarize::Diarization;
use crate::error::Result;
use crate::parallel::{try_map_range, Parallelism};

/// Per-utterance reports plus their plain averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub utterances: Vec<(String, ScoreReport)>,
    pub mean_der: f64,
    pub mean_jer: f64,
}

impl BatchReport {
    /// Averages in the given order, so the result does not depend on
    /// scheduling.
    pub fn from_reports(utterances: Vec<(String, ScoreReport)>) -> Self {
        let n = utterances.len().max(1) as f64;
        let mean_der = utterances.iter().map(|u| u.1.der).sum::<f64>() / n;
        let mean_jer = utterances.iter().map(|u| u.1.jer).sum::<f64>() / n;
        BatchReport {
            utterances,
            mean_der,
            mean_jer,
        }
    }

    /// Fixed-width table, one row per utterance and a final mean row.
    pub fn table(&self) -> String {
        let mut s = format!("{:<20} {:>8} {:>8}\n", "utterance", "DER", "JER");
        for (id, r) in &self.utterances {
            s.push_str(&format!("{:<20} {:>8.2} {:>8.2}\n", id, r.der, r.jer));
        }
        s.push_str(&format!("{:<20} {:>8.2} {:>8.2}\n", "mean", self.mean_der, self.mean_jer));
        s
    }
}

/// Scores `(reference, hypothesis)` pairs; output follows input order.
pub fn score_batch(
    pairs: &[(Diarization, Diarization)],
    collar: f64,
    par: Parallelism,
) -> Result<BatchReport> {
    let reports = try_map_range(pairs.len(), par, |i| {
        let (r, h) = &pairs[i];
        Ok::<_, crate::Error>((r.utterance_id.clone(), score(r, h, collar)?))
    })?;
    Ok(BatchReport::from_reports(reports))
}

/// Pools change-detection counts over utterances; `dm` is averaged over all
/// exactly-one regions.
pub fn pool_cpd(reports: &[CpdReport]) -> Result<CpdReport> {
    let (mut i, mut m, mut o, mut dev) = (0, 0, 0, 0.0);
    for r in reports {
        i += r.identified;
        m += r.missed;
        o += r.over_detected;
        dev += r.dm * r.identified as f64;
    }
    CpdReport::from_counts(i, m, o, if i > 0 { dev / i as f64 } else { 0.0 })
}
