use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaps smaller than this (seconds) count as contiguous when merging.
pub const MERGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub onset: f64,
    pub duration: f64,
    pub label: String,
}

impl Segment {
    pub fn new(onset: f64, duration: f64, label: impl Into<String>) -> Result<Self> {
        if !(onset.is_finite() && onset >= 0.0) {
            return Err(Error::Invalid(format!("segment onset {onset} must be >= 0")));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Invalid(format!("segment duration {duration} must be > 0")));
        }
        Ok(Segment {
            onset,
            duration,
            label: label.into(),
        })
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Labeled segments of one utterance, sorted by onset, with contiguous
/// same-label neighbours merged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diarization {
    pub utterance_id: String,
    segments: Vec<Segment>,
}

impl Diarization {
    pub fn new(utterance_id: impl Into<String>, mut segments: Vec<Segment>) -> Self {
        segments.sort_by(|a, b| a.onset.total_cmp(&b.onset).then_with(|| a.label.cmp(&b.label)));
        let mut merged: Vec<Segment> = Vec::with_capacity(segments.len());
        for s in segments {
            if let Some(last) = merged.last_mut() {
                if last.label == s.label && (s.onset - last.end()).abs() <= MERGE_TOLERANCE {
                    last.duration = s.end() - last.onset;
                    continue;
                }
            }
            merged.push(s);
        }
        Diarization {
            utterance_id: utterance_id.into(),
            segments: merged,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.segments.iter().map(|s| s.label.clone()).collect();
        l.sort();
        l.dedup();
        l
    }

    pub fn end(&self) -> f64 {
        self.segments.iter().map(Segment::end).fold(0.0, f64::max)
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Times where the label changes between consecutive segments; the
    /// change is placed at the onset of the new label's segment.
    pub fn change_points(&self) -> Vec<f64> {
        self.segments
            .windows(2)
            .filter(|w| w[0].label != w[1].label)
            .map(|w| w[1].onset)
            .collect()
    }
}
