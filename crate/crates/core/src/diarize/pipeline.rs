//! End-to-end diarization of one utterance.

use nalgebra::DVector;

use crate::backend::{ProjectionSet, Scorer};
use crate::diarize::ahc::ahc_vectors;
use crate::diarize::contour::{
    divergence_contour, pick_change_points, smooth_contour, threshold_contour, ChangePointConfig,
    DivergenceContour,
};
use crate::diarize::segments::{labels_to_segments, segment_windows, SegmentWindow};
use crate::diarize::types::Diarization;
use crate::embedding::{sliding_extract_with, EmbeddingSequence, Extractor};
use crate::error::{Error, Result};
use crate::features::{energy_vad, FeatureSequence};
use crate::parallel::Parallelism;

/// Hypothesis labels are `L0`, `L1`, ... by cluster index.
pub fn cluster_label(c: usize) -> String {
    format!("L{c}")
}

/// Everything needed to run either inference strategy.
pub struct Pipeline<'a> {
    pub extractor: &'a dyn Extractor,
    pub projection: &'a ProjectionSet,
    pub scorer: &'a Scorer,
    /// Analysis window `N` in voiced frames.
    pub window: usize,
    /// Number of clusters `K`.
    pub clusters: usize,
    /// Window hop for fixed segmentation, in voiced frames.
    pub shift: usize,
    /// Energy VAD factor; `None` keeps the sequence's own mask.
    pub vad_factor: Option<f64>,
    pub parallelism: Parallelism,
}

impl Pipeline<'_> {
    fn voiced(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        match self.vad_factor {
            Some(f) => energy_vad(seq, f)?.voiced(),
            None => seq.voiced(),
        }
    }

    fn project(&self, xs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.projection.apply_all(xs, self.parallelism)
    }
}

/// Gives every voiced frame a label and converts the runs to segments.
fn frame_labels_to_diarization(
    utterance_id: &str,
    voiced: &FeatureSequence,
    frame_labels: &[usize],
) -> Result<Diarization> {
    let names: Vec<String> = frame_labels.iter().map(|&c| cluster_label(c)).collect();
    labels_to_segments(utterance_id, &names, &voiced.frame_starts, voiced.spec.frame_shift)
}

/// Fixed segmentation: sliding windows, projection, AHC. Each voiced frame
/// takes the label of the window centred on it (the first and last windows
/// extend to the utterance edges).
pub fn diarize_fixed(utterance_id: &str, seq: &FeatureSequence, p: &Pipeline<'_>) -> Result<Diarization> {
    let voiced = p.voiced(seq)?;
    if voiced.len() < p.window {
        return Err(Error::TooShort {
            available: voiced.len(),
            required: p.window,
        });
    }
    let emb = sliding_extract_with(p.extractor, &voiced, p.window, p.shift, p.parallelism)?;
    let projected = p.project(&emb.vectors)?;
    let labels = ahc_vectors(&projected, p.scorer, p.clusters, p.parallelism)?;
    let half = p.window / 2;
    let frame_labels: Vec<usize> = (0..voiced.len())
        .map(|j| {
            let k = j.saturating_sub(half) / p.shift;
            labels[k.min(labels.len() - 1)]
        })
        .collect();
    frame_labels_to_diarization(utterance_id, &voiced, &frame_labels)
}

/// Fixed segmentation over precomputed window embeddings; each label covers
/// `step` seconds from its window start.
pub fn diarize_fixed_embeddings(
    utterance_id: &str,
    emb: &EmbeddingSequence,
    p: &Pipeline<'_>,
    step: f64,
) -> Result<Diarization> {
    if emb.is_empty() {
        return Err(Error::Empty("no embeddings".into()));
    }
    let projected = p.project(&emb.vectors)?;
    let labels = ahc_vectors(&projected, p.scorer, p.clusters, p.parallelism)?;
    let names: Vec<String> = labels.iter().map(|&c| cluster_label(c)).collect();
    labels_to_segments(utterance_id, &names, &emb.starts, step)
}

/// Intermediate results of change-point diarization.
#[derive(Debug, Clone)]
pub struct ChangePointOutcome {
    pub diarization: Diarization,
    pub contour: DivergenceContour,
    pub smoothed: Vec<f64>,
    pub threshold: f64,
    /// Detected change positions in voiced-frame indices.
    pub change_positions: Vec<usize>,
    /// Detected change times in seconds.
    pub change_times: Vec<f64>,
    pub segments: Vec<SegmentWindow>,
    pub segment_labels: Vec<usize>,
}

/// Change-point diarization: contour, smoothing, threshold, peaks, one
/// embedding per segment, AHC over segments.
pub fn diarize_changepoint(
    utterance_id: &str,
    seq: &FeatureSequence,
    p: &Pipeline<'_>,
    cp: &ChangePointConfig,
) -> Result<Diarization> {
    Ok(diarize_changepoint_detailed(utterance_id, seq, p, cp)?.diarization)
}

pub fn diarize_changepoint_detailed(
    utterance_id: &str,
    seq: &FeatureSequence,
    p: &Pipeline<'_>,
    cp: &ChangePointConfig,
) -> Result<ChangePointOutcome> {
    cp.validate()?;
    if cp.window != p.window {
        return Err(Error::Config(format!(
            "change-point window {} differs from pipeline window {}",
            cp.window, p.window
        )));
    }
    let voiced = p.voiced(seq)?;
    let n = p.window;
    let contour = divergence_contour(&voiced, p.extractor, p.projection, p.scorer, n, p.parallelism)?;

    let mut h_len = cp.smoothing_len();
    if h_len > contour.len() {
        let clipped = if contour.len() % 2 == 1 { contour.len() } else { contour.len() - 1 };
        log::warn!("smoothing window {h_len} exceeds contour length {}; using {clipped}", contour.len());
        h_len = clipped;
    }
    let smoothed = smooth_contour(&contour.values, h_len)?;
    let threshold = threshold_contour(&smoothed, cp.alpha)?[0];
    let peaks = pick_change_points(&smoothed, &[threshold], cp.min_peak_distance())?;
    let change_positions: Vec<usize> = peaks.iter().map(|&k| contour.positions[k]).collect();

    let segments = segment_windows(voiced.len(), &change_positions, n)?;
    let raw: Vec<DVector<f64>> = segments
        .iter()
        .map(|s| p.extractor.extract(voiced.features.rows(s.window_start, s.window_len)))
        .collect();
    let projected = p.project(&raw)?;
    let segment_labels = if projected.len() == 1 {
        vec![0]
    } else {
        ahc_vectors(&projected, p.scorer, p.clusters, p.parallelism)?
    };

    let mut frame_labels = vec![0; voiced.len()];
    for (s, &c) in segments.iter().zip(&segment_labels) {
        frame_labels[s.start..s.end].fill(c);
    }
    let diarization = frame_labels_to_diarization(utterance_id, &voiced, &frame_labels)?;
    Ok(ChangePointOutcome {
        diarization,
        change_times: change_positions.iter().map(|&i| voiced.frame_starts[i]).collect(),
        change_positions,
        contour,
        smoothed,
        threshold,
        segments,
        segment_labels,
    })
}
