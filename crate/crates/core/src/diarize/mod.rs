//! Fixed-segmentation and change-point diarization.

mod ahc;
mod contour;
mod pipeline;
mod segments;
mod types;

pub use ahc::{ahc, ahc_vectors, DistanceMatrix};
pub use contour::{
    contour_from_windows, divergence_contour, normalized_hamming, pick_change_points, round_to_odd,
    smooth_contour, threshold_contour, ChangePointConfig, DivergenceContour,
};
pub use pipeline::{
    cluster_label, diarize_changepoint, diarize_changepoint_detailed, diarize_fixed,
    diarize_fixed_embeddings, ChangePointOutcome, Pipeline,
};
pub use segments::{
    labels_to_segments, segment_midpoints, segment_windows, segments_to_labels,
    tick_labels_to_segments, SegmentWindow, MIN_SEGMENT_FRAMES,
};
pub use types::{Diarization, Segment, MERGE_TOLERANCE};
