//! Conversions between label sequences, segments and segment windows.

use crate::diarize::types::{Diarization, Segment};
use crate::error::{Error, Result};

/// Segments shorter than this many voiced frames are merged away.
pub const MIN_SEGMENT_FRAMES: usize = 4;

/// Cuts a label sequence into runs. A run breaks where the label changes or
/// where consecutive locations are more than one `step` apart; each run
/// becomes `[first location, last location + step)`.
pub fn labels_to_segments<L: ToString + PartialEq>(
    utterance_id: &str,
    labels: &[L],
    locations: &[f64],
    step: f64,
) -> Result<Diarization> {
    if labels.len() != locations.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: locations.len(),
        });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!("step {step} must be positive")));
    }
    let gap = step * (1.0 + 1e-6);
    let mut segments = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        let boundary = i == labels.len()
            || labels[i] != labels[start]
            || locations[i] - locations[i - 1] > gap;
        if boundary {
            let onset = locations[start];
            let end = locations[i - 1] + step;
            segments.push(Segment::new(onset, end - onset, labels[start].to_string())?);
            start = i;
        }
    }
    Ok(Diarization::new(utterance_id, segments))
}

/// Label sequence on a fixed tick (`None` marks silence), tick `i` starting
/// at `i * tick`.
pub fn tick_labels_to_segments<L: ToString + PartialEq>(
    utterance_id: &str,
    labels: &[Option<L>],
    tick: f64,
) -> Result<Diarization> {
    let (locs, labs): (Vec<f64>, Vec<&L>) = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.as_ref().map(|l| (i as f64 * tick, l)))
        .unzip();
    let labs: Vec<String> = labs.into_iter().map(ToString::to_string).collect();
    labels_to_segments(utterance_id, &labs, &locs, tick)
}

/// Rasterizes a diarization at `step`: cell `i` covers `[i*step, (i+1)*step)`
/// and takes the label active at its centre.
pub fn segments_to_labels(d: &Diarization, step: f64, span_end: f64) -> Result<Vec<Option<String>>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!("step {step} must be positive")));
    }
    let cells = (span_end / step).round() as usize;
    Ok((0..cells)
        .map(|i| {
            let t = (i as f64 + 0.5) * step;
            d.segments()
                .iter()
                .find(|s| s.onset <= t && t < s.end())
                .map(|s| s.label.clone())
        })
        .collect())
}

/// Segment spans and midpoints in seconds, with the utterance start and end
/// acting as the outer change points.
pub fn segment_midpoints(change_times: &[f64], start: f64, end: f64) -> Result<Vec<(f64, f64, f64)>> {
    if !(end > start) {
        return Err(Error::Invalid(format!("empty span [{start}, {end}]")));
    }
    if change_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invalid("change points must be sorted".into()));
    }
    let mut bounds = vec![start];
    bounds.extend(change_times.iter().copied().filter(|&t| t > start && t < end));
    bounds.push(end);
    bounds.dedup();
    Ok(bounds.windows(2).map(|w| (w[0], w[1], (w[0] + w[1]) / 2.0)).collect())
}

/// A segment of voiced frames `[start, end)` and the window used to embed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentWindow {
    pub start: usize,
    pub end: usize,
    pub window_start: usize,
    pub window_len: usize,
}

/// Splits `l` voiced frames at `changes` (the outer boundaries 0 and `l` are
/// implied) and places an `n`-frame window centred on each segment midpoint,
/// clipped to the segment. Segments shorter than [`MIN_SEGMENT_FRAMES`] are
/// merged into the previous segment (the next one for the first segment).
pub fn segment_windows(l: usize, changes: &[usize], n: usize) -> Result<Vec<SegmentWindow>> {
    if n == 0 {
        return Err(Error::Config("analysis window must be at least 1 frame".into()));
    }
    if l == 0 {
        return Err(Error::Empty("no voiced frames".into()));
    }
    if changes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invalid("change points must be sorted".into()));
    }
    let mut bounds = vec![0];
    bounds.extend(changes.iter().copied().filter(|&c| c > 0 && c < l));
    bounds.push(l);
    bounds.dedup();

    let mut spans: Vec<(usize, usize)> = bounds.windows(2).map(|w| (w[0], w[1])).collect();
    let mut i = 0;
    while spans.len() > 1 && i < spans.len() {
        let (s, e) = spans[i];
        if e - s >= MIN_SEGMENT_FRAMES {
            i += 1;
            continue;
        }
        log::warn!("segment of {} voiced frames at {s} merged into its neighbour", e - s);
        if i == 0 {
            spans[1].0 = s;
        } else {
            spans[i - 1].1 = e;
        }
        spans.remove(i);
    }

    Ok(spans
        .into_iter()
        .map(|(start, end)| {
            let len = end - start;
            let window_len = n.min(len);
            let mid = (start + end) / 2;
            let ideal = (mid + 1).saturating_sub(window_len / 2);
            let window_start = ideal.clamp(start, end - window_len);
            SegmentWindow {
                start,
                end,
                window_start,
                window_len,
            }
        })
        .collect())
}
