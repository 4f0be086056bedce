//! DER and JER on an integer millisecond grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diarize::Diarization;
use crate::error::{Error, Result};

/// Largest class count for the exhaustive mapping search.
pub const MAX_MAPPING_CLASSES: usize = 8;

fn to_ms(t: f64) -> i64 {
    (t * 1000.0).round() as i64
}

/// Time (ms) totals needed for any mapping: per-class durations, pairwise
/// overlaps, and the mapping-independent error terms.
#[derive(Debug, Clone)]
struct Tally {
    ref_labels: Vec<String>,
    hyp_labels: Vec<String>,
    ref_time: Vec<i64>,
    hyp_time: Vec<i64>,
    overlap: Vec<Vec<i64>>,
    scored_ref: i64,
    missed: i64,
    false_alarm: i64,
    min_sum: i64,
}

fn intervals(d: &Diarization, labels: &[String]) -> Vec<(i64, i64, usize)> {
    d.segments()
        .iter()
        .map(|s| {
            let k = labels.binary_search(&s.label).expect("label listed");
            (to_ms(s.onset), to_ms(s.end()), k)
        })
        .filter(|(a, b, _)| b > a)
        .collect()
}

fn tally(reference: &Diarization, hypothesis: &Diarization, collar: f64) -> Result<Tally> {
    if reference.is_empty() {
        return Err(Error::Empty("reference has no segments".into()));
    }
    if !(collar.is_finite() && collar >= 0.0) {
        return Err(Error::Config(format!("collar {collar} must be non-negative")));
    }
    let ref_labels = reference.labels();
    let hyp_labels = hypothesis.labels();
    let r = intervals(reference, &ref_labels);
    let h = intervals(hypothesis, &hyp_labels);
    let c = to_ms(collar);

    // Unscored zones around every reference boundary.
    let mut no_score: Vec<(i64, i64)> = Vec::new();
    if c > 0 {
        for &(a, b, _) in &r {
            no_score.push((a - c, a + c));
            no_score.push((b - c, b + c));
        }
    }

    let mut cuts: Vec<i64> = Vec::new();
    for &(a, b, _) in r.iter().chain(&h) {
        cuts.push(a);
        cuts.push(b);
    }
    for &(a, b) in &no_score {
        cuts.push(a);
        cuts.push(b);
    }
    cuts.sort_unstable();
    cuts.dedup();

    let (nr, nh) = (ref_labels.len(), hyp_labels.len());
    let mut t = Tally {
        ref_time: vec![0; nr],
        hyp_time: vec![0; nh],
        overlap: vec![vec![0; nh]; nr],
        ref_labels,
        hyp_labels,
        scored_ref: 0,
        missed: 0,
        false_alarm: 0,
        min_sum: 0,
    };
    let mut active_r = vec![false; nr];
    let mut active_h = vec![false; nh];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        if no_score.iter().any(|&(x, y)| x <= a && b <= y) {
            continue;
        }
        active_r.iter_mut().for_each(|v| *v = false);
        active_h.iter_mut().for_each(|v| *v = false);
        for &(x, y, k) in &r {
            if x <= a && b <= y {
                active_r[k] = true;
            }
        }
        for &(x, y, k) in &h {
            if x <= a && b <= y {
                active_h[k] = true;
            }
        }
        let n_ref = active_r.iter().filter(|&&v| v).count() as i64;
        let n_hyp = active_h.iter().filter(|&&v| v).count() as i64;
        t.scored_ref += len * n_ref;
        t.missed += len * (n_ref - n_hyp).max(0);
        t.false_alarm += len * (n_hyp - n_ref).max(0);
        t.min_sum += len * n_ref.min(n_hyp);
        for i in (0..nr).filter(|&i| active_r[i]) {
            t.ref_time[i] += len;
            for j in (0..nh).filter(|&j| active_h[j]) {
                t.overlap[i][j] += len;
            }
        }
        for j in (0..nh).filter(|&j| active_h[j]) {
            t.hyp_time[j] += len;
        }
    }
    if t.scored_ref == 0 {
        return Err(Error::Empty("reference has no scored time".into()));
    }
    Ok(t)
}

/// `map[j]` is the reference index for hypothesis class `j`. Searches all
/// maximal injective maps in lexicographic order (`Some(0) < Some(1) < ...
/// < None`), keeping the first with the largest matched time.
fn search_mapping(t: &Tally) -> Result<Vec<Option<usize>>> {
    let (nr, nh) = (t.ref_labels.len(), t.hyp_labels.len());
    if nr > MAX_MAPPING_CLASSES || nh > MAX_MAPPING_CLASSES {
        return Err(Error::Invalid(format!(
            "mapping search supports at most {MAX_MAPPING_CLASSES} classes, got {nr} reference and {nh} hypothesis"
        )));
    }
    let size = nr.min(nh);
    let mut best: Option<(i64, Vec<Option<usize>>)> = None;
    let mut cur = Vec::with_capacity(nh);
    let mut used = vec![false; nr];

    fn rec(
        t: &Tally,
        size: usize,
        cur: &mut Vec<Option<usize>>,
        used: &mut [bool],
        matched: i64,
        best: &mut Option<(i64, Vec<Option<usize>>)>,
    ) {
        let j = cur.len();
        if j == t.hyp_labels.len() {
            if cur.iter().flatten().count() == size && best.as_ref().is_none_or(|b| matched > b.0) {
                *best = Some((matched, cur.clone()));
            }
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(Some(i));
                rec(t, size, cur, used, matched + t.overlap[i][j], best);
                cur.pop();
                used[i] = false;
            }
        }
        let skipped = cur.iter().filter(|m| m.is_none()).count();
        if skipped < t.hyp_labels.len() - size {
            cur.push(None);
            rec(t, size, cur, used, matched, best);
            cur.pop();
        }
    }
    rec(t, size, &mut cur, &mut used, 0, &mut best);
    Ok(best.map(|b| b.1).unwrap_or_default())
}

/// Scores for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Percent; can exceed 100 with heavy false alarm.
    pub der: f64,
    pub jer: f64,
    /// Hypothesis label to reference label.
    pub mapping: BTreeMap<String, String>,
    pub per_class_jaccard_error: BTreeMap<String, f64>,
    /// Seconds.
    pub missed: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub scored: f64,
}

/// Hypothesis-to-reference label mapping that minimizes DER.
pub fn best_mapping(reference: &Diarization, hypothesis: &Diarization) -> Result<BTreeMap<String, String>> {
    Ok(score(reference, hypothesis, 0.0)?.mapping)
}

pub fn der(reference: &Diarization, hypothesis: &Diarization) -> Result<f64> {
    Ok(score(reference, hypothesis, 0.0)?.der)
}

pub fn jer(reference: &Diarization, hypothesis: &Diarization) -> Result<f64> {
    Ok(score(reference, hypothesis, 0.0)?.jer)
}

/// DER and JER under one shared mapping, with an optional collar (seconds)
/// excluded around each reference boundary.
pub fn score(reference: &Diarization, hypothesis: &Diarization, collar: f64) -> Result<ScoreReport> {
    let t = tally(reference, hypothesis, collar)?;
    let map = search_mapping(&t)?;
    let matched: i64 = map
        .iter()
        .enumerate()
        .filter_map(|(j, i)| i.map(|i| t.overlap[i][j]))
        .sum();
    let confusion = t.min_sum - matched;
    let der = 100.0 * (t.missed + t.false_alarm + confusion) as f64 / t.scored_ref as f64;

    let mut per_class = BTreeMap::new();
    for (i, name) in t.ref_labels.iter().enumerate() {
        let err = match map.iter().position(|&m| m == Some(i)) {
            Some(j) => {
                let inter = t.overlap[i][j];
                let union = t.ref_time[i] + t.hyp_time[j] - inter;
                if union == 0 {
                    0.0
                } else {
                    100.0 * (1.0 - inter as f64 / union as f64)
                }
            }
            None => 100.0,
        };
        per_class.insert(name.clone(), err);
    }
    let jer = per_class.values().sum::<f64>() / per_class.len() as f64;
    let mapping = map
        .iter()
        .enumerate()
        .filter_map(|(j, i)| i.map(|i| (t.hyp_labels[j].clone(), t.ref_labels[i].clone())))
        .collect();
    Ok(ScoreReport {
        der,
        jer,
        mapping,
        per_class_jaccard_error: per_class,
        missed: t.missed as f64 / 1000.0,
        false_alarm: t.false_alarm as f64 / 1000.0,
        confusion: confusion as f64 / 1000.0,
        scored: t.scored_ref as f64 / 1000.0,
    })
}
