//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use langdiar::diarize::{Diarization, DistanceMatrix, Segment};
use langdiar::nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random non-overlapping layout on a millisecond grid: up to
/// `max_segments` segments inside `[0, max_len_ms)`, labels drawn from
/// `labels`, random silence between segments.
pub fn random_layout(r: &mut ChaCha8Rng, labels: &[&str], max_segments: usize, max_len_ms: u32) -> Diarization {
    let n = r.random_range(1..=max_segments);
    let mut cuts: Vec<u32> = (0..2 * n).map(|_| r.random_range(0..max_len_ms)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut segs = Vec::new();
    for w in cuts.chunks_exact(2) {
        if w[1] > w[0] {
            let label = labels[r.random_range(0..labels.len())];
            segs.push(Segment::new(w[0] as f64 / 1000.0, (w[1] - w[0]) as f64 / 1000.0, label).unwrap());
        }
    }
    if segs.is_empty() {
        segs.push(Segment::new(0.0, 1.0, labels[0]).unwrap());
    }
    Diarization::new("u", segs)
}

/// Label active in each millisecond cell (no overlap within a layout).
fn raster(d: &Diarization, cells: usize) -> Vec<Option<String>> {
    let mut out = vec![None; cells];
    for s in d.segments() {
        let a = (s.onset * 1000.0).round() as usize;
        let b = (s.end() * 1000.0).round() as usize;
        for c in out.iter_mut().take(b).skip(a) {
            *c = Some(s.label.clone());
        }
    }
    out
}

/// All maximal injective maps from `hyp` labels to `reference` labels in
/// lexicographic order (reference index ascending, unmapped last).
fn maximal_maps(nh: usize, nr: usize) -> Vec<Vec<Option<usize>>> {
    let size = nh.min(nr);
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(nh: usize, nr: usize, size: usize, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if cur.len() == nh {
            if cur.iter().flatten().count() == size {
                out.push(cur.clone());
            }
            return;
        }
        for i in 0..nr {
            if !cur.contains(&Some(i)) {
                cur.push(Some(i));
                go(nh, nr, size, cur, out);
                cur.pop();
            }
        }
        cur.push(None);
        go(nh, nr, size, cur, out);
        cur.pop();
    }
    go(nh, nr, size, &mut cur, &mut out);
    out
}

/// DER and JER (percent) by counting millisecond cells.
pub fn der_jer_oracle(reference: &Diarization, hyp: &Diarization) -> (f64, f64) {
    let end = reference.end().max(hyp.end());
    let cells = (end * 1000.0).round() as usize + 1;
    let r = raster(reference, cells);
    let h = raster(hyp, cells);
    let rl = reference.labels();
    let hl = hyp.labels();
    let total = r.iter().filter(|c| c.is_some()).count() as f64;

    let mut best: Option<(f64, Vec<Option<usize>>)> = None;
    for map in maximal_maps(hl.len(), rl.len()) {
        let mut err = 0usize;
        for (rc, hc) in r.iter().zip(&h) {
            err += match (rc, hc) {
                (None, None) => 0,
                (Some(_), None) | (None, Some(_)) => 1,
                (Some(a), Some(b)) => {
                    let j = hl.iter().position(|x| x == b).unwrap();
                    usize::from(map[j].map(|i| &rl[i]) != Some(a))
                }
            };
        }
        let der = 100.0 * err as f64 / total;
        if best.as_ref().is_none_or(|b| der < b.0) {
            best = Some((der, map));
        }
    }
    let (der, map) = best.unwrap();

    let mut jer = 0.0;
    for (i, name) in rl.iter().enumerate() {
        jer += match map.iter().position(|&m| m == Some(i)) {
            None => 100.0,
            Some(j) => {
                let (mut inter, mut union) = (0usize, 0usize);
                for (rc, hc) in r.iter().zip(&h) {
                    let a = rc.as_ref() == Some(name);
                    let b = hc.as_ref() == Some(&hl[j]);
                    inter += usize::from(a && b);
                    union += usize::from(a || b);
                }
                100.0 * (1.0 - inter as f64 / union as f64)
            }
        };
    }
    (der, jer / rl.len() as f64)
}

/// Rates at every candidate threshold by direct counting, then linear
/// interpolation at the first threshold where FRR reaches FAR.
pub fn eer_oracle(target: &[f64], nontarget: &[f64]) -> f64 {
    let mut th: Vec<f64> = target.iter().chain(nontarget).copied().collect();
    th.push(f64::INFINITY);
    th.sort_by(|a, b| a.partial_cmp(b).unwrap());
    th.dedup();
    let rate = |t: f64| {
        let frr = target.iter().filter(|&&s| s < t).count() as f64 / target.len() as f64;
        let far = nontarget.iter().filter(|&&s| s >= t).count() as f64 / nontarget.len() as f64;
        (frr, far)
    };
    let curve: Vec<(f64, f64)> = th.iter().map(|&t| rate(t)).collect();
    for k in 1..curve.len() {
        let (a, b) = (curve[k - 1], curve[k]);
        if b.0 - b.1 >= 0.0 {
            let w = (a.1 - a.0) / ((b.0 - b.1) - (a.0 - a.1));
            return 100.0 * (a.0 + w * (b.0 - a.0));
        }
    }
    unreachable!()
}

/// Average linkage recomputing every cluster pair's mean distance from the
/// original matrix at each step.
pub fn ahc_oracle(d: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = d.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        s += d.get(i, j);
                    }
                }
                let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                // Clusters stay ordered by smallest member, so index order
                // is id order.
                if best.is_none_or(|(bd, _, _)| avg < bd) {
                    best = Some((avg, a, b));
                }
            }
        }
        let (_, a, b) = best.unwrap();
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
    }
    let mut labels = vec![0; n];
    let mut order: Vec<&Vec<usize>> = clusters.iter().collect();
    order.sort_by_key(|c| c[0]);
    for (l, c) in order.iter().enumerate() {
        for &i in c.iter() {
            labels[i] = l;
        }
    }
    labels
}

/// `same[i][j]` is true when items `i` and `j` share a cluster.
pub fn coincidence(labels: &[usize]) -> Vec<Vec<bool>> {
    labels.iter().map(|a| labels.iter().map(|b| a == b).collect()).collect()
}

pub fn random_spd(r: &mut ChaCha8Rng, d: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    &a * a.transpose() * scale + DMatrix::identity(d, d) * 0.1
}

pub fn random_vector(r: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| r.random_range(-scale..scale))
}

/// GPLDA distance via the sum/difference decomposition: with `u = x + y`
/// and `v = x − y` (after centring),
/// `d = ½uᵀ(T+B)⁻¹u + ½vᵀ(T−B)⁻¹v − xᵀT⁻¹x − yᵀT⁻¹y`.
pub fn gplda_oracle(
    sigma_w: &DMatrix<f64>,
    sigma_b: &DMatrix<f64>,
    mu: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> f64 {
    let t = sigma_w + sigma_b;
    let (x, y) = (x - mu, y - mu);
    let u = &x + &y;
    let v = &x - &y;
    let q = |m: DMatrix<f64>, z: &DVector<f64>| z.dot(&(m.try_inverse().unwrap() * z));
    0.5 * q(&t + sigma_b, &u) + 0.5 * q(&t - sigma_b, &v) - q(t.clone(), &x) - q(t, &y)
}
