//! Bottom-up average-linkage clustering.
//!
//! The cluster-to-cluster distance is the arithmetic mean of all pairwise
//! distances between original members. Merges proceed on the closest pair;
//! equal distances resolve to the lexicographically smallest pair of
//! cluster ids, where a cluster's id is its smallest member index.

use nalgebra::DVector;

use crate::backend::Scorer;
use crate::error::{Error, Result};
use crate::parallel::Parallelism;

/// Upper-triangular pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    fn index(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < n);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// `rows[i][k]` is the distance between `i` and `i + 1 + k`.
    pub fn from_rows(n: usize, rows: Vec<Vec<f64>>) -> Self {
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for (i, row) in rows.into_iter().enumerate() {
            debug_assert_eq!(row.len(), n - i - 1);
            data.extend(row);
        }
        DistanceMatrix { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                data.push(f(i, j));
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.data[Self::index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.data[Self::index(self.n, j, i)],
        }
    }
}

/// Relabels clusters 0.. in order of first appearance.
fn relabel_by_first_occurrence(raw: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    raw.iter()
        .map(|&r| match map.iter().find(|(k, _)| *k == r) {
            Some(&(_, v)) => v,
            None => {
                let v = map.len();
                map.push((r, v));
                v
            }
        })
        .collect()
}

struct State {
    n: usize,
    active: Vec<bool>,
    size: Vec<f64>,
    sums: Vec<f64>,
    nn: Vec<Option<usize>>,
    nn_dist: Vec<f64>,
}

impl State {
    fn avg(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.sums[DistanceMatrix::index(self.n, a, b)] / (self.size[a] * self.size[b])
    }

    fn refresh(&mut self, i: usize) {
        let mut best: Option<(usize, f64)> = None;
        for j in (i + 1)..self.n {
            if !self.active[j] {
                continue;
            }
            let d = self.avg(i, j);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        self.nn[i] = best.map(|b| b.0);
        self.nn_dist[i] = best.map_or(f64::INFINITY, |b| b.1);
    }
}

/// Clusters into `k` groups. Labels are assigned by first occurrence. With
/// fewer than `k` items every item is its own cluster.
pub fn ahc(dist: &DistanceMatrix, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Config("cluster count must be at least 1".into()));
    }
    let n = dist.len();
    if n <= k {
        if n < k {
            log::warn!("{n} vectors for {k} clusters; each vector is its own cluster");
        }
        return Ok((0..n).collect());
    }
    if dist.data.iter().any(|d| d.is_nan()) {
        return Err(Error::Invalid("distance matrix contains NaN".into()));
    }
    let mut st = State {
        n,
        active: vec![true; n],
        size: vec![1.0; n],
        sums: dist.data.clone(),
        nn: vec![None; n],
        nn_dist: vec![f64::INFINITY; n],
    };
    for i in 0..n {
        st.refresh(i);
    }
    let mut owner: Vec<usize> = (0..n).collect();
    let mut remaining = n;
    while remaining > k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if st.active[i] && st.nn[i].is_some() && best.is_none_or(|(_, bd)| st.nn_dist[i] < bd) {
                best = Some((i, st.nn_dist[i]));
            }
        }
        let (a, _) = best.expect("at least two active clusters remain");
        let b = st.nn[a].expect("selected row has a neighbour");

        for c in 0..n {
            if st.active[c] && c != a && c != b {
                let (ca, cb) = (
                    DistanceMatrix::index(n, c.min(a), c.max(a)),
                    DistanceMatrix::index(n, c.min(b), c.max(b)),
                );
                st.sums[ca] += st.sums[cb];
            }
        }
        st.size[a] += st.size[b];
        st.active[b] = false;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        remaining -= 1;

        for c in 0..n {
            if !st.active[c] {
                continue;
            }
            if c == a || st.nn[c] == Some(a) || st.nn[c] == Some(b) {
                st.refresh(c);
            } else if c < a {
                let d = st.avg(c, a);
                if d < st.nn_dist[c] || (d == st.nn_dist[c] && st.nn[c].is_some_and(|j| a < j)) {
                    st.nn[c] = Some(a);
                    st.nn_dist[c] = d;
                }
            }
        }
    }
    Ok(relabel_by_first_occurrence(&owner))
}

/// Clusters vectors with the scorer's distance.
pub fn ahc_vectors(
    vectors: &[DVector<f64>],
    scorer: &Scorer,
    k: usize,
    par: Parallelism,
) -> Result<Vec<usize>> {
    ahc(&scorer.distance_matrix(vectors, par)?, k)
}
