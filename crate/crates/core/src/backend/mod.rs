//! Statistical back-end: projections, GPLDA, cosine scoring and trials.
//!
//! A trained [`ProjectionSet`] is always applied in the same order:
//! subtract mean, LDA, WCCN, whitening, length normalization (each stage
//! optional except the mean).

mod gplda;
mod trials;

pub use gplda::{gplda_distance, train_gplda, GpldaModel, GpldaScorer, PreparedVector};
pub use trials::{score_trials, DEFAULT_TRIALS, score_trials_with, Trial, TrialScores, TrialSet};

use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diarize::DistanceMatrix;
use crate::embedding::ExtractorKind;
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_regularized, covariance_about, group_by_label, mean, ridge, sorted_eigen, spd_inverse,
    symmetrize,
};
use crate::parallel::{map_range, try_map_range, Parallelism};

/// LDA output dimension used for x-vector style representations.
pub const LDA_DIM_XVECTOR: usize = 150;
/// LDA output dimension used for self-supervised representations.
pub const LDA_DIM_SELF_SUPERVISED: usize = 25;

pub fn length_normalize(x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = x.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(x / n)
}

pub fn cosine_similarity(x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let (nx, ny) = (x.norm(), y.norm());
    if !(nx > 0.0 && ny > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok((x.dot(y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// Fisher LDA: rows are generalized eigenvectors of `(S_w, S_b)` sorted by
/// decreasing eigenvalue, scaled so that `v S_w vᵀ = 1`.
pub fn train_lda(xs: &[DVector<f64>], labels: &[usize], out_dim: usize) -> Result<DMatrix<f64>> {
    let groups = group_by_label(xs, labels)?;
    if groups.len() < 2 {
        return Err(Error::Invalid(format!("LDA needs at least 2 classes, found {}", groups.len())));
    }
    let mu = mean(xs)?;
    let d = mu.len();
    if out_dim == 0 || out_dim > d {
        return Err(Error::Config(format!("LDA dimension {out_dim} must be in 1..={d}")));
    }
    let rank = groups.len() - 1;
    if out_dim > rank {
        log::warn!(
            "LDA dimension {out_dim} exceeds the between-class rank {rank}; \
             trailing directions carry no between-class scatter"
        );
    }
    let n = xs.len() as f64;
    let mut sw = DMatrix::zeros(d, d);
    let mut sb = DMatrix::zeros(d, d);
    for g in &groups {
        let owned: Vec<DVector<f64>> = g.iter().map(|v| (*v).clone()).collect();
        let m = mean(&owned)?;
        let w = g.len() as f64 / n;
        sw += covariance_about(&owned, &m) * w;
        let dm = &m - &mu;
        sb.ger(w, &dm, &dm, 1.0);
    }
    let chol = cholesky_regularized(&sw, "LDA within-class scatter")?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Singular("LDA within-class factor".into()))?;
    let reduced = symmetrize(&(&l_inv * &sb * l_inv.transpose()));
    let (_, vecs) = sorted_eigen(&reduced);
    let directions = l_inv.transpose() * vecs;
    let mut out = DMatrix::zeros(out_dim, d);
    for r in 0..out_dim {
        let mut col = directions.column(r).into_owned();
        let pivot = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            col = -col;
        }
        out.row_mut(r).copy_from(&col.transpose());
    }
    Ok(out)
}

/// WCCN: `Lᵀ` where `L Lᵀ` is the inverse of the class-averaged
/// within-class covariance, so the transformed within-class covariance is I.
pub fn train_wccn(xs: &[DVector<f64>], labels: &[usize]) -> Result<DMatrix<f64>> {
    let groups = group_by_label(xs, labels)?;
    if groups.is_empty() {
        return Err(Error::Empty("no training vectors for WCCN".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::Invalid(format!(
            "WCCN needs at least 2 samples per class, found a class with {}",
            g.len()
        )));
    }
    let d = xs[0].len();
    let mut w = DMatrix::zeros(d, d);
    for g in &groups {
        let owned: Vec<DVector<f64>> = g.iter().map(|v| (*v).clone()).collect();
        w += covariance_about(&owned, &mean(&owned)?);
    }
    w /= groups.len() as f64;
    let inv = spd_inverse(&w, "WCCN within-class covariance")?;
    let l = Cholesky::new(inv)
        .ok_or_else(|| Error::Singular("WCCN inverse covariance".into()))?
        .l();
    Ok(l.transpose())
}

/// Returns the training mean and `C^{-1/2}` for the training covariance
/// `C`. A ridge is added only when the smallest eigenvalue falls below it.
pub fn train_whitener(xs: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mu = mean(xs)?;
    let c = covariance_about(xs, &mu);
    let (mut vals, vecs) = sorted_eigen(&c);
    let eps = ridge(&c);
    if vals.min() < eps {
        log::debug!("whitening: adding ridge {eps:e}");
        vals.add_scalar_mut(eps);
    }
    if !(vals.min() > 0.0) {
        return Err(Error::Singular("whitening covariance".into()));
    }
    let inv_sqrt = vals.map(|v| 1.0 / v.sqrt());
    let w = &vecs * DMatrix::from_diagonal(&inv_sqrt) * vecs.transpose();
    Ok((mu, symmetrize(&w)))
}

/// Which stages a [`ProjectionSet`] is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionChain {
    pub lda_dim: Option<usize>,
    pub wccn: bool,
    pub whiten: bool,
    pub length_norm: bool,
}

impl Default for ProjectionChain {
    /// Mean removal, whitening and length normalization.
    fn default() -> Self {
        ProjectionChain {
            lda_dim: None,
            wccn: false,
            whiten: true,
            length_norm: true,
        }
    }
}

impl ProjectionChain {
    /// Parses a comma-separated stage list (`lda,wccn,whiten,lnorm`). An
    /// `lda` stage requires `lda_dim`.
    pub fn parse(stages: &str, lda_dim: Option<usize>) -> Result<Self> {
        let mut chain = ProjectionChain {
            lda_dim: None,
            wccn: false,
            whiten: false,
            length_norm: false,
        };
        for stage in stages.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match stage {
                "lda" => {
                    chain.lda_dim = Some(lda_dim.ok_or_else(|| {
                        Error::Config("`lda` stage needs an LDA dimension".into())
                    })?)
                }
                "wccn" => chain.wccn = true,
                "whiten" => chain.whiten = true,
                "lnorm" => chain.length_norm = true,
                other => return Err(Error::Config(format!("unknown projection stage `{other}`"))),
            }
        }
        Ok(chain)
    }

    pub fn stages(&self) -> Vec<&'static str> {
        let mut s = Vec::new();
        if self.lda_dim.is_some() {
            s.push("lda");
        }
        if self.wccn {
            s.push("wccn");
        }
        if self.whiten {
            s.push("whiten");
        }
        if self.length_norm {
            s.push("lnorm");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    pub mean: DVector<f64>,
    pub lda: Option<DMatrix<f64>>,
    pub wccn: Option<DMatrix<f64>>,
    pub whitener: Option<DMatrix<f64>>,
    pub apply_length_norm: bool,
}

impl ProjectionSet {
    /// Mean removal only.
    pub fn centering(mean: DVector<f64>) -> Self {
        ProjectionSet {
            mean,
            lda: None,
            wccn: None,
            whitener: None,
            apply_length_norm: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.whitener
            .as_ref()
            .or(self.wccn.as_ref())
            .or(self.lda.as_ref())
            .map_or(self.input_dim(), |m| m.nrows())
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut y = x - &self.mean;
        for m in [&self.lda, &self.wccn, &self.whitener].into_iter().flatten() {
            y = m * y;
        }
        if self.apply_length_norm {
            y = length_normalize(&y)?;
        }
        Ok(y)
    }

    pub fn apply_all(&self, xs: &[DVector<f64>], par: Parallelism) -> Result<Vec<DVector<f64>>> {
        try_map_range(xs.len(), par, |i| self.apply(&xs[i]))
    }
}

/// Trains each enabled stage on the output of the previous ones.
pub fn train_projection(
    xs: &[DVector<f64>],
    labels: &[usize],
    chain: &ProjectionChain,
) -> Result<ProjectionSet> {
    let mu = mean(xs)?;
    let mut set = ProjectionSet::centering(mu);
    let mut cur: Vec<DVector<f64>> = xs.iter().map(|x| x - &set.mean).collect();
    if let Some(dim) = chain.lda_dim {
        let lda = train_lda(&cur, labels, dim)?;
        cur = cur.iter().map(|x| &lda * x).collect();
        set.lda = Some(lda);
    }
    if chain.wccn {
        let w = train_wccn(&cur, labels)?;
        cur = cur.iter().map(|x| &w * x).collect();
        set.wccn = Some(w);
    }
    if chain.whiten {
        let (_, w) = train_whitener(&cur)?;
        set.whitener = Some(w);
    }
    set.apply_length_norm = chain.length_norm;
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Gplda,
    Cosine,
}

impl FromStr for ScorerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gplda" => Ok(ScorerKind::Gplda),
            "cosine" => Ok(ScorerKind::Cosine),
            other => Err(Error::Config(format!("unknown scorer `{other}` (gplda|cosine)"))),
        }
    }
}

/// Pairwise divergence between projected vectors.
#[derive(Debug, Clone)]
pub enum Scorer {
    /// GPLDA distance; similarity is its negation.
    Gplda(GpldaScorer),
    /// `1 − cos` as distance, `cos` as similarity.
    Cosine,
}

impl Scorer {
    pub fn distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        match self {
            Scorer::Gplda(s) => s.distance(x, y),
            Scorer::Cosine => Ok(1.0 - cosine_similarity(x, y)?),
        }
    }

    /// Higher means more likely the same class.
    pub fn similarity(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        match self {
            Scorer::Gplda(s) => Ok(-s.distance(x, y)?),
            Scorer::Cosine => cosine_similarity(x, y),
        }
    }

    /// Distances between `xs[i]` and `ys[i]` for every `i`.
    pub fn paired_distances(
        &self,
        xs: &[DVector<f64>],
        ys: &[DVector<f64>],
        par: Parallelism,
    ) -> Result<Vec<f64>> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                found: ys.len(),
            });
        }
        try_map_range(xs.len(), par, |i| self.distance(&xs[i], &ys[i]))
    }

    /// All pairwise distances, with per-vector terms computed once.
    pub fn distance_matrix(&self, xs: &[DVector<f64>], par: Parallelism) -> Result<DistanceMatrix> {
        let n = xs.len();
        let rows: Vec<Vec<f64>> = match self {
            Scorer::Gplda(s) => {
                let prepared = try_map_range(n, par, |i| s.prepare(&xs[i]))?;
                map_range(n, par, |i| {
                    ((i + 1)..n)
                        .map(|j| s.prepared_distance(&prepared[i], &prepared[j]))
                        .collect()
                })
            }
            Scorer::Cosine => {
                let unit = try_map_range(n, par, |i| length_normalize(&xs[i]))?;
                map_range(n, par, |i| {
                    ((i + 1)..n)
                        .map(|j| 1.0 - unit[i].dot(&unit[j]).clamp(-1.0, 1.0))
                        .collect()
                })
            }
        };
        Ok(DistanceMatrix::from_rows(n, rows))
    }
}

/// A trained back-end: projection chain plus GPLDA model, with the window
/// settings it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendModel {
    pub projection: ProjectionSet,
    pub gplda: Option<GpldaModel>,
    pub window_len: usize,
    pub extractor: ExtractorKind,
}

impl BackendModel {
    pub fn scorer(&self, kind: ScorerKind) -> Result<Scorer> {
        match kind {
            ScorerKind::Cosine => Ok(Scorer::Cosine),
            ScorerKind::Gplda => {
                let g = self
                    .gplda
                    .as_ref()
                    .ok_or_else(|| Error::Config("model has no GPLDA parameters".into()))?;
                Ok(Scorer::Gplda(g.scorer()?))
            }
        }
    }
}

/// Trains the projection chain, then GPLDA on the projected vectors.
pub fn train_backend(
    xs: &[DVector<f64>],
    labels: &[usize],
    chain: &ProjectionChain,
    window_len: usize,
    extractor: ExtractorKind,
) -> Result<BackendModel> {
    let projection = train_projection(xs, labels, chain)?;
    let projected = projection.apply_all(xs, Parallelism::default())?;
    let gplda = train_gplda(&projected, labels)?;
    Ok(BackendModel {
        projection,
        gplda: Some(gplda),
        window_len,
        extractor,
    })
}
