//! Two-covariance Gaussian PLDA.
//!
//! For projected vectors `x`, `y` with within-class covariance `Σ` and
//! between-class covariance `B = SSᵀ`, let `T = Σ + B` and
//! `M = [[T, B], [B, T]]`. The distance
//!
//! ```text
//! d(x, y) = [x; y]ᵀ M⁻¹ [x; y] − xᵀ T⁻¹ x − yᵀ T⁻¹ y
//! ```
//!
//! is the log of the different-class vs same-class likelihood ratio up to
//! constants: it grows when `x` and `y` are unlikely to share a class.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{covariance_about, group_by_label, mean, psd_project, spd_inverse, symmetrize};

#[derive(Debug, Clone, PartialEq)]
pub struct GpldaModel {
    /// Within-class covariance `Σ`.
    pub sigma_w: DMatrix<f64>,
    /// Between-class covariance `SSᵀ`.
    pub sigma_b: DMatrix<f64>,
    pub mu: DVector<f64>,
}

impl GpldaModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (name, m) in [("sigma_w", &self.sigma_w), ("sigma_b", &self.sigma_b)] {
            if m.shape() != (d, d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.nrows(),
                });
            }
            if (m - m.transpose()).amax() > 1e-9 {
                return Err(Error::Invalid(format!("{name} is not symmetric")));
            }
            if m.clone().symmetric_eigenvalues().min() < -1e-9 {
                return Err(Error::Invalid(format!("{name} is not positive semi-definite")));
            }
        }
        Ok(())
    }

    /// Precomputes the quadratic forms used by [`GpldaScorer::distance`].
    pub fn scorer(&self) -> Result<GpldaScorer> {
        self.validate()?;
        let d = self.dim();
        let t = &self.sigma_w + &self.sigma_b;
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&t);
        m.view_mut((d, d), (d, d)).copy_from(&t);
        m.view_mut((0, d), (d, d)).copy_from(&self.sigma_b);
        m.view_mut((d, 0), (d, d)).copy_from(&self.sigma_b);
        let m_inv = spd_inverse(&m, "GPLDA joint covariance")?;
        let t_inv = spd_inverse(&t, "GPLDA total covariance")?;
        let p = symmetrize(&m_inv.view((0, 0), (d, d)).into_owned());
        let q = symmetrize(&m_inv.view((0, d), (d, d)).into_owned());
        Ok(GpldaScorer {
            mu: self.mu.clone(),
            self_form: p - t_inv,
            cross_form: q,
        })
    }
}

/// Moment estimate: global mean, class-size-weighted covariance of the
/// class means, pooled within-class covariance. Both covariances are
/// symmetrized and projected onto the PSD cone.
pub fn train_gplda(xs: &[DVector<f64>], labels: &[usize]) -> Result<GpldaModel> {
    let groups = group_by_label(xs, labels)?;
    if groups.len() < 2 {
        return Err(Error::Invalid(format!(
            "GPLDA needs at least 2 classes, found {}",
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::Invalid(format!(
            "GPLDA needs at least 2 samples per class, found a class with {}",
            g.len()
        )));
    }
    let mu = mean(xs)?;
    let d = mu.len();
    let n = xs.len() as f64;
    let mut sigma_b = DMatrix::zeros(d, d);
    let mut sigma_w = DMatrix::zeros(d, d);
    for g in &groups {
        let owned: Vec<DVector<f64>> = g.iter().map(|v| (*v).clone()).collect();
        let m = mean(&owned)?;
        let w = g.len() as f64 / n;
        let dm = &m - &mu;
        sigma_b.ger(w, &dm, &dm, 1.0);
        sigma_w += covariance_about(&owned, &m) * w;
    }
    Ok(GpldaModel {
        sigma_w: psd_project(&sigma_w),
        sigma_b: psd_project(&sigma_b),
        mu,
    })
}

/// `d = cᵀ A c + eᵀ A e + 2 cᵀ Q e` with `c = x − μ`, `e = y − μ`,
/// `A = P − T⁻¹` and `M⁻¹ = [[P, Q], [Q, P]]`.
#[derive(Debug, Clone)]
pub struct GpldaScorer {
    mu: DVector<f64>,
    self_form: DMatrix<f64>,
    cross_form: DMatrix<f64>,
}

/// A vector with its per-vector terms cached for batch scoring.
#[derive(Debug, Clone)]
pub struct PreparedVector {
    centered: DVector<f64>,
    self_term: f64,
    cross: DVector<f64>,
}

impl GpldaScorer {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn prepare(&self, x: &DVector<f64>) -> Result<PreparedVector> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let centered = x - &self.mu;
        let self_term = centered.dot(&(&self.self_form * &centered));
        let cross = &self.cross_form * &centered;
        Ok(PreparedVector {
            centered,
            self_term,
            cross,
        })
    }

    pub fn prepared_distance(&self, a: &PreparedVector, b: &PreparedVector) -> f64 {
        a.self_term + b.self_term + 2.0 * a.centered.dot(&b.cross)
    }

    pub fn distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let (a, b) = (self.prepare(x)?, self.prepare(y)?);
        Ok(self.prepared_distance(&a, &b))
    }
}

pub fn gplda_distance(model: &GpldaModel, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    model.scorer()?.distance(x, y)
}
