use nalgebra::DMatrix;

use super::FeatureSequence;
use crate::error::{Error, Result};

fn regression(m: &DMatrix<f64>, win: usize) -> DMatrix<f64> {
    let rows = m.nrows() as isize;
    let denom = 2.0 * (1..=win).map(|n| (n * n) as f64).sum::<f64>();
    let clamp = |t: isize| t.clamp(0, rows - 1) as usize;
    DMatrix::from_fn(m.nrows(), m.ncols(), |t, c| {
        let t = t as isize;
        (1..=win as isize)
            .map(|n| n as f64 * (m[(clamp(t + n), c)] - m[(clamp(t - n), c)]))
            .sum::<f64>()
            / denom
    })
}

/// Appends velocity and acceleration coefficients (`d -> 3d`) using the
/// regression formula over `±win` frames with replicated edges.
pub fn deltas(seq: &FeatureSequence, win: usize) -> Result<FeatureSequence> {
    if win == 0 {
        return Err(Error::Config("delta window must be at least 1".into()));
    }
    if seq.len() <= 2 * win {
        return Err(Error::TooShort {
            available: seq.len(),
            required: 2 * win + 1,
        });
    }
    let d = seq.dim();
    let delta = regression(&seq.features, win);
    let accel = regression(&delta, win);
    let mut out = DMatrix::zeros(seq.len(), 3 * d);
    out.columns_mut(0, d).copy_from(&seq.features);
    out.columns_mut(d, d).copy_from(&delta);
    out.columns_mut(2 * d, d).copy_from(&accel);
    Ok(FeatureSequence {
        features: out,
        ..seq.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrameSpec;

    fn seq(m: DMatrix<f64>) -> FeatureSequence {
        FeatureSequence::from_features(m, FrameSpec::default()).unwrap()
    }

    #[test]
    fn constant_sequence_has_zero_deltas() {
        let out = deltas(&seq(DMatrix::from_element(20, 13, 3.7)), 2).unwrap();
        assert_eq!(out.dim(), 39);
        assert!(out.features.columns(13, 26).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_slope_in_interior() {
        let k = 0.75;
        let out = deltas(&seq(DMatrix::from_fn(12, 1, |t, _| k * t as f64)), 2).unwrap();
        for t in 2..10 {
            assert!((out.features[(t, 1)] - k).abs() < 1e-12);
        }
        // Replicated edges flatten the slope at the ends.
        assert!(out.features[(0, 1)] < k);
    }

    #[test]
    fn too_short() {
        assert!(deltas(&seq(DMatrix::zeros(4, 3)), 2).is_err());
        assert!(deltas(&seq(DMatrix::zeros(5, 3)), 2).is_ok());
    }
}
