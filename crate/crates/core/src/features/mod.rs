//! Framing, frame energy, the energy VAD rule and the MFCC front end.

mod deltas;
mod mfcc;
mod wav;

pub use deltas::deltas;
pub use mfcc::{mfcc, power_spectrum, MelFilterbank, MfccConfig};
pub use wav::{read_wav, write_wav_f32};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default VAD amplification: a frame is voiced when its energy is at least
/// this fraction of the utterance's mean frame energy.
pub const DEFAULT_VAD_FACTOR: f64 = 0.06;

/// Mono audio with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample rate must be positive".into()));
        }
        Ok(AudioSignal {
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Frame geometry in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub frame_len: f64,
    pub frame_shift: f64,
}

impl Default for FrameSpec {
    /// 20 ms frames every 10 ms.
    fn default() -> Self {
        FrameSpec {
            frame_len: 0.02,
            frame_shift: 0.01,
        }
    }
}

impl FrameSpec {
    pub fn new(frame_len: f64, frame_shift: f64) -> Result<Self> {
        let spec = FrameSpec {
            frame_len,
            frame_shift,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_shift > 0.0 && self.frame_shift <= self.frame_len) {
            return Err(Error::Config(format!(
                "frame shift {} must be in (0, frame_len = {}]",
                self.frame_shift, self.frame_len
            )));
        }
        Ok(())
    }

    /// Frame length and shift in samples at `sample_rate`.
    pub fn in_samples(&self, sample_rate: u32) -> Result<(usize, usize)> {
        self.validate()?;
        let len = (self.frame_len * sample_rate as f64).round() as usize;
        let shift = (self.frame_shift * sample_rate as f64).round() as usize;
        if shift == 0 || len == 0 {
            return Err(Error::Config(format!(
                "frame spec {self:?} is below one sample at {sample_rate} Hz"
            )));
        }
        Ok((len, shift))
    }
}

/// Overlapping frames cut from a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FramedSignal {
    pub frames: Vec<Vec<f64>>,
    /// Start time of each frame in seconds.
    pub starts: Vec<f64>,
}

/// Number of frames of `len` samples with hop `shift` that fit in `n` samples.
pub fn frame_count(n: usize, len: usize, shift: usize) -> usize {
    if n < len {
        0
    } else {
        (n - len) / shift + 1
    }
}

pub fn frame_signal(signal: &AudioSignal, spec: &FrameSpec) -> Result<FramedSignal> {
    let (len, shift) = spec.in_samples(signal.sample_rate)?;
    let n = signal.samples.len();
    if n < len {
        return Err(Error::SignalTooShort {
            samples: n,
            needed: len,
        });
    }
    let count = frame_count(n, len, shift);
    let sr = signal.sample_rate as f64;
    let frames = (0..count)
        .map(|i| signal.samples[i * shift..i * shift + len].to_vec())
        .collect();
    let starts = (0..count).map(|i| (i * shift) as f64 / sr).collect();
    Ok(FramedSignal { frames, starts })
}

/// Mean squared amplitude of each frame.
pub fn frame_energy<F: AsRef<[f64]>>(frames: &[F]) -> Vec<f64> {
    frames
        .iter()
        .map(|f| {
            let f = f.as_ref();
            if f.is_empty() {
                0.0
            } else {
                f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64
            }
        })
        .collect()
}

/// `e_j >= factor * mean(e)`. An utterance whose mean energy is zero is
/// treated as silence throughout.
pub fn vad_mask(energies: &[f64], factor: f64) -> Vec<bool> {
    if energies.is_empty() {
        return Vec::new();
    }
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    if mean <= 0.0 {
        return vec![false; energies.len()];
    }
    let threshold = factor * mean;
    energies.iter().map(|&e| e >= threshold).collect()
}

/// Per-frame features with their timing, energy and voicing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    /// One row per frame.
    pub features: DMatrix<f64>,
    pub frame_starts: Vec<f64>,
    pub energies: Vec<f64>,
    pub voiced_mask: Vec<bool>,
    pub spec: FrameSpec,
}

impl FeatureSequence {
    /// Builds a sequence with every frame marked voiced.
    pub fn new(
        features: DMatrix<f64>,
        frame_starts: Vec<f64>,
        energies: Vec<f64>,
        spec: FrameSpec,
    ) -> Result<Self> {
        let rows = features.nrows();
        if frame_starts.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: frame_starts.len(),
            });
        }
        if energies.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: energies.len(),
            });
        }
        if frame_starts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("frame starts must be strictly increasing".into()));
        }
        if energies.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Invalid("frame energies must be finite and non-negative".into()));
        }
        Ok(FeatureSequence {
            features,
            frame_starts,
            energies,
            voiced_mask: vec![true; rows],
            spec,
        })
    }

    /// Features on a regular grid starting at zero, unit energy, all voiced.
    pub fn from_features(features: DMatrix<f64>, spec: FrameSpec) -> Result<Self> {
        let rows = features.nrows();
        let starts = (0..rows).map(|i| i as f64 * spec.frame_shift).collect();
        FeatureSequence::new(features, starts, vec![1.0; rows], spec)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced_mask.iter().filter(|&&v| v).count()
    }

    /// End time of the last frame's shift slot.
    pub fn end_time(&self) -> f64 {
        self.frame_starts.last().map_or(0.0, |t| t + self.spec.frame_shift)
    }

    /// The voiced frames only (`F_v`, `P_v`), with an all-true mask.
    pub fn voiced(&self) -> Result<FeatureSequence> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.voiced_mask[i]).collect();
        if keep.is_empty() {
            return Err(Error::NoVoicedFrames);
        }
        let features = self.features.select_rows(keep.iter());
        Ok(FeatureSequence {
            features,
            frame_starts: keep.iter().map(|&i| self.frame_starts[i]).collect(),
            energies: keep.iter().map(|&i| self.energies[i]).collect(),
            voiced_mask: vec![true; keep.len()],
            spec: self.spec,
        })
    }
}

/// Applies the energy VAD rule and returns the sequence with its mask set.
pub fn energy_vad(seq: &FeatureSequence, factor: f64) -> Result<FeatureSequence> {
    if seq.energies.is_empty() {
        return Err(Error::Empty("no frame energies".into()));
    }
    if !(factor.is_finite() && factor >= 0.0) {
        return Err(Error::Config(format!("VAD factor {factor} must be non-negative")));
    }
    let mut out = seq.clone();
    out.voiced_mask = vad_mask(&seq.energies, factor);
    if out.voiced_count() == 0 {
        log::warn!("energy VAD found no voiced frames");
    }
    Ok(out)
}

/// Full front end: static MFCCs plus deltas, frame energies from the raw
/// signal, every frame initially voiced.
pub fn extract_features(
    signal: &AudioSignal,
    spec: &FrameSpec,
    cfg: &MfccConfig,
    delta_window: usize,
) -> Result<FeatureSequence> {
    let statics = mfcc(signal, spec, cfg)?;
    deltas(&statics, delta_window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(len: f64, shift: f64) -> FrameSpec {
        FrameSpec::new(len, shift).unwrap()
    }

    #[test]
    fn one_second_at_16k() {
        let sig = AudioSignal::new(vec![0.0; 16000], 16000).unwrap();
        let framed = frame_signal(&sig, &spec(0.02, 0.01)).unwrap();
        assert_eq!(framed.frames.len(), (16000 - 320) / 160 + 1);
        assert_eq!(framed.frames.len(), 99);
        assert!(framed.frames.iter().all(|f| f.len() == 320));
        assert_eq!(framed.starts[0], 0.0);
        assert!((framed.starts[1] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn exactly_one_frame() {
        let sig = AudioSignal::new(vec![0.1; 320], 16000).unwrap();
        assert_eq!(frame_signal(&sig, &spec(0.02, 0.01)).unwrap().frames.len(), 1);
    }

    #[test]
    fn non_overlapping_frames() {
        let sig = AudioSignal::new(vec![0.1; 640], 16000).unwrap();
        assert_eq!(frame_signal(&sig, &spec(0.02, 0.02)).unwrap().frames.len(), 2);
    }

    #[test]
    fn short_signal_is_rejected() {
        let sig = AudioSignal::new(vec![0.1; 100], 16000).unwrap();
        assert!(matches!(
            frame_signal(&sig, &spec(0.02, 0.01)),
            Err(Error::SignalTooShort { samples: 100, needed: 320 })
        ));
    }

    #[test]
    fn bad_frame_spec() {
        assert!(FrameSpec::new(0.01, 0.02).is_err());
        assert!(FrameSpec::new(0.02, 0.0).is_err());
    }

    #[test]
    fn energies_by_hand() {
        let e = frame_energy(&[vec![0.0; 4], vec![1.0, -1.0, 1.0, -1.0], vec![0.5, 0.5]]);
        assert_eq!(e, vec![0.0, 1.0, 0.25]);
    }

    #[test]
    fn vad_rule_example() {
        let mask = vad_mask(&[0.01, 1.0, 0.02, 2.0], DEFAULT_VAD_FACTOR);
        assert_eq!(mask, vec![false, true, false, true]);
    }

    #[test]
    fn constant_energy_all_voiced() {
        assert!(vad_mask(&[0.3; 10], 0.06).iter().all(|&v| v));
    }

    #[test]
    fn silence_has_no_voiced_frames() {
        let seq = FeatureSequence::new(
            DMatrix::zeros(3, 2),
            vec![0.0, 0.01, 0.02],
            vec![0.0; 3],
            FrameSpec::default(),
        )
        .unwrap();
        let vad = energy_vad(&seq, 0.06).unwrap();
        assert!(matches!(vad.voiced(), Err(Error::NoVoicedFrames)));
    }

    #[test]
    fn voiced_keeps_locations() {
        let feats = DMatrix::from_fn(4, 2, |r, c| (r * 10 + c) as f64);
        let seq = FeatureSequence::new(
            feats,
            vec![0.0, 0.01, 0.02, 0.03],
            vec![0.01, 1.0, 0.02, 2.0],
            FrameSpec::default(),
        )
        .unwrap();
        let v = energy_vad(&seq, 0.06).unwrap().voiced().unwrap();
        assert_eq!(v.frame_starts, vec![0.01, 0.03]);
        assert_eq!(v.features[(1, 1)], 31.0);
    }

    proptest! {
        #[test]
        fn frame_count_formula(n in 1usize..5000, len in 1usize..400, shift_frac in 0.01f64..1.0) {
            let shift = ((len as f64 * shift_frac).ceil() as usize).clamp(1, len);
            prop_assume!(len <= n);
            let sig = AudioSignal::new(vec![0.0; n], 8000).unwrap();
            let spec = FrameSpec { frame_len: len as f64 / 8000.0, frame_shift: shift as f64 / 8000.0 };
            let framed = frame_signal(&sig, &spec).unwrap();
            prop_assert_eq!(framed.frames.len(), (n - len) / shift + 1);
        }

        #[test]
        fn vad_scale_invariant_and_idempotent(
            energies in proptest::collection::vec(0.0f64..10.0, 1..200),
            c in 0.01f64..100.0,
        ) {
            let mask = vad_mask(&energies, 0.06);
            let scaled: Vec<f64> = energies.iter().map(|e| e * c * c).collect();
            let mask_scaled = vad_mask(&scaled, 0.06);
            // Thresholds that sit within rounding of an energy can flip.
            let mean = energies.iter().sum::<f64>() / energies.len() as f64;
            for (i, (a, b)) in mask.iter().zip(&mask_scaled).enumerate() {
                if (energies[i] - 0.06 * mean).abs() > 1e-9 * mean.max(1e-300) {
                    prop_assert_eq!(a, b);
                }
            }
            let seq = FeatureSequence::new(
                DMatrix::zeros(energies.len(), 1),
                (0..energies.len()).map(|i| i as f64 * 0.01).collect(),
                energies.clone(),
                FrameSpec::default(),
            ).unwrap();
            let once = energy_vad(&seq, 0.06).unwrap();
            let twice = energy_vad(&once, 0.06).unwrap();
            prop_assert_eq!(once.voiced_mask, twice.voiced_mask);
        }

        #[test]
        fn energy_scales_quadratically(samples in proptest::collection::vec(-1.0f64..1.0, 1..64), c in 0.1f64..10.0) {
            let e = frame_energy(std::slice::from_ref(&samples))[0];
            let scaled: Vec<f64> = samples.iter().map(|x| x * c).collect();
            let es = frame_energy(&[scaled])[0];
            prop_assert!(e >= 0.0);
            prop_assert!((es - c * c * e).abs() <= 1e-12 * (1.0 + es));
        }
    }
}
