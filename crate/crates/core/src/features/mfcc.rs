use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{frame_energy, frame_signal, AudioSignal, FeatureSequence, FrameSpec};
use crate::error::{Error, Result};

/// MFCC analysis settings. Defaults: pre-emphasis 0.97, Hamming window,
/// 512-point FFT at 16 kHz, 26 mel filters spanning 0 Hz to Nyquist, log
/// floor 1e-10, orthonormal DCT-II keeping 13 coefficients (c0 included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_ceps: usize,
    pub f_min: f64,
    /// `None` means Nyquist.
    pub f_max: Option<f64>,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: 16000,
            n_fft: 512,
            n_mels: 26,
            n_ceps: 13,
            f_min: 0.0,
            f_max: None,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    fn validate(&self) -> Result<()> {
        let f_max = self.f_max.unwrap_or(self.nyquist());
        if f_max > self.nyquist() {
            return Err(Error::Config(format!(
                "mel f_max {f_max} Hz exceeds Nyquist {} Hz",
                self.nyquist()
            )));
        }
        if !(self.f_min >= 0.0 && self.f_min < f_max) {
            return Err(Error::Config(format!("mel range [{}, {f_max}] is empty", self.f_min)));
        }
        if self.n_ceps == 0 || self.n_mels < self.n_ceps {
            return Err(Error::Config(format!(
                "need 1 <= n_ceps ({}) <= n_mels ({})",
                self.n_ceps, self.n_mels
            )));
        }
        if self.n_fft < 2 {
            return Err(Error::Config("n_fft must be at least 2".into()));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale, evaluated at the
/// exact FFT bin frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MfccConfig) -> Result<Self> {
        cfg.validate()?;
        let f_max = cfg.f_max.unwrap_or(cfg.nyquist());
        let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let n_bins = cfg.n_fft / 2 + 1;
        let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
        let weights = (0..cfg.n_mels)
            .map(|k| {
                let (left, center, right) = (edges[k], edges[k + 1], edges[k + 2]);
                (0..n_bins)
                    .map(|b| {
                        let f = b as f64 * bin_hz;
                        if f <= left || f >= right {
                            0.0
                        } else if f <= center {
                            (f - left) / (center - left)
                        } else {
                            (right - f) / (right - center)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(MelFilterbank {
            weights,
            centers: edges[1..=cfg.n_mels].to_vec(),
        })
    }

    /// Center frequency of each filter in Hz.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `|X_k|^2` for `k = 0..=n_fft/2`, zero-padding `frame` to `n_fft`.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf: Vec<Complex<f64>> = (0..n_fft)
        .map(|i| Complex::new(frame.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fft.process(&mut buf);
    buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Orthonormal DCT-II, first `n_out` coefficients.
pub(crate) fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let m = x.len() as f64;
    (0..n_out)
        .map(|i| {
            let scale = if i == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(k, v)| v * (PI * i as f64 * (k as f64 + 0.5) / m).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Static cepstra, one row per frame. Energies come from the raw
/// (un-emphasized) frames so the VAD sees the signal as recorded.
pub fn mfcc(signal: &AudioSignal, spec: &FrameSpec, cfg: &MfccConfig) -> Result<FeatureSequence> {
    cfg.validate()?;
    if signal.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "sample rate {} Hz does not match the configured {} Hz (resampling is not supported)",
            signal.sample_rate, cfg.sample_rate
        )));
    }
    let framed = frame_signal(signal, spec)?;
    let frame_len = framed.frames[0].len();
    if frame_len > cfg.n_fft {
        return Err(Error::Config(format!(
            "frame of {frame_len} samples exceeds n_fft {}",
            cfg.n_fft
        )));
    }
    let energies = frame_energy(&framed.frames);

    let mut emphasized = signal.clone();
    for i in (1..emphasized.samples.len()).rev() {
        emphasized.samples[i] -= cfg.pre_emphasis * signal.samples[i - 1];
    }
    let framed_emph = frame_signal(&emphasized, spec)?;

    let window = hamming(frame_len);
    let bank = MelFilterbank::new(cfg)?;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut features = DMatrix::zeros(framed.frames.len(), cfg.n_ceps);
    for (r, frame) in framed_emph.frames.iter().enumerate() {
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < frame_len { frame[i] * window[i] } else { 0.0 };
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..cfg.n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        let log_mel: Vec<f64> = bank
            .apply(&power)
            .into_iter()
            .map(|e| e.max(cfg.log_floor).ln())
            .collect();
        for (c, v) in dct2(&log_mel, cfg.n_ceps).into_iter().enumerate() {
            features[(r, c)] = v;
        }
    }
    FeatureSequence::new(features, framed.starts, energies, *spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft_power(x: &[f64], n_fft: usize) -> Vec<f64> {
        (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn dct_of_constant_concentrates_in_c0() {
        let c = dct2(&[2.5; 26], 13);
        assert!((c[0] - 2.5 * 26f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sine_at_filter_center_peaks_in_that_filter() {
        let cfg = MfccConfig::default();
        let bank = MelFilterbank::new(&cfg).unwrap();
        let window = hamming(320);
        for k in [3usize, 10, 17, 22] {
            let f = bank.centers()[k];
            let frame: Vec<f64> = (0..320)
                .map(|n| (2.0 * PI * f * n as f64 / 16000.0).sin() * window[n])
                .collect();
            let oracle = naive_dft_power(&frame, 512);
            let fast = power_spectrum(&frame, 512);
            for (a, b) in oracle.iter().zip(&fast) {
                assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
            }
            let resp = bank.apply(&oracle);
            let argmax = resp
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, k, "filter {k} at {f} Hz");
        }
    }

    #[test]
    fn mfcc_shape_and_determinism() {
        let sig = AudioSignal::new(
            (0..16000).map(|n| (n as f64 * 0.05).sin() * 0.3 + ((n * 7919) % 113) as f64 * 1e-3).collect(),
            16000,
        )
        .unwrap();
        let spec = FrameSpec::default();
        let a = mfcc(&sig, &spec, &MfccConfig::default()).unwrap();
        let b = mfcc(&sig, &spec, &MfccConfig::default()).unwrap();
        assert_eq!(a.features.shape(), (99, 13));
        assert_eq!(a.features, b.features);
        assert!(a.features.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_mel_range_above_nyquist() {
        let cfg = MfccConfig {
            f_max: Some(9000.0),
            ..MfccConfig::default()
        };
        assert!(matches!(MelFilterbank::new(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_mismatched_rate() {
        let sig = AudioSignal::new(vec![0.0; 8000], 8000).unwrap();
        assert!(mfcc(&sig, &FrameSpec::default(), &MfccConfig::default()).is_err());
    }
}
