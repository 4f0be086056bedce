//! Synthetic code-switched utterances at the feature level.
//!
//! Each utterance is a sequence of single-class segments. Segment classes
//! follow a switch model, durations are log-normal per class, and frames
//! are drawn i.i.d. from the class's Gaussian. Utterance `i` of a corpus is
//! generated from `ChaCha8Rng::seed_from_u64(seed + i)`: first the layout
//! (first class, then per segment its class, duration and optional trailing
//! silence), then the frames in time order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diarize::{Diarization, Segment};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, FrameSpec};
use crate::io::matrix::{read_matrix, write_matrix, MatrixFile};
use crate::io::rttm::write_rttm_file;
use crate::parallel::{try_map_range, Parallelism};

/// Log-normal duration in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationModel {
    pub median: f64,
    pub log_sigma: f64,
}

impl DurationModel {
    /// The log-normal with the given mean: `median = mean / exp(σ²/2)`.
    pub fn from_mean(mean: f64, log_sigma: f64) -> Self {
        DurationModel {
            median: mean / (log_sigma * log_sigma / 2.0).exp(),
            log_sigma,
        }
    }

    pub fn mean(&self) -> f64 {
        self.median * (self.log_sigma * self.log_sigma / 2.0).exp()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.median.is_finite() && self.median > 0.0) {
            return Err(Error::Config(format!("{what}: median {} must be positive", self.median)));
        }
        if !(self.log_sigma.is_finite() && self.log_sigma >= 0.0) {
            return Err(Error::Config(format!("{what}: log_sigma {} must be non-negative", self.log_sigma)));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let d = LogNormal::new(self.median.ln(), self.log_sigma).expect("validated");
        d.sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SwitchModel {
    /// Cycles through the classes in order.
    Alternating,
    /// Stays on the current class with probability `stay`, otherwise moves
    /// to a uniformly chosen other class.
    Markov { stay: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FeatureModel {
    /// Identity covariance; class `k` has mean `s/√2 · e_k`, so every pair
    /// of class means is `s` within-class deviations apart.
    Separated { separation: f64 },
    /// Explicit per-class means and covariances.
    Explicit {
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub class_labels: Vec<String>,
    pub durations: Vec<DurationModel>,
    pub switch: SwitchModel,
    pub segments: usize,
    /// Class of the first segment; drawn uniformly when absent.
    pub first_class: Option<usize>,
    pub silence: Option<DurationModel>,
    pub features: FeatureModel,
    pub dim: usize,
    /// Expected primary:secondary time ratio (informational).
    pub imbalance: Option<f64>,
    pub frame_shift: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec::ttsf()
    }
}

/// Energy assigned to silence frames.
pub const SILENCE_ENERGY: f64 = 1e-4;

impl CorpusSpec {
    /// Long alternating segments of similar length in both classes.
    pub fn ttsf() -> Self {
        CorpusSpec {
            class_labels: vec!["P".into(), "S".into()],
            durations: vec![
                DurationModel { median: 3.0, log_sigma: 0.35 },
                DurationModel { median: 3.0, log_sigma: 0.35 },
            ],
            switch: SwitchModel::Alternating,
            segments: 6,
            first_class: None,
            silence: None,
            features: FeatureModel::Separated { separation: 6.0 },
            dim: 13,
            imbalance: None,
            frame_shift: 0.01,
            seed: 0,
        }
    }

    /// Primary language with short embedded secondary segments, about 4:1
    /// by time.
    pub fn mscs() -> Self {
        CorpusSpec {
            durations: vec![DurationModel::from_mean(1.5, 0.4), DurationModel::from_mean(0.5, 0.4)],
            segments: 7,
            first_class: Some(0),
            imbalance: Some(4.0),
            ..CorpusSpec::ttsf()
        }
    }

    pub fn named(name: &str) -> Option<Self> {
        match name {
            "ttsf" => Some(CorpusSpec::ttsf()),
            "mscs" => Some(CorpusSpec::mscs()),
            _ => None,
        }
    }

    pub fn with_separation(mut self, separation: f64) -> Self {
        self.features = FeatureModel::Separated { separation };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes();
        if k < 1 {
            return Err(Error::Config("corpus needs at least one class".into()));
        }
        if self.durations.len() != k {
            return Err(Error::Config(format!("{} duration models for {k} classes", self.durations.len())));
        }
        for (i, d) in self.durations.iter().enumerate() {
            d.validate(&format!("class {i} duration"))?;
        }
        if let Some(s) = &self.silence {
            s.validate("silence")?;
        }
        if self.segments == 0 {
            return Err(Error::Config("corpus spec yields zero segments".into()));
        }
        if let Some(f) = self.first_class {
            if f >= k {
                return Err(Error::Config(format!("first class {f} out of range")));
            }
        }
        if let SwitchModel::Markov { stay } = self.switch {
            if !(0.0..=1.0).contains(&stay) {
                return Err(Error::Config(format!("stay probability {stay} outside [0, 1]")));
            }
        }
        if !(self.frame_shift.is_finite() && self.frame_shift > 0.0) {
            return Err(Error::Config("frame shift must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("feature dimension must be at least 1".into()));
        }
        match &self.features {
            FeatureModel::Separated { separation } => {
                if !(separation.is_finite() && *separation >= 0.0) {
                    return Err(Error::Config(format!("separation {separation} must be non-negative")));
                }
                if k > self.dim {
                    return Err(Error::Config("separated classes need dim >= number of classes".into()));
                }
            }
            FeatureModel::Explicit { means, covariances } => {
                if means.len() != k || covariances.len() != k {
                    return Err(Error::Config("one mean and covariance per class required".into()));
                }
                for (m, c) in means.iter().zip(covariances) {
                    if m.len() != self.dim || c.len() != self.dim || c.iter().any(|r| r.len() != self.dim) {
                        return Err(Error::DimensionMismatch {
                            expected: self.dim,
                            found: m.len(),
                        });
                    }
                }
            }
        }
        self.class_gaussians().map(|_| ())
    }

    /// Per-class mean and a lower-triangular factor of the covariance.
    fn class_gaussians(&self) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        let d = self.dim;
        match &self.features {
            FeatureModel::Separated { separation } => Ok((0..self.n_classes())
                .map(|k| {
                    let mut m = DVector::zeros(d);
                    m[k] = separation / 2f64.sqrt();
                    (m, DMatrix::identity(d, d))
                })
                .collect()),
            FeatureModel::Explicit { means, covariances } => means
                .iter()
                .zip(covariances)
                .enumerate()
                .map(|(k, (m, c))| {
                    let cov = DMatrix::from_fn(d, d, |i, j| c[i][j]);
                    if (&cov - cov.transpose()).amax() > 1e-9 {
                        return Err(Error::Config(format!("class {k} covariance is not symmetric")));
                    }
                    let (vals, vecs) = crate::linalg::sorted_eigen(&cov);
                    if vals.min() < -1e-9 {
                        return Err(Error::Config(format!("class {k} covariance is not positive semi-definite")));
                    }
                    // Symmetric square root works for singular covariances too.
                    let root = &vecs * DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt())) * vecs.transpose();
                    Ok((DVector::from_column_slice(m), root))
                })
                .collect(),
        }
    }
}

/// One generated utterance with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub id: String,
    pub features: FeatureSequence,
    pub reference: Diarization,
    pub change_times: Vec<f64>,
    /// Class index of every frame (`None` for silence).
    pub frame_classes: Vec<Option<usize>>,
}

pub fn utterance_id(index: usize) -> String {
    format!("utt{index:05}")
}

fn frames_for(seconds: f64, shift: f64) -> usize {
    ((seconds / shift).round() as usize).max(1)
}

/// Generates one utterance from its own seed.
pub fn synth_utterance(spec: &CorpusSpec, id: &str, seed: u64) -> Result<SynthUtterance> {
    spec.validate()?;
    let gaussians = spec.class_gaussians()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.n_classes();

    let mut class = match spec.first_class {
        Some(c) => c,
        None => rng.random_range(0..k),
    };
    let mut layout: Vec<(Option<usize>, usize)> = Vec::new();
    for s in 0..spec.segments {
        if s > 0 {
            class = match spec.switch {
                SwitchModel::Alternating => (class + 1) % k,
                SwitchModel::Markov { stay } => {
                    if k == 1 || rng.random::<f64>() < stay {
                        class
                    } else {
                        let o = rng.random_range(0..k - 1);
                        if o >= class {
                            o + 1
                        } else {
                            o
                        }
                    }
                }
            };
        }
        let dur = spec.durations[class].sample(&mut rng);
        layout.push((Some(class), frames_for(dur, spec.frame_shift)));
        if let (Some(sil), true) = (&spec.silence, s + 1 < spec.segments) {
            layout.push((None, frames_for(sil.sample(&mut rng), spec.frame_shift)));
        }
    }

    let total: usize = layout.iter().map(|l| l.1).sum();
    let d = spec.dim;
    let mut features = DMatrix::zeros(total, d);
    let mut energies = Vec::with_capacity(total);
    let mut frame_classes = Vec::with_capacity(total);
    let mut segments = Vec::new();
    let energy_jitter = LogNormal::new(0.0, 0.3).expect("valid");
    let mut row = 0;
    for &(c, len) in &layout {
        if let Some(c) = c {
            segments.push(Segment::new(
                row as f64 * spec.frame_shift,
                len as f64 * spec.frame_shift,
                spec.class_labels[c].clone(),
            )?);
        }
        for _ in 0..len {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let x = match c {
                Some(c) => &gaussians[c].0 + &gaussians[c].1 * z,
                None => z,
            };
            // Values are stored at f32 precision so files reproduce them.
            for j in 0..d {
                features[(row, j)] = x[j] as f32 as f64;
            }
            let e: f64 = match c {
                Some(_) => energy_jitter.sample(&mut rng),
                None => SILENCE_ENERGY,
            };
            energies.push(e as f32 as f64);
            frame_classes.push(c);
            row += 1;
        }
    }
    let starts = (0..total).map(|i| i as f64 * spec.frame_shift).collect();
    let frame_spec = FrameSpec {
        frame_len: 2.0 * spec.frame_shift,
        frame_shift: spec.frame_shift,
    };
    let features = FeatureSequence::new(features, starts, energies, frame_spec)?;
    let reference = Diarization::new(id, segments);
    Ok(SynthUtterance {
        id: id.to_string(),
        change_times: reference.change_points(),
        features,
        reference,
        frame_classes,
    })
}

/// `n` utterances, utterance `i` seeded with `seed + i`.
pub fn synth_corpus(spec: &CorpusSpec, n: usize, par: Parallelism) -> Result<Vec<SynthUtterance>> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    spec.validate()?;
    try_map_range(n, par, |i| synth_utterance(spec, &utterance_id(i), spec.seed.wrapping_add(i as u64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub duration: f64,
    pub frames: usize,
    /// Labeled time per class (seconds).
    pub class_time: BTreeMap<String, f64>,
    pub change_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CorpusSpec,
    pub utterances: Vec<ManifestEntry>,
    pub class_time: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn build(spec: &CorpusSpec, corpus: &[SynthUtterance]) -> Self {
        let mut totals: BTreeMap<String, f64> = spec.class_labels.iter().map(|l| (l.clone(), 0.0)).collect();
        let utterances = corpus
            .iter()
            .map(|u| {
                let mut class_time = BTreeMap::new();
                for s in u.reference.segments() {
                    *class_time.entry(s.label.clone()).or_insert(0.0) += s.duration;
                    *totals.entry(s.label.clone()).or_insert(0.0) += s.duration;
                }
                ManifestEntry {
                    id: u.id.clone(),
                    duration: u.features.end_time(),
                    frames: u.features.len(),
                    class_time,
                    change_times: u.change_times.clone(),
                }
            })
            .collect();
        Manifest {
            spec: spec.clone(),
            utterances,
            class_time: totals,
        }
    }

    /// Total time of the first class over the second.
    pub fn time_ratio(&self) -> Option<f64> {
        let l = &self.spec.class_labels;
        let a = self.class_time.get(l.first()?)?;
        let b = self.class_time.get(l.get(1)?)?;
        (*b > 0.0).then(|| a / b)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn feature_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.feat"))
}

pub fn energy_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.energy"))
}

pub fn rttm_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.rttm"))
}

/// Writes `<id>.feat`, `<id>.energy`, `<id>.rttm` and the manifest.
pub fn write_corpus(dir: impl AsRef<Path>, spec: &CorpusSpec, corpus: &[SynthUtterance]) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    for u in corpus {
        write_utterance(dir, &u.id, &u.features)?;
        write_rttm_file(rttm_path(dir, &u.id), &u.reference)?;
    }
    let manifest = Manifest::build(spec, corpus);
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::from(e).in_file(&path))?;
    Ok(manifest)
}

pub fn write_utterance(dir: &Path, id: &str, seq: &FeatureSequence) -> Result<()> {
    write_matrix(
        feature_path(dir, id),
        &MatrixFile {
            data: seq.features.clone(),
            times: Some(seq.frame_starts.clone()),
        },
    )?;
    write_matrix(
        energy_path(dir, id),
        &MatrixFile {
            data: DMatrix::from_column_slice(seq.len(), 1, &seq.energies),
            times: None,
        },
    )
}

/// Reads `<id>.feat` and, when present, `<id>.energy` (unit energies
/// otherwise). The frame shift is the smallest gap between frame starts.
pub fn read_utterance(dir: &Path, id: &str) -> Result<FeatureSequence> {
    let fpath = feature_path(dir, id);
    let feat = read_matrix(&fpath)?;
    let n = feat.data.nrows();
    let times = feat
        .times
        .ok_or_else(|| Error::Format("feature file lacks frame times".into()).in_file(&fpath))?;
    let epath = energy_path(dir, id);
    let energies = if epath.exists() {
        let e = read_matrix(&epath)?;
        if e.data.shape() != (n, 1) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: e.data.nrows(),
            }
            .in_file(&epath));
        }
        e.data.column(0).iter().copied().collect()
    } else {
        vec![1.0; n]
    };
    let shift = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let shift = if shift.is_finite() { ((shift * 1e6).round() / 1e6).max(1e-6) } else { FrameSpec::default().frame_shift };
    let spec = FrameSpec {
        frame_len: 2.0 * shift,
        frame_shift: shift,
    };
    FeatureSequence::new(feat.data, times, energies, spec).map_err(|e| e.in_file(&fpath))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_four_segments() {
        let spec = CorpusSpec { segments: 4, ..CorpusSpec::ttsf() };
        let u = synth_utterance(&spec, "u", 3).unwrap();
        let segs = u.reference.segments();
        assert_eq!(segs.len(), 4);
        for w in segs.windows(2) {
            assert_ne!(w[0].label, w[1].label);
            assert!((w[0].end() - w[1].onset).abs() < 1e-9);
        }
        assert_eq!(u.change_times.len(), 3);
        assert!((segs[3].end() - u.features.end_time()).abs() < 1e-9);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = CorpusSpec::mscs();
        let a = synth_corpus(&spec, 3, Parallelism::Sequential).unwrap();
        let b = synth_corpus(&spec, 3, Parallelism::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].features, a[1].features);
    }

    #[test]
    fn mscs_shape() {
        let u = synth_utterance(&CorpusSpec::mscs(), "u", 1).unwrap();
        let labels: Vec<&str> = u.reference.segments().iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["P", "S", "P", "S", "P", "S", "P"]);
        assert!((DurationModel::from_mean(1.5, 0.4).mean() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn silence_gaps_have_low_energy() {
        let spec = CorpusSpec {
            silence: Some(DurationModel { median: 0.3, log_sigma: 0.1 }),
            ..CorpusSpec::ttsf()
        };
        let u = synth_utterance(&spec, "u", 5).unwrap();
        assert_eq!(u.reference.segments().len(), 6);
        let speech: f64 = u.reference.total_duration();
        assert!(speech < u.features.end_time() - 1.0);
        for (c, e) in u.frame_classes.iter().zip(&u.features.energies) {
            assert_eq!(c.is_none(), *e == SILENCE_ENERGY as f32 as f64);
        }
    }

    #[test]
    fn zero_segments_rejected() {
        let spec = CorpusSpec { segments: 0, ..CorpusSpec::ttsf() };
        assert!(synth_utterance(&spec, "u", 0).is_err());
    }

    #[test]
    fn explicit_gaussians() {
        let spec = CorpusSpec {
            dim: 2,
            features: FeatureModel::Explicit {
                means: vec![vec![5.0, 0.0], vec![-5.0, 0.0]],
                covariances: vec![vec![vec![1.0, 0.0], vec![0.0, 0.0]]; 2],
            },
            ..CorpusSpec::ttsf()
        };
        let u = synth_utterance(&spec, "u", 2).unwrap();
        assert!(u.features.features.column(1).iter().all(|&v| v == 0.0));
        let bad = CorpusSpec {
            features: FeatureModel::Explicit {
                means: vec![vec![0.0, 0.0]; 2],
                covariances: vec![vec![vec![1.0, 2.0], vec![2.0, 1.0]]; 2],
            },
            ..spec
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec::mscs().with_seed(9);
        let corpus = synth_corpus(&spec, 2, Parallelism::default()).unwrap();
        let m = write_corpus(dir.path(), &spec, &corpus).unwrap();
        assert_eq!(m.utterances.len(), 2);
        for u in &corpus {
            let back = read_utterance(dir.path(), &u.id).unwrap();
            assert_eq!(back.features, u.features.features);
            assert_eq!(back.energies, u.features.energies);
            assert_eq!(back.frame_starts, u.features.frame_starts);
        }
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }
}
