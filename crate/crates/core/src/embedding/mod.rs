//! Window-level representation vectors.
//!
//! An [`Extractor`] maps a window of `N` consecutive voiced frames to one
//! vector. Pooling extractors are built in; neural embeddings computed
//! elsewhere enter through [`load_external_embeddings`].

use std::path::Path;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diarize::Diarization;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::io::matrix::{read_matrix, write_matrix, MatrixFile};
use crate::parallel::{map_range, Parallelism};

/// Window length used for language representations.
pub const LANGUAGE_WINDOW: usize = 200;
/// Window length used for speaker representations.
pub const SPEAKER_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    StatPool,
    MeanPool,
    ExternalFile,
    TestLinear,
}

impl ExtractorKind {
    pub fn name(self) -> &'static str {
        match self {
            ExtractorKind::StatPool => "stat-pool",
            ExtractorKind::MeanPool => "mean-pool",
            ExtractorKind::ExternalFile => "external-file",
            ExtractorKind::TestLinear => "test-linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub name: String,
    /// Analysis window `N` in voiced frames.
    pub window_len: usize,
    pub output_dim: usize,
    pub kind: ExtractorKind,
}

/// A pure mapping from an `N x d` window to a vector.
pub trait Extractor: Send + Sync {
    fn kind(&self) -> ExtractorKind;
    fn output_dim(&self, input_dim: usize) -> usize;
    fn extract(&self, window: DMatrixView<'_, f64>) -> DVector<f64>;
}

pub fn mean_pool(window: DMatrixView<'_, f64>) -> DVector<f64> {
    let n = window.nrows().max(1) as f64;
    DVector::from_iterator(window.ncols(), window.column_iter().map(|c| c.sum() / n))
}

/// `[mean ‖ population std]`, column-wise.
pub fn stat_pool(window: DMatrixView<'_, f64>) -> DVector<f64> {
    let d = window.ncols();
    let n = window.nrows().max(1) as f64;
    let mean = mean_pool(window);
    let mut out = DVector::zeros(2 * d);
    for (c, col) in window.column_iter().enumerate() {
        out[c] = mean[c];
        let var = col.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n;
        out[d + c] = var.sqrt();
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MeanPool;

impl Extractor for MeanPool {
    fn kind(&self) -> ExtractorKind {
        ExtractorKind::MeanPool
    }
    fn output_dim(&self, input_dim: usize) -> usize {
        input_dim
    }
    fn extract(&self, window: DMatrixView<'_, f64>) -> DVector<f64> {
        mean_pool(window)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StatPool;

impl Extractor for StatPool {
    fn kind(&self) -> ExtractorKind {
        ExtractorKind::StatPool
    }
    fn output_dim(&self, input_dim: usize) -> usize {
        2 * input_dim
    }
    fn extract(&self, window: DMatrixView<'_, f64>) -> DVector<f64> {
        stat_pool(window)
    }
}

/// Seeded Gaussian random projection of the statistics-pooled window, so
/// tests can control embedding geometry without a trained network.
#[derive(Debug, Clone)]
pub struct TestLinear {
    projection: DMatrix<f64>,
}

impl TestLinear {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Config("test-linear dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / ((2 * input_dim) as f64).sqrt();
        let projection = DMatrix::from_fn(output_dim, 2 * input_dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        Ok(TestLinear { projection })
    }
}

impl Extractor for TestLinear {
    fn kind(&self) -> ExtractorKind {
        ExtractorKind::TestLinear
    }
    fn output_dim(&self, _input_dim: usize) -> usize {
        self.projection.nrows()
    }
    fn extract(&self, window: DMatrixView<'_, f64>) -> DVector<f64> {
        &self.projection * stat_pool(window)
    }
}

/// Builds one of the window extractors by kind.
pub fn builtin_extractor(
    kind: ExtractorKind,
    input_dim: usize,
    output_dim: Option<usize>,
    seed: u64,
) -> Result<Box<dyn Extractor>> {
    Ok(match kind {
        ExtractorKind::StatPool => Box::new(StatPool),
        ExtractorKind::MeanPool => Box::new(MeanPool),
        ExtractorKind::TestLinear => Box::new(TestLinear::new(
            input_dim,
            output_dim.unwrap_or(2 * input_dim),
            seed,
        )?),
        ExtractorKind::ExternalFile => {
            return Err(Error::Config(
                "external embeddings are loaded from files, not computed from windows".into(),
            ))
        }
    })
}

/// Window vectors with the start time and voiced index of each window.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub vectors: Vec<DVector<f64>>,
    /// Start time of each analysis window (`P_rv`).
    pub starts: Vec<f64>,
    /// Voiced-frame index of each window's first frame.
    pub positions: Vec<usize>,
    pub spec: ExtractorSpec,
}

impl EmbeddingSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn to_matrix_file(&self) -> MatrixFile {
        let d = self.dim();
        let mut data = DMatrix::zeros(self.len(), d);
        for (r, v) in self.vectors.iter().enumerate() {
            data.row_mut(r).copy_from(&v.transpose());
        }
        MatrixFile {
            data,
            times: Some(self.starts.clone()),
        }
    }
}

/// Number of windows of `n` frames at hop `shift` over `l` frames.
pub fn window_count(l: usize, n: usize, shift: usize) -> usize {
    if l < n || n == 0 || shift == 0 {
        0
    } else {
        (l - n) / shift + 1
    }
}

/// One embedding per window of `n` consecutive voiced frames, hopping by
/// `shift` frames.
pub fn sliding_extract(
    extractor: &dyn Extractor,
    voiced: &FeatureSequence,
    n: usize,
    shift: usize,
) -> Result<EmbeddingSequence> {
    sliding_extract_with(extractor, voiced, n, shift, Parallelism::default())
}

pub fn sliding_extract_with(
    extractor: &dyn Extractor,
    voiced: &FeatureSequence,
    n: usize,
    shift: usize,
    par: Parallelism,
) -> Result<EmbeddingSequence> {
    if n == 0 || shift == 0 {
        return Err(Error::Config("window length and shift must be at least 1".into()));
    }
    let l = voiced.len();
    if l < n {
        return Err(Error::TooShort {
            available: l,
            required: n,
        });
    }
    let count = window_count(l, n, shift);
    let positions: Vec<usize> = (0..count).map(|i| i * shift).collect();
    let vectors = map_range(count, par, |i| {
        extractor.extract(voiced.features.rows(positions[i], n))
    });
    let output_dim = extractor.output_dim(voiced.dim());
    Ok(EmbeddingSequence {
        vectors,
        starts: positions.iter().map(|&p| voiced.frame_starts[p]).collect(),
        positions,
        spec: ExtractorSpec {
            name: extractor.kind().name().to_string(),
            window_len: n,
            output_dim,
            kind: extractor.kind(),
        },
    })
}

/// Writes embeddings with their start times in the matrix container.
pub fn write_embeddings(path: impl AsRef<Path>, seq: &EmbeddingSequence) -> Result<()> {
    write_matrix(path, &seq.to_matrix_file())
}

/// Loads precomputed embeddings (e.g. from a neural extractor).
pub fn load_external_embeddings(
    path: impl AsRef<Path>,
    expected_dim: usize,
    window_len: usize,
) -> Result<EmbeddingSequence> {
    let path = path.as_ref();
    let inner = || -> Result<EmbeddingSequence> {
        let file = read_matrix(path)?;
        if file.data.nrows() == 0 {
            return Err(Error::Empty("embedding file has no rows".into()));
        }
        if file.data.ncols() != expected_dim {
            return Err(Error::DimensionMismatch {
                expected: expected_dim,
                found: file.data.ncols(),
            });
        }
        let starts = file
            .times
            .ok_or_else(|| Error::Format("embedding file lacks start times".into()))?;
        if starts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("embedding start times are not strictly increasing".into()));
        }
        let vectors = file.data.row_iter().map(|r| r.transpose()).collect();
        Ok(EmbeddingSequence {
            vectors,
            positions: (0..starts.len()).collect(),
            starts,
            spec: ExtractorSpec {
                name: ExtractorKind::ExternalFile.name().to_string(),
                window_len,
                output_dim: expected_dim,
                kind: ExtractorKind::ExternalFile,
            },
        })
    };
    inner().map_err(|e| e.in_file(path))
}

/// Training windows: `n` consecutive voiced frames that all fall inside
/// reference segments of one class, hopping by `hop`. Labels index into
/// `classes`; frames of other classes or outside the reference are skipped.
pub fn labeled_windows(
    extractor: &dyn Extractor,
    voiced: &FeatureSequence,
    reference: &Diarization,
    classes: &[String],
    n: usize,
    hop: usize,
) -> Result<(Vec<DVector<f64>>, Vec<usize>)> {
    if n == 0 || hop == 0 {
        return Err(Error::Config("window length and hop must be at least 1".into()));
    }
    let half = voiced.spec.frame_shift / 2.0;
    let frame_class: Vec<Option<usize>> = voiced
        .frame_starts
        .iter()
        .map(|&t| {
            let c = t + half;
            reference
                .segments()
                .iter()
                .find(|s| s.onset <= c && c < s.end())
                .and_then(|s| classes.iter().position(|l| *l == s.label))
        })
        .collect();
    let (mut xs, mut labels) = (Vec::new(), Vec::new());
    let mut start = 0;
    while start < frame_class.len() {
        let mut end = start + 1;
        while end < frame_class.len() && frame_class[end] == frame_class[start] {
            end += 1;
        }
        if let Some(c) = frame_class[start] {
            let mut p = start;
            while p + n <= end {
                xs.push(extractor.extract(voiced.features.rows(p, n)));
                labels.push(c);
                p += hop;
            }
        }
        start = end;
    }
    Ok((xs, labels))
}
