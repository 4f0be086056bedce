//! JSON pipeline configuration with named presets.
//!
//! Keys left out are filled from the preset (explicit or implied by `N`)
//! and then from built-in defaults. The resolved configuration serializes
//! back to JSON that loads to the same value.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{ProjectionChain, ScorerKind, LDA_DIM_XVECTOR};
use crate::diarize::ChangePointConfig;
use crate::embedding::ExtractorKind;
use crate::error::{Error, Result};
use crate::features::{FrameSpec, DEFAULT_VAD_FACTOR};

/// Label-sequence resolution for tick-based outputs (seconds).
pub const DEFAULT_TICK: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fixed,
    Changepoint,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Mode::Fixed),
            "changepoint" => Ok(Mode::Changepoint),
            other => Err(Error::Config(format!("unknown mode `{other}` (fixed|changepoint)"))),
        }
    }
}

/// Named hyperparameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub window: usize,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub scorer: ScorerKind,
}

const fn p(name: &'static str, window: usize, alpha: f64, delta: f64, gamma: f64, scorer: ScorerKind) -> Preset {
    Preset {
        name,
        window,
        alpha,
        delta,
        gamma,
        scorer,
    }
}

pub const PRESETS: &[Preset] = &[
    p("ttsf-n200", 200, 3.2, 1.3, 0.9, ScorerKind::Gplda),
    p("ttsf-n50", 50, 2.6, 1.3, 0.9, ScorerKind::Gplda),
    p("ttsf-sd-n50", 50, 2.6, 1.3, 0.9, ScorerKind::Gplda),
    p("mscs-gue-n200", 200, 0.3, 4.5, 1.1, ScorerKind::Cosine),
    p("mscs-tae-n200", 200, 0.3, 4.5, 1.1, ScorerKind::Cosine),
    p("mscs-tee-n200", 200, 0.3, 3.9, 1.1, ScorerKind::Cosine),
    p("mscs-gue-n50", 50, 0.3, 0.9, 1.1, ScorerKind::Cosine),
    p("mscs-tae-n50", 50, 0.3, 0.9, 1.3, ScorerKind::Cosine),
    p("mscs-tee-n50", 50, 0.3, 0.5, 1.3, ScorerKind::Cosine),
];

/// Looks up a preset; `gue-n200` is accepted for `mscs-gue-n200`.
pub fn preset(name: &str) -> Option<Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name || p.name.strip_prefix("mscs-") == Some(name))
        .copied()
}

/// Configuration as written by the user: every key optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    preset: Option<String>,
    #[serde(rename = "N")]
    window: Option<usize>,
    alpha: Option<f64>,
    delta: Option<f64>,
    gamma: Option<f64>,
    #[serde(rename = "K")]
    clusters: Option<usize>,
    scorer: Option<ScorerKind>,
    extractor: Option<ExtractorKind>,
    shift: Option<usize>,
    tick: Option<f64>,
    vad_factor: Option<f64>,
    frame_len: Option<f64>,
    frame_shift: Option<f64>,
    collar: Option<f64>,
    chain: Option<String>,
    lda_dim: Option<usize>,
    seed: Option<u64>,
}

/// Fully resolved pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub preset: Option<String>,
    #[serde(rename = "N")]
    pub window: usize,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub clusters: usize,
    pub scorer: ScorerKind,
    pub extractor: ExtractorKind,
    pub shift: usize,
    pub tick: f64,
    pub vad_factor: f64,
    pub frame_len: f64,
    pub frame_shift: f64,
    pub collar: f64,
    pub chain: String,
    pub lda_dim: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        resolve(RawConfig::default()).expect("defaults are valid")
    }
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn resolve(raw: RawConfig) -> Result<PipelineConfig> {
    let named = match &raw.preset {
        Some(name) => Some(preset(name).ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            schema("preset", format!("unknown preset `{name}`; known: {}", known.join(", ")))
        })?),
        None => None,
    };
    let window = raw.window.or(named.map(|p| p.window)).unwrap_or(200);
    // Without an explicit preset the change-point values follow N.
    let base = named.unwrap_or_else(|| {
        preset(&format!("ttsf-n{window}")).unwrap_or_else(|| preset("ttsf-n200").expect("built in"))
    });
    let fs = FrameSpec::default();
    let cfg = PipelineConfig {
        mode: raw.mode.unwrap_or(Mode::Changepoint),
        preset: named.map(|p| p.name.to_string()),
        window,
        alpha: raw.alpha.unwrap_or(base.alpha),
        delta: raw.delta.unwrap_or(base.delta),
        gamma: raw.gamma.unwrap_or(base.gamma),
        clusters: raw.clusters.unwrap_or(2),
        scorer: raw.scorer.unwrap_or(base.scorer),
        extractor: raw.extractor.unwrap_or(ExtractorKind::StatPool),
        shift: raw.shift.unwrap_or(1),
        tick: raw.tick.unwrap_or(DEFAULT_TICK),
        vad_factor: raw.vad_factor.unwrap_or(DEFAULT_VAD_FACTOR),
        frame_len: raw.frame_len.unwrap_or(fs.frame_len),
        frame_shift: raw.frame_shift.unwrap_or(fs.frame_shift),
        collar: raw.collar.unwrap_or(0.0),
        chain: raw.chain.unwrap_or_else(|| "whiten,lnorm".to_string()),
        lda_dim: raw.lda_dim,
        seed: raw.seed.unwrap_or(0),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("tick", self.tick),
            ("frame_len", self.frame_len),
            ("frame_shift", self.frame_shift),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(schema(key, format!("must be a positive number, got {v}")));
            }
        }
        for (key, v) in [("vad_factor", self.vad_factor), ("collar", self.collar)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(schema(key, format!("must be non-negative, got {v}")));
            }
        }
        for (key, v) in [("N", self.window), ("K", self.clusters), ("shift", self.shift)] {
            if v == 0 {
                return Err(schema(key, "must be at least 1"));
            }
        }
        if self.lda_dim == Some(0) {
            return Err(schema("lda_dim", "must be at least 1"));
        }
        self.projection_chain().map_err(|e| schema("chain", e.to_string()))?;
        FrameSpec::new(self.frame_len, self.frame_shift).map_err(|e| schema("frame_len", e.to_string()))?;
        Ok(())
    }

    pub fn change_points(&self) -> ChangePointConfig {
        ChangePointConfig {
            alpha: self.alpha,
            delta: self.delta,
            gamma: self.gamma,
            window: self.window,
        }
    }

    pub fn frame_spec(&self) -> FrameSpec {
        FrameSpec {
            frame_len: self.frame_len,
            frame_shift: self.frame_shift,
        }
    }

    /// The projection stages; an `lda` stage without `lda_dim` uses the
    /// x-vector default.
    pub fn projection_chain(&self) -> Result<ProjectionChain> {
        ProjectionChain::parse(&self.chain, Some(self.lda_dim.unwrap_or(LDA_DIM_XVECTOR)))
    }

    /// The effective configuration as pretty JSON.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Replaces the preset-derived fields with another preset's values.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let p = preset(name).ok_or_else(|| schema("preset", format!("unknown preset `{name}`")))?;
        self.preset = Some(p.name.to_string());
        self.window = p.window;
        self.alpha = p.alpha;
        self.delta = p.delta;
        self.gamma = p.gamma;
        self.scorer = p.scorer;
        Ok(())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(json: &str) -> Result<PipelineConfig> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(&path, e.into_inner().to_string())
    })?;
    let cfg = resolve(raw)?;
    log::info!("effective configuration: {}", cfg.echo());
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_config(&text).map_err(|e| e.in_file(path))
}
