//! File formats: RTTM, matrix container, model container, configuration.

pub mod config;
pub mod matrix;
pub mod model;
pub mod rttm;

pub use config::{load_config, parse_config, preset, Mode, PipelineConfig, Preset, DEFAULT_TICK, PRESETS};
pub use matrix::{decode_matrix, encode_matrix, read_matrix, write_matrix, MatrixFile, MATRIX_MAGIC};
pub use model::{decode_model, encode_model, read_model, write_model, MODEL_MAGIC};
pub use rttm::{format_rttm, read_rttm, read_rttm_all, read_rttm_file, write_rttm, write_rttm_file};
