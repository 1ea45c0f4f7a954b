//! Configuration, graymap images and CSV tables.

pub mod config;
pub mod pgm;
pub mod table;

pub use config::{parse_config, parse_config_text, resolve_config, ExperimentConfig, ExperimentKind, InitSpec, Method};
pub use pgm::{read_image, write_image};
pub use table::{write_metrics_csv, MetricsRow, METRICS_HEADER};
