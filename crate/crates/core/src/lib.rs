//! Cross-block latent-variable analysis (PLS and CCA) with resampling-based
//! inference, reproducibility metrics and simulation tools.

pub mod block;
pub mod datagen;
pub mod decomposition;
pub mod error;
pub mod harness;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod pca;
pub mod report;
pub mod reproducibility;
pub mod rng;
pub mod stats;

pub use block::{correlation_bundle, zscore_columns, CorrelationBundle, DataBlock};
pub use decomposition::{analyze, fit, CrossBlockModel, Method};
pub use error::{BlockSide, Error, Result};
pub use harness::ExperimentConfig;
pub use report::ReportDocument;
