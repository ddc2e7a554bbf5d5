pub mod bicluster;
pub mod clustering;
pub mod datamodel;
pub mod eigen;
pub mod error;
pub mod factor;
pub mod fuzzy;
pub mod indicators;
pub mod metrics;
pub mod ohlcv;
pub mod pipeline;
pub(crate) mod serde_array;
pub mod strategy;
pub mod synth;

pub use bicluster::{bcbof, BcbofConfig, Bicluster};
pub use datamodel::{DataMatrix, NormalizationParams};
pub use error::{Error, Result};
