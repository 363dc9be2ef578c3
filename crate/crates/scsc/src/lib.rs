//! Stochastic spatial-domain convolutional sparse coding.
//!
//! Models images as sums of small learned filters convolved with sparse
//! coefficient maps, and trains the filters entirely in the spatial domain.
//! The key trick is random code subsampling: each training iteration
//! optimizes only a random fraction p of the coefficient positions, cutting
//! per-iteration cost by roughly 1/p while barely affecting what is learned.
//! Two outer loops are provided: a batch driver over a full image set and an
//! online driver that streams images through constant-size surrogate
//! statistics, scaling to arbitrarily large corpora and over-complete
//! dictionaries.

pub mod applications;
pub mod codes;
pub mod config;
pub mod cscd;
pub mod dictionary;
pub mod drivers;
pub mod error;
pub mod filter_update;
pub mod lasso;
pub mod mask;
pub mod metrics;
pub mod operators;
pub mod rng;
pub mod signal;
pub mod trace;

pub use codes::CodeMap;
pub use config::{AdmmParams, QuadMode, TrainConfig};
pub use dictionary::Dictionary;
pub use error::{Error, Result};
pub use mask::{sample_mask, ObservationMask, SubsampleMask};
pub use signal::{contrast_normalize, NormalizeWindow, Signal};
pub use trace::{TraceRow, TrainTrace};
