//! Joint design of a multi-antenna transmit beamformer and a set of
//! reflecting-surface patterns for a primary downlink that carries a
//! backscatter link by pattern index modulation.
//!
//! The crate covers channel generation, closed-form and simulated link
//! metrics, the alternating optimizer, discrete-phase and M-PSK baselines, and
//! a scenario runner that writes CSV results.

pub mod baselines;
pub mod channel;
pub mod detection;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mapping;
pub mod metrics;
pub mod optimizer;
pub mod rng;
pub mod system;

pub use channel::{generate_channels, perturb_csi, ChannelSet, CsiErrorModel};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};
pub use metrics::MetricReport;
pub use optimizer::{design, DesignOutcome, Method, OptimizerSettings};
pub use system::{Beamformer, ReflectingCandidateSet, SystemConfig};
