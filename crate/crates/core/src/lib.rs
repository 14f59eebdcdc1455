//! Transmitter-side toolkit for integrated sensing and communication with a
//! 1-bit DAC base station and a reconfigurable intelligent surface that
//! embeds the data symbols in its phase shifts.
//!
//! The base station emits a quantized waveform whose covariance is designed
//! for a radar beampattern; the surface co-phases the cascaded channel to the
//! user and rotates it by the PSK symbol.

pub mod comm;
pub mod config;
pub mod error;
pub mod experiment;
pub mod frontend;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod precoder;
pub mod ris;
pub mod rng;
pub mod scene;

pub use comm::{PskConstellation, SepEstimate};
pub use config::{ExperimentConfig, Scheme};
pub use error::{Error, Result};
pub use frontend::QuantizedWaveform;
pub use linalg::{CMatrix, EigenDecomposition, HermitianMatrix};
pub use metrics::{CovarianceReference, IlluminationReport};
pub use num_complex::Complex64;
pub use precoder::{AngularGrid, DesiredBeampattern, PrecoderDesign, RelaxedSolution, SolverOptions};
pub use ris::{PhaseResolution, RisState};
pub use scene::{ChannelModelParams, Position, Scene};
