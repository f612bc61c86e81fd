//! Time-frequency signal model, Gabor systems and SINR bounds for
//! multicarrier transmission over doubly dispersive channels with
//! time-frequency distortions.

pub mod bounds;
pub mod channel;
pub mod distortion;
pub mod error;
pub mod gabor;
pub mod montecarlo;
pub mod stats;
pub mod tfsignal;

pub use num_complex::Complex64;

pub use channel::{ChannelRealization, PowerDelayProfile};
pub use distortion::{DistortionRealization, DistortionSpec};
pub use error::{Error, Result};
pub use gabor::{Coefficients, GaborSystem, GramMatrix, Lattice};
pub use montecarlo::{SimConfig, SimResult};
pub use tfsignal::{ComplexSignal, OfdmPulses, ShiftMode, TFShift};
