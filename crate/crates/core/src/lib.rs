//! Thermal-light ghost imaging: speckle simulation, correlation estimators,
//! registration and reconstruction.
//!
//! The crate models a three-arm pseudo-thermal imaging bench end to end:
//!
//! 1. [`specklesim`] synthesizes correlated speckle frame stacks for a test
//!    arm (carrying an object) and two reference arms, with per-arm gain,
//!    offset, decorrelation and detector noise.
//! 2. [`frames`] holds the stacks and persists them bit-exactly (GIS1
//!    binary format, PGM renders).
//! 3. [`registration`] finds the displacement between correlated regions by
//!    exhaustive search on the per-frame spatial correlation, and sizes the
//!    speckle from the peak's FWHM.
//! 4. [`estimators`] provides the normalized second- and third-order
//!    correlation coefficients with streaming moment accumulation and an
//!    independent two-pass oracle.
//! 5. [`imaging`] reconstructs ghost images from a bucket series against
//!    the reference arms and scores them with the visibility metric.
//!
//! Everything downstream of a seed is deterministic: random streams are
//! counter-based, parallel reductions are order-fixed, and file outputs are
//! byte-stable.

pub mod estimators;
pub mod frames;
pub mod imaging;
pub mod registration;
pub mod specklesim;

pub use estimators::{oracle_c2, oracle_c3, CorrelationValue, MomentSummary};
pub use frames::{Displacement, FrameStack, Region};
pub use imaging::{bucket, ghost2, ghost3, visibility, BucketSeries, GhostImage};
pub use registration::{
    chain_register, correlation_map, frame_spatial_c2, register, register_pair, CorrelationMap,
    RegistrationResult, SearchBounds,
};
pub use specklesim::{
    simulate, simulate_analog, ArmParams, ObjectMask, SimConfig, SimOutput, SpeckleParams,
};
