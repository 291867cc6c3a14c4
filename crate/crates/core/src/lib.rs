//! False-discovery-proportion control from k-FWER bounding devices.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: normal tail and quantile, binomial tails, Gauss quadrature.
//! - [`models`]: noise models, p-value sampling and the conditional null
//!   distribution `F0(t, w)` of factor models.
//! - [`bounding`]: bounding devices `B0(t, k, u)` and their inversion into
//!   k-FWE based critical values.
//! - [`procedures`]: step-up / step-down engines and every FDP controlling
//!   procedure built on top of them.
//! - [`simulate`]: a seeded, schedule-independent Monte Carlo harness.
//! - [`rng`]: replicate seed derivation.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod bounding;
pub mod error;
pub mod models;
pub mod numerics;
pub mod procedures;
pub mod rng;
pub mod simulate;

pub use bounding::{BoundingDevice, CriticalValues, DeviceFlavor, Mode};
pub use error::{Error, Result};
pub use models::{ExperimentConfig, Hypotheses, NoiseModel, PValueSample};
pub use procedures::{Direction, ProcedureId, ProcedureOutcome, ProcedureSpec};
pub use simulate::SimulationReport;

/// `floor(x)` with a relative guard so that products such as `0.1 * 10`
/// landing at `0.99999..` still floor to the intended integer.
pub fn guarded_floor(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x + 1e-12 * x).floor() as usize
}

/// `ceil(x)` with the mirror-image guard of [`guarded_floor`].
pub fn guarded_ceil(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x - 1e-12 * x).ceil() as usize
}

/// `floor(alpha * l) + 1`, the number of false rejections that makes the
/// FDP of `l` rejections exceed `alpha`.
pub fn fdp_k(alpha: f64, l: usize) -> usize {
    guarded_floor(alpha * l as f64) + 1
}
