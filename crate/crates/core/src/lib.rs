//! Pricing of European puts under Barndorff-Nielsen–Shephard stochastic volatility by a
//! Taylor expansion of the mixing formula, with remainder bounds and two reference
//! pricers (Fourier inversion of the characteristic function and Monte Carlo).

pub mod bounds;
pub mod bsm;
pub mod model;
pub mod moments;
pub mod numeric;
pub mod pricer;
pub mod reference;

pub use model::{alpha, CumulantModel, ModelError, ModelKind, ModelParams, OptionSpec};
pub use moments::{MomentCache, MomentError, MomentTable};
