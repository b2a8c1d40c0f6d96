//! Reference pricers used to check the Taylor prices.

pub mod cf;
pub mod mc;

pub use cf::{
    cf_call_price, cf_log_price, cf_put_price, cf_put_price_via, Branch, CfError, CfPrice,
    CfSettings, Quadrature, Route,
};
pub use mc::{
    mc_put_price, put_from_bundle, simulate_paths, Estimator, McError, McPrice, McSettings,
    PathBundle,
};
