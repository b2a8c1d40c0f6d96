//! Black-Scholes put in the (price, total variance) parametrisation and its partial
//! derivatives of any order.

mod term;

pub use term::{DerivTerm, Exps, Poly};

use crate::numeric::{norm_cdf, norm_pdf};
use once_cell::sync::Lazy;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use term::CompiledTerm;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BsError {
    #[error("{name} must be positive, got {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("derivative key ({0}, {1}) needs total order >= 2 for the term algebra")]
    LowOrder(u32, u32),
}

/// Order of differentiation in x (price) and y (total variance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DerivKey {
    pub xi_x: u32,
    pub xi_y: u32,
}

impl DerivKey {
    pub const fn new(xi_x: u32, xi_y: u32) -> Self {
        Self { xi_x, xi_y }
    }

    pub fn order(&self) -> u32 {
        self.xi_x + self.xi_y
    }
}

impl fmt::Display for DerivKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.xi_x, self.xi_y)
    }
}

fn check(x: f64, y: f64, strike: f64) -> Result<(), BsError> {
    for (name, value) in [("x", x), ("y", y), ("strike", strike)] {
        if !(value > 0.0) {
            return Err(BsError::Domain { name, value });
        }
    }
    Ok(())
}

/// (d+, d-) = ((ln(x/K) + rT +- y/2)/sqrt y). d- is formed as d+ - sqrt y.
pub fn d_pm(x: f64, y: f64, strike: f64, r_t: f64) -> Result<(f64, f64), BsError> {
    check(x, y, strike)?;
    Ok(d_pm_unchecked(x, y, strike, r_t))
}

#[inline]
fn d_pm_unchecked(x: f64, y: f64, strike: f64, r_t: f64) -> (f64, f64) {
    let s = y.sqrt();
    let dp = ((x / strike).ln() + r_t) / s + 0.5 * s;
    (dp, dp - s)
}

/// K e^{-rT} Phi(-d-) - x Phi(-d+).
pub fn bs_put(x: f64, y: f64, strike: f64, r_t: f64) -> Result<f64, BsError> {
    check(x, y, strike)?;
    Ok(bs_put_unchecked(x, y, strike, r_t))
}

#[inline]
pub(crate) fn bs_put_unchecked(x: f64, y: f64, strike: f64, r_t: f64) -> f64 {
    let (dp, dm) = d_pm_unchecked(x, y, strike, r_t);
    let v = strike * (-r_t).exp() * norm_cdf(-dm) - x * norm_cdf(-dp);
    v.max(0.0)
}

struct Entry {
    term: Arc<DerivTerm>,
    compiled: CompiledTerm,
}

static CACHE: Lazy<RwLock<HashMap<DerivKey, Arc<Entry>>>> = Lazy::new(Default::default);

fn build(key: DerivKey) -> DerivTerm {
    let (p, q) = (key.xi_x, key.xi_y);
    // Seeds: d2/dx2 = phi/(x sqrt y), d/dy = x phi/(2 sqrt y).
    let gamma = DerivTerm::from_parts(1, 1, 1, 1, &[(1, (0, 0, 0))]);
    let vega = DerivTerm::from_parts(1, 2, -1, 1, &[(1, (0, 0, 0))]);
    let (mut t, xs, ys) = match p {
        0 => (vega, 0, q - 1),
        1 => (vega.diff_x(), 0, q - 1),
        _ => (gamma, p - 2, q),
    };
    for _ in 0..ys {
        t = t.diff_y();
    }
    for _ in 0..xs {
        t = t.diff_x();
    }
    t
}

fn entry(key: DerivKey) -> Result<Arc<Entry>, BsError> {
    if key.order() < 2 {
        return Err(BsError::LowOrder(key.xi_x, key.xi_y));
    }
    if let Some(e) = CACHE.read().get(&key) {
        return Ok(e.clone());
    }
    let term = build(key);
    let e = Arc::new(Entry {
        compiled: term.compile(),
        term: Arc::new(term),
    });
    Ok(CACHE.write().entry(key).or_insert(e).clone())
}

/// Exact symbolic derivative for |xi| >= 2 (memoised).
pub fn bs_partial(key: DerivKey) -> Result<Arc<DerivTerm>, BsError> {
    Ok(entry(key)?.term.clone())
}

/// Applies an explicit sequence of differentiations ('x' or 'y') to the put, starting
/// from the vega seed. Used to check that the order of differentiation is immaterial.
pub fn partial_along(path: &str) -> Option<DerivTerm> {
    let mut chars = path.chars();
    let first = chars.position(|c| c == 'y')?;
    let mut t = DerivTerm::from_parts(1, 2, -1, 1, &[(1, (0, 0, 0))]);
    for _ in 0..first {
        t = t.diff_x();
    }
    for c in path.chars().skip(first + 1) {
        t = match c {
            'x' => t.diff_x(),
            'y' => t.diff_y(),
            _ => return None,
        };
    }
    Some(t)
}

/// Evaluator for a fixed key with |xi| >= 2 that skips the cache lookup per call.
/// Arguments are (x, y, strike, rT) and are not validated.
pub(crate) fn evaluator(
    key: DerivKey,
) -> Result<impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync, BsError> {
    let e = entry(key)?;
    Ok(move |x: f64, y: f64, strike: f64, r_t: f64| {
        let (dp, dm) = d_pm_unchecked(x, y, strike, r_t);
        e.compiled.eval(x, y, dp, dm)
    })
}

/// Value of d^{xi_x + xi_y} BS / dx^{xi_x} dy^{xi_y} at (x, y).
pub fn eval_partial(key: DerivKey, x: f64, y: f64, strike: f64, r_t: f64) -> Result<f64, BsError> {
    check(x, y, strike)?;
    let (dp, dm) = d_pm_unchecked(x, y, strike, r_t);
    Ok(match (key.xi_x, key.xi_y) {
        (0, 0) => bs_put_unchecked(x, y, strike, r_t),
        (1, 0) => -norm_cdf(-dp),
        (0, 1) => x * norm_pdf(dp) / (2.0 * y.sqrt()),
        _ => entry(key)?.compiled.eval(x, y, dp, dm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_values() {
        let (p, m) = d_pm(1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!((p, m), (0.5, -0.5));
        let (p, m) = d_pm(1.0, 1.245_714_62, 0.2, 0.05).unwrap();
        assert!((p - 2.044_855_106_682_176).abs() < 1e-14);
        assert!((m - 0.928_739_243_521_008).abs() < 1e-14);
        assert!(d_pm(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(d_pm(1.0, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn put_values() {
        let v = bs_put(1.0, 0.25, 1.0, 0.0).unwrap();
        assert!((v - 0.197_412_7).abs() < 1e-7);
        assert!(bs_put(1e6, 1.0, 1.0, 0.0).unwrap() < 1e-12);
        let v = bs_put(0.5, 1e-12, 1.0, 0.05).unwrap();
        assert!((v - ((-0.05f64).exp() - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn second_order_closed_forms() {
        let v = eval_partial(DerivKey::new(2, 0), 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!((v - 0.352_065_3).abs() < 1e-7);
        let t = bs_partial(DerivKey::new(2, 0)).unwrap();
        assert_eq!(t.poly.len(), 1);
        assert!(bs_partial(DerivKey::new(1, 0)).is_err());
    }

    #[test]
    fn paths_commute() {
        for order in 2..=6usize {
            for mask in 0..(1u32 << order) {
                let path: String = (0..order)
                    .map(|b| if mask >> b & 1 == 1 { 'y' } else { 'x' })
                    .collect();
                let Some(t) = partial_along(&path) else {
                    continue;
                };
                let q = path.chars().filter(|&c| c == 'y').count() as u32;
                let key = DerivKey::new(order as u32 - q, q);
                assert_eq!(
                    t.canonical(),
                    bs_partial(key).unwrap().canonical(),
                    "{path}"
                );
            }
        }
    }
}
