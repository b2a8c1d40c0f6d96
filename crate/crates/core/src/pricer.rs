//! The Nth-order Taylor price and its second-order closed form.

use crate::bsm::{bs_put, eval_partial, BsError, DerivKey};
use crate::model::{ModelError, ModelParams, OptionSpec};
use crate::moments::{second_order_moments, MomentError, MomentTable};
use crate::numeric::{binom, factorial};
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriceError {
    #[error("invalid parameters: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ModelError>),
    #[error("order {requested} needs E[P^{requested}], but moments exist only up to power {max}")]
    OrderCap { requested: usize, max: usize },
    #[error("Taylor order must be at least 2, got {0}")]
    OrderTooLow(usize),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Bs(#[from] BsError),
    #[error("first-order layer does not vanish: E[P-1] = {p}, E[I-EI] = {i}")]
    FirstOrder { p: f64, i: f64 },
}

/// One (n, k) contribution (1/n!) C(n,k) S0^{n-k} E[(P-1)^{n-k}(I-EI)^k] d^n BS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correction {
    pub n: usize,
    pub k: usize,
    pub moment: f64,
    pub derivative: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone)]
pub struct PriceResult {
    pub value: f64,
    pub order: usize,
    pub base_bs: f64,
    pub corrections: Vec<Correction>,
    /// Whether E[P^{N+1}] exists (needed by the remainder term).
    pub remainder_moment_finite: bool,
    pub moments_used: Arc<MomentTable>,
}

impl PriceResult {
    /// Signed sum of the n-th layer.
    pub fn layer(&self, n: usize) -> f64 {
        self.corrections
            .iter()
            .filter(|c| c.n == n)
            .map(|c| c.contribution)
            .sum()
    }

    pub fn sum_corrections(&self) -> f64 {
        self.value - self.base_bs
    }
}

fn check_order(params: &ModelParams, order: usize) -> Result<bool, PriceError> {
    if order < 2 {
        return Err(PriceError::OrderTooLow(order));
    }
    let adm = params.validate().map_err(PriceError::Invalid)?;
    match adm.max_order {
        Some(m) if order > m => Err(PriceError::OrderCap {
            requested: order,
            max: m,
        }),
        Some(m) => Ok(order < m),
        None => Ok(true),
    }
}

/// Correction layer n at a shared table: Vec of (k, correction).
fn layer(
    tab: &MomentTable,
    params: &ModelParams,
    option: &OptionSpec,
    n: usize,
) -> Result<Vec<Correction>, PriceError> {
    let r_t = params.r * option.expiry;
    let (x, y) = (params.s0, tab.e_it());
    let nf = factorial(n);
    (0..=n)
        .map(|k| {
            let moment = tab.central_mixed_moment(n, k)?;
            let key = DerivKey::new((n - k) as u32, k as u32);
            let derivative = eval_partial(key, x, y, option.strike, r_t)?;
            let contribution =
                binom(n, k) * params.s0.powi((n - k) as i32) * moment * derivative / nf;
            Ok(Correction {
                n,
                k,
                moment,
                derivative,
                contribution,
            })
        })
        .collect()
}

/// Taylor price using an existing moment table (which must match params and expiry).
pub fn taylor_price_with(
    tab: Arc<MomentTable>,
    params: &ModelParams,
    option: &OptionSpec,
    order: usize,
) -> Result<PriceResult, PriceError> {
    let remainder_moment_finite = check_order(params, order)?;
    let p1 = tab.central_mixed_moment(1, 0)?;
    let i1 = tab.central_mixed_moment(1, 1)?;
    if p1.abs() > 1e-14 || i1.abs() > 1e-14 {
        return Err(PriceError::FirstOrder { p: p1, i: i1 });
    }
    let r_t = params.r * option.expiry;
    let base_bs = bs_put(params.s0, tab.e_it(), option.strike, r_t)?;
    let mut value = base_bs;
    let mut corrections = Vec::new();
    for n in 2..=order {
        let l = layer(&tab, params, option, n)?;
        // Layers are added one at a time so that consecutive orders differ by
        // exactly one layer.
        value += l.iter().map(|c| c.contribution).sum::<f64>();
        corrections.extend(l);
    }
    Ok(PriceResult {
        value,
        order,
        base_bs,
        corrections,
        remainder_moment_finite,
        moments_used: tab,
    })
}

/// Pi_N = BS(S0, E I_T) + sum_{n=2}^N (1/n!) sum_k C(n,k) S0^{n-k} E[...] d^n BS.
pub fn taylor_price(
    params: &ModelParams,
    option: &OptionSpec,
    order: usize,
) -> Result<PriceResult, PriceError> {
    check_order(params, order)?;
    let tab = Arc::new(MomentTable::new(params, option.expiry)?);
    taylor_price_with(tab, params, option, order)
}

/// The explicit second-order formula, computed from the closed-form moments.
pub fn second_order_price(
    params: &ModelParams,
    option: &OptionSpec,
) -> Result<PriceResult, PriceError> {
    let remainder_moment_finite = check_order(params, 2)?;
    let tab = Arc::new(MomentTable::new(params, option.expiry)?);
    let m = second_order_moments(params, option.expiry)?;
    let r_t = params.r * option.expiry;
    let (x, y, k) = (params.s0, tab.e_it(), option.strike);
    let base_bs = bs_put(x, y, k, r_t)?;
    let dxx = eval_partial(DerivKey::new(2, 0), x, y, k, r_t)?;
    let dxy = eval_partial(DerivKey::new(1, 1), x, y, k, r_t)?;
    let dyy = eval_partial(DerivKey::new(0, 2), x, y, k, r_t)?;
    let corrections = vec![
        Correction {
            n: 2,
            k: 0,
            moment: m.m2_p,
            derivative: dxx,
            contribution: 0.5 * x * x * m.m2_p * dxx,
        },
        Correction {
            n: 2,
            k: 1,
            moment: m.cov_pi,
            derivative: dxy,
            contribution: x * m.cov_pi * dxy,
        },
        Correction {
            n: 2,
            k: 2,
            moment: m.var_i,
            derivative: dyy,
            contribution: 0.5 * m.var_i * dyy,
        },
    ];
    let value = base_bs + corrections.iter().map(|c| c.contribution).sum::<f64>();
    Ok(PriceResult {
        value,
        order: 2,
        base_bs,
        corrections,
        remainder_moment_finite,
        moments_used: tab,
    })
}

/// Prices at strike one with S0/K and rescales by K.
pub fn price_by_homogeneity(
    params: &ModelParams,
    option: &OptionSpec,
    order: usize,
) -> Result<PriceResult, PriceError> {
    let k = option.strike;
    let scaled = ModelParams {
        s0: params.s0 / k,
        ..*params
    };
    let unit = OptionSpec {
        strike: 1.0,
        expiry: option.expiry,
    };
    let mut res = taylor_price(&scaled, &unit, order)?;
    res.value *= k;
    res.base_bs *= k;
    for c in &mut res.corrections {
        c.contribution *= k;
        // d^n BS / dx^{n-k} dy^k scales like K^{1-(n-k)}
        c.derivative *= k.powi(1 - (c.n - c.k) as i32);
    }
    Ok(res)
}
