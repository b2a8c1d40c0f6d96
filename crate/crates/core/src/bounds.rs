//! Bounds on the Taylor remainder: numeric sup of |d^xi BS| over the region the
//! mean-value point can reach, the G_N bound on moments of P_T - 1, the assembled
//! remainder bound and the asymptotic coefficients f_N, g_N.

use crate::bsm::{self, BsError, DerivKey};
use crate::model::{alpha_unchecked, phi_coef, ModelError, ModelKind, ModelParams, OptionSpec};
use crate::moments::{expected_integrated_variance, h_general, MomentError, MomentTable};
use crate::numeric::{binom, factorial};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Expiries below this get the "bound unreliable" flag: M blows up as T -> 0.
pub const UNRELIABLE_EXPIRY: f64 = 0.05;
/// Multiplier applied to the numerically found maximum.
pub const SAFETY_FACTOR: f64 = 1.05;
/// Half-width of the ln x scan around ln K - rT.
const LN_X_SPAN: f64 = 20.0;
/// The y scan covers [beta, beta + Y_SPAN * E[I_T]].
const Y_SPAN: f64 = 40.0;
const X_POINTS: usize = 161;
const Y_POINTS: usize = 121;
const REFINE_STARTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid parameters: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ModelError>),
    #[error("sup bound needs |xi| >= 3, got {0}")]
    LowOrder(DerivKey),
    #[error("remainder bound needs N >= 2, got {0}")]
    Order(usize),
    #[error("method {method} requires {requirement}, got rho = {rho}")]
    Method {
        method: BoundMethod,
        requirement: &'static str,
        rho: f64,
    },
    #[error("G_N needs rho <= 0, got {0}")]
    PositiveRho(f64),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bs(#[from] BsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    /// Signed mixed moments in place of absolute ones. Diagnostic only.
    RawTheorem,
    CauchySchwarz,
    RhoZero,
}

impl BoundMethod {
    /// rho_zero when rho = 0, cauchy_schwarz otherwise.
    pub fn auto(rho: f64) -> Self {
        if rho == 0.0 {
            Self::RhoZero
        } else {
            Self::CauchySchwarz
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RawTheorem => "raw_theorem",
            Self::CauchySchwarz => "cauchy_schwarz",
            Self::RhoZero => "rho_zero",
        }
    }
}

impl fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw_theorem" => Ok(Self::RawTheorem),
            "cauchy_schwarz" => Ok(Self::CauchySchwarz),
            "rho_zero" => Ok(Self::RhoZero),
            other => Err(format!("unknown bound method '{other}'")),
        }
    }
}

/// Result of a sup search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupEstimate {
    /// Maximum found times SAFETY_FACTOR.
    pub value: f64,
    /// (x, y) where the maximum was found.
    pub argmax: (f64, f64),
    /// The largest value on the truncation edge y = y_max is below 1% of the maximum.
    pub truncation_ok: bool,
}

/// Box in (ln x, ln y) searched for the sup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub ln_x: (f64, f64),
    pub ln_y: (f64, f64),
}

/// Region reachable by ((1-u) S0 + u P_T S0, (1-u) E[I_T] + u I_T).
///
/// For rho < 0, P_T <= e^{-lambda T kappa(rho)}, so x never exceeds
/// S0 max(1, e^{-lambda T kappa(rho)}); for rho = 0, x = S0. y >= sigma0^2 alpha_{0,T}.
pub fn search_region(
    params: &ModelParams,
    option: &OptionSpec,
) -> Result<SearchRegion, BoundError> {
    params.validate().map_err(BoundError::Invalid)?;
    let t = option.expiry;
    let beta = params.sigma0_sq * alpha_unchecked(params.lambda, t);
    let e_it = expected_integrated_variance(params, t)?;
    let ln_y = (beta.ln(), (beta + Y_SPAN * e_it).ln());

    let centre = option.strike.ln() - params.r * t;
    let ln_s0 = params.s0.ln();
    let shift = -params.lambda * t * params.kappa(params.rho)?;
    let ln_x = if params.rho == 0.0 {
        (ln_s0, ln_s0)
    } else if params.rho < 0.0 {
        let hi = (ln_s0 + shift.max(0.0)).min(centre + LN_X_SPAN);
        let lo = centre - LN_X_SPAN;
        if lo > hi {
            (hi - 2.0 * LN_X_SPAN, hi)
        } else {
            (lo, hi)
        }
    } else {
        let lo = (ln_s0 + shift.min(0.0)).max(centre - LN_X_SPAN);
        let hi = centre + LN_X_SPAN;
        if lo > hi {
            (lo, lo + 2.0 * LN_X_SPAN)
        } else {
            (lo, hi)
        }
    };
    Ok(SearchRegion { ln_x, ln_y })
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

// Compass search with halving steps, clamped to the region.
fn refine<G: Fn(f64, f64) -> f64>(
    g: &G,
    start: (f64, f64),
    step: (f64, f64),
    region: &SearchRegion,
) -> (f64, (f64, f64)) {
    let clamp = |p: (f64, f64)| {
        (
            p.0.clamp(region.ln_x.0, region.ln_x.1),
            p.1.clamp(region.ln_y.0, region.ln_y.1),
        )
    };
    let mut p = start;
    let mut best = g(p.0, p.1);
    let (mut hx, mut hy) = step;
    for _ in 0..400 {
        let mut moved = false;
        let dirs = [
            (1.0, 0.0),
            (-1.0, 0.0),
            (0.0, 1.0),
            (0.0, -1.0),
            (1.0, 1.0),
            (-1.0, -1.0),
            (1.0, -1.0),
            (-1.0, 1.0),
        ];
        for (dx, dy) in dirs {
            let q = clamp((p.0 + dx * hx, p.1 + dy * hy));
            let v = g(q.0, q.1);
            if v > best {
                best = v;
                p = q;
                moved = true;
            }
        }
        if !moved {
            hx *= 0.5;
            hy *= 0.5;
            if hx < 1e-9 && hy < 1e-9 {
                break;
            }
        }
    }
    (best, p)
}

/// Grid scan plus local refinement of sup |d^xi BS_put| over the reachable region.
pub fn sup_derivative_search(
    key: DerivKey,
    params: &ModelParams,
    option: &OptionSpec,
) -> Result<SupEstimate, BoundError> {
    if key.order() < 3 {
        return Err(BoundError::LowOrder(key));
    }
    let region = search_region(params, option)?;
    let eval = bsm::evaluator(key)?;
    let (strike, r_t) = (option.strike, params.r * option.expiry);
    let g = |lx: f64, ly: f64| eval(lx.exp(), ly.exp(), strike, r_t).abs();

    let xs = grid(region.ln_x.0, region.ln_x.1, X_POINTS);
    let ys = grid(region.ln_y.0, region.ln_y.1, Y_POINTS);
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&lx| ys.iter().map(|&ly| g(lx, ly)).collect())
        .collect();

    let mut cells: Vec<(f64, usize, usize)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (v, i, j)))
        .collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let edge = rows.iter().map(|row| row[ys.len() - 1]).fold(0.0, f64::max);

    let step = (
        if xs.len() > 1 { xs[1] - xs[0] } else { 0.0 },
        if ys.len() > 1 { ys[1] - ys[0] } else { 0.0 },
    );
    let (best, arg) = cells
        .iter()
        .take(REFINE_STARTS)
        .map(|&(_, i, j)| refine(&g, (xs[i], ys[j]), step, &region))
        .fold(
            (0.0, (xs[0], ys[0])),
            |acc, r| if r.0 > acc.0 { r } else { acc },
        );

    Ok(SupEstimate {
        value: SAFETY_FACTOR * best,
        argmax: (arg.0.exp(), arg.1.exp()),
        truncation_ok: edge <= 0.01 * best,
    })
}

/// Upper estimate M_xi(T, K) of sup |d^xi BS_put| over the reachable region.
pub fn sup_derivative_bound(
    key: DerivKey,
    params: &ModelParams,
    option: &OptionSpec,
) -> Result<f64, BoundError> {
    Ok(sup_derivative_search(key, params, option)?.value)
}

/// G_0, ..., G_n with G_h >= |E[(P_T - 1)^h]|.
pub fn gn_sequence(n: usize, params: &ModelParams, t: f64) -> Result<Vec<f64>, BoundError> {
    params.validate().map_err(BoundError::Invalid)?;
    if params.rho > 0.0 {
        return Err(BoundError::PositiveRho(params.rho));
    }
    if params.rho == 0.0 {
        let mut g = vec![0.0; n + 1];
        g[0] = 1.0;
        return Ok(g);
    }
    let lk = params.lambda * t * params.kappa(params.rho)?;
    let f_t = -lk * (0.5 * (-lk).exp() + 0.5);
    Ok(h_general(0, n, f_t, 0.0, params.rho.abs(), params, t)?)
}

pub fn gn_bound(n: usize, params: &ModelParams, t: f64) -> Result<f64, BoundError> {
    Ok(gn_sequence(n, params, t)?[n])
}

/// One summand of the assembled bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerm {
    /// Power of (I_T - E I_T).
    pub n: usize,
    pub key: DerivKey,
    pub m_value: f64,
    pub moment_factor: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub order: usize,
    pub strike: f64,
    pub expiry: f64,
    #[serde(serialize_with = "keyed_map")]
    pub sup_bounds: BTreeMap<DerivKey, f64>,
    /// Indexed by n = 0..=N+1.
    pub moment_factors: Vec<f64>,
    pub terms: Vec<BoundTerm>,
    pub total: f64,
    pub method: BoundMethod,
    pub asymptotic_order: usize,
    /// Set for T below UNRELIABLE_EXPIRY.
    pub unreliable: bool,
    /// Every sup search passed its truncation check.
    pub truncation_ok: bool,
}

fn keyed_map<S: Serializer>(m: &BTreeMap<DerivKey, f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, v)| (k.to_string(), v)))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    order: usize,
    method: &'a str,
    n: usize,
    key: String,
    m_value: String,
    moment_factor: String,
    contribution: String,
    total: String,
}

impl BoundReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// One row per term; floats with 17 significant digits.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for t in &self.terms {
            w.serialize(CsvRow {
                order: self.order,
                method: self.method.as_str(),
                n: t.n,
                key: t.key.to_string(),
                m_value: format!("{:.16e}", t.m_value),
                moment_factor: format!("{:.16e}", t.moment_factor),
                contribution: format!("{:.16e}", t.contribution),
                total: format!("{:.16e}", self.total),
            })?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Bound on |Pi - Pi_N|:
/// (1/(N+1)!) sum_n C(N+1,n) S0^{N+1-n} M_{(N+1-n,n)} * factor_n.
pub fn remainder_bound(
    order: usize,
    params: &ModelParams,
    option: &OptionSpec,
    method: BoundMethod,
) -> Result<BoundReport, BoundError> {
    if order < 2 {
        return Err(BoundError::Order(order));
    }
    params.validate().map_err(BoundError::Invalid)?;
    let t = option.expiry;
    let np1 = order + 1;
    let table = MomentTable::new(params, t)?;

    let factors: Vec<f64> = match method {
        BoundMethod::CauchySchwarz => {
            if params.rho > 0.0 {
                return Err(BoundError::Method {
                    method,
                    requirement: "rho <= 0",
                    rho: params.rho,
                });
            }
            let g = gn_sequence(2 * np1, params, t)?;
            (0..=np1)
                .map(|n| {
                    let i_even = table.central_mixed_moment(2 * n, 2 * n)?.max(0.0);
                    Ok(g[2 * np1 - 2 * n].max(0.0).sqrt() * i_even.sqrt())
                })
                .collect::<Result<_, BoundError>>()?
        }
        BoundMethod::RhoZero => {
            if params.rho != 0.0 {
                return Err(BoundError::Method {
                    method,
                    requirement: "rho = 0",
                    rho: params.rho,
                });
            }
            let mut f = vec![0.0; np1 + 1];
            f[np1] = table.central_mixed_moment(np1, np1)?.abs();
            f
        }
        BoundMethod::RawTheorem => (0..=np1)
            .map(|n| Ok(table.central_mixed_moment(np1, n)?.abs()))
            .collect::<Result<_, BoundError>>()?,
    };

    let keys: Vec<(usize, DerivKey)> = (0..=np1)
        .filter(|&n| factors[n] > 0.0)
        .map(|n| (n, DerivKey::new((np1 - n) as u32, n as u32)))
        .collect();
    let sups: Vec<SupEstimate> = keys
        .par_iter()
        .map(|&(_, key)| sup_derivative_search(key, params, option))
        .collect::<Result<_, _>>()?;

    let scale = 1.0 / factorial(np1);
    let mut terms = Vec::with_capacity(keys.len());
    let mut sup_bounds = BTreeMap::new();
    let mut truncation_ok = true;
    for (&(n, key), sup) in keys.iter().zip(&sups) {
        let contribution =
            scale * binom(np1, n) * params.s0.powi((np1 - n) as i32) * sup.value * factors[n];
        terms.push(BoundTerm {
            n,
            key,
            m_value: sup.value,
            moment_factor: factors[n],
            contribution,
        });
        sup_bounds.insert(key, sup.value);
        truncation_ok &= sup.truncation_ok;
    }
    let total = terms.iter().map(|t| t.contribution).sum();
    let asymptotic_order = match (method, params.cumulant.kind()) {
        (BoundMethod::RhoZero, ModelKind::InverseGaussian) => order + 2,
        _ => order + 1,
    };
    Ok(BoundReport {
        order,
        strike: option.strike,
        expiry: t,
        sup_bounds,
        moment_factors: factors,
        terms,
        total,
        method,
        asymptotic_order,
        unreliable: t < UNRELIABLE_EXPIRY,
        truncation_ok,
    })
}

/// f_N and g_N of the b-asymptotic moment bounds, with the resulting orders in 1/b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticCoefficients {
    pub f_n: f64,
    pub g_n: f64,
    pub order_rho0: usize,
    pub order_general: usize,
}

/// f_1..f_n (index 0 unused) with |E[(I - EI)^N]| <= aT/(lambda b^N) f_N for gamma
/// and aT/(lambda b^{N+1}) f_N for IG.
pub fn f_sequence(n: usize, params: &ModelParams, t: f64) -> Result<Vec<f64>, BoundError> {
    let (a, b, lam) = (params.cumulant.a(), params.cumulant.b(), params.lambda);
    let kind = params.cumulant.kind();
    let mut f = vec![0.0; n.max(2) + 1];
    f[2] = match kind {
        ModelKind::Gamma => 2.0,
        ModelKind::InverseGaussian => phi_coef(2)?,
    };
    for m in 2..n {
        // f_{m+1} from f_1..f_m
        let mut acc = a * f[m] * t;
        for i in 1..m {
            let c = match kind {
                ModelKind::Gamma => {
                    i as f64 * a / lam.powi(i as i32 - 1) * factorial(m) / factorial(m + 1 - i)
                }
                ModelKind::InverseGaussian => {
                    binom(m, i - 1) * phi_coef(i)? * a / (lam * b).powi(i as i32 - 1)
                }
            };
            acc += c * f[m + 1 - i] * t;
        }
        acc += match kind {
            ModelKind::Gamma => factorial(m + 1) / lam.powi(m as i32 - 1),
            ModelKind::InverseGaussian => phi_coef(m + 1)? / (lam * b).powi(m as i32 - 1),
        };
        f[m + 1] = acc;
    }
    f.truncate(n + 1);
    Ok(f)
}

/// g_1..g_n (index 0 unused) with G_N <= a lambda T |rho| / b^N g_N.
pub fn g_sequence(n: usize, params: &ModelParams, t: f64) -> Result<Vec<f64>, BoundError> {
    if params.rho > 0.0 {
        return Err(BoundError::PositiveRho(params.rho));
    }
    let (a, b, lam) = (params.cumulant.a(), params.cumulant.b(), params.lambda);
    let kind = params.cumulant.kind();
    let rho = params.rho.abs();
    let e = (-lam * t * params.kappa(params.rho)?).exp();
    let alt = a * lam * t;
    let mut g = vec![0.0; n.max(1) + 1];
    g[1] = 0.5 * e + 1.5;
    for m in 1..n {
        let mut acc = (0.5 * e + 0.5) * alt * rho * g[m];
        for i in 1..=m {
            let c = match kind {
                ModelKind::Gamma => factorial(m) / factorial(m + 1 - i) * i as f64,
                ModelKind::InverseGaussian => binom(m, i - 1) * phi_coef(i)? / b.powi(i as i32 - 1),
            };
            acc += c * g[m + 1 - i] * alt * rho.powi(i as i32);
        }
        acc += match kind {
            ModelKind::Gamma => factorial(m + 1) * rho.powi(m as i32),
            ModelKind::InverseGaussian => phi_coef(m + 1)? * (rho / b).powi(m as i32),
        };
        g[m + 1] = acc;
    }
    g.truncate(n + 1);
    Ok(g)
}

pub fn asymptotic_coefficients(
    order: usize,
    params: &ModelParams,
    t: f64,
) -> Result<AsymptoticCoefficients, BoundError> {
    params.validate().map_err(BoundError::Invalid)?;
    if order == 0 {
        return Err(BoundError::Order(order));
    }
    let f = f_sequence(order, params, t)?;
    let g = g_sequence(order, params, t)?;
    let order_rho0 = match params.cumulant.kind() {
        ModelKind::Gamma => order + 1,
        ModelKind::InverseGaussian => order + 2,
    };
    Ok(AsymptoticCoefficients {
        f_n: f[order],
        g_n: g[order],
        order_rho0,
        order_general: order + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CumulantModel;
    use crate::moments::central_mixed_moment;

    fn gamma(rho: f64) -> ModelParams {
        ModelParams {
            lambda: 0.5,
            rho,
            r: 0.05,
            sigma0_sq: 0.25,
            s0: 1.0,
            cumulant: CumulantModel::Gamma { a: 1.0, b: 10.0 },
        }
    }

    fn ig_atm() -> ModelParams {
        ModelParams {
            lambda: 1.0,
            rho: -0.3,
            r: 0.05,
            sigma0_sq: 0.5,
            s0: 1.0,
            cumulant: CumulantModel::InverseGaussian { a: 1.0, b: 10.0 },
        }
    }

    #[test]
    fn g1_example() {
        let p = gamma(-0.3);
        let g = gn_sequence(1, &p, 1.0).unwrap();
        assert_eq!(g[0], 1.0);
        let lk: f64 = 0.5 * -0.3 / 10.3;
        let hand = -lk * 0.5 * ((-lk).exp() + 1.0) + 0.1 * 0.5 * 0.3;
        assert!((g[1] - hand).abs() < 1e-15);
        assert!((g[1] - 0.029_669_924_748_660).abs() < 1e-15);
        assert!(gn_bound(1, &gamma(0.1), 1.0).is_err());
    }

    #[test]
    fn g_dominates_p_moments() {
        for p in [
            gamma(-0.3),
            ig_atm(),
            ModelParams {
                rho: -0.9,
                ..ig_atm()
            },
        ] {
            let g = gn_sequence(6, &p, 1.0).unwrap();
            for n in 1..=6 {
                let m = central_mixed_moment(n, 0, &p, 1.0).unwrap();
                assert!(g[n] >= m.abs(), "n={n}: G={} m={m}", g[n]);
            }
        }
    }

    #[test]
    fn coefficient_examples() {
        let p = gamma(-0.3);
        let f = f_sequence(4, &p, 1.0).unwrap();
        assert_eq!((f[1], f[2]), (0.0, 2.0));
        let g = g_sequence(3, &p, 1.0).unwrap();
        let e = (-0.5 * p.kappa(-0.3).unwrap()).exp();
        assert!((g[1] - (0.5 * e + 1.5)).abs() < 1e-15);
        let ig = asymptotic_coefficients(2, &ig_atm(), 1.0).unwrap();
        assert_eq!(ig.f_n, 2.0);
        assert_eq!((ig.order_rho0, ig.order_general), (4, 3));
        let ga = asymptotic_coefficients(3, &p, 1.0).unwrap();
        assert_eq!((ga.order_rho0, ga.order_general), (4, 4));
    }

    #[test]
    fn moment_sandwich() {
        for (p, extra) in [
            (gamma(0.0), 0),
            (
                ModelParams {
                    rho: 0.0,
                    ..ig_atm()
                },
                1,
            ),
        ] {
            let (a, b, lam, t) = (p.cumulant.a(), p.cumulant.b(), p.lambda, 1.0);
            let f = f_sequence(8, &p, t).unwrap();
            for n in 1..=8 {
                let m = central_mixed_moment(n, n, &p, t).unwrap().abs();
                let bound = a * t / (lam * b.powi((n + extra) as i32)) * f[n];
                assert!(m <= bound * (1.0 + 1e-12) + 1e-300, "n={n}: {m} > {bound}");
            }
        }
    }

    #[test]
    fn g_sequence_dominates_gn() {
        for p in [gamma(-0.3), ig_atm()] {
            let gn = gn_sequence(6, &p, 1.0).unwrap();
            let g = g_sequence(6, &p, 1.0).unwrap();
            let (a, b) = (p.cumulant.a(), p.cumulant.b());
            for n in 1..=6 {
                let rhs = a * p.lambda * p.rho.abs() / b.powi(n as i32) * g[n];
                assert!(gn[n] <= rhs * (1.0 + 1e-12), "n={n}");
            }
        }
    }

    #[test]
    fn region_follows_rho() {
        let o = OptionSpec::new(1.0, 1.0).unwrap();
        let r0 = search_region(
            &ModelParams {
                rho: 0.0,
                ..ig_atm()
            },
            &o,
        )
        .unwrap();
        assert_eq!(r0.ln_x, (0.0, 0.0));
        let r = search_region(&ig_atm(), &o).unwrap();
        let shift = -ig_atm().kappa(-0.3).unwrap();
        assert!((r.ln_x.1 - shift).abs() < 1e-15);
        assert!(r.ln_y.0 < r.ln_y.1);
    }

    #[test]
    fn sup_dominates_samples() {
        use rand::{Rng, SeedableRng};
        let p = ig_atm();
        let o = OptionSpec::new(1.0, 1.0).unwrap();
        let reg = search_region(&p, &o).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for key in [
            DerivKey::new(3, 0),
            DerivKey::new(1, 2),
            DerivKey::new(0, 4),
        ] {
            let m = sup_derivative_bound(key, &p, &o).unwrap();
            assert!(m.is_finite() && m > 0.0);
            for _ in 0..2000 {
                let x = rng.gen_range(reg.ln_x.0..reg.ln_x.1).exp();
                let y = rng.gen_range(reg.ln_y.0..reg.ln_y.1).exp();
                let v = bsm::eval_partial(key, x, y, 1.0, 0.05).unwrap().abs();
                assert!(v <= m, "{key} at ({x}, {y}): {v} > {m}");
            }
        }
        assert!(sup_derivative_bound(DerivKey::new(1, 1), &p, &o).is_err());
    }

    #[test]
    fn rho_zero_collapses_to_single_term() {
        let p = ModelParams {
            rho: 0.0,
            ..ig_atm()
        };
        let o = OptionSpec::new(1.0, 1.0).unwrap();
        let r = remainder_bound(3, &p, &o, BoundMethod::auto(0.0)).unwrap();
        assert_eq!(r.method, BoundMethod::RhoZero);
        assert_eq!(r.terms.len(), 1);
        assert_eq!(r.terms[0].key, DerivKey::new(0, 4));
        let m4 = central_mixed_moment(4, 4, &p, 1.0).unwrap();
        let m = sup_derivative_bound(DerivKey::new(0, 4), &p, &o).unwrap();
        assert!((r.total - m4.abs() * m / 24.0).abs() <= 1e-15 * r.total);
        assert_eq!(r.asymptotic_order, 5);
        assert!(remainder_bound(3, &ig_atm(), &o, BoundMethod::RhoZero).is_err());
    }

    #[test]
    fn report_serialises() {
        let o = OptionSpec::new(1.0, 0.01).unwrap();
        let r = remainder_bound(2, &ig_atm(), &o, BoundMethod::CauchySchwarz).unwrap();
        assert!(r.unreliable);
        assert_eq!(r.terms.len(), 4);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("order,method,n,key,m_value,moment_factor,contribution,total"));
        let json = r.to_json().unwrap();
        assert!(json.contains("\"(3,0)\""));
        assert!(json.contains("cauchy_schwarz"));
    }
}
