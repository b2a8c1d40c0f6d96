//! Moments of (P_T, I_T): the H recursion, mixed power moments, the binomial
//! assembly of central mixed moments and the closed-form second-order set.

use crate::model::{alpha_unchecked, ModelError, ModelParams};
use crate::numeric::{binom, integrate, CompensatedSum, DdSum};
use parking_lot::RwLock;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("moment of P_T of power {ell} does not exist ({ell}*rho = {} >= kappa_hat = {kappa_hat})", *.ell as f64 * .rho)]
    Nonexistent {
        ell: usize,
        rho: f64,
        kappa_hat: f64,
    },
    #[error("need k <= n, got n = {n}, k = {k}")]
    BadIndex { n: usize, k: usize },
    #[error("expiry must be positive, got {0}")]
    Expiry(f64),
    #[error("h recursion needs max(c, d) > 0")]
    DegenerateKernel,
}

/// lambda^i * int_0^T alpha_{s,T}^i ds = int_0^T (1 - e^{-lambda u})^i du.
///
/// Uses the binomial identity when it is well conditioned and falls back to
/// quadrature otherwise (small lambda*T or large i).
pub fn alpha_power_integral(lambda: f64, t: f64, i: usize) -> f64 {
    if i == 0 {
        return t;
    }
    let mut s = CompensatedSum::new();
    s.add(t);
    let mut mag = t;
    for j in 1..=i {
        let term = binom(i, j) / j as f64 * alpha_unchecked(lambda, j as f64 * t);
        let term = if j % 2 == 1 { -term } else { term };
        mag += term.abs();
        s.add(term);
    }
    let v = s.value();
    if v > 0.0 && mag <= 64.0 * v {
        return v;
    }
    let f = |u: f64| (-(-lambda * u).exp_m1()).powi(i as i32);
    integrate(f, 0.0, t, 0.0, 1e-15, 400).value
}

fn check_ell(params: &ModelParams, ell: usize) -> Result<(), MomentError> {
    let kh = params.cumulant.kappa_hat();
    if ell as f64 * params.rho >= kh {
        return Err(MomentError::Nonexistent {
            ell,
            rho: params.rho,
            kappa_hat: kh,
        });
    }
    Ok(())
}

/// E[I_T] = alpha_{0,T}(sigma0^2 - kappa'(0)) + kappa'(0) T.
pub fn expected_integrated_variance(params: &ModelParams, t: f64) -> Result<f64, MomentError> {
    if !(t > 0.0) {
        return Err(MomentError::Expiry(t));
    }
    let k1 = params.kappa_deriv(1, 0.0)?;
    let a = alpha_unchecked(params.lambda, t);
    Ok(a * (params.sigma0_sq - k1) + k1 * t)
}

// lambda * int_0^T (c alpha + d)^i ds for i = 0..=k, from the L_j integrals.
fn kernel_integrals(lambda: f64, t: f64, c: f64, d: f64, l: &[f64], k: usize) -> Vec<f64> {
    (0..=k)
        .map(|i| {
            if d == 0.0 {
                c.powi(i as i32) * l[i] / lambda.powi(i as i32 - 1)
            } else if c == 0.0 {
                lambda * t * d.powi(i as i32)
            } else {
                let s: CompensatedSum = (0..=i)
                    .map(|j| {
                        binom(i, j) * c.powi(j as i32) * d.powi((i - j) as i32) * l[j]
                            / lambda.powi(j as i32)
                    })
                    .collect();
                lambda * s.value()
            }
        })
        .collect()
}

// kappa^(i)(ell rho) for i = 1..=k.
fn kappa_derivs(params: &ModelParams, ell: usize, k: usize) -> Result<Vec<f64>, MomentError> {
    let theta = ell as f64 * params.rho;
    Ok((1..=k)
        .map(|i| params.kappa_deriv(i, theta))
        .collect::<Result<_, _>>()?)
}

fn h_recursion(k: usize, f_t: f64, kd: &[f64], lam_j: &[f64]) -> Vec<f64> {
    let mut h = Vec::with_capacity(k + 1);
    h.push(1.0);
    for hh in 1..=k {
        let mut s = CompensatedSum::new();
        s.add(f_t * h[hh - 1]);
        for i in 1..=hh {
            s.add(binom(hh - 1, i - 1) * h[hh - i] * kd[i - 1] * lam_j[i]);
        }
        h.push(s.value());
    }
    h
}

/// General H recursion: H_0 = 1,
/// H_h = f H_{h-1} + lambda sum_i C(h-1,i-1) H_{h-i} kappa^(i)(ell rho) int (c alpha + d)^i ds.
pub fn h_general(
    ell: usize,
    k: usize,
    f_t: f64,
    c: f64,
    d: f64,
    params: &ModelParams,
    t: f64,
) -> Result<Vec<f64>, MomentError> {
    if !(c.max(d) > 0.0) {
        return Err(MomentError::DegenerateKernel);
    }
    if !(t > 0.0) {
        return Err(MomentError::Expiry(t));
    }
    check_ell(params, ell)?;
    let l: Vec<f64> = if c == 0.0 {
        vec![t]
    } else {
        (0..=k)
            .map(|i| alpha_power_integral(params.lambda, t, i))
            .collect()
    };
    let lam_j = kernel_integrals(params.lambda, t, c, d, &l, k);
    let kd = kappa_derivs(params, ell, k)?;
    Ok(h_recursion(k, f_t, &kd, &lam_j))
}

/// Cached moments for one (model, T) pair.
///
/// Rows H_{ell, 0..k} are grown lazily and kept for later requests.
#[derive(Debug)]
pub struct MomentTable {
    params: ModelParams,
    expiry: f64,
    e_it: f64,
    l: RwLock<Vec<f64>>,
    rows: RwLock<BTreeMap<usize, Vec<f64>>>,
}

impl MomentTable {
    pub fn new(params: &ModelParams, expiry: f64) -> Result<Self, MomentError> {
        let e_it = expected_integrated_variance(params, expiry)?;
        let l1 = alpha_power_integral(params.lambda, expiry, 1);
        Ok(Self {
            params: *params,
            expiry,
            e_it,
            l: RwLock::new(vec![expiry, l1]),
            rows: RwLock::new(BTreeMap::new()),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn expiry(&self) -> f64 {
        self.expiry
    }

    /// E[I_T].
    pub fn e_it(&self) -> f64 {
        self.e_it
    }

    fn l_upto(&self, k: usize) -> Vec<f64> {
        {
            let l = self.l.read();
            if l.len() > k {
                return l[..=k].to_vec();
            }
        }
        let mut l = self.l.write();
        while l.len() <= k {
            let i = l.len();
            l.push(alpha_power_integral(self.params.lambda, self.expiry, i));
        }
        l[..=k].to_vec()
    }

    /// H_{ell,k} from the centered recursion (c = 1, d = 0).
    pub fn h(&self, ell: usize, k: usize) -> Result<f64, MomentError> {
        check_ell(&self.params, ell)?;
        if let Some(row) = self.rows.read().get(&ell) {
            if row.len() > k {
                return Ok(row[k]);
            }
        }
        let l = self.l_upto(k);
        let lam_j = kernel_integrals(self.params.lambda, self.expiry, 1.0, 0.0, &l, k);
        // Here f(T) = -kappa'(0) L_1 and the i = 1 kernel is exactly L_1, so the two
        // merge into (kappa'(ell rho) - kappa'(0)) L_1, which is formed without
        // cancellation.
        let mut kd = kappa_derivs(&self.params, ell, k)?;
        if k >= 1 {
            kd[0] = self
                .params
                .cumulant
                .kappa_slope_shift(ell as f64 * self.params.rho)?;
        }
        let row = h_recursion(k, 0.0, &kd, &lam_j);
        let v = row[k];
        let mut rows = self.rows.write();
        let keep = rows.get(&ell).map_or(true, |r| r.len() < row.len());
        if keep {
            rows.insert(ell, row);
        }
        Ok(v)
    }

    /// Snapshot of every stored H_{ell,k}.
    pub fn h_values(&self) -> BTreeMap<(usize, usize), f64> {
        let rows = self.rows.read();
        rows.iter()
            .flat_map(|(&ell, row)| row.iter().enumerate().map(move |(k, &v)| ((ell, k), v)))
            .collect()
    }

    // lambda T (kappa(ell rho) - ell kappa(rho))
    fn log_prefactor(&self, ell: usize) -> Result<f64, MomentError> {
        let p = &self.params;
        let t = self.expiry;
        if ell == 1 || p.rho == 0.0 {
            return Ok(0.0);
        }
        Ok(p.lambda * t * p.cumulant.kappa_excess(ell, p.rho)?)
    }

    /// E[P_T^ell (I_T - E I_T)^k].
    pub fn mixed_power_moment(&self, ell: usize, k: usize) -> Result<f64, MomentError> {
        let h = self.h(ell, k)?;
        Ok(self.log_prefactor(ell)?.exp() * h)
    }

    /// E[(P_T - 1)^{n-k} (I_T - E I_T)^k] by the alternating binomial sum.
    pub fn central_mixed_moment(&self, n: usize, k: usize) -> Result<f64, MomentError> {
        if k > n {
            return Err(MomentError::BadIndex { n, k });
        }
        let j = n - k;
        check_ell(&self.params, j)?;
        if j == 0 {
            return self.h(0, k);
        }
        if self.params.rho == 0.0 {
            // P_T is identically one.
            return Ok(0.0);
        }
        // e^{c} H = H + expm1(c) H keeps the O(1) parts of the sum separate.
        let mut terms = Vec::with_capacity(2 * (j + 1));
        for ell in 0..=j {
            let sign = if (j - ell) % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * binom(j, ell);
            let h = self.h(ell, k)?;
            let em1 = self.log_prefactor(ell)?.exp_m1();
            terms.push((c, h));
            terms.push((c * h, em1));
        }
        if n >= 8 {
            let mut s = DdSum::new();
            for (a, b) in terms {
                s.add_prod(a, b);
            }
            Ok(s.value())
        } else {
            let s: CompensatedSum = terms.into_iter().map(|(a, b)| a * b).collect();
            Ok(s.value())
        }
    }
}

/// E[P^ell (I - EI)^k] through a fresh table.
pub fn mixed_power_moment(
    ell: usize,
    k: usize,
    params: &ModelParams,
    t: f64,
) -> Result<f64, MomentError> {
    MomentTable::new(params, t)?.mixed_power_moment(ell, k)
}

/// E[(P - 1)^{n-k} (I - EI)^k] through a fresh table.
pub fn central_mixed_moment(
    n: usize,
    k: usize,
    params: &ModelParams,
    t: f64,
) -> Result<f64, MomentError> {
    MomentTable::new(params, t)?.central_mixed_moment(n, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderMoments {
    pub var_i: f64,
    pub m2_p: f64,
    pub cov_pi: f64,
}

/// Closed-form second moments (variance of I_T, E[(P-1)^2], covariance).
pub fn second_order_moments(
    params: &ModelParams,
    t: f64,
) -> Result<SecondOrderMoments, MomentError> {
    if !(t > 0.0) {
        return Err(MomentError::Expiry(t));
    }
    check_ell(params, 2)?;
    let lam = params.lambda;
    let x = lam * t;
    let var_i = params.kappa_deriv(2, 0.0)? / (lam * lam) * variance_shape(x);
    let rho = params.rho;
    let first_slope = params.cumulant.kappa_slope_shift(rho)?;
    let second_diff = params.cumulant.kappa_excess(2, rho)?;
    let m2_p = (x * second_diff).exp_m1();
    let cov_pi = first_slope * (t - alpha_unchecked(lam, t));
    Ok(SecondOrderMoments {
        var_i,
        m2_p,
        cov_pi,
    })
}

/// x - 3/2 + 2e^{-x} - e^{-2x}/2, which behaves like x^3/3 near zero.
fn variance_shape(x: f64) -> f64 {
    if x >= 1.0 {
        return x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1();
    }
    // sum_{k>=3} (-1)^{k+1} (2^{k-1} - 2) x^k / k!
    let mut s = CompensatedSum::new();
    let (mut xk, mut fact, mut pow2) = (x * x * x, 6.0, 4.0);
    for k in 3..40 {
        let term = (pow2 - 2.0) * xk / fact;
        s.add(if k % 2 == 1 { term } else { -term });
        if term.abs() < 1e-18 * s.value().abs() {
            break;
        }
        xk *= x;
        fact *= (k + 1) as f64;
        pow2 *= 2.0;
    }
    s.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct TableKey([u64; 8]);

impl TableKey {
    fn new(p: &ModelParams, t: f64) -> Self {
        let kind = p.cumulant.kind() as u64;
        Self([
            kind,
            p.cumulant.a().to_bits(),
            p.cumulant.b().to_bits(),
            p.lambda.to_bits(),
            p.rho.to_bits(),
            p.sigma0_sq.to_bits(),
            t.to_bits(),
            0,
        ])
    }
}

/// Content-addressed store of moment tables keyed by the moment-relevant inputs
/// (r and S0 do not enter).
#[derive(Debug, Default)]
pub struct MomentCache {
    tables: RwLock<HashMap<TableKey, Arc<MomentTable>>>,
}

impl MomentCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, params: &ModelParams, t: f64) -> Result<Arc<MomentTable>, MomentError> {
        let key = TableKey::new(params, t);
        if let Some(tab) = self.tables.read().get(&key) {
            return Ok(tab.clone());
        }
        let tab = Arc::new(MomentTable::new(params, t)?);
        Ok(self.tables.write().entry(key).or_insert(tab).clone())
    }

    pub fn len(&self) -> usize {
        self.tables.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
