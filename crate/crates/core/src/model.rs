//! Model parameters, cumulant functions of the background driving process and the
//! alpha kernel.

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest derivative order with a precomputed table.
pub const MAX_DERIV_ORDER: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("theta = {theta} outside the cumulant domain (needs theta < {kappa_hat})")]
    Domain { theta: f64, kappa_hat: f64 },
    #[error("derivative order {0} is beyond the supported maximum {MAX_DERIV_ORDER}")]
    OrderTooHigh(usize),
    #[error("derivative order must be at least 1")]
    ZeroOrder,
    #[error("alpha kernel needs s <= t, got s = {s}, t = {t}")]
    Argument { s: f64, t: f64 },
    #[error("{name} must be {requirement}, got {value}")]
    Invalid {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("rho = {rho} must be below kappa_hat = {kappa_hat}")]
    RhoTooLarge { rho: f64, kappa_hat: f64 },
}

/// Cumulant model of the BDLP, parameterised by its stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CumulantModel {
    #[serde(rename = "ig")]
    InverseGaussian {
        a: f64,
        b: f64,
    },
    Gamma {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "ig")]
    InverseGaussian,
    Gamma,
}

// k!! for k = 0..=2*MAX_DERIV_ORDER+1, with (-1)!! handled by callers.
static DOUBLE_FACT: Lazy<Vec<f64>> = Lazy::new(|| {
    let n = 2 * MAX_DERIV_ORDER + 2;
    let mut t = vec![1.0; n];
    for k in 2..n {
        t[k] = t[k - 2] * k as f64;
    }
    t
});

// phi_1 = 1, phi_n = phi_{n-1}(2n-3) + (2n-3)!!
static PHI: Lazy<Vec<f64>> = Lazy::new(|| {
    let mut t = vec![0.0; MAX_DERIV_ORDER + 1];
    t[1] = 1.0;
    for n in 2..=MAX_DERIV_ORDER {
        t[n] = t[n - 1] * (2 * n - 3) as f64 + DOUBLE_FACT[2 * n - 3];
    }
    t
});

static FACT: Lazy<Vec<f64>> = Lazy::new(|| {
    let mut t = vec![1.0; MAX_DERIV_ORDER + 2];
    for k in 1..t.len() {
        t[k] = t[k - 1] * k as f64;
    }
    t
});

/// The IG coefficient sequence phi_n.
pub fn phi_coef(n: usize) -> Result<f64, ModelError> {
    match n {
        0 => Err(ModelError::ZeroOrder),
        n if n > MAX_DERIV_ORDER => Err(ModelError::OrderTooHigh(n)),
        n => Ok(PHI[n]),
    }
}

/// Odd double factorial (2n-1)!!.
pub fn odd_double_factorial(n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        DOUBLE_FACT[2 * n - 1]
    }
}

// c * q^(-p), in log space once the exponent gets large.
fn scaled_power(c: f64, q: f64, p: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    if p > 20.0 {
        c.signum() * (c.abs().ln() - p * q.ln()).exp()
    } else {
        c * q.powf(-p)
    }
}

impl CumulantModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::InverseGaussian { .. } => ModelKind::InverseGaussian,
            Self::Gamma { .. } => ModelKind::Gamma,
        }
    }

    pub fn a(&self) -> f64 {
        match *self {
            Self::InverseGaussian { a, .. } | Self::Gamma { a, .. } => a,
        }
    }

    pub fn b(&self) -> f64 {
        match *self {
            Self::InverseGaussian { b, .. } | Self::Gamma { b, .. } => b,
        }
    }

    pub fn with_a(&self, a: f64) -> Self {
        match *self {
            Self::InverseGaussian { b, .. } => Self::InverseGaussian { a, b },
            Self::Gamma { b, .. } => Self::Gamma { a, b },
        }
    }

    pub fn with_b(&self, b: f64) -> Self {
        match *self {
            Self::InverseGaussian { a, .. } => Self::InverseGaussian { a, b },
            Self::Gamma { a, .. } => Self::Gamma { a, b },
        }
    }

    /// Right end of the domain of kappa.
    pub fn kappa_hat(&self) -> f64 {
        match *self {
            Self::InverseGaussian { b, .. } => 0.5 * b * b,
            Self::Gamma { b, .. } => b,
        }
    }

    fn check(&self, theta: f64) -> Result<(), ModelError> {
        let kh = self.kappa_hat();
        if theta < kh {
            Ok(())
        } else {
            Err(ModelError::Domain {
                theta,
                kappa_hat: kh,
            })
        }
    }

    /// Cumulant generating function of Z_1.
    pub fn kappa(&self, theta: f64) -> Result<f64, ModelError> {
        self.check(theta)?;
        Ok(match *self {
            Self::InverseGaussian { a, b } => a * theta / (b * b - 2.0 * theta).sqrt(),
            Self::Gamma { a, b } => a * theta / (b - theta),
        })
    }

    /// kappa(ell theta) - ell kappa(theta), rearranged so that small theta does not
    /// cancel.
    pub fn kappa_excess(&self, ell: usize, theta: f64) -> Result<f64, ModelError> {
        let l = ell as f64;
        self.check(l * theta)?;
        self.check(theta)?;
        Ok(match *self {
            Self::Gamma { a, b } => {
                a * l * (l - 1.0) * theta * theta / ((b - l * theta) * (b - theta))
            }
            Self::InverseGaussian { a, b } => {
                let s1 = (b * b - 2.0 * theta).sqrt();
                let sl = (b * b - 2.0 * l * theta).sqrt();
                2.0 * a * l * (l - 1.0) * theta * theta / (s1 * sl * (s1 + sl))
            }
        })
    }

    /// kappa'(theta) - kappa'(0) without cancellation for small theta.
    pub fn kappa_slope_shift(&self, theta: f64) -> Result<f64, ModelError> {
        self.check(theta)?;
        Ok(match *self {
            Self::Gamma { a, b } => a * theta * (2.0 * b - theta) / (b * (b - theta) * (b - theta)),
            Self::InverseGaussian { a, b } => {
                // kappa'(theta) b / a = (1 + eps/2) (1 + eps)^{-3/2} with eps = -2 theta / b^2
                let eps = -2.0 * theta / (b * b);
                a / b * ((0.5 * eps).ln_1p() - 1.5 * eps.ln_1p()).exp_m1()
            }
        })
    }

    /// n-th derivative of kappa.
    pub fn kappa_deriv(&self, n: usize, theta: f64) -> Result<f64, ModelError> {
        if n == 0 {
            return Err(ModelError::ZeroOrder);
        }
        if n > MAX_DERIV_ORDER {
            return Err(ModelError::OrderTooHigh(n));
        }
        self.check(theta)?;
        Ok(match *self {
            Self::InverseGaussian { a, b } => {
                let q = b * b - 2.0 * theta;
                let p1 = (2 * n - 1) as f64 / 2.0;
                let p2 = (2 * n + 1) as f64 / 2.0;
                scaled_power(PHI[n] * a, q, p1)
                    + scaled_power(DOUBLE_FACT[2 * n - 1] * a * theta, q, p2)
            }
            Self::Gamma { a, b } => {
                let q = b - theta;
                let f = FACT[n];
                scaled_power(f * a, q, n as f64) + scaled_power(f * a * theta, q, (n + 1) as f64)
            }
        })
    }

    pub fn validate(&self) -> Vec<ModelError> {
        let mut errs = Vec::new();
        let (a, b) = (self.a(), self.b());
        if !(a > 0.0 && a.is_finite()) {
            errs.push(ModelError::Invalid {
                name: "a",
                requirement: "positive",
                value: a,
            });
        }
        if !(b > 0.0 && b.is_finite()) {
            errs.push(ModelError::Invalid {
                name: "b",
                requirement: "positive",
                value: b,
            });
        }
        errs
    }
}

/// alpha_{s,t} = (1 - e^{-lambda (t-s)}) / lambda.
pub fn alpha(lambda: f64, s: f64, t: f64) -> Result<f64, ModelError> {
    if s > t {
        return Err(ModelError::Argument { s, t });
    }
    Ok(alpha_unchecked(lambda, t - s))
}

#[inline]
pub(crate) fn alpha_unchecked(lambda: f64, tau: f64) -> f64 {
    -(-lambda * tau).exp_m1() / lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub rho: f64,
    pub r: f64,
    pub sigma0_sq: f64,
    pub s0: f64,
    pub cumulant: CumulantModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub strike: f64,
    pub expiry: f64,
}

impl OptionSpec {
    pub fn new(strike: f64, expiry: f64) -> Result<Self, ModelError> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(ModelError::Invalid {
                name: "strike",
                requirement: "positive",
                value: strike,
            });
        }
        if !(expiry > 0.0 && expiry.is_finite()) {
            return Err(ModelError::Invalid {
                name: "expiry",
                requirement: "positive",
                value: expiry,
            });
        }
        Ok(Self { strike, expiry })
    }
}

/// Outcome of a successful validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissible {
    /// Largest N with N*rho < kappa_hat; `None` when unlimited (rho <= 0).
    pub max_order: Option<usize>,
}

impl Admissible {
    /// Caps a requested order; the flag is set when capping happened.
    pub fn cap(&self, requested: usize) -> (usize, bool) {
        match self.max_order {
            Some(m) if requested > m => (m, true),
            _ => (requested, false),
        }
    }
}

impl ModelParams {
    pub fn kappa(&self, theta: f64) -> Result<f64, ModelError> {
        self.cumulant.kappa(theta)
    }

    pub fn kappa_deriv(&self, n: usize, theta: f64) -> Result<f64, ModelError> {
        self.cumulant.kappa_deriv(n, theta)
    }

    /// Checks every admissibility condition and reports all violations.
    pub fn validate(&self) -> Result<Admissible, Vec<ModelError>> {
        let mut errs = self.cumulant.validate();
        let positive = [
            ("lambda", self.lambda),
            ("sigma0_sq", self.sigma0_sq),
            ("s0", self.s0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(ModelError::Invalid {
                    name,
                    requirement: "positive",
                    value: v,
                });
            }
        }
        for (name, v) in [("rho", self.rho), ("r", self.r)] {
            if !v.is_finite() {
                errs.push(ModelError::Invalid {
                    name,
                    requirement: "finite",
                    value: v,
                });
            }
        }
        let kh = self.cumulant.kappa_hat();
        if self.rho >= kh {
            errs.push(ModelError::RhoTooLarge {
                rho: self.rho,
                kappa_hat: kh,
            });
        }
        if !errs.is_empty() {
            return Err(errs);
        }
        let max_order = if self.rho <= 0.0 {
            None
        } else {
            // largest N with N*rho < kappa_hat
            let mut n = (kh / self.rho).floor() as usize;
            while n as f64 * self.rho >= kh {
                n -= 1;
            }
            Some(n)
        };
        Ok(Admissible { max_order })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IG: CumulantModel = CumulantModel::InverseGaussian { a: 20.0, b: 5.0 };
    const GA: CumulantModel = CumulantModel::Gamma { a: 1.0, b: 10.0 };

    fn params(cumulant: CumulantModel, rho: f64) -> ModelParams {
        ModelParams {
            lambda: 0.5,
            rho,
            r: 0.05,
            sigma0_sq: 0.5,
            s0: 1.0,
            cumulant,
        }
    }

    #[test]
    fn kappa_values() {
        assert_eq!(IG.kappa(0.0).unwrap(), 0.0);
        assert_eq!(GA.kappa(0.0).unwrap(), 0.0);
        assert!((IG.kappa(-0.5).unwrap() + 10.0 / 26f64.sqrt()).abs() < 1e-15);
        assert!((IG.kappa(-0.5).unwrap() + 1.961_161_4).abs() < 1e-7);
        assert!((GA.kappa(-0.3).unwrap() + 0.029_126_21).abs() < 1e-8);
        assert!(matches!(IG.kappa(12.5), Err(ModelError::Domain { .. })));
        assert!(matches!(GA.kappa(11.0), Err(ModelError::Domain { .. })));
    }

    #[test]
    fn excess_matches_direct_difference() {
        for m in [
            CumulantModel::InverseGaussian { a: 20.0, b: 5.0 },
            CumulantModel::Gamma { a: 1.0, b: 10.0 },
        ] {
            for ell in 0..5 {
                let theta = -0.4;
                let direct =
                    m.kappa(ell as f64 * theta).unwrap() - ell as f64 * m.kappa(theta).unwrap();
                let v = m.kappa_excess(ell, theta).unwrap();
                assert!(
                    (v - direct).abs() <= 1e-13 * direct.abs().max(1e-300),
                    "{ell}: {v} vs {direct}"
                );
            }
            for theta in [-0.4, 0.3] {
                let direct = m.kappa_deriv(1, theta).unwrap() - m.kappa_deriv(1, 0.0).unwrap();
                let v = m.kappa_slope_shift(theta).unwrap();
                assert!(
                    (v - direct).abs() <= 1e-13 * direct.abs(),
                    "{v} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn phi_table() {
        assert_eq!(phi_coef(1).unwrap(), 1.0);
        assert_eq!(phi_coef(2).unwrap(), 2.0);
        assert_eq!(phi_coef(3).unwrap(), 9.0);
        assert_eq!(phi_coef(4).unwrap(), 60.0);
        assert!(phi_coef(33).is_err());
        assert_eq!(odd_double_factorial(3), 15.0);
    }

    #[test]
    fn derivatives_at_zero() {
        assert!((IG.kappa_deriv(1, 0.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((IG.kappa_deriv(2, 0.0).unwrap() - 0.32).abs() < 1e-15);
        assert!((GA.kappa_deriv(1, 0.0).unwrap() - 0.1).abs() < 1e-16);
        // kappa''(0) = 2a/b^2 for the gamma BDLP
        assert!((GA.kappa_deriv(2, 0.0).unwrap() / 0.02 - 1.0).abs() < 1e-15);
        assert!(IG.kappa_deriv(0, 0.0).is_err());
        assert!(IG.kappa_deriv(33, 0.0).is_err());
    }

    #[test]
    fn log_space_branch_is_continuous() {
        // n = 10 puts the IG exponent at 10.5 / 9.5 and the gamma one at 10 / 11;
        // compare large-b values against a direct evaluation.
        let m = CumulantModel::InverseGaussian { a: 1.0, b: 160.0 };
        let n = 20;
        let q: f64 = 160.0 * 160.0;
        let direct = PHI[n] * q.powf(-(2.0 * n as f64 - 1.0) / 2.0);
        let v = m.kappa_deriv(n, 0.0).unwrap();
        assert!((v / direct - 1.0).abs() < 1e-12);
        assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn alpha_kernel() {
        assert_eq!(alpha(0.7, 1.0, 1.0).unwrap(), 0.0);
        assert!((alpha(0.5, 0.0, 1.0).unwrap() - 0.786_938_68).abs() < 1e-8);
        assert!((alpha(0.5, 0.0, 40.0).unwrap() - 2.0).abs() < 1e-8);
        assert!(alpha(0.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn validation() {
        assert_eq!(params(IG, -0.5).validate().unwrap().max_order, None);
        let errs = params(IG, 13.0).validate().unwrap_err();
        assert!(matches!(errs[0], ModelError::RhoTooLarge { .. }));
        let ok = params(GA, 3.0).validate().unwrap();
        assert_eq!(ok.max_order, Some(3));
        assert_eq!(ok.cap(4), (3, true));
        let mut bad = params(GA, 0.0);
        bad.lambda = -1.0;
        bad.sigma0_sq = 0.0;
        assert_eq!(bad.validate().unwrap_err().len(), 2);
    }
}
