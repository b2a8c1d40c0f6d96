//! Monte Carlo simulation of the BNS dynamics.

use crate::bsm::bs_put_unchecked;
use crate::model::{alpha_unchecked, CumulantModel, ModelParams, OptionSpec};
use crate::numeric::CompensatedSum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("settings: {0}")]
    Settings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Average of BS_Put(S0 P_T, I_T).
    Conditional,
    /// Discounted average of (K - S_T)^+.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McSettings {
    pub paths: usize,
    pub grid_steps_per_year: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub estimator: Estimator,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            paths: 100_000,
            grid_steps_per_year: 250,
            seed: 20_240_601,
            antithetic: false,
            estimator: Estimator::Conditional,
        }
    }
}

/// Terminal values per path. With antithetic sampling paths 2i and 2i+1 share the
/// jump path and use opposite Gaussian draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub log_s: Vec<f64>,
    pub i_t: Vec<f64>,
    pub p_t: Vec<f64>,
    pub antithetic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl PathBundle {
    pub fn len(&self) -> usize {
        self.log_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_s.is_empty()
    }

    /// Sample mean and standard error of g over paths; antithetic pairs are
    /// averaged first.
    pub fn estimate<F: Fn(usize) -> f64 + Sync>(&self, g: F) -> Estimate {
        let vals: Vec<f64> = if self.antithetic {
            (0..self.len() / 2)
                .map(|i| 0.5 * (g(2 * i) + g(2 * i + 1)))
                .collect()
        } else {
            (0..self.len()).map(&g).collect()
        };
        mean_se(&vals)
    }

    /// E[(P - 1)^{n-k} (I - e_it)^k] estimate.
    pub fn central_mixed_moment(&self, n: usize, k: usize, e_it: f64) -> Estimate {
        self.estimate(|i| {
            (self.p_t[i] - 1.0).powi((n - k) as i32) * (self.i_t[i] - e_it).powi(k as i32)
        })
    }
}

fn mean_se(vals: &[f64]) -> Estimate {
    let n = vals.len() as f64;
    let mean = vals.iter().copied().collect::<CompensatedSum>().value() / n;
    let ss = vals
        .iter()
        .map(|v| (v - mean).powi(2))
        .collect::<CompensatedSum>()
        .value();
    let var = if vals.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    Estimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Inverse Gaussian draw with the given mean and shape, by the
/// Michael-Schucany-Haas transformation written without cancellation.
pub fn sample_ig<R: Rng + ?Sized>(rng: &mut R, mean: f64, shape: f64) -> f64 {
    let nu: f64 = rng.sample(StandardNormal);
    let w = mean * nu * nu / shape;
    // smaller root: mean * (1 + w/2 - sqrt(w + w^2/4)), rationalised
    let x = mean / (1.0 + 0.5 * w + (w + 0.25 * w * w).sqrt());
    let u: f64 = rng.gen();
    if u * (mean + x) <= mean {
        x
    } else {
        mean * mean / x
    }
}

const BLOCK: usize = 2048;

struct Sim<'a> {
    p: &'a ModelParams,
    t: f64,
    steps: usize,
    dt: f64,
    // average alpha_{s,T} over each grid interval
    alpha_bar: Vec<f64>,
    drift: f64,
}

impl<'a> Sim<'a> {
    fn new(p: &'a ModelParams, t: f64, steps_per_year: usize) -> Self {
        let steps = ((steps_per_year as f64 * t).ceil() as usize).max(1);
        let dt = t / steps as f64;
        let lam = p.lambda;
        let alpha_bar = (0..steps)
            .map(|j| {
                let (t0, t1) = (j as f64 * dt, (j + 1) as f64 * dt);
                // (1/dt) int_{t0}^{t1} alpha_{s,T} ds
                let e1 = (-lam * (t - t1)).exp();
                let e0 = (-lam * (t - t0)).exp();
                (1.0 - (e1 - e0) / (lam * dt)) / lam
            })
            .collect();
        let kr = p.kappa(p.rho).expect("validated");
        Self {
            p,
            t,
            steps,
            dt,
            alpha_bar,
            drift: -lam * t * kr,
        }
    }

    // (Z_{lambda T}, int alpha dZ) for one path
    fn jumps(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let (lam, t) = (self.p.lambda, self.t);
        let mut z = 0.0;
        let mut ia = 0.0;
        let mut compound =
            |rng: &mut ChaCha8Rng, rate: f64, size: &dyn Fn(&mut ChaCha8Rng) -> f64| {
                if rate <= 0.0 {
                    return;
                }
                let n = Poisson::new(rate).expect("positive rate").sample(rng) as u64;
                for _ in 0..n {
                    let tau: f64 = rng.gen::<f64>() * t;
                    let j = size(rng);
                    z += j;
                    ia += j * alpha_unchecked(lam, t - tau);
                }
            };
        match self.p.cumulant {
            CumulantModel::Gamma { a, b } => {
                compound(rng, a * lam * t, &|r| {
                    let e: f64 = r.sample(Exp1);
                    e / b
                });
            }
            CumulantModel::InverseGaussian { a, b } => {
                compound(rng, 0.5 * a * b * lam * t, &|r| {
                    let v: f64 = r.sample(StandardNormal);
                    v * v / (b * b)
                });
                let delta = 0.5 * a * lam * self.dt;
                let (mean, shape) = (delta / b, delta * delta);
                for j in 0..self.steps {
                    let x = sample_ig(rng, mean, shape);
                    z += x;
                    ia += x * self.alpha_bar[j];
                }
            }
        }
        (z, ia)
    }
}

/// Simulates terminal (ln S_T, I_T, P_T).
pub fn simulate_paths(
    p: &ModelParams,
    t: f64,
    settings: &McSettings,
) -> Result<PathBundle, McError> {
    p.validate().map_err(|e| {
        McError::Invalid(
            e.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        )
    })?;
    if !(t > 0.0) {
        return Err(McError::Invalid(format!(
            "expiry must be positive, got {t}"
        )));
    }
    if settings.paths == 0 || settings.grid_steps_per_year == 0 {
        return Err(McError::Settings(
            "paths and grid_steps_per_year must be positive".into(),
        ));
    }
    if settings.antithetic && settings.paths % 2 == 1 {
        return Err(McError::Settings(
            "antithetic sampling needs an even path count".into(),
        ));
    }
    let sim = Sim::new(p, t, settings.grid_steps_per_year);
    let base = ChaCha8Rng::seed_from_u64(settings.seed);
    let floor = p.sigma0_sq * alpha_unchecked(p.lambda, t);
    let log_base = p.s0.ln() + p.r * t;
    let draws = if settings.antithetic {
        settings.paths / 2
    } else {
        settings.paths
    };
    let per = if settings.antithetic { 2 } else { 1 };
    let blocks: Vec<Vec<(f64, f64, f64)>> = (0..draws.div_ceil(BLOCK))
        .into_par_iter()
        .map(|blk| {
            let lo = blk * BLOCK;
            let hi = (lo + BLOCK).min(draws);
            let mut out = Vec::with_capacity((hi - lo) * per);
            for path in lo..hi {
                let mut rng = base.clone();
                rng.set_stream(path as u64);
                rng.set_word_pos(0);
                let (z, ia) = sim.jumps(&mut rng);
                let i_t = floor + ia;
                let ln_p = p.rho * z + sim.drift;
                let xi: f64 = rng.sample(StandardNormal);
                let centre = log_base + ln_p - 0.5 * i_t;
                let sd = i_t.sqrt();
                out.push((centre + sd * xi, i_t, ln_p.exp()));
                if settings.antithetic {
                    out.push((centre - sd * xi, i_t, ln_p.exp()));
                }
            }
            out
        })
        .collect();
    let n = settings.paths;
    let mut bundle = PathBundle {
        log_s: Vec::with_capacity(n),
        i_t: Vec::with_capacity(n),
        p_t: Vec::with_capacity(n),
        antithetic: settings.antithetic,
    };
    for (ls, it, pt) in blocks.into_iter().flatten() {
        bundle.log_s.push(ls);
        bundle.i_t.push(it);
        bundle.p_t.push(pt);
    }
    Ok(bundle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McPrice {
    pub price: f64,
    pub std_error: f64,
    pub estimator: Estimator,
}

/// Put price from an existing bundle.
pub fn put_from_bundle(
    bundle: &PathBundle,
    p: &ModelParams,
    opt: &OptionSpec,
    estimator: Estimator,
) -> McPrice {
    let r_t = p.r * opt.expiry;
    let k = opt.strike;
    let e = match estimator {
        Estimator::Conditional => {
            bundle.estimate(|i| bs_put_unchecked(p.s0 * bundle.p_t[i], bundle.i_t[i], k, r_t))
        }
        Estimator::Plain => {
            let disc = (-r_t).exp();
            bundle.estimate(|i| disc * (k - bundle.log_s[i].exp()).max(0.0))
        }
    };
    McPrice {
        price: e.mean,
        std_error: e.std_error,
        estimator,
    }
}

pub fn mc_put_price(
    p: &ModelParams,
    opt: &OptionSpec,
    settings: &McSettings,
) -> Result<McPrice, McError> {
    let bundle = simulate_paths(p, opt.expiry, settings)?;
    Ok(put_from_bundle(&bundle, p, opt, settings.estimator))
}
