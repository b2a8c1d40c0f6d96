//! Parameter sets shared by the integration tests.
#![allow(dead_code)]

use bns::{CumulantModel, ModelParams, OptionSpec};

/// IG a=1, b=10, rho=-0.3, r=0.05, sigma0^2=0.5, S0=100 at the given lambda.
pub fn ig_atm(lambda: f64) -> ModelParams {
    ModelParams {
        lambda,
        rho: -0.3,
        r: 0.05,
        sigma0_sq: 0.5,
        s0: 100.0,
        cumulant: CumulantModel::InverseGaussian { a: 1.0, b: 10.0 },
    }
}

/// IG(20, 5) with lambda=0.5, rho=-0.3, sigma0^2=0.5, S0=1.
pub fn ig20_5() -> ModelParams {
    ModelParams {
        lambda: 0.5,
        rho: -0.3,
        r: 0.05,
        sigma0_sq: 0.5,
        s0: 1.0,
        cumulant: CumulantModel::InverseGaussian { a: 20.0, b: 5.0 },
    }
}

/// One point of the bound-validity grid.
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub params: ModelParams,
    pub option: OptionSpec,
    pub order: usize,
}

/// Gamma and IG with a=20, lambda=0.5, rho=-0.5, S0=1, crossed with b in {20, 80},
/// N in {2,3,4}, K in {0.5,1,1.5}, T in {0.5,1,2}: 108 points.
pub fn bound_grid() -> Vec<GridPoint> {
    let mut out = Vec::new();
    for ig in [false, true] {
        for b in [20.0, 80.0] {
            let cumulant = if ig {
                CumulantModel::InverseGaussian { a: 20.0, b }
            } else {
                CumulantModel::Gamma { a: 20.0, b }
            };
            let params = ModelParams {
                lambda: 0.5,
                rho: -0.5,
                r: 0.05,
                sigma0_sq: if ig { 0.5 } else { 0.25 },
                s0: 1.0,
                cumulant,
            };
            for order in [2, 3, 4] {
                for k in [0.5, 1.0, 1.5] {
                    for t in [0.5, 1.0, 2.0] {
                        out.push(GridPoint {
                            params,
                            option: OptionSpec::new(k, t).unwrap(),
                            order,
                        });
                    }
                }
            }
        }
    }
    out
}

const PREC: u32 = 200;

fn mp(v: f64) -> rug::Float {
    rug::Float::with_val(PREC, v)
}

/// Put price at 200 bits.
fn put_mp(x: &rug::Float, y: &rug::Float, strike: f64, r_t: f64) -> rug::Float {
    use rug::Float;
    let k = mp(strike);
    let sy = Float::with_val(PREC, y.sqrt_ref());
    let lx = Float::with_val(PREC, x / &k).ln() + r_t;
    let dp = lx / &sy + Float::with_val(PREC, &sy / 2u32);
    let dm = Float::with_val(PREC, &dp - &sy);
    let sqrt2 = mp(2.0).sqrt();
    let cdf_neg = |d: &Float| -> Float { Float::with_val(PREC, d / &sqrt2).erfc() / 2u32 };
    let disc = k * mp(-r_t).exp();
    disc * cdf_neg(&dm) - Float::with_val(PREC, x * cdf_neg(&dp))
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central mixed difference of orders (p, q) with steps (hx, hy), at 200 bits.
fn central(p: u32, q: u32, x: f64, y: f64, hx: f64, hy: f64, strike: f64, r_t: f64) -> rug::Float {
    use rug::ops::Pow;
    use rug::Float;
    let mut acc = mp(0.0);
    let (hx_mp, hy_mp) = (mp(hx), mp(hy));
    for i in 0..=p {
        let xi = mp(x) + Float::with_val(PREC, &hx_mp * (p as f64 / 2.0 - i as f64));
        for j in 0..=q {
            let yj = mp(y) + Float::with_val(PREC, &hy_mp * (q as f64 / 2.0 - j as f64));
            let w = binom(p, i) * binom(q, j) * if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            acc += put_mp(&xi, &yj, strike, r_t) * w;
        }
    }
    acc / hx_mp.pow(p) / hy_mp.pow(q)
}

/// d^{p+q} BS / dx^p dy^q from central differences with steps 1e-3 x and 1e-3 y and
/// one Richardson step.
pub fn richardson_partial(p: u32, q: u32, x: f64, y: f64, strike: f64, r_t: f64) -> f64 {
    let (hx, hy) = (1e-3 * x, 1e-3 * y);
    let coarse = central(p, q, x, y, hx, hy, strike, r_t);
    let fine = central(p, q, x, y, hx / 2.0, hy / 2.0, strike, r_t);
    ((fine * 4u32 - coarse) / 3u32).to_f64()
}
