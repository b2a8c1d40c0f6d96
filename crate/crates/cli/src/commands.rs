//! The price, sweep, bound and selftest commands. Each returns a table whose rows
//! are ordered by grid index, independent of the thread count.

use crate::config::{Axis, Oracle, RunConfig};
use bns::bounds::{gn_bound, remainder_bound, BoundMethod};
use bns::bsm::{bs_put, eval_partial, DerivKey};
use bns::pricer::{second_order_price, taylor_price, PriceResult};
use bns::reference::{cf_put_price, put_from_bundle, simulate_paths, CfPrice, CfSettings, McPrice};
use bns::{CumulantModel, ModelParams, MomentTable, OptionSpec};
use rayon::prelude::*;
use std::fmt::Display;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CmdError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Numeric(_) => 3,
        }
    }
}

fn numeric<E: Display>(e: E) -> CmdError {
    CmdError::Numeric(e.to_string())
}

/// Round-trip float formatting with 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..17).contains(&e) {
        format!("{:.*}", (16 - e) as usize, x)
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

fn opt_f(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn price_n(p: &ModelParams, o: &OptionSpec, n: usize) -> Result<PriceResult, CmdError> {
    if n == 2 {
        second_order_price(p, o).map_err(numeric)
    } else {
        taylor_price(p, o, n).map_err(numeric)
    }
}

// One MC bundle per expiry, reused for every strike.
fn mc_prices(
    cfg: &RunConfig,
    params: &ModelParams,
    t: f64,
    strikes: &[f64],
) -> Result<Vec<McPrice>, CmdError> {
    let bundle = simulate_paths(params, t, &cfg.mc).map_err(numeric)?;
    strikes
        .iter()
        .map(|&k| {
            let o = OptionSpec::new(k, t).map_err(numeric)?;
            Ok(put_from_bundle(&bundle, params, &o, cfg.mc.estimator))
        })
        .collect()
}

fn cf(params: &ModelParams, o: &OptionSpec, s: &CfSettings) -> Result<CfPrice, CmdError> {
    cf_put_price(params, o, s).map_err(numeric)
}

pub fn price(cfg: &RunConfig) -> Result<Table, CmdError> {
    let oracle = cfg.oracle.unwrap_or(Oracle::None);
    let mut header = vec![
        "K",
        "T",
        "N",
        "price",
        "base_bs",
        "sum_corrections",
        "bound_total",
    ];
    if oracle.cf() {
        header.extend(["cf_price", "cf_error_estimate", "cf_flagged"]);
    }
    if oracle.mc() {
        header.extend(["mc_price", "mc_se"]);
    }
    let mut table = Table::new(&header);
    let p = &cfg.params;
    for &t in &cfg.expiries {
        let mc = if oracle.mc() {
            Some(mc_prices(cfg, p, t, &cfg.strikes)?)
        } else {
            None
        };
        let rows: Vec<Vec<Vec<String>>> = cfg
            .strikes
            .par_iter()
            .enumerate()
            .map(|(ki, &k)| {
                let o = OptionSpec::new(k, t).map_err(numeric)?;
                let cfp = if oracle.cf() {
                    Some(cf(p, &o, &cfg.cf)?)
                } else {
                    None
                };
                cfg.orders
                    .iter()
                    .map(|&n| {
                        let pr = price_n(p, &o, n)?;
                        let method = cfg.method.unwrap_or(BoundMethod::auto(p.rho));
                        let bound = remainder_bound(n, p, &o, method).ok().map(|b| b.total);
                        let mut row = vec![
                            fmt_f(k),
                            fmt_f(t),
                            n.to_string(),
                            fmt_f(pr.value),
                            fmt_f(pr.base_bs),
                            fmt_f(pr.sum_corrections()),
                            opt_f(bound),
                        ];
                        if let Some(c) = &cfp {
                            row.extend([
                                fmt_f(c.price),
                                fmt_f(c.error_estimate),
                                c.flagged().to_string(),
                            ]);
                        }
                        if let Some(m) = &mc {
                            row.extend([fmt_f(m[ki].price), fmt_f(m[ki].std_error)]);
                        }
                        Ok(row)
                    })
                    .collect()
            })
            .collect::<Result<_, CmdError>>()?;
        table.rows.extend(rows.into_iter().flatten());
    }
    Ok(table)
}

/// Least-squares slope of ln y against ln x; None when fewer than two positive points.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 || pts.len() < points.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

struct SweepPoint {
    value: f64,
    k: f64,
    t: f64,
    n: usize,
    price: f64,
    cf: Option<CfPrice>,
    mc: Option<McPrice>,
}

pub fn sweep(cfg: &RunConfig) -> Result<Table, CmdError> {
    let (axis, values) = cfg
        .sweep
        .clone()
        .ok_or_else(|| CmdError::Config("sweep needs an axis and values".into()))?;
    let oracle = cfg.oracle.unwrap_or(Oracle::Cf);
    if axis == Axis::Order && values.iter().any(|v| v.fract() != 0.0 || *v < 2.0) {
        return Err(CmdError::Config(
            "order sweep needs integer values >= 2".into(),
        ));
    }
    // (params, strikes, expiries, orders) for each grid value
    let variants: Vec<(ModelParams, Vec<f64>, Vec<f64>, Vec<usize>)> = values
        .iter()
        .map(|&v| {
            let mut p = cfg.params;
            let (mut ks, mut ts, mut ns) = (
                cfg.strikes.clone(),
                cfg.expiries.clone(),
                cfg.orders.clone(),
            );
            match axis {
                Axis::Strike => ks = vec![v],
                Axis::Expiry => ts = vec![v],
                Axis::Lambda => p.lambda = v,
                Axis::B => p.cumulant = p.cumulant.with_b(v),
                Axis::Order => ns = vec![v as usize],
            }
            if let Err(es) = p.validate() {
                let msg: Vec<String> = es.iter().map(|e| e.to_string()).collect();
                return Err(CmdError::Config(format!(
                    "{} = {v}: {}",
                    axis.name(),
                    msg.join("; ")
                )));
            }
            for (&k, &t) in ks.iter().zip(ts.iter()) {
                OptionSpec::new(k, t).map_err(|e| CmdError::Config(e.to_string()))?;
            }
            Ok((p, ks, ts, ns))
        })
        .collect::<Result<_, _>>()?;

    let mut points = Vec::new();
    for (vi, (p, ks, ts, ns)) in variants.iter().enumerate() {
        for &t in ts {
            let mc = if oracle.mc() {
                Some(mc_prices(cfg, p, t, ks)?)
            } else {
                None
            };
            let chunk: Vec<Vec<SweepPoint>> = ks
                .par_iter()
                .enumerate()
                .map(|(ki, &k)| {
                    let o = OptionSpec::new(k, t).map_err(numeric)?;
                    let cfp = if oracle.cf() {
                        Some(cf(p, &o, &cfg.cf)?)
                    } else {
                        None
                    };
                    ns.iter()
                        .map(|&n| {
                            Ok(SweepPoint {
                                value: values[vi],
                                k,
                                t,
                                n,
                                price: price_n(p, &o, n)?.value,
                                cf: cfp,
                                mc: mc.as_ref().map(|m| m[ki]),
                            })
                        })
                        .collect()
                })
                .collect::<Result<_, CmdError>>()?;
            points.extend(chunk.into_iter().flatten());
        }
    }

    let reference = |pt: &SweepPoint| pt.cf.map(|c| c.price).or(pt.mc.map(|m| m.price));
    let mut header = vec!["axis", "value", "K", "T", "N", "price"];
    if oracle.cf() {
        header.extend(["cf_price", "cf_flagged"]);
    }
    if oracle.mc() {
        header.extend(["mc_price", "mc_se"]);
    }
    header.extend(["abs_error", "log10_error"]);
    if axis == Axis::B {
        header.push("slope_log_error_vs_log_b");
    }
    let mut table = Table::new(&header);
    for pt in &points {
        let err = reference(pt).map(|r| (pt.price - r).abs());
        let mut row = vec![
            axis.name().to_string(),
            fmt_f(pt.value),
            fmt_f(pt.k),
            fmt_f(pt.t),
            pt.n.to_string(),
            fmt_f(pt.price),
        ];
        if let Some(c) = &pt.cf {
            row.extend([fmt_f(c.price), c.flagged().to_string()]);
        }
        if let Some(m) = &pt.mc {
            row.extend([fmt_f(m.price), fmt_f(m.std_error)]);
        }
        row.extend([opt_f(err), opt_f(err.map(f64::log10))]);
        if axis == Axis::B {
            let group: Vec<(f64, f64)> = points
                .iter()
                .filter(|q| q.k == pt.k && q.t == pt.t && q.n == pt.n)
                .filter_map(|q| reference(q).map(|r| (q.value, (q.price - r).abs())))
                .collect();
            row.push(opt_f(log_log_slope(&group)));
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn bound(cfg: &RunConfig) -> Result<Table, CmdError> {
    let oracle = cfg.oracle.unwrap_or(Oracle::Cf);
    let p = &cfg.params;
    let method = cfg.method.unwrap_or(BoundMethod::auto(p.rho));
    match method {
        BoundMethod::CauchySchwarz if p.rho > 0.0 => {
            return Err(CmdError::Config(format!(
                "cauchy_schwarz needs rho <= 0, got {}",
                p.rho
            )))
        }
        BoundMethod::RhoZero if p.rho != 0.0 => {
            return Err(CmdError::Config(format!(
                "rho_zero needs rho = 0, got {}",
                p.rho
            )))
        }
        _ => {}
    }
    let mut table = Table::new(&[
        "K",
        "T",
        "N",
        "method",
        "n",
        "key",
        "m_value",
        "moment_factor",
        "contribution",
        "total",
        "realized_error",
        "unreliable",
        "truncation_ok",
    ]);
    let grid: Vec<(f64, f64)> = cfg
        .expiries
        .iter()
        .flat_map(|&t| cfg.strikes.iter().map(move |&k| (k, t)))
        .collect();
    let blocks: Vec<Vec<Vec<String>>> = grid
        .par_iter()
        .map(|&(k, t)| {
            let o = OptionSpec::new(k, t).map_err(numeric)?;
            let cf_price = if oracle.cf() {
                Some(cf(p, &o, &cfg.cf)?.price)
            } else {
                None
            };
            let mut rows = Vec::new();
            for &n in &cfg.orders {
                let rep = remainder_bound(n, p, &o, method).map_err(numeric)?;
                let realized = match cf_price {
                    Some(c) => Some((price_n(p, &o, n)?.value - c).abs()),
                    None => None,
                };
                for term in &rep.terms {
                    rows.push(vec![
                        fmt_f(k),
                        fmt_f(t),
                        n.to_string(),
                        method.to_string(),
                        term.n.to_string(),
                        term.key.to_string(),
                        fmt_f(term.m_value),
                        fmt_f(term.moment_factor),
                        fmt_f(term.contribution),
                        fmt_f(rep.total),
                        opt_f(realized),
                        rep.unreliable.to_string(),
                        rep.truncation_ok.to_string(),
                    ]);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_, CmdError>>()?;
    table.rows.extend(blocks.into_iter().flatten());
    Ok(table)
}

/// Quick internal consistency checks: (name, passed, detail).
pub fn selftest() -> Vec<(String, bool, String)> {
    let mut out = Vec::new();
    let mut check = |name: &str, r: Result<(bool, String), String>| {
        let (ok, detail) = r.unwrap_or_else(|e| (false, e));
        out.push((name.to_string(), ok, detail));
    };
    let ig_atm = |lambda: f64| ModelParams {
        lambda,
        rho: -0.3,
        r: 0.05,
        sigma0_sq: 0.5,
        s0: 100.0,
        cumulant: CumulantModel::InverseGaussian { a: 1.0, b: 10.0 },
    };
    let atm = OptionSpec {
        strike: 100.0,
        expiry: 1.0,
    };

    for (lambda, n, want) in [
        (1.0, 2, 20.4190804502570),
        (5.0, 2, 14.0562498792883),
        (5.0, 3, 14.0561187808593),
    ] {
        check(
            &format!("taylor price N={n} lambda={lambda}"),
            taylor_price(&ig_atm(lambda), &atm, n)
                .map(|r| {
                    (
                        (r.value - want).abs() <= 1e-6,
                        format!("{} vs {want}", fmt_f(r.value)),
                    )
                })
                .map_err(|e| e.to_string()),
        );
    }
    check(
        "cf price lambda=1",
        cf_put_price(&ig_atm(1.0), &atm, &CfSettings::default())
            .map(|c| {
                let want = 20.4192290946107;
                (
                    (c.price / want - 1.0).abs() <= 1e-5,
                    format!("{} vs {want}", fmt_f(c.price)),
                )
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "martingale E[P_T] = 1",
        MomentTable::new(&ig_atm(1.0), 1.0)
            .and_then(|t| t.mixed_power_moment(1, 0))
            .map(|m| ((m - 1.0).abs() <= 1e-14, fmt_f(m)))
            .map_err(|e| e.to_string()),
    );
    check("third derivative vs finite difference", {
        let (x, y, k, rt) = (1.1, 0.3, 1.0, 0.05);
        let h = 1e-3;
        let f = |x: f64| eval_partial(DerivKey::new(1, 1), x, y, k, rt).unwrap_or(f64::NAN);
        let fd = (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h);
        eval_partial(DerivKey::new(2, 1), x, y, k, rt)
            .map(|v| {
                (
                    (v - fd).abs() <= 1e-7 * v.abs().max(1.0),
                    format!("{} vs {}", fmt_f(v), fmt_f(fd)),
                )
            })
            .map_err(|e| e.to_string())
    });
    check(
        "put is positive",
        bs_put(1.0, 0.04, 1.0, 0.0)
            .map(|v| (v > 0.0, fmt_f(v)))
            .map_err(|e| e.to_string()),
    );
    check(
        "G_0 = 1",
        gn_bound(0, &ig_atm(1.0), 1.0)
            .map(|g| (g == 1.0, fmt_f(g)))
            .map_err(|e| e.to_string()),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f(0.1), "0.10000000000000001");
        assert_eq!(fmt_f(14.05624987928830), "14.056249879288300");
        assert_eq!(fmt_f(1e-12), "9.9999999999999998e-13");
        assert_eq!(fmt_f(0.0), "0");
        for x in [0.1, 2.0 / 3.0, 1e-7, 123456.789, 1e300] {
            assert_eq!(fmt_f(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [20.0, 40.0, 80.0]
            .iter()
            .map(|&b: &f64| (b, 3.0 * b.powi(-3)))
            .collect();
        assert!((log_log_slope(&pts).unwrap() + 3.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&[(1.0, 0.0), (2.0, 1.0)]), None);
    }

    #[test]
    fn csv_uses_lf() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec!["1".into(), "2".into()]);
        assert_eq!(t.to_csv(), "a,b\n1,2\n");
    }
}
