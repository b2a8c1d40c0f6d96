//! Run configuration: a TOML file with [model], [dynamics], [option], [run] and
//! optional [sweep] tables, plus command-line overrides.

use bns::bounds::BoundMethod;
use bns::reference::{CfSettings, McSettings};
use bns::{CumulantModel, ModelParams, OptionSpec};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    Cf,
    Mc,
    Both,
    None,
}

impl Oracle {
    pub fn cf(self) -> bool {
        matches!(self, Oracle::Cf | Oracle::Both)
    }

    pub fn mc(self) -> bool {
        matches!(self, Oracle::Mc | Oracle::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Strike,
    Expiry,
    Lambda,
    B,
    Order,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Strike => "strike",
            Axis::Expiry => "expiry",
            Axis::Lambda => "lambda",
            Axis::B => "b",
            Axis::Order => "order",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDynamics {
    lambda: f64,
    rho: f64,
    r: f64,
    sigma0_sq: f64,
    s0: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOption {
    strike: Option<f64>,
    strikes: Option<Vec<f64>>,
    expiry: Option<f64>,
    expiries: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    orders: Option<Vec<usize>>,
    oracle: Option<Oracle>,
    method: Option<String>,
    out: Option<PathBuf>,
    #[serde(default)]
    mc: McSettings,
    #[serde(default)]
    cf: CfSettings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: Axis,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: CumulantModel,
    dynamics: RawDynamics,
    #[serde(default)]
    option: RawOption,
    #[serde(default)]
    run: RawRun,
    sweep: Option<RawSweep>,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub strikes: Vec<f64>,
    pub expiries: Vec<f64>,
    pub orders: Vec<usize>,
    /// None when the config leaves it to the command's default.
    pub oracle: Option<Oracle>,
    /// None means pick by rho.
    pub method: Option<BoundMethod>,
    pub out: Option<PathBuf>,
    pub mc: McSettings,
    pub cf: CfSettings,
    pub sweep: Option<(Axis, Vec<f64>)>,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub orders: Option<Vec<usize>>,
    pub oracle: Option<Oracle>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub method: Option<String>,
    pub axis: Option<Axis>,
    pub values: Option<Vec<f64>>,
}

fn pick(
    errs: &mut Vec<String>,
    name: &str,
    single: Option<f64>,
    list: Option<Vec<f64>>,
) -> Vec<f64> {
    let plural = format!("{name}s").replace("expirys", "expiries");
    match (single, list) {
        (Some(_), Some(_)) => {
            errs.push(format!(
                "option: give either `{name}` or `{plural}`, not both"
            ));
            vec![]
        }
        (Some(v), None) => vec![v],
        (None, Some(v)) => {
            if v.is_empty() {
                errs.push(format!("option.{plural}: grid is empty"));
            }
            v
        }
        (None, None) => {
            errs.push(format!("option: missing `{name}` or `{plural}`"));
            vec![]
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
        Self::parse(&text, ov)
    }

    pub fn parse(text: &str, ov: &Overrides) -> Result<Self, Vec<String>> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| vec![e.to_string()])?;
        let mut errs = Vec::new();

        let d = raw.dynamics;
        let params = ModelParams {
            lambda: d.lambda,
            rho: d.rho,
            r: d.r,
            sigma0_sq: d.sigma0_sq,
            s0: d.s0,
            cumulant: raw.model,
        };
        if let Err(es) = params.validate() {
            errs.extend(es.iter().map(|e| format!("model/dynamics: {e}")));
        }

        let strikes = pick(&mut errs, "strike", raw.option.strike, raw.option.strikes);
        let expiries = pick(&mut errs, "expiry", raw.option.expiry, raw.option.expiries);
        for &k in &strikes {
            if let Err(e) = OptionSpec::new(k, 1.0) {
                errs.push(format!("option: {e}"));
            }
        }
        for &t in &expiries {
            if let Err(e) = OptionSpec::new(1.0, t) {
                errs.push(format!("option: {e}"));
            }
        }

        let orders = ov
            .orders
            .clone()
            .or(raw.run.orders)
            .unwrap_or_else(|| vec![2]);
        if orders.is_empty() {
            errs.push("run.orders: list is empty".into());
        }
        if let Some(&n) = orders.iter().find(|&&n| n < 2) {
            errs.push(format!(
                "run.orders: Taylor order must be at least 2, got {n}"
            ));
        }

        let method = match ov.method.clone().or(raw.run.method) {
            None => None,
            Some(s) if s == "auto" => None,
            Some(s) => match BoundMethod::from_str(&s) {
                Ok(m) => Some(m),
                Err(e) => {
                    errs.push(format!("run.method: {e}"));
                    None
                }
            },
        };

        let mut mc = raw.run.mc;
        if let Some(seed) = ov.seed {
            mc.seed = seed;
        }
        if mc.paths == 0 {
            errs.push("run.mc.paths: must be positive".into());
        }

        let sweep = match (ov.axis, ov.values.clone(), raw.sweep) {
            (None, None, None) => None,
            (axis, values, file) => {
                let axis = axis.or(file.as_ref().map(|s| s.axis));
                let values = values.or(file.map(|s| s.values));
                match (axis, values) {
                    (Some(a), Some(v)) if !v.is_empty() => Some((a, v)),
                    (Some(_), Some(_)) => {
                        errs.push("sweep.values: grid is empty".into());
                        None
                    }
                    (None, _) => {
                        errs.push("sweep: missing axis".into());
                        None
                    }
                    (_, None) => {
                        errs.push("sweep: missing values".into());
                        None
                    }
                }
            }
        };

        if !errs.is_empty() {
            return Err(errs);
        }
        Ok(Self {
            params,
            strikes,
            expiries,
            orders,
            oracle: ov.oracle.or(raw.run.oracle),
            method,
            out: ov.out.clone().or(raw.run.out),
            mc,
            cf: raw.run.cf,
            sweep,
        })
    }
}
