//! Experiment orchestration: sweeps, engine dispatch and tabular output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc;
use crate::multi_cell::MultiCellContext;
use crate::params::{ParamsConfig, ScenarioConfig, SystemParams};
use crate::quad::QuadSpec;
use crate::single_cell::SingleCellContext;

/// Absolute slack for probability metrics.
pub const PROB_SLACK: f64 = 0.02;
/// Relative slack for rates.
pub const RATE_SLACK: f64 = 0.03;

pub const CSV_HEADER: [&str; 8] = [
    "sweep_param",
    "sweep_value",
    "metric",
    "gamma0_db",
    "analytic",
    "mc_mean",
    "mc_half_width",
    "engines_agree",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Analytic,
    #[serde(alias = "mc")]
    Montecarlo,
    Both,
}

impl Mode {
    fn analytic(self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    fn mc(self) -> bool {
        matches!(self, Mode::Montecarlo | Mode::Both)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "mc" | "montecarlo" => Ok(Mode::Montecarlo),
            "both" => Ok(Mode::Both),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Coverage,
    Rate,
    BlindRatio,
    PAd,
    PAi,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Coverage => "coverage",
            Metric::Rate => "rate",
            Metric::BlindRatio => "blind_ratio",
            Metric::PAd => "p_ad",
            Metric::PAi => "p_ai",
        }
    }
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    LambdaR,
    LambdaB,
    NRis,
    Beta,
    /// Single-cell radius.
    RadiusM,
    /// Multi-cell virtual radius.
    VirtualRadiusM,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::LambdaR => "lambda_r",
            SweepParam::LambdaB => "lambda_b",
            SweepParam::NRis => "n_ris",
            SweepParam::Beta => "beta",
            SweepParam::RadiusM => "radius_m",
            SweepParam::VirtualRadiusM => "virtual_radius_m",
        }
    }

    fn apply(self, base: &ParamsConfig, v: f64) -> Result<ParamsConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::LambdaR => cfg.lambda_r = Some(v),
            SweepParam::LambdaB => cfg.lambda_b = Some(v),
            SweepParam::Beta => cfg.beta = Some(v),
            SweepParam::NRis => {
                if !(v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX)) {
                    return Err(Error::Config(format!(
                        "n_ris must be a positive integer, got {v}"
                    )));
                }
                cfg.n_ris = Some(v as u32);
            }
            SweepParam::RadiusM => {
                let sc = cfg.scenario.get_or_insert_with(ScenarioConfig::default);
                sc.radius_m = Some(v);
            }
            SweepParam::VirtualRadiusM => {
                let sc = cfg.scenario.get_or_insert_with(ScenarioConfig::default);
                sc.virtual_radius_m = Some(v);
                sc.lambda_y = None;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Coverage]
}

fn default_trials() -> usize {
    10_000
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub params: ParamsConfig,
    pub sweep: Sweep,
    #[serde(default)]
    pub gamma0_grid_db: Vec<f64>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Resolved params for every sweep value.
    pub fn resolve(&self) -> Result<Vec<SystemParams>> {
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep values are empty".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics requested".into()));
        }
        if self.metrics.contains(&Metric::Coverage) && self.gamma0_grid_db.is_empty() {
            return Err(Error::Config(
                "coverage requested with an empty gamma0 grid".into(),
            ));
        }
        if self.gamma0_grid_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("gamma0 grid must be finite".into()));
        }
        if self.mode.mc() && self.n_trials < 2 {
            return Err(Error::Config("n_trials must be at least 2".into()));
        }
        self.sweep
            .values
            .iter()
            .map(|&v| self.sweep.param.apply(&self.params, v)?.resolve())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_param: String,
    pub sweep_value: f64,
    pub metric: String,
    pub gamma0_db: Option<f64>,
    pub analytic: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_half_width: Option<f64>,
    pub engines_agree: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// False when any analytic quadrature missed its tolerance.
    pub converged: bool,
    /// Mean interference beyond the simulation disk, W.
    pub mc_tail_bound_w: Option<f64>,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub sweep_param: String,
    pub points: Vec<SweepPoint>,
}

impl ResultTable {
    pub fn rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.points.iter().flat_map(|p| p.rows.iter())
    }

    pub fn converged(&self) -> bool {
        self.points.iter().all(|p| p.converged)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in self.rows() {
            w.write_record([
                r.sweep_param.clone(),
                r.sweep_value.to_string(),
                r.metric.clone(),
                opt(r.gamma0_db),
                opt(r.analytic),
                opt(r.mc_mean),
                opt(r.mc_half_width),
                r.engines_agree.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `<name>.csv` and `<name>.json` into `dir`.
    pub fn emit(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.name));
        let json_path = dir.join(format!("{}.json", self.name));
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        std::fs::write(&json_path, self.to_json()?)?;
        Ok((csv_path, json_path))
    }
}

impl fmt::Display for ResultTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
        for r in self.rows() {
            writeln!(
                f,
                "{}={:<10} {:<12} {:>6} analytic={:<13} mc={:<13} ±{:<11} {}",
                r.sweep_param,
                r.sweep_value,
                r.metric,
                r.gamma0_db.map(|g| format!("{g}dB")).unwrap_or_default(),
                cell(r.analytic),
                cell(r.mc_mean),
                cell(r.mc_half_width),
                match r.engines_agree {
                    Some(true) => "agree",
                    Some(false) => "DISAGREE",
                    None => "",
                }
            )?;
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn agrees(metric: Metric, analytic: f64, mean: f64, half_width: f64) -> bool {
    let slack = match metric {
        Metric::Rate => RATE_SLACK * analytic.abs(),
        _ => PROB_SLACK,
    };
    (analytic - mean).abs() <= half_width + slack
}

/// Analytic values for one sweep point.
struct AnalyticValues {
    coverage: Vec<f64>,
    rate: Option<f64>,
    assoc: (f64, f64, f64),
    converged: bool,
    tail: Option<f64>,
}

fn analytic_point(
    p: &SystemParams,
    spec: &ExperimentSpec,
    gammas: &[f64],
) -> Result<AnalyticValues> {
    let quad = QuadSpec::default();
    let want_cov = spec.metrics.contains(&Metric::Coverage);
    let want_rate = spec.metrics.contains(&Metric::Rate);
    if p.scenario.is_multi_cell() {
        let ctx = MultiCellContext::new(p.clone(), quad)?;
        let mut converged = ctx.converged();
        let mut coverage = Vec::new();
        if want_cov {
            for &g in gammas {
                let q = ctx.coverage_multi(g);
                converged &= q.converged;
                coverage.push(q.value);
            }
        }
        let rate = want_rate.then(|| {
            let q = ctx.rate_multi();
            converged &= q.converged;
            q.value
        });
        let a = ctx.assoc_probs_multi();
        Ok(AnalyticValues {
            coverage,
            rate,
            assoc: (a.direct, a.reflected, a.blind),
            converged,
            tail: Some(ctx.interference_tail(p.sim_radius())),
        })
    } else {
        let ctx = SingleCellContext::new(p.clone(), quad)?;
        let mut converged = ctx.converged();
        let coverage = if want_cov {
            gammas
                .iter()
                .map(|&g| ctx.ergodic_coverage_single(g))
                .collect()
        } else {
            Vec::new()
        };
        let rate = want_rate.then(|| {
            let q = ctx.achievable_rate_single();
            converged &= q.converged;
            q.value
        });
        Ok(AnalyticValues {
            coverage,
            rate,
            assoc: ctx.ergodic_assoc_single(),
            converged,
            tail: None,
        })
    }
}

fn run_point(spec: &ExperimentSpec, value: f64, p: &SystemParams) -> Result<SweepPoint> {
    let gammas: Vec<f64> = spec
        .gamma0_grid_db
        .iter()
        .map(|&d| db_to_linear(d))
        .collect();
    let analytic = if spec.mode.analytic() {
        Some(analytic_point(p, spec, &gammas)?)
    } else {
        None
    };
    let sim = spec
        .mode
        .mc()
        .then(|| mc::run(p, &gammas, spec.n_trials, spec.seed));
    let mut tail = analytic.as_ref().and_then(|a| a.tail);
    if sim.is_some() && tail.is_none() && p.scenario.is_multi_cell() {
        tail = Some(
            MultiCellContext::new(p.clone(), QuadSpec::default())?
                .interference_tail(p.sim_radius()),
        );
    }
    let row = |metric: Metric, gamma0_db: Option<f64>, a: Option<f64>, m: Option<mc::Estimate>| {
        let engines_agree = match (a, m) {
            (Some(a), Some(m)) => Some(agrees(metric, a, m.mean, m.half_width_95)),
            _ => None,
        };
        ResultRow {
            sweep_param: spec.sweep.param.name().to_string(),
            sweep_value: value,
            metric: metric.name().to_string(),
            gamma0_db,
            analytic: a,
            mc_mean: m.map(|e| e.mean),
            mc_half_width: m.map(|e| e.half_width_95),
            engines_agree,
        }
    };
    let mut rows = Vec::new();
    for &metric in &spec.metrics {
        match metric {
            Metric::Coverage => {
                for (i, &g) in spec.gamma0_grid_db.iter().enumerate() {
                    rows.push(row(
                        metric,
                        Some(g),
                        analytic.as_ref().map(|a| a.coverage[i]),
                        sim.as_ref().map(|s| s.coverage[i]),
                    ));
                }
            }
            Metric::Rate => rows.push(row(
                metric,
                None,
                analytic.as_ref().and_then(|a| a.rate),
                sim.as_ref().map(|s| s.rate_bps),
            )),
            Metric::BlindRatio => rows.push(row(
                metric,
                None,
                analytic.as_ref().map(|a| a.assoc.2),
                sim.as_ref().map(|s| s.blind),
            )),
            Metric::PAd => rows.push(row(
                metric,
                None,
                analytic.as_ref().map(|a| a.assoc.0),
                sim.as_ref().map(|s| s.direct),
            )),
            Metric::PAi => rows.push(row(
                metric,
                None,
                analytic.as_ref().map(|a| a.assoc.1),
                sim.as_ref().map(|s| s.reflected),
            )),
        }
    }
    Ok(SweepPoint {
        value,
        converged: analytic.as_ref().is_none_or(|a| a.converged),
        mc_tail_bound_w: if sim.is_some() { tail } else { None },
        rows,
    })
}

/// Runs every sweep point (in parallel) and assembles rows in sweep order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    let params = spec.resolve()?;
    let points = spec
        .sweep
        .values
        .par_iter()
        .zip(params.par_iter())
        .map(|(&v, p)| run_point(spec, v, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultTable {
        name: spec.name.clone(),
        sweep_param: spec.sweep.param.name().to_string(),
        points,
    })
}

const PRESETS: [(&str, &str); 7] = [
    ("fig3", include_str!("../presets/fig3.json")),
    ("fig4", include_str!("../presets/fig4.json")),
    ("fig5", include_str!("../presets/fig5.json")),
    ("fig6", include_str!("../presets/fig6.json")),
    ("fig7", include_str!("../presets/fig7.json")),
    ("fig8", include_str!("../presets/fig8.json")),
    ("fig9", include_str!("../presets/fig9.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Option<ExperimentSpec> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentSpec::from_json(text).expect("bundled preset parses"))
}
