//! JSON-configured experiments.
//!
//! A config names one experiment and the blocks it needs:
//!
//! ```json
//! {
//!   "schema": 1,
//!   "experiment": "certify-log",
//!   "model": {"dim": 1, "drift": {"name": "ou", "a": 1.0}},
//!   "clock": {"bernstein": {"type": "stable", "theta": 0.75}},
//!   "grid": {"T": 1.0, "M": 100},
//!   "mc": {"N": 10000, "seed": 7},
//!   "observable": {"name": "sin1", "offset": 2.0},
//!   "points": {"x": [0.0], "y": [1.0]},
//!   "output": {"dir": "out"}
//! }
//! ```
//!
//! Configs are checked completely before anything runs. Failures carry the
//! dotted path of the offending field and map to exit status 64; errors
//! raised while computing map to 70.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bernstein::BernsteinFunction;
use crate::certify::{
    coupling_property_bound, gradient_certificate, log_harnack_certificate, power_harnack_certificate, stable_rate_check, CertifySetup, HarnackReport, Verdict,
};
use crate::coupling::{couple_ensemble, require_coupling_clock, CouplingConfig};
use crate::error::{Error, Result};
use crate::galerkin::{dimension_free_check, NonlinearitySpec, SemilinearModel, SpectrumSpec};
use crate::observable::{Observable, ObservableSpec};
use crate::parallel::{McConfig, Workers};
use crate::pathgen::{ClockLaw, TimeGrid};
use crate::rng::tags;
use crate::sde::{semigroup_estimate, simulate_terminals, DiffusionSpec, DriftSpec, Perturbation, Scheme, SdeModel};
use crate::stats::MCEstimate;

pub const SCHEMA_VERSION: u64 = 1;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_RUNTIME: i32 = 70;
const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Couple,
    CertifyLog,
    CertifyPower,
    CertifyGradient,
    CertifyCouplingBound,
    RateCheck,
    GalerkinCheck,
    Moments,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Couple => "couple",
            ExperimentKind::CertifyLog => "certify-log",
            ExperimentKind::CertifyPower => "certify-power",
            ExperimentKind::CertifyGradient => "certify-gradient",
            ExperimentKind::CertifyCouplingBound => "certify-coupling-bound",
            ExperimentKind::RateCheck => "rate-check",
            ExperimentKind::GalerkinCheck => "galerkin-check",
            ExperimentKind::Moments => "moments",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u64,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub model: Option<ModelBlock>,
    pub clock: ClockLaw,
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub mc: Option<McBlock>,
    #[serde(default)]
    pub observable: Option<ObservableSpec>,
    #[serde(default)]
    pub points: Option<PointsBlock>,
    #[serde(default)]
    pub params: ParamsBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Finite-dimensional SDE, or a Galerkin family when `spectrum` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    #[serde(default)]
    pub diffusion: Option<DiffusionSpec>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub spectrum: Option<SpectrumSpec>,
    #[serde(default)]
    pub nonlinearity: Option<NonlinearitySpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    #[default]
    Zero,
    /// `V_t = rate · t`
    Linear { rate: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    #[serde(rename = "N")]
    pub paths: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsBlock {
    pub x: Vec<f64>,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
}

/// Experiment-specific scalars.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub delta_couple: Option<f64>,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default, rename = "T_grid")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub paths_csv: bool,
}

fn config_error(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        location: location.into(),
        message: message.into(),
    }
}

/// Rewrite a parameter error raised by a builder as a config error under
/// `prefix`.
fn located(prefix: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { field, reason } => {
            // builders sometimes report full paths already
            let location = if field.contains('.') { field } else { format!("{prefix}.{field}") };
            config_error(location, reason)
        }
        Error::Config { .. } => err,
        other => config_error(prefix, other.to_string()),
    }
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let location = if path == "." { "(root)".to_string() } else { path };
        config_error(location, e.into_inner().to_string())
    })?;
    // unit variants of tagged enums ignore extra keys during parsing, so
    // compare against a round trip
    let raw: Value = serde_json::from_str(text)?;
    unknown_keys(&raw, &serde_json::to_value(&cfg)?, "")?;
    cfg.validate()?;
    Ok(cfg)
}

fn unknown_keys(input: &Value, known: &Value, path: &str) -> Result<()> {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match (input, known) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in a {
                match b.get(k) {
                    Some(w) => unknown_keys(v, w, &join(k))?,
                    None => return Err(config_error(join(k), "unknown field")),
                }
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            for (i, (v, w)) in a.iter().zip(b).enumerate() {
                unknown_keys(v, w, &join(&i.to_string()))?;
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| config_error(path.display().to_string(), e.to_string()))?;
    parse_config(&text)
}

fn need<'a, T>(v: &'a Option<T>, location: &str, kind: ExperimentKind) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| config_error(location, format!("required by experiment `{}`", kind.name())))
}

fn check_point(v: &[f64], location: &str, dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(config_error(location, format!("has {} coordinates, the model has dimension {dim}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(config_error(location, "coordinates must be finite"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        let kind = self.experiment;
        if self.schema != SCHEMA_VERSION {
            return Err(config_error("schema", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        self.clock.validate().map_err(|e| match e {
            Error::InvalidParameter { ref field, .. } if field == "epsilon" => located("clock", e),
            e => located("clock.bernstein", e),
        })?;
        if self.output.paths_csv && !matches!(kind, Simulate | Couple) {
            return Err(config_error("output.paths_csv", format!("per-path CSV is not produced by `{}`", kind.name())));
        }
        if kind == Moments {
            let k = *need(&self.params.k, "params.k", kind)?;
            let t = *need(&self.params.t, "params.t", kind)?;
            if !(k > 0.0 && k.is_finite()) {
                return Err(config_error("params.k", format!("must be positive, got {k}")));
            }
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_error("params.t", format!("must be positive, got {t}")));
            }
            return Ok(());
        }
        let mc = need(&self.mc, "mc", kind)?;
        if mc.paths < 2 {
            return Err(config_error("mc.N", "need at least two replicates"));
        }
        if kind == RateCheck {
            let grid = need(&self.params.t_grid, "params.T_grid", kind)?;
            if grid.len() < 4 {
                return Err(config_error("params.T_grid", format!("need at least 4 horizons, got {}", grid.len())));
            }
            if grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(config_error("params.T_grid", "horizons must be positive"));
            }
            if matches!(self.clock.bernstein, BernsteinFunction::Gamma { .. }) {
                return Err(config_error("clock.bernstein", "the gamma clock has no power-law exponent"));
            }
            return Ok(());
        }
        let grid = need(&self.grid, "grid", kind)?;
        TimeGrid::uniform(grid.horizon, grid.steps).map_err(|e| config_error("grid", e.to_string()))?;
        let model = need(&self.model, "model", kind)?;
        let points = need(&self.points, "points", kind)?;
        if kind != Simulate && kind != CertifyGradient {
            need(&points.y, "points.y", kind)?;
        }
        if kind != Simulate {
            need(&self.observable, "observable", kind)?;
        }
        if kind == CertifyPower {
            let p = *need(&self.params.p, "params.p", kind)?;
            if !(p > 1.0 && p.is_finite()) {
                return Err(config_error("params.p", format!("must exceed 1, got {p}")));
            }
        }
        if let Some(h) = self.params.fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(config_error("params.fd_step", format!("must be positive, got {h}")));
            }
        }
        if let Some(d) = self.params.delta_couple {
            if !(d > 0.0 && d.is_finite()) {
                return Err(config_error("params.delta_couple", format!("must be positive, got {d}")));
            }
        }
        if kind == Couple {
            require_coupling_clock(&self.clock).map_err(|e| config_error("clock", e.to_string()))?;
        }
        if kind == GalerkinCheck {
            let spectrum = need(&model.spectrum, "model.spectrum", kind)?.build().map_err(|e| located("model.spectrum", e))?;
            let dims = need(&self.params.dims, "params.dims", kind)?;
            if dims.len() < 2 {
                return Err(config_error("params.dims", "need at least two truncation levels"));
            }
            if let Some(&n) = dims.iter().find(|&&n| n == 0 || n > spectrum.n()) {
                return Err(config_error("params.dims", format!("{n} is outside 1..={}", spectrum.n())));
            }
            if let Some(DiffusionSpec::Dense { .. }) = model.diffusion {
                return Err(config_error("model.diffusion", "only mode-diagonal σ is supported"));
            }
            if model.drift.is_some() || model.dim.is_some() {
                return Err(config_error("model", "a Galerkin model takes `spectrum` and `nonlinearity`, not `drift` or `dim`"));
            }
            let f = Observable::from(self.observable.as_ref().expect("checked"));
            let m = f
                .cylinder_dim()
                .ok_or_else(|| config_error("observable", "must be a cylinder function"))?;
            let min_dim = *dims.iter().min().expect("nonempty");
            if m > min_dim {
                return Err(config_error("observable", format!("reads {m} coordinates, more than the smallest truncation {min_dim}")));
            }
            let y = points.y.as_ref().expect("checked");
            if points.x.len() > min_dim || points.x.len() != y.len() {
                return Err(config_error("points", format!("x and y must have equal length at most {min_dim}")));
            }
            return Ok(());
        }
        if model.spectrum.is_some() || model.nonlinearity.is_some() {
            return Err(config_error("model.spectrum", format!("Galerkin models are only used by `galerkin-check`, not `{}`", kind.name())));
        }
        let sde = self.build_sde()?;
        let dim = sde.dim();
        check_point(&points.x, "points.x", dim)?;
        if let Some(y) = &points.y {
            check_point(y, "points.y", dim)?;
        }
        if let Some(ObservableSpec::ExpA { a }) = &self.observable {
            if a.len() != dim {
                return Err(config_error("observable.a", format!("has {} entries, the model has dimension {dim}", a.len())));
            }
        }
        Ok(())
    }

    fn build_sde(&self) -> Result<SdeModel> {
        let model = self.model.as_ref().ok_or_else(|| config_error("model", "missing"))?;
        let dim = model.dim.ok_or_else(|| config_error("model.dim", "missing"))?;
        if dim == 0 {
            return Err(config_error("model.dim", "must be at least 1"));
        }
        let drift = model.drift.unwrap_or(DriftSpec::Zero).build(dim).map_err(|e| located("model.drift", e))?;
        let diffusion = model
            .diffusion
            .clone()
            .unwrap_or(DiffusionSpec::Scalar { scale: 1.0 })
            .build(dim)
            .map_err(|e| located("model.diffusion", e))?;
        let perturbation = match &model.perturbation {
            PerturbationSpec::Zero => Perturbation::Zero,
            PerturbationSpec::Linear { rate } => {
                if rate.len() != dim {
                    return Err(config_error("model.perturbation.rate", format!("has {} entries for dimension {dim}", rate.len())));
                }
                Perturbation::Linear(rate.clone())
            }
        };
        Ok(SdeModel::new(drift, diffusion)
            .map_err(|e| located("model", e))?
            .with_perturbation(perturbation)
            .with_scheme(model.scheme))
    }

    fn mc(&self, workers: Workers) -> McConfig {
        let b = self.mc.expect("validated");
        McConfig::new(b.paths, b.seed).with_workers(workers)
    }

    fn observable(&self) -> Observable {
        self.observable.as_ref().map(Observable::from).unwrap_or(Observable::Const(1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Certified,
    Violated,
    Inconclusive,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed | RunStatus::Certified => 0,
            RunStatus::Violated => 2,
            RunStatus::Inconclusive => 3,
        }
    }
}

impl From<Verdict> for RunStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Certified => RunStatus::Certified,
            Verdict::Violated => RunStatus::Violated,
            Verdict::Inconclusive => RunStatus::Inconclusive,
        }
    }
}

pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Result of one experiment, before anything is written.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub status: RunStatus,
    pub report: Value,
    pub summary: String,
    pub paths_csv: Option<Vec<u8>>,
}

impl Outcome {
    /// Report JSON without any `runtime_seconds` fields.
    pub fn deterministic_json(&self) -> String {
        let mut v = self.report.clone();
        strip_runtime(&mut v);
        serde_json::to_string_pretty(&v).expect("json values serialize")
    }
}

pub fn strip_runtime(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("runtime_seconds");
            map.values_mut().for_each(strip_runtime);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_runtime),
        _ => {}
    }
}

fn est(e: &MCEstimate) -> String {
    format!("{:.6} ± {:.2e}", e.mean, e.stderr)
}

fn report_outcome(kind: ExperimentKind, report: HarnackReport) -> Result<Outcome> {
    let mut summary = format!(
        "{} ({})\n  lhs    {}\n  rhs    {}\n  slack  {:.6}\n  z      {:.3}\n  verdict {:?}\n",
        report.inequality,
        report.form,
        est(&report.lhs),
        est(&report.rhs),
        report.slack,
        report.z_score,
        report.verdict
    );
    for n in &report.notes {
        summary.push_str(&format!("  note: {n}\n"));
    }
    let status = report.verdict.into();
    let mut value = serde_json::to_value(&report)?;
    value["experiment"] = json!(kind.name());
    Ok(Outcome {
        status,
        report: value,
        summary,
        paths_csv: None,
    })
}

/// Run a validated config.
pub fn execute(cfg: &ExperimentConfig, workers: Workers) -> Result<Outcome> {
    use ExperimentKind::*;
    let start = Instant::now();
    let kind = cfg.experiment;
    let mut outcome = match kind {
        Moments => {
            let (k, t) = (cfg.params.k.expect("validated"), cfg.params.t.expect("validated"));
            moments_outcome(&cfg.clock.bernstein, k, t)?
        }
        RateCheck => {
            let fit = stable_rate_check(&cfg.clock.bernstein, cfg.params.t_grid.as_ref().expect("validated"), &cfg.mc(workers))?;
            let z = fit.z_score();
            let status = Verdict::from_z(-z.abs()).into();
            let summary = format!(
                "rate exponent for {}\n  fitted slope {:.5} ± {:.2e}\n  expected     {:.5}\n  z            {:.3}\n",
                fit.bernstein,
                fit.fitted_slope,
                fit.slope_stderr,
                fit.expected_slope(),
                z
            );
            let report = json!({
                "experiment": kind.name(),
                "fit": fit,
                "expected_slope": fit.expected_slope(),
                "z_score": z,
                "verdict": status,
                "seed": cfg.mc(workers).seed,
            });
            Outcome {
                status,
                report,
                summary,
                paths_csv: None,
            }
        }
        GalerkinCheck => galerkin_outcome(cfg, workers)?,
        _ => {
            let model = cfg.build_sde()?;
            let grid = cfg.grid.expect("validated");
            let points = cfg.points.as_ref().expect("validated");
            let mc = cfg.mc(workers);
            let f = cfg.observable();
            let setup = || {
                CertifySetup::new(
                    points.x.clone(),
                    points.y.clone().unwrap_or_else(|| points.x.clone()),
                    cfg.clock,
                    grid.horizon,
                    grid.steps,
                    mc,
                )
            };
            match kind {
                CertifyLog => report_outcome(kind, log_harnack_certificate(&f, &model, &setup()?)?)?,
                CertifyPower => report_outcome(kind, power_harnack_certificate(&f, cfg.params.p.expect("validated"), &model, &setup()?)?)?,
                CertifyGradient => report_outcome(kind, gradient_certificate(&f, &model, &setup()?, cfg.params.fd_step.unwrap_or(DEFAULT_FD_STEP))?)?,
                CertifyCouplingBound => report_outcome(kind, coupling_property_bound(&f, &model, &setup()?)?)?,
                Simulate => simulate_outcome(cfg, &model, &f, &mc)?,
                Couple => couple_outcome(cfg, &model, &f, &mc)?,
                Moments | RateCheck | GalerkinCheck => unreachable!(),
            }
        }
    };
    if let Value::Object(map) = &mut outcome.report {
        map.insert("schema".into(), json!(SCHEMA_VERSION));
        map.insert("runtime_seconds".into(), json!(start.elapsed().as_secs_f64()));
    }
    Ok(outcome)
}

/// `E[S(t)^{-k}]` with the quadrature error and, where one exists, the
/// closed form.
pub fn moments_report(bernstein: &BernsteinFunction, k: f64, t: f64) -> Result<Value> {
    let (value, abs_error) = bernstein.inverse_moment_with_error(k, t)?;
    Ok(json!({
        "experiment": "moments",
        "bernstein": bernstein,
        "k": k,
        "t": t,
        "value": value,
        "abs_error": abs_error,
    }))
}

fn moments_outcome(bernstein: &BernsteinFunction, k: f64, t: f64) -> Result<Outcome> {
    let report = moments_report(bernstein, k, t)?;
    let summary = format!(
        "E[S(t)^-k] for {bernstein}, k = {k}, t = {t}\n  value {:.12} ± {:.1e}\n",
        report["value"].as_f64().unwrap_or(f64::NAN),
        report["abs_error"].as_f64().unwrap_or(f64::NAN)
    );
    Ok(Outcome {
        status: RunStatus::Completed,
        report,
        summary,
        paths_csv: None,
    })
}

fn simulate_outcome(cfg: &ExperimentConfig, model: &SdeModel, f: &Observable, mc: &McConfig) -> Result<Outcome> {
    let grid_block = cfg.grid.expect("validated");
    let grid = TimeGrid::uniform(grid_block.horizon, grid_block.steps)?;
    let x = &cfg.points.as_ref().expect("validated").x;
    let terminals = simulate_terminals(model, std::slice::from_ref(x), &cfg.clock, &grid, mc, tags::ROLE_LHS)?;
    let d = x.len();
    let mean: Vec<MCEstimate> = (0..d)
        .map(|j| MCEstimate::from_samples(&terminals.iter().map(|r| r[0][j]).collect::<Vec<_>>()))
        .collect();
    let fx: Vec<f64> = terminals.iter().map(|r| f.eval(&r[0])).collect();
    let pf = MCEstimate::from_samples(&fx);
    let paths_csv = if cfg.output.paths_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["path_id".to_string()];
        header.extend((1..=d).map(|j| format!("X_{j}")));
        header.push("f_XT".into());
        w.write_record(&header)?;
        for (i, r) in terminals.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(r[0].iter().map(|v| v.to_string()));
            rec.push(fx[i].to_string());
            w.write_record(&rec)?;
        }
        Some(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
    } else {
        None
    };
    let mut summary = format!("simulate: {} paths to T = {}\n", mc.paths, grid.horizon());
    for (j, m) in mean.iter().enumerate() {
        summary.push_str(&format!("  E X_T[{}] = {}\n", j + 1, est(m)));
    }
    summary.push_str(&format!("  E {}(X_T) = {}\n", f.name(), est(&pf)));
    Ok(Outcome {
        status: RunStatus::Completed,
        report: json!({
            "experiment": "simulate",
            "params": {"x": x, "T": grid.horizon(), "M": grid.steps(), "N": mc.paths, "clock": cfg.clock, "observable": f.name()},
            "terminal_mean": mean,
            "observable_mean": pf,
            "seed": mc.seed,
        }),
        summary,
        paths_csv,
    })
}

fn couple_outcome(cfg: &ExperimentConfig, model: &SdeModel, f: &Observable, mc: &McConfig) -> Result<Outcome> {
    let grid_block = cfg.grid.expect("validated");
    let grid = TimeGrid::uniform(grid_block.horizon, grid_block.steps)?;
    let points = cfg.points.as_ref().expect("validated");
    let y = points.y.clone().expect("validated");
    let mut cc = CouplingConfig::new(points.x.clone(), y.clone())?;
    if let Some(d) = cfg.params.delta_couple {
        cc = cc.with_delta(d)?;
    }
    let ens = couple_ensemble(model, &cc, f, &cfg.clock, &grid, mc)?;
    let direct = semigroup_estimate(f, &y, model, &cfg.clock, &grid, mc, tags::ROLE_DIRECT)?;
    let s = &ens.summary;
    let se = s.transfer.stderr.hypot(direct.stderr);
    let transfer_z = if se > 0.0 { (s.transfer.mean - direct.mean) / se } else { 0.0 };
    let mut csv = Vec::new();
    if cfg.output.paths_csv {
        ens.write_csv(&mut csv)?;
    }
    let summary = format!(
        "coupling: {} pairs, |x-y| = {:.4}\n  coupled by T   {:.4}\n  E R            {}\n  E R log R      {}\n  entropy target {}\n  E R f(X_T)     {}\n  P_T f(y)       {}\n  transfer z     {:.3}\n",
        mc.paths,
        cc.distance(),
        s.coupled_fraction,
        est(&s.weight),
        est(&s.entropy),
        est(&s.entropy_target),
        est(&s.transfer),
        est(&direct),
        transfer_z
    );
    Ok(Outcome {
        status: RunStatus::Completed,
        report: json!({
            "experiment": "couple",
            "params": {"x": points.x, "y": y, "T": grid.horizon(), "M": grid.steps(), "N": mc.paths, "clock": cfg.clock, "observable": f.name(), "delta_couple": cc.delta_couple},
            "summary": s,
            "direct": direct,
            "transfer_z": transfer_z,
            "seed": mc.seed,
        }),
        summary,
        paths_csv: cfg.output.paths_csv.then_some(csv),
    })
}

fn galerkin_outcome(cfg: &ExperimentConfig, workers: Workers) -> Result<Outcome> {
    use crate::galerkin::Nonlinearity;
    use crate::sde::Diffusion;
    let model = cfg.model.as_ref().expect("validated");
    let spectrum = model.spectrum.as_ref().expect("validated").build()?;
    let nonlinearity: Nonlinearity = model.nonlinearity.unwrap_or(NonlinearitySpec::Zero).into();
    let diffusion = model.diffusion.clone();
    let family = |n: usize| {
        let sigma = match &diffusion {
            None => Diffusion::identity(n),
            Some(DiffusionSpec::Scalar { scale }) => Diffusion::Diagonal(vec![*scale; n]),
            Some(DiffusionSpec::Diagonal { entries }) => {
                if entries.len() < n {
                    return Err(config_error("model.diffusion.entries", format!("need {n} entries")));
                }
                Diffusion::Diagonal(entries[..n].to_vec())
            }
            Some(DiffusionSpec::Dense { .. }) => return Err(Error::Unsupported("only mode-diagonal σ is supported".into())),
        };
        SemilinearModel::new(spectrum.truncated(n)?, nonlinearity.clone(), sigma)
    };
    let grid = cfg.grid.expect("validated");
    let points = cfg.points.as_ref().expect("validated");
    let dims = cfg.params.dims.as_ref().expect("validated");
    let r = dimension_free_check(
        family,
        dims,
        &cfg.observable(),
        &points.x,
        points.y.as_ref().expect("validated"),
        &cfg.clock,
        grid.horizon,
        grid.steps,
        &cfg.mc(workers),
    )?;
    let status = if r.reports.iter().any(|x| x.verdict == Verdict::Violated) {
        RunStatus::Violated
    } else if r.dimension_free && r.reports.iter().all(|x| x.verdict == Verdict::Certified) {
        RunStatus::Certified
    } else {
        RunStatus::Inconclusive
    };
    let mut summary = String::from("dimension-free log-Harnack check\n");
    for (n, rep) in r.dims.iter().zip(&r.reports) {
        summary.push_str(&format!("  n = {n:>4}: slack {:.6} z {:.3} {:?}\n", rep.slack, rep.z_score, rep.verdict));
    }
    summary.push_str(&format!(
        "  trend slope {:.3e} ± {:.2e}; dimension-free: {}\n",
        r.trend.slope, r.trend.slope_stderr, r.dimension_free
    ));
    for w in &r.warnings {
        summary.push_str(&format!("  warning: {w}\n"));
    }
    let mut report = serde_json::to_value(&r)?;
    report["experiment"] = json!("galerkin-check");
    report["verdict"] = json!(status);
    report["seed"] = json!(cfg.mc(workers).seed);
    Ok(Outcome {
        status,
        report,
        summary,
        paths_csv: None,
    })
}

/// Output directory for a config file.
pub fn output_dir(cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    let base = config_path.parent().unwrap_or(Path::new("."));
    match &cfg.output.dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => base.join(d),
        None => {
            let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            base.join(format!("{stem}_out"))
        }
    }
}

/// Write `report.json`, `summary.txt` and, if present, `paths.csv`.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&outcome.report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    fs::write(dir.join("summary.txt"), &outcome.summary)?;
    if let Some(csv) = &outcome.paths_csv {
        fs::write(dir.join("paths.csv"), csv)?;
    }
    Ok(())
}

/// Load, run and write one config file; returns the outcome and where it
/// was written.
pub fn run_file(path: &Path, workers: Workers) -> Result<(Outcome, PathBuf)> {
    let cfg = load_config(path)?;
    let outcome = execute(&cfg, workers)?;
    let dir = output_dir(&cfg, path);
    write_outputs(&outcome, &dir)?;
    Ok((outcome, dir))
}

/// A single config, or every `*.json` in a directory in name order.
pub fn config_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Combined exit status of a batch: errors first, then violations, then
/// inconclusive runs.
pub fn batch_exit_code(codes: &[i32]) -> i32 {
    [EXIT_RUNTIME, EXIT_CONFIG, 2, 3]
        .into_iter()
        .find(|c| codes.contains(c))
        .unwrap_or(0)
}
