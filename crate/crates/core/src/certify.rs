//! Statistical certificates for the log-Harnack, power-Harnack and gradient
//! inequalities, the coupling-property bound, and rate-exponent fits.
//!
//! Every report compares a left side and a right side, each an
//! [`MCEstimate`], and gives a verdict from the z-score of the slack
//! `rhs - lhs`: certified when `z >= -3`, violated when `z < -5`,
//! inconclusive in between.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bernstein::BernsteinFunction;
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::parallel::McConfig;
use crate::pathgen::{sample_increment, ClockLaw, TimeGrid};
use crate::rng::{tags, RngStream};
use crate::sde::{collect_paths, cumulative_bound, observe, simulate_terminals, Dynamics};
use crate::stats::{variance_estimate, weighted_line_fit, MCEstimate, Moments};

pub const CERTIFY_Z: f64 = -3.0;
pub const VIOLATE_Z: f64 = -5.0;
/// Points of the default geometric `t` grid for the infimum over `(0, T]`.
pub const RATE_GRID_POINTS: usize = 32;
/// Above this fraction of infinite paths an estimate is divergent.
pub const DIVERGENT_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn from_z(z: f64) -> Self {
        if z >= CERTIFY_Z {
            Verdict::Certified
        } else if z < VIOLATE_Z {
            Verdict::Violated
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Outcome of one inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub inequality: String,
    /// Which placement of `E` and `inf` the right side uses.
    pub form: String,
    pub params: Value,
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    pub slack: f64,
    pub z_score: f64,
    pub verdict: Verdict,
    pub notes: Vec<String>,
    pub runtime_seconds: f64,
    pub seed: u64,
}

impl HarnackReport {
    pub fn new(inequality: &str, form: &str, params: Value, lhs: MCEstimate, rhs: MCEstimate, seed: u64) -> Self {
        let slack = rhs.mean - lhs.mean;
        let se = lhs.stderr.hypot(rhs.stderr);
        let z_score = if se > 0.0 {
            slack / se
        } else if slack >= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        let verdict = if slack.is_nan() { Verdict::Inconclusive } else { Verdict::from_z(z_score) };
        Self {
            inequality: inequality.into(),
            form: form.into(),
            params,
            lhs,
            rhs,
            slack,
            z_score,
            verdict,
            notes: Vec::new(),
            runtime_seconds: 0.0,
            seed,
        }
    }

    /// Downgrade to inconclusive (never upgrades a violation).
    pub fn inconclusive(mut self, note: impl Into<String>) -> Self {
        if self.verdict == Verdict::Certified {
            self.verdict = Verdict::Inconclusive;
        }
        self.notes.push(note.into());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    fn timed(mut self, start: Instant) -> Self {
        self.runtime_seconds = start.elapsed().as_secs_f64();
        self
    }
}

/// Geometric grid of `RATE_GRID_POINTS` points on `[T/1000, T]`.
pub fn default_rate_grid(horizon: f64) -> Vec<f64> {
    let n = RATE_GRID_POINTS;
    let lo = (horizon / 1000.0).ln();
    let hi = horizon.ln();
    let mut g: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
    g[n - 1] = horizon;
    g
}

/// Settings of the rate-constant estimate: the time grid the Stieltjes sums
/// run on and the `t` values over which the infimum is taken.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSetup {
    pub grid: TimeGrid,
    pub t_grid: Vec<f64>,
    indices: Vec<usize>,
}

impl RateSetup {
    /// `steps` uniform steps on `[0, T]` merged with `t_grid`.
    pub fn new(horizon: f64, steps: usize, t_grid: Vec<f64>) -> Result<Self> {
        if t_grid.is_empty() {
            return Err(Error::invalid("t_grid", "must not be empty"));
        }
        if let Some(t) = t_grid.iter().find(|&&t| !(t > 0.0 && t <= horizon * (1.0 + 1e-12))) {
            return Err(Error::invalid("t_grid", format!("{t} is outside (0, {horizon}]")));
        }
        let grid = TimeGrid::uniform_with_points(horizon, steps, &t_grid)?;
        let indices = t_grid.iter().map(|&t| grid.index_at_or_before(t)).collect();
        Ok(Self { grid, t_grid, indices })
    }

    pub fn with_default_grid(horizon: f64, steps: usize) -> Result<Self> {
        Self::new(horizon, steps, default_rate_grid(horizon))
    }
}

/// `E[λ_t² / ∫_0^t e^{-2K} dS]` per `t` and its infimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateConstant {
    pub t_grid: Vec<f64>,
    pub per_t: Vec<MCEstimate>,
    /// Fraction of paths with zero clock mass on `(0, t]`.
    pub infinite_fraction: Vec<f64>,
    pub inf_index: usize,
    pub infimum: MCEstimate,
}

impl RateConstant {
    pub fn divergent(&self, i: usize) -> bool {
        self.infinite_fraction[i] > DIVERGENT_FRACTION
    }
}

/// `∫_0^{t_i} e^{-2K(s)} dS(s)` at every grid point, by left-point
/// Stieltjes sums on a fresh draw of `S`.
fn stieltjes_sums(bernstein: &BernsteinFunction, grid: &TimeGrid, cum_k: &[f64], stream: RngStream) -> Result<Vec<f64>> {
    let mut rng = stream.child(tags::CLOCK).rng();
    let t = grid.times();
    let mut out = vec![0.0; t.len()];
    for i in 0..t.len() - 1 {
        let ds = sample_increment(bernstein, t[i + 1] - t[i], &mut rng)?;
        out[i + 1] = out[i] + (-2.0 * cum_k[i]).exp() * ds;
    }
    Ok(out)
}

fn estimate_with_infinities(values: &[f64]) -> (MCEstimate, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let frac = 1.0 - finite.len() as f64 / values.len() as f64;
    if frac > 0.0 {
        let m = Moments::from_samples(&finite).estimate();
        (
            MCEstimate {
                mean: f64::INFINITY,
                stderr: f64::INFINITY,
                n: m.n,
            },
            frac,
        )
    } else {
        (MCEstimate::from_samples(values), 0.0)
    }
}

/// Rate constant `inf_t E[λ² / ∫_0^t e^{-2K(s)} dS(s)]` of the log-Harnack
/// and gradient inequalities (infimum outside the expectation).
pub fn harnack_rate_constant(dynamics: &dyn Dynamics, bernstein: &BernsteinFunction, setup: &RateSetup, mc: &McConfig) -> Result<RateConstant> {
    bernstein.validate()?;
    let lambda = dynamics.inverse_bound();
    if !lambda.is_finite() {
        return Err(Error::Precondition("σ^{-1} must be bounded".into()));
    }
    let cum_k = cumulative_bound(|t| dynamics.one_sided_bound(t), &setup.grid);
    let rows = collect_paths(mc.workers.map(mc.paths, |i| {
        let stream = RngStream::new(mc.seed, i as u64, 0).in_role(tags::ROLE_RATE);
        let sums = stieltjes_sums(bernstein, &setup.grid, &cum_k, stream)?;
        Ok(setup
            .indices
            .iter()
            .map(|&j| if sums[j] > 0.0 { lambda * lambda / sums[j] } else { f64::INFINITY })
            .collect::<Vec<f64>>())
    }))?;
    let mut per_t = Vec::with_capacity(setup.t_grid.len());
    let mut infinite_fraction = Vec::with_capacity(setup.t_grid.len());
    for k in 0..setup.t_grid.len() {
        let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let (e, frac) = estimate_with_infinities(&col);
        per_t.push(e);
        infinite_fraction.push(frac);
    }
    let inf_index = (0..per_t.len())
        .min_by(|&a, &b| per_t[a].mean.total_cmp(&per_t[b].mean))
        .expect("non-empty t grid");
    Ok(RateConstant {
        t_grid: setup.t_grid.clone(),
        infimum: per_t[inf_index],
        per_t,
        infinite_fraction,
        inf_index,
    })
}

/// `E inf_t exp[p λ² |x-y|² / (2 (p-1)² ∫_0^t e^{-2K} dS)]`, the power-Harnack
/// factor (expectation outside the infimum). Returns the estimate and the
/// fraction of paths whose exponent overflowed.
pub fn power_rate_factor(dynamics: &dyn Dynamics, bernstein: &BernsteinFunction, setup: &RateSetup, p: f64, distance: f64, mc: &McConfig) -> Result<(MCEstimate, f64)> {
    if !(p > 1.0) {
        return Err(Error::invalid("p", format!("must exceed 1, got {p}")));
    }
    let lambda = dynamics.inverse_bound();
    let c = p * lambda * lambda * distance * distance / (2.0 * (p - 1.0).powi(2));
    if c == 0.0 {
        return Ok((MCEstimate::exact(1.0), 0.0));
    }
    let cum_k = cumulative_bound(|t| dynamics.one_sided_bound(t), &setup.grid);
    let values = collect_paths(mc.workers.map(mc.paths, |i| {
        let stream = RngStream::new(mc.seed, i as u64, 0).in_role(tags::ROLE_RATE);
        let sums = stieltjes_sums(bernstein, &setup.grid, &cum_k, stream)?;
        // smallest exponent over t, kept in log space until the end
        let exponent = setup
            .indices
            .iter()
            .map(|&j| if sums[j] > 0.0 { c / sums[j] } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        Ok(if exponent < 700.0 { exponent.exp() } else { f64::INFINITY })
    }))?;
    Ok(estimate_with_infinities(&values))
}

/// Start points and horizon shared by the certificates.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifySetup {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub law: ClockLaw,
    pub grid: TimeGrid,
    pub rate: RateSetup,
    pub mc: McConfig,
}

impl CertifySetup {
    /// Uniform grid with `steps` steps; rate sums use the same resolution.
    pub fn new(x: Vec<f64>, y: Vec<f64>, law: ClockLaw, horizon: f64, steps: usize, mc: McConfig) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch("x and y".into()));
        }
        law.validate()?;
        Ok(Self {
            x,
            y,
            law,
            grid: TimeGrid::uniform(horizon, steps)?,
            rate: RateSetup::with_default_grid(horizon, steps)?,
            mc,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn distance(&self) -> f64 {
        self.x.iter().zip(&self.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    fn params(&self, f: &Observable) -> Value {
        json!({
            "x": self.x,
            "y": self.y,
            "T": self.horizon(),
            "M": self.grid.steps(),
            "N": self.mc.paths,
            "clock": self.law,
            "observable": f.name(),
        })
    }

    fn check_dim(&self, dynamics: &dyn Dynamics) -> Result<()> {
        if self.x.len() != dynamics.dim() {
            return Err(Error::DimensionMismatch(format!("points have dim {}, model {}", self.x.len(), dynamics.dim())));
        }
        Ok(())
    }
}

fn positive_samples(f: &Observable, samples: &[f64]) -> Result<()> {
    for &v in samples {
        f.require_positive(v)?;
    }
    Ok(())
}

/// `log` of a positive mean with first-order delta-method error; the
/// second-order bias `se²/(2m²)` is added to the error, not the mean.
fn log_of(e: &MCEstimate) -> MCEstimate {
    let rel = e.stderr / e.mean;
    MCEstimate {
        mean: e.mean.ln(),
        stderr: rel + 0.5 * rel * rel,
        n: e.n,
    }
}

/// Log-Harnack check:
/// `P_T log f(y) <= log P_T f(x) + |x-y|²/2 · inf_t E[λ²/∫_0^t e^{-2K} dS]`.
pub fn log_harnack_certificate(f: &Observable, dynamics: &dyn Dynamics, setup: &CertifySetup) -> Result<HarnackReport> {
    let start = Instant::now();
    setup.check_dim(dynamics)?;
    let mc = &setup.mc;
    let at_y = observe(f, &setup.y, dynamics, &setup.law, &setup.grid, mc, tags::ROLE_LHS)?;
    positive_samples(f, &at_y)?;
    let logs: Vec<f64> = at_y.iter().map(|v| v.ln()).collect();
    let lhs = MCEstimate::from_samples(&logs);
    let at_x = observe(f, &setup.x, dynamics, &setup.law, &setup.grid, mc, tags::ROLE_RHS)?;
    positive_samples(f, &at_x)?;
    let log_pf = log_of(&MCEstimate::from_samples(&at_x));
    let half_d2 = 0.5 * setup.distance().powi(2);
    let mut rate_constant = None;
    let (rhs, note) = if half_d2 == 0.0 {
        (log_pf, "x = y: Jensen case, no rate constant needed".to_string())
    } else {
        let rate = harnack_rate_constant(dynamics, &setup.law.bernstein, &setup.rate, mc)?;
        let c = rate.infimum;
        rate_constant = Some(c.mean);
        (
            MCEstimate {
                mean: log_pf.mean + half_d2 * c.mean,
                stderr: log_pf.stderr.hypot(half_d2 * c.stderr),
                n: lhs.n,
            },
            format!("rate constant {:.6} ± {:.2e} at t = {}", c.mean, c.stderr, rate.t_grid[rate.inf_index]),
        )
    };
    let mut params = setup.params(f);
    params["rhs_form"] = json!("inf_t E[lambda^2 / int e^{-2K} dS]");
    params["rate_constant"] = json!(rate_constant);
    Ok(HarnackReport::new("log_harnack", "inf_outside_expectation", params, lhs, rhs, mc.seed).note(note).timed(start))
}

/// `(P_T f(y))^p <= P_T f^p(x) · (E inf_t exp[p λ² |x-y|² / (2(p-1)² ∫ e^{-2K} dS)])^{p-1}`.
pub fn power_harnack_certificate(f: &Observable, p: f64, dynamics: &dyn Dynamics, setup: &CertifySetup) -> Result<HarnackReport> {
    let start = Instant::now();
    setup.check_dim(dynamics)?;
    if !(p > 1.0) {
        return Err(Error::invalid("p", format!("must exceed 1, got {p}")));
    }
    let mc = &setup.mc;
    let at_y = observe(f, &setup.y, dynamics, &setup.law, &setup.grid, mc, tags::ROLE_LHS)?;
    positive_samples(f, &at_y)?;
    let pf_y = MCEstimate::from_samples(&at_y);
    let lhs = pf_y.map(|m| m.powf(p), |m| p * m.powf(p - 1.0));
    let at_x = observe(f, &setup.x, dynamics, &setup.law, &setup.grid, mc, tags::ROLE_RHS)?;
    positive_samples(f, &at_x)?;
    let fp: Vec<f64> = at_x.iter().map(|v| v.powf(p)).collect();
    let pfp_x = MCEstimate::from_samples(&fp);
    let (factor, infinite) = power_rate_factor(dynamics, &setup.law.bernstein, &setup.rate, p, setup.distance(), mc)?;
    let mut params = setup.params(f);
    params["p"] = json!(p);
    params["rhs_form"] = json!("E inf_t exp[p lambda^2 |x-y|^2 / (2 (p-1)^2 int e^{-2K} dS)]");
    if infinite > 0.0 {
        let rhs = MCEstimate {
            mean: f64::INFINITY,
            stderr: f64::INFINITY,
            n: pfp_x.n,
        };
        let report = HarnackReport::new("power_harnack", "expectation_outside_inf", params, lhs, rhs, mc.seed);
        let why = if infinite > DIVERGENT_FRACTION { "divergent" } else { "infinite on some paths" };
        return Ok(report
            .inconclusive(format!(
                "right-hand factor {why}: {:.3}% of paths overflow (E exp(c/S) may be infinite; needs theta > 1/2)",
                100.0 * infinite
            ))
            .timed(start));
    }
    let value = pfp_x.mean * factor.mean.powf(p - 1.0);
    let rel = (pfp_x.stderr / pfp_x.mean).hypot((p - 1.0) * factor.stderr / factor.mean);
    let rhs = MCEstimate {
        mean: value,
        stderr: value * rel,
        n: pfp_x.n,
    };
    Ok(HarnackReport::new("power_harnack", "expectation_outside_inf", params, lhs, rhs, mc.seed)
        .note(format!("factor {:.6} ± {:.2e}", factor.mean, factor.stderr))
        .timed(start))
}

/// `|∇P_T f|²(x) <= (P_T f²(x) - (P_T f(x))²) · inf_t E[λ²/∫ e^{-2K} dS]`.
///
/// The gradient is the central difference along each axis with common
/// random numbers across the stencil; the left side is its squared
/// Euclidean norm.
pub fn gradient_certificate(f: &Observable, dynamics: &dyn Dynamics, setup: &CertifySetup, fd_step: f64) -> Result<HarnackReport> {
    let start = Instant::now();
    setup.check_dim(dynamics)?;
    if !(fd_step > 0.0) {
        return Err(Error::invalid("fd_step", "must be positive"));
    }
    let mc = &setup.mc;
    let d = setup.x.len();
    let mut starts = Vec::with_capacity(2 * d);
    for j in 0..d {
        for s in [1.0, -1.0] {
            let mut z = setup.x.clone();
            z[j] += s * fd_step;
            starts.push(z);
        }
    }
    let terminals = simulate_terminals(dynamics, &starts, &setup.law, &setup.grid, mc, tags::ROLE_LHS)?;
    let mut grads = Vec::with_capacity(d);
    for j in 0..d {
        let diffs: Vec<f64> = terminals
            .iter()
            .map(|r| (f.eval(&r[2 * j]) - f.eval(&r[2 * j + 1])) / (2.0 * fd_step))
            .collect();
        grads.push(MCEstimate::from_samples(&diffs));
    }
    let norm2: f64 = grads.iter().map(|g| g.mean * g.mean).sum();
    let lin: f64 = grads.iter().map(|g| (2.0 * g.mean * g.stderr).powi(2)).sum::<f64>().sqrt();
    // E[ĝ²] = g² + se²: the bias goes into the error
    let bias: f64 = grads.iter().map(|g| g.stderr * g.stderr).sum();
    let lhs = MCEstimate {
        mean: norm2,
        stderr: lin + bias,
        n: mc.paths as u64,
    };
    let at_x = observe(f, &setup.x, dynamics, &setup.law, &setup.grid, mc, tags::ROLE_VARIANCE)?;
    let var = variance_estimate(&at_x);
    let rate = harnack_rate_constant(dynamics, &setup.law.bernstein, &setup.rate, mc)?;
    let c = rate.infimum;
    let rhs = MCEstimate {
        mean: var.mean * c.mean,
        stderr: (c.mean * var.stderr).hypot(var.mean * c.stderr),
        n: var.n,
    };
    let mut params = setup.params(f);
    params["fd_step"] = json!(fd_step);
    params["gradient"] = json!(grads.iter().map(|g| g.mean).collect::<Vec<_>>());
    let report = HarnackReport::new("gradient", "inf_outside_expectation", params, lhs, rhs, mc.seed)
        .note(format!("variance {:.6} ± {:.2e}, rate constant {:.6} ± {:.2e}", var.mean, var.stderr, c.mean, c.stderr));
    let noisy = grads.iter().all(|g| g.stderr > g.mean.abs()) && grads.iter().any(|g| g.stderr > 0.0);
    let report = if noisy {
        report.inconclusive("finite-difference noise exceeds the difference; raise N or fd_step")
    } else {
        report
    };
    Ok(report.timed(start))
}

/// `|P_T f(x) - P_T f(y)| <= ‖λ‖ ‖f‖ |x-y| sqrt(E 1/S(T))`, valid for `K <= 0`.
pub fn coupling_property_bound(f: &Observable, dynamics: &dyn Dynamics, setup: &CertifySetup) -> Result<HarnackReport> {
    let start = Instant::now();
    setup.check_dim(dynamics)?;
    if let Some(&t) = setup.grid.times().iter().find(|&&t| dynamics.one_sided_bound(t) > 0.0) {
        return Err(Error::Precondition(format!("the coupling-property bound needs K <= 0, but K({t}) > 0")));
    }
    let lambda = dynamics.inverse_bound();
    if !lambda.is_finite() {
        return Err(Error::Precondition("σ^{-1} must be bounded".into()));
    }
    let sup = f
        .sup_norm()
        .ok_or_else(|| Error::Precondition(format!("observable {} must be bounded", f.name())))?;
    if f.lower_bound().is_none_or(|lb| lb < 0.0) {
        return Err(Error::Precondition(format!("observable {} must be nonnegative", f.name())));
    }
    let mc = &setup.mc;
    let terminals = simulate_terminals(dynamics, &[setup.x.clone(), setup.y.clone()], &setup.law, &setup.grid, mc, tags::ROLE_LHS)?;
    let diffs: Vec<f64> = terminals.iter().map(|r| f.eval(&r[0]) - f.eval(&r[1])).collect();
    let diff = MCEstimate::from_samples(&diffs);
    let lhs = MCEstimate {
        mean: diff.mean.abs(),
        ..diff
    };
    let moment = setup.law.bernstein.inverse_moment(1.0, setup.horizon())?;
    let rhs = MCEstimate::exact(lambda * sup * setup.distance() * moment.sqrt());
    let params = setup.params(f);
    Ok(HarnackReport::new("coupling_property", "deterministic_rhs", params, lhs, rhs, mc.seed)
        .note(format!("E 1/S(T) = {moment:.9}"))
        .timed(start))
}

/// Largest ratio `|X_T(x) - X_T(y)| / (e^{K(T)} |x - y|)` over paths driven
/// by common noise; at most 1 (up to discretization) under the one-sided
/// bound.
pub fn synchronous_contraction(dynamics: &dyn Dynamics, setup: &CertifySetup) -> Result<f64> {
    let cum_k = cumulative_bound(|t| dynamics.one_sided_bound(t), &setup.grid);
    let scale = cum_k[cum_k.len() - 1].exp() * setup.distance();
    let terminals = simulate_terminals(dynamics, &[setup.x.clone(), setup.y.clone()], &setup.law, &setup.grid, &setup.mc, tags::ROLE_COUPLING)?;
    Ok(terminals
        .iter()
        .map(|r| r[0].iter().zip(&r[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / scale)
        .fold(0.0, f64::max))
}

/// Measured `E[1/S(T)]` over a grid of horizons with the log-log fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub bernstein: BernsteinFunction,
    /// Growth exponent `θ` (1 for the linear clock).
    pub theta: f64,
    pub t_grid: Vec<f64>,
    pub measured: Vec<MCEstimate>,
    pub fitted_slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

impl RateFit {
    pub fn expected_slope(&self) -> f64 {
        -1.0 / self.theta
    }

    /// `|slope + 1/θ| / slope_stderr` (0 when both are exact).
    pub fn z_score(&self) -> f64 {
        let dev = self.fitted_slope - self.expected_slope();
        if self.slope_stderr > 0.0 {
            dev / self.slope_stderr
        } else if dev.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY.copysign(dev)
        }
    }
}

/// Fit the small-time exponent of the rate constant with `K ≡ 0`, `λ ≡ 1`,
/// where `∫_0^T dS = S(T)`: slope of `log E[1/S(T)]` against `log T`.
pub fn stable_rate_check(bernstein: &BernsteinFunction, t_grid: &[f64], mc: &McConfig) -> Result<RateFit> {
    bernstein.validate()?;
    if t_grid.len() < 4 {
        return Err(Error::invalid("T_grid", format!("need at least 4 horizons, got {}", t_grid.len())));
    }
    if let Some(t) = t_grid.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::invalid("T_grid", format!("{t} is not a positive horizon")));
    }
    let theta = match bernstein {
        BernsteinFunction::Gamma { .. } => {
            return Err(Error::Unsupported("the gamma clock has no power-law exponent".into()));
        }
        b => b.growth_exponent(),
    };
    let mut measured = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let samples = collect_paths(mc.workers.map(mc.paths, |i| {
            let stream = RngStream::new(mc.seed, i as u64, k as u64).in_role(tags::ROLE_RATE);
            let s = sample_increment(bernstein, t, &mut stream.child(tags::CLOCK).rng())?;
            Ok(1.0 / s)
        }))?;
        let (e, frac) = estimate_with_infinities(&samples);
        if frac > 0.0 {
            return Err(Error::InfiniteMoment {
                bernstein: bernstein.to_string(),
                k: 1.0,
                t,
            });
        }
        measured.push(e);
    }
    let x: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = measured.iter().map(|m| m.mean.ln()).collect();
    let se: Vec<f64> = measured.iter().map(|m| m.stderr / m.mean).collect();
    let fit = weighted_line_fit(&x, &y, &se);
    Ok(RateFit {
        bernstein: *bernstein,
        theta,
        t_grid: t_grid.to_vec(),
        measured,
        fitted_slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        intercept: fit.intercept,
    })
}
