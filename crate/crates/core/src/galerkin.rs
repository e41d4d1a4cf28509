//! Spectral Galerkin truncation of the semilinear equation
//! `dX = (A X + F(X)) dt + σ dW_S + dV` with `A e_i = -ρ_i e_i`.
//!
//! The truncation to the first `n` modes is an `n`-dimensional instance of
//! [`Dynamics`], stepped by exponential Euler
//! `X ← e^{-ρh} X + φ(ρh) h F(X) + σ ΔW + ΔV`, `φ(z) = (1 - e^{-z})/z`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::certify::{log_harnack_certificate, CertifySetup, HarnackReport};
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::parallel::McConfig;
use crate::pathgen::{sample_timechanged_bm, ClockLaw, ClockPath};
use crate::sde::{Diffusion, Drift, Dynamics, Perturbation, Trajectory};
use crate::stats::{weighted_line_fit, LineFit};

/// Eigenvalues `ρ_1 <= ρ_2 <= ...` of `-A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    growth: Option<f64>,
}

/// Serialized spectrum: `{"growth": "poly", "gamma": 2.0, "n": 64}` or
/// `{"growth": "explicit", "eigenvalues": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "growth", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Poly { gamma: f64, n: usize },
    Explicit { eigenvalues: Vec<f64> },
}

impl SpectrumSpec {
    pub fn build(&self) -> Result<Spectrum> {
        match self {
            SpectrumSpec::Poly { gamma, n } => Spectrum::poly(*gamma, *n),
            SpectrumSpec::Explicit { eigenvalues } => Spectrum::explicit(eigenvalues.clone()),
        }
    }
}

/// Truncated `Σ_{i<=n} ∫_0^t e^{-2ρ_i s} ds` and whether the full series
/// converges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct A1Diagnostic {
    pub partial_sum: f64,
    /// `Some(true)` iff `γ > 1` for `ρ_i = i^γ`; unknown for explicit lists.
    pub full_series_finite: Option<bool>,
    /// Bound on the neglected tail when it is finite.
    pub tail_bound: Option<f64>,
}

impl Spectrum {
    /// `ρ_i = i^γ`, `i = 1..=n`.
    pub fn poly(gamma: f64, n: usize) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("spectrum.gamma", format!("must be nonnegative, got {gamma}")));
        }
        if n == 0 {
            return Err(Error::invalid("spectrum.n", "need at least one mode"));
        }
        Ok(Self {
            eigenvalues: (1..=n).map(|i| (i as f64).powf(gamma)).collect(),
            growth: Some(gamma),
        })
    }

    pub fn explicit(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectrum.eigenvalues", "must not be empty"));
        }
        if eigenvalues.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid("spectrum.eigenvalues", "must be finite and nonnegative"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("spectrum.eigenvalues", "must be nondecreasing"));
        }
        Ok(Self { eigenvalues, growth: None })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn growth(&self) -> Option<f64> {
        self.growth
    }

    /// The first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n() {
            return Err(Error::invalid("n", format!("must lie in 1..={}", self.n())));
        }
        Ok(Self {
            eigenvalues: self.eigenvalues[..n].to_vec(),
            growth: self.growth,
        })
    }

    pub fn a1_diagnostic(&self, t: f64) -> A1Diagnostic {
        let partial_sum = self
            .eigenvalues
            .iter()
            .map(|&r| if r == 0.0 { t } else { -(-2.0 * r * t).exp_m1() / (2.0 * r) })
            .sum();
        let (full_series_finite, tail_bound) = match self.growth {
            Some(g) if g > 1.0 => {
                // Σ_{i>n} 1/(2 i^γ) <= n^{1-γ} / (2(γ-1))
                let n = self.n() as f64;
                (Some(true), Some(n.powf(1.0 - g) / (2.0 * (g - 1.0))))
            }
            Some(_) => (Some(false), None),
            None => (None, None),
        };
        A1Diagnostic {
            partial_sum,
            full_series_finite,
            tail_bound,
        }
    }
}

fn phi(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

/// The nonlinearity `F` with its Lipschitz constant `K`:
/// `|F(x) - F(y)| <= K |x - y|`.
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    /// `F(x) = -c x / (1 + |x|²)`, Lipschitz with constant `|c|`.
    Saturating { strength: f64 },
    Custom { lipschitz: f64, f: Arc<dyn Drift> },
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "Zero"),
            Nonlinearity::Saturating { strength } => write!(f, "Saturating({strength})"),
            Nonlinearity::Custom { lipschitz, .. } => write!(f, "Custom(K={lipschitz})"),
        }
    }
}

impl Nonlinearity {
    pub fn lipschitz(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Saturating { strength } => strength.abs(),
            Nonlinearity::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Nonlinearity::Zero => out.fill(0.0),
            Nonlinearity::Saturating { strength } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -strength * v / (1.0 + r2);
                }
            }
            Nonlinearity::Custom { f, .. } => f.eval(t, x, out),
        }
    }
}

/// Serialized nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Zero,
    Saturating {
        #[serde(default = "one")]
        strength: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl From<NonlinearitySpec> for Nonlinearity {
    fn from(s: NonlinearitySpec) -> Self {
        match s {
            NonlinearitySpec::Zero => Nonlinearity::Zero,
            NonlinearitySpec::Saturating { strength } => Nonlinearity::Saturating { strength },
        }
    }
}

/// The `n`-mode truncation.
#[derive(Clone, Debug)]
pub struct SemilinearModel {
    spectrum: Spectrum,
    nonlinearity: Nonlinearity,
    sigma: Diffusion,
    perturbation: Perturbation,
}

impl SemilinearModel {
    /// `sigma` must be mode-diagonal.
    pub fn new(spectrum: Spectrum, nonlinearity: Nonlinearity, sigma: Diffusion) -> Result<Self> {
        if sigma.diagonal().is_none() {
            return Err(Error::Unsupported("only mode-diagonal σ is supported".into()));
        }
        if sigma.dim() != spectrum.n() {
            return Err(Error::DimensionMismatch(format!("σ has dim {}, spectrum {}", sigma.dim(), spectrum.n())));
        }
        if let Nonlinearity::Custom { f, .. } = &nonlinearity {
            if f.dim() != spectrum.n() {
                return Err(Error::DimensionMismatch("nonlinearity dimension".into()));
            }
        }
        Ok(Self {
            spectrum,
            nonlinearity,
            sigma,
            perturbation: Perturbation::Zero,
        })
    }

    pub fn with_perturbation(mut self, v: Perturbation) -> Self {
        self.perturbation = v;
        self
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }
}

impl Dynamics for SemilinearModel {
    fn dim(&self) -> usize {
        self.spectrum.n()
    }
    fn diffusion(&self) -> &Diffusion {
        &self.sigma
    }
    fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }
    /// `A <= 0`, so the bound comes from `F` alone and does not depend on `n`.
    fn one_sided_bound(&self, _t: f64) -> f64 {
        self.nonlinearity.lipschitz()
    }

    fn deterministic_step(&self, t: f64, h: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.nonlinearity.eval(t, x, out);
        for ((o, x), &r) in out.iter_mut().zip(x).zip(&self.spectrum.eigenvalues) {
            let z = r * h;
            *o = (-z).exp() * x + phi(z) * h * *o;
        }
        Ok(())
    }
}

/// `Y_{i+1} = e^{-ρ h} Y_i + σ ΔB_S` per mode, `Y_0 = 0`.
pub fn stochastic_convolution<C: ClockPath + ?Sized, R: Rng + ?Sized>(spectrum: &Spectrum, sigma: &Diffusion, clock: &C, rng: &mut R) -> Result<Trajectory> {
    let diag = sigma
        .diagonal()
        .ok_or_else(|| Error::Unsupported("only mode-diagonal σ is supported".into()))?;
    let n = spectrum.n();
    if diag.len() != n {
        return Err(Error::DimensionMismatch("σ and spectrum".into()));
    }
    let bm = sample_timechanged_bm(clock, n, rng)?;
    let grid = clock.grid();
    let mut states = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..grid.steps() {
        let h = grid.step(i);
        let db = bm.increment(i);
        for j in 0..n {
            y[j] = (-spectrum.eigenvalues[j] * h).exp() * y[j] + diag[j] * db[j];
        }
        states.extend_from_slice(&y);
    }
    Trajectory::new(grid.clone(), n, states)
}

/// Per-dimension log-Harnack reports with the trend of the slack in `n`.
#[derive(Clone, Debug, Serialize)]
pub struct DimensionFreeReport {
    pub dims: Vec<usize>,
    pub reports: Vec<HarnackReport>,
    /// Rate constants entering each right-hand side.
    pub rhs_constants: Vec<f64>,
    pub trend: LineFit,
    /// `slope >= -3 · stderr`
    pub no_negative_trend: bool,
    pub a1: A1Diagnostic,
    /// Withheld when the (A1) series diverges.
    pub dimension_free: bool,
    pub warnings: Vec<String>,
}

/// Pad a cylinder point to `n` coordinates.
fn pad(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    out[..v.len()].copy_from_slice(v);
    out
}

/// Run the log-Harnack certificate for the truncations `family(n)`,
/// `n ∈ dims`. `x`, `y` are given in the first `m` coordinates, where `f`
/// reads only those.
#[allow(clippy::too_many_arguments)]
pub fn dimension_free_check(
    family: impl Fn(usize) -> Result<SemilinearModel>,
    dims: &[usize],
    f: &Observable,
    x: &[f64],
    y: &[f64],
    law: &ClockLaw,
    horizon: f64,
    steps: usize,
    mc: &McConfig,
) -> Result<DimensionFreeReport> {
    let m = f
        .cylinder_dim()
        .ok_or_else(|| Error::Precondition(format!("observable {} is not a cylinder function", f.name())))?;
    let min_dim = *dims.iter().min().ok_or_else(|| Error::invalid("dims", "must not be empty"))?;
    if m > min_dim || x.len() > min_dim || x.len() != y.len() {
        return Err(Error::Precondition(format!(
            "cylinder observable reads {m} coordinates and points have {}, but the smallest truncation has {min_dim}",
            x.len()
        )));
    }
    let mut reports = Vec::with_capacity(dims.len());
    let mut rhs_constants = Vec::with_capacity(dims.len());
    let mut a1 = None;
    let mut lambdas = Vec::new();
    for &n in dims {
        let model = family(n)?;
        if model.dim() != n {
            return Err(Error::DimensionMismatch(format!("family({n}) has dimension {}", model.dim())));
        }
        lambdas.push(model.inverse_bound());
        let setup = CertifySetup::new(pad(x, n), pad(y, n), *law, horizon, steps, *mc)?;
        let report = log_harnack_certificate(f, &model, &setup)?;
        rhs_constants.push(report.params["rate_constant"].as_f64().unwrap_or(0.0));
        a1 = Some(model.spectrum().a1_diagnostic(horizon));
        reports.push(report);
    }
    let a1 = a1.expect("non-empty dims");
    let xs: Vec<f64> = dims.iter().map(|&n| n as f64).collect();
    let slack: Vec<f64> = reports.iter().map(|r| r.slack).collect();
    let se: Vec<f64> = reports.iter().map(|r| r.lhs.stderr.hypot(r.rhs.stderr)).collect();
    let trend = weighted_line_fit(&xs, &slack, &se);
    let no_negative_trend = trend.slope >= -3.0 * trend.slope_stderr;
    let mut warnings = Vec::new();
    if lambdas.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
        warnings.push("‖σ^{-1}‖ grows with n; the constants are not uniform".into());
    }
    let series_ok = a1.full_series_finite != Some(false);
    if !series_ok {
        warnings.push("the (A1) series diverges for this spectrum; dimension-free label withheld".into());
    }
    Ok(DimensionFreeReport {
        dims: dims.to_vec(),
        reports,
        rhs_constants,
        trend,
        no_negative_trend,
        a1,
        dimension_free: no_negative_trend && series_ok && warnings.is_empty(),
        warnings,
    })
}
