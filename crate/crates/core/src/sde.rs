//! Models and integrators for
//! `X_t = X_0 + ∫ b_s(X_s) ds + ∫ σ_s dW_{S(s)} + V_t`.
//!
//! Model evaluators are pure and `Send + Sync`; one path is integrated on a
//! single thread and replication across paths is the parallel unit.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::parallel::McConfig;
use crate::pathgen::{sample_timechanged_bm, ClockLaw, ClockPath, ClockSample, TimeChangedBmPath, TimeGrid};
use crate::rng::{tags, RngStream};
use crate::stats::MCEstimate;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-12;

/// Drift `b_t(x)` with its one-sided Lipschitz bound `K_t`:
/// `<b_t(x) - b_t(y), x - y> <= K_t |x - y|^2`.
pub trait Drift: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn one_sided_bound(&self, t: f64) -> f64;

    /// Global Lipschitz constant, if the drift has one.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// Row-major Jacobian; central differences unless overridden.
    fn jacobian(&self, t: f64, x: &[f64], jac: &mut [f64]) {
        let d = self.dim();
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for j in 0..d {
            let h = 1e-6 * x[j].abs().max(1.0);
            xp[j] = x[j] + h;
            self.eval(t, &xp, &mut fp);
            xp[j] = x[j] - h;
            self.eval(t, &xp, &mut fm);
            xp[j] = x[j];
            for i in 0..d {
                jac[i * d + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }
}

/// `b = 0`, `K = 0`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroDrift {
    pub dim: usize,
}

impl Drift for ZeroDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn one_sided_bound(&self, _t: f64) -> f64 {
        0.0
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
    fn jacobian(&self, _t: f64, _x: &[f64], jac: &mut [f64]) {
        jac.fill(0.0);
    }
}

/// Ornstein–Uhlenbeck drift `b(x) = -a x`, `K = -a`.
#[derive(Clone, Copy, Debug)]
pub struct OuDrift {
    pub dim: usize,
    pub a: f64,
}

impl Drift for OuDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(x) {
            *o = -self.a * x;
        }
    }
    fn one_sided_bound(&self, _t: f64) -> f64 {
        -self.a
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.a.abs())
    }
    fn jacobian(&self, _t: f64, _x: &[f64], jac: &mut [f64]) {
        jac.fill(0.0);
        for i in 0..self.dim {
            jac[i * self.dim + i] = -self.a;
        }
    }
}

/// `b(x) = x - x^3` coordinatewise, `K = 1`.
#[derive(Clone, Copy, Debug)]
pub struct DoubleWellDrift {
    pub dim: usize,
}

impl Drift for DoubleWellDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(x) {
            *o = x - x * x * x;
        }
    }
    fn one_sided_bound(&self, _t: f64) -> f64 {
        1.0
    }
    fn jacobian(&self, _t: f64, x: &[f64], jac: &mut [f64]) {
        jac.fill(0.0);
        for i in 0..self.dim {
            jac[i * self.dim + i] = 1.0 - 3.0 * x[i] * x[i];
        }
    }
}

/// Planar `b(x) = -c x + ω J x` with `J` the rotation generator, `K = -c`.
#[derive(Clone, Copy, Debug)]
pub struct RotatingDrift {
    pub contraction: f64,
    pub omega: f64,
}

impl Drift for RotatingDrift {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = -self.contraction * x[0] - self.omega * x[1];
        out[1] = self.omega * x[0] - self.contraction * x[1];
    }
    fn one_sided_bound(&self, _t: f64) -> f64 {
        -self.contraction
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.contraction.hypot(self.omega))
    }
    fn jacobian(&self, _t: f64, _x: &[f64], jac: &mut [f64]) {
        jac.copy_from_slice(&[-self.contraction, -self.omega, self.omega, -self.contraction]);
    }
}

/// Dissipative `b(x) = -x^3` coordinatewise, `K = 0`; not globally Lipschitz.
#[derive(Clone, Copy, Debug)]
pub struct CubicDrift {
    pub dim: usize,
}

impl Drift for CubicDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(x) {
            *o = -x * x * x;
        }
    }
    fn one_sided_bound(&self, _t: f64) -> f64 {
        0.0
    }
    fn jacobian(&self, _t: f64, x: &[f64], jac: &mut [f64]) {
        jac.fill(0.0);
        for i in 0..self.dim {
            jac[i * self.dim + i] = -3.0 * x[i] * x[i];
        }
    }
}

type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Caller-supplied drift with a constant bound `K`.
#[derive(Clone)]
pub struct FnDrift {
    pub dim: usize,
    pub k: f64,
    pub f: DriftFn,
}

impl Drift for FnDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }
    fn one_sided_bound(&self, _t: f64) -> f64 {
        self.k
    }
}

/// Built-in drifts addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero,
    Ou {
        #[serde(default = "default_ou_rate")]
        a: f64,
    },
    DoubleWell,
    Rotating {
        #[serde(default = "default_contraction")]
        contraction: f64,
        #[serde(default = "default_omega")]
        omega: f64,
    },
}

fn default_ou_rate() -> f64 {
    1.0
}
fn default_contraction() -> f64 {
    1.0
}
fn default_omega() -> f64 {
    0.5
}

impl DriftSpec {
    pub fn build(&self, dim: usize) -> Result<Arc<dyn Drift>> {
        Ok(match *self {
            DriftSpec::Zero => Arc::new(ZeroDrift { dim }),
            DriftSpec::Ou { a } => Arc::new(OuDrift { dim, a }),
            DriftSpec::DoubleWell => Arc::new(DoubleWellDrift { dim }),
            DriftSpec::Rotating { contraction, omega } => {
                if dim != 2 {
                    return Err(Error::invalid("model.dim", "the rotating drift is planar (dim = 2)"));
                }
                Arc::new(RotatingDrift { contraction, omega })
            }
        })
    }
}

/// Empirical check of the one-sided bound on random probe pairs; returns the
/// largest violation `<b(x)-b(y), x-y> - K |x-y|^2` found (<= 0 is good).
pub fn probe_one_sided_bound(drift: &dyn Drift, t: f64, probes: usize, radius: f64, rng: &mut dyn RngCore) -> f64 {
    use rand::Rng;
    let d = drift.dim();
    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    let k = drift.one_sided_bound(t);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..probes {
        let x: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        drift.eval(t, &x, &mut bx);
        drift.eval(t, &y, &mut by);
        let mut inner = 0.0;
        let mut dist2 = 0.0;
        for i in 0..d {
            inner += (bx[i] - by[i]) * (x[i] - y[i]);
            dist2 += (x[i] - y[i]).powi(2);
        }
        worst = worst.max(inner - k * dist2);
    }
    worst
}

/// Solve `z - c b_t(z) = rhs` by damped Newton.
pub fn solve_resolvent(drift: &dyn Drift, t: f64, c: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let d = drift.dim();
    let mut z = rhs.to_vec();
    let mut bz = vec![0.0; d];
    let mut jac = vec![0.0; d * d];
    let residual = |z: &[f64], bz: &mut [f64]| -> Vec<f64> {
        drift.eval(t, z, bz);
        z.iter().zip(bz.iter()).zip(rhs).map(|((z, b), r)| z - c * b - r).collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(rhs).max(1.0);
    let mut res = residual(&z, &mut bz);
    let mut rn = norm(&res);
    for _ in 0..NEWTON_MAX_ITER {
        if rn <= NEWTON_TOL * scale {
            return Ok(z);
        }
        drift.jacobian(t, &z, &mut jac);
        let mut m = DMatrix::from_row_slice(d, d, &jac) * (-c);
        for i in 0..d {
            m[(i, i)] += 1.0;
        }
        let step = m
            .lu()
            .solve(&DVector::from_column_slice(&res))
            .ok_or(Error::NewtonDivergence {
                residual: rn,
                iterations: 0,
            })?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(z, s)| z - lambda * s).collect();
            let tres = residual(&trial, &mut bz);
            let tn = norm(&tres);
            if tn < rn || lambda < 1e-10 {
                z = trial;
                res = tres;
                rn = tn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if rn <= NEWTON_TOL * scale {
        Ok(z)
    } else {
        Err(Error::NewtonDivergence {
            residual: rn,
            iterations: NEWTON_MAX_ITER,
        })
    }
}

/// Yoshida approximation `n ((I - b/n)^{-1}(x) - x)` of a dissipative drift.
pub fn yoshida_drift(drift: &dyn Drift, n: f64, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    if !(n > 0.0) {
        return Err(Error::invalid("n", "must be positive"));
    }
    let y = solve_resolvent(drift, t, 1.0 / n, x)?;
    Ok(y.iter().zip(x).map(|(y, x)| n * (y - x)).collect())
}

/// `b^{(n)} = (b - K·id)^{(n)} + K·id`: globally Lipschitz, same `K`.
pub struct YoshidaDrift {
    inner: Arc<dyn Drift>,
    n: f64,
}

struct Dissipative<'a>(&'a dyn Drift);

impl Drift for Dissipative<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.0.eval(t, x, out);
        let k = self.0.one_sided_bound(t);
        for (o, x) in out.iter_mut().zip(x) {
            *o -= k * x;
        }
    }
    fn one_sided_bound(&self, _t: f64) -> f64 {
        0.0
    }
    fn jacobian(&self, t: f64, x: &[f64], jac: &mut [f64]) {
        self.0.jacobian(t, x, jac);
        let d = self.dim();
        let k = self.0.one_sided_bound(t);
        for i in 0..d {
            jac[i * d + i] -= k;
        }
    }
}

impl YoshidaDrift {
    pub fn new(inner: Arc<dyn Drift>, n: f64) -> Self {
        Self { inner, n }
    }
}

impl Drift for YoshidaDrift {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let k = self.inner.one_sided_bound(t);
        match yoshida_drift(&Dissipative(self.inner.as_ref()), self.n, t, x) {
            Ok(v) => {
                for ((o, v), x) in out.iter_mut().zip(v).zip(x) {
                    *o = v + k * x;
                }
            }
            // surfaces as a non-finite state in the integrator
            Err(_) => out.fill(f64::NAN),
        }
    }
    fn one_sided_bound(&self, t: f64) -> f64 {
        self.inner.one_sided_bound(t)
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.n + self.inner.one_sided_bound(0.0).abs())
    }
}

/// Constant-in-time diffusion coefficient `σ` with `‖σ^{-1}‖ <= λ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Diffusion {
    /// `σ = scale · I`
    Scalar { dim: usize, scale: f64 },
    Diagonal(Vec<f64>),
    Dense {
        dim: usize,
        sigma: Vec<f64>,
        inverse: Vec<f64>,
        lambda: f64,
    },
}

impl Diffusion {
    pub fn identity(dim: usize) -> Self {
        Diffusion::Scalar { dim, scale: 1.0 }
    }

    /// Dense `σ` (row-major). Fails if `σ` is singular.
    pub fn dense(dim: usize, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!("sigma needs {} entries", dim * dim)));
        }
        let m = DMatrix::from_row_slice(dim, dim, &sigma);
        let inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("sigma", "matrix is singular"))?;
        let check = &m * &inv - DMatrix::<f64>::identity(dim, dim);
        if check.amax() > 1e-12 * m.amax().max(1.0) * inv.amax().max(1.0) {
            return Err(Error::invalid("sigma", "ill-conditioned: σσ^{-1} differs from I"));
        }
        let lambda = inv.clone().svd(false, false).singular_values.max();
        let inverse = inv.transpose().as_slice().to_vec();
        Ok(Diffusion::Dense {
            dim,
            sigma,
            inverse,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Diffusion::Scalar { dim, .. } | Diffusion::Dense { dim, .. } => *dim,
            Diffusion::Diagonal(v) => v.len(),
        }
    }

    /// `‖σ^{-1}‖` (operator norm); infinite when `σ` is singular.
    pub fn inverse_bound(&self) -> f64 {
        match self {
            Diffusion::Scalar { scale, .. } => 1.0 / scale.abs(),
            Diffusion::Diagonal(v) => v.iter().map(|s| 1.0 / s.abs()).fold(0.0, f64::max),
            Diffusion::Dense { lambda, .. } => *lambda,
        }
    }

    /// Diagonal entries when `σ` is diagonal.
    pub fn diagonal(&self) -> Option<Vec<f64>> {
        match self {
            Diffusion::Scalar { dim, scale } => Some(vec![*scale; *dim]),
            Diffusion::Diagonal(v) => Some(v.clone()),
            Diffusion::Dense { .. } => None,
        }
    }

    /// `out = σ v`
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Diffusion::Scalar { scale, .. } => {
                for (o, v) in out.iter_mut().zip(v) {
                    *o = scale * v;
                }
            }
            Diffusion::Diagonal(s) => {
                for ((o, v), s) in out.iter_mut().zip(v).zip(s) {
                    *o = s * v;
                }
            }
            Diffusion::Dense { dim, sigma, .. } => matvec(*dim, sigma, v, out),
        }
    }

    /// `out = σ^{-1} v`
    pub fn apply_inverse(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Diffusion::Scalar { scale, .. } => {
                for (o, v) in out.iter_mut().zip(v) {
                    *o = v / scale;
                }
            }
            Diffusion::Diagonal(s) => {
                for ((o, v), s) in out.iter_mut().zip(v).zip(s) {
                    *o = v / s;
                }
            }
            Diffusion::Dense { dim, inverse, .. } => matvec(*dim, inverse, v, out),
        }
    }
}

fn matvec(d: usize, m: &[f64], v: &[f64], out: &mut [f64]) {
    for i in 0..d {
        out[i] = m[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Serialized diffusion block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Scalar { scale: f64 },
    Diagonal { entries: Vec<f64> },
    Dense { rows: Vec<Vec<f64>> },
}

impl DiffusionSpec {
    pub fn build(&self, dim: usize) -> Result<Diffusion> {
        match self {
            DiffusionSpec::Scalar { scale } => Ok(Diffusion::Scalar { dim, scale: *scale }),
            DiffusionSpec::Diagonal { entries } => {
                if entries.len() != dim {
                    return Err(Error::DimensionMismatch(format!("{} diagonal entries for dim {dim}", entries.len())));
                }
                Ok(Diffusion::Diagonal(entries.clone()))
            }
            DiffusionSpec::Dense { rows } => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::DimensionMismatch(format!("sigma must be {dim}x{dim}")));
                }
                Diffusion::dense(dim, rows.concat())
            }
        }
    }
}

type PathFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&TimeGrid, &mut dyn RngCore) -> Vec<f64> + Send + Sync>;

/// The additive process `V` with `V_0 = 0`.
#[derive(Clone, Default)]
pub enum Perturbation {
    #[default]
    Zero,
    /// `V_t = rate · t`
    Linear(Vec<f64>),
    /// Deterministic closed form `t ↦ V_t`.
    Deterministic(PathFn),
    /// Caller-supplied sampler returning `(M+1) × d` values on the grid.
    Sampled(SamplerFn),
}

impl std::fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Perturbation::Zero => write!(f, "Zero"),
            Perturbation::Linear(r) => write!(f, "Linear({r:?})"),
            Perturbation::Deterministic(_) => write!(f, "Deterministic(..)"),
            Perturbation::Sampled(_) => write!(f, "Sampled(..)"),
        }
    }
}

/// `V` realized on a grid (`None` for `V ≡ 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationPath {
    dim: usize,
    values: Option<Vec<f64>>,
}

impl PerturbationPath {
    pub fn zero(dim: usize) -> Self {
        Self { dim, values: None }
    }

    pub fn from_values(grid: &TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.times().len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "perturbation needs {} values, got {}",
                grid.times().len() * dim,
                values.len()
            )));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("V", "V_0 must be 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("V", "values must be finite"));
        }
        Ok(Self {
            dim,
            values: Some(values),
        })
    }

    /// Adds `V_{t_{i+1}} - V_{t_i}` to `out`.
    #[inline]
    pub fn add_increment(&self, i: usize, out: &mut [f64]) {
        if let Some(v) = &self.values {
            let d = self.dim;
            for j in 0..d {
                out[j] += v[(i + 1) * d + j] - v[i * d + j];
            }
        }
    }
}

impl Perturbation {
    pub fn realize(&self, grid: &TimeGrid, dim: usize, rng: &mut dyn RngCore) -> Result<PerturbationPath> {
        match self {
            Perturbation::Zero => Ok(PerturbationPath::zero(dim)),
            Perturbation::Linear(rate) => {
                if rate.len() != dim {
                    return Err(Error::DimensionMismatch("perturbation rate".into()));
                }
                let values = grid.times().iter().flat_map(|&t| rate.iter().map(move |r| r * t)).collect();
                PerturbationPath::from_values(grid, dim, values)
            }
            Perturbation::Deterministic(f) => {
                let mut values = vec![0.0; grid.times().len() * dim];
                for (i, &t) in grid.times().iter().enumerate() {
                    f(t, &mut values[i * dim..(i + 1) * dim]);
                }
                PerturbationPath::from_values(grid, dim, values)
            }
            Perturbation::Sampled(sampler) => PerturbationPath::from_values(grid, dim, sampler(grid, rng)),
        }
    }
}

/// States `X_0..X_M`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, dim: usize, states: Vec<f64>) -> Result<Self> {
        if states.len() != grid.times().len() * dim {
            return Err(Error::DimensionMismatch("trajectory length".into()));
        }
        Ok(Self { grid, dim, states })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }
    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    /// CSV with columns `t, X_1..X_d`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|j| format!("X_{j}")));
        w.write_record(&header)?;
        for (i, t) in self.grid.times().iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(self.state(i).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Drift at the left endpoint.
    #[default]
    Explicit,
    /// Drift at the right endpoint, solved by Newton after adding the noise;
    /// for stiff `K ≪ 0`.
    SemiImplicit,
    /// Implicit drift step `(I - h b)^{-1} x`, then the noise. Stable under
    /// large jumps of the clock and, unlike `SemiImplicit`, usable for
    /// coupling.
    DriftImplicit,
}

/// Drift, diffusion and perturbation of one equation.
#[derive(Clone)]
pub struct SdeModel {
    pub drift: Arc<dyn Drift>,
    pub diffusion: Diffusion,
    pub perturbation: Perturbation,
    pub scheme: Scheme,
}

impl SdeModel {
    pub fn new(drift: Arc<dyn Drift>, diffusion: Diffusion) -> Result<Self> {
        if drift.dim() != diffusion.dim() {
            return Err(Error::DimensionMismatch(format!(
                "drift has dim {}, diffusion {}",
                drift.dim(),
                diffusion.dim()
            )));
        }
        Ok(Self {
            drift,
            diffusion,
            perturbation: Perturbation::Zero,
            scheme: Scheme::Explicit,
        })
    }

    pub fn with_perturbation(mut self, v: Perturbation) -> Self {
        self.perturbation = v;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }
}

fn check_inputs(x0: &[f64], dim: usize, bm: &TimeChangedBmPath) -> Result<()> {
    if x0.len() != dim || bm.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "x0 has dim {}, model {dim}, noise {}",
            x0.len(),
            bm.dim()
        )));
    }
    Ok(())
}

/// `K(t_i) = ∫_0^{t_i} K_s ds` by the cumulative trapezoid rule.
pub fn cumulative_bound(k: impl Fn(f64) -> f64, grid: &TimeGrid) -> Vec<f64> {
    let t = grid.times();
    let mut out = vec![0.0; t.len()];
    for i in 0..t.len() - 1 {
        out[i + 1] = out[i] + 0.5 * (k(t[i]) + k(t[i + 1])) * (t[i + 1] - t[i]);
    }
    out
}

/// One replicate's randomness: clock, Brownian increments along the clock,
/// and the perturbation path.
#[derive(Clone, Debug)]
pub struct Noise {
    pub clock: ClockSample,
    pub bm: TimeChangedBmPath,
    pub v: PerturbationPath,
}

impl Noise {
    pub fn draw(dim: usize, law: &ClockLaw, grid: &TimeGrid, perturbation: &Perturbation, stream: RngStream) -> Result<Self> {
        let clock = law.sample(grid, &mut stream.child(tags::CLOCK).rng())?;
        let bm = sample_timechanged_bm(&clock, dim, &mut stream.child(tags::BROWNIAN).rng())?;
        let v = perturbation.realize(grid, dim, &mut stream.child(tags::PERTURBATION).rng())?;
        Ok(Self { clock, bm, v })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.clock.grid()
    }
}

/// A Markov model driven by `(W_S, V)`: the finite dimensional SDE here, or
/// a Galerkin truncation. A step is `x ↦ D(x) + σ ΔW + ΔV` where `D` is the
/// noise-free part of the scheme.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;
    fn diffusion(&self) -> &Diffusion;
    fn perturbation(&self) -> &Perturbation;

    /// One-sided Lipschitz bound `K_t` of the full drift.
    fn one_sided_bound(&self, t: f64) -> f64;

    /// `λ` with `‖σ_t^{-1}‖ <= λ`.
    fn inverse_bound(&self) -> f64 {
        self.diffusion().inverse_bound()
    }

    /// Noise-free part `D(x)` of a step of length `h` from time `t`.
    fn deterministic_step(&self, t: f64, h: f64, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Advance `state` from `t_i` to `t_{i+1}`.
    fn step(&self, grid: &TimeGrid, i: usize, dw: &[f64], v: &PerturbationPath, state: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        self.deterministic_step(grid.times()[i], grid.step(i), state, scratch)?;
        state.copy_from_slice(scratch);
        self.diffusion().apply(dw, scratch);
        for (s, n) in state.iter_mut().zip(scratch.iter()) {
            *s += n;
        }
        v.add_increment(i, state);
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: i });
        }
        Ok(())
    }

    fn trajectory(&self, x0: &[f64], v: &PerturbationPath, bm: &TimeChangedBmPath) -> Result<Trajectory> {
        let d = self.dim();
        check_inputs(x0, d, bm)?;
        let grid = bm.grid();
        let mut states = Vec::with_capacity(grid.times().len() * d);
        states.extend_from_slice(x0);
        let mut state = x0.to_vec();
        let mut scratch = vec![0.0; d];
        for i in 0..grid.steps() {
            self.step(grid, i, bm.increment(i), v, &mut state, &mut scratch)?;
            states.extend_from_slice(&state);
        }
        Trajectory::new(grid.clone(), d, states)
    }

    fn terminal_state(&self, x0: &[f64], v: &PerturbationPath, bm: &TimeChangedBmPath) -> Result<Vec<f64>> {
        let d = self.dim();
        check_inputs(x0, d, bm)?;
        let grid = bm.grid();
        let mut state = x0.to_vec();
        let mut scratch = vec![0.0; d];
        for i in 0..grid.steps() {
            self.step(grid, i, bm.increment(i), v, &mut state, &mut scratch)?;
        }
        Ok(state)
    }

    fn terminal(&self, x0: &[f64], noise: &Noise) -> Result<Vec<f64>> {
        self.terminal_state(x0, &noise.v, &noise.bm)
    }
}

impl Dynamics for SdeModel {
    fn dim(&self) -> usize {
        SdeModel::dim(self)
    }
    fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }
    fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }
    fn one_sided_bound(&self, t: f64) -> f64 {
        self.drift.one_sided_bound(t)
    }

    fn deterministic_step(&self, t: f64, h: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self.scheme {
            Scheme::Explicit => {
                self.drift.eval(t, x, out);
                for (o, x) in out.iter_mut().zip(x) {
                    *o = x + *o * h;
                }
                Ok(())
            }
            Scheme::DriftImplicit => {
                out.copy_from_slice(&solve_resolvent(self.drift.as_ref(), t + h, h, x)?);
                Ok(())
            }
            Scheme::SemiImplicit => Err(Error::Unsupported("the semi-implicit step does not split off its noise".into())),
        }
    }

    fn step(&self, grid: &TimeGrid, i: usize, dw: &[f64], v: &PerturbationPath, state: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        let t = grid.times()[i];
        let h = grid.step(i);
        let d = state.len();
        match self.scheme {
            Scheme::Explicit => {
                self.drift.eval(t, state, scratch);
                for j in 0..d {
                    state[j] += scratch[j] * h;
                }
            }
            Scheme::DriftImplicit => {
                let z = solve_resolvent(self.drift.as_ref(), t + h, h, state)?;
                state.copy_from_slice(&z);
            }
            Scheme::SemiImplicit => {}
        }
        self.diffusion.apply(dw, scratch);
        for j in 0..d {
            state[j] += scratch[j];
        }
        v.add_increment(i, state);
        if self.scheme == Scheme::SemiImplicit {
            let z = solve_resolvent(self.drift.as_ref(), grid.times()[i + 1], h, state)?;
            state.copy_from_slice(&z);
        }
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: i });
        }
        Ok(())
    }
}

/// Euler scheme `X_{i+1} = X_i + b(t_i, X_i) h + σ ΔW_i + ΔV_i`.
pub fn integrate(x0: &[f64], model: &SdeModel, v: &PerturbationPath, bm: &TimeChangedBmPath) -> Result<Trajectory> {
    model.trajectory(x0, v, bm)
}

/// Terminal state only (no trajectory storage).
pub fn integrate_terminal(x0: &[f64], model: &SdeModel, v: &PerturbationPath, bm: &TimeChangedBmPath) -> Result<Vec<f64>> {
    model.terminal_state(x0, v, bm)
}

/// Collect per-replicate results, aborting with a count of failed paths.
pub(crate) fn collect_paths<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let total = results.len();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed == 0 {
        return Ok(results.into_iter().map(|r| r.expect("checked")).collect());
    }
    let first = results.into_iter().find_map(|r| r.err()).expect("at least one failure");
    Err(Error::PathFailures {
        failed,
        total,
        first: Box::new(first),
    })
}

/// Sup over the grid of `|X^ε - X|` for each `ε`, where `X` runs on the raw
/// clock `S` and `X^ε` on its regularization, both driven by one Brownian
/// path `W` sampled at every clock value involved. `V ≡ 0`.
pub fn regularization_sup_gaps(
    dynamics: &dyn Dynamics,
    x0: &[f64],
    bernstein: &crate::bernstein::BernsteinFunction,
    grid: &TimeGrid,
    epsilons: &[f64],
    stream: RngStream,
) -> Result<Vec<f64>> {
    use crate::pathgen::{regularize, sample_subordinator, BrownianPath};
    let eps_max = epsilons.iter().copied().fold(0.0, f64::max);
    if !(eps_max > 0.0) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("epsilon", "every epsilon must be positive"));
    }
    let horizon = grid.horizon();
    let full = sample_subordinator(bernstein, &grid.extended_to(horizon + eps_max), &mut stream.child(tags::CLOCK).rng())?;
    let raw = full.truncated(horizon)?;
    let clocks = epsilons.iter().map(|&e| regularize(&full, e, horizon)).collect::<Result<Vec<_>>>()?;
    let mut times = raw.values().to_vec();
    for c in &clocks {
        times.extend_from_slice(c.values());
    }
    let d = dynamics.dim();
    let w = BrownianPath::sample(&times, d, &mut stream.child(tags::BROWNIAN).rng());
    let v = PerturbationPath::zero(d);
    let base = dynamics.trajectory(x0, &v, &w.along(&raw)?)?;
    clocks
        .iter()
        .map(|c| {
            let x = dynamics.trajectory(x0, &v, &w.along(c)?)?;
            Ok((0..=grid.steps())
                .map(|i| x.state(i).iter().zip(base.state(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Terminal states from several starting points under common noise:
/// `out[replicate][start]`.
pub fn simulate_terminals(dynamics: &dyn Dynamics, starts: &[Vec<f64>], law: &ClockLaw, grid: &TimeGrid, mc: &McConfig, role: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    law.validate()?;
    let results = mc.workers.map(mc.paths, |i| {
        let stream = RngStream::new(mc.seed, i as u64, 0).in_role(role);
        let noise = Noise::draw(dynamics.dim(), law, grid, dynamics.perturbation(), stream)?;
        starts.iter().map(|x0| dynamics.terminal(x0, &noise)).collect::<Result<Vec<_>>>()
    });
    collect_paths(results)
}

/// `P_T f(x0) = E f(X_T(x0))` with its standard error.
pub fn semigroup_estimate(f: &Observable, x0: &[f64], dynamics: &dyn Dynamics, law: &ClockLaw, grid: &TimeGrid, mc: &McConfig, role: u64) -> Result<MCEstimate> {
    let values = observe(f, x0, dynamics, law, grid, mc, role)?;
    Ok(MCEstimate::from_samples(&values))
}

/// Per-replicate samples `f(X_T(x0))`.
pub fn observe(f: &Observable, x0: &[f64], dynamics: &dyn Dynamics, law: &ClockLaw, grid: &TimeGrid, mc: &McConfig, role: u64) -> Result<Vec<f64>> {
    if mc.paths < 2 {
        return Err(Error::invalid("N", "need at least two replicates"));
    }
    let terminals = simulate_terminals(dynamics, &[x0.to_vec()], law, grid, mc, role)?;
    Ok(terminals.iter().map(|t| f.eval(&t[0])).collect())
}
