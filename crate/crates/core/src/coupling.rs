//! Coupling by change of measure.
//!
//! Along a strictly increasing clock `ℓ`, `X` solves the equation from `x`
//! and `Y` solves it from `y` with the extra steering drift `ξ_t u_t dℓ(t)`,
//! `u = (X - Y)/|X - Y|`, sharing every noise increment with `X`. The rate
//!
//! `ξ_t = |x - y| e^{-K(t)} / ∫_0^T e^{-2K(s)} dℓ(s)`
//!
//! makes the pair meet by `T`. The steering drift is removed again by the
//! Girsanov weight `R = exp(-Σ<η, ΔW> - ½ Σ |η|² Δℓ)` with
//! `η = σ^{-1}(applied drift)/Δℓ`, so `E[R f(X_T)] = P_T f(y)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::parallel::McConfig;
use crate::pathgen::{ClockLaw, ClockPath, TimeGrid};
use crate::rng::{tags, RngStream};
use crate::sde::{collect_paths, cumulative_bound, semigroup_estimate, Dynamics, Noise, Trajectory};
use crate::stats::{pairwise_sum, MCEstimate};
use crate::BernsteinFunction;

/// Relative default for the coupling threshold.
pub const DEFAULT_DELTA_REL: f64 = 1e-6;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Starting points and the coupling detection threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Absolute threshold; pairs closer than this are pasted together.
    pub delta_couple: f64,
}

impl CouplingConfig {
    /// Threshold `1e-6 |x - y|` (or `1e-12` when `x = y`).
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch("x and y".into()));
        }
        let d = dist(&x, &y);
        let delta_couple = if d > 0.0 { DEFAULT_DELTA_REL * d } else { 1e-12 };
        Ok(Self { x, y, delta_couple })
    }

    pub fn with_delta(mut self, delta_couple: f64) -> Result<Self> {
        if !(delta_couple > 0.0) {
            return Err(Error::invalid("delta_couple", "must be positive"));
        }
        self.delta_couple = delta_couple;
        Ok(self)
    }

    pub fn distance(&self) -> f64 {
        dist(&self.x, &self.y)
    }
}

/// The steering rate `ξ` on the grid, with its Stieltjes denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct Xi {
    pub values: Vec<f64>,
    pub denominator: f64,
}

impl Xi {
    /// `cum_k[i] = K(t_i)`; the denominator is the left-point sum
    /// `Σ e^{-2K(t_i)} Δℓ_i` over the whole horizon.
    pub fn new<C: ClockPath + ?Sized>(distance: f64, cum_k: &[f64], clock: &C) -> Result<Self> {
        let l = clock.values();
        if cum_k.len() != l.len() {
            return Err(Error::GridMismatch("K and clock lengths differ".into()));
        }
        let terms: Vec<f64> = (0..l.len() - 1).map(|i| (-2.0 * cum_k[i]).exp() * (l[i + 1] - l[i])).collect();
        let denominator = pairwise_sum(&terms);
        if !(denominator > 0.0) || !denominator.is_finite() {
            return Err(Error::Precondition(format!("coupling denominator is {denominator}; the clock must increase")));
        }
        let values = cum_k.iter().map(|k| distance * (-k).exp() / denominator).collect();
        Ok(Self { values, denominator })
    }
}

/// `ξ_t` for a single time `t` on the clock's grid span.
pub fn xi<C: ClockPath + ?Sized>(t: f64, distance: f64, k: impl Fn(f64) -> f64, clock: &C) -> Result<f64> {
    let grid = clock.grid();
    if !(0.0..=grid.horizon()).contains(&t) {
        return Err(Error::invalid("t", format!("must lie in [0, {}]", grid.horizon())));
    }
    let cum = cumulative_bound(&k, grid);
    let xi = Xi::new(distance, &cum, clock)?;
    let j = grid.index_at_or_before(t);
    // finish the trapezoid from t_j to t
    let tj = grid.times()[j];
    let k_t = cum[j] + 0.5 * (k(tj) + k(t)) * (t - tj);
    Ok(distance * (-k_t).exp() / xi.denominator)
}

/// One coupled pair with its weight.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPath {
    pub x: Trajectory,
    pub y: Trajectory,
    /// First grid index with `|X_i - Y_i| <= delta_couple`.
    pub tau_index: Option<usize>,
    pub log_weight: f64,
    /// `Σ |η_i|² Δℓ_i`
    pub eta_sq_integral: f64,
}

impl CoupledPath {
    pub fn tau_time(&self) -> Option<f64> {
        self.tau_index.map(|i| self.x.grid().times()[i])
    }
}

struct Outcome {
    x_t: Vec<f64>,
    tau_index: Option<usize>,
    log_weight: f64,
    eta_sq_integral: f64,
}

fn check_clock(noise: &Noise) -> Result<()> {
    if !noise.clock.is_strictly_increasing() {
        return Err(Error::Precondition(
            "coupling needs a strictly increasing clock; use a regularized clock (epsilon > 0)".into(),
        ));
    }
    Ok(())
}

fn run(dynamics: &dyn Dynamics, cfg: &CouplingConfig, noise: &Noise, mut record: Option<(&mut Vec<f64>, &mut Vec<f64>)>) -> Result<Outcome> {
    let d = dynamics.dim();
    if cfg.x.len() != d || cfg.y.len() != d || noise.bm.dim() != d {
        return Err(Error::DimensionMismatch(format!("coupling inputs vs model dim {d}")));
    }
    check_clock(noise)?;
    let grid = noise.grid();
    let l = noise.clock.values();
    let cum_k = cumulative_bound(|t| dynamics.one_sided_bound(t), grid);
    let xi = Xi::new(cfg.distance(), &cum_k, &noise.clock)?;
    let sigma = dynamics.diffusion();

    let mut x = cfg.x.clone();
    let mut y = cfg.y.clone();
    let (mut dx, mut dy) = (vec![0.0; d], vec![0.0; d]);
    let mut scratch = vec![0.0; d];
    let mut applied = vec![0.0; d];
    let mut eta = vec![0.0; d];
    let mut tau_index = None;
    let mut coupled = false;
    let (mut ito, mut eta_sq) = (0.0, 0.0);

    if let Some((xs, ys)) = record.as_mut() {
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
    }
    for i in 0..grid.steps() {
        if !coupled && dist(&x, &y) <= cfg.delta_couple {
            coupled = true;
            tau_index = Some(i);
        }
        let (t, h) = (grid.times()[i], grid.step(i));
        let dl = l[i + 1] - l[i];
        dynamics.deterministic_step(t, h, &x, &mut dx)?;
        dynamics.deterministic_step(t, h, &y, &mut dy)?;
        // gap = D(X_i) - D(Y_i): what the steering must close this step
        let gap_norm = dist(&dx, &dy);
        let reach = xi.values[i] * dl;
        let snap = coupled || reach >= gap_norm;
        if snap {
            for j in 0..d {
                applied[j] = dx[j] - dy[j];
            }
        } else {
            let r = dist(&x, &y);
            for j in 0..d {
                applied[j] = reach * (x[j] - y[j]) / r;
            }
        }
        sigma.apply(noise.bm.increment(i), &mut scratch);
        for j in 0..d {
            dx[j] += scratch[j];
            dy[j] += scratch[j];
        }
        noise.v.add_increment(i, &mut dx);
        noise.v.add_increment(i, &mut dy);
        if snap {
            y.copy_from_slice(&dx);
        } else {
            for j in 0..d {
                y[j] = dy[j] + applied[j];
            }
        }
        x.copy_from_slice(&dx);
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: i });
        }
        if applied.iter().any(|&a| a != 0.0) {
            sigma.apply_inverse(&applied, &mut eta);
            let inv = 1.0 / dl;
            let dw = noise.bm.increment(i);
            for j in 0..d {
                let e = eta[j] * inv;
                ito += e * dw[j];
                eta_sq += e * e * dl;
            }
        }
        if let Some((xs, ys)) = record.as_mut() {
            xs.extend_from_slice(&x);
            ys.extend_from_slice(&y);
        }
    }
    if tau_index.is_none() && dist(&x, &y) <= cfg.delta_couple {
        tau_index = Some(grid.steps());
    }
    let log_weight = -ito - 0.5 * eta_sq;
    if !log_weight.is_finite() {
        return Err(Error::NonFinite { step: grid.steps() });
    }
    Ok(Outcome {
        x_t: x,
        tau_index,
        log_weight,
        eta_sq_integral: eta_sq,
    })
}

/// Simulate `(X, Y)` on one noise sample (the clock must be strictly
/// increasing).
pub fn simulate_coupled(dynamics: &dyn Dynamics, cfg: &CouplingConfig, noise: &Noise) -> Result<CoupledPath> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let out = run(dynamics, cfg, noise, Some((&mut xs, &mut ys)))?;
    let grid = noise.grid().clone();
    let d = dynamics.dim();
    Ok(CoupledPath {
        x: Trajectory::new(grid.clone(), d, xs)?,
        y: Trajectory::new(grid, d, ys)?,
        tau_index: out.tau_index,
        log_weight: out.log_weight,
        eta_sq_integral: out.eta_sq_integral,
    })
}

/// Recompute `log R` from the stored trajectories: the steering increment
/// is whatever `Y` did beyond the uncontrolled step.
pub fn girsanov_weight(path: &CoupledPath, dynamics: &dyn Dynamics, noise: &Noise) -> Result<f64> {
    let grid = noise.grid();
    if path.y.grid() != grid {
        return Err(Error::GridMismatch("coupled path and noise use different grids".into()));
    }
    let d = dynamics.dim();
    let l = noise.clock.values();
    let sigma = dynamics.diffusion();
    let (mut dy, mut scratch, mut eta) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut ito, mut eta_sq) = (0.0, 0.0);
    for i in 0..grid.steps() {
        let y = path.y.state(i);
        dynamics.deterministic_step(grid.times()[i], grid.step(i), y, &mut dy)?;
        sigma.apply(noise.bm.increment(i), &mut scratch);
        for j in 0..d {
            dy[j] += scratch[j];
        }
        noise.v.add_increment(i, &mut dy);
        let next = path.y.state(i + 1);
        let applied: Vec<f64> = next.iter().zip(&dy).map(|(a, b)| a - b).collect();
        sigma.apply_inverse(&applied, &mut eta);
        let dl = l[i + 1] - l[i];
        let dw = noise.bm.increment(i);
        for j in 0..d {
            let e = eta[j] / dl;
            ito += e * dw[j];
            eta_sq += e * e * dl;
        }
    }
    Ok(-ito - 0.5 * eta_sq)
}

/// Per-path diagnostics of an ensemble run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathRecord {
    pub path_id: usize,
    pub tau_time: Option<f64>,
    pub log_weight: f64,
    pub f_xt: f64,
    pub eta_sq_integral: f64,
    /// `λ² |x-y|² / (2 Σ e^{-2K} Δℓ)` for this clock draw.
    pub entropy_target: f64,
}

/// Ensemble summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingSummary {
    /// `E R`
    pub weight: MCEstimate,
    pub log_weight: MCEstimate,
    /// `E R log R`
    pub entropy: MCEstimate,
    /// Clock-averaged `λ² |x-y|² / (2 Σ e^{-2K} Δℓ)`.
    pub entropy_target: MCEstimate,
    /// `E R f(X_T)`
    pub transfer: MCEstimate,
    pub coupled_fraction: f64,
    pub weight_variance: f64,
}

#[derive(Clone, Debug)]
pub struct CouplingEnsemble {
    pub records: Vec<PathRecord>,
    pub summary: CouplingSummary,
}

impl CouplingEnsemble {
    /// CSV with `path_id, tau_time, log_weight, f_XT`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path_id", "tau_time", "log_weight", "f_XT"])?;
        for r in &self.records {
            w.write_record(&[
                r.path_id.to_string(),
                r.tau_time.map(|t| t.to_string()).unwrap_or_default(),
                r.log_weight.to_string(),
                r.f_xt.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Only the linear clock is strictly increasing without regularization.
pub fn require_coupling_clock(law: &ClockLaw) -> Result<()> {
    law.validate()?;
    if law.epsilon.is_none() && law.bernstein != BernsteinFunction::Linear {
        return Err(Error::Precondition(format!(
            "coupling along {} needs a regularized clock (set epsilon)",
            law.bernstein
        )));
    }
    Ok(())
}

/// Simulate `mc.paths` coupled pairs.
pub fn couple_ensemble(dynamics: &dyn Dynamics, cfg: &CouplingConfig, f: &Observable, law: &ClockLaw, grid: &TimeGrid, mc: &McConfig) -> Result<CouplingEnsemble> {
    require_coupling_clock(law)?;
    if mc.paths < 2 {
        return Err(Error::invalid("N", "need at least two replicates"));
    }
    let lambda = dynamics.inverse_bound();
    let dist2 = cfg.distance().powi(2);
    let results = mc.workers.map(mc.paths, |i| {
        let stream = RngStream::new(mc.seed, i as u64, 0).in_role(tags::ROLE_COUPLING);
        let noise = Noise::draw(dynamics.dim(), law, grid, dynamics.perturbation(), stream)?;
        let out = run(dynamics, cfg, &noise, None)?;
        let cum_k = cumulative_bound(|t| dynamics.one_sided_bound(t), grid);
        let xi = Xi::new(cfg.distance().max(f64::MIN_POSITIVE), &cum_k, &noise.clock)?;
        Ok(PathRecord {
            path_id: i,
            tau_time: out.tau_index.map(|k| grid.times()[k]),
            log_weight: out.log_weight,
            f_xt: f.eval(&out.x_t),
            eta_sq_integral: out.eta_sq_integral,
            entropy_target: lambda * lambda * dist2 / (2.0 * xi.denominator),
        })
    });
    let records = collect_paths(results)?;
    let r: Vec<f64> = records.iter().map(|p| p.log_weight.exp()).collect();
    let log_r: Vec<f64> = records.iter().map(|p| p.log_weight).collect();
    let r_log_r: Vec<f64> = records.iter().map(|p| p.log_weight.exp() * p.log_weight).collect();
    let targets: Vec<f64> = records.iter().map(|p| p.entropy_target).collect();
    let transfer: Vec<f64> = records.iter().map(|p| p.log_weight.exp() * p.f_xt).collect();
    let weight = MCEstimate::from_samples(&r);
    let coupled = records.iter().filter(|p| p.tau_time.is_some()).count();
    let summary = CouplingSummary {
        weight,
        log_weight: MCEstimate::from_samples(&log_r),
        entropy: MCEstimate::from_samples(&r_log_r),
        entropy_target: MCEstimate::from_samples(&targets),
        transfer: MCEstimate::from_samples(&transfer),
        coupled_fraction: coupled as f64 / records.len() as f64,
        weight_variance: weight.stderr.powi(2) * weight.n as f64,
    };
    Ok(CouplingEnsemble { records, summary })
}

/// `A = E[R f(X_T)]` from coupled pairs started at `(x, y)` and the direct
/// estimate `B = P_T f(y)` on independent noise.
pub fn harnack_transfer_check(f: &Observable, dynamics: &dyn Dynamics, cfg: &CouplingConfig, law: &ClockLaw, grid: &TimeGrid, mc: &McConfig) -> Result<(MCEstimate, MCEstimate)> {
    let ens = couple_ensemble(dynamics, cfg, f, law, grid, mc)?;
    let direct = semigroup_estimate(f, &cfg.y, dynamics, law, grid, mc, tags::ROLE_DIRECT)?;
    Ok((ens.summary.transfer, direct))
}
