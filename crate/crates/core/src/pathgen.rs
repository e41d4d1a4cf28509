//! Subordinator paths, the regularized clock and time-changed Brownian
//! increments on a time grid.
//!
//! Paths are stored at grid points. Between grid points the subordinator is
//! interpolated linearly when it is regularized, which makes the window
//! average `(1/eps) ∫_t^{t+eps} S` exact for the stored values.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinFunction;
use crate::error::{Error, Result};

const MAX_REJECTIONS: usize = 100_000;

/// Ordered times `0 = t_0 < t_1 < ... < t_M`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        let h = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        times[steps] = horizon;
        Ok(Self { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("need at least two points".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("must start at 0, got {}", times[0])));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidGrid(format!("not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { times })
    }

    /// Union of a uniform grid on `[0, horizon]` with extra interior points.
    pub fn uniform_with_points(horizon: f64, steps: usize, extra: &[f64]) -> Result<Self> {
        let base = Self::uniform(horizon, steps)?;
        let tol = 1e-12 * horizon;
        let mut times = base.times;
        times.extend(extra.iter().copied().filter(|&t| t > 0.0 && t <= horizon));
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= tol);
        Self::from_times(times)
    }

    /// This grid continued with its last step size until it covers `until`.
    pub fn extended_to(&self, until: f64) -> Self {
        let mut times = self.times.clone();
        let h = self.step(self.steps() - 1);
        let mut t = *times.last().expect("non-empty");
        while t < until - 1e-12 * until.abs().max(1.0) {
            t += h;
            times.push(t);
        }
        Self { times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn step(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// Index of the largest grid time `<= t` (with rounding tolerance).
    pub fn index_at_or_before(&self, t: f64) -> usize {
        let tol = 1e-12 * self.horizon();
        match self.times.binary_search_by(|x| x.total_cmp(&(t + tol))) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Prefix of the grid up to and including `horizon`.
    pub fn truncated(&self, horizon: f64) -> Result<Self> {
        let i = self.index_at_or_before(horizon);
        Self::from_times(self.times[..=i].to_vec())
    }
}

/// Anything that assigns clock values to the points of a grid.
pub trait ClockPath {
    fn grid(&self) -> &TimeGrid;
    fn values(&self) -> &[f64];

    fn increment(&self, i: usize) -> f64 {
        self.values()[i + 1] - self.values()[i]
    }
}

/// Nondecreasing `S_0 = 0, S_1, ..., S_M`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubordinatorPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SubordinatorPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.times().len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} grid points",
                values.len(),
                grid.times().len()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidPath(format!("S(0) must be 0, got {}", values[0])));
        }
        for (i, w) in values.windows(2).enumerate() {
            if !w[1].is_finite() {
                return Err(Error::InvalidPath(format!("non-finite value at index {}", i + 1)));
            }
            if w[1] < w[0] {
                return Err(Error::NegativeIncrement {
                    step: i,
                    increment: w[1] - w[0],
                });
            }
        }
        Ok(Self { grid, values })
    }

    /// Restriction to the grid points up to `horizon`.
    pub fn truncated(&self, horizon: f64) -> Result<Self> {
        let grid = self.grid.truncated(horizon)?;
        let n = grid.times().len();
        Ok(Self {
            grid,
            values: self.values[..n].to_vec(),
        })
    }
}

impl ClockPath for SubordinatorPath {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `S_eps(t) = (1/eps) ∫_t^{t+eps} S(s) ds + eps t`, strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedClock {
    grid: TimeGrid,
    values: Vec<f64>,
    epsilon: f64,
}

impl RegularizedClock {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl ClockPath for RegularizedClock {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Regularize `path` on the grid points up to `horizon`. The path must
/// already cover `[0, horizon + epsilon]`.
pub fn regularize(path: &SubordinatorPath, epsilon: f64, horizon: f64) -> Result<RegularizedClock> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    let times = path.grid.times();
    let available = path.grid.horizon();
    let needed = horizon + epsilon;
    if available < needed - 1e-12 * needed {
        return Err(Error::MissingExtension { needed, available });
    }
    // cumulative integral of the piecewise-linear interpolant at grid points
    let s = &path.values;
    let mut cum = vec![0.0; times.len()];
    for i in 0..times.len() - 1 {
        cum[i + 1] = cum[i] + 0.5 * (s[i] + s[i + 1]) * (times[i + 1] - times[i]);
    }
    let integral_to = |t: f64| -> f64 {
        let j = path.grid.index_at_or_before(t).min(times.len() - 2);
        let dt = (t - times[j]).max(0.0);
        let width = times[j + 1] - times[j];
        let slope = (s[j + 1] - s[j]) / width;
        cum[j] + s[j] * dt + 0.5 * slope * dt * dt
    };
    let out_grid = path.grid.truncated(horizon)?;
    let values = out_grid
        .times()
        .iter()
        .map(|&t| (integral_to(t + epsilon) - integral_to(t)) / epsilon + epsilon * t)
        .collect();
    Ok(RegularizedClock {
        grid: out_grid,
        values,
        epsilon,
    })
}

/// One draw of `S_1` for `B(r) = r^theta` (Kanter's representation).
pub fn positive_stable<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * Distribution::<f64>::sample(&Open01, rng);
    let e: f64 = Exp1.sample(rng);
    let a = (theta * u).sin() / u.sin().powf(1.0 / theta);
    let b = ((1.0 - theta) * u).sin() / e;
    a * b.powf((1.0 - theta) / theta)
}

/// Draw `S(t+dt) - S(t)` for the subordinator with Bernstein function `b`.
pub fn sample_increment<R: Rng + ?Sized>(b: &BernsteinFunction, dt: f64, rng: &mut R) -> Result<f64> {
    match *b {
        BernsteinFunction::Linear => Ok(dt),
        BernsteinFunction::Stable { theta } => Ok(dt.powf(1.0 / theta) * positive_stable(theta, rng)),
        BernsteinFunction::Gamma { a, b } => {
            let g = Gamma::new(a * dt, 1.0 / b).map_err(|e| Error::invalid("gamma", e.to_string()))?;
            Ok(g.sample(rng))
        }
        BernsteinFunction::TemperedStable { theta, kappa } => {
            let scale = dt.powf(1.0 / theta);
            // exponential tilting of the stable increment by e^{-kappa s}
            for _ in 0..MAX_REJECTIONS {
                let s = scale * positive_stable(theta, rng);
                let u: f64 = Open01.sample(rng);
                if u < (-kappa * s).exp() {
                    return Ok(s);
                }
            }
            Err(Error::RejectionExhausted {
                attempts: MAX_REJECTIONS,
                acceptance_rate: (-dt * kappa.powf(theta)).exp(),
            })
        }
    }
}

pub fn sample_subordinator<R: Rng + ?Sized>(b: &BernsteinFunction, grid: &TimeGrid, rng: &mut R) -> Result<SubordinatorPath> {
    b.validate()?;
    let mut values = Vec::with_capacity(grid.times().len());
    values.push(0.0);
    let mut s = 0.0;
    for i in 0..grid.steps() {
        s += sample_increment(b, grid.step(i), rng)?;
        values.push(s);
    }
    Ok(SubordinatorPath {
        grid: grid.clone(),
        values,
    })
}

/// Increments `ΔW_i` of `W_{clock(t)}`, row-major `M × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeChangedBmPath {
    grid: TimeGrid,
    dim: usize,
    increments: Vec<f64>,
}

impl TimeChangedBmPath {
    pub fn from_increments(grid: TimeGrid, dim: usize, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.steps() * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} increments, got {}",
                grid.steps() * dim,
                increments.len()
            )));
        }
        Ok(Self { grid, dim, increments })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn increment(&self, i: usize) -> &[f64] {
        &self.increments[i * self.dim..(i + 1) * self.dim]
    }

    /// Cumulative values `W_{clock(t_i)}`, row-major `(M+1) × d`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut acc = vec![0.0; self.dim];
        for i in 0..self.grid.steps() {
            for (a, d) in acc.iter_mut().zip(self.increment(i)) {
                *a += d;
            }
            out.extend_from_slice(&acc);
        }
        out
    }
}

/// `ΔW_i ~ N(0, (clock_{i+1} - clock_i) I_d)` independently.
pub fn sample_timechanged_bm<C: ClockPath + ?Sized, R: Rng + ?Sized>(clock: &C, dim: usize, rng: &mut R) -> Result<TimeChangedBmPath> {
    if dim == 0 {
        return Err(Error::invalid("d", "dimension must be at least 1"));
    }
    let steps = clock.grid().steps();
    let mut increments = Vec::with_capacity(steps * dim);
    for i in 0..steps {
        let dl = clock.increment(i);
        if dl < 0.0 || !dl.is_finite() {
            return Err(Error::NegativeIncrement { step: i, increment: dl });
        }
        let sd = dl.sqrt();
        for _ in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            increments.push(sd * z);
        }
    }
    Ok(TimeChangedBmPath {
        grid: clock.grid().clone(),
        dim,
        increments,
    })
}

/// One Brownian path sampled at an arbitrary finite set of (clock) times,
/// so that several clocks can be driven by the same `W`.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    times: Vec<f64>,
    dim: usize,
    values: Vec<f64>,
}

impl BrownianPath {
    pub fn sample<R: Rng + ?Sized>(times: &[f64], dim: usize, rng: &mut R) -> Self {
        let mut times: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0).collect();
        times.push(0.0);
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut values = vec![0.0; dim];
        let mut cur = vec![0.0; dim];
        for w in times.windows(2) {
            let sd = (w[1] - w[0]).sqrt();
            for c in cur.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *c += sd * z;
            }
            values.extend_from_slice(&cur);
        }
        Self { times, dim, values }
    }

    fn at(&self, t: f64) -> Result<&[f64]> {
        let i = self
            .times
            .binary_search_by(|x| x.total_cmp(&t))
            .map_err(|_| Error::GridMismatch(format!("Brownian path was not sampled at time {t}")))?;
        Ok(&self.values[i * self.dim..(i + 1) * self.dim])
    }

    /// Increments of `W` along `clock`; every clock value must have been
    /// among the sampled times.
    pub fn along<C: ClockPath + ?Sized>(&self, clock: &C) -> Result<TimeChangedBmPath> {
        let v = clock.values();
        let mut increments = Vec::with_capacity(clock.grid().steps() * self.dim);
        for i in 0..clock.grid().steps() {
            let (a, b) = (self.at(v[i])?, self.at(v[i + 1])?);
            increments.extend(b.iter().zip(a).map(|(b, a)| b - a));
        }
        TimeChangedBmPath::from_increments(clock.grid().clone(), self.dim, increments)
    }
}

/// Law of the driving clock: a subordinator, optionally regularized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockLaw {
    pub bernstein: BernsteinFunction,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl ClockLaw {
    pub fn new(bernstein: BernsteinFunction) -> Self {
        Self { bernstein, epsilon: None }
    }

    pub fn regularized(bernstein: BernsteinFunction, epsilon: f64) -> Self {
        Self {
            bernstein,
            epsilon: Some(epsilon),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bernstein.validate()?;
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::invalid("epsilon", format!("must be positive, got {eps}")));
            }
        }
        Ok(())
    }

    /// Sample the clock on `grid`. Regularized laws sample the subordinator
    /// on the grid extended past `T + eps`.
    pub fn sample<R: Rng + ?Sized>(&self, grid: &TimeGrid, rng: &mut R) -> Result<ClockSample> {
        match self.epsilon {
            None => Ok(ClockSample {
                raw: sample_subordinator(&self.bernstein, grid, rng)?,
                regularized: None,
            }),
            Some(eps) => {
                let horizon = grid.horizon();
                let extended = grid.extended_to(horizon + eps);
                let full = sample_subordinator(&self.bernstein, &extended, rng)?;
                let regularized = regularize(&full, eps, horizon)?;
                Ok(ClockSample {
                    raw: full.truncated(horizon)?,
                    regularized: Some(regularized),
                })
            }
        }
    }
}

/// A sampled clock: the raw subordinator and, if requested, its
/// regularization. The driving values are the regularized ones when present.
#[derive(Clone, Debug)]
pub struct ClockSample {
    pub raw: SubordinatorPath,
    pub regularized: Option<RegularizedClock>,
}

impl ClockSample {
    pub fn is_strictly_increasing(&self) -> bool {
        self.values().windows(2).all(|w| w[1] > w[0])
    }
}

impl ClockPath for ClockSample {
    fn grid(&self) -> &TimeGrid {
        match &self.regularized {
            Some(c) => c.grid(),
            None => self.raw.grid(),
        }
    }
    fn values(&self) -> &[f64] {
        match &self.regularized {
            Some(c) => c.values(),
            None => self.raw.values(),
        }
    }
}

/// Debug export with columns `t, S, clock_eps, W_1..W_d`.
pub fn write_paths_csv<W: Write>(out: W, clock: &ClockSample, bm: &TimeChangedBmPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "S".to_string(), "clock_eps".to_string()];
    header.extend((1..=bm.dim()).map(|j| format!("W_{j}")));
    w.write_record(&header)?;
    let cum = bm.cumulative();
    let eps_values = clock.regularized.as_ref().map(|c| c.values());
    for (i, t) in clock.raw.grid().times().iter().enumerate() {
        let mut rec = vec![t.to_string(), clock.raw.values()[i].to_string()];
        rec.push(eps_values.map(|v| v[i].to_string()).unwrap_or_default());
        rec.extend(cum[i * bm.dim()..(i + 1) * bm.dim()].iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{tags, RngStream};
    use crate::stats::{ks_two_sample, MCEstimate};

    fn rng(rep: u64) -> rand_chacha::ChaCha8Rng {
        RngStream::new(2024, rep, tags::CLOCK).rng()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::uniform(-1.0, 3).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_times(vec![0.1, 0.5]).is_err());
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.extended_to(2.3).times().last().copied(), Some(2.5));
    }

    #[test]
    fn linear_path_is_deterministic() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let p = sample_subordinator(&BernsteinFunction::Linear, &g, &mut rng(0)).unwrap();
        assert_eq!(p.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn path_validation_rejects_decrease() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        assert!(SubordinatorPath::new(g.clone(), vec![0.0, 0.5, 0.4]).is_err());
        assert!(SubordinatorPath::new(g.clone(), vec![0.1, 0.5, 0.6]).is_err());
        assert!(SubordinatorPath::new(g, vec![0.0, 0.5, 0.5]).is_ok());
    }

    #[test]
    fn stable_laplace_transform_matches() {
        let b = BernsteinFunction::stable(0.5).unwrap();
        let mut r = rng(1);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| (-sample_increment(&b, 1.0, &mut r).unwrap()).exp())
            .collect();
        let e = MCEstimate::from_samples(&samples);
        assert!(e.z_against((-1f64).exp()).abs() < 3.0, "{e:?}");
    }

    #[test]
    fn gamma_mean() {
        let b = BernsteinFunction::gamma(1.0, 1.0).unwrap();
        let mut r = rng(2);
        let samples: Vec<f64> = (0..100_000).map(|_| sample_increment(&b, 2.0, &mut r).unwrap()).collect();
        let e = MCEstimate::from_samples(&samples);
        assert!(e.z_against(2.0).abs() < 3.0, "{e:?}");
    }

    #[test]
    fn tempered_rejection_reports_exhaustion() {
        let b = BernsteinFunction::tempered_stable(0.9, 1e6).unwrap();
        let err = sample_increment(&b, 1.0, &mut rng(3)).unwrap_err();
        assert!(matches!(err, Error::RejectionExhausted { .. }));
    }

    #[test]
    fn regularize_linear_examples() {
        let g = TimeGrid::uniform(1.2, 120).unwrap();
        let p = sample_subordinator(&BernsteinFunction::Linear, &g, &mut rng(0)).unwrap();
        let c = regularize(&p, 0.1, 1.0).unwrap();
        assert!((c.values()[0] - 0.05).abs() < 1e-12);
        assert!((c.values().last().unwrap() - 1.15).abs() < 1e-12);
        assert!((c.grid().horizon() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regularize_needs_extension() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let p = sample_subordinator(&BernsteinFunction::Linear, &g, &mut rng(0)).unwrap();
        let err = regularize(&p, 0.1, 1.0).unwrap_err();
        assert!(matches!(err, Error::MissingExtension { .. }));
        assert!(err.to_string().contains("T + eps"));
    }

    #[test]
    fn regularization_dominates_and_decreases_with_eps() {
        let b = BernsteinFunction::stable(0.6).unwrap();
        let grid = TimeGrid::uniform(1.0, 200).unwrap().extended_to(1.2);
        for rep in 0..100 {
            let p = sample_subordinator(&b, &grid, &mut rng(rep)).unwrap();
            let raw = p.truncated(1.0).unwrap();
            let mut prev: Option<RegularizedClock> = None;
            for eps in [0.2, 0.1, 0.05, 0.025] {
                let c = regularize(&p, eps, 1.0).unwrap();
                for (i, (&v, &s)) in c.values().iter().zip(raw.values()).enumerate() {
                    assert!(v >= s, "S_eps below S at {i}");
                }
                for i in 0..c.grid().steps() {
                    assert!(c.increment(i) >= eps * c.grid().step(i) * (1.0 - 1e-9));
                }
                if let Some(prev) = &prev {
                    for (a, b) in prev.values().iter().zip(c.values()) {
                        assert!(a >= b);
                    }
                }
                prev = Some(c);
            }
        }
    }

    #[test]
    fn flat_clock_gives_zero_increment() {
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        let p = SubordinatorPath::new(g, vec![0.0, 0.4, 0.4, 1.0]).unwrap();
        let bm = sample_timechanged_bm(&p, 3, &mut rng(5)).unwrap();
        assert_eq!(bm.increment(1), &[0.0, 0.0, 0.0]);
        assert!(bm.increment(0).iter().all(|&x| x != 0.0));
    }

    #[test]
    fn timechanged_second_moment_linear_clock() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let p = sample_subordinator(&BernsteinFunction::Linear, &g, &mut rng(0)).unwrap();
        let mut r = rng(6);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| {
                let bm = sample_timechanged_bm(&p, 2, &mut r).unwrap();
                let c = bm.cumulative();
                c[16] * c[16] + c[17] * c[17]
            })
            .collect();
        let e = MCEstimate::from_samples(&samples);
        assert!(e.z_against(2.0).abs() < 3.0, "{e:?}");
    }

    #[test]
    fn subordinate_bm_has_symbol_b_of_u_squared() {
        let b = BernsteinFunction::stable(0.5).unwrap();
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let samples: Vec<f64> = (0..100_000u64)
            .map(|i| {
                let s = RngStream::new(9, i, tags::CLOCK);
                let p = sample_subordinator(&b, &g, &mut s.rng()).unwrap();
                let bm = sample_timechanged_bm(&p, 1, &mut s.with_tag(tags::BROWNIAN).rng()).unwrap();
                let w: f64 = bm.cumulative()[4];
                (2.0 * w).cos()
            })
            .collect();
        let e = MCEstimate::from_samples(&samples);
        // standard W: E cos(u W_S) = E e^{-u^2 S/2} = e^{-B(u^2/2)}
        assert!(e.z_against(b.laplace_transform(2.0, 1.0)).abs() < 3.0, "{e:?}");
    }

    #[test]
    fn negative_increment_is_rejected() {
        struct Bad(TimeGrid, Vec<f64>);
        impl ClockPath for Bad {
            fn grid(&self) -> &TimeGrid {
                &self.0
            }
            fn values(&self) -> &[f64] {
                &self.1
            }
        }
        let bad = Bad(TimeGrid::uniform(1.0, 2).unwrap(), vec![0.0, 0.5, 0.3]);
        assert!(matches!(
            sample_timechanged_bm(&bad, 1, &mut rng(0)),
            Err(Error::NegativeIncrement { step: 1, .. })
        ));
    }

    #[test]
    fn increments_are_exchangeable_across_halves() {
        let b = BernsteinFunction::gamma(2.0, 1.0).unwrap();
        let g = TimeGrid::uniform(2.0, 20).unwrap();
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for rep in 0..1000 {
            let p = sample_subordinator(&b, &g, &mut rng(rep)).unwrap();
            for i in 0..20 {
                let inc = p.increment(i);
                if i < 10 {
                    first.push(inc)
                } else {
                    second.push(inc)
                }
            }
        }
        let (_, pval) = ks_two_sample(&first, &second);
        assert!(pval > 0.01, "p = {pval}");
    }

    #[test]
    fn same_stream_reproduces_bit_exactly() {
        let b = BernsteinFunction::tempered_stable(0.7, 1.0).unwrap();
        let law = ClockLaw::regularized(b, 0.05);
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let s = RngStream::new(77, 3, tags::CLOCK);
        let a = law.sample(&g, &mut s.rng()).unwrap();
        let c = law.sample(&g, &mut s.rng()).unwrap();
        assert_eq!(a.values(), c.values());
        assert_eq!(a.raw, c.raw);
        assert!(a.is_strictly_increasing());
    }

    #[test]
    fn common_brownian_path_along_two_clocks() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let law = ClockLaw::regularized(BernsteinFunction::stable(0.7).unwrap(), 0.1);
        let c = law.sample(&g, &mut rng(4)).unwrap();
        let mut times: Vec<f64> = c.raw.values().to_vec();
        times.extend_from_slice(c.values());
        let w = BrownianPath::sample(&times, 2, &mut rng(5));
        let a = w.along(&c.raw).unwrap();
        let b = w.along(&c).unwrap();
        let (ca, cb) = (a.cumulative(), b.cumulative());
        assert_eq!(ca.len(), cb.len());
        // same W: identical where the two clocks agree (never here), finite everywhere
        assert!(ca.iter().chain(cb.iter()).all(|x| x.is_finite()));
        assert!(w.along(&SubordinatorPath::new(g, (0..=10).map(|i| i as f64 * 7.77).collect()).unwrap()).is_err());
    }

    #[test]
    fn csv_has_expected_columns() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let law = ClockLaw::regularized(BernsteinFunction::Linear, 0.1);
        let c = law.sample(&g, &mut rng(0)).unwrap();
        let bm = sample_timechanged_bm(&c, 2, &mut rng(1)).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &c, &bm).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,S,clock_eps,W_1,W_2"));
        assert_eq!(lines.count(), 5);
    }
}
