//! Fast subset of the acceptance checks, run by `subharnack selftest`.
//!
//! Each closed-form check looks up its tolerance by oracle name, so a
//! missing tolerance fails loudly instead of passing silently. The stream
//! derivation used by the determinism check can be swapped out to inject
//! faults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;

use crate::bernstein::BernsteinFunction;
use crate::certify::{log_harnack_certificate, CertifySetup};
use crate::coupling::{couple_ensemble, simulate_coupled, CouplingConfig};
use crate::observable::Observable;
use crate::parallel::{McConfig, Workers};
use crate::pathgen::{sample_increment, ClockLaw, TimeGrid};
use crate::rng::{tags, RngStream};
use crate::runner::{execute, parse_config};
use crate::sde::{Diffusion, Dynamics, Noise, OuDrift, Perturbation, SdeModel, ZeroDrift};
use crate::special::gamma;
use crate::stats::MCEstimate;

/// `(master_seed, replicate) -> stream`
pub type StreamDeriver = Arc<dyn Fn(u64, u64) -> RngStream + Send + Sync>;

#[derive(Clone)]
pub struct SelftestOptions {
    pub workers: Workers,
    /// Tolerance per oracle name.
    pub tolerances: BTreeMap<String, f64>,
    pub stream_deriver: StreamDeriver,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        let tolerances = [
            ("moment_linear", 1e-9),
            ("moment_stable", 1e-6),
            ("laplace_z", 3.0),
            ("girsanov_z", 3.0),
            ("sharp_log_harnack_z", 3.0),
            ("coupling_profile_steps", 2.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            workers: Workers::new(2),
            tolerances,
            stream_deriver: Arc::new(|seed, rep| RngStream::new(seed, rep, 0)),
        }
    }
}

impl SelftestOptions {
    fn tolerance(&self, oracle: &str) -> Result<f64, String> {
        self.tolerances
            .get(oracle)
            .copied()
            .ok_or_else(|| format!("oracle `{oracle}` has no tolerance configured"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{:<24} {:<4} {:>6.2}s  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.seconds, c.detail);
        }
        s
    }
}

type Check = fn(&SelftestOptions) -> Result<String, String>;

pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let checks: [(&'static str, Check); 6] = [
        ("moment oracle", moment_oracle),
        ("sampler laplace", sampler_laplace),
        ("girsanov normalization", girsanov_normalization),
        ("sharp log-harnack", sharp_log_harnack),
        ("coupling profile", coupling_profile),
        ("determinism", determinism),
    ];
    let checks = checks
        .into_iter()
        .map(|(name, check)| {
            let start = Instant::now();
            let (passed, detail) = match check(opts) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect();
    SelftestReport { checks }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn moment_oracle(opts: &SelftestOptions) -> Result<String, String> {
    let tol_lin = opts.tolerance("moment_linear")?;
    let tol_st = opts.tolerance("moment_stable")?;
    let mut worst: f64 = 0.0;
    for k in [1.0, 2.0, 3.0] {
        for t in [0.5, 1.0, 2.0] {
            let v = BernsteinFunction::Linear.inverse_moment(k, t).map_err(err)?;
            let e = (v - t.powf(-k)).abs();
            if e > tol_lin {
                return Err(format!("moment_linear: k = {k}, t = {t} off by {e:e}"));
            }
            worst = worst.max(e);
        }
    }
    for theta in [0.5, 0.6, 0.75] {
        for t in [0.5, 1.0, 2.0] {
            let v = BernsteinFunction::stable(theta).map_err(err)?.inverse_moment(1.0, t).map_err(err)?;
            let e = (v - gamma(1.0 + 1.0 / theta) * t.powf(-1.0 / theta)).abs();
            if e > tol_st {
                return Err(format!("moment_stable: theta = {theta}, t = {t} off by {e:e}"));
            }
            worst = worst.max(e);
        }
    }
    Ok(format!("max error {worst:.1e}"))
}

fn sampler_laplace(opts: &SelftestOptions) -> Result<String, String> {
    let tol = opts.tolerance("laplace_z")?;
    let n = 20_000;
    let variants = [
        BernsteinFunction::Linear,
        BernsteinFunction::Stable { theta: 0.6 },
        BernsteinFunction::Gamma { a: 2.0, b: 1.0 },
        BernsteinFunction::TemperedStable { theta: 0.5, kappa: 1.0 },
    ];
    let mut worst: f64 = 0.0;
    for (v, b) in variants.iter().enumerate() {
        let draws = opts.workers.map(n, |i| {
            let s = RngStream::new(17, i as u64, v as u64).child(tags::CLOCK);
            sample_increment(b, 1.0, &mut s.rng())
        });
        let draws: Vec<f64> = draws.into_iter().collect::<Result<_, _>>().map_err(err)?;
        for r in [0.5, 1.0, 2.0] {
            let e = MCEstimate::from_samples(&draws.iter().map(|s| (-r * s).exp()).collect::<Vec<_>>());
            let z = e.z_against(b.laplace_transform(r, 1.0));
            if z.abs() > tol {
                return Err(format!("laplace_z: {b} at r = {r} has z = {z:.2}"));
            }
            worst = worst.max(z.abs());
        }
    }
    Ok(format!("max |z| {worst:.2}"))
}

fn girsanov_normalization(opts: &SelftestOptions) -> Result<String, String> {
    let tol = opts.tolerance("girsanov_z")?;
    let ou = SdeModel::new(Arc::new(OuDrift { dim: 1, a: 1.0 }), Diffusion::identity(1)).map_err(err)?;
    let cfg = CouplingConfig::new(vec![0.0], vec![1.0]).map_err(err)?;
    let grid = TimeGrid::uniform(1.0, 100).map_err(err)?;
    let mc = McConfig::new(20_000, 5).with_workers(opts.workers);
    let law = ClockLaw::new(BernsteinFunction::Linear);
    let ens = couple_ensemble(&ou, &cfg, &Observable::Const(1.0), &law, &grid, &mc).map_err(err)?;
    let z = ens.summary.weight.z_against(1.0);
    if z.abs() > tol {
        return Err(format!("girsanov_z: E R = {:.5} ± {:.1e}", ens.summary.weight.mean, ens.summary.weight.stderr));
    }
    Ok(format!("E R = {:.5} (z {z:.2})", ens.summary.weight.mean))
}

fn sharp_log_harnack(opts: &SelftestOptions) -> Result<String, String> {
    let tol = opts.tolerance("sharp_log_harnack_z")?;
    let bm = SdeModel::new(Arc::new(ZeroDrift { dim: 2 }), Diffusion::identity(2)).map_err(err)?;
    let mc = McConfig::new(20_000, 3).with_workers(opts.workers);
    let setup = CertifySetup::new(vec![0.0, 0.0], vec![1.0, 0.0], ClockLaw::new(BernsteinFunction::Linear), 1.0, 10, mc).map_err(err)?;
    let r = log_harnack_certificate(&Observable::ExpLinear(vec![1.0, 0.0]), &bm, &setup).map_err(err)?;
    let z_lhs = r.lhs.z_against(1.0);
    if r.z_score.abs() > tol || z_lhs.abs() > tol {
        return Err(format!("sharp_log_harnack_z: z = {:.2}, lhs z = {z_lhs:.2}", r.z_score));
    }
    Ok(format!("z {:.2}", r.z_score))
}

fn coupling_profile(opts: &SelftestOptions) -> Result<String, String> {
    let steps_tol = opts.tolerance("coupling_profile_steps")?;
    let m = 1000;
    let grid = TimeGrid::uniform(1.0, m).map_err(err)?;
    let h = 1.0 / m as f64;
    let bm = SdeModel::new(Arc::new(ZeroDrift { dim: 2 }), Diffusion::identity(2)).map_err(err)?;
    let cfg = CouplingConfig::new(vec![0.0, 0.0], vec![1.0, 1.0]).map_err(err)?;
    let noise = Noise::draw(2, &ClockLaw::new(BernsteinFunction::Linear), &grid, &Perturbation::Zero, RngStream::new(9, 0, 0)).map_err(err)?;
    let path = simulate_coupled(&bm, &cfg, &noise).map_err(err)?;
    let d0 = cfg.distance();
    let mut worst: f64 = 0.0;
    for (i, t) in grid.times().iter().enumerate() {
        let d: f64 = path.x.state(i).iter().zip(path.y.state(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max((d - d0 * (1.0 - t)).abs());
    }
    if worst > steps_tol * h || path.tau_index.is_none() {
        return Err(format!("coupling_profile_steps: deviation {worst:.2e} > {steps_tol}h or uncoupled"));
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn stream_run(opts: &SelftestOptions, workers: Workers) -> Result<f64, String> {
    let bm = SdeModel::new(Arc::new(ZeroDrift { dim: 1 }), Diffusion::identity(1)).map_err(err)?;
    let grid = TimeGrid::uniform(1.0, 20).map_err(err)?;
    let law = ClockLaw::new(BernsteinFunction::stable(0.75).map_err(err)?);
    let values = workers.map(2000, |i| {
        let noise = Noise::draw(1, &law, &grid, &Perturbation::Zero, (opts.stream_deriver)(11, i as u64))?;
        bm.terminal(&[0.0], &noise).map(|x| x[0].cos())
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_, _>>().map_err(err)?;
    Ok(MCEstimate::from_samples(&values).mean)
}

fn determinism(opts: &SelftestOptions) -> Result<String, String> {
    let a = stream_run(opts, Workers::new(1))?;
    let b = stream_run(opts, Workers::new(opts.workers.count().max(2)))?;
    if a.to_bits() != b.to_bits() {
        return Err(format!("stream derivation is not reproducible: {a} vs {b}"));
    }
    let cfg = json!({
        "schema": 1,
        "experiment": "certify-log",
        "model": {"dim": 1, "drift": {"name": "ou", "a": 1.0}},
        "clock": {"bernstein": {"type": "stable", "theta": 0.75}},
        "grid": {"T": 1.0, "M": 20},
        "mc": {"N": 2000, "seed": 1},
        "observable": {"name": "sin1", "offset": 2.0},
        "points": {"x": [0.0], "y": [0.5]}
    });
    let cfg = parse_config(&cfg.to_string()).map_err(err)?;
    let r1 = execute(&cfg, Workers::new(1)).map_err(err)?.deterministic_json();
    let r2 = execute(&cfg, Workers::new(opts.workers.count().max(2))).map_err(err)?.deterministic_json();
    if r1 != r2 {
        return Err("report JSON differs between worker counts".into());
    }
    Ok("streams and report JSON identical across worker counts".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    #[test]
    fn fresh_build_passes() {
        let r = run_selftest(&SelftestOptions::default());
        assert!(r.passed(), "{}", r.table());
        assert_eq!(r.checks.len(), 6);
    }

    #[test]
    fn corrupted_stream_derivation_fails_determinism() {
        let counter = Arc::new(AtomicU64::new(0));
        let opts = SelftestOptions {
            // depends on call history, not only on the replicate
            stream_deriver: Arc::new(move |seed, rep| RngStream::new(seed, rep + counter.fetch_add(1, Ordering::Relaxed), 0)),
            ..Default::default()
        };
        assert!(determinism(&opts).unwrap_err().contains("not reproducible"));
    }

    #[test]
    fn missing_tolerance_names_the_oracle() {
        let mut opts = SelftestOptions::default();
        opts.tolerances.remove("moment_stable");
        let e = moment_oracle(&opts).unwrap_err();
        assert!(e.contains("moment_stable"), "{e}");
        let table = SelftestReport {
            checks: vec![CheckResult {
                name: "moment oracle",
                passed: false,
                detail: e,
                seconds: 0.0,
            }],
        }
        .table();
        assert!(table.contains("FAIL") && table.contains("moment_stable"));
    }
}
