//! Acceptance suite: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Runs without the libtest harness so the table always prints.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};
use subharnack::certify::{gradient_certificate, log_harnack_certificate, power_harnack_certificate, stable_rate_check, CertifySetup, Verdict};
use subharnack::coupling::{couple_ensemble, harnack_transfer_check, simulate_coupled, CouplingConfig};
use subharnack::galerkin::{dimension_free_check, Nonlinearity, SemilinearModel, Spectrum};
use subharnack::pathgen::sample_increment;
use subharnack::rng::{tags, RngStream};
use subharnack::sde::{
    regularization_sup_gaps, Diffusion, DoubleWellDrift, Drift, Noise, OuDrift, Perturbation, RotatingDrift, Scheme, SdeModel, ZeroDrift,
};
use subharnack::special::gamma;
use subharnack::{BernsteinFunction, ClockLaw, McConfig, MCEstimate, Observable, TimeGrid, Workers};

struct Verdicts {
    pass: bool,
    detail: String,
}

fn pass_if(pass: bool, detail: String) -> Verdicts {
    Verdicts { pass, detail }
}

type Criterion = fn(Workers) -> Verdicts;

fn workers() -> Workers {
    Workers::new(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn model(drift: Arc<dyn Drift>, dim: usize) -> SdeModel {
    SdeModel::new(drift, Diffusion::identity(dim)).unwrap()
}

fn ou(a: f64) -> SdeModel {
    model(Arc::new(OuDrift { dim: 1, a }), 1)
}

fn double_well() -> SdeModel {
    model(Arc::new(DoubleWellDrift { dim: 1 }), 1).with_scheme(Scheme::DriftImplicit)
}

fn stable(theta: f64) -> BernsteinFunction {
    BernsteinFunction::stable(theta).unwrap()
}

fn est(e: &MCEstimate) -> String {
    format!("{:.5}±{:.1e}", e.mean, e.stderr)
}

fn moment_oracle(_: Workers) -> Verdicts {
    let mut worst_lin: f64 = 0.0;
    let mut worst_st: f64 = 0.0;
    for k in [1.0, 2.0, 3.0] {
        for t in [0.5, 1.0, 2.0] {
            let v = BernsteinFunction::Linear.inverse_moment(k, t).unwrap();
            worst_lin = worst_lin.max((v - t.powf(-k)).abs());
        }
    }
    for theta in [0.5, 0.6, 0.75] {
        for t in [0.5, 1.0, 2.0] {
            let v = stable(theta).inverse_moment(1.0, t).unwrap();
            worst_st = worst_st.max((v - gamma(1.0 + 1.0 / theta) * t.powf(-1.0 / theta)).abs());
        }
    }
    pass_if(worst_lin <= 1e-9 && worst_st <= 1e-6, format!("linear max err {worst_lin:.1e}, stable max err {worst_st:.1e}"))
}

fn sampler_fidelity(w: Workers) -> Verdicts {
    let variants = [
        BernsteinFunction::Linear,
        stable(0.75),
        BernsteinFunction::gamma(2.0, 1.0).unwrap(),
        BernsteinFunction::tempered_stable(0.5, 1.0).unwrap(),
    ];
    let n = 100_000;
    let mut worst: (f64, String) = (0.0, String::new());
    for (v, b) in variants.iter().enumerate() {
        for (ti, t) in [0.5, 1.0].into_iter().enumerate() {
            let draws = w.map(n, |i| {
                let s = RngStream::new(2024, i as u64, (v * 2 + ti) as u64).child(tags::CLOCK);
                sample_increment(b, t, &mut s.rng()).unwrap()
            });
            for r in [0.5, 1.0, 2.0] {
                let e = MCEstimate::from_samples(&draws.iter().map(|s| (-r * s).exp()).collect::<Vec<_>>());
                let z = e.z_against(b.laplace_transform(r, t)).abs();
                if z > worst.0 {
                    worst = (z, format!("{b}, t={t}, r={r}"));
                }
            }
        }
    }
    pass_if(worst.0 <= 3.0, format!("24 comparisons, max |z| {:.2} at {}", worst.0, worst.1))
}

fn girsanov(w: Workers) -> Verdicts {
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let cfg = CouplingConfig::new(vec![0.0], vec![1.0]).unwrap();
    let clocks = [("linear", ClockLaw::new(BernsteinFunction::Linear)), ("stable0.75", ClockLaw::regularized(stable(0.75), 0.05))];
    let mut pass = true;
    let mut detail = Vec::new();
    for (mname, m) in [("ou", ou(1.0)), ("double_well", double_well())] {
        for (cname, law) in &clocks {
            let mc = McConfig::new(100_000, 31).with_workers(w);
            let ens = couple_ensemble(&m, &cfg, &Observable::Const(1.0), law, &grid, &mc).unwrap();
            let s = &ens.summary;
            let z = s.weight.z_against(1.0);
            pass &= z.abs() <= 3.0;
            let mut line = format!("{mname}/{cname}: E R {} (z {z:.2})", est(&s.weight));
            if mname == "ou" {
                let se = s.entropy.stderr.hypot(s.entropy_target.stderr);
                let ze = (s.entropy.mean - s.entropy_target.mean) / se;
                pass &= ze.abs() <= 3.0;
                line.push_str(&format!(", E R log R {} vs {} (z {ze:.2})", est(&s.entropy), est(&s.entropy_target)));
            }
            detail.push(line);
        }
    }
    pass_if(pass, detail.join("; "))
}

fn coupling(w: Workers) -> Verdicts {
    let grid = TimeGrid::uniform(1.0, 1000).unwrap();
    let h = 1e-3;
    let mut pass = true;
    let mut detail = Vec::new();
    let models: [(&str, SdeModel, Vec<f64>, Vec<f64>); 3] = [
        ("brownian", model(Arc::new(ZeroDrift { dim: 2 }), 2), vec![0.0, 0.0], vec![1.0, -0.5]),
        ("ou", ou(1.0), vec![0.0], vec![2.0]),
        ("rotating", model(Arc::new(RotatingDrift { contraction: 0.5, omega: 1.0 }), 2), vec![0.0, 0.0], vec![1.0, 1.0]),
    ];
    for (name, m, x, y) in &models {
        let cfg = CouplingConfig::new(x.clone(), y.clone()).unwrap().with_delta(1e-6).unwrap();
        for (cname, law) in [("linear", ClockLaw::new(BernsteinFunction::Linear)), ("stable0.75", ClockLaw::regularized(stable(0.75), 0.05))] {
            let mc = McConfig::new(10_000, 41).with_workers(w);
            let ens = couple_ensemble(m, &cfg, &Observable::Const(1.0), &law, &grid, &mc).unwrap();
            pass &= ens.summary.coupled_fraction >= 0.999;
            detail.push(format!("{name}/{cname} coupled {:.4}", ens.summary.coupled_fraction));
        }
    }
    // deterministic distance: K = 0, linear clock
    let bm = model(Arc::new(ZeroDrift { dim: 2 }), 2);
    let cfg = CouplingConfig::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap().with_delta(1e-6).unwrap();
    let d0 = cfg.distance();
    let mut worst: f64 = 0.0;
    for rep in 0..20 {
        let noise = Noise::draw(2, &ClockLaw::new(BernsteinFunction::Linear), &grid, &Perturbation::Zero, RngStream::new(43, rep, 0)).unwrap();
        let p = simulate_coupled(&bm, &cfg, &noise).unwrap();
        for (i, t) in grid.times().iter().enumerate() {
            let d = p.x.state(i).iter().zip(p.y.state(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            worst = worst.max((d - d0 * (1.0 - t)).abs());
        }
    }
    pass &= worst <= 2.0 * h;
    detail.push(format!("profile max deviation {worst:.1e} (limit {:.0e})", 2.0 * h));
    pass_if(pass, detail.join("; "))
}

type TransferCase = (&'static str, SdeModel, Observable, ClockLaw, Vec<f64>, Vec<f64>);

fn transfer(w: Workers) -> Verdicts {
    let m = 200;
    let h = 1.0 / m as f64;
    let grid = TimeGrid::uniform(1.0, m).unwrap();
    let cases: [TransferCase; 3] = [
        ("ou/2+sin/linear", ou(1.0), Observable::Sin { coord: 0, offset: 2.0 }, ClockLaw::new(BernsteinFunction::Linear), vec![0.0], vec![1.0]),
        ("double_well/bump/stable0.75", double_well(), Observable::Bump, ClockLaw::regularized(stable(0.75), 0.05), vec![-0.5], vec![0.5]),
        (
            "rotating/min_norm/gamma",
            model(Arc::new(RotatingDrift { contraction: 0.5, omega: 1.0 }), 2),
            Observable::MinNorm,
            ClockLaw::regularized(BernsteinFunction::gamma(2.0, 1.0).unwrap(), 0.1),
            vec![0.0, 0.0],
            vec![1.0, 0.5],
        ),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, model, f, law, x, y) in &cases {
        let cfg = CouplingConfig::new(x.clone(), y.clone()).unwrap();
        let mc = McConfig::new(100_000, 51).with_workers(w);
        let (a, b) = harnack_transfer_check(f, model, &cfg, law, &grid, &mc).unwrap();
        let gap = (a.mean - b.mean).abs();
        let limit = 3.0 * a.stderr.hypot(b.stderr) + 5.0 * h;
        pass &= gap <= limit;
        detail.push(format!("{name}: {} vs {} gap {gap:.1e} <= {limit:.1e}", est(&a), est(&b)));
    }
    pass_if(pass, detail.join("; "))
}

fn sharp_log_harnack(w: Workers) -> Verdicts {
    let bm = model(Arc::new(ZeroDrift { dim: 2 }), 2);
    let setup = CertifySetup::new(vec![0.0, 0.0], vec![1.0, 0.0], ClockLaw::new(BernsteinFunction::Linear), 1.0, 10, McConfig::new(100_000, 61).with_workers(w)).unwrap();
    let r = log_harnack_certificate(&Observable::ExpLinear(vec![1.0, 0.0]), &bm, &setup).unwrap();
    pass_if(
        (-3.0..=3.0).contains(&r.z_score),
        format!("lhs {} (analytic 1), rhs {} (analytic 1), z {:.2}", est(&r.lhs), est(&r.rhs), r.z_score),
    )
}

fn power_harnack(w: Workers) -> Verdicts {
    let bm = model(Arc::new(ZeroDrift { dim: 2 }), 2);
    let setup = CertifySetup::new(vec![0.0, 0.0], vec![1.0, 0.0], ClockLaw::new(BernsteinFunction::Linear), 1.0, 10, McConfig::new(100_000, 71).with_workers(w)).unwrap();
    let r = power_harnack_certificate(&Observable::ExpLinear(vec![1.0, 0.0]), 2.0, &bm, &setup).unwrap();
    let e3 = 3f64.exp();
    let (zl, zr) = (r.lhs.z_against(e3), r.rhs.z_against(e3));
    let gaussian = zl.abs() <= 3.0 && zr.abs() <= 3.0;
    let setup = CertifySetup::new(vec![0.0], vec![0.5], ClockLaw::new(stable(0.6)), 1.0, 100, McConfig::new(100_000, 72).with_workers(w)).unwrap();
    let nl = power_harnack_certificate(&Observable::Sin { coord: 0, offset: 2.0 }, 2.0, &double_well(), &setup).unwrap();
    pass_if(
        gaussian && nl.verdict == Verdict::Certified,
        format!(
            "gaussian lhs {} (z {zl:.2}) rhs {} (z {zr:.2}) vs e^3 = {e3:.4}; double_well/stable0.6 {:?} (z {:.2})",
            est(&r.lhs),
            est(&r.rhs),
            nl.verdict,
            nl.z_score
        ),
    )
}

fn gradient(w: Workers) -> Verdicts {
    let bm = model(Arc::new(ZeroDrift { dim: 1 }), 1);
    let setup = CertifySetup::new(vec![0.0], vec![0.0], ClockLaw::new(BernsteinFunction::Linear), 1.0, 10, McConfig::new(100_000, 81).with_workers(w)).unwrap();
    let r = gradient_certificate(&Observable::sin1(), &bm, &setup, 1e-2).unwrap();
    let se = r.lhs.stderr.hypot(r.rhs.stderr);
    let margin = r.slack - 3.0 * se;
    let lhs_ok = (r.lhs.mean - 0.1353).abs() <= 3.0 * r.lhs.stderr + 1e-3;
    let rhs_ok = (r.rhs.mean - 0.4323).abs() <= 3.0 * r.rhs.stderr + 1e-3;
    pass_if(
        lhs_ok && rhs_ok && r.verdict == Verdict::Certified && margin > 0.25,
        format!(
            "lhs {} (target 0.1353: {}), rhs {} (target 0.4323: {}), {:?}, slack - 3se = {margin:.4} (needs > 0.25)",
            est(&r.lhs),
            if lhs_ok { "ok" } else { "off" },
            est(&r.rhs),
            if rhs_ok { "ok" } else { "off" },
            r.verdict
        ),
    )
}

fn rate_exponents(w: Workers) -> Verdicts {
    let t_grid: Vec<f64> = (0..6).map(|i| 0.1 * 10f64.powf(i as f64 / 5.0)).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for theta in [0.5, 0.75] {
        let fit = stable_rate_check(&stable(theta), &t_grid, &McConfig::new(100_000, 91).with_workers(w)).unwrap();
        let z = fit.z_score();
        pass &= z.abs() <= 3.0;
        detail.push(format!("theta {theta}: slope {:.4}±{:.1e} vs {:.4} (z {z:.2})", fit.fitted_slope, fit.slope_stderr, fit.expected_slope()));
    }
    pass_if(pass, detail.join("; "))
}

fn dimension_free(w: Workers) -> Verdicts {
    let family = |n: usize| SemilinearModel::new(Spectrum::poly(2.0, n)?, Nonlinearity::Zero, Diffusion::identity(n));
    let f = Observable::Sin { coord: 0, offset: 2.0 };
    let law = ClockLaw::new(stable(0.75));
    let r = dimension_free_check(family, &[4, 16, 64], &f, &[0.0], &[1.0], &law, 1.0, 50, &McConfig::new(20_000, 101).with_workers(w)).unwrap();
    let identical = r.rhs_constants.windows(2).all(|p| p[0] == p[1]);
    let slacks: Vec<String> = r.reports.iter().map(|x| format!("{:.4}", x.slack)).collect();
    pass_if(
        r.no_negative_trend && identical,
        format!(
            "slacks [{}], slope {:.2e}±{:.1e}, rate constants identical: {identical}, dimension-free label: {}",
            slacks.join(", "),
            r.trend.slope,
            r.trend.slope_stderr,
            r.dimension_free
        ),
    )
}

fn monotone_fraction(b: &BernsteinFunction, w: Workers) -> f64 {
    let grid = TimeGrid::uniform(1.0, 1000).unwrap();
    let eps = [0.2, 0.1, 0.05, 0.025];
    let m = ou(1.0);
    let gaps = w.map(100, |i| regularization_sup_gaps(&m, &[0.0], b, &grid, &eps, RngStream::new(111, i as u64, 0)).unwrap());
    gaps.iter().filter(|g| g.windows(2).all(|p| p[1] < p[0])).count() as f64 / 100.0
}

fn regularization(w: Workers) -> Verdicts {
    let frac = monotone_fraction(&stable(0.75), w);
    let linear = monotone_fraction(&BernsteinFunction::Linear, w);
    pass_if(
        frac >= 0.95,
        format!("stable0.75/ou: {:.0}% of paths monotone (needs 95%); linear clock for reference: {:.0}%", frac * 100.0, linear * 100.0),
    )
}

fn strip(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("runtime_seconds");
            m.values_mut().for_each(strip);
        }
        Value::Array(a) => a.iter_mut().for_each(strip),
        _ => {}
    }
}

fn run_cli(config: &Path, workers: usize) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_subharnack"))
        .arg("run")
        .arg(config)
        .env("SUBHARNACK_WORKERS", workers.to_string())
        .output()
        .unwrap();
    assert!(matches!(out.status.code(), Some(0 | 2 | 3)), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = config.with_extension("out");
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    strip(&mut v);
    v
}

fn determinism(_: Workers) -> Verdicts {
    let tmp = tempfile::tempdir().unwrap();
    let common = json!({
        "schema": 1,
        "model": {"dim": 1, "drift": {"name": "ou", "a": 1.0}},
        "clock": {"bernstein": {"type": "stable", "theta": 0.75}, "epsilon": 0.05},
        "grid": {"T": 1.0, "M": 50},
        "mc": {"N": 4000, "seed": 5},
        "observable": {"name": "sin1", "offset": 2.0},
        "points": {"x": [0.0], "y": [0.5]}
    });
    let mut configs = Vec::new();
    for kind in ["certify-log", "certify-power", "certify-gradient", "couple", "simulate"] {
        let mut c = common.clone();
        c["experiment"] = json!(kind);
        if kind == "certify-power" {
            c["params"] = json!({"p": 2.0});
        }
        configs.push((kind.to_string(), c));
    }
    configs.push((
        "galerkin-check".into(),
        json!({
            "schema": 1, "experiment": "galerkin-check",
            "model": {"spectrum": {"growth": "poly", "gamma": 2.0, "n": 16}},
            "clock": {"bernstein": {"type": "stable", "theta": 0.75}},
            "grid": {"T": 1.0, "M": 20}, "mc": {"N": 2000, "seed": 5},
            "observable": {"name": "sin1", "offset": 2.0},
            "points": {"x": [0.0], "y": [1.0]}, "params": {"dims": [2, 8, 16]}
        }),
    ));
    configs.push((
        "rate-check".into(),
        json!({
            "schema": 1, "experiment": "rate-check",
            "clock": {"bernstein": {"type": "stable", "theta": 0.5}},
            "mc": {"N": 4000, "seed": 5}, "params": {"T_grid": [0.1, 0.2, 0.5, 1.0]}
        }),
    ));
    let mut differing = Vec::new();
    for (kind, c) in &configs {
        let path = tmp.path().join(format!("{kind}.json"));
        let mut c = c.clone();
        c["output"] = json!({"dir": format!("{kind}.out")});
        std::fs::write(&path, c.to_string()).unwrap();
        let a = run_cli(&path, 1);
        let b = run_cli(&path, 4);
        if a != b {
            differing.push(kind.clone());
        }
    }
    pass_if(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} configs identical with SUBHARNACK_WORKERS=1 and 4", configs.len())
        } else {
            format!("reports differ for {}", differing.join(", "))
        },
    )
}

fn main() {
    let w = workers();
    let criteria: [(&str, Criterion); 12] = [
        ("moment oracle", moment_oracle),
        ("sampler fidelity", sampler_fidelity),
        ("girsanov normalization", girsanov),
        ("coupling", coupling),
        ("transfer identity", transfer),
        ("sharp log-harnack", sharp_log_harnack),
        ("power-harnack", power_harnack),
        ("gradient bound", gradient),
        ("rate exponents", rate_exponents),
        ("dimension-freeness", dimension_free),
        ("regularization", regularization),
        ("determinism", determinism),
    ];
    // `cargo test -- <filter>` selects criteria by name substring
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    println!("acceptance ({} workers)", w.count());
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = run(w);
        let secs = start.elapsed().as_secs_f64();
        println!("{} {:>2} {name:<24} {secs:>7.1}s  {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        if !v.pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
