use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use subharnack::certify::Verdict;
use subharnack::coupling::{simulate_coupled, CouplingConfig};
use subharnack::galerkin::{Nonlinearity, Spectrum};
use subharnack::pathgen::{regularize, sample_subordinator, ClockPath};
use subharnack::runner::parse_config;
use subharnack::sde::{Diffusion, DoubleWellDrift, Drift, DriftSpec, Noise, Perturbation, SdeModel};
use subharnack::{BernsteinFunction, ClockLaw, RngStream, TimeGrid};

fn family() -> impl Strategy<Value = BernsteinFunction> {
    prop_oneof![
        Just(BernsteinFunction::Linear),
        (0.2..0.95f64).prop_map(|th| BernsteinFunction::stable(th).unwrap()),
        (0.5..4.0f64, 0.5..3.0f64).prop_map(|(a, b)| BernsteinFunction::gamma(a, b).unwrap()),
        (0.2..0.9f64, 0.2..2.0f64).prop_map(|(th, k)| BernsteinFunction::tempered_stable(th, k).unwrap()),
    ]
}

fn drift_spec() -> impl Strategy<Value = DriftSpec> {
    prop_oneof![
        Just(DriftSpec::Zero),
        (0.1..3.0f64).prop_map(|a| DriftSpec::Ou { a }),
        Just(DriftSpec::DoubleWell),
        (0.1..2.0f64, -2.0..2.0f64).prop_map(|(contraction, omega)| DriftSpec::Rotating { contraction, omega }),
    ]
}

fn dot_gap(d: &dyn Drift, x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    d.eval(0.0, x, &mut bx);
    d.eval(0.0, y, &mut by);
    let inner: f64 = (0..n).map(|i| (bx[i] - by[i]) * (x[i] - y[i])).sum();
    let sq: f64 = (0..n).map(|i| (x[i] - y[i]).powi(2)).sum();
    (inner, sq)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplace_transform_is_a_probability(b in family(), r in 0.0..20.0f64, t in 0.01..5.0f64) {
        prop_assert_eq!(b.laplace_transform(0.0, t), 1.0);
        let v = b.laplace_transform(r, t);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(b.laplace_transform(r + 1.0, t) <= v);
        prop_assert!(b.laplace_transform(r, t + 0.5) <= v);
    }

    #[test]
    fn inverse_moment_decreases_in_time(th in 0.3..0.95f64, k in 0.5..2.5f64, t in 0.1..5.0f64) {
        let b = BernsteinFunction::stable(th).unwrap();
        let near = b.inverse_moment(k, t).unwrap();
        let far = b.inverse_moment(k, t * 1.3).unwrap();
        prop_assert!(far < near, "{far} !< {near}");
    }

    // plain monotonicity in k fails once S(t) sits above 1; Lyapunov's form does not
    #[test]
    fn inverse_moment_norm_grows_with_order(b in family(), t in 0.5..4.0f64, k in 0.3..1.5f64) {
        let t = match b {
            // keep a t > k + 1 so both moments exist
            BernsteinFunction::Gamma { a, .. } => t.max((k + 1.6) / a),
            _ => t,
        };
        let lo = b.inverse_moment(k, t).unwrap().powf(1.0 / k);
        let hi = b.inverse_moment(k + 0.5, t).unwrap().powf(1.0 / (k + 0.5));
        prop_assert!(hi >= lo * (1.0 - 1e-7), "{lo} > {hi}");
    }

    #[test]
    fn stable_inverse_moment_scales(th in 0.3..0.95f64, t in 0.1..10.0f64) {
        let b = BernsteinFunction::stable(th).unwrap();
        let at1 = b.inverse_moment(1.0, 1.0).unwrap();
        let scaled = b.inverse_moment(1.0, t).unwrap() * t.powf(1.0 / th);
        prop_assert!((scaled / at1 - 1.0).abs() < 1e-6, "{scaled} vs {at1}");
    }

    #[test]
    fn subordinator_paths_start_at_zero_and_never_decrease(b in family(), seed in any::<u64>(), steps in 1usize..200, horizon in 0.05..3.0f64) {
        let grid = TimeGrid::uniform(horizon, steps).unwrap();
        let path = sample_subordinator(&b, &grid, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let v = path.values();
        prop_assert_eq!(v[0], 0.0);
        prop_assert!(v.iter().all(|x| x.is_finite()));
        prop_assert!(v.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn regularized_clock_grows_at_least_like_epsilon(b in family(), seed in any::<u64>(), eps in 0.01..0.5f64) {
        let grid = TimeGrid::uniform(1.0, 100).unwrap().extended_to(1.0 + eps);
        let path = sample_subordinator(&b, &grid, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let reg = regularize(&path, eps, 1.0).unwrap();
        let (t, v) = (reg.grid().times(), reg.values());
        for i in 0..t.len() - 1 {
            let slope = (v[i + 1] - v[i]) / (t[i + 1] - t[i]);
            prop_assert!(slope >= eps * (1.0 - 1e-9), "slope {slope} < {eps} at {i}");
        }
        // averaging forward dominates the raw path
        for (i, &s) in path.values()[..v.len()].iter().enumerate() {
            prop_assert!(v[i] >= s - 1e-12);
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), rep in any::<u64>(), tag in 0u64..1 << 16) {
        use rand::Rng;
        let s = RngStream::new(seed, rep, tag);
        let a: Vec<u64> = s.rng().random_iter().take(8).collect();
        let b: Vec<u64> = s.rng().random_iter().take(8).collect();
        prop_assert_eq!(&a, &b);
        let other: Vec<u64> = RngStream::new(seed, rep.wrapping_add(1), tag).rng().random_iter().take(8).collect();
        prop_assert_ne!(a, other);
    }

    #[test]
    fn verdict_thresholds(z in -20.0..20.0f64) {
        let v = Verdict::from_z(z);
        let want = if z >= -3.0 { Verdict::Certified } else if z < -5.0 { Verdict::Violated } else { Verdict::Inconclusive };
        prop_assert_eq!(v, want);
    }

    #[test]
    fn zoo_drifts_respect_their_one_sided_bound(spec in drift_spec(), dim in 1usize..5, seed in any::<u64>()) {
        let dim = if matches!(spec, DriftSpec::Rotating { .. }) { 2 } else { dim };
        let d = spec.build(dim).unwrap();
        let k = d.one_sided_bound(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            use rand::Rng;
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
            let (inner, sq) = dot_gap(d.as_ref(), &x, &y);
            prop_assert!(inner <= k * sq + 1e-10 * (1.0 + sq), "{inner} > {k} * {sq}");
        }
    }

    #[test]
    fn saturating_nonlinearity_is_lipschitz(c in -3.0..3.0f64, x in prop::collection::vec(-5.0..5.0f64, 3), y in prop::collection::vec(-5.0..5.0f64, 3)) {
        let f = Nonlinearity::Saturating { strength: c };
        let (mut fx, mut fy) = (vec![0.0; 3], vec![0.0; 3]);
        f.eval(0.0, &x, &mut fx);
        f.eval(0.0, &y, &mut fy);
        let gap: f64 = fx.iter().zip(&fy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dist: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(gap <= f.lipschitz() * dist * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn poly_spectrum_is_ordered(gamma in 0.0..3.0f64, n in 1usize..64) {
        let s = Spectrum::poly(gamma, n).unwrap();
        prop_assert_eq!(s.n(), n);
        prop_assert!(s.eigenvalues().iter().all(|&l| l >= 0.0));
        prop_assert!(s.eigenvalues().windows(2).all(|w| w[1] >= w[0]));
        let a = s.a1_diagnostic(1.0).partial_sum;
        prop_assert!(s.truncated(n.div_ceil(2)).unwrap().a1_diagnostic(1.0).partial_sum <= a);
    }

    #[test]
    fn dense_diffusion_inverts(a in 0.5..3.0f64, b in -0.4..0.4f64, c in -0.4..0.4f64, d in 0.5..3.0f64) {
        let sigma = Diffusion::dense(2, vec![a, b, c, d]).unwrap();
        for v in [[1.0, 0.0], [0.0, 1.0], [0.3, -0.7]] {
            let (mut w, mut back) = ([0.0; 2], [0.0; 2]);
            sigma.apply(&v, &mut w);
            sigma.apply_inverse(&w, &mut back);
            prop_assert!((back[0] - v[0]).abs() < 1e-12 && (back[1] - v[1]).abs() < 1e-12);
        }
        prop_assert!(sigma.inverse_bound() > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coupled_paths_stay_together(seed in any::<u64>(), x in -2.0..2.0f64, y in -2.0..2.0f64) {
        prop_assume!((x - y).abs() > 1e-3);
        let grid = TimeGrid::uniform(1.0, 200).unwrap();
        let law = ClockLaw::regularized(BernsteinFunction::stable(0.75).unwrap(), 0.05);
        let model = SdeModel::new(Arc::new(DoubleWellDrift { dim: 1 }), Diffusion::identity(1)).unwrap();
        let noise = Noise::draw(1, &law, &grid, &Perturbation::Zero, RngStream::new(seed, 0, 0)).unwrap();
        let cfg = CouplingConfig::new(vec![x], vec![y]).unwrap();
        let p = simulate_coupled(&model, &cfg, &noise).unwrap();
        prop_assert!(p.log_weight.is_finite());
        prop_assert!(p.eta_sq_integral >= 0.0);
        let tau = p.tau_index.expect("coupled by T");
        for i in tau..=grid.steps() {
            prop_assert_eq!(p.x.state(i), p.y.state(i));
        }
    }

    #[test]
    fn config_rejects_stray_keys(which in 0usize..5, key in "[a-z]{3,8}") {
        let mut cfg = json!({
            "schema": 1,
            "experiment": "certify-log",
            "model": {"dim": 1, "drift": {"name": "ou"}},
            "clock": {"bernstein": {"type": "linear"}},
            "grid": {"T": 1.0, "M": 10},
            "mc": {"N": 100, "seed": 1},
            "observable": {"name": "bump"},
            "points": {"x": [0.0], "y": [1.0]}
        });
        prop_assert!(parse_config(&cfg.to_string()).is_ok());
        let target: &mut Value = match which {
            0 => &mut cfg,
            1 => &mut cfg["model"]["drift"],
            2 => &mut cfg["clock"]["bernstein"],
            3 => &mut cfg["grid"],
            _ => &mut cfg["observable"],
        };
        let obj = target.as_object_mut().unwrap();
        prop_assume!(!obj.contains_key(&key));
        obj.insert(key, json!(1));
        prop_assert!(parse_config(&cfg.to_string()).is_err());
    }
}
