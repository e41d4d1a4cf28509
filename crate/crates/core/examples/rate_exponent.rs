//! Small-time blow-up of the rate constant: `E[1/S(T)] ~ T^{-1/θ}`.

use subharnack::certify::stable_rate_check;
use subharnack::{BernsteinFunction, McConfig, Workers};

fn main() -> subharnack::Result<()> {
    let t_grid: Vec<f64> = (0..6).map(|i| 0.1 * 10f64.powf(i as f64 / 5.0)).collect();
    let mc = McConfig::new(50_000, 4).with_workers(Workers::from_env());
    // the tempered clock is stable-like only as T -> 0, so its fit on
    // [0.1, 1] misses -1/θ
    for b in [BernsteinFunction::stable(0.5)?, BernsteinFunction::stable(0.75)?, BernsteinFunction::tempered_stable(0.6, 0.1)?] {
        let fit = stable_rate_check(&b, &t_grid, &mc)?;
        println!(
            "{b}: slope {:.4} ± {:.1e}, expected {:.4}, z {:.2}",
            fit.fitted_slope,
            fit.slope_stderr,
            fit.expected_slope(),
            fit.z_score()
        );
    }
    Ok(())
}
