//! Inverse moments `E[S(t)^{-k}]` for each clock family, next to the closed
//! forms where they exist.

use subharnack::special::gamma;
use subharnack::BernsteinFunction;

fn main() -> subharnack::Result<()> {
    let t = 0.5;
    println!("{:<36} {:>4} {:>16} {:>16}", "clock", "k", "quadrature", "closed form");
    for k in [1.0, 2.0] {
        let v = BernsteinFunction::Linear.inverse_moment(k, t)?;
        println!("{:<36} {k:>4} {v:>16.10} {:>16.10}", "linear", t.powf(-k));
    }
    for theta in [0.5, 0.75] {
        let b = BernsteinFunction::stable(theta)?;
        // E S^{-k} = Γ(1 + k/θ) / Γ(1 + k) · t^{-k/θ}
        for k in [1.0, 2.0] {
            let exact = gamma(1.0 + k / theta) / gamma(1.0 + k) * t.powf(-k / theta);
            println!("{:<36} {k:>4} {:>16.10} {exact:>16.10}", b.to_string(), b.inverse_moment(k, t)?);
        }
    }
    // S(t) ~ Gamma(shape a t, rate b): E S^{-k} = b^k Γ(a t - k) / Γ(a t)
    let (a, rate) = (4.0, 2.0);
    let b = BernsteinFunction::gamma(a, rate)?;
    for k in [1.0, 1.5] {
        let exact = rate.powf(k) * gamma(a * t - k) / gamma(a * t);
        println!("{:<36} {k:>4} {:>16.10} {exact:>16.10}", b.to_string(), b.inverse_moment(k, t)?);
    }
    let b = BernsteinFunction::tempered_stable(0.6, 1.0)?;
    let (v, err) = b.inverse_moment_with_error(1.0, t)?;
    println!("{:<36} {:>4} {v:>16.10} {:>16}", b.to_string(), 1, format!("(± {err:.0e})"));
    // a gamma clock with a t <= k has no such moment
    match BernsteinFunction::gamma(1.0, 1.0)?.inverse_moment(1.0, 0.5) {
        Err(e) => println!("gamma(a=1, b=1), k = 1, t = 0.5: {e}"),
        Ok(v) => println!("unexpected finite value {v}"),
    }
    Ok(())
}
