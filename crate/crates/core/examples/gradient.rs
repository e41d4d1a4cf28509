//! Gradient bound `|∇P_T f|² <= (P_T f² - (P_T f)²) · c(T)` with a
//! common-random-number finite-difference stencil.

use std::sync::Arc;

use subharnack::certify::{gradient_certificate, CertifySetup};
use subharnack::sde::{Diffusion, OuDrift, SdeModel, ZeroDrift};
use subharnack::{BernsteinFunction, ClockLaw, McConfig, Observable, Workers};

fn main() -> subharnack::Result<()> {
    let mc = McConfig::new(50_000, 3).with_workers(Workers::from_env());
    let bm = SdeModel::new(Arc::new(ZeroDrift { dim: 1 }), Diffusion::identity(1))?;
    let setup = CertifySetup::new(vec![0.0], vec![0.0], ClockLaw::new(BernsteinFunction::Linear), 1.0, 10, mc)?;
    let r = gradient_certificate(&Observable::sin1(), &bm, &setup, 1e-2)?;
    // with a standard W, P_T sin = e^{-T/2} sin
    println!("brownian sin: lhs {:.4} (exact {:.4}) rhs {:.4} -> {:?}", r.lhs.mean, (-1f64).exp(), r.rhs.mean, r.verdict);

    let ou = SdeModel::new(Arc::new(OuDrift { dim: 2, a: 1.0 }), Diffusion::identity(2))?;
    for clock in [BernsteinFunction::Linear, BernsteinFunction::stable(0.75)?, BernsteinFunction::gamma(3.0, 1.0)?] {
        let setup = CertifySetup::new(vec![0.3, -0.2], vec![0.3, -0.2], ClockLaw::new(clock), 1.0, 50, mc)?;
        let r = gradient_certificate(&Observable::Bump, &ou, &setup, 1e-2)?;
        println!("ou, bump, {clock}: lhs {:.5} rhs {:.5} z {:.1} -> {:?}", r.lhs.mean, r.rhs.mean, r.z_score, r.verdict);
    }
    Ok(())
}
