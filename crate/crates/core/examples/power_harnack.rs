//! Power-Harnack certificates for a few exponents `p`. The right side puts
//! the expectation outside the infimum over `t`.

use std::sync::Arc;

use subharnack::certify::{power_harnack_certificate, CertifySetup};
use subharnack::sde::{Diffusion, OuDrift, SdeModel, ZeroDrift};
use subharnack::{BernsteinFunction, ClockLaw, McConfig, Observable, Workers};

fn main() -> subharnack::Result<()> {
    let mc = McConfig::new(50_000, 2).with_workers(Workers::from_env());

    // equality case: both sides are e^3 for f = e^{z_1}, p = 2
    let bm = SdeModel::new(Arc::new(ZeroDrift { dim: 2 }), Diffusion::identity(2))?;
    let setup = CertifySetup::new(vec![0.0, 0.0], vec![1.0, 0.0], ClockLaw::new(BernsteinFunction::Linear), 1.0, 10, mc)?;
    let r = power_harnack_certificate(&Observable::ExpLinear(vec![1.0, 0.0]), 2.0, &bm, &setup)?;
    println!("gaussian p = 2: lhs {:.4} rhs {:.4} (e^3 = {:.4})", r.lhs.mean, r.rhs.mean, 3f64.exp());

    let ou = SdeModel::new(Arc::new(OuDrift { dim: 1, a: 1.0 }), Diffusion::identity(1))?;
    let setup = CertifySetup::new(vec![0.0], vec![0.5], ClockLaw::new(BernsteinFunction::stable(0.6)?), 1.0, 100, mc)?;
    for p in [1.5, 2.0, 4.0] {
        let r = power_harnack_certificate(&Observable::Sin { coord: 0, offset: 2.0 }, p, &ou, &setup)?;
        println!("ou, stable(0.6), p = {p}: lhs {:.4} rhs {:.4} z {:.2} -> {:?}", r.lhs.mean, r.rhs.mean, r.z_score, r.verdict);
    }
    Ok(())
}
