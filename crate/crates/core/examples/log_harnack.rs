//! Log-Harnack certificates: the sharp Brownian case and a double-well
//! model on a stable clock.

use std::sync::Arc;

use subharnack::certify::{log_harnack_certificate, CertifySetup};
use subharnack::sde::{Diffusion, DoubleWellDrift, Scheme, SdeModel, ZeroDrift};
use subharnack::{BernsteinFunction, ClockLaw, McConfig, Observable, Workers};

fn main() -> subharnack::Result<()> {
    let mc = McConfig::new(50_000, 1).with_workers(Workers::from_env());

    // P_1 log f(y) = 1 = log P_1 f(x) + |x - y|²/2 for f = e^{z_1}
    let bm = SdeModel::new(Arc::new(ZeroDrift { dim: 2 }), Diffusion::identity(2))?;
    let setup = CertifySetup::new(vec![0.0, 0.0], vec![1.0, 0.0], ClockLaw::new(BernsteinFunction::Linear), 1.0, 10, mc)?;
    let r = log_harnack_certificate(&Observable::ExpLinear(vec![1.0, 0.0]), &bm, &setup)?;
    println!("brownian, f = exp(z1): lhs {:.4} rhs {:.4} z {:.2} -> {:?}", r.lhs.mean, r.rhs.mean, r.z_score, r.verdict);

    let dw = SdeModel::new(Arc::new(DoubleWellDrift { dim: 1 }), Diffusion::identity(1))?.with_scheme(Scheme::DriftImplicit);
    let setup = CertifySetup::new(vec![-0.5], vec![0.5], ClockLaw::new(BernsteinFunction::stable(0.75)?), 1.0, 100, mc)?;
    let r = log_harnack_certificate(&Observable::Sin { coord: 0, offset: 2.0 }, &dw, &setup)?;
    println!("double well, stable(0.75): lhs {:.4} rhs {:.4} z {:.2} -> {:?}", r.lhs.mean, r.rhs.mean, r.z_score, r.verdict);
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}
