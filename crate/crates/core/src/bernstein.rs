//! Bernstein functions `B` and the moments of the subordinator they induce,
//! `E e^{-r S(t)} = e^{-t B(r)}`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::special;

/// The supported closed set of Bernstein functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BernsteinFunction {
    /// `B(r) = r`: the deterministic clock `S(t) = t`.
    Linear,
    /// `B(r) = r^theta`, `theta` in (0, 1).
    Stable { theta: f64 },
    /// `B(r) = a log(1 + r / b)`.
    Gamma { a: f64, b: f64 },
    /// `B(r) = (r + kappa)^theta - kappa^theta`.
    TemperedStable { theta: f64, kappa: f64 },
}

impl fmt::Display for BernsteinFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear => write!(f, "linear"),
            Self::Stable { theta } => write!(f, "stable(theta={theta})"),
            Self::Gamma { a, b } => write!(f, "gamma(a={a}, b={b})"),
            Self::TemperedStable { theta, kappa } => {
                write!(f, "tempered_stable(theta={theta}, kappa={kappa})")
            }
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("theta", format!("must lie in (0, 1), got {theta}")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

// absolute target of the whole inverse-moment integral
const MOMENT_ABS_TOL: f64 = 1e-10;
// the tail beyond the last panel must stay below this
const TAIL_TOL: f64 = 1e-12;
const MAX_TAIL_PANELS: usize = 1100;

impl BernsteinFunction {
    pub fn stable(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self::Stable { theta })
    }

    pub fn gamma(a: f64, b: f64) -> Result<Self> {
        check_positive("a", a)?;
        check_positive("b", b)?;
        Ok(Self::Gamma { a, b })
    }

    pub fn tempered_stable(theta: f64, kappa: f64) -> Result<Self> {
        check_theta(theta)?;
        check_positive("kappa", kappa)?;
        Ok(Self::TemperedStable { theta, kappa })
    }

    /// Re-check parameters, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Linear => Ok(()),
            Self::Stable { theta } => check_theta(theta),
            Self::Gamma { a, b } => {
                check_positive("a", a)?;
                check_positive("b", b)
            }
            Self::TemperedStable { theta, kappa } => {
                check_theta(theta)?;
                check_positive("kappa", kappa)
            }
        }
    }

    /// Growth exponent: `B(r) ~ r^theta` at infinity (1 for linear, 0 for gamma).
    pub fn growth_exponent(&self) -> f64 {
        match *self {
            Self::Linear => 1.0,
            Self::Stable { theta } | Self::TemperedStable { theta, .. } => theta,
            Self::Gamma { .. } => 0.0,
        }
    }

    pub fn evaluate(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        match *self {
            Self::Linear => r,
            Self::Stable { theta } => r.powf(theta),
            Self::Gamma { a, b } => a * (r / b).ln_1p(),
            Self::TemperedStable { theta, kappa } => (r + kappa).powf(theta) - kappa.powf(theta),
        }
    }

    /// `E e^{-r S(t)} = e^{-t B(r)}`.
    pub fn laplace_transform(&self, r: f64, t: f64) -> f64 {
        (-t * self.evaluate(r)).exp()
    }

    /// `E[S(t)^{-k}] = Γ(k)^{-1} ∫_0^∞ r^{k-1} e^{-t B(r)} dr`, by adaptive
    /// quadrature with an analytic tail bound.
    pub fn inverse_moment(&self, k: f64, t: f64) -> Result<f64> {
        self.inverse_moment_with_error(k, t).map(|(v, _)| v)
    }

    /// As [`Self::inverse_moment`], also returning the achieved error bound.
    pub fn inverse_moment_with_error(&self, k: f64, t: f64) -> Result<(f64, f64)> {
        self.validate()?;
        if !(k > 0.0 && k < 170.0) {
            return Err(Error::invalid("k", format!("must lie in (0, 170), got {k}")));
        }
        check_positive("t", t)?;
        if let Self::Gamma { a, .. } = *self {
            if a * t <= k {
                return Err(Error::InfiniteMoment {
                    bernstein: self.to_string(),
                    k,
                    t,
                });
            }
        }

        let integrand = |r: f64| (-t * self.evaluate(r)).exp();
        // natural scale where t B(r) ~ 1
        let head_end = self.unit_scale(t).max(1e-8);

        // head [0, head_end] after u = r^k, which removes the r^{k-1} singularity
        let head = quad::integrate(
            |u: f64| integrand(u.powf(1.0 / k)),
            0.0,
            head_end.powf(k),
            MOMENT_ABS_TOL * k / 4.0,
            2000,
        )?;
        let mut value = head.value / k;
        let mut error = head.abs_error / k;

        let mut lo = head_end;
        let mut panels = 0;
        loop {
            let tail = self.tail_bound(k, t, lo);
            if tail < TAIL_TOL {
                error += tail;
                break;
            }
            if panels >= MAX_TAIL_PANELS || !lo.is_finite() {
                return Err(Error::Quadrature {
                    achieved: error + tail,
                    requested: MOMENT_ABS_TOL,
                });
            }
            let hi = 2.0 * lo;
            let panel = quad::integrate(
                |r: f64| r.powf(k - 1.0) * integrand(r),
                lo,
                hi,
                (MOMENT_ABS_TOL / 64.0).max(1e-15 * value.abs()),
                2000,
            )?;
            value += panel.value;
            error += panel.abs_error;
            lo = hi;
            panels += 1;
        }
        let norm = special::gamma(k);
        let (value, error) = (value / norm, error / norm);
        if error > MOMENT_ABS_TOL.max(1e-12 * value.abs()) * 10.0 {
            return Err(Error::Quadrature {
                achieved: error,
                requested: MOMENT_ABS_TOL,
            });
        }
        Ok((value, error))
    }

    fn unit_scale(&self, t: f64) -> f64 {
        match *self {
            Self::Linear => 1.0 / t,
            Self::Stable { theta } => t.powf(-1.0 / theta),
            Self::TemperedStable { theta, kappa } => {
                // solve (r + kappa)^theta - kappa^theta = 1/t
                (1.0 / t + kappa.powf(theta)).powf(1.0 / theta) - kappa
            }
            Self::Gamma { a, b } => b * ((1.0 / (a * t)).exp_m1()).max(1.0),
        }
    }

    /// Upper bound for `∫_R^∞ r^{k-1} e^{-t B(r)} dr`.
    fn tail_bound(&self, k: f64, t: f64, r: f64) -> f64 {
        match *self {
            Self::Linear => power_exp_tail(k, t, r),
            Self::Stable { theta } => power_exp_tail(k / theta, t, r.powf(theta)) / theta,
            Self::TemperedStable { theta, kappa } => {
                // (r + kappa)^theta >= r^theta
                (t * kappa.powf(theta)).exp() * power_exp_tail(k / theta, t, r.powf(theta)) / theta
            }
            Self::Gamma { a, b } => {
                // (1 + r/b)^{-at} <= (r/b)^{-at}
                let s = a * t;
                b.powf(s) * r.powf(k - s) / (s - k)
            }
        }
    }
}

/// Bound for `∫_X^∞ s^{m-1} e^{-t s} ds`; infinite until `X` passes the
/// mode region `2 (m-1)^+ / t`.
fn power_exp_tail(m: f64, t: f64, x: f64) -> f64 {
    if x < 2.0 * (m - 1.0).max(0.0) / t {
        return f64::INFINITY;
    }
    (2.0 / t) * x.powf(m - 1.0) * (-t * x).exp()
}
