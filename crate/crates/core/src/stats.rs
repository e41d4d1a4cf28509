//! Monte Carlo estimates, sufficient statistics and small regression/test
//! helpers.

use serde::{Deserialize, Serialize};

/// Mean with its standard error over `n` samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl MCEstimate {
    /// A value known without sampling error.
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            n: 0,
        }
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        Moments::from_samples(samples).estimate()
    }

    /// `|self - other| <= k * (se_a + se_b) + slack`
    pub fn agrees_with(&self, other: &MCEstimate, k: f64, slack: f64) -> bool {
        (self.mean - other.mean).abs() <= k * (self.stderr + other.stderr) + slack
    }

    /// z-score of the mean against a known value.
    pub fn z_against(&self, value: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == value {
                0.0
            } else {
                f64::INFINITY.copysign(self.mean - value)
            }
        } else {
            (self.mean - value) / self.stderr
        }
    }

    /// Delta method for `g(mean)` with derivative `dg` at the mean.
    pub fn map(&self, g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64) -> MCEstimate {
        MCEstimate {
            mean: g(self.mean),
            stderr: (dg(self.mean) * self.stderr).abs(),
            n: self.n,
        }
    }
}

/// Sufficient statistics `(n, mean, M2)`; merging is associative up to
/// rounding (Chan et al. parallel update).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.merge(&Moments { n: 1, mean: x, m2: 0.0 });
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.n as f64 * w;
        self.n = n;
    }

    /// Pairwise tree reduction in index order: deterministic for a fixed
    /// sample vector.
    pub fn from_samples(samples: &[f64]) -> Self {
        match samples.len() {
            0 => Moments::default(),
            1 => Moments {
                n: 1,
                mean: samples[0],
                m2: 0.0,
            },
            len => {
                let (l, r) = samples.split_at(len / 2);
                let mut m = Moments::from_samples(l);
                m.merge(&Moments::from_samples(r));
                m
            }
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> MCEstimate {
        let stderr = if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        MCEstimate {
            mean: self.mean,
            stderr,
            n: self.n,
        }
    }
}

/// Unbiased sample variance with the standard error of that variance
/// estimate (from the fourth central moment).
pub fn variance_estimate(samples: &[f64]) -> MCEstimate {
    let m = Moments::from_samples(samples);
    let n = samples.len() as f64;
    if samples.len() < 4 {
        return MCEstimate {
            mean: m.variance(),
            stderr: f64::INFINITY,
            n: m.n,
        };
    }
    let var = m.variance();
    let m4 = pairwise_sum(&samples.iter().map(|x| (x - m.mean).powi(4)).collect::<Vec<_>>()) / n;
    let s2 = m.m2 / n;
    let var_of_var = ((m4 - s2 * s2) / n).max(0.0);
    MCEstimate {
        mean: var,
        stderr: var_of_var.sqrt(),
        n: m.n,
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2..=16 => xs.iter().sum(),
        len => {
            let (l, r) = xs.split_at(len / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Result of a straight-line fit `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

/// Weighted least squares with known per-point standard errors. Falls back
/// to ordinary least squares with residual-based errors when every `se` is
/// zero.
pub fn weighted_line_fit(x: &[f64], y: &[f64], se: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), se.len());
    assert!(x.len() >= 2, "need at least two points");
    if se.iter().all(|&s| s == 0.0) {
        return ols_fit(x, y);
    }
    let w: Vec<f64> = se.iter().map(|&s| 1.0 / (s * s).max(1e-300)).collect();
    let sw: f64 = w.iter().sum();
    let xbar = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    LineFit {
        slope,
        slope_stderr: (1.0 / sxx).sqrt(),
        intercept: ybar - slope * xbar,
    }
}

fn ols_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let xbar = x.iter().sum::<f64>() / n;
    let ybar = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_stderr = if x.len() > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        slope_stderr,
        intercept,
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powi(k as i32 - 1) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_mean_and_stderr() {
        let e = MCEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.n, 4);
    }

    #[test]
    fn constant_samples_have_zero_stderr() {
        let e = MCEstimate::from_samples(&[1.0; 100]);
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|x| 1.5 - 2.0 * x).collect();
        let fit = weighted_line_fit(&x, &y, &[0.0; 4]);
        assert!((fit.slope + 2.0).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-12);
        let fit = weighted_line_fit(&x, &y, &[0.1, 0.2, 0.1, 0.3]);
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ks_detects_shift_and_accepts_same_law() {
        let a: Vec<f64> = (0..2000).map(|i| (i as f64 + 0.5) / 2000.0).collect();
        let b: Vec<f64> = (0..1500).map(|i| (i as f64 + 0.25) / 1500.0).collect();
        let (_, p) = ks_two_sample(&a, &b);
        assert!(p > 0.5);
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        let (d, p) = ks_two_sample(&a, &c);
        assert!(d > 0.15 && p < 1e-10);
    }

    proptest! {
        #[test]
        fn merge_is_associative(xs in prop::collection::vec(-1e3f64..1e3, 3..60), cut1 in 0usize..60, cut2 in 0usize..60) {
            let n = xs.len();
            let (c1, c2) = {
                let (a, b) = (cut1 % n, cut2 % n);
                (a.min(b), a.max(b))
            };
            let m = |s: &[f64]| { let mut m = Moments::default(); for &x in s { m.push(x); } m };
            let (a, b, c) = (m(&xs[..c1]), m(&xs[c1..c2]), m(&xs[c2..]));
            let mut left = a; left.merge(&b); left.merge(&c);
            let mut bc = b; bc.merge(&c);
            let mut right = a; right.merge(&bc);
            prop_assert_eq!(left.n, right.n);
            prop_assert!((left.mean - right.mean).abs() <= 1e-9 * (1.0 + left.mean.abs()));
            prop_assert!((left.m2 - right.m2).abs() <= 1e-7 * (1.0 + left.m2.abs()));
            let tree = Moments::from_samples(&xs);
            prop_assert!((tree.mean - left.mean).abs() <= 1e-9 * (1.0 + left.mean.abs()));
            prop_assert!(left.variance() >= 0.0);
        }
    }
}
