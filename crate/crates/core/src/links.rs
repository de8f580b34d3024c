//! Noise distributions for the comparison model.
//!
//! Each link is the c.d.f. `Φ` of the additive noise `ε` in
//! `y = sign-with-margin(s_i - s_j + ε)`, together with its density `φ` and
//! the density slope `φ'`. All three distributions are symmetric about zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("link evaluated at non-finite argument {0}")]
    NonFinite(f64),
    #[error("unknown model `{0}` (expected uniform, bradley-terry or thurstone-mosteller)")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkModel {
    /// Noise uniform on `[-1, 1]`.
    Uniform,
    /// Standard logistic noise.
    BradleyTerry,
    /// Standard normal noise.
    ThurstoneMosteller,
}

impl LinkModel {
    pub const ALL: [LinkModel; 3] = [
        LinkModel::Uniform,
        LinkModel::BradleyTerry,
        LinkModel::ThurstoneMosteller,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinkModel::Uniform => "uniform",
            LinkModel::BradleyTerry => "bradley-terry",
            LinkModel::ThurstoneMosteller => "thurstone-mosteller",
        }
    }

    /// Human-readable label used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            LinkModel::Uniform => "Uniform",
            LinkModel::BradleyTerry => "Bradley-Terry",
            LinkModel::ThurstoneMosteller => "Thurstone-Mosteller",
        }
    }

    pub fn cdf(self, t: f64) -> Result<f64, LinkError> {
        finite(t).map(|t| self.cdf_unchecked(t))
    }

    pub fn pdf(self, t: f64) -> Result<f64, LinkError> {
        finite(t).map(|t| self.pdf_unchecked(t))
    }

    pub fn pdf_prime(self, t: f64) -> Result<f64, LinkError> {
        finite(t).map(|t| self.pdf_prime_unchecked(t))
    }

    /// `Φ(t)` without the finiteness check.
    #[inline]
    pub fn cdf_unchecked(self, t: f64) -> f64 {
        match self {
            LinkModel::Uniform => {
                if t < -1.0 {
                    0.0
                } else if t > 1.0 {
                    1.0
                } else {
                    (t + 1.0) / 2.0
                }
            }
            LinkModel::BradleyTerry => logistic(t),
            LinkModel::ThurstoneMosteller => 0.5 * erfc(-t / std::f64::consts::SQRT_2),
        }
    }

    /// `1 - Φ(t)`, evaluated as `Φ(-t)` so the upper tail keeps full precision.
    #[inline]
    pub fn sf_unchecked(self, t: f64) -> f64 {
        self.cdf_unchecked(-t)
    }

    /// `Φ(hi) - Φ(lo)` for `lo <= hi`, using whichever tail avoids cancellation.
    #[inline]
    pub fn mass_between(self, lo: f64, hi: f64) -> f64 {
        if lo > 0.0 {
            self.sf_unchecked(lo) - self.sf_unchecked(hi)
        } else {
            self.cdf_unchecked(hi) - self.cdf_unchecked(lo)
        }
    }

    #[inline]
    pub fn pdf_unchecked(self, t: f64) -> f64 {
        match self {
            LinkModel::Uniform => {
                if (-1.0..=1.0).contains(&t) {
                    0.5
                } else {
                    0.0
                }
            }
            LinkModel::BradleyTerry => {
                let e = (-t.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            LinkModel::ThurstoneMosteller => INV_SQRT_2PI * (-0.5 * t * t).exp(),
        }
    }

    /// Interior derivative of the density; zero for the uniform link.
    #[inline]
    pub fn pdf_prime_unchecked(self, t: f64) -> f64 {
        match self {
            LinkModel::Uniform => 0.0,
            LinkModel::BradleyTerry => {
                // φ' = φ (1 - 2Φ); written with e^{-|t|} so it never overflows.
                let e = (-t.abs()).exp();
                let slope = e * (1.0 - e) / ((1.0 + e) * (1.0 + e) * (1.0 + e));
                if t >= 0.0 {
                    -slope
                } else {
                    slope
                }
            }
            LinkModel::ThurstoneMosteller => -t * self.pdf_unchecked(t),
        }
    }
}

#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn finite(t: f64) -> Result<f64, LinkError> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(LinkError::NonFinite(t))
    }
}

impl fmt::Display for LinkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkModel {
    type Err = LinkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(LinkModel::Uniform),
            "bradley-terry" | "bt" => Ok(LinkModel::BradleyTerry),
            "thurstone-mosteller" | "tm" => Ok(LinkModel::ThurstoneMosteller),
            other => Err(LinkError::UnknownModel(other.to_owned())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Simpson rule, used as an independent oracle for Φ.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut acc = f(a) + f(b);
        for k in 1..panels {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + k as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(LinkModel::BradleyTerry.cdf(0.0).unwrap(), 0.5);
        assert_eq!(LinkModel::Uniform.cdf(0.5).unwrap(), 0.75);
        let tm = LinkModel::ThurstoneMosteller;
        let oracle = simpson(|t| INV_SQRT_2PI * (-0.5 * t * t).exp(), -12.0, 1.0, 20_000);
        assert!((oracle - 0.841345).abs() < 1e-6);
        assert!((tm.cdf(1.0).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn pdf_examples() {
        assert_eq!(LinkModel::BradleyTerry.pdf(0.0).unwrap(), 0.25);
        let v = LinkModel::ThurstoneMosteller.pdf(0.0).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.398942).abs() < 1e-6);
        assert_eq!(LinkModel::Uniform.pdf(2.0).unwrap(), 0.0);
    }

    #[test]
    fn pdf_prime_examples() {
        for t in [-3.0, -0.2, 0.0, 0.7, 5.0] {
            assert_eq!(LinkModel::Uniform.pdf_prime(t).unwrap(), 0.0);
        }
        assert_eq!(LinkModel::BradleyTerry.pdf_prime(0.0).unwrap(), 0.0);
        let v = LinkModel::ThurstoneMosteller.pdf_prime(1.0).unwrap();
        let h = 1e-5;
        let tm = LinkModel::ThurstoneMosteller;
        let fd = (tm.pdf(1.0 + h).unwrap() - tm.pdf(1.0 - h).unwrap()) / (2.0 * h);
        assert!((fd - (-0.241971)).abs() < 1e-6);
        assert!((v - fd).abs() < 1e-9);
    }

    #[test]
    fn non_finite_rejected() {
        for m in LinkModel::ALL {
            assert!(m.cdf(f64::NAN).is_err());
            assert!(m.pdf(f64::INFINITY).is_err());
            assert!(m.pdf_prime(f64::NEG_INFINITY).is_err());
        }
    }

    #[test]
    fn cdf_matches_integrated_pdf() {
        for m in [LinkModel::BradleyTerry, LinkModel::ThurstoneMosteller] {
            let lower = -40.0;
            let base = m.cdf_unchecked(lower);
            for k in 0..=48 {
                let t = -6.0 + 0.25 * k as f64;
                let integral = base + simpson(|x| m.pdf_unchecked(x), lower, t, 40_000);
                assert!((integral - m.cdf_unchecked(t)).abs() < 1e-6, "{m} t={t}");
            }
        }
    }

    #[test]
    fn logistic_is_stable_far_out() {
        let bt = LinkModel::BradleyTerry;
        assert_eq!(bt.cdf_unchecked(800.0), 1.0);
        assert_eq!(bt.cdf_unchecked(-800.0), 0.0);
        assert!(bt.sf_unchecked(40.0) > 0.0);
        assert!(bt.pdf_unchecked(-800.0).is_finite());
        assert!(bt.pdf_prime_unchecked(800.0).is_finite());
    }

    #[test]
    fn mass_between_keeps_tail_precision() {
        let bt = LinkModel::BradleyTerry;
        let m = bt.mass_between(39.0, 41.0);
        let exact = (-39.0f64).exp() - (-41.0f64).exp();
        assert!((m - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn parse_names() {
        for m in LinkModel::ALL {
            assert_eq!(m.name().parse::<LinkModel>().unwrap(), m);
        }
        assert!("logit".parse::<LinkModel>().is_err());
    }

    proptest! {
        #[test]
        fn cdf_symmetry(t in -50.0f64..50.0) {
            for m in LinkModel::ALL {
                prop_assert!((m.cdf_unchecked(t) + m.cdf_unchecked(-t) - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn pdf_even(t in -50.0f64..50.0) {
            for m in LinkModel::ALL {
                prop_assert!((m.pdf_unchecked(t) - m.pdf_unchecked(-t)).abs() <= 1e-12);
            }
        }

        #[test]
        fn cdf_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for m in LinkModel::ALL {
                let (p, q) = (m.cdf_unchecked(lo), m.cdf_unchecked(hi));
                prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
                prop_assert!(p <= q);
            }
        }

        #[test]
        fn pdf_prime_matches_finite_differences(t in -5.0f64..5.0) {
            let h = 1e-5;
            for m in LinkModel::ALL {
                if m == LinkModel::Uniform && ((t.abs() - 1.0).abs() < 2.0 * h) {
                    continue;
                }
                let fd = (m.pdf_unchecked(t + h) - m.pdf_unchecked(t - h)) / (2.0 * h);
                let an = m.pdf_prime_unchecked(t);
                prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{} t={} fd={} an={}", m, t, fd, an);
            }
        }
    }
}
