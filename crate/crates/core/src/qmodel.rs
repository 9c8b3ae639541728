//! Laws of the additive term `Q`.
//!
//! Every law except [`QLaw::ExpValidation`] has a finite, positive essential
//! supremum `b`, which is what the tail engine needs. The exponential law has
//! `b = ∞` and is only used to check the simulator against a known gamma
//! distribution.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of raw moments precomputed for Taylor patches near `s = 0`.
pub(crate) const SERIES_TERMS: usize = 30;

/// The distribution of `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QLaw {
    /// `Q ≡ b`.
    PointMass { b: f64 },
    /// `Q = b` with probability `p`, `Q = q0 ≤ 0` otherwise.
    TwoPoint { b: f64, p: f64, q0: f64 },
    /// `Q = b − η` with `η ~ Gamma(shape θ, scale λ)`.
    GammaShift { b: f64, theta: f64, lambda: f64 },
    /// `Q ~ Exponential(rate c)`; unbounded above.
    ExpValidation { c: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and positive",
        })
    }
}

impl QLaw {
    pub fn point_mass(b: f64) -> Result<Self> {
        let law = QLaw::PointMass { b };
        law.validate()?;
        Ok(law)
    }

    pub fn two_point(b: f64, p: f64, q0: f64) -> Result<Self> {
        let law = QLaw::TwoPoint { b, p, q0 };
        law.validate()?;
        Ok(law)
    }

    pub fn gamma_shift(b: f64, theta: f64, lambda: f64) -> Result<Self> {
        let law = QLaw::GammaShift { b, theta, lambda };
        law.validate()?;
        Ok(law)
    }

    pub fn exp_validation(c: f64) -> Result<Self> {
        let law = QLaw::ExpValidation { c };
        law.validate()?;
        Ok(law)
    }

    /// Checks the parameter constraints of the variant.
    pub fn validate(&self) -> Result<()> {
        match *self {
            QLaw::PointMass { b } => positive("b", b),
            QLaw::TwoPoint { b, p, q0 } => {
                positive("b", b)?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidParameter {
                        name: "p",
                        value: p,
                        reason: "must lie in (0, 1]",
                    });
                }
                if !(q0.is_finite() && q0 <= 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "q0",
                        value: q0,
                        reason: "must be finite and nonpositive",
                    });
                }
                Ok(())
            }
            QLaw::GammaShift { b, theta, lambda } => {
                positive("b", b)?;
                positive("theta", theta)?;
                positive("lambda", lambda)
            }
            QLaw::ExpValidation { c } => positive("c", c),
        }
    }

    /// True for the exponential validation law.
    pub fn b_infinite(&self) -> bool {
        matches!(self, QLaw::ExpValidation { .. })
    }

    /// Essential supremum `b`, or `None` when it is infinite.
    pub fn essential_sup(&self) -> Option<f64> {
        match *self {
            QLaw::PointMass { b } | QLaw::TwoPoint { b, .. } | QLaw::GammaShift { b, .. } => {
                Some(b)
            }
            QLaw::ExpValidation { .. } => None,
        }
    }

    /// Essential supremum, rejecting the unbounded law.
    pub fn b(&self) -> Result<f64> {
        self.essential_sup().ok_or(Error::UnboundedLaw)
    }

    /// Rejects the unbounded law; used by every tail and saddle routine.
    pub fn require_bounded(&self) -> Result<()> {
        self.b().map(|_| ())
    }

    fn check_domain(&self, s: f64) -> Result<()> {
        if !(s >= 0.0) || s.is_infinite() {
            return Err(Error::InvalidParameter {
                name: "s",
                value: s,
                reason: "must be finite and nonnegative",
            });
        }
        if let QLaw::ExpValidation { c } = *self {
            if s >= c {
                return Err(Error::MgfDiverges { s, c });
            }
        }
        Ok(())
    }

    /// `g^(k)(s) = E[Q^k e^{sQ}]` in closed form, `k ∈ {0,1,2,3}`.
    pub fn mgf(&self, s: f64, k: usize) -> Result<f64> {
        if k > 3 {
            return Err(Error::DerivativeOrder(k));
        }
        self.check_domain(s)?;
        let kf = k as i32;
        Ok(match *self {
            QLaw::PointMass { b } => b.powi(kf) * (b * s).exp(),
            QLaw::TwoPoint { b, p, q0 } => {
                p * b.powi(kf) * (b * s).exp() + (1.0 - p) * q0.powi(kf) * (q0 * s).exp()
            }
            QLaw::GammaShift { b, theta, lambda } => {
                // Leibniz rule for e^{bs} (1+λs)^{-θ}.
                const BINOM: [[f64; 4]; 4] = [
                    [1.0, 0.0, 0.0, 0.0],
                    [1.0, 1.0, 0.0, 0.0],
                    [1.0, 2.0, 1.0, 0.0],
                    [1.0, 3.0, 3.0, 1.0],
                ];
                let base = 1.0 + lambda * s;
                let mut acc = 0.0;
                let mut falling = 1.0; // (-θ)(-θ-1)...(-θ-j+1)
                for (j, binom) in BINOM[k].iter().enumerate().take(k + 1) {
                    let h_j = falling * lambda.powi(j as i32) * base.powf(-theta - j as f64);
                    acc += binom * b.powi(kf - j as i32) * h_j;
                    falling *= -theta - j as f64;
                }
                (b * s).exp() * acc
            }
            QLaw::ExpValidation { c } => {
                let fact = [1.0, 1.0, 2.0, 6.0][k];
                fact * c / (c - s).powi(kf + 1)
            }
        })
    }

    /// `g(s) − 1` without cancellation near `s = 0`.
    pub fn mgf_minus_one(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match *self {
            QLaw::PointMass { b } => (b * s).exp_m1(),
            QLaw::TwoPoint { b, p, q0 } => p * (b * s).exp_m1() + (1.0 - p) * (q0 * s).exp_m1(),
            QLaw::GammaShift { b, theta, lambda } => {
                (b * s - theta * (lambda * s).ln_1p()).exp_m1()
            }
            QLaw::ExpValidation { c } => s / (c - s),
        })
    }

    /// `log g(s)`, finite even where `g(s)` itself overflows.
    pub fn log_mgf(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match *self {
            QLaw::PointMass { b } => b * s,
            QLaw::TwoPoint { b, p, q0 } => {
                let gm1 = p * (b * s).exp_m1() + (1.0 - p) * (q0 * s).exp_m1();
                if gm1.abs() < 0.5 {
                    gm1.ln_1p()
                } else {
                    b * s + (p + (1.0 - p) * ((q0 - b) * s).exp()).ln()
                }
            }
            QLaw::GammaShift { b, theta, lambda } => b * s - theta * (lambda * s).ln_1p(),
            QLaw::ExpValidation { c } => -(-s / c).ln_1p(),
        })
    }

    /// `g^(k)(s) / g(s)`; tends to `b^k` as `s → ∞` for bounded laws.
    pub fn mgf_ratio(&self, s: f64, k: usize) -> Result<f64> {
        if k > 3 {
            return Err(Error::DerivativeOrder(k));
        }
        self.check_domain(s)?;
        let kf = k as i32;
        Ok(match *self {
            QLaw::PointMass { b } => b.powi(kf),
            QLaw::TwoPoint { b, p, q0 } => {
                let x = (1.0 - p) / p * ((q0 - b) * s).exp();
                (b.powi(kf) + x * q0.powi(kf)) / (1.0 + x)
            }
            QLaw::GammaShift { b, theta, lambda } => {
                const BINOM: [[f64; 4]; 4] = [
                    [1.0, 0.0, 0.0, 0.0],
                    [1.0, 1.0, 0.0, 0.0],
                    [1.0, 2.0, 1.0, 0.0],
                    [1.0, 3.0, 3.0, 1.0],
                ];
                let u = lambda / (1.0 + lambda * s);
                let mut acc = 0.0;
                let mut falling = 1.0;
                for (j, binom) in BINOM[k].iter().enumerate().take(k + 1) {
                    acc += binom * b.powi(kf - j as i32) * falling * u.powi(j as i32);
                    falling *= -theta - j as f64;
                }
                acc
            }
            QLaw::ExpValidation { c } => [1.0, 1.0, 2.0, 6.0][k] / (c - s).powi(kf),
        })
    }

    /// `f(s) = E[e^{−s(b−Q)}] = e^{−bs} g(s)`.
    pub fn f_ratio(&self, s: f64) -> Result<f64> {
        self.require_bounded()?;
        self.check_domain(s)?;
        Ok(match *self {
            QLaw::PointMass { .. } => 1.0,
            QLaw::TwoPoint { b, p, q0 } => p + (1.0 - p) * ((q0 - b) * s).exp(),
            QLaw::GammaShift { theta, lambda, .. } => (1.0 + lambda * s).powf(-theta),
            QLaw::ExpValidation { .. } => unreachable!(),
        })
    }

    /// Raw moment `E[Q^n]`.
    pub fn raw_moment(&self, n: usize) -> f64 {
        let ni = n as i32;
        match *self {
            QLaw::PointMass { b } => b.powi(ni),
            QLaw::TwoPoint { b, p, q0 } => p * b.powi(ni) + (1.0 - p) * q0.powi(ni),
            QLaw::GammaShift { b, theta, lambda } => {
                // E[(b − η)^n] = Σ_j C(n,j) b^{n−j} (−1)^j E[η^j].
                let mut acc = 0.0;
                let mut binom = 1.0;
                let mut eta_moment = 1.0; // λ^j θ(θ+1)…(θ+j−1)
                for j in 0..=n {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    acc += binom * b.powi(ni - j as i32) * sign * eta_moment;
                    binom *= (n - j) as f64 / (j + 1) as f64;
                    eta_moment *= lambda * (theta + j as f64);
                }
                acc
            }
            QLaw::ExpValidation { c } => (1..=n).map(|i| i as f64 / c).product(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    pub fn variance(&self) -> f64 {
        match *self {
            QLaw::PointMass { .. } => 0.0,
            QLaw::TwoPoint { b, p, q0 } => p * (1.0 - p) * (b - q0).powi(2),
            QLaw::GammaShift { theta, lambda, .. } => theta * lambda * lambda,
            QLaw::ExpValidation { c } => 1.0 / (c * c),
        }
    }

    /// Scale `R` such that the Taylor coefficients `E[Q^n] y^n / n!` decay
    /// geometrically for `y·R ≤ 0.1`.
    pub(crate) fn series_scale(&self) -> f64 {
        match *self {
            QLaw::PointMass { b } => b,
            QLaw::TwoPoint { b, q0, .. } => b.max(-q0),
            QLaw::GammaShift { b, theta, lambda } => b + lambda * (1.0 + theta),
            QLaw::ExpValidation { c } => 1.0 / c,
        }
    }

    /// `E[Q^n]` for `n = 0..SERIES_TERMS`.
    pub(crate) fn moments(&self) -> [f64; SERIES_TERMS] {
        let mut m = [0.0; SERIES_TERMS];
        for (n, slot) in m.iter_mut().enumerate() {
            *slot = self.raw_moment(n);
        }
        m
    }

    /// One draw of `Q`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            QLaw::PointMass { b } => b,
            QLaw::TwoPoint { b, p, q0 } => {
                if rng.random::<f64>() < p {
                    b
                } else {
                    q0
                }
            }
            QLaw::GammaShift { b, theta, lambda } => {
                // Parameters were validated on construction.
                let eta = Gamma::new(theta, lambda).expect("validated gamma parameters");
                b - eta.sample(rng)
            }
            QLaw::ExpValidation { c } => Exp::new(c).expect("validated rate").sample(rng),
        }
    }
}

impl fmt::Display for QLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            QLaw::PointMass { b } => write!(f, "pointmass:b={b}"),
            QLaw::TwoPoint { b, p, q0 } => write!(f, "twopoint:b={b},p={p},q0={q0}"),
            QLaw::GammaShift { b, theta, lambda } => {
                write!(f, "gammashift:b={b},theta={theta},lambda={lambda}")
            }
            QLaw::ExpValidation { c } => write!(f, "exp:c={c}"),
        }
    }
}

impl FromStr for QLaw {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let fail = |reason: String| Error::LawSpec {
            spec: spec.to_string(),
            reason,
        };
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| fail("expected KIND:key=value,...".into()))?;
        let mut pairs = Vec::new();
        for item in rest.split(',') {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| fail(format!("malformed parameter {item:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| fail(format!("bad number for {key}")))?;
            pairs.push((key.trim(), value));
        }
        let take = |names: &[&str]| -> Result<Vec<f64>> {
            if pairs.len() != names.len() {
                return Err(fail(format!("expected parameters {names:?}")));
            }
            names
                .iter()
                .map(|name| {
                    pairs
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|&(_, v)| v)
                        .ok_or_else(|| fail(format!("missing parameter {name}")))
                })
                .collect()
        };
        let law = match kind.trim().to_ascii_lowercase().as_str() {
            "pointmass" => {
                let v = take(&["b"])?;
                QLaw::PointMass { b: v[0] }
            }
            "twopoint" => {
                let v = take(&["b", "p", "q0"])?;
                QLaw::TwoPoint {
                    b: v[0],
                    p: v[1],
                    q0: v[2],
                }
            }
            "gammashift" => {
                let v = take(&["b", "theta", "lambda"])?;
                QLaw::GammaShift {
                    b: v[0],
                    theta: v[1],
                    lambda: v[2],
                }
            }
            "exp" => {
                let v = take(&["c"])?;
                QLaw::ExpValidation { c: v[0] }
            }
            other => return Err(fail(format!("unknown law kind {other:?}"))),
        };
        law.validate()?;
        Ok(law)
    }
}
