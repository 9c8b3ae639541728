//! The cumulant `ψ_α(s) = α ∫_0^s (g(y) − 1)/y dy` of `Z_α − Q_1` and the
//! saddle point `s_α(t)` solving `ψ'_α(s) = t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmodel::{QLaw, SERIES_TERMS};
use crate::quad;
use crate::roots::{self, Probe, RootOptions};

/// Solution of `ψ'_α(s) = t` with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub t: f64,
    pub s: f64,
    /// `ψ'_α(s) − t`.
    pub residual: f64,
    pub iterations: usize,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleOptions {
    /// Largest `s` the bracket search may reach.
    pub s_max: f64,
    pub max_iter: usize,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            s_max: 1e4,
            max_iter: 200,
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "must be finite and positive",
        })
    }
}

fn check_s(s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "s",
            value: s,
            reason: "must be finite and nonnegative",
        })
    }
}

/// Taylor data of `(g(y) − 1)/y` around the origin.
pub(crate) struct Taylor {
    moments: [f64; SERIES_TERMS],
    /// Radius of the patch on which the truncated series is used.
    pub y0: f64,
}

impl Taylor {
    pub fn new(law: &QLaw) -> Self {
        let y0 = (0.1f64).min(0.1 / law.series_scale());
        Taylor {
            moments: law.moments(),
            y0,
        }
    }

    /// `d^j/dy^j [(g(y) − 1)/y]` at `y` for `j ∈ {0, 1, 2}`.
    pub fn derivative(&self, y: f64, j: usize) -> f64 {
        // coefficient of m_n: y^{n-1-j} (n-1)(n-2)…(n-j) / n!
        let mut acc = 0.0;
        let mut inv_fact = 1.0;
        for n in 1..SERIES_TERMS {
            inv_fact /= n as f64;
            if n < j + 1 {
                continue;
            }
            let falling: f64 = (1..=j).map(|i| (n - i) as f64).product();
            acc += self.moments[n] * falling * inv_fact * y.powi((n - 1 - j) as i32);
        }
        acc
    }

    /// `∫_0^y (g(u) − 1)/u du = Σ m_n y^n / (n · n!)`.
    pub fn integral(&self, y: f64) -> f64 {
        let mut acc = 0.0;
        let mut inv_fact = 1.0;
        for n in 1..SERIES_TERMS {
            inv_fact /= n as f64;
            acc += self.moments[n] * y.powi(n as i32) * inv_fact / n as f64;
        }
        acc
    }
}

/// `ψ'_α(s) = α (g(s) − 1)/s`, extended by `α E[Q]` at `s = 0`.
pub fn psi_prime(alpha: f64, law: &QLaw, s: f64) -> Result<f64> {
    check_alpha(alpha)?;
    law.require_bounded()?;
    check_s(s)?;
    if s == 0.0 {
        return Ok(alpha * law.mean());
    }
    Ok(alpha * law.mgf_minus_one(s)? / s)
}

/// `ψ''_α(s) = (α g'(s) − ψ'_α(s))/s`, by series near the origin.
pub fn psi_second(alpha: f64, law: &QLaw, s: f64) -> Result<f64> {
    check_alpha(alpha)?;
    law.require_bounded()?;
    check_s(s)?;
    let taylor = Taylor::new(law);
    if s <= taylor.y0 {
        return Ok(alpha * taylor.derivative(s, 1));
    }
    Ok((alpha * law.mgf(s, 1)? - psi_prime(alpha, law, s)?) / s)
}

/// `ψ'''_α(s) = (α g''(s) − 2ψ''_α(s))/s`, by series near the origin.
pub fn psi_third(alpha: f64, law: &QLaw, s: f64) -> Result<f64> {
    check_alpha(alpha)?;
    law.require_bounded()?;
    check_s(s)?;
    let taylor = Taylor::new(law);
    if s <= taylor.y0 {
        return Ok(alpha * taylor.derivative(s, 2));
    }
    Ok((alpha * law.mgf(s, 2)? - 2.0 * psi_second(alpha, law, s)?) / s)
}

/// `ψ_α(s) = α ∫_0^s (g(y) − 1)/y dy`.
///
/// The removable singularity at the origin is covered by the Taylor series of
/// the integrand on `[0, y0]`; the rest goes to adaptive Gauss–Kronrod.
pub fn psi(alpha: f64, law: &QLaw, s: f64) -> Result<f64> {
    check_alpha(alpha)?;
    law.require_bounded()?;
    check_s(s)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let taylor = Taylor::new(law);
    if s <= taylor.y0 {
        return Ok(alpha * taylor.integral(s));
    }
    let head = taylor.integral(taylor.y0);
    let integrand = |y: f64| law.mgf_minus_one(y).unwrap_or(f64::NAN) / y;
    let r = quad::integrate(integrand, taylor.y0, s, 1e-15, 1e-13, 4000);
    let value = alpha * (head + r.value);
    let error = alpha * r.error;
    if !value.is_finite() || (!r.converged && error > 1e-10 * (1.0 + value.abs())) {
        return Err(Error::Quadrature { value, error });
    }
    Ok(value)
}

/// `ln ψ'_α(s)` and its derivative, or `None` where `ψ'_α(s) ≤ 0`.
///
/// Stays finite where `g(s)` itself would overflow.
pub(crate) fn log_psi_prime(alpha: f64, law: &QLaw, s: f64) -> Result<Option<(f64, f64)>> {
    let lg = law.log_mgf(s)?;
    let log_gm1 = if lg > 1.0 {
        lg + (-(-lg).exp_m1()).ln()
    } else {
        let gm1 = law.mgf_minus_one(s)?;
        if gm1 <= 0.0 {
            return Ok(None);
        }
        gm1.ln()
    };
    let value = alpha.ln() + log_gm1 - s.ln();
    // d/ds ln ψ' = g'/(g − 1) − 1/s
    let slope = law.mgf_ratio(s, 1)? / (-(-lg).exp_m1()) - 1.0 / s;
    Ok(Some((value, slope)))
}

pub(crate) fn initial_guess(alpha: f64, b: f64, t: f64) -> Option<f64> {
    let x = t / alpha;
    (x > std::f64::consts::E).then(|| (x.ln() + x.ln().ln()) / b)
}

/// Solves `ψ'_α(s) = t` for the unique positive root `s_α(t)`.
pub fn solve_saddle(alpha: f64, law: &QLaw, t: f64) -> Result<SaddlePoint> {
    solve_saddle_with(alpha, law, t, &SaddleOptions::default())
}

pub fn solve_saddle_with(
    alpha: f64,
    law: &QLaw,
    t: f64,
    opts: &SaddleOptions,
) -> Result<SaddlePoint> {
    check_alpha(alpha)?;
    let b = law.b()?;
    if !(t > 0.0) {
        return Err(Error::TargetBelowRange { t });
    }
    if !t.is_finite() {
        return Err(Error::TargetOutOfRange {
            t,
            s_max: opts.s_max,
        });
    }
    let log_t = t.ln();
    let probe = |s: f64| -> Result<Probe> {
        Ok(match log_psi_prime(alpha, law, s)? {
            None => Probe::Below,
            Some((v, dv)) => Probe::Value {
                g: v - log_t,
                dg: dv,
            },
        })
    };
    let root_opts = RootOptions {
        s_max: opts.s_max,
        max_iter: opts.max_iter,
        ..RootOptions::default()
    };
    let root = roots::solve_increasing(probe, t, initial_guess(alpha, b, t), &root_opts)?;
    let residual = match root.g {
        Some(g) => t * g.exp_m1(),
        None => psi_prime(alpha, law, root.s)? - t,
    };
    Ok(SaddlePoint {
        t,
        s: root.s,
        residual,
        iterations: root.iterations,
        bracket_lo: root.bracket_lo,
        bracket_hi: root.bracket_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    /// `∫_0^1 (e^y − 1)/y dy = Σ_{n≥1} 1/(n·n!)`, 30-term partial sum.
    fn ein_one() -> f64 {
        let mut fact = 1.0;
        let mut acc = 0.0;
        for n in 1..=30 {
            fact *= n as f64;
            acc += 1.0 / (n as f64 * fact);
        }
        acc
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn fixtures() -> Vec<QLaw> {
        vec![
            QLaw::PointMass { b: 1.0 },
            QLaw::PointMass { b: 2.5 },
            QLaw::TwoPoint {
                b: 1.0,
                p: 0.5,
                q0: -1.0,
            },
            QLaw::TwoPoint {
                b: 2.0,
                p: 0.25,
                q0: -3.0,
            },
            QLaw::GammaShift {
                b: 1.0,
                theta: 1.0,
                lambda: 1.0,
            },
            QLaw::GammaShift {
                b: 0.5,
                theta: 2.5,
                lambda: 0.3,
            },
        ]
    }

    #[test]
    fn psi_prime_examples() {
        let pm = QLaw::PointMass { b: 1.0 };
        assert!((psi_prime(1.0, &pm, 1.0).unwrap() - (E - 1.0)).abs() < 1e-15);
        assert!((psi_prime(2.0, &pm, 1.0).unwrap() - 2.0 * (E - 1.0)).abs() < 1e-14);
        let tp = QLaw::TwoPoint {
            b: 1.0,
            p: 0.5,
            q0: -1.0,
        };
        assert!(psi_prime(1.0, &tp, 1e-8).unwrap().abs() < 1e-7);
        assert_eq!(psi_prime(1.0, &tp, 0.0).unwrap(), 0.0);
        let exp = QLaw::ExpValidation { c: 1.0 };
        assert_eq!(psi_prime(1.0, &exp, 0.5), Err(Error::UnboundedLaw));
    }

    #[test]
    fn psi_examples() {
        let pm = QLaw::PointMass { b: 1.0 };
        for law in fixtures() {
            assert_eq!(psi(1.3, &law, 0.0).unwrap(), 0.0);
        }
        let oracle = ein_one();
        assert!((oracle - 1.317_902_152).abs() < 1e-9);
        assert!((psi(1.0, &pm, 1.0).unwrap() - oracle).abs() < 1e-13);
        assert!((psi(3.0, &pm, 1.0).unwrap() - 3.0 * oracle).abs() < 1e-12);
    }

    #[test]
    fn psi_derivatives_consistent() {
        for law in fixtures() {
            for &s in &[0.05f64, 0.3, 1.0, 4.0, 12.0] {
                let h = 1e-3 * s.max(0.1);
                let fd = |f: &dyn Fn(f64) -> f64| {
                    (-f(s + 2.0 * h) + 8.0 * f(s + h) - 8.0 * f(s - h) + f(s - 2.0 * h))
                        / (12.0 * h)
                };
                let d1 = fd(&|x| psi(1.5, &law, x).unwrap());
                let exact = psi_prime(1.5, &law, s).unwrap();
                assert!((d1 - exact).abs() < 1e-7 * exact.abs().max(1.0), "{law} s={s}");
                let d2 = fd(&|x| psi_prime(1.5, &law, x).unwrap());
                let exact2 = psi_second(1.5, &law, s).unwrap();
                assert!((d2 - exact2).abs() < 1e-6 * exact2.abs().max(1.0), "{law} s={s}");
                let d3 = fd(&|x| psi_second(1.5, &law, x).unwrap());
                let exact3 = psi_third(1.5, &law, s).unwrap();
                assert!((d3 - exact3).abs() < 1e-5 * exact3.abs().max(1.0), "{law} s={s}");
            }
        }
    }

    #[test]
    fn psi_convex_on_grid() {
        for law in fixtures() {
            let vals: Vec<f64> = (0..120)
                .map(|i| psi(1.0, &law, 0.1 * i as f64).unwrap())
                .collect();
            for w in vals.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12 * w[2].abs().max(1.0));
            }
        }
    }

    #[test]
    fn saddle_examples() {
        let pm = QLaw::PointMass { b: 1.0 };
        let sp = solve_saddle(1.0, &pm, E - 1.0).unwrap();
        assert!((sp.s - 1.0).abs() < 1e-12);

        let sp = solve_saddle(1.0, &pm, 100.0).unwrap();
        let oracle = bisect(|s| s.exp_m1() / s - 100.0, 6.0, 7.0);
        assert!(sp.s > 6.0 && sp.s < 7.0);
        assert!(sp.residual.abs() <= 1e-8);
        assert!((sp.s - oracle).abs() < 1e-12);
        assert!(sp.bracket_lo < sp.s && sp.s < sp.bracket_hi);

        let tp = QLaw::TwoPoint {
            b: 1.0,
            p: 0.5,
            q0: -1.0,
        };
        let sp = solve_saddle(1.0, &tp, 10.0).unwrap();
        let f = |s: f64| psi_prime(1.0, &tp, s).unwrap() - 10.0;
        let oracle = bisect(f, 1e-6, 50.0);
        assert!((sp.s - oracle).abs() < 1e-11);
        assert!(psi_prime(1.0, &tp, sp.s / 2.0).unwrap() < 10.0);
    }

    #[test]
    fn saddle_errors() {
        let pm = QLaw::PointMass { b: 1.0 };
        // ψ' ≥ α E Q = 2 on (0, ∞)
        assert!(matches!(
            solve_saddle(2.0, &pm, 1.5),
            Err(Error::TargetBelowRange { .. })
        ));
        assert!(matches!(
            solve_saddle(1.0, &pm, -3.0),
            Err(Error::TargetBelowRange { .. })
        ));
        let tight = SaddleOptions {
            s_max: 10.0,
            ..SaddleOptions::default()
        };
        assert!(matches!(
            solve_saddle_with(1.0, &pm, 1e9, &tight),
            Err(Error::TargetOutOfRange { .. })
        ));
        assert!(solve_saddle(1.0, &QLaw::ExpValidation { c: 1.0 }, 10.0).is_err());
    }

    #[test]
    fn saddle_residual_and_bracket_invariants() {
        for law in fixtures() {
            for &alpha in &[0.5, 1.0, 3.0] {
                let mut prev = 0.0;
                for e in 1..=12 {
                    let t = 10f64.powi(e);
                    let sp = solve_saddle(alpha, &law, t).unwrap();
                    assert!(sp.residual.abs() <= 1e-10 * t, "{law} t={t}");
                    let direct = psi_prime(alpha, &law, sp.s).unwrap();
                    assert!(((direct - t) / t).abs() <= 1e-10);
                    assert!(sp.bracket_lo < sp.s && sp.s < sp.bracket_hi);
                    assert!(psi_prime(alpha, &law, sp.bracket_lo).unwrap() < t);
                    assert!(psi_prime(alpha, &law, sp.bracket_hi).unwrap() > t);
                    assert!(sp.s > prev);
                    prev = sp.s;
                }
            }
        }
    }

    #[test]
    fn saddle_grows_like_log_t_over_b() {
        for law in fixtures() {
            let b = law.b().unwrap();
            let dev: Vec<f64> = [1e3, 1e6, 1e9, 1e12]
                .iter()
                .map(|&t| (solve_saddle(1.0, &law, t).unwrap().s / (t.ln() / b) - 1.0).abs())
                .collect();
            for w in dev.windows(2) {
                assert!(w[1] < w[0], "{law}: {dev:?}");
            }
        }
    }

    #[test]
    fn second_order_term_is_one_plus_theta() {
        let cases = [
            (
                QLaw::GammaShift {
                    b: 1.0,
                    theta: 1.0,
                    lambda: 1.0,
                },
                1.0,
            ),
            (
                QLaw::GammaShift {
                    b: 0.5,
                    theta: 2.5,
                    lambda: 0.3,
                },
                2.5,
            ),
            (
                QLaw::TwoPoint {
                    b: 1.0,
                    p: 0.5,
                    q0: -1.0,
                },
                0.0,
            ),
        ];
        for (law, theta) in cases {
            let b = law.b().unwrap();
            let dev: Vec<f64> = [1e3, 1e6, 1e9, 1e12]
                .iter()
                .map(|&t: &f64| {
                    let s = solve_saddle(1.0, &law, t).unwrap().s;
                    ((b * s - t.ln()) / t.ln().ln() - (1.0 + theta)).abs()
                })
                .collect();
            for w in dev.windows(2) {
                assert!(w[1] < w[0], "{law}: {dev:?}");
            }
        }
    }

    #[test]
    fn huge_targets_stay_finite() {
        for law in fixtures() {
            let sp = solve_saddle(1.0, &law, 1e200).unwrap();
            assert!(sp.s.is_finite() && sp.residual.is_finite());
            assert!((sp.residual / 1e200).abs() <= 1e-10);
        }
    }
}
