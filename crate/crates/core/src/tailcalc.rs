//! Saddle-point asymptotics of the density and right tail of `Z_α`.
//!
//! Everything is reported in natural log: at `t ≈ 130` the density already
//! drops below the smallest positive double, so the exponent is never
//! exponentiated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmodel::QLaw;
use crate::roots::{self, Probe, RootOptions};
use crate::saddle::{
    self, check_alpha, log_psi_prime, psi, psi_prime, psi_second, psi_third, SaddlePoint,
};

/// Log-space tail and density asymptotics at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub t: f64,
    pub saddle: SaddlePoint,
    /// `−t·s_α(t) + ψ_α(s_α(t))`.
    pub exponent: f64,
    /// `log[t^{1/2} s_α(t) / (α (2πb)^{1/2})]`.
    pub log_prefactor_density: f64,
    /// `log[t^{1/2} / (α (2πb)^{1/2})]`.
    pub log_prefactor_tail: f64,
    pub log_density: f64,
    pub log_tail: f64,
}

/// Maximiser and value of `sup_{s≥0} (st − φ_α(s))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendrePoint {
    pub t: f64,
    pub s: f64,
    pub value: f64,
    pub iterations: usize,
}

/// `φ_α^{(k)}(s)` for the log-MGF `φ_α(s) = log g(s) + ψ_α(s)` of `Z_α`.
pub fn phi(alpha: f64, law: &QLaw, s: f64, k: usize) -> Result<f64> {
    check_alpha(alpha)?;
    law.require_bounded()?;
    if k > 3 {
        return Err(Error::DerivativeOrder(k));
    }
    match k {
        0 => Ok(law.log_mgf(s)? + psi(alpha, law, s)?),
        1 => Ok(law.mgf_ratio(s, 1)? + psi_prime(alpha, law, s)?),
        2 => {
            let r1 = law.mgf_ratio(s, 1)?;
            Ok(law.mgf_ratio(s, 2)? - r1 * r1 + psi_second(alpha, law, s)?)
        }
        _ => {
            let r1 = law.mgf_ratio(s, 1)?;
            let r2 = law.mgf_ratio(s, 2)?;
            let r3 = law.mgf_ratio(s, 3)?;
            Ok(r3 - 3.0 * r2 * r1 + 2.0 * r1.powi(3) + psi_third(alpha, law, s)?)
        }
    }
}

/// Evaluates the asymptotic formulas for the density and tail of `Z_α` at `t`.
pub fn tail_estimate(alpha: f64, law: &QLaw, t: f64) -> Result<TailEstimate> {
    let b = law.b()?;
    let saddle = saddle::solve_saddle(alpha, law, t)?;
    let s = saddle.s;
    let exponent = -t * s + psi(alpha, law, s)?;
    let log_prefactor_tail = 0.5 * t.ln() - alpha.ln() - 0.5 * (2.0 * PI * b).ln();
    let log_prefactor_density = log_prefactor_tail + s.ln();
    Ok(TailEstimate {
        t,
        saddle,
        exponent,
        log_prefactor_density,
        log_prefactor_tail,
        log_density: exponent + log_prefactor_density,
        log_tail: exponent + log_prefactor_tail,
    })
}

/// `ln φ'_α(s) − ln t` with slope, for the Legendre root search.
fn phi_prime_probe(alpha: f64, law: &QLaw, s: f64, log_t: f64) -> Result<Probe> {
    let r1 = law.mgf_ratio(s, 1)?;
    let r2 = law.mgf_ratio(s, 2)?;
    match log_psi_prime(alpha, law, s)? {
        Some((lpsi, dlpsi)) => {
            let x = r1 * (-lpsi).exp();
            if x <= -1.0 {
                return Ok(Probe::Below);
            }
            let lphi = lpsi + x.ln_1p();
            let slope = (r2 - r1 * r1) * (-lphi).exp() + (lpsi - lphi).exp() * dlpsi;
            Ok(Probe::Value {
                g: lphi - log_t,
                dg: slope,
            })
        }
        None => {
            let d1 = r1 + psi_prime(alpha, law, s)?;
            if d1 <= 0.0 {
                return Ok(Probe::Below);
            }
            let d2 = phi(alpha, law, s, 2)?;
            Ok(Probe::Value {
                g: d1.ln() - log_t,
                dg: d2 / d1,
            })
        }
    }
}

/// Solves `φ'_α(s) = t` and returns the Legendre transform `I(t)`.
pub fn legendre(alpha: f64, law: &QLaw, t: f64) -> Result<LegendrePoint> {
    check_alpha(alpha)?;
    let b = law.b()?;
    let threshold = (1.0 + alpha) * law.mean();
    if !(t > threshold) || !(t > 0.0) {
        return Err(Error::Subcritical { t, threshold });
    }
    let log_t = t.ln();
    let guess = saddle::initial_guess(alpha, b, t);
    let root = roots::solve_increasing(
        |s| phi_prime_probe(alpha, law, s, log_t),
        t,
        guess,
        &RootOptions::default(),
    )?;
    let value = t * root.s - phi(alpha, law, root.s, 0)?;
    Ok(LegendrePoint {
        t,
        s: root.s,
        value,
        iterations: root.iterations,
    })
}

/// `I(t) = sup_{s≥0} (st − φ_α(s))`.
pub fn legendre_exponent(alpha: f64, law: &QLaw, t: f64) -> Result<f64> {
    legendre(alpha, law, t).map(|p| p.value)
}

/// Classical saddle-point formula for the log density of the Dickman law
/// (`α = 1`, `Q ≡ 1`) at `t`.
pub fn debruijn_log_density(t: f64) -> Result<f64> {
    if !(t > std::f64::consts::E) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "must exceed e",
        });
    }
    let law = QLaw::PointMass { b: 1.0 };
    let s = saddle::solve_saddle(1.0, &law, t)?.s;
    // ∫_0^s (y e^y − e^y + 1)/y dy = (e^s − 1) − ∫_0^s (e^y − 1)/y dy
    let integral = s.exp_m1() - psi(1.0, &law, s)?;
    Ok(-0.5 * (2.0 * PI * t).ln() - integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::solve_saddle;

    const EIN1: f64 = 1.317_902_151_454_403_8;

    fn fixtures() -> Vec<QLaw> {
        vec![
            QLaw::PointMass { b: 1.0 },
            QLaw::PointMass { b: 2.5 },
            QLaw::TwoPoint {
                b: 1.0,
                p: 0.5,
                q0: -1.0,
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
    fn phi_examples() {
        let pm = QLaw::PointMass { b: 1.0 };
        assert!((phi(1.0, &pm, 1.0, 0).unwrap() - (1.0 + EIN1)).abs() < 1e-12);
        for law in fixtures() {
            assert_eq!(phi(0.7, &law, 0.0, 0).unwrap(), 0.0);
            let expected = 1.7 * law.mean();
            let d1 = phi(0.7, &law, 0.0, 1).unwrap();
            assert!((d1 - expected).abs() < 1e-12 * expected.abs().max(1.0));
            // cross-check against a one-sided difference of φ
            let h = 1e-5;
            let fd = (-3.0 * phi(0.7, &law, 0.0, 0).unwrap() + 4.0 * phi(0.7, &law, h, 0).unwrap()
                - phi(0.7, &law, 2.0 * h, 0).unwrap())
                / (2.0 * h);
            assert!((fd - d1).abs() < 1e-6 * d1.abs().max(1.0), "{law}");
        }
    }

    #[test]
    fn phi_derivatives_match_finite_differences() {
        for law in fixtures() {
            for &s in &[0.05f64, 0.5, 2.0, 6.0] {
                let h = 1e-3 * s.max(0.2);
                for k in 1..=3 {
                    let f = |x: f64| phi(1.3, &law, x, k - 1).unwrap();
                    let fd = (-f(s + 2.0 * h) + 8.0 * f(s + h) - 8.0 * f(s - h) + f(s - 2.0 * h))
                        / (12.0 * h);
                    let exact = phi(1.3, &law, s, k).unwrap();
                    assert!(
                        (fd - exact).abs() < 1e-6 * exact.abs().max(1.0),
                        "{law} s={s} k={k}: {fd} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn variance_identity_at_zero() {
        for law in fixtures() {
            let alpha = 1.4;
            let expected = law.variance() + alpha * law.raw_moment(2) / 2.0;
            let got = phi(alpha, &law, 0.0, 2).unwrap();
            assert!((got - expected).abs() < 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn curvature_ratios_converge() {
        for law in fixtures() {
            let b = law.b().unwrap();
            for k in 1..=3 {
                let dev = |s: f64| {
                    let g = law.mgf(s, 0).unwrap();
                    (phi(1.0, &law, s, k).unwrap() * s / (b.powi(k as i32 - 1) * g) - 1.0).abs()
                };
                let d = [dev(10.0), dev(50.0), dev(200.0)];
                assert!(d[1] <= d[0] && d[2] <= d[1] + 1e-12, "{law} k={k}: {d:?}");
                assert!(d[2] < 0.1, "{law} k={k}: {d:?}");
            }
        }
    }

    #[test]
    fn tail_estimate_example() {
        let pm = QLaw::PointMass { b: 1.0 };
        let est = tail_estimate(1.0, &pm, 100.0).unwrap();
        let s = solve_saddle(1.0, &pm, 100.0).unwrap().s;
        let expected = -100.0 * s + psi(1.0, &pm, s).unwrap() + 0.5 * 100f64.ln()
            - 0.5 * (2.0 * PI).ln();
        assert!((est.log_tail - expected).abs() < 1e-10);
        assert!(s > 6.0 && s < 7.0);
        assert!((est.log_density - est.log_tail - s.ln()).abs() < 1e-12);
        assert!(
            (est.log_density - (est.exponent + est.log_prefactor_density)).abs() == 0.0
                && (est.log_tail - (est.exponent + est.log_prefactor_tail)).abs() == 0.0
        );
    }

    #[test]
    fn exponent_grows_like_t_log_t_over_b() {
        for law in fixtures() {
            let b = law.b().unwrap();
            let ratio: Vec<f64> = [1e20, 1e60, 1e150]
                .iter()
                .map(|&t: &f64| {
                    let est = tail_estimate(1.0, &law, t).unwrap();
                    assert!(est.exponent < 0.0);
                    est.exponent / (t * t.ln())
                })
                .collect();
            for w in ratio.windows(2) {
                assert!((w[1] + 1.0 / b).abs() < (w[0] + 1.0 / b).abs(), "{law}: {ratio:?}");
            }
            assert!((ratio[2] * b + 1.0).abs() < 0.1, "{law}: {ratio:?}");
        }
    }

    #[test]
    fn saddle_identities_over_t_grid() {
        for law in fixtures() {
            let b = law.b().unwrap();
            let alpha = 1.0;
            let mut prev = (f64::INFINITY, f64::INFINITY);
            for &t in &[1e3, 1e6, 1e9, 1e12] {
                let s = solve_saddle(alpha, &law, t).unwrap().s;
                let g = law.mgf(s, 0).unwrap();
                let d_asym = (g / (t * s / alpha) - 1.0).abs();
                let d_form = (psi(alpha, &law, s).unwrap() / t - 1.0 / b).abs();
                assert!(d_asym < prev.0 && d_form < prev.1, "{law} t={t}");
                prev = (d_asym, d_form);
            }
        }
    }

    #[test]
    fn finite_for_huge_t() {
        for law in fixtures() {
            for &t in &[1e50, 1e100, 1e200] {
                let est = tail_estimate(1.0, &law, t).unwrap();
                for v in [est.exponent, est.log_density, est.log_tail] {
                    assert!(v.is_finite(), "{law} t={t}");
                }
            }
        }
    }

    #[test]
    fn legendre_examples() {
        let pm = QLaw::PointMass { b: 1.0 };
        let t = phi(1.0, &pm, 1.0, 1).unwrap();
        let lp = legendre(1.0, &pm, t).unwrap();
        assert!((lp.s - 1.0).abs() < 1e-10);
        assert!((lp.value - (t - phi(1.0, &pm, 1.0, 0).unwrap())).abs() < 1e-10);

        for law in fixtures() {
            for &t in &[50.0, 1e4, 1e8] {
                let i = legendre_exponent(1.0, &law, t).unwrap();
                let s = solve_saddle(1.0, &law, t).unwrap().s;
                assert!(i >= t * s - phi(1.0, &law, s, 0).unwrap() - 1e-9 * i.abs());
            }
        }
        let dev: Vec<f64> = [1e3, 1e6, 1e9]
            .iter()
            .map(|&t| {
                let est = tail_estimate(1.0, &pm, t).unwrap();
                let i = legendre_exponent(1.0, &pm, t).unwrap();
                ((-est.log_tail - i) / i).abs()
            })
            .collect();
        assert!(dev[0] > dev[1] && dev[1] > dev[2], "{dev:?}");
    }

    #[test]
    fn legendre_subcritical() {
        let pm = QLaw::PointMass { b: 1.0 };
        // φ'(0+) = (1 + α) b = 2
        assert!(matches!(
            legendre_exponent(1.0, &pm, 1.5),
            Err(Error::Subcritical { .. })
        ));
        assert!(legendre_exponent(1.0, &pm, 2.5).is_ok());
    }

    #[test]
    fn debruijn_examples() {
        let pm = QLaw::PointMass { b: 1.0 };
        let t = 50.0;
        let s = solve_saddle(1.0, &pm, t).unwrap().s;
        let psi_s = psi(1.0, &pm, s).unwrap();
        // e^s − 1 = t s at the saddle
        assert!((s.exp_m1() - t * s).abs() < 1e-9 * t * s);
        let expected = -0.5 * (2.0 * PI * t).ln() - (t * s - psi_s);
        assert!((debruijn_log_density(t).unwrap() - expected).abs() < 1e-8);
        assert!(debruijn_log_density(2.0).is_err());

        let dev: Vec<f64> = [50.0, 100.0, 200.0]
            .iter()
            .map(|&t| {
                let est = tail_estimate(1.0, &pm, t).unwrap();
                (debruijn_log_density(t - 1.0).unwrap() - est.log_density).abs()
            })
            .collect();
        assert!(dev[0] > dev[1] && dev[1] > dev[2], "{dev:?}");
    }
}
