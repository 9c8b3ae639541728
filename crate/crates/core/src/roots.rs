//! Bracketed Newton iteration for increasing functions in log form.
//!
//! The caller supplies `G(s) = ln F(s) − ln t` for an increasing `F`. Where
//! `F(s) ≤ 0` the logarithm is undefined and the probe reports
//! [`Probe::Below`]; such points are always left of the root.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) enum Probe {
    /// `F(s) ≤ 0`, hence `F(s) < t`.
    Below,
    /// `G(s)` and `G'(s)`.
    Value { g: f64, dg: f64 },
}

impl Probe {
    fn above(&self) -> bool {
        matches!(*self, Probe::Value { g, .. } if g > 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Root {
    pub s: f64,
    /// `G(s)` at the returned point (`None` if it landed on a `Below` probe).
    pub g: Option<f64>,
    pub iterations: usize,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RootOptions {
    pub s_max: f64,
    pub s_min: f64,
    pub log_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            s_max: 1e4,
            s_min: 1e-12,
            log_tol: 1e-13,
            max_iter: 200,
        }
    }
}

pub(crate) fn solve_increasing<P>(
    probe: P,
    t: f64,
    guess: Option<f64>,
    opts: &RootOptions,
) -> Result<Root>
where
    P: Fn(f64) -> Result<Probe>,
{
    // Bracket by geometric growth or shrinkage from s = 1.
    let mut s = 1.0;
    let first = probe(s)?;
    if let Probe::Value { g, .. } = first {
        if g == 0.0 {
            return Ok(Root {
                s,
                g: Some(0.0),
                iterations: 0,
                bracket_lo: 0.5,
                bracket_hi: 2.0,
            });
        }
    }
    let (lo, hi) = if first.above() {
        let mut hi = s;
        loop {
            s *= 0.5;
            if s < opts.s_min {
                return Err(Error::TargetBelowRange { t });
            }
            let p = probe(s)?;
            if !p.above() {
                break (s, hi);
            }
            hi = s;
        }
    } else {
        let mut lo = s;
        loop {
            s *= 2.0;
            if s > opts.s_max {
                return Err(Error::TargetOutOfRange {
                    t,
                    s_max: opts.s_max,
                });
            }
            let p = probe(s)?;
            if p.above() {
                break (lo, s);
            }
            lo = s;
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut x = match guess {
        Some(g) if g > a && g < b && g.is_finite() => g,
        _ => 0.5 * (a + b),
    };
    for iter in 1..=opts.max_iter {
        let p = probe(x)?;
        let converged = |g: f64| g.abs() <= opts.log_tol;
        match p {
            Probe::Value { g, .. } if converged(g) => {
                return Ok(Root {
                    s: x,
                    g: Some(g),
                    iterations: iter,
                    bracket_lo: lo,
                    bracket_hi: hi,
                });
            }
            _ => {}
        }
        if p.above() {
            b = x;
        } else {
            a = x;
        }
        if b - a <= 4.0 * f64::EPSILON * b {
            let g = match p {
                Probe::Value { g, .. } => Some(g),
                Probe::Below => None,
            };
            return Ok(Root {
                s: x,
                g,
                iterations: iter,
                bracket_lo: lo,
                bracket_hi: hi,
            });
        }
        let newton = match p {
            Probe::Value { g, dg } if dg > 0.0 && dg.is_finite() => Some(x - g / dg),
            _ => None,
        };
        x = match newton {
            Some(n) if n > a && n < b => n,
            _ => 0.5 * (a + b),
        };
    }
    let residual = match probe(x)? {
        Probe::Value { g, .. } => g,
        Probe::Below => f64::NEG_INFINITY,
    };
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        s: x,
        residual,
    })
}
