//! Closed-form asymptotic expansions of the saddle point and the log density
//! in terms of `L1 = log(δt)` and `L2 = log log(δt)`.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n` held in the shared Stirling table.
pub const STIRLING_MAX_N: usize = 64;
/// Largest number of correction terms accepted by [`salpha_series`].
pub const MAX_SERIES_TERMS: usize = 20;
pub const DEFAULT_SERIES_TERMS: usize = 8;

/// Unsigned Stirling numbers of the first kind `c(n, k)`, `0 ≤ k ≤ n ≤ max_n`.
#[derive(Debug, Clone)]
pub struct StirlingTable {
    max_n: usize,
    rows: Vec<Vec<BigUint>>,
}

impl StirlingTable {
    pub fn new(max_n: usize) -> Self {
        let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(max_n + 1);
        rows.push(vec![BigUint::from(1u32)]);
        for n in 1..=max_n {
            let prev = &rows[n - 1];
            let mut row = vec![BigUint::from(0u32); n + 1];
            for k in 1..=n {
                let mut v = prev.get(k - 1).cloned().unwrap_or_default();
                if k < n {
                    v += &prev[k] * BigUint::from(n - 1);
                }
                row[k] = v;
            }
            rows.push(row);
        }
        StirlingTable { max_n, rows }
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn get(&self, n: usize, k: usize) -> Result<&BigUint> {
        if n > self.max_n || k > n {
            return Err(Error::StirlingRange { n, k });
        }
        Ok(&self.rows[n][k])
    }

    /// Shared table up to [`STIRLING_MAX_N`].
    pub fn shared() -> &'static StirlingTable {
        static TABLE: OnceLock<StirlingTable> = OnceLock::new();
        TABLE.get_or_init(|| StirlingTable::new(STIRLING_MAX_N))
    }
}

/// Exact `c(n, k)` for `0 ≤ k ≤ n ≤ 64`.
pub fn stirling_first_unsigned(n: usize, k: usize) -> Result<BigUint> {
    StirlingTable::shared().get(n, k).cloned()
}

/// Truncated series value with truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub t: f64,
    pub value: f64,
    pub terms_used: usize,
    /// Magnitude of the last correction term included (0 when none).
    pub last_term_magnitude: f64,
    /// False if some correction term is larger than its predecessor.
    pub converging: bool,
}

/// Parameters of the Example-3 family of laws (mass `p` at `b`, rest `≤ 0`).
fn check_family(alpha: f64, b: f64, p: f64) -> Result<()> {
    for (name, v) in [("alpha", alpha), ("b", b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "must be finite and positive",
            });
        }
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason: "must lie in (0, 1]",
        });
    }
    Ok(())
}

/// `(L1, L2)` for `δ = 1/(αbp)`, requiring `L1 > 1`.
fn logs(alpha: f64, b: f64, p: f64, t: f64) -> Result<(f64, f64)> {
    check_family(alpha, b, p)?;
    let l1 = (t / (alpha * b * p)).ln();
    if !(l1 > 1.0) || !l1.is_finite() {
        return Err(Error::SeriesPrecondition(format!(
            "log(δt) = {l1} must exceed 1 (t = {t})"
        )));
    }
    Ok((l1, l1.ln()))
}

/// `s_α(t)` from the double series in `L1`, `L2` truncated after `n_terms`
/// correction terms.
pub fn salpha_series(alpha: f64, b: f64, p: f64, t: f64, n_terms: usize) -> Result<ExpansionResult> {
    if n_terms > MAX_SERIES_TERMS {
        return Err(Error::SeriesPrecondition(format!(
            "n_terms = {n_terms} exceeds {MAX_SERIES_TERMS}"
        )));
    }
    let (l1, l2) = logs(alpha, b, p, t)?;
    let table = StirlingTable::shared();
    let mut sum = l1 + l2;
    let mut last = 0.0;
    let mut converging = true;
    for n in 1..=n_terms {
        let mut inner = 0.0;
        let mut l2_pow_over_fact = 1.0;
        for m in 1..=n {
            l2_pow_over_fact *= l2 / m as f64;
            let c = table.get(n, n - m + 1)?;
            let sign = if (n + m) % 2 == 0 { 1.0 } else { -1.0 };
            inner += sign * biguint_to_f64(c) * l2_pow_over_fact;
        }
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * inner / l1.powi(n as i32);
        if n > 1 && term.abs() > last {
            converging = false;
        }
        last = term.abs();
        sum += term;
    }
    Ok(ExpansionResult {
        t,
        value: sum / b,
        terms_used: n_terms,
        last_term_magnitude: last / b,
        converging,
    })
}

fn biguint_to_f64(x: &BigUint) -> f64 {
    x.to_f64().unwrap_or(f64::INFINITY)
}

/// Explicit expansion of `s_α(t)` through `L2³/L1⁴`.
pub fn salpha_expansion_k5(alpha: f64, b: f64, p: f64, t: f64) -> Result<f64> {
    let (l1, l2) = logs(alpha, b, p, t)?;
    let v = l1
        + l2
        + l2 / l1
        + l2 * (2.0 - l2) / (2.0 * l1.powi(2))
        + l2 * (6.0 - 9.0 * l2 + 2.0 * l2 * l2) / (6.0 * l1.powi(3))
        + l2 * (12.0 - 36.0 * l2 + 22.0 * l2 * l2 - 3.0 * l2.powi(3)) / (12.0 * l1.powi(4));
    Ok(v / b)
}

/// Predicted `log p_α(t)` through the `L1^{-3}` term.
pub fn logdensity_expansion_k3(alpha: f64, b: f64, p: f64, t: f64) -> Result<f64> {
    let (l1, l2) = logs(alpha, b, p, t)?;
    let bracket = l1 + l2 - 1.0
        + (l2 - 1.0) / l1
        + (l2 * (4.0 - l2) - 4.0) / (2.0 * l1.powi(2))
        + l2 * (36.0 - 15.0 * l2 + 2.0 * l2 * l2) / (6.0 * l1.powi(3));
    Ok(-t * bracket / b)
}

/// Expansion of `log q_α(t)` for the density of `Z_α − 1` when `Q ≡ 1`.
pub fn verv_expansion(alpha: f64, t: f64) -> Result<f64> {
    check_family(alpha, 1.0, 1.0)?;
    if !(t > std::f64::consts::E) || !t.is_finite() {
        return Err(Error::SeriesPrecondition(format!("t = {t} must exceed e")));
    }
    let l = t.ln();
    let ll = l.ln();
    Ok(-t * (l + ll - (1.0 + alpha.ln()) * (1.0 + 1.0 / l) + ll / l))
}

/// Both expansions for the shifted-gamma law `Q = b − η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example4Expansion {
    pub t: f64,
    pub s_expansion: f64,
    pub logdensity_expansion: f64,
}

/// Coefficient of `1/log(t/α)` in the saddle-point expansion.
pub fn example4_s_constant(b: f64, theta: f64, lambda: f64) -> f64 {
    theta * b / lambda + (1.0 + theta).powi(2) * (1.0 / b).ln()
}

/// Coefficient of `1/log(t/α)` in the log-density bracket.
pub fn example4_density_constant(b: f64, theta: f64, lambda: f64) -> f64 {
    example4_s_constant(b, theta, lambda) - 1.0 - theta
}

pub fn example4_expansions(
    alpha: f64,
    b: f64,
    theta: f64,
    lambda: f64,
    t: f64,
) -> Result<Example4Expansion> {
    check_family(alpha, b, 1.0)?;
    for (name, v) in [("theta", theta), ("lambda", lambda)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "must be finite and positive",
            });
        }
    }
    let l = (t / alpha).ln();
    if !(l > std::f64::consts::E) || !l.is_finite() {
        return Err(Error::SeriesPrecondition(format!(
            "t/α = {} must exceed e^e",
            t / alpha
        )));
    }
    let ll = l.ln();
    let k = (1.0 + theta).powi(2);
    let s_expansion = (l
        + (1.0 + theta) * ll
        + k * ll / l
        + example4_s_constant(b, theta, lambda) / l)
        / b;
    let logdensity_expansion = -t / b
        * (l + (1.0 + theta) * ll - 1.0
            + k * ll / l
            + example4_density_constant(b, theta, lambda) / l);
    Ok(Example4Expansion {
        t,
        s_expansion,
        logdensity_expansion,
    })
}
