//! Numerical density of `Z_α − Q₁` for `Q ≡ b`.
//!
//! The density solves `t q(t) = α ∫_{t−b}^{t} q(y) dy` with `q(t) = κ (t/b)^{α−1}`
//! on `(0, b]`. It is stepped interval by interval on a grid aligned to `b`, so
//! the derivative jumps at multiples of `b` always sit on interval boundaries.
//! Each interval keeps linear mantissas and one log scale, which keeps values
//! far below the double underflow threshold representable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

pub const DEFAULT_STEPS_PER_UNIT: usize = 2048;
pub const DEFAULT_T_MAX_OVER_B: f64 = 205.0;
pub const MIN_STEPS_PER_UNIT: usize = 256;
/// Largest allowed change of `log q(t_max/2)` under grid doubling.
pub const RICHARDSON_TOL: f64 = 1e-6;
/// Largest allowed deviation of the independently integrated mass from one.
pub const MASS_TOL: f64 = 1e-4;

/// Density and tail of `Z_α − Q₁` on the nodes `t_i = i·h`, `0 ≤ i ≤ K·N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityGrid {
    pub alpha: f64,
    pub b: f64,
    pub steps_per_unit: usize,
    pub t_max: f64,
    pub h: f64,
    /// `q(t) = kappa·(t/b)^{α−1}` on `(0, b]`.
    pub kappa: f64,
    pub log_q: Vec<f64>,
    /// `log P{Z_α − Q₁ > t_i}`.
    pub log_tail: Vec<f64>,
    /// Mass by composite Simpson, independent of the stepping quadrature.
    pub mass: f64,
    pub mean: f64,
    /// `|Δ log q(t_max/2)|` against a grid with twice the steps (0 if unchecked).
    pub richardson_drift: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `∫` over each panel `[m, m+1]` of one interval by 4-point cubic rules that
/// never reach outside the interval.
fn panel_integrals(a: &[f64], h: f64) -> Vec<f64> {
    let n = a.len() - 1;
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let v = if m == 0 {
            9.0 * a[0] + 19.0 * a[1] - 5.0 * a[2] + a[3]
        } else if m == n - 1 {
            a[n - 3] - 5.0 * a[n - 2] + 19.0 * a[n - 1] + 9.0 * a[n]
        } else {
            -a[m - 1] + 13.0 * a[m] + 13.0 * a[m + 1] - a[m + 2]
        };
        out.push(v * h / 24.0);
    }
    out
}

/// `R[m] = ∫` from node `m` to the end of the interval.
fn suffix(panels: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; panels.len() + 1];
    for m in (0..panels.len()).rev() {
        r[m] = r[m + 1] + panels[m];
    }
    r
}

/// One interval `[(k+1)b, (k+2)b]` from the suffix integrals `r` of the
/// previous interval, both in units where the new interval starts at `a0`.
fn step_interval(alpha: f64, h: f64, t0: f64, r: &[f64], a0: f64) -> Vec<f64> {
    let n = r.len() - 1;
    let mut a = vec![0.0; n + 1];
    a[0] = a0;
    // Nodes 1 and 2 jointly: ∫_0^1 = h(5q0 + 8q1 − q2)/12, ∫_0^2 = h(q0 + 4q1 + q2)/3.
    let (t1, t2) = (t0 + h, t0 + 2.0 * h);
    let a11 = t1 - alpha * 8.0 * h / 12.0;
    let a12 = alpha * h / 12.0;
    let a21 = -alpha * 4.0 * h / 3.0;
    let a22 = t2 - alpha * h / 3.0;
    let b1 = alpha * (r[1] + 5.0 * h * a0 / 12.0);
    let b2 = alpha * (r[2] + h * a0 / 3.0);
    let det = a11 * a22 - a12 * a21;
    a[1] = (b1 * a22 - a12 * b2) / det;
    a[2] = (a11 * b2 - a21 * b1) / det;
    let mut p = h * (a[0] + 4.0 * a[1] + a[2]) / 3.0;
    let diag = alpha * 9.0 * h / 24.0;
    for m in 3..=n {
        let t = t0 + m as f64 * h;
        let known = h * (a[m - 3] - 5.0 * a[m - 2] + 19.0 * a[m - 1]) / 24.0;
        a[m] = alpha * (r[m] + p + known) / (t - diag);
        p += known + 9.0 * h * a[m] / 24.0;
    }
    a
}

/// `q` on `[b, 2b]` for `κ̃ = 1`: `(b/t)^{1−α} (1 − α Σ_j w^{α+j}/(α+j))`, `w = 1 − b/t`.
///
/// The `(t − b)^α` cusp at the left end defeats polynomial rules, so this
/// interval is evaluated and integrated directly instead of stepped.
fn second_interval_q(alpha: f64, b: f64, t: f64) -> f64 {
    let w = 1.0 - b / t;
    let mut sum = 0.0;
    if w > 0.0 {
        let mut pow = w.powf(alpha);
        for j in 0..200 {
            let term = pow / (alpha + j as f64);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            pow *= w;
        }
    }
    (b / t).powf(1.0 - alpha) * (1.0 - alpha * sum)
}

fn second_interval_integral(alpha: f64, b: f64, lo: f64, hi: f64, moment: bool) -> f64 {
    let f = |t: f64| second_interval_q(alpha, b, t) * if moment { t } else { 1.0 };
    quad::integrate(f, lo, hi, 0.0, 1e-14, 2000).value
}

struct Raw {
    log_q: Vec<f64>,
    log_tail: Vec<f64>,
    log_mass: f64,
    mass: f64,
    mean: f64,
}

fn build_raw(alpha: f64, b: f64, t_max: f64, n: usize) -> Result<Raw> {
    let h = b / n as f64;
    let intervals = (t_max / b).ceil() as usize;
    let nf = n as f64;

    // Interval 0 in closed form with provisional κ̃ = 1.
    let r0: Vec<f64> = (0..=n)
        .map(|m| {
            if m == 0 {
                b / alpha
            } else {
                -b / alpha * (alpha * (m as f64 / nf).ln()).exp_m1()
            }
        })
        .collect();

    // mantissas[k - 1], scales[k - 1] hold interval k ≥ 1
    let mut mantissas: Vec<Vec<f64>> = Vec::with_capacity(intervals - 1);
    let mut suffixes: Vec<Vec<f64>> = Vec::with_capacity(intervals - 1);
    let mut scales: Vec<f64> = Vec::with_capacity(intervals - 1);
    let mut prev_r = r0;
    let mut prev_end = 1.0;
    let mut prev_scale = 0.0;
    for k in 1..intervals {
        // new units: the interval starts at mantissa 1
        let unit = prev_end;
        let a = if k == 1 {
            (0..=n)
                .map(|m| second_interval_q(alpha, b, b + m as f64 * h))
                .collect()
        } else {
            let r: Vec<f64> = prev_r.iter().map(|v| v / unit).collect();
            step_interval(alpha, h, k as f64 * b, &r, 1.0)
        };
        if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Grid(format!(
                "stepping produced a nonpositive density on interval {k}"
            )));
        }
        let scale = prev_scale + unit.ln();
        let panels = if k == 1 {
            (0..n)
                .map(|m| {
                    let lo = b + m as f64 * h;
                    second_interval_integral(alpha, b, lo, lo + h, false)
                })
                .collect()
        } else {
            panel_integrals(&a, h)
        };
        let s = suffix(&panels);
        prev_end = a[n];
        prev_r = s.clone();
        prev_scale = scale;
        mantissas.push(a);
        suffixes.push(s);
        scales.push(scale);
    }

    // Remainder beyond the grid from the local decay rate.
    let last = mantissas.last().expect("at least three intervals");
    let rate = (last[n - 1].ln() - last[n].ln()) / h;
    if !(rate > 0.0) {
        return Err(Error::Grid("density not decaying at the grid end".into()));
    }
    let log_end = prev_scale + last[n].ln() - rate.ln();

    let mut log_mass = (b / alpha).ln();
    for (s, e) in suffixes.iter().zip(&scales) {
        log_mass = log_sum_exp(log_mass, s[0].ln() + e);
    }
    log_mass = log_sum_exp(log_mass, log_end);

    let total = intervals * n;
    let mut log_q = vec![0.0; total + 1];
    let mut log_tail = vec![0.0; total + 1];
    log_q[0] = match alpha.partial_cmp(&1.0) {
        Some(std::cmp::Ordering::Less) => f64::INFINITY,
        Some(std::cmp::Ordering::Greater) => f64::NEG_INFINITY,
        _ => -log_mass,
    };
    for m in 1..=n {
        log_q[m] = (alpha - 1.0) * (m as f64 / nf).ln() - log_mass;
    }
    for (k, (a, e)) in mantissas.iter().zip(&scales).enumerate() {
        let base = (k + 1) * n;
        for (m, v) in a.iter().enumerate() {
            log_q[base + m] = v.ln() + e - log_mass;
        }
    }

    let mut next = log_end - log_mass;
    log_tail[total] = next;
    for (k, (s, e)) in suffixes.iter().zip(&scales).enumerate().rev() {
        let base = (k + 1) * n;
        for m in (0..n).rev() {
            log_tail[base + m] = log_sum_exp(s[m].ln() + e - log_mass, next);
        }
        next = log_tail[base];
    }
    let tail_b = next.exp();
    for m in 0..n {
        let head = -b / alpha * (alpha * (m as f64 / nf).ln()).exp_m1();
        log_tail[m] = (tail_b + head * (-log_mass).exp()).ln();
    }
    log_tail[0] = log_tail[0].min(0.0);

    // Independent Simpson pass for mass and mean.
    let mut mass = b / alpha;
    let mut mean = b * b / (alpha + 1.0);
    for (k, (a, e)) in mantissas.iter().zip(&scales).enumerate() {
        let w = e.exp();
        if w == 0.0 {
            continue;
        }
        if k == 0 {
            mass += w * second_interval_integral(alpha, b, b, 2.0 * b, false);
            mean += w * second_interval_integral(alpha, b, b, 2.0 * b, true);
            continue;
        }
        let t0 = (k + 1) as f64 * b;
        let (mut sm, mut st) = (0.0, 0.0);
        for (m, v) in a.iter().enumerate() {
            let c = if m == 0 || m == n {
                1.0
            } else if m % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sm += c * v;
            st += c * v * (t0 + m as f64 * h);
        }
        mass += w * sm * h / 3.0;
        mean += w * st * h / 3.0;
    }
    let norm = (-log_mass).exp();
    Ok(Raw {
        log_q,
        log_tail,
        log_mass,
        mass: mass * norm,
        mean: mean * norm,
    })
}

/// Steps the density of `Z_α − Q₁` for `Q ≡ b` on `[0, t_max]` and verifies it
/// against an independent mass integral and a grid-doubling check.
pub fn build_density_grid(
    alpha: f64,
    b: f64,
    t_max: f64,
    steps_per_unit: usize,
) -> Result<DensityGrid> {
    let grid = build_unchecked(alpha, b, t_max, steps_per_unit)?;
    let fine = build_unchecked(alpha, b, t_max, 2 * steps_per_unit)?;
    let i = ((0.5 * t_max / grid.h).round() as usize).max(1);
    let drift = (grid.log_q[i] - fine.log_q[2 * i]).abs();
    if !(drift <= RICHARDSON_TOL) {
        return Err(Error::Grid(format!(
            "log q({}) moves by {drift:e} when the step is halved",
            i as f64 * grid.h
        )));
    }
    Ok(DensityGrid {
        richardson_drift: drift,
        ..grid
    })
}

/// Same as [`build_density_grid`] without the grid-doubling check.
pub fn build_unchecked(
    alpha: f64,
    b: f64,
    t_max: f64,
    steps_per_unit: usize,
) -> Result<DensityGrid> {
    for (name, v) in [("alpha", alpha), ("b", b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "must be finite and positive",
            });
        }
    }
    if !(t_max >= 3.0 * b) || !t_max.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_max",
            value: t_max,
            reason: "must be finite and at least 3b",
        });
    }
    if steps_per_unit < MIN_STEPS_PER_UNIT || steps_per_unit % 2 == 1 {
        return Err(Error::InvalidParameter {
            name: "steps_per_unit",
            value: steps_per_unit as f64,
            reason: "must be even and at least 256",
        });
    }
    let raw = build_raw(alpha, b, t_max, steps_per_unit)?;
    if !((raw.mass - 1.0).abs() <= MASS_TOL) {
        return Err(Error::Grid(format!(
            "independent mass integral gives {} after normalisation",
            raw.mass
        )));
    }
    Ok(DensityGrid {
        alpha,
        b,
        steps_per_unit,
        t_max,
        h: b / steps_per_unit as f64,
        kappa: (-raw.log_mass).exp(),
        log_q: raw.log_q,
        log_tail: raw.log_tail,
        mass: raw.mass,
        mean: raw.mean,
        richardson_drift: 0.0,
    })
}

impl DensityGrid {
    /// Right end of the stored grid (`t_max` rounded up to a multiple of `b`).
    pub fn t_end(&self) -> f64 {
        (self.log_q.len() - 1) as f64 * self.h
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(t >= 0.0 && t <= self.t_end()) {
            return Err(Error::OutOfGrid {
                t,
                lo: 0.0,
                hi: self.t_end(),
            });
        }
        let x = t / self.h;
        let i = (x.floor() as usize).min(self.log_q.len() - 2);
        Ok((i, x - i as f64))
    }

    /// `log q(t)`, exact on `(0, b]` and log-linear between nodes beyond.
    pub fn log_q_at(&self, t: f64) -> Result<f64> {
        let (i, w) = self.locate(t)?;
        if t <= self.b {
            return Ok(self.kappa.ln() + (self.alpha - 1.0) * (t / self.b).ln());
        }
        Ok((1.0 - w) * self.log_q[i] + w * self.log_q[i + 1])
    }

    /// `log P{Z_α − Q₁ > t}`.
    pub fn log_tail_at(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let (i, w) = self.locate(t)?;
        if t < self.b {
            let tail_b = self.log_tail[self.steps_per_unit].exp();
            let head = -self.b / self.alpha * (self.alpha * (t / self.b).ln()).exp_m1();
            return Ok((tail_b + self.kappa * head).ln().min(0.0));
        }
        Ok((1.0 - w) * self.log_tail[i] + w * self.log_tail[i + 1])
    }

    /// Largest `|t q(t)/α − (P{Z>t} − P{Z−Q₁>t})| / P{Z>t}` over nodes `t ≥ b`.
    pub fn balance_max_residual(&self) -> f64 {
        let n = self.steps_per_unit;
        let mut worst: f64 = 0.0;
        for i in n..self.log_q.len() {
            let t = self.node(i);
            let lz = self.log_tail[i - n];
            let lhs = (t.ln() - self.alpha.ln() + self.log_q[i] - lz).exp();
            let rhs = -(self.log_tail[i] - lz).exp_m1();
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }

    /// Number of local maxima of the node density (plateaus count once).
    pub fn mode_count(&self) -> usize {
        let start = if self.log_q[0].is_finite() { 0 } else { 1 };
        let mut peaks = 0;
        let mut rising: Option<bool> = None;
        for w in self.log_q[start..].windows(2) {
            let d = w[1] - w[0];
            if d.abs() <= 1e-13 * w[0].abs().max(1.0) {
                continue;
            }
            let up = d > 0.0;
            match rising {
                None if !up => peaks += 1,
                Some(true) if !up => peaks += 1,
                _ => {}
            }
            rising = Some(up);
        }
        if rising == Some(true) {
            peaks += 1;
        }
        peaks
    }
}

/// `log P{Z_α > t}` via `Z_α = b + (Z_α − Q₁)`.
pub fn exact_log_tail_z(grid: &DensityGrid, t: f64) -> Result<f64> {
    if t <= grid.b {
        return Ok(0.0);
    }
    grid.log_tail_at(t - grid.b)
}

/// `α^{−1} t q(t) / P{Z_α > t}`, which tends to one.
pub fn asymp1_ratio(grid: &DensityGrid, t: f64) -> Result<f64> {
    if !(t > grid.b) {
        return Err(Error::OutOfGrid {
            t,
            lo: grid.b,
            hi: grid.t_end(),
        });
    }
    let lq = grid.log_q_at(t)?;
    let lz = exact_log_tail_z(grid, t)?;
    Ok((t.ln() - grid.alpha.ln() + lq - lz).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    const EXP_MINUS_GAMMA: f64 = 0.561_459_483_566_885_1;

    fn dickman() -> &'static DensityGrid {
        static GRID: OnceLock<DensityGrid> = OnceLock::new();
        GRID.get_or_init(|| build_density_grid(1.0, 1.0, 205.0, 2048).unwrap())
    }

    /// ρ(u) for 1 ≤ u ≤ 2 is 1 − ln u, and q = e^{−γ} ρ.
    #[test]
    fn dickman_second_interval_closed_form() {
        let g = dickman();
        for &t in &[1.25, 1.5, 1.999] {
            let want = EXP_MINUS_GAMMA * (1.0 - f64::ln(t));
            assert!((g.log_q_at(t).unwrap() - want.ln()).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn dickman_constants() {
        let g = dickman();
        assert!((g.kappa - EXP_MINUS_GAMMA).abs() < 1e-6, "{}", g.kappa);
        assert!((g.mass - 1.0).abs() < 1e-6);
        assert!((g.mean - 1.0).abs() < 1e-5);
        assert!(g.richardson_drift <= 1e-6);
        // flat on (0, 1)
        assert_eq!(g.log_q_at(0.3).unwrap(), g.log_q_at(0.9).unwrap());
    }

    #[test]
    fn dickman_tail_at_two() {
        let g = dickman();
        let want = (1.0 - EXP_MINUS_GAMMA).ln();
        assert!((exact_log_tail_z(g, 2.0).unwrap() - want).abs() < 1e-6);
        assert_eq!(exact_log_tail_z(g, 0.5).unwrap(), 0.0);
        assert_eq!(exact_log_tail_z(g, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn tail_strictly_decreasing() {
        let g = dickman();
        for w in g.log_tail.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn balance_residual_small() {
        let g = dickman();
        let r = g.balance_max_residual();
        assert!(r <= 1e-8, "{r}");
    }

    #[test]
    fn asymp_ratio_behaviour() {
        let g = dickman();
        let ts = [2.0, 10.0, 25.0, 50.0, 100.0, 200.0];
        let r: Vec<f64> = ts.iter().map(|&t| asymp1_ratio(g, t).unwrap()).collect();
        for v in &r {
            assert!(*v > 0.0 && *v <= 1.0);
        }
        assert!(r[3] > r[1]);
        assert!(1.0 - r[5] < 0.15, "{r:?}");
    }

    #[test]
    fn dickman_unimodal_nonincreasing() {
        let g = dickman();
        assert_eq!(g.mode_count(), 1);
        for w in g.log_q[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn alpha_two_first_interval_linear() {
        let g = build_density_grid(2.0, 1.0, 60.0, 512).unwrap();
        let r = (g.log_q_at(0.8).unwrap() - g.log_q_at(0.4).unwrap()).exp();
        assert!((r - 2.0).abs() < 1e-12);
        assert!((g.mean - 2.0).abs() < 1e-5, "{}", g.mean);
        assert_eq!(g.mode_count(), 1);
        assert!(g.balance_max_residual() <= 1e-8);
    }

    #[test]
    fn other_alpha_and_b() {
        for &(alpha, b) in &[(0.5, 1.0), (3.0, 2.0), (1.0, 2.5)] {
            let g = build_density_grid(alpha, b, 40.0 * b, 1024).unwrap();
            assert!((g.mass - 1.0).abs() < 1e-6, "α={alpha} mass {}", g.mass);
            assert!(g.balance_max_residual() <= 1e-8);
            assert!((g.mean - alpha * b).abs() < 1e-4 * b, "α={alpha}: {}", g.mean);
            assert_eq!(g.mode_count(), 1);
            if alpha <= 1.0 {
                for w in g.log_q[1..].windows(2) {
                    assert!(w[1] <= w[0] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn second_interval_solves_the_equation() {
        for &(alpha, b) in &[(0.5f64, 1.0f64), (1.7, 2.0), (0.2, 0.5)] {
            for &u in &[0.01, 0.3, 0.99] {
                let t = b * (1.0 + u);
                // ∫_{t−b}^{b} (y/b)^{α−1} dy in closed form, the rest by quadrature
                let head = b / alpha * (1.0 - u.powf(alpha));
                let rest = quad::integrate(
                    |y| second_interval_q(alpha, b, y),
                    b,
                    t,
                    0.0,
                    1e-14,
                    500,
                )
                .value;
                let lhs = t * second_interval_q(alpha, b, t);
                assert!((lhs - alpha * (head + rest)).abs() < 1e-11, "α={alpha} u={u}");
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(build_density_grid(1.0, 1.0, 2.0, 512).is_err());
        assert!(build_density_grid(1.0, 1.0, 20.0, 100).is_err());
        assert!(build_density_grid(1.0, 1.0, 20.0, 513).is_err());
        assert!(build_density_grid(0.0, 1.0, 20.0, 512).is_err());
        let g = dickman();
        assert!(matches!(
            g.log_q_at(1e4),
            Err(Error::OutOfGrid { .. })
        ));
        assert!(asymp1_ratio(g, 0.5).is_err());
    }
}
