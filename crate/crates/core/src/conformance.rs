//! Cross-module acceptance checks, driven by the embedded `expectations.toml`.

use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactdens::{asymp1_ratio, build_density_grid, exact_log_tail_z, DensityGrid};
use crate::expand::{salpha_expansion_k5, salpha_series};
use crate::montecarlo::{empirical_mgf, gamma_case_validate_with, SimConfig};
use crate::qmodel::QLaw;
use crate::saddle::{psi_prime, solve_saddle};
use crate::tailcalc::{debruijn_log_density, legendre_exponent, phi, tail_estimate};

pub const EXPECTATIONS_TOML: &str = include_str!("../expectations.toml");

/// Number of acceptance criteria.
pub const CRITERIA: u32 = 11;

#[derive(Debug, Clone, Deserialize)]
pub struct Fixtures {
    pub laws: Vec<String>,
    pub alphas: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SaddleSpec {
    pub id: u32,
    pub name: String,
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
    pub rel_residual: f64,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExpansionSpec {
    pub id: u32,
    pub name: String,
    pub t_ladder: Vec<f64>,
    pub series_terms: usize,
    pub k5_t: f64,
    pub k5_terms: usize,
    pub k5_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DickmanSpec {
    pub id: u32,
    pub name: String,
    pub alpha: f64,
    pub b: f64,
    pub t_max: f64,
    pub quick_t_max: f64,
    pub steps: usize,
    pub kappa: f64,
    pub kappa_tol: f64,
    pub mass_tol: f64,
    pub mean: f64,
    pub mean_tol: f64,
    pub richardson_tol: f64,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GridSeries {
    pub id: u32,
    pub name: String,
    pub t: Vec<f64>,
    pub quick_t: Vec<f64>,
    #[serde(default)]
    pub max_gap: f64,
    #[serde(default)]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MgfCase {
    pub alpha: f64,
    pub law: String,
    pub s: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MgfSpec {
    pub id: u32,
    pub name: String,
    pub paths: usize,
    pub quick_paths: usize,
    pub stderr_k: f64,
    pub max_seconds: f64,
    pub cases: Vec<MgfCase>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GammaSpec {
    pub id: u32,
    pub name: String,
    pub alpha: f64,
    pub c: f64,
    pub paths: usize,
    pub quick_paths: usize,
    pub ks_threshold: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LimitsSpec {
    pub id: u32,
    pub name: String,
    pub alpha: f64,
    pub laws: Vec<String>,
    pub s: Vec<f64>,
    pub max_dev: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LegendreSpec {
    pub id: u32,
    pub name: String,
    pub alpha: f64,
    pub law: String,
    pub t: Vec<f64>,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DeterminismSpec {
    pub id: u32,
    pub name: String,
    pub alpha: f64,
    pub law: String,
    pub paths: usize,
    pub mgf_points: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Expectations {
    pub fixtures: Fixtures,
    pub saddle: SaddleSpec,
    pub expansion: ExpansionSpec,
    pub dickman: DickmanSpec,
    pub asymp_ratio: GridSeries,
    pub oracle_tail: GridSeries,
    pub debruijn: GridSeries,
    pub mgf: MgfSpec,
    pub gamma: GammaSpec,
    pub limits: LimitsSpec,
    pub legendre: LegendreSpec,
    pub determinism: DeterminismSpec,
}

impl Expectations {
    pub fn embedded() -> Result<Self> {
        Self::parse(EXPECTATIONS_TOML)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Expectations(e.to_string()))
    }

    pub fn name(&self, id: u32) -> &str {
        match id {
            1 => &self.saddle.name,
            2 => &self.expansion.name,
            3 => &self.dickman.name,
            4 => &self.asymp_ratio.name,
            5 => &self.oracle_tail.name,
            6 => &self.debruijn.name,
            7 => &self.mgf.name,
            8 => &self.gamma.name,
            9 => &self.limits.name,
            10 => &self.legendre.name,
            11 => &self.determinism.name,
            _ => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    /// One-line report, `criterion  3 PASS  Dickman ground truth: ...`.
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {}  {}: {} [{:.2}s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub quick: bool,
    pub outcomes: Vec<CriterionOutcome>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

type Check = std::result::Result<(bool, String), String>;

/// Runs criteria against one set of expectations; the density grid is built
/// once and shared by criteria 3 to 6.
pub struct Conformance {
    pub expectations: Expectations,
    pub quick: bool,
    grid: OnceLock<std::result::Result<(DensityGrid, f64), String>>,
}

fn law(spec: &str) -> std::result::Result<QLaw, String> {
    spec.parse::<QLaw>().map_err(|e| e.to_string())
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

impl Conformance {
    pub fn new(quick: bool) -> Result<Self> {
        Ok(Self::with_expectations(Expectations::embedded()?, quick))
    }

    pub fn with_expectations(expectations: Expectations, quick: bool) -> Self {
        Conformance {
            expectations,
            quick,
            grid: OnceLock::new(),
        }
    }

    pub fn run_all(&self) -> Report {
        Report {
            quick: self.quick,
            outcomes: (1..=CRITERIA).map(|id| self.criterion(id)).collect(),
        }
    }

    pub fn criterion(&self, id: u32) -> CriterionOutcome {
        let start = Instant::now();
        let result = match id {
            1 => self.saddle(),
            2 => self.expansion(),
            3 => self.dickman(),
            4 => self.asymp_ratio(),
            5 => self.oracle_tail(),
            6 => self.debruijn(),
            7 => self.mgf(),
            8 => self.gamma(),
            9 => self.limits(),
            10 => self.legendre(),
            11 => self.determinism(),
            _ => Err(format!("no criterion {id}")),
        };
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        CriterionOutcome {
            id,
            name: self.expectations.name(id).to_string(),
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn grid_series(&self, g: &GridSeries) -> Vec<f64> {
        if self.quick {
            g.quick_t.clone()
        } else {
            g.t.clone()
        }
    }

    fn paths(&self, full: usize, quick: usize) -> usize {
        if self.quick {
            quick
        } else {
            full
        }
    }

    fn grid(&self) -> std::result::Result<&(DensityGrid, f64), String> {
        let d = &self.expectations.dickman;
        self.grid
            .get_or_init(|| {
                let t_max = if self.quick { d.quick_t_max } else { d.t_max };
                let start = Instant::now();
                build_density_grid(d.alpha, d.b, t_max, d.steps)
                    .map(|g| (g, start.elapsed().as_secs_f64()))
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn saddle(&self) -> Check {
        let e = &self.expectations;
        let c = &e.saddle;
        let laws: Vec<QLaw> = e.fixtures.laws.iter().map(|l| law(l)).collect::<std::result::Result<_, _>>()?;
        let ratio = (c.t_hi / c.t_lo).ln() / (c.points - 1) as f64;
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        for law in &laws {
            for &alpha in &e.fixtures.alphas {
                for i in 0..c.points {
                    let t = c.t_lo * (ratio * i as f64).exp();
                    let s = solve_saddle(alpha, law, t).map_err(|e| e.to_string())?.s;
                    let r = (psi_prime(alpha, law, s).map_err(|e| e.to_string())? - t).abs() / t;
                    worst = worst.max(r);
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        Ok((
            worst <= c.rel_residual && secs < c.max_seconds,
            format!(
                "max |psi'(s)-t|/t = {worst:.3e} (tol {:.0e}) over {} solves in {secs:.3}s (limit {}s)",
                c.rel_residual,
                laws.len() * e.fixtures.alphas.len() * c.points,
                c.max_seconds
            ),
        ))
    }

    fn expansion(&self) -> Check {
        let c = &self.expectations.expansion;
        let pm = QLaw::PointMass { b: 1.0 };
        let mut errs = Vec::new();
        for &t in c.t_ladder.iter().rev() {
            let exact = solve_saddle(1.0, &pm, t).map_err(|e| e.to_string())?.s;
            let series = salpha_series(1.0, 1.0, 1.0, t, c.series_terms).map_err(|e| e.to_string())?;
            errs.push((series.value - exact).abs());
        }
        // errs runs from the largest t down
        let ladder_ok = errs.windows(2).all(|w| w[0] <= w[1]);
        let k5 = salpha_expansion_k5(1.0, 1.0, 1.0, c.k5_t).map_err(|e| e.to_string())?;
        let s4 = salpha_series(1.0, 1.0, 1.0, c.k5_t, c.k5_terms).map_err(|e| e.to_string())?;
        let gap = (k5 - s4.value).abs();
        Ok((
            ladder_ok && gap <= c.k5_tol,
            format!(
                "series errors at t = {} (descending): {}; k5 vs {}-term series at {:.0e}: {gap:.3e} (tol {:.0e})",
                fmt_list(&c.t_ladder.iter().rev().copied().collect::<Vec<_>>()),
                fmt_list(&errs),
                c.k5_terms,
                c.k5_t,
                c.k5_tol
            ),
        ))
    }

    fn dickman(&self) -> Check {
        let d = &self.expectations.dickman;
        let (g, secs) = self.grid()?;
        let dk = (g.kappa - d.kappa).abs();
        let dm = (g.mass - 1.0).abs();
        let dmean = (g.mean - d.mean).abs();
        let ok = dk <= d.kappa_tol
            && dm <= d.mass_tol
            && dmean <= d.mean_tol
            && g.richardson_drift <= d.richardson_tol
            && *secs < d.max_seconds;
        Ok((
            ok,
            format!(
                "kappa = {:.10} (|d| {dk:.2e}), mass-1 = {dm:.2e}, mean-1 = {dmean:.2e}, drift = {:.2e}, t_max = {}, build {secs:.2}s",
                g.kappa, g.richardson_drift, g.t_max
            ),
        ))
    }

    fn asymp_ratio(&self) -> Check {
        let c = &self.expectations.asymp_ratio;
        let (g, _) = self.grid()?;
        let ts = self.grid_series(c);
        let r: Vec<f64> = ts
            .iter()
            .map(|&t| asymp1_ratio(g, t))
            .collect::<Result<_>>()
            .map_err(|e| e.to_string())?;
        let increasing = r.windows(2).all(|w| w[1] > w[0]);
        let gap = 1.0 - r[r.len() - 1];
        Ok((
            increasing && gap <= c.max_gap,
            format!("ratios at {}: {}; 1 - last = {gap:.3e} (tol {})", fmt_list(&ts), fmt_list(&r), c.max_gap),
        ))
    }

    fn oracle_tail(&self) -> Check {
        let c = &self.expectations.oracle_tail;
        let (g, _) = self.grid()?;
        let pm = QLaw::PointMass { b: g.b };
        let ts = self.grid_series(c);
        let mut devs = Vec::new();
        for &t in &ts {
            let exact = exact_log_tail_z(g, t).map_err(|e| e.to_string())?;
            let est = tail_estimate(g.alpha, &pm, t).map_err(|e| e.to_string())?;
            devs.push((exact - est.log_tail).abs() / exact.abs());
        }
        let last = devs[devs.len() - 1];
        Ok((
            strictly_decreasing(&devs) && last <= c.rel_tol,
            format!("relative deviations at {}: {} (tol {})", fmt_list(&ts), fmt_list(&devs), c.rel_tol),
        ))
    }

    fn debruijn(&self) -> Check {
        let c = &self.expectations.debruijn;
        let pm = QLaw::PointMass { b: 1.0 };
        let ts = self.grid_series(c);
        let mut devs = Vec::new();
        for &t in &ts {
            let db = debruijn_log_density(t - 1.0).map_err(|e| e.to_string())?;
            let est = tail_estimate(1.0, &pm, t).map_err(|e| e.to_string())?;
            devs.push((db - est.log_density).abs() / est.log_density.abs());
        }
        let last = devs[devs.len() - 1];
        Ok((
            strictly_decreasing(&devs) && last <= c.rel_tol,
            format!("relative deviations at {}: {} (tol {})", fmt_list(&ts), fmt_list(&devs), c.rel_tol),
        ))
    }

    fn mgf(&self) -> Check {
        let c = &self.expectations.mgf;
        let seed = self.expectations.fixtures.seed;
        let paths = self.paths(c.paths, c.quick_paths);
        let start = Instant::now();
        let mut ok = true;
        let mut parts = Vec::new();
        for case in &c.cases {
            let law = law(&case.law)?;
            let config = SimConfig::new(case.alpha, law, paths, seed).with_mgf_points(vec![case.s]);
            let summary = empirical_mgf(&config).map_err(|e| e.to_string())?;
            let m = summary.mgf[0];
            let target = phi(case.alpha, &law, case.s, 0).map_err(|e| e.to_string())?.exp();
            let z = (m.value - target) / m.stderr;
            ok &= m.stable && z.abs() <= c.stderr_k;
            parts.push(format!("({}, {law}, s={}): z = {z:+.2}", case.alpha, case.s));
        }
        let secs = start.elapsed().as_secs_f64();
        ok &= secs < c.max_seconds;
        Ok((
            ok,
            format!("{} paths, |z| <= {}: {}; {secs:.1}s", paths, c.stderr_k, parts.join("; ")),
        ))
    }

    fn gamma(&self) -> Check {
        let c = &self.expectations.gamma;
        let paths = self.paths(c.paths, c.quick_paths);
        let config = SimConfig::new(
            c.alpha,
            QLaw::exp_validation(c.c).map_err(|e| e.to_string())?,
            paths,
            self.expectations.fixtures.seed,
        );
        let r = gamma_case_validate_with(&config, c.ks_threshold).map_err(|e| e.to_string())?;
        let ok = r.ks_scaled <= c.ks_threshold && r.mean_z.abs() <= c.z_max && r.variance_z.abs() <= c.z_max;
        Ok((
            ok,
            format!(
                "{paths} paths: KS*sqrt(n) = {:.3} (tol {}), mean z = {:+.2}, variance z = {:+.2}",
                r.ks_scaled, c.ks_threshold, r.mean_z, r.variance_z
            ),
        ))
    }

    fn limits(&self) -> Check {
        let c = &self.expectations.limits;
        let mut ok = true;
        let mut parts = Vec::new();
        for spec in &c.laws {
            let law = law(spec)?;
            let b = law.b().map_err(|e| e.to_string())?;
            let mut curvature = Vec::new();
            let mut slope = Vec::new();
            for &s in &c.s {
                let g = law.mgf(s, 0).map_err(|e| e.to_string())?;
                let d2 = phi(c.alpha, &law, s, 2).map_err(|e| e.to_string())?;
                curvature.push((d2 * s / (c.alpha * b * g) - 1.0).abs());
                let r1 = law.mgf_ratio(s, 1).map_err(|e| e.to_string())?;
                slope.push((r1 / b - 1.0).abs());
            }
            for devs in [&curvature, &slope] {
                ok &= devs.windows(2).all(|w| w[1] <= w[0]) && devs[devs.len() - 1] <= c.max_dev;
            }
            parts.push(format!("{law}: curvature {} slope {}", fmt_list(&curvature), fmt_list(&slope)));
        }
        Ok((ok, format!("deviations at s = {} (tol {}): {}", fmt_list(&c.s), c.max_dev, parts.join("; "))))
    }

    fn legendre(&self) -> Check {
        let c = &self.expectations.legendre;
        let law = law(&c.law)?;
        let mut devs = Vec::new();
        for &t in &c.t {
            let est = tail_estimate(c.alpha, &law, t).map_err(|e| e.to_string())?;
            let i = legendre_exponent(c.alpha, &law, t).map_err(|e| e.to_string())?;
            devs.push((-est.log_tail - i).abs() / i);
        }
        let last = devs[devs.len() - 1];
        Ok((
            strictly_decreasing(&devs) && last <= c.rel_tol,
            format!("relative gaps at {}: {} (tol {})", fmt_list(&c.t), fmt_list(&devs), c.rel_tol),
        ))
    }

    fn determinism(&self) -> Check {
        let c = &self.expectations.determinism;
        let law = law(&c.law)?;
        let config = SimConfig::new(c.alpha, law, c.paths, self.expectations.fixtures.seed)
            .with_mgf_points(c.mgf_points.clone());
        let run = || -> std::result::Result<Vec<u8>, String> {
            let s = empirical_mgf(&config).map_err(|e| e.to_string())?;
            serde_json::to_vec_pretty(&s).map_err(|e| e.to_string())
        };
        let (a, b) = (run()?, run()?);
        Ok((
            a == b,
            format!("two runs of {} paths: {} and {} JSON bytes, identical = {}", c.paths, a.len(), b.len(), a == b),
        ))
    }
}
