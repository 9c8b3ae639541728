use std::time::Instant;

use perptail::expand::{
    example4_expansions, logdensity_expansion_k3, salpha_expansion_k5, salpha_series,
    verv_expansion, MAX_SERIES_TERMS,
};
use perptail::montecarlo::{gamma_case_validate_with, simulate, summarize, DEFAULT_KS_THRESHOLD};
use perptail::{
    asymp1_ratio, build_density_grid, debruijn_log_density, exact_log_tail_z, legendre_exponent,
    psi_prime, solve_saddle, tail_estimate, Conformance, QLaw, SimConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{json, Cell, Format, RunManifest, Sink, Table};
use crate::{
    CliError, Command, DensArgs, Ex4Quantity, ExpandArgs, SaddleArgs, SimArgs, TArgs,
    TailArgs, ValidateArgs, Which,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    let start = Instant::now();
    let (name, params, common, seed, outcome) = match command {
        Command::Saddle(a) => ("saddle", to_value(&a)?, a.common.clone(), None, saddle(&a)?),
        Command::Tail(a) => ("tail", to_value(&a)?, a.common.clone(), None, tail(&a)?),
        Command::Expand(a) => ("expand", to_value(&a)?, a.common.clone(), None, expand(&a)?),
        Command::Dens(a) => ("dens", to_value(&a)?, a.common.clone(), None, dens(&a)?),
        Command::Sim(a) => ("sim", to_value(&a)?, a.common.clone(), Some(a.seed), sim(&a)?),
        Command::Validate(a) => ("validate", to_value(&a)?, a.common.clone(), None, validate(&a)?),
    };
    let Outcome {
        mut sink,
        primary,
        diagnostics,
        passed,
    } = outcome;
    sink.primary(common.output.as_deref(), primary);
    let wall = start.elapsed().as_secs_f64();
    sink.finish(|outputs| RunManifest {
        subcommand: name.into(),
        parameters: params,
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        wall_clock_seconds: wall,
        outputs,
        diagnostics,
    })?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Validation)
    }
}

struct Outcome {
    sink: Sink,
    primary: Vec<u8>,
    diagnostics: Option<serde_json::Value>,
    passed: bool,
}

impl Outcome {
    fn table(t: &Table, format: Format) -> Result<Self> {
        Ok(Outcome {
            sink: Sink::default(),
            primary: render(t, format)?,
            diagnostics: None,
            passed: true,
        })
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| CliError::Other(e.into()))
}

fn render(t: &Table, format: Format) -> Result<Vec<u8>> {
    Ok(match format {
        Format::Csv => t.to_csv()?,
        Format::Json => json(t)?,
    })
}

fn positive(flag: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::usage(flag, format!("must be positive and finite, got {v}")))
    }
}

fn t_values(t: &TArgs) -> Result<Vec<f64>> {
    let flag = if t.t.is_some() { "--t" } else { "--t-grid" };
    let v = t.values();
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(CliError::usage(flag, format!("t must be positive, got {bad}")));
    }
    Ok(v)
}

fn bounded_law(law: &QLaw) -> Result<()> {
    law.require_bounded()
        .map_err(|e| CliError::usage("--law", e))
}

fn at<T>(flag: &'static str, t: f64, r: perptail::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::usage(flag, format!("at t = {t}: {e}")))
}

fn saddle(a: &SaddleArgs) -> Result<Outcome> {
    let alpha = positive("--alpha", a.alpha)?;
    bounded_law(&a.law)?;
    let ts = t_values(&a.t)?;
    let rows: Vec<_> = ts
        .par_iter()
        .map(|&t| {
            let sp = at("--t", t, solve_saddle(alpha, &a.law, t))?;
            let r = at("--t", t, psi_prime(alpha, &a.law, sp.s))?;
            Ok(vec![
                Cell::F(t),
                Cell::F(sp.s),
                Cell::F((r - t) / t),
                Cell::U(sp.iterations as u64),
            ])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(["t", "s", "residual", "iterations"]);
    rows.into_iter().for_each(|r| table.push(r));
    Outcome::table(&table, a.common.format)
}

fn tail(a: &TailArgs) -> Result<Outcome> {
    let alpha = positive("--alpha", a.alpha)?;
    bounded_law(&a.law)?;
    if a.debruijn && !(alpha == 1.0 && a.law == QLaw::PointMass { b: 1.0 }) {
        return Err(CliError::usage(
            "--debruijn",
            "needs --alpha 1 and --law pointmass:b=1",
        ));
    }
    let ts = t_values(&a.t)?;
    let mut columns = vec!["t", "s", "exponent", "log_density", "log_tail"];
    if a.legendre {
        columns.push("I");
    }
    if a.debruijn {
        columns.push("debruijn");
    }
    let rows: Vec<_> = ts
        .par_iter()
        .map(|&t| {
            let e = at("--t", t, tail_estimate(alpha, &a.law, t))?;
            let mut row = vec![
                Cell::F(t),
                Cell::F(e.saddle.s),
                Cell::F(e.exponent),
                Cell::F(e.log_density),
                Cell::F(e.log_tail),
            ];
            if a.legendre {
                row.push(Cell::F(at("--legendre", t, legendre_exponent(alpha, &a.law, t))?));
            }
            if a.debruijn {
                row.push(Cell::F(at("--debruijn", t, debruijn_log_density(t - 1.0))?));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(columns);
    rows.into_iter().for_each(|r| table.push(r));
    Outcome::table(&table, a.common.format)
}

fn family(law: &QLaw) -> Result<(f64, f64)> {
    match *law {
        QLaw::PointMass { b } => Ok((b, 1.0)),
        QLaw::TwoPoint { b, p, q0: 0.0 } => Ok((b, p)),
        _ => Err(CliError::usage(
            "--law",
            "this expansion needs pointmass:b=B or twopoint:b=B,p=P,q0=0",
        )),
    }
}

fn expand(a: &ExpandArgs) -> Result<Outcome> {
    let alpha = positive("--alpha", a.alpha)?;
    bounded_law(&a.law)?;
    if a.terms > MAX_SERIES_TERMS {
        return Err(CliError::usage(
            "--terms",
            format!("at most {MAX_SERIES_TERMS}"),
        ));
    }
    let ts = t_values(&a.t)?;
    let law = a.law;
    let eval = |t: f64| -> Result<(f64, f64)> {
        match a.which {
            Which::Salpha | Which::K5 => {
                let (b, p) = family(&law)?;
                let v = if a.which == Which::Salpha {
                    at("--t", t, salpha_series(alpha, b, p, t, a.terms))?.value
                } else {
                    at("--t", t, salpha_expansion_k5(alpha, b, p, t))?
                };
                Ok((v, at("--t", t, solve_saddle(alpha, &law, t))?.s))
            }
            Which::K3 => {
                let (b, p) = family(&law)?;
                let v = at("--t", t, logdensity_expansion_k3(alpha, b, p, t))?;
                Ok((v, at("--t", t, tail_estimate(alpha, &law, t))?.log_density))
            }
            Which::Verv => {
                if law != (QLaw::PointMass { b: 1.0 }) {
                    return Err(CliError::usage("--law", "verv needs pointmass:b=1"));
                }
                let v = at("--t", t, verv_expansion(alpha, t - 1.0))?;
                Ok((v, at("--t", t, tail_estimate(alpha, &law, t))?.log_density))
            }
            Which::Ex4 => {
                let QLaw::GammaShift { b, theta, lambda } = law else {
                    return Err(CliError::usage("--law", "ex4 needs gammashift:b=B,theta=T,lambda=L"));
                };
                let e = at("--t", t, example4_expansions(alpha, b, theta, lambda, t))?;
                Ok(match a.quantity {
                    Ex4Quantity::S => (e.s_expansion, at("--t", t, solve_saddle(alpha, &law, t))?.s),
                    Ex4Quantity::Logdensity => (
                        e.logdensity_expansion,
                        at("--t", t, tail_estimate(alpha, &law, t))?.log_density,
                    ),
                })
            }
        }
    };
    let rows: Vec<_> = ts
        .par_iter()
        .map(|&t| {
            let (v, r) = eval(t)?;
            Ok(vec![Cell::F(t), Cell::F(v), Cell::F(r), Cell::F((v - r).abs())])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(["t", "expansion", "solver_reference", "abs_error"]);
    rows.into_iter().for_each(|r| table.push(r));
    Outcome::table(&table, a.common.format)
}

#[derive(Serialize)]
struct DensSummary {
    alpha: f64,
    b: f64,
    steps_per_unit: usize,
    t_max: f64,
    t_end: f64,
    kappa: f64,
    mass: f64,
    mean: f64,
    richardson_drift: f64,
    balance_max_residual: f64,
}

#[derive(Serialize)]
struct DensJson<'a> {
    summary: &'a DensSummary,
    rows: &'a Table,
}

const DENS_COLUMNS: [&str; 5] = ["t", "log_q", "log_tail_Zminus", "log_tail_Z", "asymp1_ratio"];

fn dens(a: &DensArgs) -> Result<Outcome> {
    let alpha = positive("--alpha", a.alpha)?;
    let b = positive("--b", a.b)?;
    let tmax = positive("--tmax", a.tmax)?;
    if tmax < 2.0 * b {
        return Err(CliError::usage("--tmax", "must be at least 2b"));
    }
    if a.steps < perptail::exactdens::MIN_STEPS_PER_UNIT || a.steps % 2 == 1 {
        return Err(CliError::usage(
            "--steps",
            format!(
                "must be even and at least {}",
                perptail::exactdens::MIN_STEPS_PER_UNIT
            ),
        ));
    }
    let grid = build_density_grid(alpha, b, tmax, a.steps)
        .map_err(|e| CliError::Other(anyhow::anyhow!("density grid: {e}")))?;
    let ts: Vec<f64> = match a.t_grid {
        Some(g) => g.values(),
        None => (2..)
            .map(|k| k as f64 * b)
            .take_while(|&t| t <= grid.t_end() + 1e-9 * b)
            .collect(),
    };
    let row = |t: f64| -> perptail::Result<Vec<Cell>> {
        let ratio = if t > b { Cell::F(asymp1_ratio(&grid, t)?) } else { Cell::Empty };
        Ok(vec![
            Cell::F(t),
            Cell::F(grid.log_q_at(t)?),
            Cell::F(grid.log_tail_at(t)?),
            Cell::F(exact_log_tail_z(&grid, t)?),
            ratio,
        ])
    };
    let mut table = Table::new(DENS_COLUMNS);
    for &t in &ts {
        table.push(row(t).map_err(|e| CliError::usage("--t-grid", e))?);
    }
    let summary = DensSummary {
        alpha,
        b,
        steps_per_unit: grid.steps_per_unit,
        t_max: grid.t_max,
        t_end: grid.t_end(),
        kappa: grid.kappa,
        mass: grid.mass,
        mean: grid.mean,
        richardson_drift: grid.richardson_drift,
        balance_max_residual: grid.balance_max_residual(),
    };
    let primary = match a.common.format {
        Format::Csv => table.to_csv()?,
        Format::Json => json(&DensJson {
            summary: &summary,
            rows: &table,
        })?,
    };
    let mut sink = Sink::default();
    if let Some(path) = &a.emit_grid {
        let mut full = Table::new(DENS_COLUMNS);
        for i in 1..grid.log_q.len() {
            let t = grid.node(i);
            full.push(vec![
                Cell::F(t),
                Cell::F(grid.log_q[i]),
                Cell::F(grid.log_tail[i]),
                Cell::F(exact_log_tail_z(&grid, t).map_err(|e| CliError::Other(e.into()))?),
                if t > b {
                    Cell::F(asymp1_ratio(&grid, t).map_err(|e| CliError::Other(e.into()))?)
                } else {
                    Cell::Empty
                },
            ]);
        }
        sink.file(path, full.to_csv()?);
    }
    Ok(Outcome {
        sink,
        primary,
        diagnostics: Some(to_value(&summary)?),
        passed: true,
    })
}

#[derive(Serialize)]
struct SimJson<'a> {
    summary: &'a perptail::SimSummary,
    gamma: Option<&'a perptail::montecarlo::GammaReport>,
}

fn sim(a: &SimArgs) -> Result<Outcome> {
    let alpha = positive("--alpha", a.alpha)?;
    if a.paths < 2 {
        return Err(CliError::usage("--paths", "need at least 2 paths"));
    }
    if !(a.truncation_eps > 0.0 && a.truncation_eps <= 1.0) {
        return Err(CliError::usage("--truncation-eps", "must lie in (0, 1]"));
    }
    if a.gamma_validate && !matches!(a.law, QLaw::ExpValidation { .. }) {
        return Err(CliError::usage("--gamma-validate", "needs --law exp:c=C"));
    }
    let config = SimConfig::new(alpha, a.law, a.paths, a.seed)
        .with_mgf_points(a.mgf_points.clone())
        .with_truncation_eps(a.truncation_eps);
    config.validate().map_err(|e| CliError::usage("--law", e))?;
    let samples = simulate(&config).map_err(|e| CliError::Other(e.into()))?;
    let summary = summarize(&config, &samples);
    let gamma = if a.gamma_validate {
        Some(gamma_case_validate_with(&config, DEFAULT_KS_THRESHOLD).map_err(|e| CliError::Other(e.into()))?)
    } else {
        None
    };
    let primary = match a.common.format {
        Format::Json => json(&SimJson {
            summary: &summary,
            gamma: gamma.as_ref(),
        })?,
        Format::Csv => {
            let mut t = Table::new(["quantity", "s", "value", "stderr"]);
            t.push(vec![Cell::S("mean".into()), Cell::Empty, Cell::F(summary.mean.value), Cell::F(summary.mean.stderr)]);
            t.push(vec![
                Cell::S("variance".into()),
                Cell::Empty,
                Cell::F(summary.variance.value),
                Cell::F(summary.variance.stderr),
            ]);
            for m in &summary.mgf {
                t.push(vec![Cell::S("mgf".into()), Cell::F(m.s), Cell::F(m.value), Cell::F(m.stderr)]);
            }
            t.push(vec![
                Cell::S("truncation_bias_bound".into()),
                Cell::Empty,
                Cell::F(summary.truncation_bias_bound),
                Cell::Empty,
            ]);
            if let Some(g) = &gamma {
                for (k, v) in [("ks_scaled", g.ks_scaled), ("mean_z", g.mean_z), ("variance_z", g.variance_z)] {
                    t.push(vec![Cell::S(k.into()), Cell::Empty, Cell::F(v), Cell::Empty]);
                }
            }
            t.to_csv()?
        }
    };
    let mut sink = Sink::default();
    if let Some(path) = &a.emit_samples {
        let mut t = Table::new(["path", "z"]);
        for (i, z) in samples.iter().enumerate() {
            t.push(vec![Cell::U(i as u64), Cell::F(*z)]);
        }
        sink.file(path, t.to_csv()?);
    }
    Ok(Outcome {
        sink,
        primary,
        diagnostics: gamma.as_ref().map(to_value).transpose()?,
        passed: gamma.is_none_or(|g| g.passed),
    })
}

fn validate(a: &ValidateArgs) -> Result<Outcome> {
    let conformance = Conformance::new(a.quick).map_err(|e| CliError::Other(e.into()))?;
    let mut outcomes = Vec::new();
    for id in 1..=perptail::conformance::CRITERIA {
        let o = conformance.criterion(id);
        eprintln!("{}", o.line());
        outcomes.push(o);
    }
    let report = perptail::Report {
        quick: a.quick,
        outcomes,
    };
    let primary = match a.common.format {
        Format::Json => json(&report)?,
        Format::Csv => {
            let mut t = Table::new(["id", "name", "passed", "seconds", "detail"]);
            for o in &report.outcomes {
                t.push(vec![
                    Cell::U(o.id as u64),
                    Cell::S(o.name.clone()),
                    Cell::B(o.passed),
                    Cell::F(o.seconds),
                    Cell::S(o.detail.clone()),
                ]);
            }
            t.to_csv()?
        }
    };
    Ok(Outcome {
        sink: Sink::default(),
        primary,
        diagnostics: None,
        passed: report.all_passed(),
    })
}
