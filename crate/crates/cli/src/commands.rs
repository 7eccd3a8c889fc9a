//! Subcommand bodies. Each writes its result files and returns an assertion error when the
//! computed diagnostics fail their checks.

use std::io::Write as _;

use clap::{Args, Subcommand, ValueEnum};
use fracheat_core::covariance::scaling_audit;
use fracheat_core::existence::{existence_verdict, g_norm, standard_grid, AnalyticVerdict, NumericVerdict};
use fracheat_core::regularity::{
    chung_stat, default_bases, dyadic_radii, holder_fit, local_modulus_stat, median, smooth_case_check,
    space_only_stat, time_only_stat, uniform_modulus_stat, Axis, GridView, ModulusStat,
};
use fracheat_core::sampler::{
    cholesky_sample_with, cross_validate, slice_sample, spectral_sample_with, write_fhf1, FieldSample, PointSet,
};
use fracheat_core::slnd::slnd_audit;
use fracheat_core::{LevyExponent, NoiseSpec};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{LogLogPlot, Series, Table, Writer};

/// Thresholds of the built-in checks.
pub const SCALING_TOL: f64 = 1e-12;
pub const SLOPE_TOL: f64 = 0.06;
pub const STABLE_CV: f64 = 0.15;
pub const CHUNG_GAP: f64 = 0.2;
pub const CONTROL_RANGE: f64 = 1.5;
pub const SMOOTH_GROWTH: f64 = 1.5;
pub const FIDELITY: f64 = 0.95;
pub const SPECTRAL_BIAS: f64 = 0.05;

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Existence criterion: analytic band against the numeric verdict, per parameter point.
    ExistenceCheck(ExistenceArgs),
    /// Variogram D at pure time, pure space and diagonal lags.
    VarianceTable(VarianceArgs),
    /// Residuals of the spectral scaling identity at random points.
    ScalingAudit(ScalingArgs),
    /// Gaussian realizations on a regular grid, written as an FHF1 container.
    SampleField(SampleArgs),
    /// Strong local nondeterminism ratios over random configurations.
    SlndAudit(SlndArgs),
    /// Log-log fits of the variogram along the time and space axes.
    EstimateExponents(ExponentArgs),
    /// Uniform, local, time-only and space-only moduli of continuity on sampled grids.
    ModulusStats(ModulusArgs),
    /// Chung-type small-oscillation statistic on sampled grids.
    ChungStat(ModulusArgs),
    /// Derivative modulus on fine spatial slices for fields with H2 > 1.
    SmoothCheck(SmoothArgs),
    /// Cholesky and spectral samplers against each other and the analytic covariance.
    CrossValidate(CrossArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ExistenceCheck(_) => "existence-check",
            Self::VarianceTable(_) => "variance-table",
            Self::ScalingAudit(_) => "scaling-audit",
            Self::SampleField(_) => "sample-field",
            Self::SlndAudit(_) => "slnd-audit",
            Self::EstimateExponents(_) => "estimate-exponents",
            Self::ModulusStats(_) => "modulus-stats",
            Self::ChungStat(_) => "chung-stat",
            Self::SmoothCheck(_) => "smooth-check",
            Self::CrossValidate(_) => "cross-validate",
        }
    }

    pub fn run(&self, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
        match self {
            Self::ExistenceCheck(a) => existence_check(a, cfg, out),
            Self::VarianceTable(a) => variance_table(a, cfg, out),
            Self::ScalingAudit(a) => scaling(a, cfg, out),
            Self::SampleField(a) => sample_field(a, cfg, out),
            Self::SlndAudit(a) => slnd(a, cfg, out),
            Self::EstimateExponents(a) => estimate_exponents(a, cfg, out),
            Self::ModulusStats(a) => modulus_stats(a, cfg, out),
            Self::ChungStat(a) => chung(a, cfg, out),
            Self::SmoothCheck(a) => smooth(a, cfg, out),
            Self::CrossValidate(a) => cross(a, cfg, out),
        }
    }
}

fn check(failures: Vec<String>) -> Result<(), CliError> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failures.join("; ")))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExistenceArgs {
    /// Sweep the built-in 200-point (d, α, H, β) grid instead of the configured point.
    #[arg(long)]
    pub grid: bool,
    /// Time at which the criterion is evaluated; defaults to `T`.
    #[arg(long)]
    pub t: Option<f64>,
    /// Evaluate the nested ‖g‖ quadrature on grid sweeps too (slow); a single point always gets it.
    #[arg(long)]
    pub g_norm: bool,
}

fn existence_check(a: &ExistenceArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    let t = a.t.unwrap_or(cfg.t);
    if !(t > 0.0) {
        return Err(CliError::Validation { key: "t".into(), message: "t must be positive".into() });
    }
    let budget = cfg.budget();
    let points: Vec<(NoiseSpec, LevyExponent, f64)> = if a.grid {
        standard_grid()
            .iter()
            .map(|p| Ok((p.noise()?, p.levy()?, p.alpha)))
            .collect::<Result<_, fracheat_core::Error>>()?
    } else {
        vec![(cfg.noise()?, cfg.levy_exponent()?, cfg.levy.alpha)]
    };
    let rows: Vec<_> = points
        .par_iter()
        .map(|(noise, levy, alpha)| {
            let verdict = existence_verdict(noise, levy, t, &budget)?;
            let norm = if a.grid && !a.g_norm {
                f64::NAN
            } else {
                let r = g_norm(noise, levy, t, &budget);
                match NumericVerdict::of(&r) {
                    NumericVerdict::Convergent => r.map(|r| r.value).unwrap_or(f64::NAN),
                    NumericVerdict::Divergent => f64::INFINITY,
                    NumericVerdict::Inconclusive => f64::NAN,
                }
            };
            Ok::<_, fracheat_core::Error>((noise.d, *alpha, noise.beta, noise.h, verdict, norm))
        })
        .collect::<Result<_, _>>()?;
    let mut table = Table::new(&["d", "alpha", "beta", "H", "t", "analytic", "numeric", "criterion_value", "g_norm"]);
    let mut failures = Vec::new();
    for (d, alpha, beta, h, v, norm) in rows {
        let agrees = match v.analytic {
            AnalyticVerdict::Exists => v.numeric == NumericVerdict::Convergent,
            AnalyticVerdict::NotExists => v.numeric == NumericVerdict::Divergent,
            _ => true,
        };
        if !agrees {
            failures.push(format!(
                "d={d} alpha={alpha} beta={beta} H={h}: analytic {} but numeric {}",
                v.analytic.as_str(),
                v.numeric.as_str()
            ));
        }
        table.push(vec![
            d.into(),
            alpha.into(),
            beta.into(),
            h.into(),
            v.t.into(),
            v.analytic.as_str().into(),
            v.numeric.as_str().into(),
            v.criterion_value.into(),
            norm.into(),
        ]);
    }
    out.table("existence", &table)?;
    check(failures)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VarianceArgs {
    /// Lags per family (time, space, diagonal).
    #[arg(long, default_value_t = 10)]
    pub lags: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub min_lag: f64,
    #[arg(long, default_value_t = 1.0)]
    pub max_lag: f64,
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn variance_table(a: &VarianceArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    if !(a.min_lag > 0.0 && a.max_lag >= a.min_lag) || a.lags == 0 {
        return Err(CliError::Usage("lags need 0 < min-lag <= max-lag and a positive count".into()));
    }
    let variogram = cfg.variogram()?;
    let ls = geometric(a.min_lag, a.max_lag, a.lags);
    let mut lags: Vec<(f64, f64)> = ls.iter().map(|l| (*l, 0.0)).collect();
    lags.extend(ls.iter().map(|l| (0.0, *l)));
    lags.extend(ls.iter().map(|l| (*l, *l)));
    let results: Vec<_> = lags.par_iter().map(|(dt, dx)| variogram.lag_variance(*dt, *dx)).collect();
    let mut table = Table::new(&["dt", "dx", "D", "error_estimate"]);
    let mut failures = Vec::new();
    for ((dt, dx), r) in lags.iter().zip(results) {
        let (value, error) = match r {
            Ok(r) if r.converged => (r.value, r.error_estimate),
            Ok(r) => {
                failures.push(format!("D({dt}, {dx}) did not converge"));
                (r.value, r.error_estimate)
            }
            Err(e) => {
                failures.push(format!("D({dt}, {dx}): {e}"));
                (f64::NAN, f64::NAN)
            }
        };
        table.push(vec![(*dt).into(), (*dx).into(), value.into(), error.into()]);
    }
    out.table("variance", &table)?;
    check(failures)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScalingArgs {
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

fn scaling(a: &ScalingArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    let density = cfg.density()?;
    let probes = scaling_audit(&density, a.samples, cfg.seed)?;
    let mut table = Table::new(&["tau", "xi_norm", "c", "residual"]);
    let mut worst = 0.0f64;
    for p in &probes {
        worst = worst.max(p.residual);
        let norm = p.xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        table.push(vec![p.tau.into(), norm.into(), p.c.into(), p.residual.into()]);
    }
    out.table("scaling", &table)?;
    let _ = writeln!(std::io::stdout(), "max scaling residual {worst:e} over {} points", probes.len());
    if worst > SCALING_TOL {
        return check(vec![format!("max residual {worst:e} exceeds {SCALING_TOL:e}")]);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Cholesky,
    Spectral,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 16)]
    pub nt: usize,
    #[arg(long, default_value_t = 16)]
    pub nx: usize,
    /// Time spacing; defaults to `T / nt`.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Space spacing; defaults to `domain / nx`.
    #[arg(long)]
    pub dx: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub paths: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Spectral)]
    pub method: MethodArg,
}

fn sample_field(a: &SampleArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    let dt = a.dt.unwrap_or(cfg.t / a.nt.max(1) as f64);
    let dx = a.dx.unwrap_or(cfg.domain / a.nx.max(1) as f64);
    let ps = PointSet::regular_grid(a.nt, dt, a.nx, dx, cfg.d)?;
    let variogram = cfg.variogram()?;
    let sample = match a.method {
        MethodArg::Cholesky => cholesky_sample_with(&ps, &variogram, a.paths, cfg.seed)?,
        MethodArg::Spectral => spectral_sample_with(&ps, &variogram, None, a.paths, cfg.seed)?,
    };
    let mut bytes = Vec::new();
    write_fhf1(&sample, &mut bytes)?;
    out.bytes("field.fhf1", &bytes)?;
    let sidecar = json!({
        "container": "field.fhf1",
        "n_paths": sample.n_paths,
        "n_points": sample.n_points,
        "seed": sample.seed,
        "method": sample.method,
        "method_tag": sample.method.tag(),
        "grid": { "nt": a.nt, "nx": a.nx, "d": cfg.d, "dt": dt, "dx": dx, "order": "time-major, spatial axes row-major" },
        "jitter": sample.jitter,
        "truncation": sample.truncation,
        "bias": sample.bias,
        "parameters": cfg,
    });
    out.report("field.json", &sidecar)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SlndArgs {
    #[arg(long, default_value_t = 200)]
    pub configs: usize,
}

fn slnd(a: &SlndArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    let variogram = cfg.variogram()?;
    let report = slnd_audit(&variogram, a.configs, cfg.seed)?;
    out.report("slnd.json", &report)?;
    let _ = writeln!(std::io::stdout(), "min ratio {:e}, max upper ratio {:e}", report.min_ratio, report.max_upper_ratio);
    let mut failures = Vec::new();
    if !(report.min_ratio > 0.0 && report.min_ratio.is_finite()) {
        failures.push(format!("min ratio {} is not positive", report.min_ratio));
    }
    if !report.failures.is_empty() {
        failures.push(format!("{} configurations failed", report.failures.len()));
    }
    check(failures)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExponentArgs {
    #[arg(long, default_value_t = 9)]
    pub lags: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub min_lag: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub max_lag: f64,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
}

fn estimate_exponents(a: &ExponentArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    if a.lags < 3 || !(a.min_lag > 0.0 && a.max_lag > a.min_lag) {
        return Err(CliError::Usage("need at least three lags with 0 < min-lag < max-lag".into()));
    }
    let variogram = cfg.variogram()?;
    let exps = cfg.exponents()?;
    let lags = geometric(a.min_lag, a.max_lag, a.lags);
    let mut fits = Table::new(&["axis", "slope", "std_error", "expected_slope", "deviation"]);
    let mut points = Table::new(&["axis", "level", "statistic", "spread"]);
    let mut series = Vec::new();
    let mut failures = Vec::new();
    for (axis, name, expected, checked) in [
        (Axis::Time, "time", 2.0 * exps.h1, true),
        (Axis::Space, "space", 2.0 * exps.h2.min(1.0), exps.h2 < 1.0),
    ] {
        let fit = holder_fit(&variogram, axis, &lags)?;
        let deviation = fit.slope - expected;
        if checked && deviation.abs() > SLOPE_TOL {
            failures.push(format!("{name} slope {} differs from {expected} by more than {SLOPE_TOL}", fit.slope));
        }
        fits.push(vec![name.into(), fit.slope.into(), (2.0 * fit.std_error).into(), expected.into(), deviation.into()]);
        let mx = fit.lags.iter().map(|l| l.ln()).sum::<f64>() / fit.lags.len() as f64;
        let my = fit.values.iter().map(|v| v.ln()).sum::<f64>() / fit.values.len() as f64;
        for (l, v) in fit.lags.iter().zip(&fit.values) {
            let fitted = (my + fit.slope * (l.ln() - mx)).exp();
            points.push(vec![name.into(), (*l).into(), (*v).into(), (v.ln() - fitted.ln()).abs().into()]);
        }
        series.push(Series {
            label: format!("D along {name}"),
            points: fit.lags.iter().copied().zip(fit.values.iter().copied()).collect(),
            slope: Some(fit.slope),
        });
    }
    out.table("exponents", &fits)?;
    out.table("exponents-lags", &points)?;
    if a.svg {
        out.svg(
            "exponents.svg",
            &LogLogPlot { title: "Variogram slopes".into(), x_label: "lag".into(), y_label: "D".into(), series },
        )?;
    }
    check(failures)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModulusArgs {
    /// Points per axis of the sampled grid.
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub paths: usize,
    /// Spatial extent of the grid; the time spacing matches it in `ρ̃`.
    #[arg(long, default_value_t = 1.0 / 1024.0)]
    pub extent: f64,
    /// Spacing, in cells, of the base-point lattice for local statistics.
    #[arg(long, default_value_t = 8)]
    pub stride: usize,
    #[arg(long)]
    pub svg: bool,
}

struct Sampled {
    sample: FieldSample,
    ps: PointSet,
    exps: fracheat_core::Exponents,
    radii: Vec<usize>,
}

fn sample_grid(a: &ModulusArgs, cfg: &RunConfig) -> Result<Sampled, CliError> {
    if cfg.d != 1 {
        return Err(CliError::Validation { key: "d".into(), message: "moduli are computed for d = 1".into() });
    }
    if a.n < 128 || !(a.extent > 0.0) {
        return Err(CliError::Usage("the grid needs n >= 128 and a positive extent".into()));
    }
    let exps = cfg.exponents()?;
    let dx = a.extent / a.n as f64;
    let dt = dx.powf(exps.h2 / exps.h1);
    let ps = PointSet::regular_grid(a.n, dt, a.n, dx, 1)?;
    let variogram = cfg.variogram()?;
    let sample = spectral_sample_with(&ps, &variogram, None, a.paths, cfg.seed)?;
    Ok(Sampled { sample, ps, exps, radii: dyadic_radii(a.n, 3, 7) })
}

fn spread(stat: &ModulusStat, level: usize) -> f64 {
    let mut col: Vec<f64> = stat.per_path.iter().map(|p| p[level]).collect();
    let m = median(&mut col);
    let q = |f: f64| col[((col.len() - 1) as f64 * f).round() as usize];
    (q(0.75) - q(0.25)) / m
}

fn push_stat(table: &mut Table, name: &str, stat: &ModulusStat) {
    for k in 0..stat.stat_values.len() {
        table.push(vec![
            name.into(),
            k.into(),
            stat.level_eps[k].into(),
            stat.stat_values[k].into(),
            spread(stat, k).into(),
        ]);
    }
}

#[derive(Serialize)]
struct StatSummary {
    statistic: String,
    values: Vec<f64>,
    cv_last_three: f64,
    last_two_gap: f64,
    range_ratio: f64,
    monotone: bool,
    positive_finite: bool,
}

fn summary(name: &str, s: &ModulusStat) -> StatSummary {
    StatSummary {
        statistic: name.into(),
        values: s.stat_values.clone(),
        cv_last_three: s.spread(3),
        last_two_gap: s.last_two_gap(),
        range_ratio: s.range_ratio(),
        monotone: s.is_monotone(),
        positive_finite: s.all_positive_finite(),
    }
}

fn level_plot(title: &str, stats: &[(&str, &ModulusStat)]) -> LogLogPlot {
    LogLogPlot {
        title: title.into(),
        x_label: "level radius epsilon".into(),
        y_label: "statistic".into(),
        series: stats
            .iter()
            .map(|(name, s)| Series {
                label: (*name).into(),
                points: s.level_eps.iter().copied().zip(s.stat_values.iter().copied()).collect(),
                slope: None,
            })
            .collect(),
    }
}

fn modulus_stats(a: &ModulusArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    let s = sample_grid(a, cfg)?;
    let grid = GridView::new(&s.sample, &s.ps)?;
    let bases = default_bases(&grid, &s.exps, s.radii[0], a.stride);
    let uniform = uniform_modulus_stat(&grid, &s.exps, &s.radii)?;
    let local = local_modulus_stat(&grid, &s.exps, &bases, &s.radii)?;
    let time = time_only_stat(&grid, &s.exps, &s.radii)?;
    let space = space_only_stat(&grid, &s.exps, &s.radii)?;
    let mut wrong = s.exps;
    wrong.h1 *= 0.5;
    let control = time_only_stat(&grid, &wrong, &s.radii)?;
    let named = [
        ("uniform", &uniform),
        ("local", &local),
        ("time_only", &time),
        ("space_only", &space),
        ("time_only_half_h1", &control),
    ];
    let mut table = Table::new(&["statistic", "level", "epsilon", "value", "spread"]);
    for (name, stat) in named {
        push_stat(&mut table, name, stat);
    }
    out.table("moduli", &table)?;
    let summaries: Vec<StatSummary> = named.iter().map(|(n, s)| summary(n, s)).collect();
    out.report("moduli-summary.json", &json!({ "statistics": summaries, "bias": s.sample.bias }))?;
    if a.svg {
        out.svg("moduli.svg", &level_plot("Moduli of continuity", &named))?;
    }
    let mut failures = Vec::new();
    for (name, stat) in &named[..4] {
        if !stat.all_positive_finite() {
            failures.push(format!("{name} has a nonpositive or infinite level"));
        }
        if stat.spread(3) >= STABLE_CV {
            failures.push(format!("{name} varies by {:.3} over the last three levels", stat.spread(3)));
        }
    }
    if !(control.is_monotone() && control.range_ratio() >= CONTROL_RANGE) {
        failures.push("negative control with H1/2 does not drift across levels".into());
    }
    check(failures)
}

fn chung(a: &ModulusArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    let s = sample_grid(a, cfg)?;
    let grid = GridView::new(&s.sample, &s.ps)?;
    let bases = default_bases(&grid, &s.exps, s.radii[0], a.stride);
    let stat = chung_stat(&grid, &s.exps, &bases, &s.radii)?;
    let mut table = Table::new(&["level", "epsilon", "statistic", "spread"]);
    for k in 0..stat.stat_values.len() {
        table.push(vec![k.into(), stat.level_eps[k].into(), stat.stat_values[k].into(), spread(&stat, k).into()]);
    }
    out.table("chung", &table)?;
    out.report(
        "chung-summary.json",
        &json!({ "summary": summary("chung", &stat), "liminf": stat.liminf, "base_points": bases.len(), "q": s.exps.q }),
    )?;
    if a.svg {
        out.svg("chung.svg", &level_plot("Chung statistic", &[("chung", &stat)]))?;
    }
    let mut failures = Vec::new();
    if !stat.all_positive_finite() {
        failures.push("chung statistic has a nonpositive or infinite level".into());
    }
    if stat.last_two_gap() > CHUNG_GAP {
        failures.push(format!("last two levels differ by {:.3}", stat.last_two_gap()));
    }
    check(failures)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SmoothArgs {
    /// Points on the spatial slice.
    #[arg(long, default_value_t = 2048)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub paths: usize,
    /// Number of dyadic levels, starting at n/8 cells.
    #[arg(long, default_value_t = 3)]
    pub levels: u32,
    #[arg(long)]
    pub svg: bool,
}

fn smooth(a: &SmoothArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    if cfg.d != 1 {
        return Err(CliError::Validation { key: "d".into(), message: "the smooth check runs in d = 1".into() });
    }
    if a.levels == 0 || a.n >> (2 + a.levels) == 0 {
        return Err(CliError::Usage("slice too short for the requested levels".into()));
    }
    let variogram = cfg.variogram()?;
    let dx = cfg.domain / a.n as f64;
    let xs: Vec<f64> = (0..a.n).map(|j| j as f64 * dx).collect();
    let sample = slice_sample(&xs, &variogram, a.paths, cfg.seed)?;
    let radii = dyadic_radii(a.n, 3, 2 + a.levels);
    let result = smooth_case_check(&sample, dx, &variogram, &radii)?;
    let stat = &result.stat;
    let mut table = Table::new(&["level", "epsilon", "statistic", "spread", "fd_bias"]);
    for k in 0..stat.stat_values.len() {
        table.push(vec![
            k.into(),
            stat.level_eps[k].into(),
            stat.stat_values[k].into(),
            spread(stat, k).into(),
            result.fd_bias[k].into(),
        ]);
    }
    out.table("smooth", &table)?;
    if a.svg {
        out.svg("smooth.svg", &level_plot("Derivative modulus", &[("derivative", stat)]))?;
    }
    let mut failures = Vec::new();
    if !stat.all_positive_finite() {
        failures.push("derivative modulus has a nonpositive or infinite level".into());
    }
    let first = stat.stat_values[0];
    let peak = stat.stat_values.iter().cloned().fold(0.0, f64::max);
    if peak > SMOOTH_GROWTH * first {
        failures.push(format!("derivative modulus grows by {:.3} across levels", peak / first));
    }
    check(failures)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CrossArgs {
    /// Points per axis of the grid.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 2_000)]
    pub spectral_paths: usize,
}

fn cross(a: &CrossArgs, cfg: &RunConfig, out: &mut Writer) -> Result<(), CliError> {
    let dt = cfg.t / a.n.max(1) as f64;
    let dx = cfg.domain / a.n.max(1) as f64;
    // Start one spacing away from the origin so every point carries variance.
    let times: Vec<f64> = (1..=a.n).map(|i| i as f64 * dt).collect();
    let axis: Vec<f64> = (1..=a.n).map(|j| j as f64 * dx).collect();
    let ps = PointSet::grid(times, vec![axis; cfg.d])?;
    let variogram = cfg.variogram()?;
    let report = cross_validate(&ps, &variogram, a.paths, a.spectral_paths, cfg.seed)?;
    out.report("crossval.json", &report)?;
    let mut failures = Vec::new();
    if report.cholesky_within_3se < FIDELITY {
        failures.push(format!("only {:.3} of entries within 3 standard errors", report.cholesky_within_3se));
    }
    if let Some(b) = &report.spectral_bias {
        if b.max_bias >= SPECTRAL_BIAS {
            failures.push(format!("spectral probe bias {:.4}", b.max_bias));
        }
    }
    check(failures)
}
