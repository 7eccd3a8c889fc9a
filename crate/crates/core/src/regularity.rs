//! Path regularity: Hölder fits of the variogram, empirical moduli of continuity on sampled
//! grids, and a derivative check for fields that are smooth in space.
//!
//! Levels are expressed in lag units of the grid. On an axis with `n` points the level `k`
//! covers lags of up to `n / 2^k` cells, and its radius in the metric `ρ̃` is the value of `ρ̃`
//! at that spatial lag.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::Variogram;
use crate::error::{Error, Result};
use crate::noise_model::Exponents;
use crate::sampler::{FieldSample, Layout, PointSet};

pub const MIN_PAIRS: usize = 100;
pub const MAX_FD_BIAS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// Half the log-log slope of `D` along the axis.
    pub exponent: f64,
    pub std_error: f64,
    pub slope: f64,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
}

/// Nine geometric lags from `1e-3` to `1e-1`.
pub fn default_holder_lags() -> Vec<f64> {
    (0..9).map(|k| 1e-3 * 10f64.powf(k as f64 / 4.0)).collect()
}

/// Least-squares slope of `ln D` against `ln lag` along one axis.
pub fn holder_fit(variogram: &Variogram, axis: Axis, lags: &[f64]) -> Result<HolderEstimate> {
    if lags.len() < 3 || lags.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Validation("a Hölder fit needs at least three positive lags".into()));
    }
    let values = lags
        .iter()
        .map(|&l| match axis {
            Axis::Time => variogram.lag_value(l, 0.0),
            Axis::Space => variogram.lag_value(0.0, l),
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("variogram vanishes at a fit lag".into()));
    }
    let xs: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(HolderEstimate {
        exponent: 0.5 * slope,
        std_error: 0.5 * se,
        slope,
        lags: lags.to_vec(),
        values,
    })
}

/// A sample on a regular `nt × nx` grid in `d = 1`, time-major.
#[derive(Debug, Clone, Copy)]
pub struct GridView<'a> {
    pub sample: &'a FieldSample,
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
    pub dx: f64,
}

fn regular_spacing(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let step = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
    let uniform = v.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step);
    uniform.then_some(step)
}

impl<'a> GridView<'a> {
    pub fn new(sample: &'a FieldSample, ps: &PointSet) -> Result<Self> {
        let (times, space) = match &ps.layout {
            Layout::Grid { times, space } => (times, space),
            Layout::Scattered => return Err(Error::PreconditionFailed("moduli need a grid sample".into())),
        };
        if space.first().map(|x| x.len()) != Some(1) {
            return Err(Error::PreconditionFailed("moduli are implemented for d = 1".into()));
        }
        let xs: Vec<f64> = space.iter().map(|x| x[0]).collect();
        let (dt, dx) = match (regular_spacing(times), regular_spacing(&xs)) {
            (Some(dt), Some(dx)) => (dt, dx),
            _ => return Err(Error::PreconditionFailed("grid must be regular with two or more points per axis".into())),
        };
        if sample.n_points != times.len() * xs.len() {
            return Err(Error::DimensionMismatch { expected: times.len() * xs.len(), got: sample.n_points });
        }
        Ok(Self { sample, nt: times.len(), nx: xs.len(), dt, dx })
    }

    fn row(&self, path: usize) -> &[f64] {
        self.sample.path(path)
    }

    fn at(&self, row: &[f64], i: usize, j: usize) -> f64 {
        row[i * self.nx + j]
    }
}

/// Radii `n / 2^k` for `k = coarsest..=finest`.
pub fn dyadic_radii(n: usize, coarsest: u32, finest: u32) -> Vec<usize> {
    (coarsest..=finest).map(|k| n >> k).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Uniform,
    Local,
    Chung,
    TimeOnly,
    SpaceOnly,
    SmoothDerivative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusStat {
    pub kind: StatKind,
    pub level_eps: Vec<f64>,
    pub radii: Vec<usize>,
    /// Median over paths (and base points, where used) at each level.
    pub stat_values: Vec<f64>,
    /// `per_path[path][level]`.
    pub per_path: Vec<Vec<f64>>,
    pub pairs: Vec<usize>,
    pub normalizer: String,
    /// Median over paths of the minimum across levels; Chung statistic only.
    pub liminf: Option<f64>,
}

impl ModulusStat {
    /// Coefficient of variation of the last `n` level values.
    pub fn spread(&self, n: usize) -> f64 {
        let tail = &self.stat_values[self.stat_values.len().saturating_sub(n)..];
        let m = tail.iter().sum::<f64>() / tail.len() as f64;
        let var = tail.iter().map(|v| (v - m).powi(2)).sum::<f64>() / tail.len() as f64;
        var.sqrt() / m
    }

    /// `|a - b| / max(a, b)` for the last two levels.
    pub fn last_two_gap(&self) -> f64 {
        let n = self.stat_values.len();
        if n < 2 {
            return 0.0;
        }
        let (a, b) = (self.stat_values[n - 2], self.stat_values[n - 1]);
        (a - b).abs() / a.max(b)
    }

    /// Ratio of the largest to the smallest level value.
    pub fn range_ratio(&self) -> f64 {
        let hi = self.stat_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.stat_values.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    /// Whether the level values move in one direction only.
    pub fn is_monotone(&self) -> bool {
        let w: Vec<f64> = self.stat_values.windows(2).map(|w| w[1] - w[0]).collect();
        w.iter().all(|d| *d >= 0.0) || w.iter().all(|d| *d <= 0.0)
    }

    pub fn all_positive_finite(&self) -> bool {
        self.stat_values.iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, Copy)]
struct Offset {
    dt: isize,
    dx: isize,
    rho: f64,
}

fn level_eps(grid: &GridView, exps: &Exponents, radii: &[usize]) -> Result<Vec<f64>> {
    if radii.is_empty() || radii.iter().any(|r| *r == 0) {
        return Err(Error::Validation("level radii must be positive".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Validation("levels must go from coarse to fine".into()));
    }
    Ok(radii.iter().map(|r| exps.rho_tilde(0.0, *r as f64 * grid.dx)).collect())
}

/// Offsets inside the coarsest `ρ̃`-ball; with `half` only one of each `±` pair is kept.
fn ball_offsets(grid: &GridView, exps: &Exponents, eps: f64, half: bool) -> Vec<Offset> {
    let tol = eps * (1.0 + 1e-12);
    let max_a = (eps.powf(1.0 / exps.h1) / grid.dt).floor() as isize + 1;
    let max_b = (eps.powf(1.0 / exps.h2) / grid.dx).floor() as isize + 1;
    let mut out = Vec::new();
    for a in -max_a..=max_a {
        for b in -max_b..=max_b {
            if (a, b) == (0, 0) || (half && (a < 0 || (a == 0 && b < 0))) {
                continue;
            }
            let rho = exps.rho_tilde(a as f64 * grid.dt, b as f64 * grid.dx);
            if rho <= tol {
                out.push(Offset { dt: a, dx: b, rho });
            }
        }
    }
    out
}

fn level_index(rho: f64, eps: &[f64]) -> Option<usize> {
    // deepest level whose ball still contains rho
    eps.iter().rposition(|e| rho <= e * (1.0 + 1e-12))
}

fn require_rough(exps: &Exponents) -> Result<()> {
    if exps.h2 >= 1.0 {
        return Err(Error::PreconditionFailed(format!("H2 = {} is not below 1", exps.h2)));
    }
    Ok(())
}

fn collect_levels(per_sample: &[Vec<f64>], n_levels: usize) -> Vec<f64> {
    (0..n_levels)
        .map(|k| {
            let mut col: Vec<f64> = per_sample.iter().map(|v| v[k]).collect();
            median(&mut col)
        })
        .collect()
}

fn check_pairs(pairs: &[usize]) -> Result<()> {
    if let Some((level, &count)) = pairs.iter().enumerate().find(|(_, c)| **c < MIN_PAIRS) {
        return Err(Error::InsufficientPairs { level, pairs: count });
    }
    Ok(())
}

/// `sup |U(p) - U(q)| / (ρ̃ √ln(1 + 1/ρ̃))` over grid pairs with `ρ̃(p, q) ≤ ε`.
pub fn uniform_modulus_stat(grid: &GridView, exps: &Exponents, radii: &[usize]) -> Result<ModulusStat> {
    require_rough(exps)?;
    let eps = level_eps(grid, exps, radii)?;
    let offsets = ball_offsets(grid, exps, eps[0], true);
    let valid = |o: &Offset| -> usize {
        let nt = grid.nt as isize - o.dt.abs();
        let nx = grid.nx as isize - o.dx.abs();
        (nt.max(0) * nx.max(0)) as usize
    };
    let mut pairs = vec![0usize; eps.len()];
    for o in &offsets {
        if let Some(k) = level_index(o.rho, &eps) {
            for p in pairs.iter_mut().take(k + 1) {
                *p += valid(o);
            }
        }
    }
    check_pairs(&pairs)?;
    let per_path: Vec<Vec<f64>> = (0..grid.sample.n_paths)
        .into_par_iter()
        .map(|path| {
            let row = grid.row(path);
            let mut level = vec![0.0f64; eps.len()];
            for o in &offsets {
                let Some(k) = level_index(o.rho, &eps) else { continue };
                let (j0, j1) = if o.dx >= 0 { (0, grid.nx - o.dx as usize) } else { ((-o.dx) as usize, grid.nx) };
                let mut worst = 0.0f64;
                for i in 0..grid.nt - o.dt as usize {
                    for j in j0..j1 {
                        let q = grid.at(row, i + o.dt as usize, (j as isize + o.dx) as usize);
                        worst = worst.max((q - grid.at(row, i, j)).abs());
                    }
                }
                let value = worst / (o.rho * (1.0 + 1.0 / o.rho).ln().sqrt());
                for v in level.iter_mut().take(k + 1) {
                    *v = v.max(value);
                }
            }
            level
        })
        .collect();
    Ok(ModulusStat {
        kind: StatKind::Uniform,
        stat_values: collect_levels(&per_path, eps.len()),
        level_eps: eps,
        radii: radii.to_vec(),
        per_path,
        pairs,
        normalizer: "rho * sqrt(ln(1 + 1/rho))".into(),
        liminf: None,
    })
}

/// Base points on a stride lattice whose coarsest ball of `radius` cells stays inside the grid.
pub fn default_bases(grid: &GridView, exps: &Exponents, radius: usize, stride: usize) -> Vec<(usize, usize)> {
    let eps = exps.rho_tilde(0.0, radius as f64 * grid.dx);
    let offsets = ball_offsets(grid, exps, eps, false);
    let mt = offsets.iter().map(|o| o.dt.unsigned_abs()).max().unwrap_or(0);
    let mx = offsets.iter().map(|o| o.dx.unsigned_abs()).max().unwrap_or(0);
    let stride = stride.max(1);
    let mut out = Vec::new();
    if grid.nt <= 2 * mt || grid.nx <= 2 * mx {
        return out;
    }
    for i in (mt..grid.nt - mt).step_by(stride) {
        for j in (mx..grid.nx - mx).step_by(stride) {
            out.push((i, j));
        }
    }
    out
}

/// Per base point and level, `sup` of `term(|ΔU|, ρ̃, ε)` over the ball around the base.
fn ball_stat<F>(
    grid: &GridView,
    exps: &Exponents,
    bases: &[(usize, usize)],
    radii: &[usize],
    term: F,
) -> Result<(Vec<f64>, Vec<Vec<Vec<f64>>>, Vec<usize>)>
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    let eps = level_eps(grid, exps, radii)?;
    if bases.is_empty() {
        return Err(Error::InsufficientPairs { level: 0, pairs: 0 });
    }
    let offsets = ball_offsets(grid, exps, eps[0], false);
    let inside = |base: &(usize, usize), o: &Offset| {
        let i = base.0 as isize + o.dt;
        let j = base.1 as isize + o.dx;
        i >= 0 && j >= 0 && (i as usize) < grid.nt && (j as usize) < grid.nx
    };
    let mut pairs = vec![0usize; eps.len()];
    for base in bases {
        let mut own = vec![0usize; eps.len()];
        let mut clipped = None;
        for o in &offsets {
            let Some(k) = level_index(o.rho, &eps) else { continue };
            if inside(base, o) {
                for p in own.iter_mut().take(k + 1) {
                    *p += 1;
                }
            } else if clipped.is_none() {
                clipped = Some(0);
            }
        }
        if clipped.is_some() {
            return Err(Error::InsufficientPairs { level: 0, pairs: own[0] });
        }
        for (p, c) in pairs.iter_mut().zip(own) {
            *p += c;
        }
    }
    check_pairs(&pairs)?;
    let classified: Vec<(Offset, usize)> =
        offsets.iter().filter_map(|o| level_index(o.rho, &eps).map(|k| (*o, k))).collect();
    let values: Vec<Vec<Vec<f64>>> = (0..grid.sample.n_paths)
        .into_par_iter()
        .map(|path| {
            let row = grid.row(path);
            bases
                .iter()
                .map(|&(bi, bj)| {
                    let centre = grid.at(row, bi, bj);
                    let mut level = vec![0.0f64; eps.len()];
                    for (o, k) in &classified {
                        let i = (bi as isize + o.dt) as usize;
                        let j = (bj as isize + o.dx) as usize;
                        let diff = (grid.at(row, i, j) - centre).abs();
                        for (l, v) in level.iter_mut().enumerate().take(k + 1) {
                            *v = v.max(term(diff, o.rho, eps[l]));
                        }
                    }
                    level
                })
                .collect()
        })
        .collect();
    Ok((eps, values, pairs))
}

fn summarize(
    kind: StatKind,
    eps: Vec<f64>,
    radii: &[usize],
    values: Vec<Vec<Vec<f64>>>,
    pairs: Vec<usize>,
    normalizer: &str,
) -> ModulusStat {
    let n = eps.len();
    let flat: Vec<Vec<f64>> = values.iter().flatten().cloned().collect();
    let per_path: Vec<Vec<f64>> = values.iter().map(|per_base| collect_levels(per_base, n)).collect();
    let liminf = (kind == StatKind::Chung).then(|| {
        let mut mins: Vec<f64> = flat.iter().map(|v| v.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
        median(&mut mins)
    });
    ModulusStat {
        kind,
        stat_values: collect_levels(&flat, n),
        level_eps: eps,
        radii: radii.to_vec(),
        per_path,
        pairs,
        normalizer: normalizer.into(),
        liminf,
    }
}

/// `sup |U(p) - U(b)| / (ρ̃ √ln ln(1 + 1/ρ̃))` over `ρ̃(p, b) ≤ ε` around each base point `b`.
///
/// By stationarity of increments every base point carries the same law, so the level summary is
/// the median over paths and base points together.
pub fn local_modulus_stat(
    grid: &GridView,
    exps: &Exponents,
    bases: &[(usize, usize)],
    radii: &[usize],
) -> Result<ModulusStat> {
    require_rough(exps)?;
    let coarse = exps.rho_tilde(0.0, radii.first().copied().unwrap_or(0) as f64 * grid.dx);
    if (1.0 + 1.0 / coarse).ln() <= 1.0 {
        return Err(Error::PreconditionFailed("ln ln(1 + 1/ρ̃) must be positive on every level".into()));
    }
    let (eps, values, pairs) = ball_stat(grid, exps, bases, radii, |diff, rho, _| {
        diff / (rho * (1.0 + 1.0 / rho).ln().ln().sqrt())
    })?;
    Ok(summarize(StatKind::Local, eps, radii, values, pairs, "rho * sqrt(ln ln(1 + 1/rho))"))
}

/// `sup_{ρ̃(p, b) ≤ ε} |U(p) - U(b)| / (ε (ln ln(1/ε))^{-1/Q})` per base point and level.
pub fn chung_stat(
    grid: &GridView,
    exps: &Exponents,
    bases: &[(usize, usize)],
    radii: &[usize],
) -> Result<ModulusStat> {
    require_rough(exps)?;
    let coarse = exps.rho_tilde(0.0, radii.first().copied().unwrap_or(0) as f64 * grid.dx);
    if (1.0 / coarse).ln() <= 1.0 {
        return Err(Error::PreconditionFailed("ln ln(1/ε) must be positive on every level".into()));
    }
    let q = exps.q;
    let (eps, values, pairs) = ball_stat(grid, exps, bases, radii, |diff, _, e| {
        diff / (e * (1.0 / e).ln().ln().powf(-1.0 / q))
    })?;
    Ok(summarize(StatKind::Chung, eps, radii, values, pairs, "eps * (ln ln(1/eps))^(-1/Q)"))
}

/// Uniform modulus along one line of the grid: lags of up to `r` cells on the chosen axis.
fn line_stat(
    values: impl Fn(&[f64], usize) -> f64 + Sync,
    len: usize,
    step: f64,
    exponent: f64,
    radii: &[usize],
    n_paths: usize,
    rows: &(dyn Fn(usize) -> Vec<f64> + Sync),
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<usize>)> {
    if radii.is_empty() || radii.iter().any(|r| *r == 0 || *r >= len) {
        return Err(Error::Validation("level radii must lie between one cell and the line length".into()));
    }
    let eps: Vec<f64> = radii.iter().map(|r| *r as f64 * step).collect();
    let pairs: Vec<usize> = radii.iter().map(|r| (1..=*r).map(|a| len - a).sum()).collect();
    check_pairs(&pairs)?;
    let coarse = radii[0];
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let line = rows(path);
            let mut by_lag = vec![0.0f64; coarse + 1];
            for (a, slot) in by_lag.iter_mut().enumerate().skip(1) {
                let mut worst = 0.0f64;
                for i in 0..len - a {
                    worst = worst.max((values(&line, i + a) - values(&line, i)).abs());
                }
                let lag = a as f64 * step;
                *slot = worst / (lag.powf(exponent) * (1.0 + 1.0 / lag).ln().sqrt());
            }
            radii.iter().map(|r| by_lag[1..=*r].iter().cloned().fold(0.0, f64::max)).collect()
        })
        .collect();
    Ok((eps, per_path, pairs))
}

/// Time increments at the middle spatial column, normalised by `|Δt|^{H1} √ln(1 + 1/|Δt|)`.
pub fn time_only_stat(grid: &GridView, exps: &Exponents, radii: &[usize]) -> Result<ModulusStat> {
    let col = grid.nx / 2;
    let rows = |path: usize| -> Vec<f64> {
        let row = grid.row(path);
        (0..grid.nt).map(|i| grid.at(row, i, col)).collect()
    };
    let (eps, per_path, pairs) =
        line_stat(|l: &[f64], i| l[i], grid.nt, grid.dt, exps.h1, radii, grid.sample.n_paths, &rows)?;
    Ok(ModulusStat {
        kind: StatKind::TimeOnly,
        stat_values: collect_levels(&per_path, eps.len()),
        level_eps: eps,
        radii: radii.to_vec(),
        per_path,
        pairs,
        normalizer: format!("|dt|^{} * sqrt(ln(1 + 1/|dt|))", exps.h1),
        liminf: None,
    })
}

/// Space increments at the middle time row, normalised by `|Δx|^{H2} √ln(1 + 1/|Δx|)`.
pub fn space_only_stat(grid: &GridView, exps: &Exponents, radii: &[usize]) -> Result<ModulusStat> {
    require_rough(exps)?;
    let line = grid.nt / 2;
    let rows = |path: usize| -> Vec<f64> {
        let row = grid.row(path);
        (0..grid.nx).map(|j| grid.at(row, line, j)).collect()
    };
    let (eps, per_path, pairs) =
        line_stat(|l: &[f64], i| l[i], grid.nx, grid.dx, exps.h2, radii, grid.sample.n_paths, &rows)?;
    Ok(ModulusStat {
        kind: StatKind::SpaceOnly,
        stat_values: collect_levels(&per_path, eps.len()),
        level_eps: eps,
        radii: radii.to_vec(),
        per_path,
        pairs,
        normalizer: format!("|dx|^{} * sqrt(ln(1 + 1/|dx|))", exps.h2),
        liminf: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothCheck {
    pub stat: ModulusStat,
    /// Relative shortfall of the central-difference derivative increments at each level.
    pub fd_bias: Vec<f64>,
}

/// Relative shortfall in standard deviation of `(δ_h U(x) - δ_h U(x + ε))` against the exact
/// derivative increment, where `δ_h` is the central difference with step `h`.
///
/// The variance of a central-difference increment is `[2γ(2h) + 2γ(ε) - γ(ε - 2h) - γ(ε + 2h)] / 4h^2`
/// with `γ = D(0, ·)`; the `h → 0` limit is taken by Richardson extrapolation with the leading
/// error order `h^{2 H2 - 2}`.
pub fn fd_bias(variogram: &Variogram, h: f64, eps: f64) -> Result<f64> {
    let h2 = variogram.density.exps.h2;
    let gamma = |r: f64| variogram.lag_value(0.0, r);
    let var = |step: f64| -> Result<f64> {
        let s = 2.0 * step;
        Ok((2.0 * gamma(s)? + 2.0 * gamma(eps)? - gamma(eps - s)? - gamma(eps + s)?) / (4.0 * step * step))
    };
    let coarse = var(h)?;
    let fine = var(0.5 * h)?;
    let gain = 2f64.powf(2.0 * h2 - 2.0);
    let limit = (gain * fine - coarse) / (gain - 1.0);
    if !(limit > 0.0) {
        return Err(Error::Domain("derivative increment variance is not positive".into()));
    }
    Ok((1.0 - (coarse / limit).sqrt()).abs())
}

/// Derivative modulus `sup_{|x - y| ≤ ε} |∂U(x) - ∂U(y)| / (ε^{H2 - 1} √ln(1/ε))` on spatial slices
/// with spacing `dx`, for fields with `H2 > 1`.
pub fn smooth_case_check(
    sample: &FieldSample,
    dx: f64,
    variogram: &Variogram,
    radii: &[usize],
) -> Result<SmoothCheck> {
    let exps = variogram.density.exps;
    if exps.h2 <= 1.0 {
        return Err(Error::PreconditionFailed(format!("H2 = {} is not above 1", exps.h2)));
    }
    let n = sample.n_points;
    if n < 3 {
        return Err(Error::InsufficientPairs { level: 0, pairs: 0 });
    }
    let m = n - 2;
    if radii.is_empty() || radii.iter().any(|r| *r == 0 || *r >= m) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Validation("level radii must decrease and fit inside the slice".into()));
    }
    let eps: Vec<f64> = radii.iter().map(|r| *r as f64 * dx).collect();
    if eps[0] >= 1.0 {
        return Err(Error::PreconditionFailed("ln(1/ε) must be positive on every level".into()));
    }
    let pairs: Vec<usize> = radii.iter().map(|r| (1..=*r).map(|a| m - a).sum()).collect();
    check_pairs(&pairs)?;
    let bias = eps.iter().map(|e| fd_bias(variogram, dx, *e)).collect::<Result<Vec<f64>>>()?;
    if let Some(worst) = bias.iter().cloned().find(|b| *b > MAX_FD_BIAS) {
        return Err(Error::GridTooCoarse { estimate: worst });
    }
    let coarse = radii[0];
    let per_path: Vec<Vec<f64>> = (0..sample.n_paths)
        .into_par_iter()
        .map(|path| {
            let row = sample.path(path);
            let deriv: Vec<f64> = (1..n - 1).map(|j| (row[j + 1] - row[j - 1]) / (2.0 * dx)).collect();
            let mut by_lag = vec![0.0f64; coarse + 1];
            for (a, slot) in by_lag.iter_mut().enumerate().skip(1) {
                for j in 0..m - a {
                    *slot = slot.max((deriv[j + a] - deriv[j]).abs());
                }
            }
            radii
                .iter()
                .zip(&eps)
                .map(|(r, e)| {
                    let worst = by_lag[1..=*r].iter().cloned().fold(0.0, f64::max);
                    worst / (e.powf(exps.h2 - 1.0) * (1.0 / e).ln().sqrt())
                })
                .collect()
        })
        .collect();
    Ok(SmoothCheck {
        stat: ModulusStat {
            kind: StatKind::SmoothDerivative,
            stat_values: collect_levels(&per_path, eps.len()),
            level_eps: eps,
            radii: radii.to_vec(),
            per_path,
            pairs,
            normalizer: format!("eps^{} * sqrt(ln(1/eps))", exps.h2 - 1.0),
            liminf: None,
        },
        fd_bias: bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SampleMethod;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exps() -> Exponents {
        Exponents::from_parts(0.75, 0.6, 1, 1.0).unwrap()
    }

    fn synthetic(nt: usize, nx: usize, paths: usize, fill: impl Fn(usize, usize, usize) -> f64) -> (FieldSample, PointSet) {
        let ps = PointSet::regular_grid(nt, 1e-3, nx, 1e-3, 1).unwrap();
        let mut values = Vec::with_capacity(paths * nt * nx);
        for p in 0..paths {
            for i in 0..nt {
                for j in 0..nx {
                    values.push(fill(p, i, j));
                }
            }
        }
        let sample = FieldSample {
            n_paths: paths,
            n_points: nt * nx,
            values,
            seed: 0,
            method: SampleMethod::Cholesky,
            jitter: 0.0,
            truncation: None,
            bias: None,
        };
        (sample, ps)
    }

    fn noisy(nt: usize, nx: usize, paths: usize) -> (FieldSample, PointSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let table: Vec<f64> = (0..paths * nt * nx).map(|_| rng.random::<f64>() - 0.5).collect();
        synthetic(nt, nx, paths, move |p, i, j| table[(p * nt + i) * nx + j])
    }

    #[test]
    fn zero_field_has_zero_moduli() {
        let (s, ps) = synthetic(64, 64, 2, |_, _, _| 0.0);
        let g = GridView::new(&s, &ps).unwrap();
        let radii = dyadic_radii(64, 3, 5);
        let u = uniform_modulus_stat(&g, &exps(), &radii).unwrap();
        assert!(u.stat_values.iter().all(|v| *v == 0.0));
        let bases = default_bases(&g, &exps(), radii[0], 8);
        let c = chung_stat(&g, &exps(), &bases, &radii).unwrap();
        assert!(c.stat_values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn statistics_are_sign_and_scale_equivariant() {
        let (s, ps) = noisy(64, 64, 3);
        let mut flipped = s.clone();
        flipped.values.iter_mut().for_each(|v| *v *= -2.5);
        let radii = dyadic_radii(64, 2, 4);
        let a = GridView::new(&s, &ps).unwrap();
        let b = GridView::new(&flipped, &ps).unwrap();
        let ua = uniform_modulus_stat(&a, &exps(), &radii).unwrap();
        let ub = uniform_modulus_stat(&b, &exps(), &radii).unwrap();
        for (x, y) in ua.stat_values.iter().zip(&ub.stat_values) {
            assert!((2.5 * x - y).abs() <= 1e-12 * y);
        }
        let ta = time_only_stat(&a, &exps(), &radii).unwrap();
        let tb = time_only_stat(&b, &exps(), &radii).unwrap();
        for (x, y) in ta.stat_values.iter().zip(&tb.stat_values) {
            assert!((2.5 * x - y).abs() <= 1e-12 * y);
        }
    }

    #[test]
    fn uniform_levels_are_nested() {
        let (s, ps) = noisy(32, 32, 2);
        let g = GridView::new(&s, &ps).unwrap();
        let u = uniform_modulus_stat(&g, &exps(), &dyadic_radii(32, 2, 5)).unwrap();
        for path in &u.per_path {
            assert!(path.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn edge_base_point_has_insufficient_pairs() {
        let (s, ps) = noisy(32, 32, 1);
        let g = GridView::new(&s, &ps).unwrap();
        let err = local_modulus_stat(&g, &exps(), &[(0, 0)], &dyadic_radii(32, 2, 4)).unwrap_err();
        assert!(matches!(err, Error::InsufficientPairs { .. }));
        let err = local_modulus_stat(&g, &exps(), &[(16, 16)], &dyadic_radii(32, 2, 4)).unwrap_err();
        assert!(matches!(err, Error::InsufficientPairs { .. }));
    }

    #[test]
    fn smooth_exponents_are_rejected_by_rough_statistics() {
        let (s, ps) = noisy(16, 16, 1);
        let g = GridView::new(&s, &ps).unwrap();
        let smooth = Exponents::from_parts(0.75, 0.6, 1, 2.0).unwrap();
        assert!(smooth.h2 > 1.0);
        let err = uniform_modulus_stat(&g, &smooth, &[8, 4]).unwrap_err();
        assert!(matches!(err, Error::PreconditionFailed(_)));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
