//! Gaussian realizations of the field on finite point sets: exact Cholesky sampling for small
//! sets and spectral synthesis on space-time grids.

use std::f64::consts::{LN_2, PI};
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{SpaceTime, SpectralDensity, Variogram};
use crate::error::{Error, Result};
use crate::quadrature::{decade_sweep, sphere_area, QuadratureBudget};

pub const MAX_CHOLESKY_POINTS: usize = 4096;
const JITTER_START: f64 = 1e-10;
const JITTER_LIMIT: f64 = 1e-6;
pub const MAX_TRUNCATION_BIAS: f64 = 0.05;
const INFRARED_BIAS: f64 = 0.01;

/// Random stream for one path: every path has its own ChaCha stream under the master seed, so
/// the output does not depend on how paths are scheduled.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Time-major product grid: point `i * n_space + j` is `(times[i], space[j])`.
    Grid { times: Vec<f64>, space: Vec<Vec<f64>> },
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<SpaceTime>,
    pub layout: Layout,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite())
}

impl PointSet {
    /// Product grid of `times` and the product of the per-axis coordinates in `axes`.
    pub fn grid(times: Vec<f64>, axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Validation("a grid needs at least one spatial axis".into()));
        }
        if !strictly_increasing(&times) || axes.iter().any(|a| !strictly_increasing(a)) {
            return Err(Error::Validation("grid axes must be strictly increasing".into()));
        }
        if times.iter().any(|t| *t < 0.0) {
            return Err(Error::Validation("times must be nonnegative".into()));
        }
        let mut space: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            space = space
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        let points = times
            .iter()
            .flat_map(|t| space.iter().map(move |x| SpaceTime::new(*t, x.clone())))
            .collect();
        Ok(Self { points, layout: Layout::Grid { times, space } })
    }

    /// `nt × nx^d` grid with spacings `dt`, `dx`, starting at the origin.
    pub fn regular_grid(nt: usize, dt: f64, nx: usize, dx: f64, d: usize) -> Result<Self> {
        if nt == 0 || nx == 0 || !(dt > 0.0) || !(dx > 0.0) {
            return Err(Error::Validation("grid sizes and spacings must be positive".into()));
        }
        let times = (0..nt).map(|i| i as f64 * dt).collect();
        let axis: Vec<f64> = (0..nx).map(|j| j as f64 * dx).collect();
        Self::grid(times, vec![axis; d])
    }

    pub fn scattered(points: Vec<SpaceTime>) -> Result<Self> {
        if let Some(first) = points.first() {
            let d = first.x.len();
            if points.iter().any(|p| p.x.len() != d) {
                return Err(Error::Validation("points have mixed dimensions".into()));
            }
            if points.iter().any(|p| p.t < 0.0 || !p.t.is_finite() || p.x.iter().any(|v| !v.is_finite())) {
                return Err(Error::Validation("points must be finite with t >= 0".into()));
            }
            for (i, p) in points.iter().enumerate() {
                if points[..i].iter().any(|q| q == p) {
                    return Err(Error::Validation(format!("point {i} is repeated")));
                }
            }
        }
        Ok(Self { points, layout: Layout::Scattered })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.points.first().map(|p| p.x.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    Cholesky,
    Spectral,
}

impl SampleMethod {
    pub fn tag(&self) -> u8 {
        match self {
            Self::Cholesky => 0,
            Self::Spectral => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Self::Cholesky),
            1 => Ok(Self::Spectral),
            _ => Err(Error::Validation(format!("unknown method tag {tag}"))),
        }
    }
}

/// Log-spaced frequency nodes: `nodes_per_shell` nodes in each factor-two shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralTruncation {
    pub tau_range: (f64, f64),
    pub xi_range: (f64, f64),
    pub nodes_per_shell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeLag {
    pub dt: f64,
    pub dx: f64,
    pub analytic: f64,
    pub implied: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub probes: Vec<ProbeLag>,
    pub max_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub n_paths: usize,
    pub n_points: usize,
    /// Row-major `n_paths × n_points`.
    pub values: Vec<f64>,
    pub seed: u64,
    pub method: SampleMethod,
    pub jitter: f64,
    pub truncation: Option<SpectralTruncation>,
    pub bias: Option<BiasReport>,
}

impl FieldSample {
    pub fn path(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_points..(k + 1) * self.n_points]
    }

    pub fn value(&self, path: usize, point: usize) -> f64 {
        self.values[path * self.n_points + point]
    }

    /// `E[U_i U_j]` estimated without centering (the field has mean zero).
    pub fn second_moments(&self) -> DMatrix<f64> {
        let n = self.n_points;
        let mut m = DMatrix::zeros(n, n);
        if self.n_paths == 0 {
            return m;
        }
        let data = DMatrix::from_row_slice(self.n_paths, n, &self.values);
        m = data.tr_mul(&data) / self.n_paths as f64;
        m
    }

    /// Standard errors of [`FieldSample::second_moments`].
    pub fn second_moment_errors(&self) -> DMatrix<f64> {
        let n = self.n_points;
        let p = self.n_paths as f64;
        let mut sum = DMatrix::<f64>::zeros(n, n);
        let mut sum_sq = DMatrix::<f64>::zeros(n, n);
        for k in 0..self.n_paths {
            let row = self.path(k);
            for i in 0..n {
                for j in 0..=i {
                    let v = row[i] * row[j];
                    sum[(i, j)] += v;
                    sum_sq[(i, j)] += v * v;
                }
            }
        }
        let mut se = DMatrix::zeros(n, n);
        if self.n_paths < 2 {
            return se;
        }
        for i in 0..n {
            for j in 0..=i {
                let mean = sum[(i, j)] / p;
                let var = (sum_sq[(i, j)] / p - mean * mean).max(0.0) * p / (p - 1.0);
                se[(i, j)] = (var / p).sqrt();
                se[(j, i)] = se[(i, j)];
            }
        }
        se
    }
}

/// Covariance matrix with the points at the origin (variance zero) removed; returns the kept
/// indices as well.
fn reduced_gram(ps: &PointSet, variogram: &Variogram) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let kept: Vec<usize> = (0..ps.len()).filter(|&i| !ps.points[i].is_origin()).collect();
    let pts: Vec<SpaceTime> = kept.iter().map(|&i| ps.points[i].clone()).collect();
    Ok((kept, variogram.gram(&pts)?))
}

/// Lower Cholesky factor, adding `ε · trace / n` to the diagonal with `ε` growing from `1e-10`
/// by factors of ten when the plain factorization fails. Returns the factor and the jitter used.
pub fn factor_with_jitter(gram: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = gram.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    if let Some(c) = gram.clone().cholesky() {
        return Ok((c.l(), 0.0));
    }
    let scale = gram.trace() / n as f64;
    let mut eps = JITTER_START;
    while eps <= JITTER_LIMIT * (1.0 + 1e-9) {
        let jitter = eps * scale;
        let mut g = gram.clone();
        for i in 0..n {
            g[(i, i)] += jitter;
        }
        if let Some(c) = g.cholesky() {
            return Ok((c.l(), jitter));
        }
        eps *= 10.0;
    }
    Err(Error::GramNotPsd { jitter: JITTER_LIMIT * scale })
}

fn standard_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

pub fn cholesky_sample(
    ps: &PointSet,
    density: &SpectralDensity,
    n_paths: usize,
    seed: u64,
    budget: &QuadratureBudget,
) -> Result<FieldSample> {
    let variogram = Variogram::new(density.clone(), *budget);
    cholesky_sample_with(ps, &variogram, n_paths, seed)
}

/// Same as [`cholesky_sample`] but reusing the variogram cache of the caller.
pub fn cholesky_sample_with(
    ps: &PointSet,
    variogram: &Variogram,
    n_paths: usize,
    seed: u64,
) -> Result<FieldSample> {
    if ps.len() > MAX_CHOLESKY_POINTS {
        return Err(Error::Validation(format!(
            "Cholesky sampling is limited to {MAX_CHOLESKY_POINTS} points"
        )));
    }
    let n_points = ps.len();
    let (kept, gram) = reduced_gram(ps, variogram)?;
    let (factor, jitter) = factor_with_jitter(&gram)?;
    let m = kept.len();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut z = vec![0.0; m];
            standard_normals(&mut path_rng(seed, k), &mut z);
            let reduced = &factor * DVector::from_vec(z);
            let mut row = vec![0.0; n_points];
            for (slot, &i) in kept.iter().enumerate() {
                row[i] = reduced[slot];
            }
            row
        })
        .collect();
    Ok(FieldSample {
        n_paths,
        n_points,
        values: rows.concat(),
        seed,
        method: SampleMethod::Cholesky,
        jitter,
        truncation: None,
        bias: None,
    })
}

fn log_nodes(lo: f64, hi: f64, per_shell: usize) -> Vec<(f64, f64)> {
    let shells = (hi / lo).log2().ceil().max(1.0) as usize;
    let n = shells * per_shell;
    let step = LN_2 / per_shell as f64;
    (0..n)
        .map(|k| {
            let node = lo * ((k as f64 + 0.5) * step).exp();
            (node, node * step)
        })
        .collect()
}

/// Frequencies `(τ, ξ)` over the half-space `τ > 0` with their weights `w`.
struct FrequencyMesh {
    taus: Vec<f64>,
    xis: Vec<Vec<f64>>,
    /// `w[a][b]`, row-major over `(τ_a, ξ_b)`.
    weights: Vec<f64>,
}

impl FrequencyMesh {
    fn build(density: &SpectralDensity, trunc: &SpectralTruncation) -> Result<Self> {
        let d = density.d();
        let tau_nodes = log_nodes(trunc.tau_range.0, trunc.tau_range.1, trunc.nodes_per_shell);
        let xi_axis: Vec<(f64, f64)> = log_nodes(trunc.xi_range.0, trunc.xi_range.1, trunc.nodes_per_shell)
            .into_iter()
            .flat_map(|(v, c)| [(-v, c), (v, c)])
            .collect();
        let mut xis: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
        for _ in 0..d {
            xis = xis
                .into_iter()
                .flat_map(|(prefix, cell)| {
                    xi_axis.iter().map(move |(v, c)| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        (p, cell * c)
                    })
                })
                .collect();
        }
        let prefactor = 2.0 * density.noise.c_h;
        let cutoff = density.xi_cutoff;
        let xi_info: Vec<(f64, f64, f64)> = xis
            .iter()
            .map(|(xi, cell)| {
                let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                let psi = density.levy.psi(xi).unwrap_or(f64::NAN);
                (r, psi, *cell)
            })
            .collect();
        let mut weights = Vec::with_capacity(tau_nodes.len() * (xis.len() + 1));
        let budget = QuadratureBudget::default();
        let area = sphere_area(d);
        for (tau, tcell) in &tau_nodes {
            for (r, psi, xcell) in &xi_info {
                let w2 = if *r < cutoff {
                    0.0
                } else {
                    prefactor * density.f_u_radial(*tau, *r, *psi) * tcell * xcell
                };
                if !w2.is_finite() {
                    return Err(Error::Domain("spectral weight is not finite".into()));
                }
                weights.push(w2.sqrt());
            }
            if cutoff > 0.0 {
                // Everything inside the cutoff ball, lumped into one phase-free mode.
                let g = |r: f64| {
                    let psi = density.levy.psi_radial(r).unwrap_or(f64::NAN);
                    area * r.powi(d as i32 - 1) * density.f_u_radial(*tau, r, psi)
                };
                let ball = decade_sweep(&g, cutoff, false, None, &budget, 0.0).result.value;
                let w2 = prefactor * ball * tcell;
                if !w2.is_finite() {
                    return Err(Error::Domain("spectral weight is not finite".into()));
                }
                weights.push(w2.sqrt());
            }
        }
        let mut xis: Vec<Vec<f64>> = xis.into_iter().map(|(x, _)| x).collect();
        if cutoff > 0.0 {
            xis.push(vec![0.0; d]);
        }
        Ok(Self {
            taus: tau_nodes.into_iter().map(|(t, _)| t).collect(),
            xis,
            weights,
        })
    }

    /// `Σ w^2 |e^{i⟨lag, ω⟩} - 1|^2`.
    fn implied_variogram(&self, dt: f64, dx: &[f64]) -> f64 {
        let nx = self.xis.len();
        let mut sum = 0.0;
        for (a, tau) in self.taus.iter().enumerate() {
            for (b, xi) in self.xis.iter().enumerate() {
                let w = self.weights[a * nx + b];
                if w == 0.0 {
                    continue;
                }
                let phase = tau * dt + xi.iter().zip(dx).map(|(u, v)| u * v).sum::<f64>();
                sum += w * w * 4.0 * (0.5 * phase).sin().powi(2);
            }
        }
        sum
    }
}

fn grid_parts(ps: &PointSet) -> Result<(&[f64], &[Vec<f64>])> {
    match &ps.layout {
        Layout::Grid { times, space } => Ok((times, space)),
        Layout::Scattered => Err(Error::Validation("spectral sampling needs a grid layout".into())),
    }
}

fn extent_and_spacing(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let extent = values[values.len() - 1] - values[0];
    let spacing = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    Some((extent, spacing))
}

/// Probe lags: four pure time lags, four pure space lags and two mixed ones, between one grid
/// spacing and the grid extent.
fn probe_lags(times: &[f64], space: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let axis0: Vec<f64> = {
        let mut v: Vec<f64> = space.iter().map(|x| x[0]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    };
    let geometric = |r: Option<(f64, f64)>, n: usize| -> Vec<f64> {
        match r {
            None => Vec::new(),
            Some((extent, spacing)) => (0..n)
                .map(|k| spacing * (extent / spacing).powf(k as f64 / (n - 1) as f64))
                .collect(),
        }
    };
    let t_lags = geometric(extent_and_spacing(times), 4);
    let x_lags = geometric(extent_and_spacing(&axis0), 4);
    let mut lags: Vec<(f64, f64)> = t_lags.iter().map(|t| (*t, 0.0)).collect();
    lags.extend(x_lags.iter().map(|x| (0.0, *x)));
    if let (Some(t0), Some(x0)) = (t_lags.first(), x_lags.first()) {
        lags.push((*t0, *x0));
        lags.push((0.5 * t_lags[3], 0.5 * x_lags[3]));
    }
    lags
}

impl SpectralTruncation {
    /// Default layout for a grid: `ω_min = 2π/(64 · extent)`, `ω_max = 2π · 64 / spacing` on
    /// each axis; the τ-range is widened to cover `Ψ` over the spatial range, and the lower ends
    /// are lowered until the variogram bias at the largest probe lag is below 1%.
    pub fn for_grid(ps: &PointSet, density: &SpectralDensity, variogram: &Variogram) -> Result<Self> {
        let (times, space) = grid_parts(ps)?;
        let d = density.d();
        let per_shell = match d {
            1 => 32,
            2 => 8,
            _ => 4,
        };
        let axis0: Vec<f64> = {
            let mut v: Vec<f64> = space.iter().map(|x| x[0]).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
            v
        };
        let (t_ext, t_sp) = extent_and_spacing(times).unwrap_or((0.0, 0.0));
        let (x_ext, x_sp) = extent_and_spacing(&axis0).unwrap_or((0.0, 0.0));
        let scale = t_ext.max(x_ext).max(1e-300);
        let (x_ext, x_sp) = if x_ext > 0.0 { (x_ext, x_sp) } else { (scale, scale) };
        let (t_ext, t_sp) = if t_ext > 0.0 { (t_ext, t_sp) } else { (scale, scale) };
        let mut xi_lo = 2.0 * PI / (64.0 * x_ext);
        if density.xi_cutoff > 0.0 {
            xi_lo = density.xi_cutoff;
        }
        let xi_hi = 2.0 * PI * 64.0 / x_sp;
        let psi = |r: f64| density.levy.psi_radial(r).unwrap_or(f64::NAN);
        let mut tau_lo = (2.0 * PI / (64.0 * t_ext)).min(psi(xi_lo) / 64.0);
        let tau_hi = (2.0 * PI * 64.0 / t_sp).max(64.0 * psi(2.0 * PI / x_sp));
        let lags = probe_lags(times, space);
        let mut trunc = Self { tau_range: (tau_lo, tau_hi), xi_range: (xi_lo, xi_hi), nodes_per_shell: per_shell };
        let far_lags: Vec<(f64, f64)> = {
            let t_max = lags.iter().map(|l| l.0).fold(0.0, f64::max);
            let x_max = lags.iter().map(|l| l.1).fold(0.0, f64::max);
            [(t_max, 0.0), (0.0, x_max)].into_iter().filter(|l| l.0 + l.1 > 0.0).collect()
        };
        for _ in 0..16 {
            let mesh = FrequencyMesh::build(density, &trunc)?;
            let mut worst = 0.0f64;
            for (dt, dx) in &far_lags {
                let mut lag = vec![0.0; d];
                lag[0] = *dx;
                let analytic = variogram.lag_value(*dt, *dx)?;
                let implied = mesh.implied_variogram(*dt, &lag);
                worst = worst.max((analytic - implied) / analytic);
            }
            if worst < INFRARED_BIAS {
                break;
            }
            tau_lo *= 0.5;
            if density.xi_cutoff == 0.0 {
                xi_lo *= 0.5;
            }
            trunc = Self { tau_range: (tau_lo, tau_hi), xi_range: (xi_lo, xi_hi), nodes_per_shell: per_shell };
        }
        Ok(trunc)
    }
}

/// Compares the variogram implied by the frequency mesh with `D` at the probe lags.
fn bias_report(mesh: &FrequencyMesh, lags: &[(f64, f64)], variogram: &Variogram, d: usize) -> Result<BiasReport> {
    let mut probes = Vec::with_capacity(lags.len());
    let mut max_bias = 0.0f64;
    for (dt, dx) in lags {
        let mut lag = vec![0.0; d];
        lag[0] = *dx;
        let analytic = variogram.lag_value(*dt, *dx)?;
        let implied = mesh.implied_variogram(*dt, &lag);
        let bias = (implied - analytic).abs() / analytic;
        max_bias = max_bias.max(bias);
        probes.push(ProbeLag { dt: *dt, dx: *dx, analytic, implied, bias });
    }
    Ok(BiasReport { probes, max_bias })
}

pub fn spectral_sample(
    ps: &PointSet,
    density: &SpectralDensity,
    truncation: Option<SpectralTruncation>,
    n_paths: usize,
    seed: u64,
    budget: &QuadratureBudget,
) -> Result<FieldSample> {
    let variogram = Variogram::new(density.clone(), *budget);
    spectral_sample_with(ps, &variogram, truncation, n_paths, seed)
}

/// `U(p) = Σ w [(cos⟨p,ω⟩ - 1) A + sin⟨p,ω⟩ B]` with `w^2 = 2 c_H f_U(ω) · cell` over a
/// log-spaced frequency mesh on the half-space `τ > 0`.
pub fn spectral_sample_with(
    ps: &PointSet,
    variogram: &Variogram,
    truncation: Option<SpectralTruncation>,
    n_paths: usize,
    seed: u64,
) -> Result<FieldSample> {
    let density = &variogram.density;
    let (times, space) = grid_parts(ps)?;
    if space.first().map(|x| x.len()) != Some(density.d()) {
        return Err(Error::DimensionMismatch { expected: density.d(), got: space.first().map_or(0, |x| x.len()) });
    }
    let trunc = match truncation {
        Some(t) => t,
        None => SpectralTruncation::for_grid(ps, density, variogram)?,
    };
    if !(trunc.tau_range.0 > 0.0 && trunc.tau_range.1 > trunc.tau_range.0)
        || !(trunc.xi_range.0 > 0.0 && trunc.xi_range.1 > trunc.xi_range.0)
        || trunc.nodes_per_shell == 0
    {
        return Err(Error::PreconditionFailed("frequency shells must span a positive range".into()));
    }
    let mesh = FrequencyMesh::build(density, &trunc)?;
    let lags = probe_lags(times, space);
    let report = bias_report(&mesh, &lags, variogram, density.d())?;
    if let Some(worst) = report.probes.iter().find(|p| p.bias > MAX_TRUNCATION_BIAS) {
        return Err(Error::TruncationBiasExceeded { lag: worst.dt.max(worst.dx), bias: worst.bias });
    }

    let (nt, ns) = (times.len(), space.len());
    let (mt, mx) = (mesh.taus.len(), mesh.xis.len());
    let ct = DMatrix::from_fn(nt, mt, |i, a| (mesh.taus[a] * times[i]).cos());
    let st = DMatrix::from_fn(nt, mt, |i, a| (mesh.taus[a] * times[i]).sin());
    let phase = |b: usize, j: usize| mesh.xis[b].iter().zip(&space[j]).map(|(u, v)| u * v).sum::<f64>();
    let cx = DMatrix::from_fn(mx, ns, |b, j| phase(b, j).cos());
    let sx = DMatrix::from_fn(mx, ns, |b, j| phase(b, j).sin());
    let weights = DMatrix::from_row_slice(mt, mx, &mesh.weights);

    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k);
            let mut a = vec![0.0; mt * mx];
            let mut b = vec![0.0; mt * mx];
            standard_normals(&mut rng, &mut a);
            standard_normals(&mut rng, &mut b);
            let a = DMatrix::from_row_slice(mt, mx, &a).component_mul(&weights);
            let b = DMatrix::from_row_slice(mt, mx, &b).component_mul(&weights);
            let offset = a.sum();
            let p = &a * &cx + &b * &sx;
            let q = &b * &cx - &a * &sx;
            let u = &ct * p + &st * q;
            let mut row = Vec::with_capacity(nt * ns);
            for i in 0..nt {
                for j in 0..ns {
                    row.push(u[(i, j)] - offset);
                }
            }
            row
        })
        .collect();
    Ok(FieldSample {
        n_paths,
        n_points: nt * ns,
        values: rows.concat(),
        seed,
        method: SampleMethod::Spectral,
        jitter: 0.0,
        truncation: Some(trunc),
        bias: Some(report),
    })
}

/// Spatial increments `x ↦ U(t, x) - U(t, x_0)` along a single time slice in `d = 1`.
///
/// The time frequency is integrated out exactly, which leaves the one-dimensional spectral
/// weight `w^2 = 2 c_H K_0 ξ^{-β} Ψ(ξ)^{-2H} · cell` on `ξ > 0`. Values are reported relative to
/// the first abscissa, so every row starts at zero.
pub fn slice_sample(xs: &[f64], variogram: &Variogram, n_paths: usize, seed: u64) -> Result<FieldSample> {
    let density = &variogram.density;
    if density.d() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: density.d() });
    }
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation("slice abscissae must be strictly increasing".into()));
    }
    let (extent, spacing) = extent_and_spacing(xs).unwrap_or((1.0, 1.0));
    let per_shell = 32;
    let hi = 2.0 * PI * 64.0 / spacing;
    let mut lo = if density.xi_cutoff > 0.0 { density.xi_cutoff } else { 2.0 * PI / (64.0 * extent) };
    let prefactor = 2.0 * density.noise.c_h * density.kernel().k0();
    let h = density.noise.h;
    let build = |lo: f64| -> Result<Vec<(f64, f64)>> {
        log_nodes(lo, hi, per_shell)
            .into_iter()
            .map(|(xi, cell)| {
                let psi = density.levy.psi_radial(xi)?;
                let w2 = prefactor * xi.powf(-density.noise.beta) * psi.powf(-2.0 * h) * cell;
                if !w2.is_finite() {
                    return Err(Error::Domain("spectral weight is not finite".into()));
                }
                Ok((xi, w2.sqrt()))
            })
            .collect()
    };
    let implied = |mesh: &[(f64, f64)], lag: f64| -> f64 {
        mesh.iter().map(|(xi, w)| w * w * 4.0 * (0.5 * xi * lag).sin().powi(2)).sum()
    };
    let mut mesh = build(lo)?;
    for _ in 0..16 {
        let analytic = variogram.lag_value(0.0, extent)?;
        if (analytic - implied(&mesh, extent)) / analytic < INFRARED_BIAS || density.xi_cutoff > 0.0 {
            break;
        }
        lo *= 0.5;
        mesh = build(lo)?;
    }
    let mut probes = Vec::new();
    let mut max_bias = 0.0f64;
    for k in 0..4 {
        let lag = spacing * (extent / spacing).powf(k as f64 / 3.0);
        let analytic = variogram.lag_value(0.0, lag)?;
        let value = implied(&mesh, lag);
        let bias = (value - analytic).abs() / analytic;
        max_bias = max_bias.max(bias);
        probes.push(ProbeLag { dt: 0.0, dx: lag, analytic, implied: value, bias });
    }
    if let Some(worst) = probes.iter().find(|p| p.bias > MAX_TRUNCATION_BIAS) {
        return Err(Error::TruncationBiasExceeded { lag: worst.dx, bias: worst.bias });
    }
    let m = mesh.len();
    let rel: Vec<f64> = xs.iter().map(|x| x - xs[0]).collect();
    let cx = DMatrix::from_fn(m, xs.len(), |b, j| (mesh[b].0 * rel[j]).cos() - 1.0);
    let sx = DMatrix::from_fn(m, xs.len(), |b, j| (mesh[b].0 * rel[j]).sin());
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k);
            let mut a = vec![0.0; m];
            let mut b = vec![0.0; m];
            standard_normals(&mut rng, &mut a);
            standard_normals(&mut rng, &mut b);
            let a = DVector::from_iterator(m, a.iter().zip(&mesh).map(|(z, (_, w))| z * w));
            let b = DVector::from_iterator(m, b.iter().zip(&mesh).map(|(z, (_, w))| z * w));
            let u = cx.tr_mul(&a) + sx.tr_mul(&b);
            u.iter().copied().collect()
        })
        .collect();
    Ok(FieldSample {
        n_paths,
        n_points: xs.len(),
        values: rows.concat(),
        seed,
        method: SampleMethod::Spectral,
        jitter: 0.0,
        truncation: Some(SpectralTruncation { tau_range: (0.0, 0.0), xi_range: (lo, hi), nodes_per_shell: per_shell }),
        bias: Some(BiasReport { probes, max_bias }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub entries: usize,
    pub max_studentized: f64,
    /// Fraction of nonzero-variance entries where the Cholesky second moment lies within three
    /// Monte Carlo standard errors of the analytic covariance.
    pub cholesky_within_3se: f64,
    pub cholesky_jitter: f64,
    pub spectral_bias: Option<BiasReport>,
}

/// Runs both samplers with the same seed and compares their second-moment matrices entrywise;
/// the Cholesky moments are also compared with the analytic covariance.
pub fn cross_validate(
    ps: &PointSet,
    variogram: &Variogram,
    cholesky_paths: usize,
    spectral_paths: usize,
    seed: u64,
) -> Result<CrossValidation> {
    if ps.is_empty() {
        return Ok(CrossValidation {
            entries: 0,
            max_studentized: 0.0,
            cholesky_within_3se: 1.0,
            cholesky_jitter: 0.0,
            spectral_bias: None,
        });
    }
    let exact = cholesky_sample_with(ps, variogram, cholesky_paths, seed)?;
    let approx = spectral_sample_with(ps, variogram, None, spectral_paths, seed)?;
    let (m1, m2) = (exact.second_moments(), approx.second_moments());
    let (s1, s2) = (exact.second_moment_errors(), approx.second_moment_errors());
    let analytic = variogram.gram(&ps.points)?;
    let n = ps.len();
    let mut worst = 0.0f64;
    let mut entries = 0;
    let mut within = 0;
    for i in 0..n {
        for j in 0..=i {
            let se = (s1[(i, j)].powi(2) + s2[(i, j)].powi(2)).sqrt();
            if se == 0.0 {
                continue;
            }
            entries += 1;
            worst = worst.max((m1[(i, j)] - m2[(i, j)]).abs() / se);
            if (m1[(i, j)] - analytic[(i, j)]).abs() <= 3.0 * s1[(i, j)] {
                within += 1;
            }
        }
    }
    Ok(CrossValidation {
        entries,
        max_studentized: worst,
        cholesky_within_3se: if entries == 0 { 1.0 } else { within as f64 / entries as f64 },
        cholesky_jitter: exact.jitter,
        spectral_bias: approx.bias,
    })
}

pub const FHF1_MAGIC: &[u8; 4] = b"FHF1";
pub const FHF1_HEADER_LEN: usize = 36;

/// Binary container: magic `FHF1`, `n_paths` and `n_points` as little-endian u64, the seed as
/// u64, the method tag as u8, seven zero bytes, then the values as little-endian f64, row-major.
pub fn write_fhf1<W: Write>(sample: &FieldSample, mut out: W) -> std::io::Result<()> {
    out.write_all(FHF1_MAGIC)?;
    out.write_all(&(sample.n_paths as u64).to_le_bytes())?;
    out.write_all(&(sample.n_points as u64).to_le_bytes())?;
    out.write_all(&sample.seed.to_le_bytes())?;
    out.write_all(&[sample.method.tag()])?;
    out.write_all(&[0u8; 7])?;
    let mut buf = Vec::with_capacity(sample.values.len() * 8);
    for v in &sample.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Header fields and values of an FHF1 container.
#[derive(Debug, Clone, PartialEq)]
pub struct Fhf1 {
    pub n_paths: usize,
    pub n_points: usize,
    pub seed: u64,
    pub method: SampleMethod,
    pub values: Vec<f64>,
}

pub fn read_fhf1<R: Read>(mut input: R) -> Result<Fhf1> {
    let bad = |what: &str| Error::Validation(format!("FHF1: {what}"));
    let mut header = [0u8; FHF1_HEADER_LEN];
    input.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    if &header[0..4] != FHF1_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |k: usize| u64::from_le_bytes(header[4 + 8 * k..12 + 8 * k].try_into().unwrap());
    let (n_paths, n_points, seed) = (word(0) as usize, word(1) as usize, word(2));
    let method = SampleMethod::from_tag(header[28])?;
    if header[29..36].iter().any(|b| *b != 0) {
        return Err(bad("nonzero padding"));
    }
    let count = n_paths.checked_mul(n_points).ok_or_else(|| bad("dimensions overflow"))?;
    let mut data = Vec::new();
    input.read_to_end(&mut data).map_err(|_| bad("unreadable body"))?;
    if data.len() != count * 8 {
        return Err(bad("body length does not match the header"));
    }
    let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Fhf1 { n_paths, n_points, seed, method, values })
}
