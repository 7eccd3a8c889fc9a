//! Conditional variances of the field given finitely many values, and audits of the strong
//! local nondeterminism bounds in the metric `ρ̃ = |Δt|^{H1} + |Δx|^{H2}`.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{SpaceTime, Variogram};
use crate::error::{Error, Result};
use crate::noise_model::{rho_metric, sigma_fn};
use crate::sampler::path_rng;

pub const MAX_CONDITIONERS: usize = 64;
const JITTER_START: f64 = 1e-12;
const JITTER_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlndConfig {
    pub target: SpaceTime,
    pub conditioners: Vec<SpaceTime>,
    /// Adds the origin, where the field vanishes, to the minimum over conditioners.
    pub include_origin: bool,
}

impl SlndConfig {
    pub fn new(target: SpaceTime, conditioners: Vec<SpaceTime>, include_origin: bool) -> Result<Self> {
        if conditioners.len() > MAX_CONDITIONERS {
            return Err(Error::Validation(format!("at most {MAX_CONDITIONERS} conditioners")));
        }
        let d = target.x.len();
        if conditioners.iter().any(|c| c.x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: conditioners.iter().map(|c| c.x.len()).find(|l| *l != d).unwrap_or(d) });
        }
        for (i, c) in conditioners.iter().enumerate() {
            if conditioners[..i].contains(c) {
                return Err(Error::Validation(format!("conditioner {i} is repeated")));
            }
        }
        Ok(Self { target, conditioners, include_origin })
    }

    fn anchors(&self) -> Vec<SpaceTime> {
        let mut all = self.conditioners.clone();
        if self.include_origin {
            all.push(SpaceTime::origin(self.target.x.len()));
        }
        all
    }
}

/// Lower Cholesky factor with `ε · trace` jitter, `ε` from `1e-12` up to `1e-8`.
fn factor(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = gram.clone().cholesky() {
        return Ok(c.l());
    }
    let trace = gram.trace();
    let mut eps = JITTER_START;
    while eps <= JITTER_LIMIT * (1.0 + 1e-9) {
        let mut g = gram.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += eps * trace;
        }
        if let Some(c) = g.cholesky() {
            return Ok(c.l());
        }
        eps *= 10.0;
    }
    Err(Error::SingularGram { jitter: JITTER_LIMIT * trace })
}

/// Variance and cross-covariances of the target against the non-origin conditioners.
fn moments(cfg: &SlndConfig, variogram: &Variogram) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let conds: Vec<SpaceTime> = cfg.conditioners.iter().filter(|c| !c.is_origin()).cloned().collect();
    let var_u = variogram.covariance(&cfg.target, &cfg.target)?;
    let gram = variogram.gram(&conds)?;
    let mut cross = DVector::zeros(conds.len());
    for (k, c) in conds.iter().enumerate() {
        cross[k] = variogram.covariance(&cfg.target, c)?;
    }
    Ok((var_u, cross, gram))
}

/// `Var(U(u) | U(t^1), ..., U(t^n)) = Cov(u,u) - c^T G^{-1} c`, clamped at zero.
pub fn conditional_variance(cfg: &SlndConfig, variogram: &Variogram) -> Result<f64> {
    if cfg.conditioners.contains(&cfg.target) || cfg.target.is_origin() {
        return Ok(0.0);
    }
    let (var_u, cross, gram) = moments(cfg, variogram)?;
    if cross.is_empty() {
        return Ok(var_u);
    }
    let l = factor(&gram)?;
    let y = l.solve_lower_triangular(&cross).ok_or(Error::SingularGram { jitter: 0.0 })?;
    Ok((var_u - y.norm_squared()).max(0.0))
}

/// Gauss-Jordan elimination with partial pivoting; returns `None` for a singular system.
fn gauss_jordan(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a[(i, j)];
        }
        m[(i, n)] = b[i];
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())?;
        if m[(pivot, col)] == 0.0 {
            return None;
        }
        m.swap_rows(col, pivot);
        let p = m[(col, col)];
        for j in col..=n {
            m[(col, j)] /= p;
        }
        for i in 0..n {
            if i != col {
                let factor = m[(i, col)];
                if factor != 0.0 {
                    for j in col..=n {
                        m[(i, j)] -= factor * m[(col, j)];
                    }
                }
            }
        }
    }
    Some(DVector::from_fn(n, |i, _| m[(i, n)]))
}

/// Residual `E(U(u) - Σ a_k U(t^k))^2` at the least-squares coefficients, obtained from the
/// normal equations by Gauss-Jordan elimination. Serves as an independent check of
/// [`conditional_variance`].
pub fn regression_residual(cfg: &SlndConfig, variogram: &Variogram) -> Result<f64> {
    let (var_u, cross, gram) = moments(cfg, variogram)?;
    if cross.is_empty() {
        return Ok(var_u);
    }
    let a = gauss_jordan(&gram, &cross).ok_or(Error::SingularGram { jitter: 0.0 })?;
    let residual = var_u - 2.0 * a.dot(&cross) + (&gram * &a).dot(&a);
    Ok(residual.max(0.0))
}

/// `min_k ρ̃(u, t^k)^2` over the conditioners and, when requested, the origin.
pub fn min_rho_tilde_sq(cfg: &SlndConfig, variogram: &Variogram) -> f64 {
    let exps = &variogram.density.exps;
    cfg.anchors()
        .iter()
        .map(|a| {
            let (dt, dx) = cfg.target.lag(a);
            exps.rho_tilde(dt, dx).powi(2)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `|Δt|^{2H1} + σ(|Δx|)`; on the logarithmic branch `σ` is continued by `r^2` for `r >= 1`.
fn upper_companion(variogram: &Variogram, dt: f64, dx: f64) -> f64 {
    let exps = &variogram.density.exps;
    let space = sigma_fn(dx, exps.h2).unwrap_or(dx * dx);
    dt.powf(2.0 * exps.h1) + space
}

pub fn min_upper_companion(cfg: &SlndConfig, variogram: &Variogram) -> f64 {
    cfg.anchors()
        .iter()
        .map(|a| {
            let (dt, dx) = cfg.target.lag(a);
            upper_companion(variogram, dt, dx)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Conditional variance over `min_k ρ̃(u, t^k)^2`; zero when the target sits on a conditioner.
pub fn slnd_ratio(cfg: &SlndConfig, variogram: &Variogram) -> Result<f64> {
    let denom = min_rho_tilde_sq(cfg, variogram);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(conditional_variance(cfg, variogram)? / denom)
}

/// `n` conditioners and a target drawn uniformly from `[0.1,1] × [-1,1]^d`, `n` uniform in 1..=6.
pub fn random_config(seed: u64, index: usize, d: usize) -> SlndConfig {
    let mut rng = path_rng(seed, index);
    let point = |rng: &mut rand_chacha::ChaCha8Rng| {
        let t = rng.random_range(0.1..1.0);
        let x = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        SpaceTime::new(t, x)
    };
    let target = point(&mut rng);
    let n = rng.random_range(1..=6usize);
    let conditioners = (0..n).map(|_| point(&mut rng)).collect();
    SlndConfig { target, conditioners, include_origin: true }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlndRecord {
    pub index: usize,
    pub ratio: f64,
    pub upper_ratio: f64,
    pub conditional_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlndReport {
    pub min_ratio: f64,
    pub argmin: Option<SlndConfig>,
    pub max_upper_ratio: f64,
    pub failures: Vec<String>,
    pub records: Vec<SlndRecord>,
}

fn summarize(configs: &[SlndConfig], outcomes: Vec<std::result::Result<SlndRecord, String>>) -> SlndReport {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(e) => failures.push(e),
        }
    }
    let best = records.iter().min_by(|a, b| a.ratio.partial_cmp(&b.ratio).unwrap());
    SlndReport {
        min_ratio: best.map_or(f64::NAN, |r| r.ratio),
        argmin: best.map(|r| configs[r.index].clone()),
        max_upper_ratio: records.iter().map(|r| r.upper_ratio).fold(0.0, f64::max),
        failures,
        records,
    }
}

/// Audits `n_configs` random configurations: the minimum of [`slnd_ratio`] (positive under
/// strong local nondeterminism) and the maximum of the conditional variance over
/// `min_k (|Δt|^{2H1} + σ(|Δx|))` (finite by the upper bound).
pub fn slnd_audit(variogram: &Variogram, n_configs: usize, seed: u64) -> Result<SlndReport> {
    if n_configs == 0 {
        return Err(Error::Validation("n_configs must be at least 1".into()));
    }
    let d = variogram.density.d();
    let configs: Vec<SlndConfig> = (0..n_configs).map(|k| random_config(seed, k, d)).collect();
    let outcomes = configs
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| {
            let cv = conditional_variance(cfg, variogram).map_err(|e| format!("config {index}: {e}"))?;
            Ok(SlndRecord {
                index,
                ratio: cv / min_rho_tilde_sq(cfg, variogram),
                upper_ratio: cv / min_upper_companion(cfg, variogram),
                conditional_variance: cv,
            })
        })
        .collect();
    Ok(summarize(&configs, outcomes))
}

/// A spectral density on `R^N` together with its scaling vector `γ ∈ (0,1)^N`.
pub struct GenericDensity<'a> {
    pub f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericConfig {
    pub target: Vec<f64>,
    pub conditioners: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericSlndReport {
    pub min_ratio: f64,
    pub argmin: Option<GenericConfig>,
    pub max_scaling_residual: f64,
    /// Set when `f(c^E λ) c^{2+Q} / f(λ)` strays more than 10% from one on the probe points.
    pub scaling_violation: bool,
    pub ratios: Vec<f64>,
    pub failures: Vec<String>,
}

/// Frequency mesh on `R^N` with log-spaced nodes of both signs along each axis; the variogram
/// of the density restricted to it is an exact finite sum, so Grams built from it are PSD.
struct GenericMesh {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl GenericMesh {
    fn build(density: &GenericDensity, lo: f64, hi: f64, per_shell: usize) -> Self {
        let n = density.gamma.len();
        let shells = (hi / lo).log2().ceil() as usize;
        let step = LN_2 / per_shell as f64;
        let axis: Vec<(f64, f64)> = (0..shells * per_shell)
            .flat_map(|k| {
                let v = lo * ((k as f64 + 0.5) * step).exp();
                [(-v, v * step), (v, v * step)]
            })
            .collect();
        let mut nodes: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
        for _ in 0..n {
            nodes = nodes
                .into_iter()
                .flat_map(|(p, c)| {
                    axis.iter().map(move |(v, w)| {
                        let mut q = p.clone();
                        q.push(*v);
                        (q, c * w)
                    })
                })
                .collect();
        }
        let weights = nodes.iter().map(|(l, c)| (density.f)(l) * c).collect();
        Self { nodes: nodes.into_iter().map(|(l, _)| l).collect(), weights }
    }

    /// `∫ (e^{i⟨a,λ⟩} - 1) conj(e^{i⟨b,λ⟩} - 1) f dλ`, real by symmetry of the mesh.
    fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (l, w) in self.nodes.iter().zip(&self.weights) {
            let pa: f64 = l.iter().zip(a).map(|(x, y)| x * y).sum();
            let pb: f64 = l.iter().zip(b).map(|(x, y)| x * y).sum();
            // Re[(e^{ia} - 1)(e^{-ib} - 1)] = cos(a - b) - cos a - cos b + 1
            sum += w * ((pa - pb).cos() - pa.cos() - pb.cos() + 1.0);
        }
        sum
    }
}

fn scaling_residual(density: &GenericDensity) -> f64 {
    let q: f64 = density.gamma.iter().map(|g| 1.0 / g).sum();
    let n = density.gamma.len();
    let mut worst = 0.0f64;
    for k in 0..20 {
        let lambda: Vec<f64> = (0..n)
            .map(|j| {
                let angle = 0.7 * k as f64 + 1.3 * j as f64;
                (1.0 + k as f64 * 0.5) * angle.cos()
            })
            .collect();
        let base = (density.f)(&lambda);
        if !(base > 0.0) || !base.is_finite() {
            continue;
        }
        for c in [0.5f64, 2.0] {
            let scaled: Vec<f64> = lambda.iter().zip(&density.gamma).map(|(l, g)| l * c.powf(1.0 / g)).collect();
            let ratio = (density.f)(&scaled) * c.powf(2.0 + q) / base;
            worst = worst.max((ratio - 1.0).abs());
        }
    }
    worst
}

/// The audit of [`slnd_audit`] for an arbitrary density on `R^N`, in the metric
/// `ρ(u, t) = Σ |u_j - t_j|^{γ_j}`, with the origin always among the anchors.
pub fn generic_slnd_audit(density: &GenericDensity, n_configs: usize, seed: u64) -> Result<GenericSlndReport> {
    let n = density.gamma.len();
    if n == 0 || density.gamma.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
        return Err(Error::Validation("γ must lie in (0,1)^N".into()));
    }
    if n_configs == 0 {
        return Err(Error::Validation("n_configs must be at least 1".into()));
    }
    let residual = scaling_residual(density);
    let per_shell = match n {
        1 => 16,
        2 => 6,
        _ => 3,
    };
    let mesh = GenericMesh::build(density, 2.0 * PI / 128.0, 2.0 * PI * 1e4, per_shell);
    let configs: Vec<GenericConfig> = (0..n_configs)
        .map(|k| {
            let mut rng = path_rng(seed, k);
            let point = |rng: &mut rand_chacha::ChaCha8Rng| (0..n).map(|_| rng.random_range(0.1..1.0)).collect::<Vec<f64>>();
            let target = point(&mut rng);
            let m = rng.random_range(1..=6usize);
            let conditioners = (0..m).map(|_| point(&mut rng)).collect();
            GenericConfig { target, conditioners }
        })
        .collect();
    let outcomes: Vec<std::result::Result<f64, String>> = configs
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| {
            let m = cfg.conditioners.len();
            let gram = DMatrix::from_fn(m, m, |i, j| mesh.covariance(&cfg.conditioners[i], &cfg.conditioners[j]));
            let cross = DVector::from_fn(m, |i, _| mesh.covariance(&cfg.target, &cfg.conditioners[i]));
            let var_u = mesh.covariance(&cfg.target, &cfg.target);
            let l = factor(&gram).map_err(|e| format!("config {index}: {e}"))?;
            let y = l.solve_lower_triangular(&cross).ok_or_else(|| format!("config {index}: singular"))?;
            let cv = (var_u - y.norm_squared()).max(0.0);
            let origin = vec![0.0; n];
            let mut denom = rho_metric(&cfg.target, &origin, &density.gamma).map_err(|e| e.to_string())?;
            for c in &cfg.conditioners {
                denom = denom.min(rho_metric(&cfg.target, c, &density.gamma).map_err(|e| e.to_string())?);
            }
            Ok(cv / (denom * denom))
        })
        .collect();
    let mut ratios = Vec::new();
    let mut failures = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => {
                if best.is_none_or(|(b, _)| r < b) {
                    best = Some((r, k));
                }
                ratios.push(r);
            }
            Err(e) => failures.push(e),
        }
    }
    Ok(GenericSlndReport {
        min_ratio: best.map_or(f64::NAN, |b| b.0),
        argmin: best.map(|b| configs[b.1].clone()),
        max_scaling_residual: residual,
        scaling_violation: residual > 0.1,
        ratios,
        failures,
    })
}
