//! Spectral density of the solution field, its variogram and covariances.
//!
//! The field `U` is the centered Gaussian field with stationary increments, `U(0,0) = 0`, and
//! increment variance
//! `D(Δt, Δx) = 2 c_H ∫∫ [1 - cos(⟨Δx,ξ⟩ + Δt τ)] f_U(τ, ξ) dτ dξ`,
//! `f_U(τ, ξ) = |τ|^{1-2H} / ((τ^2 + Ψ(ξ)^2) |ξ|^β)`.
//! The τ-integral is done in closed form through the kernel `K` of [`FouKernel`]:
//! `D = 2 c_H ∫ |ξ|^{-β} Ψ^{-2H} [K(0) - cos⟨Δx,ξ⟩ K(|Δt| Ψ)] dξ`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::LevyExponent;
use crate::noise_model::{derive_exponents, sigma_fn, Exponents, NoiseSpec};
use crate::quadrature::{
    decade_sweep, integrate_oscillatory_tail, mc_integrate_2d_stream, sphere_area, CauchyProduct,
    IntegralResult, QuadratureBudget, SweepOutcome,
};
use crate::special::{one_minus_spherical_mean, spherical_mean, FouKernel};

/// A space-time point `(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTime {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SpaceTime {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }

    pub fn origin(d: usize) -> Self {
        Self {
            t: 0.0,
            x: vec![0.0; d],
        }
    }

    pub fn is_origin(&self) -> bool {
        self.t == 0.0 && self.x.iter().all(|v| *v == 0.0)
    }

    /// `(|Δt|, |Δx|)` between two points.
    pub fn lag(&self, other: &SpaceTime) -> (f64, f64) {
        let dx = self
            .x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        ((self.t - other.t).abs(), dx)
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDensity {
    pub noise: NoiseSpec,
    pub levy: LevyExponent,
    pub exps: Exponents,
    /// Spatial frequencies below this radius keep their temporal contribution but lose their
    /// spatial phase, so they no longer enter spatial increments. Zero means no cutoff.
    pub xi_cutoff: f64,
    kernel: FouKernel,
}

impl SpectralDensity {
    pub fn new(noise: NoiseSpec, levy: LevyExponent) -> Result<Self> {
        if levy.d != noise.d {
            return Err(Error::DimensionMismatch {
                expected: noise.d,
                got: levy.d,
            });
        }
        let exps = derive_exponents(&noise, &levy)?;
        let kernel = FouKernel::new(noise.h);
        Ok(Self {
            noise,
            levy,
            exps,
            xi_cutoff: 0.0,
            kernel,
        })
    }

    pub fn with_infrared_cutoff(mut self, xi_min: f64) -> Self {
        self.xi_cutoff = xi_min.max(0.0);
        self
    }

    pub fn d(&self) -> usize {
        self.noise.d
    }

    pub fn kernel(&self) -> &FouKernel {
        &self.kernel
    }

    /// `f_U(τ, ξ)`; undefined on the coordinate axes `τ = 0` or `ξ = 0`.
    pub fn f_u(&self, tau: f64, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: xi.len(),
            });
        }
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tau == 0.0 || r == 0.0 {
            return Err(Error::Domain(
                "f_U is undefined on the axes τ = 0, ξ = 0".into(),
            ));
        }
        let psi = self.levy.psi(xi)?;
        Ok(self.f_u_radial(tau, r, psi))
    }

    pub(crate) fn f_u_radial(&self, tau: f64, r: f64, psi: f64) -> f64 {
        let h = self.noise.h;
        1.0 / (tau.abs().powf(2.0 * h - 1.0) * (tau * tau + psi * psi) * r.powf(self.noise.beta))
    }

    /// `|f_U(c^{1/H1} τ, c^{1/H2} ξ) c^{2+Q} - f_U(τ, ξ)| / f_U(τ, ξ)`.
    pub fn scaling_residual(&self, tau: f64, xi: &[f64], c: f64) -> Result<f64> {
        if !(c > 0.0) {
            return Err(Error::Validation("scaling factor must be positive".into()));
        }
        let e = &self.exps;
        let base = self.f_u(tau, xi)?;
        let xi_s: Vec<f64> = xi.iter().map(|v| v * c.powf(1.0 / e.h2)).collect();
        let scaled = self.f_u(tau * c.powf(1.0 / e.h1), &xi_s)?;
        Ok((scaled * c.powf(2.0 + e.q) - base).abs() / base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingProbe {
    pub tau: f64,
    pub xi: Vec<f64>,
    pub c: f64,
    pub residual: f64,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()
}

/// Scaling residuals at `n` random points. `|τ|` and `|ξ_i|` are log-uniform on `[1e-3, 1e3]`
/// with random signs and `c` is log-uniform on `[1e-2, 1e2]`.
pub fn scaling_audit(density: &SpectralDensity, n: usize, seed: u64) -> Result<Vec<ScalingProbe>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signed = |rng: &mut ChaCha8Rng| {
        let v = log_uniform(rng, 1e-3, 1e3);
        if rng.random::<bool>() { v } else { -v }
    };
    (0..n)
        .map(|_| {
            let tau = signed(&mut rng);
            let xi: Vec<f64> = (0..density.d()).map(|_| signed(&mut rng)).collect();
            let c = log_uniform(&mut rng, 1e-2, 1e2);
            let residual = density.scaling_residual(tau, &xi, c)?;
            Ok(ScalingProbe { tau, xi, c, residual })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantConvention {
    /// Prefactor `2 c_H` in front of the spectral integral.
    #[serde(rename = "2cH")]
    TwoCh,
}

/// Increment variance of the field with memoization on the lag `(|Δt|, |Δx|)`.
#[derive(Debug)]
pub struct Variogram {
    pub density: SpectralDensity,
    pub budget: QuadratureBudget,
    pub convention: ConstantConvention,
    cache: Mutex<HashMap<(u64, u64), IntegralResult>>,
}

impl Clone for Variogram {
    fn clone(&self) -> Self {
        Self::new(self.density.clone(), self.budget)
    }
}

impl Variogram {
    pub fn new(density: SpectralDensity, budget: QuadratureBudget) -> Self {
        Self {
            density,
            budget,
            convention: ConstantConvention::TwoCh,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn check_point(&self, p: &SpaceTime) -> Result<()> {
        if p.x.len() != self.density.d() {
            return Err(Error::DimensionMismatch {
                expected: self.density.d(),
                got: p.x.len(),
            });
        }
        Ok(())
    }

    /// `D(p, q) = E (U(p) - U(q))^2`.
    pub fn increment_variance(&self, p: &SpaceTime, q: &SpaceTime) -> Result<IntegralResult> {
        self.check_point(p)?;
        self.check_point(q)?;
        let (dt, dx) = p.lag(q);
        self.lag_variance(dt, dx)
    }

    /// `D` as a function of the lag `(|Δt|, |Δx|)`.
    pub fn lag_variance(&self, dt: f64, dx: f64) -> Result<IntegralResult> {
        let (b, a) = (dt.abs(), dx.abs());
        if a == 0.0 && b == 0.0 {
            return Ok(IntegralResult::zero());
        }
        let key = (b.to_bits(), a.to_bits());
        if let Some(r) = self.cache.lock().unwrap().get(&key) {
            return Ok(*r);
        }
        let dens = &self.density;
        if !dens.levy.is_radial() && dens.d() > 1 {
            return Err(Error::PreconditionFailed(
                "radial variogram quadrature needs an isotropic exponent when d > 1".into(),
            ));
        }
        if a > 0.0
            && dens.xi_cutoff == 0.0
            && dens.levy.is_exact_power()
            && dens.exps.h2 >= 1.0 - 1e-12
        {
            return Err(Error::InfraredDivergence { h2: dens.exps.h2 });
        }
        let r = if dens.d() <= 2 {
            self.lag_variance_quadrature(b, a)?
        } else {
            self.lag_variance_mc(b, a)?
        };
        let r = IntegralResult {
            value: r.value.max(0.0),
            ..r
        };
        self.cache.lock().unwrap().insert(key, r);
        Ok(r)
    }

    /// Value of `D` at a lag, failing unless the quadrature met its tolerance.
    pub fn lag_value(&self, dt: f64, dx: f64) -> Result<f64> {
        let r = self.lag_variance(dt, dx)?;
        if !r.converged {
            return Err(Error::NotConverged {
                value: r.value,
                error: r.error_estimate,
            });
        }
        Ok(r.value)
    }

    fn lag_variance_quadrature(&self, b: f64, a: f64) -> Result<IntegralResult> {
        let dens = &self.density;
        let d = dens.d();
        let h = dens.noise.h;
        let beta = dens.noise.beta;
        let kern = dens.kernel;
        let k0 = kern.k0();
        let levy = &dens.levy;
        let r_min = dens.xi_cutoff;
        let area = sphere_area(d);
        let alpha = dens.exps.alpha;
        let budget = &self.budget;

        let weight = move |r: f64| -> f64 {
            let psi = levy.psi_radial(r).unwrap_or(f64::NAN);
            area * r.powf(d as f64 - 1.0 - beta) * psi.powf(-2.0 * h)
        };
        let psi_of = move |r: f64| levy.psi_radial(r).unwrap_or(f64::NAN);
        // Full integrand in the bracket form E(bΨ) + (1 - m(ar)) K(bΨ).
        let full = move |r: f64| -> f64 {
            let psi = psi_of(r);
            let z = b * psi;
            let bracket = kern.deficit(z) + one_minus_spherical_mean(d, a * r) * kern.k(z);
            weight(r) * bracket
        };

        let end = if r_min > 0.0 { Some(r_min) } else { None };
        let mut total = IntegralResult::zero();
        let split = if a > 0.0 { 8.0 * PI / a } else { 0.0 };
        if a == 0.0 {
            // Pure time lags see every frequency, the cutoff only removes spatial phase.
            let center = b.powf(-1.0 / alpha).max(1e-300);
            let up = decade_sweep(&full, center, true, None, budget, 0.0);
            total = total.plus(sweep_ok(up, false)?);
            let down = decade_sweep(&full, center, false, None, budget, total.value);
            total = total.plus(sweep_ok(down, true)?);
        } else {
            let split = split.max(r_min);
            // Start the inward sweep at the time scale when it sits below the split, so the
            // small-r power laws are not mixed with the transition region.
            let center = if b > 0.0 { b.powf(-1.0 / alpha) } else { split };
            let inner_start = if center < split && center > r_min { center } else { split };
            if inner_start < split {
                let mid = decade_sweep(&full, inner_start, true, Some(split), budget, 0.0);
                total = total.plus(sweep_ok(mid, false)?);
            }
            if r_min < inner_start {
                let down = decade_sweep(&full, inner_start, false, end, budget, total.value);
                total = total.plus(sweep_ok(down, true)?);
            }
            let flat = move |r: f64| weight(r) * k0;
            let up = decade_sweep(&flat, split, true, None, budget, total.value);
            total = total.plus(sweep_ok(up, false)?);
            let wave = move |r: f64| weight(r) * spherical_mean(d, a * r) * kern.k(b * psi_of(r));
            let osc = integrate_oscillatory_tail(&wave, split, PI / a, budget, total.value);
            total = total.plus(osc.scaled(-1.0));
            if r_min > 0.0 && b > 0.0 {
                let time_only = move |r: f64| weight(r) * kern.deficit(b * psi_of(r));
                let low = decade_sweep(&time_only, r_min, false, None, budget, total.value);
                total = total.plus(sweep_ok(low, true)?);
            }
        }
        let mut result = total.scaled(2.0 * dens.noise.c_h);
        result.converged = result.converged
            && result.error_estimate
                <= budget.abs_tol.max(budget.rel_tol * result.value.abs()) * 4.0;
        Ok(result)
    }

    /// Importance-sampling route for `d >= 3`, over `(ln r, cos θ)`.
    fn lag_variance_mc(&self, b: f64, a: f64) -> Result<IntegralResult> {
        let dens = &self.density;
        let d = dens.d() as f64;
        let h = dens.noise.h;
        let beta = dens.noise.beta;
        let kern = dens.kernel;
        let alpha = dens.exps.alpha;
        let r_min = dens.xi_cutoff;
        let lower_area = sphere_area(dens.d() - 1);
        let levy = &dens.levy;
        let f = |u: f64, c: f64| -> f64 {
            if !(-1.0..=1.0).contains(&c) {
                return 0.0;
            }
            let r = u.exp();
            let psi = levy.psi_radial(r).unwrap_or(f64::NAN);
            let z = b * psi;
            let spatial = if r < r_min { 0.0 } else { 2.0 * (0.5 * a * r * c).sin().powi(2) * kern.k(z) };
            let bracket = kern.deficit(z) + spatial;
            lower_area
                * r.powf(d - beta)
                * psi.powf(-2.0 * h)
                * bracket
                * (1.0 - c * c).powf((d - 3.0) / 2.0)
        };
        let scale_b = if b > 0.0 {
            b.powf(-1.0 / alpha)
        } else {
            f64::INFINITY
        };
        let scale_a = if a > 0.0 { 1.0 / a } else { f64::INFINITY };
        let center = scale_b.min(scale_a).ln();
        let proposal = CauchyProduct {
            center: (center, 0.0),
            scale: (2.0, 0.5),
        };
        let est = mc_integrate_2d_stream(
            &f,
            &proposal,
            &self.budget,
            (b.to_bits() ^ a.to_bits().rotate_left(17)) | 1,
        )?;
        let value = 2.0 * dens.noise.c_h * est.value;
        let error = 2.0 * dens.noise.c_h * est.std_error;
        Ok(IntegralResult {
            value,
            error_estimate: error,
            converged: error <= self.budget.abs_tol.max(self.budget.rel_tol * value.abs()),
            subdivisions_used: est.samples,
        })
    }

    /// `Cov(U(p), U(q)) = (D(p,0) + D(q,0) - D(p,q)) / 2`.
    pub fn covariance(&self, p: &SpaceTime, q: &SpaceTime) -> Result<f64> {
        let o = SpaceTime::origin(self.density.d());
        let dp = self.point_variance(p, &o)?;
        let dq = self.point_variance(q, &o)?;
        let dpq = self.point_variance(p, q)?;
        Ok(0.5 * (dp + dq - dpq))
    }

    fn point_variance(&self, p: &SpaceTime, q: &SpaceTime) -> Result<f64> {
        let r = self.increment_variance(p, q)?;
        accept(r)
    }

    /// Covariance matrix of the field at `points`.
    pub fn gram(&self, points: &[SpaceTime]) -> Result<DMatrix<f64>> {
        let n = points.len();
        let o = SpaceTime::origin(self.density.d());
        let mut diag = Vec::with_capacity(n);
        for p in points {
            diag.push(self.point_variance(p, &o)?);
        }
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = diag[i];
            for j in 0..i {
                let dij = self.point_variance(&points[i], &points[j])?;
                let c = 0.5 * (diag[i] + diag[j] - dij);
                g[(i, j)] = c;
                g[(j, i)] = c;
            }
        }
        Ok(g)
    }

    /// `D(p,q) / (|Δt|^{2 H1} + σ(|Δx|))`, zero when `p = q`.
    pub fn upper_bound_ratio(&self, p: &SpaceTime, q: &SpaceTime) -> Result<f64> {
        let (dt, dx) = p.lag(q);
        if dt == 0.0 && dx == 0.0 {
            return Ok(0.0);
        }
        let denom = dt.powf(2.0 * self.density.exps.h1) + sigma_fn(dx, self.density.exps.h2)?;
        Ok(self.point_variance(p, q)? / denom)
    }
}

/// Accepts a variogram value whose error estimate is within `1e-6` relative even if the strict
/// budget was not met; anything worse is an error.
fn accept(r: IntegralResult) -> Result<f64> {
    if r.converged || r.error_estimate <= 1e-6 * r.value.abs() {
        Ok(r.value)
    } else {
        Err(Error::NotConverged {
            value: r.value,
            error: r.error_estimate,
        })
    }
}

fn sweep_ok(s: crate::quadrature::Sweep, toward_origin: bool) -> Result<IntegralResult> {
    match s.outcome {
        SweepOutcome::Divergent if toward_origin => Err(Error::DivergentAtOrigin {
            partial: s.result.value,
        }),
        SweepOutcome::Divergent => Err(Error::DivergentTail {
            partial: s.result.value,
        }),
        _ => Ok(s.result),
    }
}
