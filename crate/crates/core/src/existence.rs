//! Well-posedness of the equation: the criterion integral, the norm of `g_{t,x}`, the
//! one-dimensional bound behind it, and the necessity direction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{LevyExponent, LevyKind, LowerIndex};
use crate::noise_model::NoiseSpec;
use std::f64::consts::PI;

use crate::quadrature::{
    decade_sweep, integrate_interval, integrate_oscillatory_tail, integrate_radial_centered,
    IntegralResult, QuadratureBudget, SweepOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticVerdict {
    Exists,
    NotExists,
    Boundary,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericVerdict {
    Convergent,
    Divergent,
    Inconclusive,
}

impl AnalyticVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exists => "exists",
            Self::NotExists => "not_exists",
            Self::Boundary => "boundary",
            Self::NotApplicable => "not_applicable",
        }
    }
}

impl NumericVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Convergent => "convergent",
            Self::Divergent => "divergent",
            Self::Inconclusive => "inconclusive",
        }
    }

    pub fn of(result: &Result<IntegralResult>) -> Self {
        match result {
            Ok(r) if r.converged => Self::Convergent,
            Err(Error::DivergentTail { .. } | Error::DivergentAtOrigin { .. }) => Self::Divergent,
            _ => Self::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExistenceVerdict {
    pub analytic: AnalyticVerdict,
    pub numeric: NumericVerdict,
    /// `f64::INFINITY` when the integral diverges, `NaN` when inconclusive.
    pub criterion_value: f64,
    pub t: f64,
}

impl ExistenceVerdict {
    /// False only when both verdicts are decisive and contradict each other.
    pub fn consistent(&self) -> bool {
        match (self.analytic, self.numeric) {
            (AnalyticVerdict::Exists, NumericVerdict::Divergent) => false,
            (AnalyticVerdict::NotExists, NumericVerdict::Convergent) => false,
            _ => true,
        }
    }
}

fn check_radial(levy: &LevyExponent) -> Result<()> {
    if !levy.is_radial() && levy.d > 1 {
        return Err(Error::PreconditionFailed(
            "radial quadrature needs an isotropic exponent".into(),
        ));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Validation("t must be positive and finite".into()));
    }
    Ok(())
}

fn sweep_center(levy: &LevyExponent, t: f64) -> f64 {
    t.powf(-1.0 / levy.alpha_index().unwrap_or(1.0))
}

/// `∫ |ξ|^{-β} / (t^{-2H} + Ψ(ξ)^{2H}) dξ`.
pub fn criterion_integral(
    noise: &NoiseSpec,
    levy: &LevyExponent,
    t: f64,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    check_time(t)?;
    check_radial(levy)?;
    if levy.d != noise.d {
        return Err(Error::DimensionMismatch {
            expected: noise.d,
            got: levy.d,
        });
    }
    let (h, beta) = (noise.h, noise.beta);
    let floor = t.powf(-2.0 * h);
    let f = |r: f64| {
        let psi = levy.psi_radial(r).unwrap_or(f64::NAN);
        r.powf(-beta) / (floor + psi.powf(2.0 * h))
    };
    integrate_radial_centered(&f, noise.d, sweep_center(levy, t), budget)
}

/// Strict band `d - 2αH < β < d` for exponents with a stable-like index `α`.
pub fn analytic_band(noise: &NoiseSpec, levy: &LevyExponent) -> Result<AnalyticVerdict> {
    let alpha = levy
        .alpha_index()
        .ok_or_else(|| Error::PreconditionFailed("the band needs a stable-like index".into()))?;
    let d = noise.d as f64;
    let lower = d - 2.0 * alpha * noise.h;
    let beta = noise.beta;
    let tol = 1e-12 * (1.0 + d);
    Ok(if (beta - lower).abs() <= tol || (beta - d).abs() <= tol {
        AnalyticVerdict::Boundary
    } else if lower < beta && beta < d {
        AnalyticVerdict::Exists
    } else {
        AnalyticVerdict::NotExists
    })
}

pub fn existence_verdict(
    noise: &NoiseSpec,
    levy: &LevyExponent,
    t: f64,
    budget: &QuadratureBudget,
) -> Result<ExistenceVerdict> {
    check_time(t)?;
    let analytic = match analytic_band(noise, levy) {
        Ok(v) => v,
        Err(Error::PreconditionFailed(_)) => AnalyticVerdict::NotApplicable,
        Err(e) => return Err(e),
    };
    let result = criterion_integral(noise, levy, t, budget);
    if let Err(
        e @ (Error::Validation(_) | Error::PreconditionFailed(_) | Error::DimensionMismatch { .. }),
    ) = &result
    {
        return Err(e.clone());
    }
    let numeric = NumericVerdict::of(&result);
    let criterion_value = match (&result, numeric) {
        (_, NumericVerdict::Divergent) => f64::INFINITY,
        (Ok(r), NumericVerdict::Convergent) => r.value,
        _ => f64::NAN,
    };
    Ok(ExistenceVerdict {
        analytic,
        numeric,
        criterion_value,
        t,
    })
}

/// `(1 - e^{-x})^2 + 4 e^{-x} sin^2(vx/2)`, i.e. `|1 - e^{(iv-1)x}|^2` without cancellation.
fn damped_oscillation(v: f64, x: f64) -> f64 {
    let decay = (-x).exp_m1();
    decay * decay + 4.0 * (-x).exp() * (0.5 * v * x).sin().powi(2)
}

/// `∫_R |τ|^e profile(τ) |1 - e^{(iτω/x - 1) x}|^2 dτ` for an even, non-oscillating `profile`.
/// Below `8π/ω` the integrand is used as is; above it the constant and the `cos(ωτ)` parts of the
/// modulus are integrated separately, the latter with an accelerated oscillatory tail.
fn damped_tau_integral<F: Fn(f64) -> f64>(
    exponent: f64,
    profile: F,
    x: f64,
    omega: f64,
    scale: f64,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    let split = 8.0 * PI / omega;
    let scale = scale.min(split);
    let decay = (-x).exp();
    let full = |tau: f64| profile(tau) * damped_oscillation(tau * omega / x, x);
    let p = 1.0 + exponent;
    let near = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            full(scale * s.powf(1.0 / p))
        }
    };
    let mut total = integrate_interval(&near, 0.0, 1.0, budget).scaled(scale.powf(p) / p);
    let weighted = |tau: f64| tau.powf(exponent) * full(tau);
    if split > scale {
        let middle = decade_sweep(&weighted, scale, true, Some(split), budget, total.value);
        total = total.plus(middle.result);
    }
    let flat = |tau: f64| tau.powf(exponent) * profile(tau);
    let level = (-x).exp_m1().powi(2) + 2.0 * decay;
    let far = decade_sweep(&flat, split, true, None, budget, total.value);
    if far.outcome == SweepOutcome::Divergent {
        return Err(Error::DivergentTail {
            partial: far.result.value,
        });
    }
    total = total.plus(far.result.scaled(level));
    let wave = |tau: f64| flat(tau) * (omega * tau).cos();
    let osc = integrate_oscillatory_tail(&wave, split, PI / omega, budget, total.value);
    total = total.plus(osc.scaled(-2.0 * decay));
    Ok(total.scaled(2.0).judged(budget))
}

/// `∫_R |τ|^{1-2H} |1 - e^{iτt - tΨ}|^2 / (τ^2 + Ψ^2) dτ` for a fixed `Ψ > 0`.
fn inner_tau_integral(
    h: f64,
    t: f64,
    psi: f64,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    let profile = |tau: f64| 1.0 / (tau * tau + psi * psi);
    damped_tau_integral(1.0 - 2.0 * h, profile, t * psi, t, psi.min(1.0 / t), budget)
}

fn rescaled_integral(x: f64, h: f64, budget: &QuadratureBudget) -> Result<IntegralResult> {
    if x == 0.0 {
        return Ok(IntegralResult::zero());
    }
    let profile = |v: f64| 1.0 / (1.0 + v * v);
    damped_tau_integral(1.0 - 2.0 * h, profile, x, x, 1.0f64.min(1.0 / x), budget)
}

fn psi_vanishes(levy: &LevyExponent) -> bool {
    [0.1, 1.0, 10.0, 1e3]
        .iter()
        .all(|r| levy.psi_radial(*r).map(|p| p == 0.0).unwrap_or(false))
}

/// `‖g_{t,x}‖^2 = K_H ∫ μ(dξ) ∫ |τ|^{1-2H} |1 - e^{iτt - tΨ(ξ)}|^2 / (τ^2 + Ψ(ξ)^2) dτ`,
/// computed as a nested quadrature.
pub fn g_norm(
    noise: &NoiseSpec,
    levy: &LevyExponent,
    t: f64,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    check_time(t)?;
    check_radial(levy)?;
    if psi_vanishes(levy) {
        return Err(Error::PreconditionFailed("Ψ vanishes identically".into()));
    }
    let inner_budget = budget.with_rel_tol(0.1 * budget.rel_tol);
    let (h, beta) = (noise.h, noise.beta);
    let f = |r: f64| {
        let psi = match levy.psi_radial(r) {
            Ok(p) if p > 0.0 => p,
            _ => return f64::NAN,
        };
        match inner_tau_integral(h, t, psi, &inner_budget) {
            Ok(inner) => r.powf(-beta) * inner.value,
            Err(_) => f64::NAN,
        }
    };
    let outer = integrate_radial_centered(&f, noise.d, sweep_center(levy, t), budget)?;
    Ok(outer.scaled(noise.k_h))
}

/// `∫_R |v|^{1-2H} |1 - e^{(iv-1)x}|^2 / (1 + v^2) dv` for `0 <= x < 1`.
pub fn lemma_integral(x: f64, h: f64, budget: &QuadratureBudget) -> Result<IntegralResult> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Validation("x must lie in [0,1)".into()));
    }
    if !(h > 0.5 && h < 1.0) {
        return Err(Error::Validation("H must lie in (1/2,1)".into()));
    }
    let r = rescaled_integral(x, h, budget)?;
    if !r.converged {
        return Err(Error::NotConverged {
            value: r.value,
            error: r.error_estimate,
        });
    }
    Ok(r)
}

/// `lemma_integral(x) / x^{2H}` for each `x`.
pub fn lemma_ratios(xs: &[f64], h: f64, budget: &QuadratureBudget) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| Ok(lemma_integral(x, h, budget)?.value / x.powf(2.0 * h)))
        .collect()
}

/// Relative disagreement between the inner τ-integral and its rescaled form
/// `Ψ^{-2H} ∫ |v|^{1-2H} |1 - e^{(iv-1)tΨ}|^2 / (1 + v^2) dv`.
pub fn tau_rescale_check(
    noise: &NoiseSpec,
    levy: &LevyExponent,
    t: f64,
    xi: &[f64],
    budget: &QuadratureBudget,
) -> Result<f64> {
    check_time(t)?;
    let psi = levy.psi(xi)?;
    if !(psi > 0.0) {
        return Err(Error::PreconditionFailed("Ψ(ξ) must be positive".into()));
    }
    let h = noise.h;
    let direct = inner_tau_integral(h, t, psi, budget)?;
    let rescaled = rescaled_integral(t * psi, h, budget)?;
    for r in [&direct, &rescaled] {
        if !r.converged {
            return Err(Error::NotConverged {
                value: r.value,
                error: r.error_estimate,
            });
        }
    }
    let rhs = psi.powf(-2.0 * h) * rescaled.value;
    Ok((direct.value - rhs).abs() / rhs.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TauBranch {
    /// `tΨ > 1`: the inner integral is `O(Ψ^{-2H})`.
    HighFrequency,
    /// `tΨ <= 1`: the inner integral is `O(t^{2H})`.
    LowFrequency,
}

/// Bounds on the inner τ-integral in units of `K Ψ^{-2H}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauBound {
    pub branch: TauBranch,
    pub branch_bound: f64,
    pub combined_bound: f64,
}

pub fn inner_tau_bound(t_psi: f64, h: f64) -> Result<TauBound> {
    if !(t_psi > 0.0) || !t_psi.is_finite() {
        return Err(Error::Validation("tΨ must be positive".into()));
    }
    let scaled = t_psi.powf(2.0 * h);
    let (branch, branch_bound) = if t_psi > 1.0 {
        (TauBranch::HighFrequency, 1.0)
    } else {
        (TauBranch::LowFrequency, scaled)
    };
    Ok(TauBound {
        branch,
        branch_bound,
        combined_bound: 2.0 * scaled / (1.0 + scaled),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NecessityReport {
    pub criterion: NumericVerdict,
    pub g_norm: NumericVerdict,
    pub consistent: bool,
}

/// Runs both diagnostics; with a positive lower index divergence of the criterion must come with
/// divergence of the norm.
pub fn necessity_check(
    noise: &NoiseSpec,
    levy: &LevyExponent,
    t: f64,
    budget: &QuadratureBudget,
) -> Result<NecessityReport> {
    match levy.lower_index {
        LowerIndex::Known(v) if v > 0.0 => {}
        _ => {
            return Err(Error::PreconditionFailed(
                "necessity needs a positive lower index".into(),
            ))
        }
    }
    let criterion = NumericVerdict::of(&criterion_integral(noise, levy, t, budget));
    let norm = NumericVerdict::of(&g_norm(noise, levy, t, budget));
    if criterion == NumericVerdict::Inconclusive || norm == NumericVerdict::Inconclusive {
        return Err(Error::Inconclusive(format!(
            "criterion {}, norm {}",
            criterion.as_str(),
            norm.as_str()
        )));
    }
    Ok(NecessityReport {
        criterion,
        g_norm: norm,
        consistent: criterion == norm,
    })
}

/// One point of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub d: usize,
    pub alpha: f64,
    pub h: f64,
    pub beta: f64,
}

impl GridPoint {
    pub fn noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::probe(self.h, self.beta, self.d)
    }

    pub fn levy(&self) -> Result<LevyExponent> {
        LevyExponent::new(LevyKind::IsotropicStable { alpha: self.alpha }, self.d)
    }
}

/// 200 points: `d ∈ {1,2}`, four values of `α`, five of `H`, and five `β` per triple placed
/// at least 0.15 away from both band edges.
pub fn standard_grid() -> Vec<GridPoint> {
    let mut points = Vec::with_capacity(200);
    for d in [1usize, 2] {
        for alpha in [0.5, 1.0, 1.5, 2.0] {
            for h in [0.55, 0.65, 0.75, 0.85, 0.95] {
                let df = d as f64;
                let lower = df - 2.0 * alpha * h;
                let mid = 0.5 * (lower + df);
                for beta in [lower - 0.5, lower - 0.15, lower + 0.15, mid, df + 0.3] {
                    points.push(GridPoint { d, alpha, h, beta });
                }
            }
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stable(alpha: f64, d: usize) -> LevyExponent {
        LevyExponent::new(LevyKind::IsotropicStable { alpha }, d).unwrap()
    }

    // See tests/oracle/derive_values.py.
    const CRITERION_D1_A2_H075_B05: f64 = 4.188790204786391;
    const LEMMA_X05_H075: f64 = 1.4747668058311369;
    const LEMMA_X01_H06: f64 = 0.34281284374797368;

    #[test]
    fn criterion_matches_closed_form() {
        let noise = NoiseSpec::new(0.75, 0.5, 1).unwrap();
        let r =
            criterion_integral(&noise, &stable(2.0, 1), 1.0, &QuadratureBudget::default()).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.value, CRITERION_D1_A2_H075_B05, max_relative = 1e-8);
    }

    #[test]
    fn criterion_divergences() {
        let budget = QuadratureBudget::default();
        let tail = NoiseSpec::probe(0.75, -0.6, 1).unwrap();
        assert!(matches!(
            criterion_integral(&tail, &stable(1.0, 1), 1.0, &budget),
            Err(Error::DivergentTail { .. })
        ));
        let origin = NoiseSpec::probe(0.75, 1.2, 1).unwrap();
        assert!(matches!(
            criterion_integral(&origin, &stable(1.0, 1), 1.0, &budget),
            Err(Error::DivergentAtOrigin { .. })
        ));
    }

    #[test]
    fn band_examples() {
        let v = analytic_band(&NoiseSpec::new(0.75, 0.5, 1).unwrap(), &stable(2.0, 1)).unwrap();
        assert_eq!(v, AnalyticVerdict::Exists);
        let v = analytic_band(&NoiseSpec::probe(0.75, 1.0, 1).unwrap(), &stable(1.0, 1)).unwrap();
        assert_eq!(v, AnalyticVerdict::Boundary);
        let v = analytic_band(&NoiseSpec::new(0.6, 0.5, 2).unwrap(), &stable(1.0, 2)).unwrap();
        assert_eq!(v, AnalyticVerdict::NotExists);
    }

    #[test]
    fn lemma_values() {
        let budget = QuadratureBudget::default();
        assert_relative_eq!(
            lemma_integral(0.5, 0.75, &budget).unwrap().value,
            LEMMA_X05_H075,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            lemma_integral(0.1, 0.6, &budget).unwrap().value,
            LEMMA_X01_H06,
            max_relative = 1e-8
        );
        assert_eq!(lemma_integral(0.0, 0.75, &budget).unwrap().value, 0.0);
        assert!(lemma_integral(1.0, 0.75, &budget).is_err());
    }

    #[test]
    fn rescaling_identity_holds() {
        let noise = NoiseSpec::new(0.75, 0.5, 1).unwrap();
        let err = tau_rescale_check(
            &noise,
            &stable(1.5, 1),
            1.0,
            &[2.0],
            &QuadratureBudget::default(),
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
        assert!(matches!(
            tau_rescale_check(
                &noise,
                &stable(1.5, 1),
                1.0,
                &[0.0],
                &QuadratureBudget::default()
            ),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn tau_bound_branches() {
        let at_one = inner_tau_bound(1.0, 0.75).unwrap();
        assert_eq!(at_one.branch, TauBranch::LowFrequency);
        assert!(
            at_one.branch_bound <= 2.0 * at_one.combined_bound
                && at_one.combined_bound <= 2.0 * at_one.branch_bound
        );
        assert_eq!(
            inner_tau_bound(10.0, 0.75).unwrap().branch,
            TauBranch::HighFrequency
        );
        assert_eq!(
            inner_tau_bound(0.1, 0.75).unwrap().branch,
            TauBranch::LowFrequency
        );
    }

    #[test]
    fn g_norm_is_finite_and_shrinks_with_t() {
        let noise = NoiseSpec::new(0.75, 0.5, 1).unwrap();
        let levy = stable(2.0, 1);
        let budget = QuadratureBudget::default().with_rel_tol(1e-6);
        let values: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|t| g_norm(&noise, &levy, *t, &budget).unwrap().value)
            .collect();
        assert!(values.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(values[0] > values[1] && values[1] > values[2]);
    }

    #[test]
    fn degenerate_psi_rejected() {
        let zero = LevyExponent::new(
            LevyKind::Custom {
                psi: std::sync::Arc::new(|_: &[f64]| 0.0),
                alpha_index: None,
            },
            1,
        )
        .unwrap();
        let noise = NoiseSpec::new(0.75, 0.5, 1).unwrap();
        assert!(matches!(
            g_norm(&noise, &zero, 1.0, &QuadratureBudget::default()),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn grid_has_two_hundred_points() {
        assert_eq!(standard_grid().len(), 200);
    }
}
