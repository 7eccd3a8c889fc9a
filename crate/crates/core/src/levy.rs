//! Symmetric Lévy characteristic exponents `Ψ` and their lower index.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{
    integrate_interval, integrate_oscillatory_tail, sphere_area, QuadratureBudget,
};
use crate::special::{one_minus_spherical_mean, spherical_mean};

pub type PsiFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum LevyKind {
    IsotropicStable {
        alpha: f64,
    },
    /// `(|ξ|^2 + m^{2/α})^{α/2} - m`.
    Relativistic {
        alpha: f64,
        mass: f64,
    },
    /// `|ξ|^α + |ξ|^γ` with `γ < α`.
    StableSum {
        alpha: f64,
        gamma: f64,
    },
    /// `c ∫_{|y|<1} (1 - cos⟨ξ,y⟩) |y|^{-d-α} dy`.
    TruncatedStable {
        alpha: f64,
        c: f64,
    },
    Custom {
        psi: PsiFn,
        alpha_index: Option<f64>,
    },
}

impl fmt::Debug for LevyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::IsotropicStable { alpha } => write!(f, "IsotropicStable {{ alpha: {alpha} }}"),
            Self::Relativistic { alpha, mass } => {
                write!(f, "Relativistic {{ alpha: {alpha}, mass: {mass} }}")
            }
            Self::StableSum { alpha, gamma } => {
                write!(f, "StableSum {{ alpha: {alpha}, gamma: {gamma} }}")
            }
            Self::TruncatedStable { alpha, c } => {
                write!(f, "TruncatedStable {{ alpha: {alpha}, c: {c} }}")
            }
            Self::Custom { alpha_index, .. } => {
                write!(f, "Custom {{ alpha_index: {alpha_index:?} }}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LowerIndex {
    Known(f64),
    Unknown,
}

#[derive(Clone)]
pub struct LevyExponent {
    pub kind: LevyKind,
    pub d: usize,
    pub lower_index: LowerIndex,
    cache: Arc<Mutex<HashMap<u64, f64>>>,
    sandwich: Arc<OnceLock<(f64, f64)>>,
}

impl fmt::Debug for LevyExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyExponent")
            .field("kind", &self.kind)
            .field("d", &self.d)
            .field("lower_index", &self.lower_index)
            .finish()
    }
}

fn check_alpha(alpha: f64, upper_inclusive: bool) -> Result<()> {
    let ok = alpha > 0.0 && (alpha < 2.0 || (upper_inclusive && alpha == 2.0));
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "alpha = {alpha} outside the admissible range"
        )))
    }
}

/// `∫_{R^d} (1 - cos⟨e,y⟩) |y|^{-d-α} dy` for a unit vector `e`.
pub fn full_stable_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    PI.powf(df / 2.0) * gamma(-alpha / 2.0).abs() / (2f64.powf(alpha) * gamma((df + alpha) / 2.0))
}

impl LevyExponent {
    pub fn new(kind: LevyKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Validation("d must be a positive integer".into()));
        }
        let lower_index = match &kind {
            LevyKind::IsotropicStable { alpha } => {
                check_alpha(*alpha, true)?;
                LowerIndex::Known(*alpha)
            }
            LevyKind::Relativistic { alpha, mass } => {
                check_alpha(*alpha, true)?;
                if !(*mass > 0.0) {
                    return Err(Error::Validation("mass must be positive".into()));
                }
                LowerIndex::Known(*alpha)
            }
            LevyKind::StableSum { alpha, gamma } => {
                check_alpha(*alpha, true)?;
                if !(*gamma > 0.0 && gamma < alpha) {
                    return Err(Error::Validation(
                        "stable-sum needs 0 < gamma < alpha".into(),
                    ));
                }
                LowerIndex::Known(*alpha)
            }
            LevyKind::TruncatedStable { alpha, c } => {
                check_alpha(*alpha, false)?;
                if !(*c > 0.0) {
                    return Err(Error::Validation(
                        "truncation constant c must be positive".into(),
                    ));
                }
                if d > 3 {
                    return Err(Error::Validation("truncated-stable supports d <= 3".into()));
                }
                LowerIndex::Known(*alpha)
            }
            LevyKind::Custom { alpha_index, .. } => {
                if let Some(a) = alpha_index {
                    check_alpha(*a, true)?;
                }
                LowerIndex::Unknown
            }
        };
        Ok(Self {
            kind,
            d,
            lower_index,
            cache: Arc::new(Mutex::new(HashMap::new())),
            sandwich: Arc::new(OnceLock::new()),
        })
    }

    /// The stable-like index `α` with `Ψ(ξ) ≍ |ξ|^α` at infinity, when known.
    pub fn alpha_index(&self) -> Option<f64> {
        match &self.kind {
            LevyKind::IsotropicStable { alpha }
            | LevyKind::Relativistic { alpha, .. }
            | LevyKind::StableSum { alpha, .. }
            | LevyKind::TruncatedStable { alpha, .. } => Some(*alpha),
            LevyKind::Custom { alpha_index, .. } => *alpha_index,
        }
    }

    /// True when `Ψ(ξ) = |ξ|^α` exactly, so that exact scaling identities hold.
    pub fn is_exact_power(&self) -> bool {
        matches!(self.kind, LevyKind::IsotropicStable { .. })
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self.kind, LevyKind::Custom { .. })
    }

    pub fn psi(&self, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: xi.len(),
            });
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("ξ must be finite".into()));
        }
        if let LevyKind::Custom { psi, .. } = &self.kind {
            return Ok(psi(xi));
        }
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.psi_radial(r)
    }

    /// `Ψ` along the first coordinate axis at distance `r`; equal to `Ψ(ξ)` for `|ξ| = r` for
    /// every catalog kind.
    pub fn psi_radial(&self, r: f64) -> Result<f64> {
        let r = r.abs();
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(match &self.kind {
            LevyKind::IsotropicStable { alpha } => r.powf(*alpha),
            LevyKind::Relativistic { alpha, mass } => {
                let m2 = mass.powf(2.0 / alpha);
                // (r^2 + m2)^{α/2} - m written to avoid cancellation at small r.
                let base = m2.powf(alpha / 2.0);
                base * ((alpha / 2.0) * (r * r / m2).ln_1p()).exp_m1() + (base - mass)
            }
            LevyKind::StableSum { alpha, gamma } => r.powf(*alpha) + r.powf(*gamma),
            LevyKind::TruncatedStable { alpha, c } => {
                let key = r.to_bits();
                if let Some(v) = self.cache.lock().unwrap().get(&key) {
                    return Ok(*v);
                }
                let v = c * truncated_profile(self.d, *alpha, r)?;
                self.cache.lock().unwrap().insert(key, v);
                v
            }
            LevyKind::Custom { psi, .. } => {
                let mut xi = vec![0.0; self.d];
                xi[0] = r;
                psi(&xi)
            }
        })
    }

    /// Constants `c1 <= Ψ(ξ)/|ξ|^α <= c2` measured on a logarithmic scan of `|ξ|` over `[1, 10^6]`.
    pub fn sandwich_constants(&self) -> Result<(f64, f64)> {
        if let Some(v) = self.sandwich.get() {
            return Ok(*v);
        }
        let alpha = self.alpha_index().ok_or_else(|| {
            Error::PreconditionFailed("sandwich constants need a stable-like index".into())
        })?;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for k in 0..=120 {
            let r = 10f64.powf(k as f64 * 0.05);
            let ratio = self.psi_radial(r)? / r.powf(alpha);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let _ = self.sandwich.set((lo, hi));
        Ok((lo, hi))
    }

    /// Limit of `Ψ(ξ)/|ξ|^α` as `|ξ| → ∞`, where known in closed form.
    pub fn asymptotic_constant(&self) -> Option<f64> {
        match &self.kind {
            LevyKind::IsotropicStable { .. } | LevyKind::Relativistic { .. } => Some(1.0),
            LevyKind::TruncatedStable { alpha, c } => {
                Some(c * full_stable_constant(self.d, *alpha))
            }
            _ => None,
        }
    }
}

/// `∫_{|y|<1} (1 - cos⟨ξ,y⟩) |y|^{-d-α} dy` for `|ξ| = r`, reduced to the radial profile
/// `S_{d-1} ∫_0^1 ρ^{-1-α} (1 - m_d(rρ)) dρ` with `m_d` the spherical mean of a plane wave.
fn truncated_profile(d: usize, alpha: f64, r: f64) -> Result<f64> {
    let budget = QuadratureBudget::default().with_rel_tol(1e-11);
    let area = sphere_area(d);
    if r <= 50.0 {
        // ρ = s^{1/(2-α)} removes the ρ^{1-α} behaviour at the origin.
        let p = 2.0 - alpha;
        let g = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let rho = s.powf(1.0 / p);
            one_minus_spherical_mean(d, r * rho) / (rho * rho) / p
        };
        let res = integrate_interval(&g, 0.0, 1.0, &budget);
        if !res.converged {
            return Err(Error::QuadratureFailure {
                what: "truncated-stable exponent",
                detail: format!(
                    "value {:e}, error estimate {:e}",
                    res.value, res.error_estimate
                ),
            });
        }
        return Ok(area * res.value);
    }
    // r^α ∫_0^r x^{-1-α}(1 - m(x)) dx written as the full-space constant minus its tail.
    let full = full_stable_constant(d, alpha) / area;
    let tail = integrate_oscillatory_tail(
        &|x: f64| x.powf(-1.0 - alpha) * spherical_mean(d, x),
        r,
        PI,
        &budget,
        r.powf(-1.0 - alpha),
    );
    if !tail.converged && tail.error_estimate > 1e-9 * full {
        return Err(Error::QuadratureFailure {
            what: "truncated-stable exponent tail",
            detail: format!(
                "value {:e}, error estimate {:e}",
                tail.value, tail.error_estimate
            ),
        });
    }
    Ok(area * (r.powf(alpha) * (full + tail.value) - 1.0 / alpha))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum LowerIndexVerdict {
    Divergent,
    NotDivergent,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerIndexReport {
    pub gamma_test: f64,
    /// `(R, min_{|ξ|=R} Ψ(ξ)/R^γ)`.
    pub table: Vec<(f64, f64)>,
    /// Log-log slopes between consecutive radii.
    pub slopes: Vec<f64>,
    pub verdict: LowerIndexVerdict,
}

fn directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e.clone());
        e[i] = -1.0;
        dirs.push(e);
    }
    if d > 1 {
        dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
    }
    dirs
}

/// Tabulates `min_{|ξ|=R} Ψ(ξ)/R^γ` over the radii. The verdict is `Divergent` when the ratio
/// grows at every step and its log-log slope over the last two steps is at least 0.05;
/// `NotDivergent` when those slopes are at most 0.01.
pub fn verify_lower_index(
    levy: &LevyExponent,
    gamma_test: f64,
    radii: &[f64],
) -> Result<LowerIndexReport> {
    if !(gamma_test >= 0.0) {
        return Err(Error::Validation("gamma_test must be nonnegative".into()));
    }
    let dirs = directions(levy.d);
    let mut table = Vec::with_capacity(radii.len());
    for &r in radii {
        let min = if levy.is_radial() {
            levy.psi_radial(r)?
        } else {
            let mut m = f64::INFINITY;
            for dir in &dirs {
                let xi: Vec<f64> = dir.iter().map(|v| v * r).collect();
                m = m.min(levy.psi(&xi)?);
            }
            m
        };
        table.push((r, min / r.powf(gamma_test)));
    }
    let slopes: Vec<f64> = table
        .windows(2)
        .map(|w| (w[1].1 / w[0].1).log10() / (w[1].0 / w[0].0).log10())
        .collect();
    let verdict = if slopes.len() < 2 || table.iter().any(|(_, v)| !(v.is_finite() && *v > 0.0)) {
        LowerIndexVerdict::Inconclusive
    } else {
        let last_two = &slopes[slopes.len() - 2..];
        if slopes.iter().all(|s| *s > 0.0) && last_two.iter().all(|s| *s >= 0.05) {
            LowerIndexVerdict::Divergent
        } else if last_two.iter().all(|s| *s <= 0.01) {
            LowerIndexVerdict::NotDivergent
        } else {
            LowerIndexVerdict::Inconclusive
        }
    };
    Ok(LowerIndexReport {
        gamma_test,
        table,
        slopes,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn catalog(d: usize) -> Vec<LevyExponent> {
        vec![
            LevyExponent::new(LevyKind::IsotropicStable { alpha: 1.5 }, d).unwrap(),
            LevyExponent::new(
                LevyKind::Relativistic {
                    alpha: 1.2,
                    mass: 0.7,
                },
                d,
            )
            .unwrap(),
            LevyExponent::new(
                LevyKind::StableSum {
                    alpha: 1.5,
                    gamma: 0.5,
                },
                d,
            )
            .unwrap(),
            LevyExponent::new(LevyKind::TruncatedStable { alpha: 1.0, c: 1.0 }, d).unwrap(),
        ]
    }

    #[test]
    fn closed_form_values() {
        let iso = LevyExponent::new(LevyKind::IsotropicStable { alpha: 2.0 }, 2).unwrap();
        assert_relative_eq!(iso.psi(&[3.0, 4.0]).unwrap(), 25.0, epsilon = 1e-12);
        let sum = LevyExponent::new(
            LevyKind::StableSum {
                alpha: 1.5,
                gamma: 0.5,
            },
            1,
        )
        .unwrap();
        assert_relative_eq!(sum.psi(&[4.0]).unwrap(), 10.0, epsilon = 1e-12);
        for d in 1..=3 {
            for l in catalog(d) {
                assert_eq!(l.psi(&vec![0.0; d]).unwrap(), 0.0);
            }
        }
        let rel = LevyExponent::new(
            LevyKind::Relativistic {
                alpha: 1.0,
                mass: 2.0,
            },
            1,
        )
        .unwrap();
        assert_relative_eq!(
            rel.psi(&[1.5]).unwrap(),
            (1.5f64 * 1.5 + 4.0).sqrt() - 2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn truncated_matches_reference_quadrature() {
        // 2 ∫_0^1 (1 - cos 10y)/y^2 dy, independent high-precision value.
        let t = LevyExponent::new(LevyKind::TruncatedStable { alpha: 1.0, c: 1.0 }, 1).unwrap();
        assert_relative_eq!(
            t.psi(&[10.0]).unwrap(),
            TRUNCATED_ALPHA1_XI10,
            max_relative = 1e-9
        );
        let t = LevyExponent::new(LevyKind::TruncatedStable { alpha: 1.5, c: 1.0 }, 1).unwrap();
        assert_relative_eq!(
            t.psi(&[3.0]).unwrap(),
            TRUNCATED_ALPHA15_XI3,
            max_relative = 1e-9
        );
    }

    const TRUNCATED_ALPHA1_XI10: f64 = 29.488808826224576;
    const TRUNCATED_ALPHA15_XI3: f64 = 15.703557273021581;

    #[test]
    fn truncated_routes_agree_at_switch() {
        for d in 1..=3 {
            for &alpha in &[0.5, 1.0, 1.7] {
                let below = truncated_profile(d, alpha, 50.0 - 1e-9).unwrap();
                let above = truncated_profile(d, alpha, 50.0 + 1e-9).unwrap();
                assert_relative_eq!(below, above, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn truncated_approaches_full_stable() {
        for d in 1..=3 {
            let t = LevyExponent::new(LevyKind::TruncatedStable { alpha: 1.0, c: 1.0 }, d).unwrap();
            let ratio = t.psi_radial(1e3).unwrap() / 1e3 / t.asymptotic_constant().unwrap();
            assert!((ratio - 1.0).abs() < 0.05, "d={d}: {ratio}");
        }
    }

    #[test]
    fn sandwich_holds_on_scan() {
        for d in 1..=2 {
            for l in catalog(d) {
                let (c1, c2) = l.sandwich_constants().unwrap();
                let alpha = l.alpha_index().unwrap();
                assert!(c1 > 0.0 && c2 < f64::INFINITY && c1 <= c2);
                for k in 0..=60 {
                    let r = 10f64.powf(0.1 * k as f64 + 0.037);
                    let q = l.psi_radial(r).unwrap() / r.powf(alpha);
                    assert!(
                        q >= c1 * (1.0 - 1e-3) && q <= c2 * (1.0 + 1e-3),
                        "{:?} r={r}",
                        l.kind
                    );
                }
            }
        }
    }

    #[test]
    fn lower_index_verdicts() {
        let radii = [10.0, 100.0, 1e3, 1e4];
        let iso = LevyExponent::new(LevyKind::IsotropicStable { alpha: 1.5 }, 1).unwrap();
        assert_eq!(
            verify_lower_index(&iso, 1.0, &radii).unwrap().verdict,
            LowerIndexVerdict::Divergent
        );
        let flat = verify_lower_index(&iso, 1.5, &radii).unwrap();
        assert_eq!(flat.verdict, LowerIndexVerdict::NotDivergent);
        assert!(flat.table.iter().all(|(_, v)| (v - 1.0).abs() < 1e-12));
        let sum = LevyExponent::new(
            LevyKind::StableSum {
                alpha: 1.5,
                gamma: 0.5,
            },
            1,
        )
        .unwrap();
        assert_eq!(
            verify_lower_index(&sum, 1.4, &radii).unwrap().verdict,
            LowerIndexVerdict::Divergent
        );
    }

    #[test]
    fn custom_kind_has_unknown_lower_index() {
        let c = LevyExponent::new(
            LevyKind::Custom {
                psi: Arc::new(|xi: &[f64]| xi[0].abs()),
                alpha_index: None,
            },
            1,
        )
        .unwrap();
        assert_eq!(c.lower_index, LowerIndex::Unknown);
        assert!(c.alpha_index().is_none());
    }

    proptest! {
        #[test]
        fn symmetry_and_nonnegativity(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            for l in catalog(2) {
                let a = l.psi(&[x, y]).unwrap();
                let b = l.psi(&[-x, -y]).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
