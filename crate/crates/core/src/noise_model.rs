//! Noise parameters, derived regularity exponents and the anisotropic normalizing functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::LevyExponent;
use crate::special::c_h;

/// Hurst index `H`, Riesz exponent `beta` of the spatial spectral measure `|ξ|^{-β} dξ`, and
/// the spatial dimension, together with the derived constants `q_H`, `c_H`, `K_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub h: f64,
    pub beta: f64,
    pub d: usize,
    pub q_h: f64,
    pub c_h: f64,
    pub k_h: f64,
}

impl NoiseSpec {
    pub fn new(h: f64, beta: f64, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Validation("d must be a positive integer".into()));
        }
        if !(beta > 0.0 && beta < d as f64) {
            return Err(Error::Validation(format!("beta must lie in (0,{d})")));
        }
        Self::probe(h, beta, d)
    }

    /// Like [`NoiseSpec::new`] but accepts any finite `beta`; used to probe the existence
    /// criterion outside the Riesz range.
    pub fn probe(h: f64, beta: f64, d: usize) -> Result<Self> {
        if !(h > 0.5 && h < 1.0) {
            return Err(Error::Validation("H must lie in (1/2,1)".into()));
        }
        if !beta.is_finite() {
            return Err(Error::Validation("beta must be finite".into()));
        }
        if d == 0 {
            return Err(Error::Validation("d must be a positive integer".into()));
        }
        let q_h = h * (2.0 * h - 1.0);
        let c_h = c_h(h);
        Ok(Self {
            h,
            beta,
            d,
            q_h,
            c_h,
            k_h: q_h * c_h,
        })
    }
}

/// Time and space Hölder exponents and the anisotropy dimension `Q = 1/H1 + d/H2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub h1: f64,
    pub h2: f64,
    pub q: f64,
    pub alpha: f64,
}

impl Exponents {
    pub fn from_parts(h: f64, beta: f64, d: usize, alpha: f64) -> Result<Self> {
        let h1 = h - (d as f64 - beta) / (2.0 * alpha);
        if !(h1 > 0.0) {
            return Err(Error::NonPositiveH1 { h1 });
        }
        if h1 >= 1.0 {
            return Err(Error::Validation(format!("H1 = {h1} must be below 1")));
        }
        let h2 = alpha * h1;
        Ok(Self {
            h1,
            h2,
            q: 1.0 / h1 + d as f64 / h2,
            alpha,
        })
    }

    /// Whether `H2` sits on the logarithmic branch `H2 = 1` (up to rounding).
    pub fn h2_is_one(&self) -> bool {
        (self.h2 - 1.0).abs() < 1e-9
    }

    /// `ρ̃ = |Δt|^{H1} + |Δx|^{H2}`.
    pub fn rho_tilde(&self, dt: f64, dx: f64) -> f64 {
        dt.abs().powf(self.h1) + dx.abs().powf(self.h2)
    }

    /// `|Δt|^{2 H1} + σ(|Δx|)`, the upper companion of the variogram.
    pub fn upper_companion(&self, dt: f64, dx: f64) -> Result<f64> {
        Ok(dt.abs().powf(2.0 * self.h1) + sigma_fn(dx.abs(), self.h2)?)
    }
}

/// `H1 = H - (d - β)/(2α)` and `H2 = α H1`.
pub fn derive_exponents(noise: &NoiseSpec, levy: &LevyExponent) -> Result<Exponents> {
    let alpha = levy.alpha_index().ok_or_else(|| {
        Error::PreconditionFailed("Lévy exponent has no stable-like index".into())
    })?;
    if noise.beta >= noise.d as f64 {
        return Err(Error::Validation(format!(
            "beta must be below d = {}",
            noise.d
        )));
    }
    Exponents::from_parts(noise.h, noise.beta, noise.d, alpha)
}

/// Spatial modulus `σ(r)`: `r^{2 H2}` below one, `r^2 |log r|` at one (for `r < 1`), `r^2` above.
pub fn sigma_fn(r: f64, h2: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("σ needs r >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    if (h2 - 1.0).abs() < 1e-9 {
        if r >= 1.0 {
            return Err(Error::Domain(
                "σ with H2 = 1 is only defined for r < 1".into(),
            ));
        }
        return Ok(r * r * r.ln().abs());
    }
    if h2 < 1.0 {
        Ok(r.powf(2.0 * h2))
    } else {
        Ok(r * r)
    }
}

/// `φ(ε) = ε_1^{2 H1} + Σ_{j>=2} σ(ε_j)`.
pub fn phi_fn(eps: &[f64], exps: &Exponents) -> Result<f64> {
    let Some((first, rest)) = eps.split_first() else {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    };
    if eps.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::Domain("φ needs nonnegative components".into()));
    }
    let mut total = first.powf(2.0 * exps.h1);
    for e in rest {
        total += sigma_fn(*e, exps.h2)?;
    }
    Ok(total)
}

/// `ρ(u, t) = Σ_j |u_j - t_j|^{γ_j}`.
pub fn rho_metric(u: &[f64], t: &[f64], gamma: &[f64]) -> Result<f64> {
    if u.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: gamma.len(),
            got: u.len(),
        });
    }
    if t.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: gamma.len(),
            got: t.len(),
        });
    }
    Ok(u.iter()
        .zip(t)
        .zip(gamma)
        .map(|((a, b), g)| (a - b).abs().powf(*g))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    RhoFull,
    RhoTilde,
}

/// The ρ-metric of a coordinate-wise scaling vector. `RhoTilde` treats all coordinates after
/// the first as one Euclidean block sharing the exponent `gamma[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicMetric {
    pub gamma: Vec<f64>,
    pub kind: MetricKind,
}

impl AnisotropicMetric {
    pub fn new(gamma: Vec<f64>, kind: MetricKind) -> Result<Self> {
        if gamma.is_empty() || gamma.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
            return Err(Error::Validation(
                "metric exponents must lie in (0,1)".into(),
            ));
        }
        if kind == MetricKind::RhoTilde && gamma.len() != 2 {
            return Err(Error::Validation(
                "rho_tilde takes a time and a space exponent".into(),
            ));
        }
        Ok(Self { gamma, kind })
    }

    pub fn distance(&self, u: &[f64], t: &[f64]) -> Result<f64> {
        match self.kind {
            MetricKind::RhoFull => rho_metric(u, t, &self.gamma),
            MetricKind::RhoTilde => {
                if u.len() != t.len() || u.is_empty() {
                    return Err(Error::DimensionMismatch {
                        expected: u.len(),
                        got: t.len(),
                    });
                }
                let dx: f64 = u[1..]
                    .iter()
                    .zip(&t[1..])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                Ok((u[0] - t[0]).abs().powf(self.gamma[0]) + dx.powf(self.gamma[1]))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{LevyExponent, LevyKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn stable(alpha: f64, d: usize) -> LevyExponent {
        LevyExponent::new(LevyKind::IsotropicStable { alpha }, d).unwrap()
    }

    #[test]
    fn constants_are_consistent() {
        let n = NoiseSpec::new(0.75, 0.6, 1).unwrap();
        assert_relative_eq!(n.q_h, 0.375, epsilon = 1e-15);
        assert_eq!(n.k_h, n.q_h * n.c_h);
        assert!(n.c_h > 0.0);
        assert!(NoiseSpec::new(1.2, 0.5, 1).is_err());
        assert!(NoiseSpec::new(0.75, 1.0, 1).is_err());
    }

    #[test]
    fn exponent_presets() {
        let n = NoiseSpec::new(0.75, 0.6, 1).unwrap();
        let e = derive_exponents(&n, &stable(1.0, 1)).unwrap();
        assert_relative_eq!(e.h1, 0.55, epsilon = 1e-14);
        assert_relative_eq!(e.h2, 0.55, epsilon = 1e-14);
        assert_relative_eq!(e.q, 2.0 / 0.55, epsilon = 1e-12);
        let e = derive_exponents(&n, &stable(2.0, 1)).unwrap();
        assert_relative_eq!(e.h1, 0.65, epsilon = 1e-14);
        assert_relative_eq!(e.h2, 1.3, epsilon = 1e-14);
        let n = NoiseSpec::new(0.75, 0.75, 1).unwrap();
        let e = derive_exponents(&n, &stable(1.5, 1)).unwrap();
        assert!(e.h2_is_one());
    }

    #[test]
    fn non_positive_h1_is_rejected() {
        let n = NoiseSpec::new(0.6, 0.5, 2).unwrap();
        let err = derive_exponents(&n, &stable(0.5, 2)).unwrap_err();
        assert!(matches!(err, Error::NonPositiveH1 { .. }));
    }

    #[test]
    fn sigma_branches() {
        assert_relative_eq!(
            sigma_fn(0.5, 0.35).unwrap(),
            0.5f64.powf(0.7),
            epsilon = 1e-15
        );
        assert_eq!(sigma_fn(0.0, 0.7).unwrap(), 0.0);
        assert_eq!(sigma_fn(0.5, 1.1).unwrap(), 0.25);
        assert_relative_eq!(
            sigma_fn(0.5, 1.0).unwrap(),
            0.25 * 2f64.ln(),
            epsilon = 1e-15
        );
        assert!(sigma_fn(1.5, 1.0).is_err());
    }

    #[test]
    fn phi_and_rho() {
        let e = Exponents {
            h1: 0.35,
            h2: 0.35,
            q: 0.0,
            alpha: 1.0,
        };
        assert_eq!(phi_fn(&[0.0, 0.0], &e).unwrap(), 0.0);
        assert_relative_eq!(
            phi_fn(&[0.1, 0.1], &e).unwrap(),
            2.0 * 0.1f64.powf(0.7),
            epsilon = 1e-15
        );
        let e = Exponents {
            h1: 0.55,
            h2: 1.1,
            q: 0.0,
            alpha: 2.0,
        };
        assert_relative_eq!(
            phi_fn(&[0.2, 0.3], &e).unwrap(),
            0.2f64.powf(1.1) + 0.09,
            epsilon = 1e-15
        );
        assert_eq!(
            rho_metric(&[1.0, 1.0], &[0.0, 0.0], &[0.5, 0.5]).unwrap(),
            2.0
        );
        assert_eq!(
            rho_metric(&[0.3, 0.2], &[0.3, 0.2], &[0.5, 0.5]).unwrap(),
            0.0
        );
        assert_eq!(
            rho_metric(&[0.25, 0.0], &[0.0, 0.0], &[0.5, 0.7]).unwrap(),
            0.5
        );
        assert!(matches!(
            rho_metric(&[1.0], &[0.0, 0.0], &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn homogeneity_of_exponents(h in 0.51f64..0.99, alpha in 0.1f64..2.0, d in 1usize..4, frac in 0.01f64..0.99) {
            let beta = frac * d as f64;
            if let Ok(e) = Exponents::from_parts(h, beta, d, alpha) {
                let lhs = 2.0 * alpha * (h - e.h1);
                prop_assert!((lhs - (d as f64 - beta)).abs() <= 1e-12 * d as f64);
                prop_assert!((e.h2 - alpha * e.h1).abs() <= 1e-15);
            }
        }

        #[test]
        fn quasi_triangle(u in prop::array::uniform3(-1.0f64..1.0), t in prop::array::uniform3(-1.0f64..1.0),
                          w in prop::array::uniform3(-1.0f64..1.0), g in prop::array::uniform3(0.05f64..0.95)) {
            let gmin = g.iter().cloned().fold(1.0, f64::min);
            let lhs = rho_metric(&u, &w, &g).unwrap();
            let rhs = 2f64.powf(1.0 - gmin) * (rho_metric(&u, &t, &g).unwrap() + rho_metric(&t, &w, &g).unwrap());
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }

        #[test]
        fn sigma_is_monotone(a in 0.0f64..0.999, b in 0.0f64..0.999, h2 in prop::sample::select(vec![0.3, 0.7, 1.0, 1.3])) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            // r^2 |log r| increases only below e^{-1/2}
            prop_assume!(h2 != 1.0 || hi < (-0.5f64).exp());
            prop_assert!(sigma_fn(lo, h2).unwrap() <= sigma_fn(hi, h2).unwrap());
        }
    }
}
