//! Run configuration: a flat TOML file, an optional preset, and command-line overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use fracheat_core::covariance::{SpectralDensity, Variogram};
use fracheat_core::{derive_exponents, Exponents, LevyExponent, LevyKind, NoiseSpec, QuadratureBudget};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Keys accepted in a config file. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub preset: Option<String>,
    #[serde(rename = "H")]
    pub h: Option<f64>,
    pub beta: Option<f64>,
    pub d: Option<usize>,
    pub levy: Option<String>,
    pub alpha: Option<f64>,
    pub mass: Option<f64>,
    pub gamma: Option<f64>,
    pub c: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub domain: Option<f64>,
    pub xi_cutoff: Option<f64>,
    pub seed: Option<u64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub mc_samples: Option<usize>,
    pub output_dir: Option<String>,
    pub format: Option<String>,
}

impl RawConfig {
    /// Later values win: `other` overrides `self` key by key.
    pub fn merged(self, other: RawConfig) -> RawConfig {
        RawConfig {
            preset: other.preset.or(self.preset),
            h: other.h.or(self.h),
            beta: other.beta.or(self.beta),
            d: other.d.or(self.d),
            levy: other.levy.or(self.levy),
            alpha: other.alpha.or(self.alpha),
            mass: other.mass.or(self.mass),
            gamma: other.gamma.or(self.gamma),
            c: other.c.or(self.c),
            t: other.t.or(self.t),
            domain: other.domain.or(self.domain),
            xi_cutoff: other.xi_cutoff.or(self.xi_cutoff),
            seed: other.seed.or(self.seed),
            rel_tol: other.rel_tol.or(self.rel_tol),
            abs_tol: other.abs_tol.or(self.abs_tol),
            mc_samples: other.mc_samples.or(self.mc_samples),
            output_dir: other.output_dir.or(self.output_dir),
            format: other.format.or(self.format),
        }
    }
}

pub const PRESETS: [&str; 3] = ["rough1d", "boundary1d", "smooth1d"];

/// Preset parameters. `boundary1d` sits on `H2 = 1` and `smooth1d` has `H2 = 1.3`.
pub fn preset(name: &str) -> Result<RawConfig, CliError> {
    let (alpha, h, beta) = match name {
        "rough1d" => (1.0, 0.75, 0.6),
        "boundary1d" => (1.5, 0.75, 0.75),
        "smooth1d" => (2.0, 0.75, 0.6),
        _ => {
            return Err(CliError::Validation {
                key: "preset".into(),
                message: format!("unknown preset `{name}`; expected one of {}", PRESETS.join(", ")),
            })
        }
    };
    Ok(RawConfig {
        preset: Some(name.into()),
        h: Some(h),
        beta: Some(beta),
        d: Some(1),
        levy: Some("stable".into()),
        alpha: Some(alpha),
        ..RawConfig::default()
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_config(text: &str) -> Result<RawConfig, CliError> {
    toml::from_str::<RawConfig>(text).map_err(|e| CliError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })
}

pub fn load_config(path: &Path) -> Result<RawConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevySpec {
    pub kind: String,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub mc_samples: usize,
}

/// A validated configuration. Everything here except the output location enters the manifest
/// hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(rename = "H")]
    pub h: f64,
    pub beta: f64,
    pub d: usize,
    pub levy: LevySpec,
    #[serde(rename = "T")]
    pub t: f64,
    pub domain: f64,
    pub xi_cutoff: f64,
    pub seed: u64,
    pub budget: BudgetSpec,
    pub format: Format,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Validation { key: key.into(), message: message.into() }
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, format!("{key} must be a positive number")))
    }
}

impl RunConfig {
    /// Resolves a preset (if any) under the explicit keys and validates the result.
    pub fn resolve(raw: RawConfig) -> Result<Self, CliError> {
        let raw = match &raw.preset {
            Some(name) => preset(name)?.merged(raw),
            None => raw,
        };
        let h = raw.h.ok_or_else(|| invalid("H", "H is required"))?;
        if !(h > 0.5 && h < 1.0) {
            return Err(invalid("H", "H must lie in (1/2,1)"));
        }
        let d = raw.d.ok_or_else(|| invalid("d", "d is required"))?;
        if d == 0 {
            return Err(invalid("d", "d must be a positive integer"));
        }
        let beta = raw.beta.ok_or_else(|| invalid("beta", "beta is required"))?;
        if !(beta > 0.0 && beta < d as f64) {
            return Err(invalid("beta", format!("beta must lie in (0,{d})")));
        }
        let kind = raw.levy.clone().ok_or_else(|| invalid("levy", "levy kind is required"))?;
        let alpha = raw.alpha.ok_or_else(|| invalid("alpha", "alpha is required"))?;
        let levy = match kind.as_str() {
            "stable" => LevySpec { kind, alpha, mass: None, gamma: None, c: None },
            "relativistic" => {
                let mass = positive("mass", raw.mass.ok_or_else(|| invalid("mass", "mass is required"))?)?;
                LevySpec { kind, alpha, mass: Some(mass), gamma: None, c: None }
            }
            "stable_sum" => {
                let gamma = raw.gamma.ok_or_else(|| invalid("gamma", "gamma is required"))?;
                LevySpec { kind, alpha, mass: None, gamma: Some(gamma), c: None }
            }
            "truncated" => {
                let c = positive("c", raw.c.unwrap_or(1.0))?;
                LevySpec { kind, alpha, mass: None, gamma: None, c: Some(c) }
            }
            other => {
                return Err(invalid(
                    "levy",
                    format!("unknown levy kind `{other}`; expected stable, relativistic, stable_sum or truncated"),
                ))
            }
        };
        let t = positive("T", raw.t.unwrap_or(1.0))?;
        let domain = positive("domain", raw.domain.unwrap_or(1.0))?;
        let budget = BudgetSpec {
            rel_tol: positive("rel_tol", raw.rel_tol.unwrap_or(1e-8))?,
            abs_tol: raw.abs_tol.unwrap_or(1e-300),
            mc_samples: raw.mc_samples.unwrap_or(1 << 18),
        };
        if !(budget.abs_tol >= 0.0) {
            return Err(invalid("abs_tol", "abs_tol must be nonnegative"));
        }
        if budget.mc_samples == 0 {
            return Err(invalid("mc_samples", "mc_samples must be positive"));
        }
        let format = match raw.format.as_deref().unwrap_or("csv") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(invalid("format", format!("format must be csv or json, got `{other}`"))),
        };
        let mut cfg = RunConfig {
            preset: raw.preset.clone(),
            h,
            beta,
            d,
            levy,
            t,
            domain,
            xi_cutoff: 0.0,
            seed: raw.seed.unwrap_or(0),
            budget,
            format,
            output_dir: PathBuf::from(raw.output_dir.clone().unwrap_or_else(|| "fracheat-out".into())),
        };
        let exps = cfg.exponents()?;
        cfg.xi_cutoff = match raw.xi_cutoff {
            Some(v) if v >= 0.0 && v.is_finite() => v,
            Some(_) => return Err(invalid("xi_cutoff", "xi_cutoff must be nonnegative")),
            None if exps.h2 >= 1.0 - 1e-9 => 2.0 * PI / (64.0 * domain),
            None => 0.0,
        };
        Ok(cfg)
    }

    pub fn noise(&self) -> Result<NoiseSpec, CliError> {
        NoiseSpec::new(self.h, self.beta, self.d).map_err(|e| invalid("H", e.to_string()))
    }

    pub fn levy_exponent(&self) -> Result<LevyExponent, CliError> {
        let l = &self.levy;
        let kind = match l.kind.as_str() {
            "stable" => LevyKind::IsotropicStable { alpha: l.alpha },
            "relativistic" => LevyKind::Relativistic { alpha: l.alpha, mass: l.mass.unwrap_or(1.0) },
            "stable_sum" => LevyKind::StableSum { alpha: l.alpha, gamma: l.gamma.unwrap_or(0.0) },
            _ => LevyKind::TruncatedStable { alpha: l.alpha, c: l.c.unwrap_or(1.0) },
        };
        LevyExponent::new(kind, self.d).map_err(|e| {
            let key = if e.to_string().contains("gamma") {
                "gamma"
            } else if e.to_string().contains("mass") {
                "mass"
            } else {
                "alpha"
            };
            invalid(key, e.to_string())
        })
    }

    pub fn exponents(&self) -> Result<Exponents, CliError> {
        derive_exponents(&self.noise()?, &self.levy_exponent()?).map_err(|e| invalid("H", e.to_string()))
    }

    pub fn budget(&self) -> QuadratureBudget {
        let mut b = QuadratureBudget::default();
        b.rel_tol = self.budget.rel_tol;
        b.abs_tol = self.budget.abs_tol;
        b.mc_samples = self.budget.mc_samples;
        b.seed = self.seed;
        b
    }

    pub fn density(&self) -> Result<SpectralDensity, CliError> {
        let density = SpectralDensity::new(self.noise()?, self.levy_exponent()?)?;
        Ok(density.with_infrared_cutoff(self.xi_cutoff))
    }

    pub fn variogram(&self) -> Result<Variogram, CliError> {
        Ok(Variogram::new(self.density()?, self.budget()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_with_expected_exponents() {
        let rough = RunConfig::resolve(preset("rough1d").unwrap()).unwrap();
        let e = rough.exponents().unwrap();
        assert!((e.h1 - 0.55).abs() < 1e-12 && (e.h2 - 0.55).abs() < 1e-12);
        assert_eq!(rough.xi_cutoff, 0.0);
        let smooth = RunConfig::resolve(preset("smooth1d").unwrap()).unwrap();
        assert!((smooth.exponents().unwrap().h2 - 1.3).abs() < 1e-12);
        assert!(smooth.xi_cutoff > 0.0);
        let boundary = RunConfig::resolve(preset("boundary1d").unwrap()).unwrap();
        assert!(boundary.exponents().unwrap().h2_is_one());
    }

    #[test]
    fn out_of_range_h_names_the_key() {
        let raw = parse_config("H = 1.2\nbeta = 0.5\nd = 1\nlevy = \"stable\"\nalpha = 1.0\n").unwrap();
        match RunConfig::resolve(raw) {
            Err(CliError::Validation { key, message }) => {
                assert_eq!(key, "H");
                assert_eq!(message, "H must lie in (1/2,1)");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_levy_kind_is_rejected() {
        let raw = parse_config("H = 0.75\nbeta = 0.5\nd = 1\nalpha = 1.0\n").unwrap();
        assert!(matches!(RunConfig::resolve(raw), Err(CliError::Validation { key, .. }) if key == "levy"));
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = parse_config("H = 0.75\n\nwidth = 3\n").unwrap_err();
        match err {
            CliError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("width"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn explicit_keys_override_presets() {
        let raw = parse_config("preset = \"rough1d\"\nH = 0.8\n").unwrap();
        let cfg = RunConfig::resolve(raw).unwrap();
        assert_eq!(cfg.h, 0.8);
        assert_eq!(cfg.levy.alpha, 1.0);
    }
}
