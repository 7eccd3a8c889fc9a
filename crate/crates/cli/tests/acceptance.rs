//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fracheat::config::{preset, RunConfig};
use fracheat_core::covariance::{scaling_audit, SpectralDensity, Variogram};
use fracheat_core::existence::{existence_verdict, lemma_ratios, standard_grid, tau_rescale_check, AnalyticVerdict, NumericVerdict};
use fracheat_core::regularity::{default_holder_lags, holder_fit, Axis};
use fracheat_core::sampler::{cross_validate, PointSet};
use fracheat_core::slnd::{conditional_variance, random_config, regression_residual, slnd_audit};
use fracheat_core::{LevyExponent, LevyKind, NoiseSpec, QuadratureBudget};

const SCALING_POINTS: usize = 10_000;
const SCALING_MAX_RESIDUAL: f64 = 1e-12;
const LEMMA_HURSTS: [f64; 3] = [0.6, 0.75, 0.9];
const LEMMA_TAIL_AGREEMENT: f64 = 0.10;
const LEMMA_BOUND: f64 = 100.0;
const RESCALE_POINTS: usize = 50;
const RESCALE_REL_TOL: f64 = 1e-8;
const RESCALE_MAX_DISAGREEMENT: f64 = 1e-6;
const SLOPE_TOLERANCE: f64 = 0.06;
const FIDELITY_GRID: usize = 8;
const FIDELITY_CHOLESKY_PATHS: usize = 100_000;
const FIDELITY_SPECTRAL_PATHS: usize = 2_000;
const FIDELITY_MIN_FRACTION: f64 = 0.95;
const SPECTRAL_MAX_BIAS: f64 = 0.05;
const SLND_CONFIGS: usize = 200;
const SLND_PRECISION_AGREEMENT: f64 = 0.05;
const SLND_BRUTE_FORCE_REL: f64 = 1e-6;
const SLND_BRUTE_FORCE_MAX_CONDITIONERS: usize = 4;
const MODULUS_MAX_CV: f64 = 0.15;
const CHUNG_MAX_GAP: f64 = 0.20;
const CONTROL_MIN_RANGE: f64 = 1.5;
const SMOOTH_MAX_GROWTH: f64 = 1.5;
const SEED: u64 = 20240611;

const PRESETS: [&str; 3] = ["rough1d", "boundary1d", "smooth1d"];

type Outcome = Result<String, String>;

fn run_config(name: &str) -> RunConfig {
    RunConfig::resolve(preset(name).unwrap()).unwrap()
}

fn stable(h: f64, beta: f64, alpha: f64, d: usize) -> (NoiseSpec, LevyExponent) {
    (
        NoiseSpec::new(h, beta, d).unwrap(),
        LevyExponent::new(LevyKind::IsotropicStable { alpha }, d).unwrap(),
    )
}

/// Low-discrepancy points in `[0,1)`, one coordinate per multiplier.
fn weyl(k: usize, m: f64) -> f64 {
    (0.5 + k as f64 * m).fract()
}

fn scaling_identity() -> Outcome {
    let mut worst = 0.0f64;
    for (h, beta, alpha, d) in [(0.75, 0.6, 1.0, 1), (0.75, 0.6, 2.0, 1), (0.7, 1.2, 1.5, 2)] {
        let (noise, levy) = stable(h, beta, alpha, d);
        let density = SpectralDensity::new(noise, levy).map_err(|e| e.to_string())?;
        let probes = scaling_audit(&density, SCALING_POINTS, SEED).map_err(|e| e.to_string())?;
        worst = probes.iter().map(|p| p.residual).fold(worst, f64::max);
    }
    let msg = format!("max residual {worst:e} over 3 x {SCALING_POINTS} points (limit {SCALING_MAX_RESIDUAL:e})");
    if worst <= SCALING_MAX_RESIDUAL { Ok(msg) } else { Err(msg) }
}

fn existence_dichotomy() -> Outcome {
    let budget = QuadratureBudget::default();
    let (mut strict, mut agree, mut skipped) = (0, 0, 0);
    let mut bad = Vec::new();
    for p in standard_grid() {
        let (noise, levy) = (p.noise().map_err(|e| e.to_string())?, p.levy().map_err(|e| e.to_string())?);
        let v = existence_verdict(&noise, &levy, 1.0, &budget).map_err(|e| e.to_string())?;
        let expected = match v.analytic {
            AnalyticVerdict::Exists => NumericVerdict::Convergent,
            AnalyticVerdict::NotExists => NumericVerdict::Divergent,
            AnalyticVerdict::NotApplicable | AnalyticVerdict::Boundary => continue,
        };
        if v.numeric == NumericVerdict::Inconclusive {
            skipped += 1;
            continue;
        }
        strict += 1;
        if v.numeric == expected {
            agree += 1;
        } else {
            bad.push(format!("(d={}, a={}, H={}, b={})", p.d, p.alpha, p.h, p.beta));
        }
    }
    let msg = format!("{agree}/{strict} strict points agree, {skipped} inconclusive {}", bad.join(" "));
    if agree == strict && strict > 0 { Ok(msg) } else { Err(msg) }
}

fn lemma_bound() -> Outcome {
    let xs: Vec<f64> = (1..=12).map(|k| 0.5f64.powi(k)).collect();
    let budget = QuadratureBudget::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for h in LEMMA_HURSTS {
        let r = lemma_ratios(&xs, h, &budget).map_err(|e| e.to_string())?;
        let bounded = r.iter().all(|v| v.is_finite() && *v > 0.0 && *v <= LEMMA_BOUND);
        let tail = &r[r.len() - 3..];
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(0.0, f64::max);
        let spread = (hi - lo) / lo;
        ok &= bounded && spread <= LEMMA_TAIL_AGREEMENT;
        parts.push(format!("H={h}: last three spread {spread:.4}, max {:.4}", r.iter().cloned().fold(0.0, f64::max)));
    }
    let msg = parts.join("; ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn change_of_variables() -> Outcome {
    let budget = QuadratureBudget::default().with_rel_tol(RESCALE_REL_TOL);
    let mut worst = 0.0f64;
    for (alpha, beta) in [(1.0, 0.6), (2.0, 0.6)] {
        let (noise, levy) = stable(0.75, beta, alpha, 1);
        for k in 0..RESCALE_POINTS {
            let t = 10f64.powf(-2.0 + 3.0 * weyl(k, 0.618_033_988_749_895));
            let xi = 10f64.powf(-2.0 + 4.0 * weyl(k, 0.754_877_666_246_693));
            let r = tau_rescale_check(&noise, &levy, t, &[xi], &budget).map_err(|e| format!("t={t} xi={xi}: {e}"))?;
            worst = worst.max(r);
        }
    }
    let msg = format!("max relative disagreement {worst:e} over 2 x {RESCALE_POINTS} points");
    if worst <= RESCALE_MAX_DISAGREEMENT { Ok(msg) } else { Err(msg) }
}

fn variogram_slopes() -> Outcome {
    let lags = default_holder_lags();
    let mut parts = Vec::new();
    let mut ok = true;
    for name in PRESETS {
        let cfg = run_config(name);
        let v = cfg.variogram().map_err(|e| e.to_string())?;
        let exps = v.density.exps;
        let time = holder_fit(&v, Axis::Time, &lags).map_err(|e| e.to_string())?;
        let dev = (time.slope - 2.0 * exps.h1).abs();
        ok &= dev <= SLOPE_TOLERANCE;
        parts.push(format!("{name} time {:.4} vs {:.4}", time.slope, 2.0 * exps.h1));
        if exps.h2 < 1.0 {
            let space = holder_fit(&v, Axis::Space, &lags).map_err(|e| e.to_string())?;
            let dev = (space.slope - 2.0 * exps.h2).abs();
            ok &= dev <= SLOPE_TOLERANCE;
            parts.push(format!("{name} space {:.4} vs {:.4}", space.slope, 2.0 * exps.h2));
        }
    }
    let msg = parts.join("; ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn sampler_fidelity() -> Outcome {
    let cfg = run_config("rough1d");
    let v = cfg.variogram().map_err(|e| e.to_string())?;
    let n = FIDELITY_GRID;
    let times: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let ps = PointSet::grid(times.clone(), vec![times]).map_err(|e| e.to_string())?;
    let report = cross_validate(&ps, &v, FIDELITY_CHOLESKY_PATHS, FIDELITY_SPECTRAL_PATHS, SEED)
        .map_err(|e| e.to_string())?;
    let bias = report.spectral_bias.as_ref().map_or(f64::NAN, |b| b.max_bias);
    let msg = format!(
        "{:.4} of {} entries within 3 SE; spectral probe bias {:.4}",
        report.cholesky_within_3se, report.entries, bias
    );
    if report.cholesky_within_3se >= FIDELITY_MIN_FRACTION && bias < SPECTRAL_MAX_BIAS { Ok(msg) } else { Err(msg) }
}

fn slnd_sandwich() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in PRESETS {
        let cfg = run_config(name);
        let v = cfg.variogram().map_err(|e| e.to_string())?;
        let report = slnd_audit(&v, SLND_CONFIGS, SEED).map_err(|e| e.to_string())?;
        let fine = Variogram::new(v.density.clone(), v.budget.with_rel_tol(v.budget.rel_tol / 10.0));
        let rerun = slnd_audit(&fine, SLND_CONFIGS, SEED).map_err(|e| e.to_string())?;
        let agreement = (rerun.min_ratio - report.min_ratio).abs() / rerun.min_ratio;
        let mut worst_brute = 0.0f64;
        let mut checked = 0;
        for k in 0..SLND_CONFIGS {
            let c = random_config(SEED, k, 1);
            if c.conditioners.len() > SLND_BRUTE_FORCE_MAX_CONDITIONERS {
                continue;
            }
            let a = conditional_variance(&c, &v).map_err(|e| e.to_string())?;
            let b = regression_residual(&c, &v).map_err(|e| e.to_string())?;
            worst_brute = worst_brute.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
            checked += 1;
        }
        let passed = report.failures.is_empty()
            && rerun.failures.is_empty()
            && report.min_ratio > 0.0
            && agreement <= SLND_PRECISION_AGREEMENT
            && worst_brute <= SLND_BRUTE_FORCE_REL;
        ok &= passed;
        parts.push(format!(
            "{name}: min ratio {:.4}, 10x rerun gap {:.2e}, brute force {:.1e} on {checked} configs, {} failures",
            report.min_ratio,
            agreement,
            worst_brute,
            report.failures.len() + rerun.failures.len()
        ));
    }
    let msg = parts.join("; ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn cli(args: &[&str]) -> Result<std::process::ExitStatus, String> {
    Command::new(env!("CARGO_BIN_EXE_fracheat"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())
}

fn json(path: &Path) -> Result<serde_json::Value, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

fn modulus_statistics(dir: &Path) -> Outcome {
    let d = dir.to_str().unwrap();
    cli(&["--preset", "rough1d", "--seed", "1", "--out", d, "modulus-stats", "--n", "128", "--paths", "64"])?;
    cli(&["--preset", "rough1d", "--seed", "1", "--out", d, "chung-stat", "--n", "128", "--paths", "64"])?;
    let moduli = json(&dir.join("moduli-summary.json"))?;
    let chung = json(&dir.join("chung-summary.json"))?;
    let mut ok = true;
    let mut parts = Vec::new();
    let stats = moduli["statistics"].as_array().ok_or("missing statistics")?;
    let find = |name: &str| stats.iter().find(|s| s["statistic"] == name).cloned().ok_or(format!("missing {name}"));
    let values = |s: &serde_json::Value| -> Vec<f64> {
        s["values"].as_array().map(|a| a.iter().filter_map(|v| v.as_f64()).collect()).unwrap_or_default()
    };
    let cv_last_three = |v: &[f64]| {
        let t = &v[v.len() - 3..];
        let m = t.iter().sum::<f64>() / 3.0;
        (t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 2.0).sqrt() / m
    };
    for name in ["uniform", "local"] {
        let v = values(&find(name)?);
        let positive = v.len() >= 3 && v.iter().all(|x| x.is_finite() && *x > 0.0);
        let cv = if positive { cv_last_three(&v) } else { f64::NAN };
        ok &= positive && cv < MODULUS_MAX_CV;
        parts.push(format!("{name} cv {cv:.3}"));
    }
    let c = values(&chung["summary"]);
    let positive = c.len() >= 3 && c.iter().all(|x| x.is_finite() && *x > 0.0);
    let gap = if positive { (c[c.len() - 1] - c[c.len() - 2]).abs() / c[c.len() - 2] } else { f64::NAN };
    let cv = if positive { cv_last_three(&c) } else { f64::NAN };
    ok &= positive && gap <= CHUNG_MAX_GAP && cv < MODULUS_MAX_CV;
    parts.push(format!("chung gap {gap:.3} cv {cv:.3}"));
    let control = values(&find("time_only_half_h1")?);
    let lo = control.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = control.iter().cloned().fold(0.0, f64::max);
    let monotone = control.windows(2).all(|w| w[1] < w[0]) || control.windows(2).all(|w| w[1] > w[0]);
    let range = hi / lo;
    ok &= monotone && range >= CONTROL_MIN_RANGE;
    parts.push(format!("control drift x{range:.2}"));
    let msg = parts.join("; ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn smooth_case(dir: &Path) -> Outcome {
    let d = dir.to_str().unwrap();
    cli(&["--preset", "smooth1d", "--seed", "1", "--out", d, "smooth-check", "--n", "2048", "--levels", "3"])?;
    let text = std::fs::read_to_string(dir.join("smooth.csv")).map_err(|e| e.to_string())?;
    let values: Vec<f64> = text
        .lines()
        .skip(2)
        .filter_map(|l| l.split(',').nth(2).and_then(|v| v.parse().ok()))
        .collect();
    if values.len() != 3 {
        return Err(format!("expected 3 levels, got {}", values.len()));
    }
    let bounded = values.iter().all(|v| v.is_finite() && *v > 0.0);
    let growing = values.windows(2).all(|w| w[1] > w[0]);
    let growth = values.iter().cloned().fold(0.0, f64::max) / values[0];
    let msg = format!("ratios {values:.4?}, peak/first {growth:.3}");
    if bounded && !growing && growth <= SMOOTH_MAX_GROWTH { Ok(msg) } else { Err(msg) }
}

fn determinism(dir: &Path) -> Outcome {
    let runs: [&[&str]; 3] = [
        &["--preset", "rough1d", "--seed", "3", "sample-field", "--nt", "6", "--nx", "6", "--paths", "32"],
        &["--preset", "rough1d", "--seed", "3", "sample-field", "--nt", "6", "--nx", "6", "--paths", "8", "--method", "spectral"],
        &["--preset", "smooth1d", "--seed", "3", "slnd-audit", "--configs", "20"],
    ];
    let mut compared = 0;
    for (k, args) in runs.iter().enumerate() {
        let mut manifests = Vec::new();
        for rep in 0..2 {
            let out = dir.join(format!("run{k}-{rep}"));
            let mut full = vec!["--out", out.to_str().unwrap()];
            full.extend_from_slice(args);
            let status = cli(&full)?;
            if !status.success() {
                return Err(format!("run {k} exited with {status}"));
            }
            let name = args.iter().find(|a| !a.starts_with("--") && a.contains('-')).unwrap();
            manifests.push((out.clone(), json(&out.join(format!("{name}.manifest.json")))?));
        }
        let (a, b) = (&manifests[0], &manifests[1]);
        if a.1["input_hash"] != b.1["input_hash"] {
            return Err(format!("run {k}: input hashes differ"));
        }
        for entry in a.1["outputs"].as_array().ok_or("manifest lists no outputs")? {
            let file = entry["file"].as_str().unwrap();
            let x = std::fs::read(a.0.join(file)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.0.join(file)).map_err(|e| e.to_string())?;
            if x != y {
                return Err(format!("run {k}: {file} differs"));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} output files byte-identical across repeated runs"))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 scaling identity", Box::new(scaling_identity)),
        ("2 existence dichotomy", Box::new(existence_dichotomy)),
        ("3 lemma ratio bound", Box::new(lemma_bound)),
        ("4 change of variables", Box::new(change_of_variables)),
        ("5 variogram slopes", Box::new(variogram_slopes)),
        ("6 sampler fidelity", Box::new(sampler_fidelity)),
        ("7 SLND sandwich", Box::new(slnd_sandwich)),
        ("8 modulus statistics", Box::new(|| modulus_statistics(&scratch.path().join("moduli")))),
        ("9 smooth case", Box::new(|| smooth_case(&scratch.path().join("smooth")))),
        ("10 determinism", Box::new(|| determinism(&scratch.path().join("determinism")))),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in &criteria {
        let number = name.split(' ').next().unwrap();
        if !only.is_empty() && !only.iter().any(|o| o == number) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {name} ({secs:.1}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1}s): {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
