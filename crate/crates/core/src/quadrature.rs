//! Quadrature engine: adaptive Gauss–Kronrod on finite intervals, logarithmic decade sweeps
//! for half-lines with geometric tail extrapolation, singular one-dimensional weights,
//! oscillatory tails accelerated with Wynn's epsilon algorithm, and a seeded importance
//! sampler for two-dimensional integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureBudget {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Bisections allowed inside one adaptive Gauss–Kronrod call.
    pub max_subdivisions: usize,
    /// Dynamic range of a decade sweep: sweeps stop after `log10(tail_cutoff)` decades.
    pub tail_cutoff: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureBudget {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-300,
            max_subdivisions: 4000,
            tail_cutoff: 1e12,
            mc_samples: 1 << 18,
            seed: 0x5eed,
        }
    }
}

impl QuadratureBudget {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_tail_cutoff(mut self, tail_cutoff: f64) -> Self {
        self.tail_cutoff = tail_cutoff;
        self
    }

    fn max_decades(&self) -> usize {
        self.tail_cutoff.log10().ceil().max(3.0) as usize
    }

    fn target(&self, magnitude: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * magnitude.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
    pub subdivisions_used: usize,
}

impl IntegralResult {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            error_estimate: 0.0,
            converged: true,
            subdivisions_used: 0,
        }
    }

    pub fn plus(self, other: Self) -> Self {
        Self {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            converged: self.converged && other.converged,
            subdivisions_used: self.subdivisions_used + other.subdivisions_used,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            error_estimate: self.error_estimate * factor.abs(),
            ..self
        }
    }

    /// Re-judges convergence of a composite result against the budget.
    pub(crate) fn judged(mut self, budget: &QuadratureBudget) -> Self {
        self.converged = self.converged
            && self.value.is_finite()
            && self.error_estimate <= budget.target(self.value).max(budget.abs_tol);
        self
    }
}

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600316500020,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// One 21-point Kronrod panel with the QUADPACK error heuristic.
fn gk21<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive Gauss–Kronrod on `[a, b]`; stops once the summed error estimate is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn adaptive<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> IntegralResult {
    if a == b {
        return IntegralResult::zero();
    }
    let (v, e) = gk21(f, a, b);
    let mut total = v;
    let mut total_err = e;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value: v,
        err: e,
    });
    let mut splits = 0;
    while total_err > abs_tol.max(rel_tol * total.abs()) && splits < max_subdivisions {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(f, worst.a, mid);
        let (v2, e2) = gk21(f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
        splits += 1;
    }
    // Re-sum to remove drift from the running updates.
    let (value, err) = heap
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.value, acc.1 + p.err));
    IntegralResult {
        value,
        error_estimate: err,
        converged: value.is_finite() && err <= abs_tol.max(rel_tol * value.abs()),
        subdivisions_used: splits,
    }
}

/// Finite-interval integral under a budget.
pub fn integrate_interval<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    budget: &QuadratureBudget,
) -> IntegralResult {
    adaptive(
        f,
        a,
        b,
        budget.abs_tol,
        budget.rel_tol,
        budget.max_subdivisions,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SweepOutcome {
    Converged,
    Unresolved,
    Divergent,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sweep {
    pub result: IntegralResult,
    pub outcome: SweepOutcome,
}

/// Integrates `g` over `[start, end]` (upward) or `[end, start]` (downward) decade by decade in
/// the variable `ln r`. Without an end point the sweep runs toward infinity or zero and closes
/// with a geometric tail `I_k r / (1 - r)`, `r` being the ratio of consecutive decade integrals.
/// `reference` is a magnitude the caller already knows the total is at least comparable to.
pub(crate) fn decade_sweep<F: Fn(f64) -> f64 + ?Sized>(
    g: &F,
    start: f64,
    upward: bool,
    end: Option<f64>,
    budget: &QuadratureBudget,
    reference: f64,
) -> Sweep {
    let h = |u: f64| {
        let r = u.exp();
        let v = g(r) * r;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let width = std::f64::consts::LN_10;
    let u0 = start.ln();
    let u_end = end.map(|e| e.ln());
    let mut history: Vec<f64> = Vec::new();
    let mut partials: Vec<f64> = Vec::new();
    let mut acc = IntegralResult::zero();
    let mut all_ok = true;
    let mut reference = reference.abs();
    for k in 0..budget.max_decades() {
        let (mut ua, mut ub) = if upward {
            (u0 + k as f64 * width, u0 + (k + 1) as f64 * width)
        } else {
            (u0 - (k + 1) as f64 * width, u0 - k as f64 * width)
        };
        let mut last = false;
        if let Some(ue) = u_end {
            if upward && ub >= ue {
                ub = ue;
                last = true;
            }
            if !upward && ua <= ue {
                ua = ue;
                last = true;
            }
            if ua >= ub {
                break;
            }
        }
        let magnitude = reference.max(acc.value.abs());
        let piece = adaptive(
            &h,
            ua,
            ub,
            budget.abs_tol.max(0.05 * budget.rel_tol * magnitude),
            0.5 * budget.rel_tol,
            budget.max_subdivisions,
        );
        all_ok &= piece.converged;
        acc = acc.plus(IntegralResult {
            converged: true,
            ..piece
        });
        history.push(piece.value);
        partials.push(acc.value);
        reference = reference.max(piece.value.abs());
        if last {
            return Sweep {
                result: IntegralResult {
                    converged: all_ok,
                    ..acc
                },
                outcome: if all_ok {
                    SweepOutcome::Converged
                } else {
                    SweepOutcome::Unresolved
                },
            };
        }
        let n = history.len();
        if n < 3 {
            continue;
        }
        let target = 0.25 * budget.target(reference.max(acc.value.abs()));
        let (i0, i1, i2) = (history[n - 3], history[n - 2], history[n - 1]);
        if i2 == 0.0 && i1 == 0.0 {
            return Sweep {
                result: IntegralResult {
                    converged: all_ok,
                    ..acc
                },
                outcome: SweepOutcome::Converged,
            };
        }
        if i0 != 0.0 && i1 != 0.0 {
            let r_new = i2 / i1;
            let r_old = i1 / i0;
            if r_new > 0.0 && r_new < 1.0 && r_old > 0.0 && r_old < 1.0 {
                let tail = i2 * r_new / (1.0 - r_new);
                let tail_old = i2 * r_old / (1.0 - r_old);
                let tail_err = (tail - tail_old).abs();
                if tail_err <= target {
                    acc.value += tail;
                    acc.error_estimate += tail_err;
                    return Sweep {
                        result: IntegralResult {
                            converged: all_ok,
                            ..acc
                        },
                        outcome: SweepOutcome::Converged,
                    };
                }
            }
        }
        // Several power laws mixed: the decade sums are then a sum of geometric sequences,
        // which the epsilon algorithm extrapolates exactly.
        let shrinking = i0 != 0.0
            && i1 != 0.0
            && (0.0..1.0).contains(&(i2 / i1))
            && (0.0..1.0).contains(&(i1 / i0));
        if n >= 5 && shrinking {
            let m = partials.len();
            let est = wynn_epsilon(&partials[m.saturating_sub(12)..]);
            let est_old = wynn_epsilon(&partials[(m - 1).saturating_sub(12)..m - 1]);
            let diff = (est - est_old).abs();
            if est.is_finite() && diff <= target {
                acc.error_estimate += diff;
                acc.value = est;
                return Sweep {
                    result: IntegralResult {
                        converged: all_ok,
                        ..acc
                    },
                    outcome: SweepOutcome::Converged,
                };
            }
        }
        if i2.abs() + i1.abs() <= 1e-3 * target {
            acc.error_estimate += i2.abs();
            return Sweep {
                result: IntegralResult {
                    converged: all_ok,
                    ..acc
                },
                outcome: SweepOutcome::Converged,
            };
        }
    }
    // Dynamic range exhausted: decide between divergence and an unresolved tail.
    let n = history.len();
    if n >= 3 {
        let (i0, i1, i2) = (history[n - 3], history[n - 2], history[n - 1]);
        if i0 != 0.0 && i1 != 0.0 {
            let r_new = i2 / i1;
            let r_old = i1 / i0;
            if r_new >= 1.0 && r_old >= 1.0 {
                return Sweep {
                    result: IntegralResult {
                        converged: false,
                        ..acc
                    },
                    outcome: SweepOutcome::Divergent,
                };
            }
            if r_new > 0.0 && r_new < 1.0 {
                let tail = i2 * r_new / (1.0 - r_new);
                acc.value += tail;
                acc.error_estimate += if r_old > 0.0 && r_old < 1.0 {
                    (tail - i2 * r_old / (1.0 - r_old)).abs()
                } else {
                    tail.abs()
                };
            } else {
                acc.error_estimate += i2.abs();
            }
        }
    }
    Sweep {
        result: IntegralResult {
            converged: false,
            ..acc
        },
        outcome: SweepOutcome::Unresolved,
    }
}

fn sweep_to_result(sweep: Sweep, at_origin: bool) -> Result<IntegralResult> {
    match sweep.outcome {
        SweepOutcome::Divergent if at_origin => Err(Error::DivergentAtOrigin {
            partial: sweep.result.value,
        }),
        SweepOutcome::Divergent => Err(Error::DivergentTail {
            partial: sweep.result.value,
        }),
        _ => Ok(sweep.result),
    }
}

/// `∫_0^∞ g(r) dr`, sweeping decades outward in both directions from `center`.
pub fn integrate_half_line<F: Fn(f64) -> f64 + ?Sized>(
    g: &F,
    center: f64,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    let up = decade_sweep(g, center, true, None, budget, 0.0);
    let down = decade_sweep(g, center, false, None, budget, up.result.value);
    let up = if up.outcome == SweepOutcome::Converged
        || down.result.value.abs() <= up.result.value.abs()
    {
        up
    } else {
        // Re-run the upper sweep with the now known magnitude so its tolerance is consistent.
        decade_sweep(g, center, true, None, budget, down.result.value)
    };
    let up = sweep_to_result(up, false)?;
    let down = sweep_to_result(down, true)?;
    Ok(up.plus(down).judged(budget))
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma(half)
}

/// `∫_{R^d} f(|x|) dx` for a radial profile `f`.
pub fn integrate_radial<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    d: usize,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    integrate_radial_centered(f, d, 1.0, budget)
}

/// Same as [`integrate_radial`] with the decade sweep anchored at `center`.
pub fn integrate_radial_centered<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    d: usize,
    center: f64,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    if d == 0 {
        return Err(Error::Validation("dimension must be at least 1".into()));
    }
    let power = (d - 1) as i32;
    let g = |r: f64| f(r) * r.powi(power);
    Ok(integrate_half_line(&g, center, budget)?.scaled(sphere_area(d)))
}

/// `∫_R |τ|^exponent f(τ) dτ` for `exponent > -1`. Near the origin the weight is removed by the
/// substitution `τ = s^{1/(1+exponent)}`; beyond `scale` the half-line is swept in decades.
pub fn integrate_singular_1d<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    exponent: f64,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    integrate_singular_1d_scaled(f, exponent, 1.0, budget)
}

pub fn integrate_singular_1d_scaled<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    exponent: f64,
    scale: f64,
    budget: &QuadratureBudget,
) -> Result<IntegralResult> {
    if !(exponent > -1.0) || !exponent.is_finite() {
        return Err(Error::Validation(format!(
            "singular weight exponent must exceed -1, got {exponent}"
        )));
    }
    if !(scale > 0.0) {
        return Err(Error::Validation("scale must be positive".into()));
    }
    let even = |tau: f64| f(tau) + f(-tau);
    let p = 1.0 + exponent;
    let near = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        even(scale * s.powf(1.0 / p))
    };
    let inner = integrate_interval(&near, 0.0, 1.0, budget).scaled(scale.powf(p) / p);
    let weighted = |tau: f64| tau.powf(exponent) * even(tau);
    let far = decade_sweep(&weighted, scale, true, None, budget, inner.value);
    let far = sweep_to_result(far, false)?;
    Ok(inner.plus(far).judged(budget))
}

/// Wynn's epsilon extrapolation of a sequence of partial sums.
pub fn wynn_epsilon(sums: &[f64]) -> f64 {
    let n = sums.len();
    if n == 0 {
        return 0.0;
    }
    let start = n.saturating_sub(24);
    let mut prev = vec![0.0; n - start + 1];
    let mut cur: Vec<f64> = sums[start..].to_vec();
    let mut best = *cur.last().unwrap();
    let mut column = 0;
    while cur.len() >= 2 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for j in 0..cur.len() - 1 {
            let diff = cur[j + 1] - cur[j];
            if diff == 0.0 || !diff.is_finite() {
                return best;
            }
            next.push(prev[j + 1] + 1.0 / diff);
        }
        prev = cur;
        cur = next;
        column += 1;
        if column % 2 == 0 {
            let candidate = *cur.last().unwrap();
            if candidate.is_finite() {
                best = candidate;
            }
        }
    }
    best
}

/// `∫_start^∞ f`, where `f` oscillates with (asymptotic) half-period `half_period`: the integral
/// is split into half-period panels whose partial sums are accelerated with Wynn's epsilon.
pub fn integrate_oscillatory_tail<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    start: f64,
    half_period: f64,
    budget: &QuadratureBudget,
    reference: f64,
) -> IntegralResult {
    let mut partial = Vec::new();
    let mut sum: f64 = 0.0;
    let mut err = 0.0;
    let mut subdivisions = 0;
    let mut estimates: Vec<f64> = Vec::new();
    let mut all_ok = true;
    let reference = reference.abs();
    for k in 0..600 {
        let a = start + k as f64 * half_period;
        let piece = adaptive(
            f,
            a,
            a + half_period,
            budget
                .abs_tol
                .max(0.01 * budget.rel_tol * reference.max(sum.abs())),
            0.1 * budget.rel_tol,
            budget.max_subdivisions,
        );
        all_ok &= piece.converged;
        sum += piece.value;
        err += piece.error_estimate;
        subdivisions += piece.subdivisions_used;
        partial.push(sum);
        let target = 0.25 * budget.target(reference.max(sum.abs()));
        if partial.len() >= 3 {
            let n = partial.len();
            if (partial[n - 1] - partial[n - 2]).abs() + (partial[n - 2] - partial[n - 3]).abs()
                <= 1e-3 * target
            {
                return IntegralResult {
                    value: sum,
                    error_estimate: err,
                    converged: all_ok,
                    subdivisions_used: subdivisions,
                };
            }
        }
        if partial.len() >= 6 {
            let est = wynn_epsilon(&partial);
            estimates.push(est);
            let m = estimates.len();
            if m >= 3 {
                let spread = (estimates[m - 1] - estimates[m - 2])
                    .abs()
                    .max((estimates[m - 1] - estimates[m - 3]).abs());
                if spread <= target {
                    return IntegralResult {
                        value: est,
                        error_estimate: err + spread,
                        converged: all_ok,
                        subdivisions_used: subdivisions,
                    };
                }
            }
        }
    }
    let value = estimates.last().copied().unwrap_or(sum);
    let m = estimates.len();
    let spread = if m >= 2 {
        (estimates[m - 1] - estimates[m - 2]).abs()
    } else {
        value.abs()
    };
    IntegralResult {
        value,
        error_estimate: err + spread,
        converged: false,
        subdivisions_used: subdivisions,
    }
}

/// Proposal distribution for importance sampling on `R^2`.
pub trait Proposal2d {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64);
    fn density(&self, x: f64, y: f64) -> f64;
}

/// Product of two independent Cauchy laws.
#[derive(Debug, Clone, Copy)]
pub struct CauchyProduct {
    pub center: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for CauchyProduct {
    fn default() -> Self {
        Self {
            center: (0.0, 0.0),
            scale: (1.0, 1.0),
        }
    }
}

impl Proposal2d for CauchyProduct {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let draw = |rng: &mut ChaCha8Rng, c: f64, s: f64| {
            let u: f64 = rng.random();
            c + s * (std::f64::consts::PI * (u - 0.5)).tan()
        };
        (
            draw(rng, self.center.0, self.scale.0),
            draw(rng, self.center.1, self.scale.1),
        )
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        let one = |v: f64, c: f64, s: f64| {
            let z = (v - c) / s;
            1.0 / (std::f64::consts::PI * s * (1.0 + z * z))
        };
        one(x, self.center.0, self.scale.0) * one(y, self.center.1, self.scale.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Importance-sampling estimate of `∫∫ f` using stream 0 of the budget seed.
pub fn mc_integrate_2d<F, P>(f: &F, proposal: &P, budget: &QuadratureBudget) -> Result<McEstimate>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
    P: Proposal2d + ?Sized,
{
    mc_integrate_2d_stream(f, proposal, budget, 0)
}

/// Importance-sampling estimate on an explicit ChaCha stream, so that independent calls can share
/// one seed. Sample variances are tracked at geometric checkpoints; a monotone climb by more than
/// a factor 3 is reported as suspected infinite variance.
pub fn mc_integrate_2d_stream<F, P>(
    f: &F,
    proposal: &P,
    budget: &QuadratureBudget,
    stream: u64,
) -> Result<McEstimate>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
    P: Proposal2d + ?Sized,
{
    let n = budget.mc_samples.max(64);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    rng.set_stream(stream);
    let mut checkpoints: Vec<usize> = (0..6).map(|k| n >> (5 - k)).collect();
    checkpoints.dedup();
    let mut variances = Vec::new();
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut next_check = 0;
    let mut largest_sq: f64 = 0.0;
    let mut sum_sq = 0.0;
    for i in 1..=n {
        let (x, y) = proposal.sample(&mut rng);
        let q = proposal.density(x, y);
        let w = if q > 0.0 { f(x, y) / q } else { 0.0 };
        let w = if w.is_finite() { w } else { 0.0 };
        largest_sq = largest_sq.max(w * w);
        sum_sq += w * w;
        let delta = w - mean;
        mean += delta / i as f64;
        m2 += delta * (w - mean);
        if next_check < checkpoints.len() && i == checkpoints[next_check] {
            variances.push(if i > 1 { m2 / (i - 1) as f64 } else { 0.0 });
            next_check += 1;
        }
    }
    let var = m2 / (n - 1) as f64;
    let rises = variances.windows(2).filter(|w| w[1] > w[0]).count();
    let growing = variances.len() >= 4
        && rises + 1 >= variances.len() - 1
        && variances[variances.len() - 1] > 3.0 * variances[0];
    // A single weight carrying a large share of the second moment also signals a heavy tail.
    let dominated = sum_sq > 0.0 && largest_sq > 0.25 * sum_sq;
    if growing || dominated {
        return Err(Error::InfiniteVarianceSuspected);
    }
    Ok(McEstimate {
        value: mean,
        std_error: (var / n as f64).sqrt(),
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_over_the_plane() {
        let b = QuadratureBudget::default();
        let r = integrate_radial(&|r: f64| (-r * r).exp(), 2, &b).unwrap();
        assert!(r.converged);
        assert!((r.value - PI).abs() < 1e-10);
    }

    #[test]
    fn lorentzian_with_power_weight() {
        // ∫_R |x|^{-1/2} / (1 + x^2) dx = π / cos(π/4)
        let b = QuadratureBudget::default();
        let r = integrate_singular_1d(&|x: f64| 1.0 / (1.0 + x * x), -0.5, &b).unwrap();
        let exact = PI / (PI / 4.0).cos();
        assert!(
            (r.value - exact).abs() < 1e-8 * exact,
            "{} vs {}",
            r.value,
            exact
        );
        assert!(r.converged);
    }

    #[test]
    fn slow_power_tail_is_divergent() {
        let b = QuadratureBudget::default();
        let r = integrate_half_line(&|x: f64| 1.0 / (1.0 + x), 1.0, &b);
        assert!(matches!(r, Err(Error::DivergentTail { .. })));
        let r = integrate_half_line(&|x: f64| x.powf(-1.2) / (1.0 + x), 1.0, &b);
        assert!(matches!(r, Err(Error::DivergentAtOrigin { .. })));
    }

    #[test]
    fn oscillatory_tail_of_sine_integral() {
        // ∫_1^∞ sin x / x dx = π/2 - Si(1)
        let si1 = 0.946_083_070_367_183_0;
        let b = QuadratureBudget::default();
        let r = integrate_oscillatory_tail(&|x: f64| x.sin() / x, 1.0, PI, &b, 1.0);
        assert!((r.value - (PI / 2.0 - si1)).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn wynn_accelerates_alternating_harmonic() {
        let mut s = 0.0;
        let sums: Vec<f64> = (1..=20)
            .map(|k| {
                s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
                s
            })
            .collect();
        assert!((wynn_epsilon(&sums) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn importance_sampling_is_seeded_and_unbiased() {
        let b = QuadratureBudget {
            mc_samples: 100_000,
            ..Default::default()
        };
        let f = |x: f64, y: f64| (-(x * x + y * y)).exp();
        let a = mc_integrate_2d(&f, &CauchyProduct::default(), &b).unwrap();
        let again = mc_integrate_2d(&f, &CauchyProduct::default(), &b).unwrap();
        assert_eq!(a, again);
        assert!((a.value - PI).abs() < 4.0 * a.std_error);
    }

    #[test]
    fn heavy_weights_are_flagged() {
        let b = QuadratureBudget {
            mc_samples: 1 << 16,
            ..Default::default()
        };
        let f = |x: f64, y: f64| 1.0 / ((1.0 + x.abs()) * (1.0 + y.abs()));
        let r = mc_integrate_2d(&f, &CauchyProduct::default(), &b);
        assert!(matches!(r, Err(Error::InfiniteVarianceSuspected)), "{r:?}");
    }
}
