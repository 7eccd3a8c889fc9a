//! Special functions: the Bessel function `J0`, spherical means of plane waves, and the
//! temporal kernel of the fractional Ornstein–Uhlenbeck factor.

use statrs::function::gamma::{gamma, ln_gamma};

/// Bessel function of the first kind of order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 12.0 {
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..80 {
            term *= q / (k as f64 * k as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // Hankel expansion, truncated at its smallest term.
        let mut p = 0.0;
        let mut q = 0.0;
        let mut a = 1.0;
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let kf = k as f64;
            if k > 0 {
                a *= (2.0 * kf - 1.0).powi(2) / (8.0 * kf * x);
            }
            if a > prev {
                break;
            }
            prev = a;
            match k % 4 {
                0 => p += a,
                1 => q -= a,
                2 => p -= a,
                _ => q += a,
            }
            if a < 1e-17 {
                break;
            }
        }
        let chi = x - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Average of `cos⟨ξ, y⟩` over the unit sphere in `R^d` for `|ξ||y| = x` (`d` in 1..=3).
pub fn spherical_mean(d: usize, x: f64) -> f64 {
    match d {
        1 => x.cos(),
        2 => bessel_j0(x),
        _ => {
            if x.abs() < 1e-4 {
                1.0 - x * x / 6.0 + x.powi(4) / 120.0
            } else {
                x.sin() / x
            }
        }
    }
}

/// `1 - spherical_mean(d, x)` without cancellation for small `x`.
pub fn one_minus_spherical_mean(d: usize, x: f64) -> f64 {
    let x = x.abs();
    if x > 0.5 {
        return 1.0 - spherical_mean(d, x);
    }
    // Alternating series sum_{k>=1} (-1)^{k+1} x^{2k} c_k with c_k depending on d.
    let mut sum = 0.0;
    let mut term = 1.0;
    let x2 = x * x;
    for k in 1..30 {
        let kf = k as f64;
        term *= match d {
            1 => x2 / ((2.0 * kf - 1.0) * (2.0 * kf)),
            2 => x2 / (4.0 * kf * kf),
            _ => x2 / ((2.0 * kf) * (2.0 * kf + 1.0)),
        };
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Normalizing constant `c_H` of the fractional noise.
pub fn c_h(h: f64) -> f64 {
    gamma(h - 0.5) / gamma(1.0 - h) / (2f64.powf(2.0 * (1.0 - h)) * std::f64::consts::PI.sqrt())
}

/// `K(z) = 2 ∫_0^∞ cos(z v) v^{1-2H} / (1 + v^2) dv` for `H` in `(1/2, 1)`.
///
/// Evaluated through the non-oscillatory representation
/// `2 c_H K(z) = Γ(a) e^{-z} + e^{-z} S(z) + e^{z} Γ(a, z)` with `a = 2H - 1` and
/// `S(z) = ∫_0^z w^{a-1} e^w dw`.
#[derive(Debug, Clone, Copy)]
pub struct FouKernel {
    pub h: f64,
    a: f64,
    gamma_a: f64,
    two_c_h: f64,
    k0: f64,
}

impl FouKernel {
    pub fn new(h: f64) -> Self {
        let a = 2.0 * h - 1.0;
        let k0 = std::f64::consts::PI / (std::f64::consts::PI * h).sin();
        Self {
            h,
            a,
            gamma_a: gamma(a),
            two_c_h: 2.0 * c_h(h),
            k0,
        }
    }

    /// `K(0) = π / sin(π H)`.
    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn k(&self, z: f64) -> f64 {
        let z = z.abs();
        if z < 1.0 {
            return self.k0 - self.deficit(z);
        }
        let a = self.a;
        let upper = z.powf(a) * upper_gamma_cf(a, z);
        let middle = if z <= 40.0 {
            // e^{-z} Σ z^{a+k} / (k! (a+k))
            let mut p = (-z + a * z.ln()).exp();
            let mut sum = p / a;
            let mut k = 1.0;
            loop {
                p *= z / k;
                let t = p / (a + k);
                sum += t;
                if k > z && t < 1e-17 * sum {
                    break;
                }
                k += 1.0;
            }
            sum
        } else {
            // z^{a-1} Σ_k Π_{j<=k} (j - a) / z^k, truncated at its smallest term.
            let mut t = 1.0;
            let mut sum = 1.0;
            let mut j = 1.0;
            loop {
                let next = t * (j - a) / z;
                if next > t || next < 1e-17 * sum {
                    break;
                }
                t = next;
                sum += t;
                j += 1.0;
            }
            z.powf(a - 1.0) * sum
        };
        let head = if z < 700.0 {
            self.gamma_a * (-z).exp()
        } else {
            0.0
        };
        (head + middle + upper) / self.two_c_h
    }

    /// `K(0) - K(z)`, accurate for small `z` where it behaves like `z^{2H}`.
    pub fn deficit(&self, z: f64) -> f64 {
        let z = z.abs();
        if z >= 1.0 {
            return self.k0 - self.k(z);
        }
        if z == 0.0 {
            return 0.0;
        }
        let a = self.a;
        let mut even = 0.0;
        let mut odd = 0.0;
        let mut p = z.powf(a);
        for k in 0..60 {
            let kf = k as f64;
            if k > 0 {
                p *= z / kf;
            }
            let t = p / (a + kf);
            if k % 2 == 0 {
                even += t;
            } else {
                odd += t;
            }
            if k > 2 && t < 1e-18 * even {
                break;
            }
        }
        let bracket = 2.0 * z.sinh() * even - 2.0 * z.cosh() * odd;
        let cosh_m1 = 2.0 * (0.5 * z).sinh().powi(2);
        (bracket - 2.0 * self.gamma_a * cosh_m1) / self.two_c_h
    }
}

/// Continued fraction `F` with `Γ(a, z) = e^{-z} z^a F(a, z)`, valid for `z >= 1`.
fn upper_gamma_cf(a: f64, z: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = z + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `ln Γ` re-exported for callers that need it alongside the kernel.
pub fn log_gamma(x: f64) -> f64 {
    ln_gamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_interval, integrate_oscillatory_tail, QuadratureBudget};

    fn kernel_by_quadrature(h: f64, z: f64) -> f64 {
        let b = QuadratureBudget::default().with_rel_tol(1e-11);
        let f = |v: f64| 2.0 * (z * v).cos() * v.powf(1.0 - 2.0 * h) / (1.0 + v * v);
        // split at 1 to isolate the integrable singularity
        let p = 1.0 - 2.0 * h + 1.0;
        let near = |s: f64| {
            if s > 0.0 {
                let v = s.powf(1.0 / p);
                f(v) / v.powf(1.0 - 2.0 * h) / p
            } else {
                0.0
            }
        };
        let head = integrate_interval(&near, 0.0, 1.0, &b).value;
        let period = std::f64::consts::PI / z;
        let mid_end = 1.0 + period * (20.0f64).ceil();
        let mid = integrate_interval(&f, 1.0, mid_end, &b).value;
        head + mid + integrate_oscillatory_tail(&f, mid_end, period, &b, 1.0).value
    }

    #[test]
    fn j0_matches_reference_values() {
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-12);
        assert!((bessel_j0(25.0) - 0.096_266_783_275_958_2).abs() < 1e-11);
        assert!((bessel_j0(12.0) - 0.047_689_310_796_833_5).abs() < 1e-10);
    }

    #[test]
    fn one_minus_mean_is_continuous() {
        for d in 1..=3 {
            let below = one_minus_spherical_mean(d, 0.5 - 1e-12);
            let above = one_minus_spherical_mean(d, 0.5 + 1e-12);
            assert!((below - above).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn kernel_at_zero_and_continuity() {
        let k = FouKernel::new(0.75);
        assert!(
            (k.k(0.0) - std::f64::consts::PI / (0.75 * std::f64::consts::PI).sin()).abs() < 1e-14
        );
        assert!((k.k(1.0 - 1e-12) - k.k(1.0 + 1e-12)).abs() < 1e-10);
        assert!((k.k(40.0 - 1e-12) - k.k(40.0 + 1e-12)).abs() < 1e-13);
    }

    #[test]
    fn kernel_matches_direct_quadrature() {
        for &(h, z) in &[
            (0.75, 0.3),
            (0.75, 2.0),
            (0.6, 7.0),
            (0.9, 0.05),
            (0.55, 1.5),
        ] {
            let exact = kernel_by_quadrature(h, z);
            let k = FouKernel::new(h).k(z);
            assert!(
                (k - exact).abs() < 1e-8 * exact.abs().max(1e-3),
                "H={h} z={z}: {k} vs {exact}"
            );
        }
    }

    #[test]
    fn kernel_matches_frozen_reference_values() {
        let cases = [
            (0.75, 0.001, 4.4427794708600056),
            (0.75, 0.1, 4.359306307163697),
            (0.75, 1.0, 3.11583983983387),
            (0.75, 5.0, 1.179593226764492),
            (0.75, 50.0, 0.35459749338426985),
            (0.6, 0.3, 2.7370117385703332),
            (0.6, 7.0, 0.16022921598749872),
        ];
        for (h, z, want) in cases {
            let got = FouKernel::new(h).k(z);
            assert!(
                (got - want).abs() < 1e-11 * want,
                "H={h} z={z}: {got} vs {want}"
            );
        }
        assert!((c_h(0.75) - 0.39894228040143268).abs() < 1e-15);
    }

    #[test]
    fn deficit_scales_like_power() {
        let k = FouKernel::new(0.7);
        let r = k.deficit(2e-9) / k.deficit(1e-9);
        assert!((r - 2f64.powf(1.4)).abs() < 1e-4);
    }
}
