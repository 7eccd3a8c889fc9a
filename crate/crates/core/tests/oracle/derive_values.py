"""Independent high-precision reference values frozen into the Rust tests.

Run with `python3 derive_values.py`; requires mpmath. Oscillatory integrals in xi are split at 1
so that the endpoint singularity is handled by tanh-sinh and the tail by `quadosc`.
"""
import sys
from mpmath import mp, mpf, quad, quadosc, cos, exp, pi, gamma, inf, sqrt, sin, re

mp.dps = 20


def out(label, value):
    print("%-34s = %s" % (label, mp.nstr(value, 17)))
    sys.stdout.flush()


def c_h(h):
    return gamma(h - mpf(1) / 2) / gamma(1 - h) / (2 ** (2 * (1 - h)) * sqrt(pi))


def kernel(z, h):
    """2 int_0^inf cos(zv) v^(1-2h) / (1+v^2) dv, integrated along the ray arg v = pi/4 where
    the integrand decays exponentially and the pole at v = i is not crossed."""
    if z == 0:
        return pi / sin(pi * h)
    w = exp(1j * pi / 4)
    f = lambda y: exp(1j * z * w * y) * (w * y) ** (1 - 2 * h) / (1 + (w * y) ** 2) * w
    return 2 * re(quad(f, [0, 1, 10, 100, inf]))


def lemma(x, h):
    # 2 int v^(1-2h) (1 - 2 e^-x cos(vx) + e^-2x) / (1+v^2) dv
    return (1 + exp(-2 * x)) * kernel(0, h) - 2 * exp(-x) * kernel(x, h)


def fractional_one_minus_cos(p):
    # int_R (1 - cos u) |u|^{-1-p} du
    return pi / (gamma(1 + p) * sin(pi * p / 2))


def variogram_space_closed(h, alpha, beta):
    s = 2 * alpha * h + beta - 1
    return 2 * c_h(h) * pi / sin(pi * h) * fractional_one_minus_cos(s)


def variogram_time_closed(h, alpha, beta):
    p = 2 * h - (1 - beta) / alpha
    inner = pi / (alpha * sin(pi * (1 - beta) / (2 * alpha)))
    return 2 * c_h(h) * inner * fractional_one_minus_cos(p)


def variogram_mixed(h, alpha, beta, dt, dx):
    """D for d = 1 at lag (dt, dx) by xi-integration of the tau-integrated kernel."""
    k0 = pi / sin(pi * h)
    def f(x):
        psi = x ** alpha
        return x ** (-beta) * psi ** (-2 * h) * (k0 - cos(dx * x) * kernel(dt * psi, h))
    return 2 * c_h(h) * 2 * (quad(f, [0, 1]) + quadosc(f, [1, inf], omega=dx))


if __name__ == "__main__":
    H = mpf("0.75")
    out("c_H(0.75)", c_h(H))
    out("truncated alpha=1 xi=10", 2 * quad(lambda y: 2 * sin(5 * y) ** 2 / y ** 2, [0, 0.25, 0.5, 0.75, 1]))
    out("truncated alpha=1.5 xi=3", 2 * quad(lambda y: 2 * sin(mpf(3) / 2 * y) ** 2 / y ** mpf(2.5), [0, 0.5, 1]))
    out("lemma x=0.5 H=0.75", lemma(mpf("0.5"), H))
    out("lemma x=0.1 H=0.6", lemma(mpf("0.1"), mpf("0.6")))
    for z in ["0.001", "0.1", "1", "5", "50"]:
        out("K(z=%s, H=0.75)" % z, kernel(mpf(z), H))
    for z in ["0.3", "7"]:
        out("K(z=%s, H=0.6)" % z, kernel(mpf(z), mpf("0.6")))
    out("criterion a=2 H=.75 b=.5 t=1", 2 * quad(lambda r: r ** mpf(-0.5) / (1 + r ** 3), [0, 1, inf]))
    out("4 pi / 3", 4 * pi / 3)
    out("D(0,1) rough1d closed", variogram_space_closed(H, 1, mpf("0.6")))
    out("D(1,0) rough1d closed", variogram_time_closed(H, 1, mpf("0.6")))
    out("D(1,1) rough1d", variogram_mixed(H, 1, mpf("0.6"), 1, 1))
    out("D(0.5,2) H=.6 a=1.5 b=.4", variogram_mixed(mpf("0.6"), mpf("1.5"), mpf("0.4"), mpf("0.5"), 2))
