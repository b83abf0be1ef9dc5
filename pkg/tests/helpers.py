"""Shared independent oracles for the test suite.

Everything here deliberately avoids the library's own integration and sampling
code paths: plain trapezoid grids, bisection, and nested scipy.integrate.quad
calls on densities written out from scratch.
"""

import math

import numpy as np
from scipy import integrate
from scipy import special as sp


def bisect_phi_inv(v, iters=260):
    """Invert u*log(1+1/u) = v by pure geometric bisection."""
    lo, hi = 1e-30, 1e30
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if mid * math.log1p(1.0 / mid) < v:
            lo = mid
        else:
            hi = mid
    return mid


def quadrature_cdf(logpdf, lo, hi, n=200001):
    """CDF of a density known up to a constant, by log-grid trapezoid.

    Returns a vectorized callable; ``lo``/``hi`` must enclose essentially all
    of the mass (the result is renormalized over [lo, hi]).
    """
    s = np.linspace(math.log(lo), math.log(hi), n)
    with np.errstate(all="ignore"):
        g = logpdf(np.exp(s)) + s
    g = np.where(np.isfinite(g), g, -np.inf)
    w = np.exp(g - g.max())
    c = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(s))])
    c /= c[-1]

    def cdf(x):
        return np.interp(np.log(np.asarray(x, dtype=float)), s, c, left=0.0, right=1.0)

    return cdf


def grid_density_stats(logpdf, s_lo, s_hi, n=400001):
    """Normalizer, mean and variance of a density from a dense log grid."""
    s = np.linspace(s_lo, s_hi, n)
    x = np.exp(s)
    with np.errstate(all="ignore"):
        g = logpdf(x) + s
    g = np.where(np.isfinite(g), g, -np.inf)
    shift = g.max()
    w = np.exp(g - shift)
    z = np.trapezoid(w, s)
    mean = np.trapezoid(w * x, s) / z
    second = np.trapezoid(w * x * x, s) / z
    log_norm = shift + math.log(z)
    return log_norm, mean, second - mean * mean


def grid_cdf_bins(logpdf, s_lo, s_hi, n_bins, n=400001):
    """Equal-probability bin edges of a positive-support density."""
    s = np.linspace(s_lo, s_hi, n)
    with np.errstate(all="ignore"):
        g = logpdf(np.exp(s)) + s
    g = np.where(np.isfinite(g), g, -np.inf)
    w = np.exp(g - g.max())
    c = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(s))])
    c /= c[-1]
    probs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    edges = np.exp(np.interp(probs, c, s))
    return np.concatenate([[0.0], edges, [np.inf]])


def irb_triple_quadrature(u, b, a):
    """Density value at u of the three-latent gamma-mixture representation.

    Evaluates, by nested quadrature only,

        (1/B(b,a)) * Int s^-b/Gamma(1-b) * w^(b+a-1) e^-w / Gamma(b+a)
                     * z^(s+w) e^-z / Gamma(s+w+1) * u^(s+w-1) e^(-z u)
                     d(s, w, z).

    The whole integrand is exponentiated once so no partial factor can
    overflow; the s-variable is substituted s = x^(1/(1-b)) to remove the
    endpoint singularity.
    """
    log_u = math.log(u)

    def log_core(s, w, z):
        c = s + w
        return (
            -b * math.log(s) - sp.gammaln(1.0 - b)
            + (b + a - 1.0) * math.log(w) - w - sp.gammaln(b + a)
            + c * math.log(z) - z - sp.gammaln(c + 1.0)
            + (c - 1.0) * log_u - z * u
        )

    def inner_z(s, w):
        c = s + w
        mode = c / (1.0 + u)

        def fz(z):
            g = log_core(s, w, z)
            return math.exp(g) if g > -745.0 else 0.0

        hi = mode * 30.0 + 50.0
        val, _ = integrate.quad(fz, 0.0, hi, points=[mode] if mode < hi else None,
                                limit=400, epsabs=1e-300, epsrel=1e-10)
        return val

    # after integrating z out, the s-integrand decays only at rate log(1+1/u)
    # and the w-integrand at rate 1 + log(1+1/u); truncate accordingly
    rate = math.log1p(1.0 / u)
    s_hi = max(60.0, 90.0 / rate)
    w_hi = max(60.0, 90.0 / (1.0 + rate))

    def inner_w(s):
        val, _ = integrate.quad(lambda w: inner_z(s, w), 0.0, w_hi, limit=400,
                                epsabs=1e-300, epsrel=1e-9)
        return val

    power = 1.0 / (1.0 - b)

    def fs(x):
        s = x ** power
        jac = power * x ** (power - 1.0)
        return inner_w(s) * jac

    val, _ = integrate.quad(fs, 0.0, s_hi ** (1.0 - b), limit=400,
                            epsabs=1e-300, epsrel=1e-9)
    log_beta = sp.gammaln(b) + sp.gammaln(a) - sp.gammaln(b + a)
    return val / math.exp(log_beta)


def gig_moment_quadrature(p, b, gam, moment=1):
    """Normalized moment of x^(p-1) exp(-b x/2 - gam/(2x)) by quadrature."""

    def log_pdf(x):
        return (p - 1.0) * np.log(x) - 0.5 * b * x - 0.5 * gam / x

    def kernel(s, extra):
        x = math.exp(s)
        return math.exp(log_pdf(np.array([x]))[0] + (1.0 + extra) * s)

    mode = math.log((math.sqrt((p - 1.0) ** 2 + b * gam) + (p - 1.0)) / b)
    z, _ = integrate.quad(lambda s: kernel(s, 0.0), mode - 60, mode + 60,
                          points=[mode], limit=400)
    m, _ = integrate.quad(lambda s: kernel(s, float(moment)), mode - 60, mode + 60,
                          points=[mode], limit=400)
    return m / z
