"""Deterministic quadrature evaluation of marginal priors and posteriors.

With the global parameters fixed (tau = 1, and beta = 1 unless stated), the
marginal prior of lambda and every posterior functional of the local parameter
u reduce to one-dimensional integrals over u.  All integrands here are
evaluated in log space on the log-u axis, with the integration seeded at the
integrand mode: the dominant peak wanders over many orders of magnitude as y
varies, so a fixed grid would be hopeless but a mode-centred adaptive rule is
cheap and accurate.

These routines are the ground truth that the MCMC engine is tested against;
they share nothing with the sampling code paths except the scalar special
functions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize

from .model_core import GL, PriorSpec, kl_neighborhood
from .special_math import log_gamma_ratio, phi, stirling_excess

_S_LO = -700.0
_S_HI = 700.0
_COARSE_POINTS = 4001


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature cannot reach a trustworthy estimate."""

    def __init__(self, message, estimate=math.nan):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances and subdivision budget for the adaptive quadrature."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.max_subdivisions > 0):
            raise ValueError("tolerances and subdivision budget must be positive")


@dataclass(frozen=True)
class XiValue:
    """xi = 1/lambda - 1 - log(1/lambda) >= 0, zero exactly at lambda = 1."""

    xi: float

    def __post_init__(self):
        if not (self.xi >= 0 and math.isfinite(self.xi)):
            raise ValueError(f"xi must be finite and nonnegative, got {self.xi!r}")

    @classmethod
    def from_lambda(cls, lam) -> "XiValue":
        return cls(xi_value(lam))


def xi_value(lam):
    """1/lambda - 1 + log(lambda), evaluated stably near lambda = 1."""
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be positive, got {lam!r}")
    t = math.log(lam)
    return math.expm1(-t) + t


def _log_integral(log_f, cfg: QuadConfig, s_lo=_S_LO, s_hi=_S_HI):
    """log of integral of exp(log_f(s)) ds, with log_f vectorized over s.

    Scans a coarse grid for the mode, refines it, restricts to the window where
    the integrand is within exp(-745) of the peak, and hands the peak-scaled
    integrand to adaptive Gauss-Kronrod quadrature.  Returns (log_value,
    relative_error_estimate).
    """
    s_grid = np.linspace(s_lo, s_hi, _COARSE_POINTS)
    with np.errstate(all="ignore"):
        g = np.asarray(log_f(s_grid), dtype=float)
    g[~np.isfinite(g)] = -np.inf
    k = int(np.argmax(g))
    if not np.isfinite(g[k]):
        raise QuadratureError("integrand vanished on the whole search range")
    step = s_grid[1] - s_grid[0]
    lo_b = s_grid[max(k - 1, 0)]
    hi_b = s_grid[min(k + 1, len(s_grid) - 1)]
    res = _optimize.minimize_scalar(
        lambda t: -float(log_f(np.array([t]))[0]),
        bounds=(lo_b, hi_b),
        method="bounded",
        options={"xatol": 1e-10},
    )
    s_star, g_star = float(res.x), -float(res.fun)
    if g[k] > g_star:
        s_star, g_star = float(s_grid[k]), float(g[k])

    keep = np.flatnonzero(g >= g_star - 745.0)
    lo = max(s_lo, float(s_grid[keep[0]]) - step)
    hi = min(s_hi, float(s_grid[keep[-1]]) + step)

    def scaled(t):
        val = float(log_f(np.array([t]))[0]) - g_star
        return math.exp(val) if val > -745.0 else 0.0

    points = [s_star] if lo < s_star < hi else None
    with np.errstate(all="ignore"):
        value, err = _integrate.quad(
            scaled,
            lo,
            hi,
            points=points,
            limit=cfg.max_subdivisions,
            epsabs=cfg.abs_tol,
            epsrel=cfg.rel_tol,
        )
    if not (value > 0.0 and math.isfinite(value)):
        raise QuadratureError(f"quadrature returned {value!r}", estimate=err)
    rel_err = err / value
    if rel_err > 1e-6:
        raise QuadratureError(
            f"quadrature error estimate {rel_err:.2e} exceeds 1e-6", estimate=rel_err
        )
    return g_star + math.log(value), rel_err


def _neg_y_phi(u, yprime):
    """-u * log(1 + yprime/u) = -yprime * phi(u/yprime), elementwise stable."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = u <= yprime
    us = u[small]
    # u << yprime: log(1 + yprime/u) has no cancellation written as a difference
    out[small] = -us * (np.log(yprime + us) - np.log(us))
    ub = u[~small]
    if ub.size:
        out[~small] = -ub * np.log1p(yprime / ub)
    return out


def marginal_prior_density(lam, prior: PriorSpec, cfg: QuadConfig = QuadConfig(),
                           return_error=False):
    """Marginal prior density p(lambda) with beta = tau = 1.

    For the mixing priors this is (1/lambda^2) times the integral over u of
    pi(u) (u^u / Gamma(u)) lambda^(-u) exp(-u/lambda); the GL baseline (u = 1)
    is the closed-form IG(2, 1) density.
    """
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be positive, got {lam!r}")
    if prior.family == GL:
        dens = math.exp(-3.0 * math.log(lam) - 1.0 / lam)
        return (dens, 0.0) if return_error else dens
    xi = xi_value(lam)

    def log_f(s):
        u = np.exp(s)
        return prior.local_log_density(u) + stirling_excess(u) - u * xi + s

    log_i, rel_err = _log_integral(log_f, cfg)
    dens = math.exp(log_i - 2.0 * math.log(lam))
    return (dens, rel_err) if return_error else dens


def _posterior_log_weight(u, yprime, delta, prior):
    """Log of pi(u) * Gamma(u+delta+1)/Gamma(u) * u^u / (yprime+u)^(u+delta+1)."""
    return (
        prior.local_log_density(u)
        + log_gamma_ratio(u, delta + 1.0)
        - (delta + 1.0) * np.log(yprime + u)
        + _neg_y_phi(u, yprime)
    )


def _posterior_expectation(yprime, delta, prior, cfg, extra_log):
    """E[g(u) | y] for positive g, with log g supplied as ``extra_log``."""

    def log_f0(s):
        u = np.exp(s)
        return _posterior_log_weight(u, yprime, delta, prior) + s

    def log_f1(s):
        u = np.exp(s)
        return _posterior_log_weight(u, yprime, delta, prior) + extra_log(u) + s

    log_i0, _ = _log_integral(log_f0, cfg)
    log_i1, _ = _log_integral(log_f1, cfg)
    return math.exp(log_i1 - log_i0)


def _kappa_mean_scaled(yprime, delta, prior, cfg):
    return _posterior_expectation(
        yprime, delta, prior, cfg, lambda u: np.log(u) - np.log(delta + u)
    )


def posterior_kappa_mean(y, delta, prior: PriorSpec, cfg: QuadConfig = QuadConfig()):
    """Posterior mean of the shrinkage factor with beta = tau = 1.

    Under the GL baseline this is exactly 1/(delta + 1) for every y; under the
    mixing priors it is the ratio of two u-integrals sharing one weight.
    """
    if not (y > 0 and delta > 0):
        raise ValueError("y and delta must be positive")
    if prior.family == GL:
        return 1.0 / (delta + 1.0)
    return _kappa_mean_scaled(delta * y, delta, prior, cfg)


def posterior_lambda_moments(y, delta, prior: PriorSpec, beta=1.0,
                             cfg: QuadConfig = QuadConfig()):
    """Posterior mean and variance of lambda with tau = 1 and beta fixed.

    The mean uses the shrinkage identity beta + (1 - E[kappa|y])(y - beta); the
    variance comes from the conditional inverse-gamma second moment mixed over
    u, which exists for delta > 1 (otherwise variance is reported as NaN).
    A fixed beta only rescales the posterior weight argument to delta*y/beta.
    """
    if not (y > 0 and delta > 0 and beta > 0):
        raise ValueError("y, delta, beta must be positive")
    if prior.family == GL:
        shape = 2.0 + delta
        scale = delta * y + beta
        mean = scale / (shape - 1.0)
        second = scale * scale / ((shape - 1.0) * (shape - 2.0))
        return mean, second - mean * mean
    yprime = delta * y / beta
    kbar = _kappa_mean_scaled(yprime, delta, prior, cfg)
    mean = beta + (1.0 - kbar) * (y - beta)
    if delta <= 1.0:
        return mean, math.nan
    second = beta * beta * _posterior_expectation(
        yprime,
        delta,
        prior,
        cfg,
        lambda u: 2.0 * np.log(yprime + u) - np.log(delta + u) - np.log(delta + u - 1.0),
    )
    return mean, second - mean * mean


def prior_kl_mass(lambda0, eps, delta, prior: PriorSpec, cfg: QuadConfig = QuadConfig()):
    """Prior probability of the KL ball of radius eps around lambda0.

    Integrates the marginal prior density (beta = tau = 1) over the lambda
    interval on which the KL divergence stays below eps, splitting at the
    density spike at lambda = 1 when the interval straddles it.
    """
    lo, hi = kl_neighborhood(lambda0, eps, delta)

    def dens(lam):
        return marginal_prior_density(lam, prior, cfg)

    points = [1.0] if lo < 1.0 < hi else None
    mass, err = _integrate.quad(
        dens,
        lo,
        hi,
        points=points,
        limit=cfg.max_subdivisions,
        epsabs=1e-14,
        epsrel=max(cfg.rel_tol, 1e-9),
    )
    if not math.isfinite(mass) or mass < -1e-12 or mass > 1.0 + 1e-9:
        raise QuadratureError(f"KL mass {mass!r} outside [0, 1]", estimate=err)
    return min(max(mass, 0.0), 1.0)
