"""Scalar special functions used throughout the package.

Everything here is a pure function of positive real arguments.  The gamma-family
functions are thin validating wrappers over scipy.special; ``phi``, ``phi_inv``
and ``kappa_star`` implement the shrinkage-rate machinery (phi(u) = u*log(1+1/u)
and its inverse) that quantifies how fast the expected shrinkage factor decays
for large observations.
"""

import math

import numpy as np
from scipy import special as _sp

_LOG_2PI = math.log(2.0 * math.pi)


def _validate_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.size == 0 or not np.all(np.isfinite(arr)) or not np.all(arr > 0.0):
        raise ValueError(f"{name} must be positive and finite, got {x!r}")
    return arr


def _scalar_like(x, result):
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(result)
    return result


def log_gamma(x):
    """Natural log of the gamma function for x > 0 (scalar or array)."""
    arr = _validate_positive(x, "x")
    return _scalar_like(x, _sp.gammaln(arr))


def polygamma(order, x):
    """Digamma (order 0) or trigamma (order 1) for x > 0."""
    if order not in (0, 1):
        raise ValueError(f"order must be 0 or 1, got {order!r}")
    arr = _validate_positive(x, "x")
    out = _sp.psi(arr) if order == 0 else _sp.polygamma(1, arr)
    return _scalar_like(x, out)


def gamma_quantile(p, shape, rate):
    """Quantile of the Ga(shape, rate) distribution.

    Inverts the regularized lower incomplete gamma, then rescales by the rate
    (the gamma family is closed under scaling).
    """
    if not (0.0 < p < 1.0) or not math.isfinite(p):
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    _validate_positive(shape, "shape")
    _validate_positive(rate, "rate")
    return float(_sp.gammaincinv(shape, p)) / float(rate)


def stirling_excess(u):
    """u*log(u) - u - log_gamma(u), computed without cancellation.

    For large u this equals log(u)/2 - log(2*pi)/2 - J(u) with J the Stirling
    correction series; the direct form loses all precision once u*log(u)
    overwhelms the ~log(u)/2 result.
    """
    arr = _validate_positive(u, "u")
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    small = arr < 30.0
    us = arr[small]
    out[small] = us * np.log(us) - us - _sp.gammaln(us)
    ul = arr[~small]
    out[~small] = 0.5 * np.log(ul) - 0.5 * _LOG_2PI - _stirling_series(ul)
    return _scalar_like(u, out if np.ndim(u) else out[0])


def _stirling_series(u):
    # J(u) = log_gamma(u) - (u-1/2)log(u) + u - log(2*pi)/2, for u >= 30
    r = 1.0 / u
    r2 = r * r
    return r * (1.0 / 12.0 + r2 * (-1.0 / 360.0 + r2 * (1.0 / 1260.0 - r2 / 1680.0)))


def log_gamma_ratio(u, c):
    """log Gamma(u + c) - log Gamma(u) for u > 0, c >= 0, stable for huge u."""
    arr = _validate_positive(u, "u")
    if c < 0:
        raise ValueError(f"c must be nonnegative, got {c!r}")
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    small = arr < 30.0
    us = arr[small]
    out[small] = _sp.gammaln(us + c) - _sp.gammaln(us)
    ul = arr[~small]
    out[~small] = (
        (ul - 0.5) * np.log1p(c / ul)
        + c * np.log(ul + c)
        - c
        + _stirling_series(ul + c)
        - _stirling_series(ul)
    )
    return _scalar_like(u, out if np.ndim(u) else out[0])


def phi(u):
    """phi(u) = u * log(1 + 1/u), strictly increasing from 0 to 1 on (0, inf)."""
    arr = _validate_positive(u, "u")
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    big = arr >= 1.0
    out[big] = arr[big] * np.log1p(1.0 / arr[big])
    us = arr[~big]
    # log(1 + 1/u) = log1p(u) - log(u); both terms positive for u < 1, so no
    # cancellation, and the form survives subnormal u where 1/u overflows.
    out[~big] = us * (np.log1p(us) - np.log(us))
    return _scalar_like(u, out if np.ndim(u) else out[0])


def phi_deriv(u):
    """First derivative of phi: log(1 + 1/u) - 1/(1 + u), positive on (0, inf)."""
    arr = _validate_positive(u, "u")
    arr = np.atleast_1d(arr)
    log_term = np.where(arr >= 1.0, np.log1p(1.0 / arr), np.log1p(arr) - np.log(arr))
    out = log_term - 1.0 / (1.0 + arr)
    return _scalar_like(u, out if np.ndim(u) else out[0])


def phi_inv(v, tol=1e-12, max_iter=200):
    """Inverse of phi on (0, 1) by safeguarded Newton iteration.

    The starting point covers both asymptotic regimes: u ~ 1/(2(1-v)) as v -> 1
    and u*log(1/u) ~ v as v -> 0.  phi is increasing and concave, so Newton from
    a bracketed iterate converges; steps leaving the bracket fall back to a
    geometric bisection.
    """
    if not (0.0 < v < 1.0) or not math.isfinite(v):
        raise ValueError(f"v must lie in (0, 1), got {v!r}")
    if v > 0.5:
        u = 1.0 / (2.0 * (1.0 - v))
    else:
        u = v / math.log(1.0 / v)
    lo, hi = 1e-300, 1e300
    for _ in range(max_iter):
        f = phi(u) - v
        if abs(f) <= tol * max(1.0, abs(v)):
            return u
        if f > 0.0:
            hi = min(hi, u)
        else:
            lo = max(lo, u)
        d = phi_deriv(u)
        u_new = u - f / d if d > 0.0 else math.nan
        if not math.isfinite(u_new) or not (lo < u_new < hi):
            u_new = math.sqrt(lo * hi)
        u = u_new
    return u


def kappa_star(y):
    """kappa*(y) = y * phi_inv(1/y) for y > 1; behaves like 1/log(y) at infinity."""
    if not (y > 1.0) or not math.isfinite(y):
        raise ValueError(f"y must exceed 1, got {y!r}")
    return y * phi_inv(1.0 / y)
