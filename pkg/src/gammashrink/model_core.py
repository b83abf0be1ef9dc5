"""Model data types, prior densities, conditional posteriors and KL geometry.

The hierarchy is

    y_i | lambda_i ~ Ga(delta_i, delta_i / (lambda_i * eta_i))
    lambda_i | u_i ~ IG(1 + tau*u_i, beta*tau*u_i)
    u_i ~ pi(u_i)   (SB, IRB, or a point mass at 1 for the GL baseline)

so that beta is the prior grand mean of lambda_i and the posterior mean
decomposes as beta + (1 - E[kappa_i | y_i]) (y_i - beta) with shrinkage factor
kappa_i = tau*u_i / (delta_i + tau*u_i).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .special_math import log_gamma

SB = "sb"
IRB = "irb"
GL = "gl"
FAMILIES = (SB, IRB, GL)


@dataclass(frozen=True)
class Observation:
    """One data point: observed value y, known shape delta, offset eta."""

    y: float
    delta: float
    eta: float = 1.0

    def __post_init__(self):
        for name in ("y", "delta", "eta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"Observation.{name} must be positive, got {v!r}")


@dataclass(frozen=True)
class FixedValue:
    """A global parameter held fixed during sampling."""

    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value > 0):
            raise ValueError(f"fixed value must be positive, got {self.value!r}")


@dataclass(frozen=True)
class GammaPrior:
    """Conditionally conjugate Ga(shape, rate) hyperprior for a global parameter."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("gamma hyperprior parameters must be positive")


@dataclass(frozen=True)
class PriorSpec:
    """Prior family plus local hyperparameters and global-parameter treatments.

    ``a`` and ``b`` always refer to the hyperparameters as written for the SB
    density u^(a-1) / (B(a,b) (1+u)^(a+b)); the IRB density uses the same pair
    but with the B(b, a) normalizer (see ``irb_log_density``).  The GL baseline
    ignores (a, b).
    """

    family: str
    a: float = 2.0
    b: float = 0.5
    beta: FixedValue | GammaPrior = field(default_factory=lambda: GammaPrior(0.1, 0.1))
    tau: FixedValue | GammaPrior = field(default_factory=lambda: GammaPrior(0.1, 0.1))

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("hyperparameters a, b must be positive")
        for name in ("beta", "tau"):
            if not isinstance(getattr(self, name), (FixedValue, GammaPrior)):
                raise ValueError(f"{name} must be FixedValue or GammaPrior")

    def local_log_density(self, u):
        if self.family == SB:
            return sb_log_density(u, self.a, self.b)
        if self.family == IRB:
            return irb_log_density(u, self.b, self.a)
        raise ValueError("GL has no local density (point mass at u = 1)")


@dataclass(frozen=True)
class TailIndices:
    """Exponents (alpha, gamma_idx) of the local prior near the origin.

    The admissible class behaves like u^(alpha-1) / (1 + log(1+1/u))^(1+gamma_idx)
    as u -> 0; the pair (alpha=0, gamma_idx<=0) is excluded (improper).
    """

    alpha: float
    gamma_idx: float

    def __post_init__(self):
        if self.alpha < 0 or self.gamma_idx < -1:
            raise ValueError("require alpha >= 0 and gamma_idx >= -1")
        if self.alpha == 0 and self.gamma_idx <= 0:
            raise ValueError("alpha = 0 requires gamma_idx > 0")

    @classmethod
    def from_prior(cls, prior: PriorSpec) -> "TailIndices":
        if prior.family == SB:
            return cls(alpha=prior.a, gamma_idx=-1.0)
        if prior.family == IRB:
            return cls(alpha=0.0, gamma_idx=prior.a)
        raise ValueError("GL baseline has no origin tail indices")


def _log_beta(a, b):
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def _check_u(u):
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)) or not np.all(arr > 0.0):
        raise ValueError(f"u must be positive and finite, got {u!r}")
    return arr


def _ret(u, value):
    return float(value) if np.ndim(u) == 0 else value


def sb_log_density(u, a, b):
    """Log density of the scaled beta (beta prime) prior on u > 0."""
    arr = _check_u(u)
    out = (a - 1.0) * np.log(arr) - (a + b) * np.log1p(arr) - _log_beta(a, b)
    return _ret(u, out)


def sb_density(u, a, b):
    return _ret(u, np.exp(sb_log_density(u, a, b)))


def _log_log1p_recip(u):
    # log(1 + 1/u) without overflow or cancellation on the full positive axis
    return np.where(u >= 1.0, np.log1p(1.0 / np.maximum(u, 1.0)),
                    np.log1p(u) - np.log(np.minimum(u, 1.0)))


def irb_log_density(u, b, a):
    """Log density of the inverse rescaled beta prior on u > 0.

    Parameter order follows the B(b, a) normalizer: the density is
    (1/B(b,a)) * [u(1+u)]^-1 * L^(b-1) / (1+L)^(b+a) with L = log(1 + 1/u).
    """
    arr = _check_u(u)
    big = _log_log1p_recip(arr)
    out = (
        -_log_beta(b, a)
        - np.log(arr)
        - np.log1p(arr)
        + (b - 1.0) * np.log(big)
        - (b + a) * np.log1p(big)
    )
    return _ret(u, out)


def irb_density(u, b, a):
    return _ret(u, np.exp(irb_log_density(u, b, a)))


def shrinkage_factor(tau, u, delta):
    """kappa = tau*u / (delta + tau*u), the weight pulling y toward the grand mean."""
    if not (tau > 0 and u > 0 and delta > 0):
        raise ValueError("tau, u, delta must all be positive")
    nu = tau * u
    return nu / (delta + nu)


def conditional_lambda_posterior(obs: Observation, nu, beta):
    """Inverse-gamma conditional posterior of lambda given nu = tau*u.

    Returns (shape, scale) of IG(1 + delta + nu, delta*y/eta + beta*nu); the
    offset eta enters only through the rescaled data term.
    """
    if not (nu > 0 and beta > 0):
        raise ValueError("nu and beta must be positive")
    shape = 1.0 + obs.delta + nu
    scale = obs.delta * obs.y / obs.eta + beta * nu
    return shape, scale


def kl_divergence(lambda0, lam, delta):
    """KL divergence between Ga(delta, delta/lambda0) and Ga(delta, delta/lam).

    Equals delta * (r - 1 - log r) with r = lambda0/lam, evaluated through
    expm1 so that it vanishes cleanly (quadratically) at lam = lambda0.
    """
    if not (lambda0 > 0 and lam > 0 and delta > 0):
        raise ValueError("lambda0, lam, delta must all be positive")
    t = math.log(lambda0) - math.log(lam)
    return delta * (math.expm1(t) - t)


def _rho(x):
    # rho(x) = x - 1 - log(x) >= 0, the KL kernel; the log1p form is only
    # needed (and only accurate) near x = 1
    if 0.5 < x < 2.0:
        h = x - 1.0
        return h - math.log1p(h)
    return x - 1.0 - math.log(x)


def _solve_rho(target, lower_branch):
    """Solve rho(x) = target by bisection on (0,1] or [1,inf).

    The lower root can be exponentially close to 0 (x ~ e^-target), so that
    branch bisects geometrically to keep relative precision.
    """
    if lower_branch:
        hi = 1.0
        lo = 0.5
        while _rho(lo) < target:
            lo *= 0.5
            if lo < 1e-300:
                break
    else:
        lo = 1.0
        hi = 2.0
        while _rho(hi) < target:
            hi *= 2.0
            if hi > 1e300:
                break
    for _ in range(200):
        mid = math.sqrt(lo * hi) if lower_branch else 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _rho(mid) < target:
            if lower_branch:
                hi = mid
            else:
                lo = mid
        else:
            if lower_branch:
                lo = mid
            else:
                hi = mid
    return math.sqrt(lo * hi) if lower_branch else 0.5 * (lo + hi)


def kl_neighborhood(lambda0, eps, delta):
    """Open lambda-interval on which kl_divergence(lambda0, ., delta) < eps.

    Solves rho(x) = eps/delta on both sides of 1, giving contraction and
    expansion factors of the precision 1/lambda0; maps the resulting precision
    interval back to lambda.
    """
    if not (eps > 0 and math.isfinite(eps)):
        raise ValueError(f"eps must be positive, got {eps!r}")
    if not (lambda0 > 0 and delta > 0):
        raise ValueError("lambda0 and delta must be positive")
    target = eps / delta
    x_lo = _solve_rho(target, lower_branch=True)   # = 1 - c_L
    x_hi = _solve_rho(target, lower_branch=False)  # = 1 + c_U
    return (lambda0 / x_hi, lambda0 / x_lo)
