"""Metropolis-within-Gibbs samplers for the SB, IRB and GL hierarchies.

Every block except the local-parameter update is conjugate.  The full
conditional of nu_i = tau * u_i is log-concave but nonstandard; it is sampled
by independence Metropolis-Hastings with a gamma proposal fitted by the
iterative first/second-derivative matching of Miller (2019).  All per-unit
updates are vectorized across the n units within a sweep.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as _sp

from .model_core import GL, IRB, SB, FixedValue, GammaPrior, Observation, PriorSpec
from .rand_dist import GigParams, RngHandle, sample_gamma, sample_gig, sample_inverse_gamma
from .special_math import stirling_excess

logger = logging.getLogger(__name__)

ACCEPTANCE_WARNING_THRESHOLD = 0.20
_WINDOW = 200          # proposals per acceptance-monitoring window
_WINDOW_MIN_RATE = 0.05


class ChainError(RuntimeError):
    """A sampler block produced an invalid value; carries unit and step label."""

    def __init__(self, step, unit=None, message=""):
        self.step = step
        self.unit = unit
        where = f"step {step!r}" + ("" if unit is None else f", unit {unit}")
        super().__init__(f"chain error at {where}: {message}")


@dataclass(frozen=True)
class McmcConfig:
    burnin: int = 2000
    samples: int = 3000
    thin: int = 1
    seed: int = 0
    miller_tol: float = 1e-8
    miller_max_iter: int = 50

    def __post_init__(self):
        if self.burnin < 0 or self.samples < 1 or self.thin < 1:
            raise ValueError("require burnin >= 0, samples >= 1, thin >= 1")
        if self.miller_tol <= 0 or self.miller_max_iter < 1:
            raise ValueError("invalid Miller fit settings")


@dataclass
class Dataset:
    """Column-wise view of a list of observations."""

    y: np.ndarray
    delta: np.ndarray
    eta: np.ndarray

    @classmethod
    def from_observations(cls, observations):
        obs = list(observations)
        if not obs:
            raise ValueError("need at least one observation")
        return cls(
            y=np.array([o.y for o in obs], dtype=float),
            delta=np.array([o.delta for o in obs], dtype=float),
            eta=np.array([o.eta for o in obs], dtype=float),
        )

    @property
    def n(self):
        return self.y.size


def as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    return Dataset.from_observations(data)


@dataclass
class ChainState:
    """Current values of all latent variables for one chain."""

    family: str
    lam: np.ndarray
    beta: float
    tau: float
    nu: np.ndarray
    aug_t: np.ndarray | None = None          # SB only
    aug_s: np.ndarray | None = None          # IRB only
    aug_w: np.ndarray | None = None
    aug_z: np.ndarray | None = None


@dataclass
class MillerFit:
    """Result of the gamma-approximation fixed point.

    ``ok`` is False where the iteration hit an infeasible pair (shape below 1
    with a locally convex target, or a nonpositive rate) or failed to
    converge; callers then widen the proposal instead of using it as-is.
    """

    shape: np.ndarray
    rate: np.ndarray
    ok: np.ndarray
    mu: np.ndarray
    iterations: int


def _miller_fit(deriv1, deriv2, init_mean, cfg: McmcConfig) -> MillerFit:
    mu = np.atleast_1d(np.asarray(init_mean, dtype=float)).copy()
    ok = np.isfinite(mu) & (mu > 0)
    shape = np.full_like(mu, np.nan)
    rate = np.full_like(mu, np.nan)
    converged = np.zeros(mu.shape, dtype=bool)
    for it in range(1, cfg.miller_max_iter + 1):
        f1 = np.atleast_1d(np.asarray(deriv1(mu), dtype=float))
        f2 = np.atleast_1d(np.asarray(deriv2(mu), dtype=float))
        live = ok & ~converged
        if not np.all(np.isfinite(f1[live])) or not np.all(np.isfinite(f2[live])):
            bad = live & (~np.isfinite(f1) | ~np.isfinite(f2))
            raise ValueError(
                f"non-finite log-density derivative at mu={mu[bad][:3]!r}"
            )
        a_new = 1.0 - mu * mu * f2
        b_new = -mu * f2 - f1
        # shape < 1 means the target is locally convex (no gamma can match);
        # shape == 1 (exponential target) is a legitimate boundary fit.
        infeasible = live & ((a_new < 1.0) | (b_new <= 0.0))
        ok[infeasible] = False
        live = ok & ~converged
        if it > 1:
            with np.errstate(all="ignore"):
                step_a = np.abs(np.log(a_new) - np.log(shape))
                step_b = np.abs(np.log(b_new) - np.log(rate))
            newly = live & (step_a < cfg.miller_tol) & (step_b < cfg.miller_tol)
            converged[newly] = True
        shape[live] = a_new[live]
        rate[live] = b_new[live]
        live = ok & ~converged
        if not np.any(live):
            break
        mu[live] = shape[live] / rate[live]
    ok &= converged
    return MillerFit(shape=shape, rate=rate, ok=ok, mu=mu, iterations=it)


def miller_gamma_approx(logpdf_deriv1, logpdf_deriv2, init_mean, cfg: McmcConfig = McmcConfig()):
    """Fit Ga(shape, rate) to a smooth positive-support log density.

    At the running mean mu the shape is set to 1 - mu^2 f''(mu) and the rate to
    (shape - 1)/mu - f'(mu); the mean is then moved to shape/rate and the pair
    is iterated to a fixed point.  A gamma target is recovered exactly in one
    step.  Returns a MillerFit; ``ok=False`` signals the caller to fall back
    to a widened proposal.
    """
    if not (init_mean > 0 and math.isfinite(init_mean)):
        raise ValueError(f"init_mean must be positive, got {init_mean!r}")
    fit = _miller_fit(logpdf_deriv1, logpdf_deriv2, float(init_mean), cfg)
    return MillerFit(
        shape=float(fit.shape[0]),
        rate=float(fit.rate[0]),
        ok=bool(fit.ok[0]),
        mu=float(fit.mu[0]),
        iterations=fit.iterations,
    )


def _nu_target(c_shape, c_rate, lam, beta):
    """Log conditional of nu up to constants, with first two derivatives.

    The target is Ga(nu | c_shape, c_rate) * Ga(1/lam | nu, beta*nu) as a
    function of nu:

        f(nu) = (c_shape - 1) log nu - c_rate nu + nu log(beta nu)
                - log Gamma(nu) - nu log lam - beta nu / lam.

    The nu log nu - log Gamma(nu) part is evaluated through its Stirling
    residual so huge nu cannot cancel catastrophically.
    """
    log_beta = np.log(beta)
    log_lam = np.log(lam)
    drift = log_beta - log_lam - beta / lam

    def f(nu):
        return (
            (c_shape - 1.0) * np.log(nu)
            - c_rate * nu
            + stirling_excess(nu)
            + nu
            + nu * drift
        )

    def f1(nu):
        return (c_shape - 1.0) / nu - c_rate + np.log(nu) + 1.0 - _sp.psi(nu) + drift

    def f2(nu):
        return -(c_shape - 1.0) / (nu * nu) + 1.0 / nu - _sp.polygamma(1, nu)

    return f, f1, f2


def nu_logpdf_sb(nu, t, tau, beta, lam, a):
    """Value and first two derivatives of the SB nu-conditional log density."""
    f, f1, f2 = _nu_target(a, t / tau, lam, beta)
    return f(nu), f1(nu), f2(nu)


def nu_logpdf_irb(nu, s, w, z, tau, beta, lam):
    """Value and first two derivatives of the IRB nu-conditional log density."""
    f, f1, f2 = _nu_target(s + w, z / tau, lam, beta)
    return f(nu), f1(nu), f2(nu)


def tau_logpdf_gl(tau, lam, beta, a_tau, b_tau):
    """Value and first two derivatives of the GL tau-conditional log density."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    drift = n * np.log(beta) + np.sum(-np.log(lam) - beta / lam)
    f = (
        (a_tau - 1.0) * np.log(tau)
        - b_tau * tau
        + n * (stirling_excess(tau) + tau)
        + tau * drift
    )
    f1 = (
        (a_tau - 1.0) / tau
        - b_tau
        + n * (np.log(tau) + 1.0 - _sp.psi(tau))
        + drift
    )
    f2 = -(a_tau - 1.0) / (tau * tau) + n * (1.0 / tau - _sp.polygamma(1, tau))
    return f, f1, f2


@dataclass
class MhControl:
    """Rolling acceptance window per MH site, driving the proposal widening."""

    n_sites: int
    window: np.ndarray = field(init=False)
    accepted: np.ndarray = field(init=False)
    mode_match: np.ndarray = field(init=False)
    total: np.ndarray = field(init=False)
    total_accepted: np.ndarray = field(init=False)
    fallbacks: int = 0

    def __post_init__(self):
        self.window = np.zeros(self.n_sites, dtype=int)
        self.accepted = np.zeros(self.n_sites, dtype=int)
        self.mode_match = np.zeros(self.n_sites, dtype=bool)
        self.total = np.zeros(self.n_sites, dtype=int)
        self.total_accepted = np.zeros(self.n_sites, dtype=int)

    def record(self, accept_mask):
        self.window += 1
        self.accepted += accept_mask
        self.total += 1
        self.total_accepted += accept_mask
        done = self.window >= _WINDOW
        if np.any(done):
            slow = done & (self.accepted < _WINDOW_MIN_RATE * self.window)
            self.mode_match[done] = slow[done]
            self.window[done] = 0
            self.accepted[done] = 0

    def acceptance_rate(self):
        with np.errstate(invalid="ignore"):
            rate = np.where(self.total > 0, self.total_accepted / np.maximum(self.total, 1), 1.0)
        return rate


def _mh_update(value, f, f1, f2, cfg, rng, mh: MhControl, step):
    """One independence-MH move per site from the Miller gamma proposal."""
    fit = _miller_fit(f1, f2, value, cfg)
    shape = fit.shape
    rate = fit.rate
    bad = ~fit.ok
    if np.any(bad):
        mh.fallbacks += int(bad.sum())
        shape = shape.copy()
        rate = rate.copy()
        shape[bad] = np.where(np.isfinite(shape[bad]), np.maximum(shape[bad], 1.05), 1.05)
        rate[bad] = shape[bad] / fit.mu[bad]
    widen = mh.mode_match & (shape > 1.0)
    if np.any(widen):
        # match the proposal mode rather than its mean: smaller rate, more spread
        rate = np.where(widen, rate * (shape - 1.0) / shape, rate)
    if not (np.all(np.isfinite(shape)) and np.all(np.isfinite(rate))
            and np.all(shape > 0) and np.all(rate > 0)):
        unit = int(np.flatnonzero(~(np.isfinite(shape) & np.isfinite(rate) & (shape > 0) & (rate > 0)))[0])
        raise ChainError(step, unit, "invalid MH proposal parameters")
    proposal = rng.generator.gamma(shape) / rate
    proposal = np.maximum(proposal, 1e-300)
    log_accept = (
        f(proposal)
        - f(value)
        - (shape - 1.0) * (np.log(proposal) - np.log(value))
        + rate * (proposal - value)
    )
    accept = np.log(rng.generator.random(value.shape)) < log_accept
    new = np.where(accept, proposal, value)
    mh.record(accept)
    return new


def _check_block(arr, step):
    arr = np.atleast_1d(arr)
    good = np.isfinite(arr) & (arr > 0)
    if not np.all(good):
        unit = int(np.flatnonzero(~good)[0])
        raise ChainError(step, unit, f"non-finite or nonpositive value {arr[unit]!r}")


def _draw_lambda(data: Dataset, nu, beta, rng):
    shape = data.delta + nu + 1.0
    scale = data.delta * data.y / data.eta + beta * nu
    lam = sample_inverse_gamma(shape, scale, rng)
    _check_block(lam, "lambda")
    return lam


def _draw_beta(data: Dataset, nu, lam, prior: PriorSpec, rng):
    if isinstance(prior.beta, FixedValue):
        return prior.beta.value
    shape = float(np.sum(nu)) + data.n + prior.beta.shape
    rate = float(np.sum(nu / lam)) + prior.beta.rate
    beta = sample_gamma(shape, rate, rng)
    _check_block(beta, "beta")
    return float(beta)


def _log1p_ratio(tau, nu):
    # log(1 + tau/nu) without overflow when nu << tau
    return np.where(nu >= tau, np.log1p(tau / np.maximum(nu, 1e-300)),
                    np.log(tau + nu) - np.log(np.minimum(nu, tau)))


def gibbs_sweep_sb(state: ChainState, data, prior: PriorSpec, rng: RngHandle,
                   cfg: McmcConfig = McmcConfig(), mh: MhControl | None = None) -> ChainState:
    """One full SB sweep: lambda, beta, tau, latent t, then nu by Miller-MH."""
    data = as_dataset(data)
    if mh is None:
        mh = MhControl(data.n)
    state.lam = _draw_lambda(data, state.nu, state.beta, rng)
    state.beta = _draw_beta(data, state.nu, state.lam, prior, rng)
    if isinstance(prior.tau, GammaPrior):
        params = GigParams(
            p=-data.n * prior.a + prior.tau.shape,
            b=2.0 * prior.tau.rate,
            gamma=2.0 * float(np.sum(state.aug_t * state.nu)),
        )
        state.tau = float(sample_gig(params, rng))
        _check_block(state.tau, "tau")
    state.aug_t = sample_gamma(prior.a + prior.b, 1.0 + state.nu / state.tau, rng)
    _check_block(state.aug_t, "t")
    f, f1, f2 = _nu_target(prior.a, state.aug_t / state.tau, state.lam, state.beta)
    state.nu = _mh_update(state.nu, f, f1, f2, cfg, rng, mh, "nu")
    _check_block(state.nu, "nu")
    return state


def gibbs_sweep_irb(state: ChainState, data, prior: PriorSpec, rng: RngHandle,
                    cfg: McmcConfig = McmcConfig(), mh: MhControl | None = None) -> ChainState:
    """One full IRB sweep: lambda, beta, tau, latent (s, w, z), then nu."""
    data = as_dataset(data)
    if prior.b >= 1.0:
        raise ValueError("IRB sampler requires b < 1 (latent s has shape 1 - b)")
    if mh is None:
        mh = MhControl(data.n)
    state.lam = _draw_lambda(data, state.nu, state.beta, rng)
    state.beta = _draw_beta(data, state.nu, state.lam, prior, rng)
    if isinstance(prior.tau, GammaPrior):
        params = GigParams(
            p=-float(np.sum(state.aug_s + state.aug_w)) + prior.tau.shape,
            b=2.0 * prior.tau.rate,
            gamma=2.0 * float(np.sum(state.aug_z * state.nu)),
        )
        state.tau = float(sample_gig(params, rng))
        _check_block(state.tau, "tau")
    big = _log1p_ratio(state.tau, state.nu)
    state.aug_s = sample_gamma(1.0 - prior.b, big, rng)
    state.aug_w = sample_gamma(prior.b + prior.a, 1.0 + big, rng)
    _check_block(state.aug_s, "s")
    _check_block(state.aug_w, "w")
    state.aug_z = sample_gamma(state.aug_s + state.aug_w + 1.0, 1.0 + state.nu / state.tau, rng)
    _check_block(state.aug_z, "z")
    f, f1, f2 = _nu_target(state.aug_s + state.aug_w, state.aug_z / state.tau,
                           state.lam, state.beta)
    state.nu = _mh_update(state.nu, f, f1, f2, cfg, rng, mh, "nu")
    _check_block(state.nu, "nu")
    return state


def gibbs_sweep_gl(state: ChainState, data, prior: PriorSpec, rng: RngHandle,
                   cfg: McmcConfig = McmcConfig(), mh: MhControl | None = None) -> ChainState:
    """One GL sweep: u is pinned at 1, so nu_i = tau and only tau needs MH."""
    data = as_dataset(data)
    if mh is None:
        mh = MhControl(1)
    state.lam = _draw_lambda(data, np.full(data.n, state.tau), state.beta, rng)
    if isinstance(prior.beta, GammaPrior):
        shape = data.n * state.tau + data.n + prior.beta.shape
        rate = state.tau * float(np.sum(1.0 / state.lam)) + prior.beta.rate
        state.beta = float(sample_gamma(shape, rate, rng))
        _check_block(state.beta, "beta")
    if isinstance(prior.tau, GammaPrior):
        a_t, b_t = prior.tau.shape, prior.tau.rate
        lam, beta = state.lam, state.beta
        drift = lam.size * np.log(beta) + float(np.sum(-np.log(lam) - beta / lam))

        def f(t):
            return (a_t - 1.0) * np.log(t) - b_t * t + lam.size * (stirling_excess(t) + t) + t * drift

        def f1(t):
            return (a_t - 1.0) / t - b_t + lam.size * (np.log(t) + 1.0 - _sp.psi(t)) + drift

        def f2(t):
            return -(a_t - 1.0) / (t * t) + lam.size * (1.0 / t - _sp.polygamma(1, t))

        tau = _mh_update(np.atleast_1d(state.tau), f, f1, f2, cfg, rng, mh, "tau")
        state.tau = float(tau[0])
        _check_block(state.tau, "tau")
    state.nu = np.full(data.n, state.tau)
    return state


_SWEEPS = {SB: gibbs_sweep_sb, IRB: gibbs_sweep_irb, GL: gibbs_sweep_gl}


def initial_state(data: Dataset, prior: PriorSpec, rng: RngHandle) -> ChainState:
    """Start in the bulk of the posterior: lambda at the observations, u at 1."""
    lam = data.y / data.eta
    if isinstance(prior.beta, FixedValue):
        beta = prior.beta.value
    else:
        beta = float(np.sum(data.delta * lam) / np.sum(data.delta))
    tau = prior.tau.value if isinstance(prior.tau, FixedValue) else 1.0
    nu = np.full(data.n, tau)
    state = ChainState(family=prior.family, lam=lam.copy(), beta=beta, tau=tau, nu=nu)
    if prior.family == SB:
        state.aug_t = sample_gamma(prior.a + prior.b, 1.0 + nu / tau, rng)
    elif prior.family == IRB:
        big = _log1p_ratio(tau, nu)
        state.aug_s = sample_gamma(1.0 - prior.b, big, rng)
        state.aug_w = sample_gamma(prior.b + prior.a, 1.0 + big, rng)
        state.aug_z = sample_gamma(state.aug_s + state.aug_w + 1.0, 1.0 + nu / tau, rng)
    return state


@dataclass
class ChainOutput:
    """Post-burn-in draws plus acceptance and effective-sample-size diagnostics."""

    family: str
    lam: np.ndarray          # (draws, n)
    beta: np.ndarray         # (draws,)
    tau: np.ndarray          # (draws,)
    kappa: np.ndarray        # (draws, n)
    acceptance_rate: np.ndarray
    ess: dict
    warnings: list
    config: McmcConfig

    @property
    def n_units(self):
        return self.lam.shape[1]

    @property
    def n_draws(self):
        return self.lam.shape[0]


def effective_sample_size(x):
    """ESS from the autocorrelation sum, truncated at Geyer's initial positive
    sequence (first nonpositive even-odd pair sum)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var <= 0:
        return float(n)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real / n
    rho = acov / acov[0]
    tau_int = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau_int += 2.0 * pair
    tau_int = max(tau_int, 1.0 / n)
    return float(min(n / tau_int, n))


def run_chain(data, prior: PriorSpec, cfg: McmcConfig = McmcConfig()) -> ChainOutput:
    """Run one chain: burn-in plus samples*thin sweeps, storing every thin-th.

    The returned draws therefore number exactly cfg.samples.  Per-unit MH
    acceptance rates and ESS estimates are recorded; acceptance below 20% is
    reported as a soft warning, not an error.
    """
    data = as_dataset(data)
    if prior.family == IRB and prior.b >= 1.0:
        raise ValueError("IRB sampler requires b < 1")
    sweep = _SWEEPS[prior.family]
    rng = RngHandle(cfg.seed)
    state = initial_state(data, prior, rng)
    mh = MhControl(1 if prior.family == GL else data.n)

    n_store = cfg.samples
    lam_draws = np.empty((n_store, data.n))
    beta_draws = np.empty(n_store)
    tau_draws = np.empty(n_store)
    kappa_draws = np.empty((n_store, data.n))

    stored = 0
    total = cfg.burnin + cfg.samples * cfg.thin
    for it in range(total):
        state = sweep(state, data, prior, rng, cfg, mh)
        post = it - cfg.burnin
        if post >= 0 and (post + 1) % cfg.thin == 0:
            lam_draws[stored] = state.lam
            beta_draws[stored] = state.beta
            tau_draws[stored] = state.tau
            kappa_draws[stored] = state.nu / (data.delta + state.nu)
            stored += 1
    assert stored == n_store

    rate_sites = mh.acceptance_rate()
    acceptance = np.full(data.n, rate_sites[0]) if prior.family == GL else rate_sites
    warnings_list = []
    low = np.flatnonzero(acceptance < ACCEPTANCE_WARNING_THRESHOLD)
    if low.size and not (prior.family == GL and isinstance(prior.tau, FixedValue)):
        msg = (f"MH acceptance below {ACCEPTANCE_WARNING_THRESHOLD:.0%} for "
               f"{low.size} unit(s), e.g. unit {low[0]} at {acceptance[low[0]]:.3f}")
        warnings_list.append(msg)
        logger.warning(msg)

    ess = {
        "lambda": np.array([effective_sample_size(lam_draws[:, i]) for i in range(data.n)]),
        "kappa": np.array([effective_sample_size(kappa_draws[:, i]) for i in range(data.n)]),
        "beta": effective_sample_size(beta_draws),
        "tau": effective_sample_size(tau_draws),
    }
    return ChainOutput(
        family=prior.family,
        lam=lam_draws,
        beta=beta_draws,
        tau=tau_draws,
        kappa=kappa_draws,
        acceptance_rate=acceptance,
        ess=ess,
        warnings=warnings_list,
        config=cfg,
    )


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-unit posterior mean, variance, credible interval and mean kappa."""

    mean: float
    variance: float
    lower: float
    upper: float
    kappa_mean: float


def summarize(output: ChainOutput, level=0.95):
    """Equal-tailed summaries at the given level, one PosteriorSummary per unit."""
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    if output.n_draws < 10:
        raise ValueError(f"need at least 10 stored draws, have {output.n_draws}")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(output.lam, [alpha, 1.0 - alpha], axis=0)
    means = output.lam.mean(axis=0)
    variances = output.lam.var(axis=0, ddof=1)
    kappas = output.kappa.mean(axis=0)
    return [
        PosteriorSummary(
            mean=float(means[i]),
            variance=float(variances[i]),
            lower=float(lo[i]),
            upper=float(hi[i]),
            kappa_mean=float(kappas[i]),
        )
        for i in range(output.n_units)
    ]
