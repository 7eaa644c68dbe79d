"""Single change point with a geometric prior and the Shiryayev stopping rule.

Data ``X^1, X^2, ...`` are drawn from the pre-change law ``g`` before the
change time ``lambda`` and from the post-change law ``f`` from ``lambda`` on.
The posterior ``gamma^n[n] = P(lambda <= n | X^1..X^n)`` is carried in log
space as the pair ``(log gamma, log(1 - gamma))``; the complement is what
decays geometrically after the change and would underflow to exactly zero
within a few dozen steps if it were computed as ``1 - gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, DegenerateObservationError, DegenerateUpdateError, ExactConvergence
from .irf import IrfOperator, rate_fit
from .simplex import ProbVec


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ArgumentError(f"variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def logpdf(self, x):
        return -0.5 * (np.asarray(x) - self.mean) ** 2 / self.variance \
            - 0.5 * math.log(2 * math.pi * self.variance)


def log_ratio(g: GaussianSpec, f: GaussianSpec, x):
    """``log g(x) - log f(x)`` from the closed-form Gaussian densities."""
    x = np.asarray(x, dtype=float)
    return (-0.5 * (x - g.mean) ** 2 / g.variance + 0.5 * (x - f.mean) ** 2 / f.variance
            - 0.5 * math.log(g.variance / f.variance))


def kl_gaussian(f: GaussianSpec, g: GaussianSpec) -> float:
    """KL divergence ``int f log(f/g)``."""
    return (0.5 * math.log(g.variance / f.variance)
            + (f.variance + (f.mean - g.mean) ** 2) / (2 * g.variance) - 0.5)


def llr_std(f: GaussianSpec, g: GaussianSpec) -> float:
    """Standard deviation of ``log(g(X)/f(X))`` for ``X ~ f``."""
    a = 0.5 / f.variance - 0.5 / g.variance
    b = g.mean / g.variance - f.mean / f.variance
    mu, s2 = f.mean, f.variance
    var = a * a * (2 * s2 * s2 + 4 * mu * mu * s2) + b * b * s2 + 4 * a * b * mu * s2
    return math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class ClassicModel:
    f: GaussianSpec
    g: GaussianSpec
    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ArgumentError(f"rho must be in (0, 1], got {self.rho}")

    @property
    def detectable(self) -> bool:
        return self.f != self.g


def sample_changepoint(model: ClassicModel, rng: np.random.Generator) -> int:
    """Geometric draw on {1, 2, ...} with ``P(lambda = k) = (1-rho)^(k-1) rho``."""
    return int(rng.geometric(model.rho))


def prior_predict(gamma: float, rho: float) -> float:
    """One-step prediction ``rho + (1 - rho) gamma`` under the geometric prior."""
    if not 0.0 <= gamma <= 1.0:
        raise ArgumentError(f"gamma must be in [0, 1], got {gamma}")
    return rho + (1.0 - rho) * gamma


def prior_predict_general(gamma: float, n: int, pmf: Callable[[int], float],
                          tail: Callable[[int], float] | None = None) -> float:
    """Prediction ``gamma^{n-1}[n]`` from ``gamma^{n-1}[n-1]`` for any prior on {1,2,...}.

    ``tail(k)`` is ``P(lambda > k)``; if omitted it is ``1 - sum_{i<=k} pmf(i)``.
    """
    if tail is None:
        def tail(k):
            return 1.0 - sum(pmf(i) for i in range(1, k + 1))
    prev_tail = tail(n - 1)
    if prev_tail <= 0:
        return 1.0
    return pmf(n) / prev_tail + tail(n) / prev_tail * gamma


def posterior_step(gamma_pred: float, x: float, model: ClassicModel) -> float:
    """Posterior after observing ``x``, from the predicted ``gamma_pred``."""
    if not 0.0 <= gamma_pred <= 1.0:
        raise ArgumentError(f"gamma_pred must be in [0, 1], got {gamma_pred}")
    lr = float(log_ratio(model.g, model.f, x))
    if not math.isfinite(lr):
        raise DegenerateUpdateError("density ratio is not finite")
    if gamma_pred == 1.0:
        return 1.0
    if gamma_pred == 0.0:
        return 0.0
    # gamma / (gamma + (1 - gamma) * g/f), evaluated as a logistic of log-odds
    log_odds = math.log(gamma_pred) - math.log1p(-gamma_pred) - lr
    return 1.0 / (1.0 + math.exp(-log_odds)) if log_odds > -700 else math.exp(log_odds)


def classic_operator(rho: float) -> IrfOperator:
    """``T(x) = rho e0 + (1 - rho) x`` on the two-point simplex."""
    e0 = ProbVec.target(1)

    def apply(x: ProbVec) -> ProbVec:
        p0 = (1.0 - rho) * x.entries[0]
        return ProbVec(np.array([p0, 1.0 - p0]))

    return IrfOperator(1, apply, 1.0 - rho, e0, "classic")


def _log1mexp(a: float) -> float:
    """``log(1 - exp(a))`` for ``a <= 0``."""
    if a == -math.inf:
        return 0.0
    if a > -0.6931471805599453:
        return math.log(-math.expm1(a))
    return math.log1p(-math.exp(a))


@dataclass
class ClassicTrace:
    """Posterior path for one run; index ``n`` runs over ``0..horizon``."""

    lam: int
    observations: np.ndarray
    gammas: np.ndarray
    log_complements: np.ndarray
    tau: int | None = None

    @property
    def distances(self) -> np.ndarray:
        """``|Q_n - e0|_1 = 2 (1 - gamma^n[n])``."""
        return 2.0 * np.exp(self.log_complements)


def sample_observations(model: ClassicModel, lam: int, horizon: int,
                        rng: np.random.Generator) -> np.ndarray:
    t = np.arange(1, horizon + 1)
    post = t >= lam
    means = np.where(post, model.f.mean, model.g.mean)
    stds = np.where(post, model.f.std, model.g.std)
    return rng.normal(means, stds)


def posterior_path(model: ClassicModel, observations: Sequence[float]):
    """Run the recursion over ``observations``; returns ``(gammas, log_complements)``.

    Both arrays have length ``len(observations) + 1``; entry 0 is the prior
    state ``gamma^0[0] = 0``.
    """
    obs = np.asarray(observations, dtype=float)
    if not np.all(np.isfinite(obs)):
        raise DegenerateObservationError("non-finite observation")
    lrs = log_ratio(model.g, model.f, obs)
    if not np.all(np.isfinite(lrs)):
        raise DegenerateObservationError("non-finite log likelihood ratio")
    log_keep = math.log1p(-model.rho) if model.rho < 1.0 else -math.inf
    n = obs.size
    gammas = np.empty(n + 1)
    log_c = np.empty(n + 1)
    gammas[0], log_c[0] = 0.0, 0.0
    lc = 0.0
    for k in range(n):
        lc_pred = lc + log_keep
        lg_pred = _log1mexp(lc_pred)
        a, b = lg_pred, lc_pred + lrs[k]
        top = max(a, b)
        norm = top + math.log(math.exp(a - top) + math.exp(b - top))
        lc = b - norm
        gammas[k + 1] = math.exp(a - norm)
        log_c[k + 1] = lc
    return gammas, log_c


def first_crossing(gammas: np.ndarray, alpha: float) -> int | None:
    """Shiryayev time ``inf{n >= 1: gamma^n[n] >= 1 - alpha}``; ``None`` if never."""
    hits = np.flatnonzero(gammas[1:] >= 1.0 - alpha)
    return int(hits[0]) + 1 if hits.size else None


def shiryayev_run(model: ClassicModel, alpha: float, lam_true: int, horizon: int,
                  rng: np.random.Generator,
                  observations: Sequence[float] | None = None) -> tuple[int | None, ClassicTrace]:
    """Simulate (or replay) a stream and apply the Shiryayev rule.

    Returns ``(tau, trace)``; ``tau`` is ``None`` when the threshold is never
    reached within ``horizon`` steps.
    """
    if horizon < 1:
        raise ArgumentError("horizon must be at least 1")
    if observations is None:
        observations = sample_observations(model, lam_true, horizon, rng)
    obs = np.asarray(observations, dtype=float)[:horizon]
    gammas, log_c = posterior_path(model, obs)
    tau = first_crossing(gammas, alpha)
    return tau, ClassicTrace(lam_true, obs, gammas, log_c, tau)


@dataclass
class RateCheck:
    lam: int
    slope: float
    bound_slope: float
    eps: float
    gamma_at_change: float
    converged_at: int | None = None

    @property
    def passed(self) -> bool:
        if self.converged_at is not None:
            return True
        return self.slope <= self.bound_slope + self.eps


def rate_check_from_trace(model: ClassicModel, trace: ClassicTrace,
                          eps_multiplier: float = 3.0, burn_in: int = 5) -> RateCheck | None:
    """Post-change rate check on an existing trace.

    The fitted quantity is ``log(1 - gamma)`` over the segment that starts
    at the last pre-change state ``n = lambda - 1``.  The comparison slope is
    ``log((1 - rho) e^{-I})`` and the tolerance is ``eps_multiplier`` times the
    empirical standard error of the post-change log likelihood ratios.
    Returns ``None`` when the segment is too short to fit or ``rho = 1``.
    """
    lam = trace.lam
    segment = trace.log_complements[lam - 1:]
    if segment.size <= burn_in + 2 or model.rho >= 1.0:
        return None
    llr = log_ratio(model.g, model.f, trace.observations[lam - 1:])
    eps = eps_multiplier * float(np.std(llr, ddof=1)) / math.sqrt(llr.size)
    bound = math.log(1.0 - model.rho) - kl_gaussian(model.f, model.g)
    gamma_change = float(trace.gammas[lam - 1])
    try:
        slope = rate_fit(np.exp(segment), burn_in=burn_in)
        return RateCheck(lam, slope, bound, eps, gamma_change)
    except ExactConvergence as exc:
        return RateCheck(lam, -math.inf, bound, eps, gamma_change,
                              converged_at=exc.step + lam - 1)


def rate_check_trial(model: ClassicModel, post_steps: int, rng: np.random.Generator,
                    eps_multiplier: float = 3.0, burn_in: int = 5,
                    lam: int | None = None) -> RateCheck:
    """One replication of the post-change rate check.

    Draws ``lambda`` (unless given) and runs ``post_steps`` steps past it.
    """
    if post_steps <= burn_in + 2:
        raise ArgumentError(f"post_steps must exceed {burn_in + 2}")
    if lam is None:
        lam = sample_changepoint(model, rng)
    horizon = lam - 1 + post_steps
    _, trace = shiryayev_run(model, 0.5, lam, horizon, rng)
    trial = rate_check_from_trace(model, trace, eps_multiplier, burn_in)
    if trial is None:
        raise ArgumentError("rate check needs rho < 1")
    return trial
