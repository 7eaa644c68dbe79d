"""Iterated random functions ``Q_n = q_{theta_n}(T(Q_{n-1}))`` and analysis tools.

Besides the iteration itself this module carries the pieces of the
convergence argument as checkable functions: the geometric envelope, the
two-point functions ``g_theta`` / ``gbar_theta``, the ``M`` constant both in
closed form and by grid search, an empirical Lipschitz estimator, and a
log-slope fit for distance sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    BoundUndefinedError,
    DegenerateUpdateError,
    ExactConvergence,
)
from .simplex import ProbVec, WeightVec, bayes_update, dist_to_target


@dataclass(frozen=True)
class IrfOperator:
    """A deterministic map on the simplex with a declared l1 Lipschitz bound."""

    d: int
    apply: Callable[[ProbVec], ProbVec]
    declared_lipschitz: float
    declared_fixed_point: ProbVec
    name: str = "T"
    apply_batch: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x: ProbVec) -> ProbVec:
        return self.apply(x)


def identity_operator(d: int) -> IrfOperator:
    return IrfOperator(d, lambda x: x, 1.0, ProbVec.target(d), "identity")


def constant_operator(d: int) -> IrfOperator:
    """Collapse everything onto ``e0``; Lipschitz constant 0."""
    e0 = ProbVec.target(d)
    return IrfOperator(d, lambda x: e0, 0.0, e0, "constant")


@dataclass
class IterationTrace:
    states: list[ProbVec] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)
    thetas: list[WeightVec] = field(default_factory=list)


def iterate(T: IrfOperator, thetas: Sequence[WeightVec], x0: ProbVec,
            n: int | None = None) -> IterationTrace:
    """Run ``n`` steps of the iteration, recording every state.

    A degenerate update is re-raised with the (1-based) step index attached.
    """
    if n is None:
        n = len(thetas)
    if n > len(thetas):
        raise ArgumentError(f"need {n} weight vectors, got {len(thetas)}")
    if x0.d != T.d:
        raise ArgumentError("dimension mismatch between operator and start point")
    trace = IterationTrace([x0], [dist_to_target(x0)], [])
    x = x0
    for k in range(n):
        theta = thetas[k]
        try:
            x = bayes_update(T(x), theta)
        except DegenerateUpdateError as exc:
            raise DegenerateUpdateError(str(exc), step=k + 1) from exc
        trace.states.append(x)
        trace.distances.append(dist_to_target(x))
        trace.thetas.append(theta)
    return trace


def theorem1_bound(x0_anchor: float, kappa: float, i_star: float, eps: float,
                   n: int) -> float:
    """Envelope ``2 (1 - x0)/x0 * (kappa * exp(-I* + eps))**n``."""
    if not 0.0 <= x0_anchor <= 1.0:
        raise ArgumentError(f"anchor mass must be in [0, 1], got {x0_anchor}")
    if x0_anchor == 0.0:
        raise BoundUndefinedError("envelope needs positive anchor mass at the start")
    if not 0.0 <= kappa <= 1.0:
        raise ArgumentError(f"kappa must be in [0, 1], got {kappa}")
    if n < 0:
        raise ArgumentError("n must be nonnegative")
    prefactor = 2.0 * (1.0 - x0_anchor) / x0_anchor
    if prefactor == 0.0:
        return 0.0
    return prefactor * (kappa * math.exp(-i_star + eps)) ** n


def peeled_envelope(x0_anchor: float, kappa: float,
                    theta_stars: Iterable[float]) -> np.ndarray:
    """Deterministic envelope ``2 (1-x0)/x0 * kappa**n * prod(theta*_k)``.

    This is the bound that holds pathwise before any concentration argument;
    entry ``n`` covers the state after ``n`` steps.
    """
    if x0_anchor <= 0.0:
        raise BoundUndefinedError("envelope needs positive anchor mass at the start")
    stars = np.asarray(list(theta_stars), dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.log(stars) + np.log(kappa)
    cum = np.concatenate([[0.0], np.cumsum(logs)])
    return 2.0 * (1.0 - x0_anchor) / x0_anchor * np.exp(cum)


def g_theta(theta: float, r: float) -> float:
    """``r / (r + theta (1 - r))``: the anchor coordinate of a two-point update."""
    if theta < 0:
        raise ArgumentError("theta must be nonnegative")
    denom = r + theta * (1.0 - r)
    if denom == 0.0:
        raise DegenerateUpdateError("g_theta undefined for theta = 0 and r = 0")
    return r / denom


def gbar_theta(theta, rbar):
    """``1 - g_theta(1 - rbar)`` written in terms of ``rbar``; vectorized."""
    return theta * rbar / (1.0 - rbar + theta * rbar)


def m_const_closed_form(kappa: float, theta: float, gamma: float) -> float:
    if gamma == 0:
        raise ArgumentError("gamma must be nonzero")
    if not 0.0 < kappa <= 1.0:
        raise ArgumentError(f"kappa must be in (0, 1], got {kappa}")
    if theta <= 0:
        raise ArgumentError("theta must be positive")
    eps = 1.0 - theta
    delta = 1.0 - gamma
    return theta * kappa / abs(gamma) * max(1.0, abs((1.0 - delta) / (1.0 - kappa * eps)))


def m_const_grid(kappa: float, theta: float, gamma: float, grid_size: int) -> float:
    """Grid lower bound on ``sup gbar_theta(r)/gbar_gamma(s)`` over ``rbar <= kappa sbar``.

    The region is swept as ``sbar = k/G``, ``rbar = t * kappa * sbar`` with
    ``t = i/G``, so the boundary ``rbar = kappa * sbar`` lies on the grid.
    """
    if grid_size < 100:
        raise ArgumentError("grid_size must be at least 100")
    g = np.arange(1, grid_size + 1) / grid_size
    sbar = g[:, None]
    rbar = kappa * g[None, :] * sbar
    num = np.abs(gbar_theta(theta, rbar))
    den = np.abs(gbar_theta(gamma, sbar))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    return float(np.nanmax(ratio))


def sample_simplex(rng: np.random.Generator, m: int, size: int | None = None) -> np.ndarray:
    """Uniform draws on the (m-1)-simplex via normalized exponentials."""
    shape = (m,) if size is None else (size, m)
    e = rng.exponential(size=shape)
    return e / e.sum(axis=-1, keepdims=True)


def vertex_pairs(d: int) -> list[tuple[ProbVec, ProbVec]]:
    """All pairs of distinct simplex vertices.

    For a linear map the Lipschitz constant on the simplex is attained on one
    of these, so they serve as adversarial inputs.
    """
    m = 1 << d
    eye = np.eye(m)
    return [(ProbVec(eye[a]), ProbVec(eye[b]))
            for a in range(m) for b in range(a + 1, m)]


def empirical_lipschitz(T: IrfOperator, num_pairs: int, rng_seed: int = 0,
                        pairs: Iterable[tuple[ProbVec, ProbVec]] | None = None) -> float:
    """Largest observed ``|T(x) - T(y)| / |x - y|`` over sampled pairs.

    Always a lower bound on the true Lipschitz constant.  Extra ``pairs`` are
    evaluated in addition to the ``num_pairs`` random ones.
    """
    if num_pairs < 1:
        raise ArgumentError("num_pairs must be at least 1")
    rng = np.random.default_rng(rng_seed)
    m = 1 << T.d
    xs = sample_simplex(rng, m, num_pairs)
    ys = sample_simplex(rng, m, num_pairs)
    best = 0.0
    if T.apply_batch is not None:
        gaps = np.abs(xs - ys).sum(axis=1)
        moved = np.abs(T.apply_batch(xs) - T.apply_batch(ys)).sum(axis=1)
        ok = gaps > 0
        if ok.any():
            best = float((moved[ok] / gaps[ok]).max())
        candidates = []
    else:
        candidates = [(ProbVec(x), ProbVec(y)) for x, y in zip(xs, ys)]
    if pairs is not None:
        candidates.extend(pairs)
    for x, y in candidates:
        gap = np.abs(x.entries - y.entries).sum()
        if gap == 0.0:
            continue
        ratio = np.abs(T(x).entries - T(y).entries).sum() / gap
        best = max(best, float(ratio))
    return best


def rate_fit(trace, burn_in: int = 5) -> float:
    """Least-squares slope of ``log distances[k]`` against ``k`` for ``k > burn_in``.

    ``trace`` is an :class:`IterationTrace` or a plain sequence of distances.
    Raises :class:`ExactConvergence` if a distance past the burn-in is zero.
    """
    distances = np.asarray(getattr(trace, "distances", trace), dtype=float)
    if distances.size <= burn_in + 2:
        raise ArgumentError(
            f"need more than {burn_in + 2} distances, got {distances.size}")
    ks = np.arange(distances.size)
    keep = ks > burn_in
    tail = distances[keep]
    zero = np.flatnonzero(tail <= 0.0)
    if zero.size:
        raise ExactConvergence(int(ks[keep][zero[0]]))
    slope = np.polyfit(ks[keep].astype(float), np.log(tail), 1)[0]
    return float(slope)
