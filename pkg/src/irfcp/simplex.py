"""Probability vectors on {0,1}^d and the Bayes-update map.

Storage convention
------------------
A vector of length ``m = 2**d`` is stored in *mask order*: entry ``l`` is the
probability of the configuration whose bits, read left to right, are
``b_1(l) b_2(l) ... b_d(l)``.  Node ``j`` (1-based) therefore corresponds to
bit ``d - j`` of the integer ``l``.

The all-ones configuration (mask ``m - 1``) is the *anchor*: the point mass
on it, ``e0``, is the common fixed point of every prediction operator here
and the target that posteriors converge to.  Display order ("superscript
order") lists the anchor first, i.e. it is mask order reversed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DegenerateUpdateError

SIMPLEX_TOL = 1e-9
MAX_FULL_DIM = 16


def _check_dim(d: int) -> None:
    if not 1 <= d <= MAX_FULL_DIM:
        raise ArgumentError(f"d must be in [1, {MAX_FULL_DIM}], got {d}")


def _dim_of_length(m: int) -> int:
    d = int(m).bit_length() - 1
    if m < 2 or (1 << d) != m:
        raise ArgumentError(f"length {m} is not 2**d for d >= 1")
    _check_dim(d)
    return d


def bit(j: int, mask: int, d: int) -> int:
    """Return the ``j``-th bit from the left of the ``d``-bit expansion of ``mask``."""
    if not 1 <= j <= d:
        raise ArgumentError(f"node index {j} out of range 1..{d}")
    if not 0 <= mask < (1 << d):
        raise ArgumentError(f"mask {mask} out of range for d={d}")
    return (mask >> (d - j)) & 1


@lru_cache(maxsize=None)
def bit_table(d: int) -> np.ndarray:
    """(m, d) int array; column ``j-1`` holds ``b_j(l)`` for every mask ``l``."""
    masks = np.arange(1 << d)
    shifts = d - 1 - np.arange(d)
    table = (masks[:, None] >> shifts[None, :]) & 1
    table.setflags(write=False)
    return table


def sup_to_sub(i: int, d: int) -> int:
    """Translate a superscript (display) index into a mask.  Involutive."""
    m = 1 << d
    if not 0 <= i < m:
        raise ArgumentError(f"index {i} out of range for d={d}")
    return m - 1 - i


@dataclass(frozen=True, eq=False)
class ProbVec:
    """A point of the simplex over {0,1}^d, stored in mask order."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 1:
            raise ArgumentError("ProbVec entries must be one-dimensional")
        _dim_of_length(arr.size)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ArgumentError("ProbVec entries must be finite and nonnegative")
        total = arr.sum()
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ArgumentError(f"ProbVec entries sum to {total!r}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def d(self) -> int:
        return self.entries.size.bit_length() - 1

    @property
    def m(self) -> int:
        return self.entries.size

    @property
    def anchor(self) -> float:
        return float(self.entries[-1])

    @classmethod
    def from_superscript(cls, values: Sequence[float]) -> "ProbVec":
        return cls(np.asarray(values, dtype=float)[::-1])

    def superscript(self) -> np.ndarray:
        return self.entries[::-1].copy()

    @classmethod
    def target(cls, d: int) -> "ProbVec":
        """The anchor point mass ``e0``."""
        _check_dim(d)
        x = np.zeros(1 << d)
        x[-1] = 1.0
        return cls(x)

    @classmethod
    def all_zeros(cls, d: int) -> "ProbVec":
        """Point mass on the all-zeros configuration (no change has happened)."""
        _check_dim(d)
        x = np.zeros(1 << d)
        x[0] = 1.0
        return cls(x)

    @classmethod
    def uniform(cls, d: int) -> "ProbVec":
        _check_dim(d)
        return cls(np.full(1 << d, 1.0 / (1 << d)))

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, ProbVec):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class WeightVec:
    """Per-step likelihood-ratio vector, held as log entries in mask order.

    The anchor (mask ``m-1``) is normalized to log-weight 0.  Zero weights are
    represented by ``-inf``.
    """

    log_entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.log_entries, dtype=float)
        if arr.ndim != 1:
            raise ArgumentError("WeightVec entries must be one-dimensional")
        _dim_of_length(arr.size)
        if np.any(np.isnan(arr)) or np.any(arr == np.inf):
            raise ArgumentError("WeightVec log entries must be < +inf and not NaN")
        if not np.isfinite(arr[-1]):
            raise ArgumentError("anchor weight must be strictly positive")
        arr = arr - arr[-1]
        arr[-1] = 0.0
        arr.setflags(write=False)
        object.__setattr__(self, "log_entries", arr)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "WeightVec":
        """Build from nonnegative weights in mask order (rescaled so anchor = 1)."""
        vals = np.asarray(values, dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ArgumentError("weights must be finite and nonnegative")
        with np.errstate(divide="ignore"):
            return cls(np.log(vals))

    @classmethod
    def from_superscript(cls, values: Sequence[float]) -> "WeightVec":
        return cls.from_values(np.asarray(values, dtype=float)[::-1])

    @classmethod
    def ones(cls, d: int) -> "WeightVec":
        _check_dim(d)
        return cls(np.zeros(1 << d))

    @property
    def d(self) -> int:
        return self.log_entries.size.bit_length() - 1

    @property
    def entries(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_entries)

    def superscript(self) -> np.ndarray:
        return self.entries[::-1].copy()

    def __mul__(self, other: "WeightVec") -> "WeightVec":
        """Pointwise product, computed as a sum of logs."""
        if not isinstance(other, WeightVec):
            return NotImplemented
        if other.d != self.d:
            raise ArgumentError("dimension mismatch in WeightVec product")
        return WeightVec(self.log_entries + other.log_entries)


@dataclass(frozen=True)
class BernoulliPair:
    """A distribution on {0,1}: ``p1`` = P(1), ``p0`` = P(0)."""

    p1: float
    p0: float

    def __post_init__(self):
        if self.p1 < 0 or self.p0 < 0 or abs(self.p1 + self.p0 - 1.0) > 1e-12:
            raise ArgumentError(f"invalid Bernoulli pair ({self.p1}, {self.p0})")

    @classmethod
    def of(cls, p1: float) -> "BernoulliPair":
        return cls(p1, 1.0 - p1)


def _log_weights(theta) -> np.ndarray:
    if isinstance(theta, WeightVec):
        return theta.log_entries
    vals = np.asarray(theta, dtype=float)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ArgumentError("raw weights must be finite and nonnegative")
    with np.errstate(divide="ignore"):
        return np.log(vals)


def bayes_update_array(x: np.ndarray, log_theta: np.ndarray) -> np.ndarray:
    """Unchecked core of :func:`bayes_update` on raw arrays.

    Works in the log domain with max subtraction so that weights spanning
    hundreds of orders of magnitude do not overflow.
    """
    with np.errstate(divide="ignore"):
        log_joint = np.log(x) + log_theta
    top = log_joint.max()
    if not np.isfinite(top):
        raise DegenerateUpdateError("prior and likelihood supports are disjoint")
    out = np.exp(log_joint - top)
    return out / out.sum()


def bayes_update(x: ProbVec, theta) -> ProbVec:
    """Prior-to-posterior map ``(x * theta) / <x, theta>``.

    ``theta`` may be a :class:`WeightVec` or any nonnegative array in mask
    order; the result does not depend on its scale.
    """
    log_theta = _log_weights(theta)
    if log_theta.size != x.m:
        raise ArgumentError("dimension mismatch between x and theta")
    return ProbVec(bayes_update_array(x.entries, log_theta))


def marginal(y: ProbVec, j: int) -> BernoulliPair:
    """The ``j``-th marginal (node index 1..d).

    Both coordinates are summed directly so that a tiny ``p0`` keeps its
    relative precision.
    """
    d = y.d
    if not 1 <= j <= d:
        raise ArgumentError(f"node index {j} out of range 1..{d}")
    col = bit_table(d)[:, j - 1].astype(bool)
    p1 = float(y.entries[col].sum())
    p0 = float(y.entries[~col].sum())
    total = p1 + p0
    return BernoulliPair(p1 / total, p0 / total)


def marginals_array(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All node marginals of mask-order arrays, as ``(p1, p0)``.

    ``y`` may carry leading batch axes; outputs then have shape ``(..., d)``.
    """
    y = np.asarray(y, dtype=float)
    m = y.shape[-1]
    d = m.bit_length() - 1
    batch = y.shape[:-1]
    shaped = y.reshape(batch + (2,) * d)
    nb = len(batch)
    p1 = np.empty(batch + (d,))
    p0 = np.empty(batch + (d,))
    for j in range(d):
        axes = tuple(nb + k for k in range(d) if k != j)
        s = shaped.sum(axis=axes) if axes else shaped
        p0[..., j], p1[..., j] = s[..., 0], s[..., 1]
    return p1, p0


def tensor_array(p1: np.ndarray, p0: np.ndarray) -> np.ndarray:
    """Product measure in mask order from per-node ``(p1, p0)`` arrays."""
    p1 = np.asarray(p1, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    out = np.ones(p1.shape[:-1] + (1,))
    for j in range(p1.shape[-1]):
        pair = np.stack([p0[..., j], p1[..., j]], axis=-1)
        out = (out[..., :, None] * pair[..., None, :]).reshape(p1.shape[:-1] + (-1,))
    return out


def tensor_product(pairs: Sequence[BernoulliPair]) -> ProbVec:
    """Product measure of independent per-node Bernoulli laws."""
    if len(pairs) == 0:
        raise ArgumentError("tensor_product needs at least one pair")
    _check_dim(len(pairs))
    p1 = np.array([p.p1 for p in pairs])
    p0 = np.array([p.p0 for p in pairs])
    return ProbVec(tensor_array(p1, p0))


def dist_to_target(x: ProbVec) -> float:
    """l1 distance to ``e0``, i.e. ``2 (1 - x[anchor])``.

    Evaluated as twice the non-anchor mass, which is the same quantity but
    keeps full relative precision once the posterior is very close to ``e0``.
    """
    return 2.0 * float(x.entries[:-1].sum())


def theta_star(theta: WeightVec) -> float:
    """Largest non-anchor weight."""
    return float(np.exp(theta.log_entries[:-1].max()))


def theta_dagger(theta: WeightVec, kappa: float) -> WeightVec:
    """``(1, kappa * theta_star * 1)``: the flattened weight used for peeling."""
    if not 0.0 <= kappa <= 1.0:
        raise ArgumentError(f"kappa must be in [0, 1], got {kappa}")
    with np.errstate(divide="ignore"):
        tail = np.log(kappa) + theta.log_entries[:-1].max()
    log_entries = np.full(theta.log_entries.size, tail)
    log_entries[-1] = 0.0
    return WeightVec(log_entries)
