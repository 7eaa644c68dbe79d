"""Exact joint posterior recursion over the change indicators ``Z^n``.

The prediction step ``w_n = T_ex y_{n-1}`` is linear.  Row ``i`` of ``T_ex``
comes from expanding the word ``u_1^(i) u_2^(i) ... u_d^(i)`` in two
noncommuting letters ``w1`` ("already changed") and ``w0`` ("not yet"), where

    u_j^(i) = (1 - rho_j) w0          if b_j(i) = 0
    u_j^(i) = w1 + rho_j w0           if b_j(i) = 1

Each monomial, read as a binary string (``w1`` -> 1, ``w0`` -> 0), names a
column and its coefficient is the matrix entry.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArgumentError, EnumerationBudgetError
from .irf import IrfOperator
from .network import Network, ObservationFrame
from .simplex import MAX_FULL_DIM, ProbVec, WeightVec, bayes_update

DENSE_MAX_DIM = 12
ORACLE_BUDGET = 5_000_000


def _check_rhos(rhos) -> np.ndarray:
    r = np.asarray(rhos, dtype=float)
    if r.ndim != 1 or r.size < 1:
        raise ArgumentError("need at least one rho")
    if np.any(r <= 0) or np.any(r > 1):
        raise ArgumentError("every rho must be in (0, 1]")
    if r.size > MAX_FULL_DIM:
        raise ArgumentError(f"exact recursion is capped at d={MAX_FULL_DIM}")
    return r


def expand_row(i: int, rhos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Monomials of ``u_1^(i) ... u_d^(i)`` as ``(column masks, coefficients)``."""
    d = rhos.size
    masks = np.zeros(1, dtype=np.int64)
    coefs = np.ones(1)
    for j in range(d):
        rho = rhos[j]
        if (i >> (d - 1 - j)) & 1:
            masks = np.concatenate([2 * masks + 1, 2 * masks])
            coefs = np.concatenate([coefs, rho * coefs])
        else:
            masks = 2 * masks
            coefs = (1.0 - rho) * coefs
    return masks, coefs


@dataclass(frozen=True, eq=False)
class TexKernel:
    """Exact prediction kernel; columns sum to one (column-stochastic)."""

    rhos: np.ndarray
    _matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.rhos.size

    @property
    def matrix(self) -> np.ndarray:
        """Dense ``m x m`` matrix indexed by mask (row = output, column = input)."""
        if self._matrix is None:
            if self.d > DENSE_MAX_DIM:
                raise ArgumentError(f"dense kernel is capped at d={DENSE_MAX_DIM}")
            m = 1 << self.d
            mat = np.zeros((m, m))
            for i in range(m):
                cols, coefs = expand_row(i, self.rhos)
                np.add.at(mat[i], cols, coefs)
            mat.setflags(write=False)
            object.__setattr__(self, "_matrix", mat)
        return self._matrix

    def display_matrix(self) -> np.ndarray:
        """Rows and columns in descending-mask order (anchor first)."""
        return self.matrix[::-1, ::-1]

    def apply_array(self, y: np.ndarray) -> np.ndarray:
        """``T_ex @ y`` without forming the matrix.

        The kernel factorizes over nodes: along each node's axis it maps
        ``(p0, p1) -> ((1 - rho) p0, p1 + rho p0)``.  Leading batch axes are allowed.
        """
        d = self.d
        y = np.asarray(y, dtype=float)
        batch = y.shape[:-1]
        t = y.reshape(batch + (2,) * d).copy()
        for j, rho in enumerate(self.rhos):
            zero = [Ellipsis] + [slice(None)] * d
            one = [Ellipsis] + [slice(None)] * d
            zero[1 + j], one[1 + j] = 0, 1
            moved = rho * t[tuple(zero)]
            t[tuple(zero)] -= moved
            t[tuple(one)] += moved
        return t.reshape(y.shape)

    def __call__(self, y: ProbVec) -> ProbVec:
        return ProbVec(self.apply_array(y.entries))

    def to_csv(self, path) -> None:
        """Write the display-order matrix with a header of column masks."""
        m = 1 << self.d
        labels = [format(k, f"0{self.d}b") for k in range(m - 1, -1, -1)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row"] + labels)
            for label, row in zip(labels, self.display_matrix()):
                w.writerow([label] + [format(v, ".17g") for v in row])


def build_tex(rhos: Sequence[float]) -> TexKernel:
    r = _check_rhos(rhos)
    r.setflags(write=False)
    return TexKernel(r)


def tex_operator(rhos: Sequence[float]) -> IrfOperator:
    kernel = build_tex(rhos)
    d = kernel.d
    return IrfOperator(d, kernel, lipschitz_bound_tex(kernel.rhos), ProbVec.target(d),
                       "T_ex", apply_batch=kernel.apply_array)


def exact_step(y: ProbVec, theta: WeightVec, kernel: TexKernel) -> ProbVec:
    """Predict with the kernel, then Bayes-update with ``theta``."""
    if y.d != kernel.d or theta.d != kernel.d:
        raise ArgumentError("dimension mismatch in exact_step")
    return bayes_update(ProbVec(kernel.apply_array(y.entries)), theta)


def _geometric_log_prior(rho: float, n: int) -> np.ndarray:
    """Log prior over ``lambda in {1..n, >n}``; the last slot is the tail."""
    k = np.arange(1, n + 1)
    keep = np.log1p(-rho) if rho < 1 else -np.inf
    with np.errstate(invalid="ignore"):
        head = np.where(k == 1, np.log(rho), (k - 1) * keep + np.log(rho))
        tail = n * keep if n > 0 else 0.0
    return np.append(head, np.nan_to_num(tail, nan=-np.inf))


def brute_force_posterior(net: Network, frames: Sequence[ObservationFrame]) -> ProbVec:
    """``P(Z^n | X^1..X^n)`` by summing over all change-time configurations.

    Each ``lambda_j`` ranges over ``1..n`` plus one slot for ``lambda_j > n``;
    the likelihood does not depend on where in ``{n+1, n+2, ...}`` such a
    change falls, so that slot carries the whole tail prior mass.  A stream
    is post-change at time ``t`` iff its node (or the earlier endpoint of its
    edge) has ``lambda <= t``.
    """
    d = net.d
    n = len(frames)
    if (n + 1) ** d > ORACLE_BUDGET:
        raise EnumerationBudgetError(f"{(n + 1) ** d} configurations exceed budget")
    if n == 0:
        return ProbVec.all_zeros(d)
    lr = np.stack([net.log_ratios(fr.values) for fr in frames])  # (n, |E~|)
    # pre[e, k] = sum of log g/f over t < k+1, i.e. the pre-change stretch when
    # the stream's change time is k+1 (k = n means "no change by n")
    pre = np.vstack([np.zeros(lr.shape[1]), np.cumsum(lr, axis=0)]).T  # (|E~|, n+1)
    grids = np.meshgrid(*[np.arange(n + 1)] * d, indexing="ij")
    lam_idx = [g.reshape(-1) for g in grids]  # index k <-> lambda = k+1
    logp = np.zeros(lam_idx[0].size)
    for j, node in enumerate(net.nodes):
        logp += _geometric_log_prior(node.rho, n)[lam_idx[j]]
        logp += pre[j, lam_idx[j]]
    for k, e in enumerate(net.edges):
        lam_e = np.minimum(lam_idx[e.i], lam_idx[e.j])
        logp += pre[d + k, lam_e]
    masks = np.zeros(logp.size, dtype=np.int64)
    for j in range(d):
        masks = 2 * masks + (lam_idx[j] < n)
    top = logp.max()
    weights = np.exp(logp - top)
    post = np.bincount(masks, weights=weights, minlength=1 << d)
    return ProbVec(post / post.sum())


def jacobian_lipschitz_bound(A: np.ndarray, u: np.ndarray) -> float:
    """Max absolute column sum of ``A - u 1^T``."""
    A = np.asarray(A, dtype=float)
    u = np.asarray(u, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or u.shape != (A.shape[0],):
        raise ArgumentError("A must be square and u must match its row count")
    return float(np.abs(A - u[:, None]).sum(axis=0).max())


def lipschitz_bound_tex(rhos: Sequence[float]) -> float:
    return float(1.0 - np.prod(np.asarray(rhos, dtype=float)))
