"""Sensor network model: per-node change points, shared edge streams, likelihoods.

Nodes are indexed ``0..d-1`` in Python; node ``k`` is node ``j = k + 1`` in the
bit convention of :mod:`irfcp.simplex`.  The *extended* edge list puts the d
self-loops (private node streams) first, followed by the real edges in
declaration order; every observation frame carries one value per extended
edge in that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .classic import GaussianSpec, kl_gaussian, llr_std
from .errors import ArgumentError, DegenerateObservationError
from .simplex import MAX_FULL_DIM, WeightVec, bit_table

LITERAL = "literal"
ALIGNED = "aligned"
EDGE_CONVENTIONS = (LITERAL, ALIGNED)


@dataclass(frozen=True)
class NodeSpec:
    rho: float
    f: GaussianSpec
    g: GaussianSpec

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ArgumentError(f"rho must be in (0, 1], got {self.rho}")


@dataclass(frozen=True)
class EdgeSpec:
    i: int
    j: int
    f: GaussianSpec
    g: GaussianSpec


@dataclass(frozen=True, eq=False)
class Network:
    nodes: tuple[NodeSpec, ...]
    edges: tuple[EdgeSpec, ...] = ()
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        d = len(self.nodes)
        if d < 1:
            raise ArgumentError("a network needs at least one node")
        seen = set()
        for e in self.edges:
            if e.i == e.j:
                raise ArgumentError(f"explicit self-loop on node {e.i}")
            if not (0 <= e.i < d and 0 <= e.j < d):
                raise ArgumentError(f"edge ({e.i}, {e.j}) references a missing node")
            key = frozenset((e.i, e.j))
            if key in seen:
                raise ArgumentError(f"duplicate edge ({e.i}, {e.j})")
            seen.add(key)
        if self.names is not None and len(self.names) != d:
            raise ArgumentError("names must match the node count")

    @property
    def d(self) -> int:
        return len(self.nodes)

    @property
    def rhos(self) -> np.ndarray:
        return np.array([n.rho for n in self.nodes])

    @property
    def num_extended(self) -> int:
        return self.d + len(self.edges)

    @property
    def extended_specs(self) -> list[tuple[GaussianSpec, GaussianSpec]]:
        """``(f, g)`` per extended edge, self-loops first."""
        return [(n.f, n.g) for n in self.nodes] + [(e.f, e.g) for e in self.edges]

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per node, a list of ``(neighbor, edge index)``."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.d)]
        for k, e in enumerate(self.edges):
            adj[e.i].append((e.j, k))
            adj[e.j].append((e.i, k))
        return adj

    @cached_property
    def is_tree(self) -> bool:
        """True when the graph has no cycle (a forest; each component is a tree)."""
        parent = list(range(self.d))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in self.edges:
            ri, rj = find(e.i), find(e.j)
            if ri == rj:
                return False
            parent[ri] = rj
        return True

    @cached_property
    def _f_means(self) -> np.ndarray:
        return np.array([f.mean for f, _ in self.extended_specs])

    @cached_property
    def _g_means(self) -> np.ndarray:
        return np.array([g.mean for _, g in self.extended_specs])

    @cached_property
    def _f_stds(self) -> np.ndarray:
        return np.array([f.std for f, _ in self.extended_specs])

    @cached_property
    def _g_stds(self) -> np.ndarray:
        return np.array([g.std for _, g in self.extended_specs])

    @cached_property
    def exponent_matrix(self) -> np.ndarray:
        """(m, |E~|) 0/1 matrix; row ``l`` says which ratios enter ``theta_l``.

        Self-loop ``j`` contributes ``1 - b_j(l)``; edge ``{i, j}`` contributes
        ``1 - (b_i(l) or b_j(l))``.
        """
        if self.d > MAX_FULL_DIM:
            raise ArgumentError(f"full vectors are capped at d={MAX_FULL_DIM}")
        bits = bit_table(self.d)
        cols = [1 - bits[:, k] for k in range(self.d)]
        cols += [1 - (bits[:, e.i] | bits[:, e.j]) for e in self.edges]
        mat = np.stack(cols, axis=1).astype(float)
        mat.setflags(write=False)
        return mat

    def log_ratios(self, values: np.ndarray) -> np.ndarray:
        """``log g_e(x_e) - log f_e(x_e)`` per extended edge."""
        x = np.asarray(values, dtype=float)
        g_var = self._g_stds ** 2
        f_var = self._f_stds ** 2
        lr = (-0.5 * (x - self._g_means) ** 2 / g_var + 0.5 * (x - self._f_means) ** 2 / f_var
              - np.log(self._g_stds / self._f_stds))
        if not np.all(np.isfinite(lr)):
            raise DegenerateObservationError("non-finite log likelihood ratio in frame")
        return lr


@dataclass(frozen=True, eq=False)
class ObservationFrame:
    t: int
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class ChangeVector:
    lambdas: np.ndarray
    edge_lambdas: np.ndarray

    @classmethod
    def from_lambdas(cls, net: Network, lambdas: Sequence[int]) -> "ChangeVector":
        lam = np.asarray(lambdas, dtype=int)
        if lam.shape != (net.d,) or np.any(lam < 1):
            raise ArgumentError("need one positive change time per node")
        edge = np.array([min(lam[e.i], lam[e.j]) for e in net.edges], dtype=int)
        return cls(lam, edge)

    @property
    def max_lambda(self) -> int:
        return int(self.lambdas.max())


def sample_changes(net: Network, rng: np.random.Generator) -> ChangeVector:
    """Independent geometric change times per node; edges take the minimum."""
    return ChangeVector.from_lambdas(net, rng.geometric(net.rhos))


def post_change_mask(net: Network, changes: ChangeVector, t: int,
                     edge_convention: str = LITERAL) -> np.ndarray:
    """Boolean per extended edge: is the stream at time ``t`` drawn from ``f``?

    Node streams are post-change from ``t = lambda_j``.  Edge streams are
    post-change from ``t = lambda_e + 1`` under the literal convention and
    from ``t = lambda_e`` under the aligned one (which matches the edge
    potential used for inference).
    """
    if edge_convention not in EDGE_CONVENTIONS:
        raise ArgumentError(f"unknown edge convention {edge_convention!r}")
    shift = 1 if edge_convention == LITERAL else 0
    nodes = t >= changes.lambdas
    edges = t >= changes.edge_lambdas + shift
    return np.concatenate([nodes, edges])


def sample_frame(net: Network, changes: ChangeVector, t: int, rng: np.random.Generator,
                 edge_convention: str = LITERAL) -> ObservationFrame:
    if t < 1:
        raise ArgumentError("time index starts at 1")
    post = post_change_mask(net, changes, t, edge_convention)
    means = np.where(post, net._f_means, net._g_means)
    stds = np.where(post, net._f_stds, net._g_stds)
    return ObservationFrame(t, rng.normal(means, stds))


def theta_from_frame(net: Network, frame: ObservationFrame) -> WeightVec:
    """Per-step likelihood-ratio vector, anchor entry exactly 1."""
    lr = net.log_ratios(frame.values)
    return WeightVec(net.exponent_matrix @ lr)


@dataclass(frozen=True)
class InfoStats:
    i_min: float
    sigma_max: float
    i_star: float
    m: int
    kappa_bar: float

    @property
    def hypothesis_met(self) -> bool:
        return self.i_star > 0


def info_stats(net: Network, kappa_bar: float = 1.0) -> InfoStats:
    """Information summary ``(I_min, sigma_max, I*(kappa_bar), M)``.

    ``sigma_max`` is the largest standard deviation of the per-stream log
    likelihood ratio under the post-change law, used in place of the
    sub-Gaussian norm.
    """
    specs = net.extended_specs
    i_min = min(kl_gaussian(f, g) for f, g in specs)
    sigma_max = max(llr_std(f, g) for f, g in specs)
    m = net.d + len(net.edges)
    i_star = i_min - kappa_bar * sigma_max * math.sqrt(math.log(m))
    return InfoStats(i_min, sigma_max, i_star, m, kappa_bar)


def gaussian_network(rhos: Sequence[float], edges: Sequence[tuple[int, int]],
                     f: GaussianSpec, g: GaussianSpec) -> Network:
    """Network whose every stream shares the same pre/post laws."""
    nodes = tuple(NodeSpec(float(r), f, g) for r in rhos)
    return Network(nodes, tuple(EdgeSpec(i, j, f, g) for i, j in edges))
