"""Mean-field prediction and marginal-only message passing.

The approximate prediction replaces the joint predictive law by the product
of its marginals, each pushed through the scalar geometric predictor
``p1 -> rho + (1 - rho) p1``.  On a tree the update that follows can be
carried out on marginals alone with two-pass sum-product over binary
variables, which costs O(d) per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DegenerateObservationError, UnsupportedTopologyError
from .irf import IrfOperator
from .network import Network, ObservationFrame
from .simplex import (
    BernoulliPair,
    ProbVec,
    WeightVec,
    bayes_update,
    bit_table,
    marginals_array,
    tensor_array,
)


def r_rho(pair: BernoulliPair, rho: float) -> BernoulliPair:
    if not 0.0 < rho <= 1.0:
        raise ArgumentError(f"rho must be in (0, 1], got {rho}")
    p0 = (1.0 - rho) * pair.p0
    return BernoulliPair(1.0 - p0, p0)


def t_ap_array(y: np.ndarray, rhos: np.ndarray) -> np.ndarray:
    """Array form of :func:`t_ap`; accepts leading batch axes."""
    _, p0 = marginals_array(y)
    p0 = (1.0 - rhos) * p0
    return tensor_array(1.0 - p0, p0)


def t_ap(y: ProbVec, rhos: Sequence[float]) -> ProbVec:
    """Tensor product of the predicted marginals of ``y``."""
    r = np.asarray(rhos, dtype=float)
    if r.size != y.d:
        raise ArgumentError("need one rho per node")
    return ProbVec(t_ap_array(y.entries, r))


def tap_operator(rhos: Sequence[float]) -> IrfOperator:
    r = np.asarray(rhos, dtype=float)
    d = r.size
    return IrfOperator(d, lambda y: t_ap(y, r), lipschitz_bound_tap(r),
                       ProbVec.target(d), "T_ap", apply_batch=lambda ys: t_ap_array(ys, r))


def approx_step_full(y: ProbVec, theta: WeightVec, rhos: Sequence[float]) -> ProbVec:
    return bayes_update(t_ap(y, rhos), theta)


def lipschitz_bound_tap(rhos: Sequence[float]) -> float:
    return float(np.sum(1.0 - np.asarray(rhos, dtype=float)))


@dataclass(frozen=True, eq=False)
class MarginalState:
    """Per-node posteriors ``gamma_j`` together with their complements.

    The complements are carried separately so that ``1 - gamma_j`` keeps its
    relative precision once ``gamma_j`` is within rounding of 1.
    """

    gammas: np.ndarray
    complements: np.ndarray

    @classmethod
    def initial(cls, d: int) -> "MarginalState":
        return cls(np.zeros(d), np.ones(d))

    @property
    def d(self) -> int:
        return self.gammas.size


@dataclass(frozen=True, eq=False)
class PairwiseModel:
    """Log-domain pairwise model over binary ``Z`` on a forest.

    ``node_log[j]`` is a length-2 array indexed by ``z``; ``edge_log[k]`` is
    the 2x2 table for edge ``k`` indexed ``[z_i, z_j]``.
    """

    node_log: np.ndarray
    edge_log: np.ndarray
    net: Network

    def log_joint(self) -> np.ndarray:
        """Unnormalized log probability of every mask (for small ``d``)."""
        d = self.net.d
        bits = bit_table(d)
        out = np.zeros(1 << d)
        for j in range(d):
            out += self.node_log[j][bits[:, j]]
        for k, e in enumerate(self.net.edges):
            out += self.edge_log[k][bits[:, e.i], bits[:, e.j]]
        return out


def build_pairwise_model(pred: MarginalState, lr: np.ndarray, net: Network) -> PairwiseModel:
    """Potentials divided through by the post-change densities.

    Node ``j``: ``nu(z; gamma_pred) * (g/f)^(1-z)``; edge ``{i, j}``:
    ``(g/f)^(1 - (z_i or z_j))``.
    """
    d = net.d
    with np.errstate(divide="ignore"):
        node_log = np.stack([np.log(pred.complements) + lr[:d], np.log(pred.gammas)], axis=1)
    edge_log = np.zeros((len(net.edges), 2, 2))
    edge_log[:, 0, 0] = lr[d:]
    return PairwiseModel(node_log, edge_log, net)


def _normalize(v: np.ndarray) -> np.ndarray:
    """Shift a length-2 log vector so that it exponentiates to a distribution."""
    z = np.logaddexp(v[0], v[1])
    if not np.isfinite(z):
        raise DegenerateObservationError("all configurations have zero weight")
    return v - z


def _message(h: np.ndarray, table: np.ndarray) -> np.ndarray:
    """``log sum_a exp(h[a] + table[a, b])`` for ``b`` in {0, 1}, normalized."""
    return _normalize(np.logaddexp(h[0] + table[0], h[1] + table[1]))


def _traversal(net: Network):
    """Components rooted at their lowest-index node, in BFS order.

    Returns ``(order, parent, parent_edge)``; roots have parent ``-1``.
    """
    d = net.d
    parent = np.full(d, -1)
    parent_edge = np.full(d, -1)
    seen = np.zeros(d, dtype=bool)
    order = []
    for root in range(d):
        if seen[root]:
            continue
        seen[root] = True
        queue = [root]
        while queue:
            v = queue.pop(0)
            order.append(v)
            for w, k in net.adjacency[v]:
                if not seen[w]:
                    seen[w] = True
                    parent[w], parent_edge[w] = v, k
                    queue.append(w)
    return order, parent, parent_edge


def _edge_table(model: PairwiseModel, k: int, src: int) -> np.ndarray:
    """Edge table oriented as ``[z_src, z_other]``."""
    table = model.edge_log[k]
    return table if model.net.edges[k].i == src else table.T


def sum_product(model: PairwiseModel):
    """Two-pass sum-product; returns log node beliefs and log pair beliefs.

    Node beliefs are ``(d, 2)``; pair beliefs are ``(|E|, 2, 2)`` indexed
    ``[z_i, z_j]`` for each edge ``{i, j}``.  Every message is normalized.
    """
    net = model.net
    if not net.is_tree:
        raise UnsupportedTopologyError("sum-product requires an acyclic graph")
    order, parent, parent_edge = _traversal(net)
    msgs: dict[tuple[int, int], np.ndarray] = {}

    def incoming(v, exclude=-1):
        total = model.node_log[v].copy()
        for w, _ in net.adjacency[v]:
            if w != exclude:
                total = total + msgs[(w, v)]
        return total

    for v in reversed(order):
        p = parent[v]
        if p < 0:
            continue
        h = incoming(v, exclude=p)
        msgs[(v, p)] = _message(h, _edge_table(model, parent_edge[v], v))
    for v in order:
        for w, k in net.adjacency[v]:
            if w == parent[v]:
                continue
            h = incoming(v, exclude=w)
            msgs[(v, w)] = _message(h, _edge_table(model, k, v))

    beliefs = np.stack([_normalize(incoming(v)) for v in range(net.d)])
    pairs = np.empty((len(net.edges), 2, 2))
    for k, e in enumerate(net.edges):
        joint = (incoming(e.i, exclude=e.j)[:, None] + incoming(e.j, exclude=e.i)[None, :]
                 + model.edge_log[k])
        pairs[k] = joint - np.logaddexp.reduce(joint.reshape(-1))
    return beliefs, pairs


def predict_marginals(state: MarginalState, rhos: np.ndarray) -> MarginalState:
    comp = (1.0 - rhos) * state.complements
    return MarginalState(1.0 - comp, comp)


def algorithm1_step(state: MarginalState, frame: ObservationFrame, net: Network):
    """One step of marginal-only approximate message passing.

    Returns ``(new_state, pair)`` where ``pair[(i, j)]`` is the approximate
    posterior probability that node ``i`` or node ``j`` has changed.
    """
    if state.d != net.d:
        raise ArgumentError("state dimension does not match network")
    if not net.is_tree:
        raise UnsupportedTopologyError("algorithm requires an acyclic graph")
    pred = predict_marginals(state, net.rhos)
    lr = net.log_ratios(frame.values)
    model = build_pairwise_model(pred, lr, net)
    beliefs, pair_beliefs = sum_product(model)
    probs = np.exp(beliefs)
    new = MarginalState(probs[:, 1], probs[:, 0])
    pair = {(e.i, e.j): float(1.0 - np.exp(pair_beliefs[k, 0, 0]))
            for k, e in enumerate(net.edges)}
    return new, pair


def jacobian_h(u: np.ndarray) -> np.ndarray:
    """Jacobian (m x d) of ``u -> tensor_j (u_j, 1 - u_j)`` in mask order."""
    d = u.size
    bits = bit_table(d)
    factors = np.where(bits == 1, u[None, :], 1.0 - u[None, :])
    jac = np.empty((1 << d, d))
    for j in range(d):
        others = np.prod(np.delete(factors, j, axis=1), axis=1)
        jac[:, j] = np.where(bits[:, j] == 1, 1.0, -1.0) * others
    return jac


def jacobian_k(rhos: np.ndarray) -> np.ndarray:
    """Constant Jacobian (d x m) of ``y -> (1 - (1 - rho_j) P_j(z_j = 0))_j``."""
    bits = bit_table(rhos.size)
    return -(1.0 - rhos)[:, None] * (1 - bits.T)


def k_map(y: np.ndarray, rhos: np.ndarray) -> np.ndarray:
    """Affine extension of the per-node predicted ``p1`` to all of R^m."""
    bits = bit_table(rhos.size)
    zero_mass = (1 - bits.T) @ y
    return 1.0 - (1.0 - rhos) * zero_mass


@dataclass
class JacobianReport:
    rhos: np.ndarray
    samples: int
    jh_colsum_max_dev: float
    jk_corrected_colsum_max_dev: float
    product_norm_max: float
    bound: float
    tol: float = 1e-9

    @property
    def jh_ok(self) -> bool:
        return self.jh_colsum_max_dev <= self.tol

    @property
    def jk_ok(self) -> bool:
        return self.jk_corrected_colsum_max_dev <= self.tol

    @property
    def product_ok(self) -> bool:
        return self.product_norm_max <= self.bound + self.tol

    @property
    def passed(self) -> bool:
        return self.jh_ok and self.jk_ok and self.product_ok


def tap_jacobian_bound_check(rhos: Sequence[float], samples: int,
                             rng_seed: int = 0) -> JacobianReport:
    """Check the column-sum facts behind the ``T_ap`` Lipschitz bound.

    At each sampled ``y`` in the simplex: every absolute column sum of
    ``J_H(K(y))`` is 2; every absolute column sum of ``J_K + rbar 1^T / 2``
    is ``sum(rbar) / 2``; and the corrected product has 1-norm at most
    ``sum(rbar)``.
    """
    r = np.asarray(rhos, dtype=float)
    d = r.size
    if d > 10:
        raise ArgumentError("Jacobian check is limited to d <= 10")
    rng = np.random.default_rng(rng_seed)
    m = 1 << d
    rbar = 1.0 - r
    jk = jacobian_k(r)
    corrected = jk + 0.5 * rbar[:, None]
    jk_dev = float(np.abs(np.abs(corrected).sum(axis=0) - 0.5 * rbar.sum()).max())
    jh_dev = 0.0
    prod_max = 0.0
    for _ in range(samples):
        e = rng.exponential(size=m)
        y = e / e.sum()
        u = k_map(y, r)
        jh = jacobian_h(u)
        jh_dev = max(jh_dev, float(np.abs(np.abs(jh).sum(axis=0) - 2.0).max()))
        prod = jh @ corrected
        prod_max = max(prod_max, float(np.abs(prod).sum(axis=0).max()))
    return JacobianReport(r, samples, jh_dev, jk_dev, prod_max, float(rbar.sum()))
