"""Shared builders for the test suite."""

from irfcp.classic import GaussianSpec
from irfcp.network import EdgeSpec, Network, NodeSpec, sample_changes, sample_frame

POST = GaussianSpec(0.0, 1.0)
PRE = GaussianSpec(1.0, 1.0)


def random_tree_edges(rng, d):
    """Random labelled tree on ``d`` nodes (each node attaches to an earlier one)."""
    perm = rng.permutation(d)
    return [(int(perm[k]), int(perm[rng.integers(k)])) for k in range(1, d)]


def random_gaussian_pair(rng, sep_low=0.5, sep_high=2.0):
    mu_f = rng.uniform(-1.0, 1.0)
    sep = rng.uniform(sep_low, sep_high) * rng.choice([-1.0, 1.0])
    var_f = rng.uniform(0.5, 2.0)
    var_g = rng.uniform(0.5, 2.0)
    return GaussianSpec(mu_f, var_f), GaussianSpec(mu_f + sep, var_g)


def random_network(rng, d, rho_low=0.05, rho_high=0.6, forest=False):
    edges = random_tree_edges(rng, d)
    if forest and edges:
        keep = rng.random(len(edges)) < 0.7
        edges = [e for e, k in zip(edges, keep) if k]
    nodes = []
    for _ in range(d):
        f, g = random_gaussian_pair(rng)
        nodes.append(NodeSpec(float(rng.uniform(rho_low, rho_high)), f, g))
    specs = []
    for i, j in edges:
        f, g = random_gaussian_pair(rng)
        specs.append(EdgeSpec(i, j, f, g))
    return Network(tuple(nodes), tuple(specs))


def random_frames(rng, net, n, convention="aligned"):
    changes = sample_changes(net, rng)
    return [sample_frame(net, changes, t, rng, convention) for t in range(1, n + 1)]


def random_probvec_array(rng, d):
    e = rng.exponential(size=1 << d)
    return e / e.sum()
