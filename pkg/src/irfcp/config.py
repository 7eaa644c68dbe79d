"""Experiment configuration, built-in presets, and the TOML file format.

A configuration file has an optional ``[experiment]`` table and a network
given either by ``preset = "<name>"`` inside ``[experiment]`` or by explicit
node and edge blocks::

    [experiment]
    horizon = 100
    alpha = 0.01
    reps = 200
    seed = 7

    [defaults]                    # fallbacks for every node and edge;
                                  # f and g default to N(0, 1) and N(1, 1)
    rho = 0.1
    f = { mean = 0.0, variance = 1.0 }   # post-change law
    g = { mean = 1.0, variance = 1.0 }   # pre-change law

    [[node]]
    name = "hub"
    rho = 0.2                     # overrides the default

    [[node]]
    name = "leaf"

    [[edge]]
    nodes = ["hub", "leaf"]

The full list of keys is in README.md.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

from .classic import ClassicModel, GaussianSpec
from .errors import ArgumentError, ConfigError
from .network import EDGE_CONVENTIONS, LITERAL, EdgeSpec, Network, NodeSpec, gaussian_network

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

POST = GaussianSpec(0.0, 1.0)
PRE = GaussianSpec(1.0, 1.0)


def preset_network(name: str) -> Network:
    """Built-in networks.

    ``classic``: one node, means 1 -> 0, variance 1, rho 0.1.
    ``star4``: star on four nodes centred at node "2" (edges 1-2, 2-3, 2-4),
    every stream Gaussian with variance 1 and means 1 -> 0, rho 0.1.
    ``pair``: two nodes joined by one edge, same laws, rho 0.1.
    """
    if name == "classic":
        return gaussian_network([0.1], [], POST, PRE)
    if name == "star4":
        net = gaussian_network([0.1] * 4, [(0, 1), (1, 2), (1, 3)], POST, PRE)
        return replace(net, names=("1", "2", "3", "4"))
    if name == "pair":
        return gaussian_network([0.1, 0.1], [(0, 1)], POST, PRE)
    raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


PRESETS = ("classic", "star4", "pair")


@dataclass(frozen=True)
class ExperimentConfig:
    network: Network
    preset: str | None = None
    horizon: int = 100
    alpha: float = 0.01
    reps: int = 100
    seed: int = 0
    kappa_bar: float = 1.0
    eps: float = 0.0
    out: str | None = None
    max_lambda: int | None = None
    edge_convention: str = LITERAL
    burn_in: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if self.edge_convention not in EDGE_CONVENTIONS:
            raise ConfigError(f"edge_convention must be one of {EDGE_CONVENTIONS}")
        if self.max_lambda is not None and self.max_lambda < 1:
            raise ConfigError("max_lambda must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def classic_model(self) -> ClassicModel:
        if self.network.d != 1:
            raise ConfigError("the classic experiment needs a single-node network")
        node = self.network.nodes[0]
        return ClassicModel(node.f, node.g, node.rho)

    def echo(self) -> dict[str, Any]:
        """JSON-ready description of this configuration."""
        net = self.network
        names = net.names or tuple(str(k + 1) for k in range(net.d))

        def law(s: GaussianSpec):
            return {"mean": s.mean, "variance": s.variance}

        return {
            "preset": self.preset,
            "horizon": self.horizon,
            "alpha": self.alpha,
            "reps": self.reps,
            "seed": self.seed,
            "kappa_bar": self.kappa_bar,
            "eps": self.eps,
            "max_lambda": self.max_lambda,
            "edge_convention": self.edge_convention,
            "burn_in": self.burn_in,
            "network": {
                "nodes": [{"name": names[k], "rho": n.rho, "f": law(n.f), "g": law(n.g)}
                          for k, n in enumerate(net.nodes)],
                "edges": [{"nodes": [names[e.i], names[e.j]], "f": law(e.f), "g": law(e.g)}
                          for e in net.edges],
            },
        }


def _law(raw: Any, fallback: GaussianSpec | None, where: str) -> GaussianSpec:
    if raw is None:
        if fallback is None:
            raise ConfigError(f"{where}: missing law and no default given")
        return fallback
    try:
        return GaussianSpec(float(raw["mean"]), float(raw["variance"]))
    except (KeyError, TypeError, ValueError, ArgumentError) as exc:
        raise ConfigError(f"{where}: bad Gaussian law {raw!r}") from exc


def network_from_mapping(doc: Mapping[str, Any]) -> Network:
    defaults = doc.get("defaults", {})
    d_rho = defaults.get("rho")
    d_f = _law(defaults.get("f"), POST, "defaults.f")
    d_g = _law(defaults.get("g"), PRE, "defaults.g")
    raw_nodes = doc.get("node", [])
    if not raw_nodes:
        raise ConfigError("network needs at least one [[node]] block")
    names: list[str] = []
    nodes = []
    for k, raw in enumerate(raw_nodes):
        name = str(raw.get("name", k + 1))
        if name in names:
            raise ConfigError(f"duplicate node name {name!r}")
        names.append(name)
        rho = raw.get("rho", d_rho)
        if rho is None:
            raise ConfigError(f"node {name}: missing rho")
        where = f"node {name}"
        try:
            nodes.append(NodeSpec(float(rho), _law(raw.get("f"), d_f, where + ".f"),
                                  _law(raw.get("g"), d_g, where + ".g")))
        except ArgumentError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    index = {n: k for k, n in enumerate(names)}
    edges = []
    for raw in doc.get("edge", []):
        ends = raw.get("nodes")
        if not isinstance(ends, list) or len(ends) != 2:
            raise ConfigError(f"edge needs nodes = [a, b], got {ends!r}")
        a, b = (str(x) for x in ends)
        if a not in index or b not in index:
            raise ConfigError(f"edge {a}-{b} references an unknown node")
        where = f"edge {a}-{b}"
        edges.append(EdgeSpec(index[a], index[b], _law(raw.get("f"), d_f, where + ".f"),
                              _law(raw.get("g"), d_g, where + ".g")))
    try:
        return Network(tuple(nodes), tuple(edges), tuple(names))
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from exc


_EXPERIMENT_KEYS = {
    "horizon": int, "alpha": float, "reps": int, "seed": int, "kappa_bar": float,
    "eps": float, "out": str, "max_lambda": int, "edge_convention": str,
    "burn_in": int, "workers": int,
}


def config_from_mapping(doc: Mapping[str, Any], **overrides) -> ExperimentConfig:
    exp = dict(doc.get("experiment", {}))
    preset = overrides.pop("preset", None) or exp.pop("preset", None)
    exp.pop("preset", None)
    unknown = set(exp) - set(_EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
    kwargs = {k: _EXPERIMENT_KEYS[k](v) for k, v in exp.items()}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if preset is not None:
        network = preset_network(preset)
    elif "node" in doc:
        network = network_from_mapping(doc)
    else:
        preset = "star4"
        network = preset_network(preset)
    return ExperimentConfig(network=network, preset=preset, **kwargs)


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read a TOML config (or start from defaults) and apply CLI overrides."""
    doc: Mapping[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_mapping(doc, **overrides)
