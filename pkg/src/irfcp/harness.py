"""Monte Carlo drivers, summary statistics, and file output.

Replication ``r`` draws all of its randomness from
``numpy.random.default_rng(seed + r)``.  The detectors themselves are
deterministic given the data, so in the multi-node experiment the exact and
approximate algorithms see the same observation stream and their gap carries
no Monte Carlo noise of its own.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.stats import binomtest

from . import classic
from .approx import (
    MarginalState,
    algorithm1_step,
    lipschitz_bound_tap,
    tap_jacobian_bound_check,
    t_ap_array,
    tap_operator,
)
from .config import ExperimentConfig
from .errors import (
    ArgumentError,
    BoundUndefinedError,
    ExactConvergence,
    IrfcpError,
    UnsupportedTopologyError,
)
from .exact import DENSE_MAX_DIM, build_tex, jacobian_lipschitz_bound, lipschitz_bound_tex, tex_operator
from .irf import empirical_lipschitz, rate_fit, theorem1_bound, vertex_pairs
from .network import info_stats, sample_changes, sample_frame
from .simplex import MAX_FULL_DIM, bayes_update_array, marginals_array

ENVELOPE_LABEL = "parameterized envelope"


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    """``(low, high, half_width)`` of the Wilson score interval."""
    if trials == 0:
        return 0.0, 1.0, 0.5
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence,
                                                    method="wilson")
    return float(ci.low), float(ci.high), float(ci.high - ci.low) / 2.0


def first_crossings(gammas: np.ndarray, alpha: float) -> list[int | None]:
    """Per column, first ``n >= 1`` with ``gamma >= 1 - alpha``; rows are times."""
    out: list[int | None] = []
    for col in np.atleast_2d(gammas.T):
        hits = np.flatnonzero(col[1:] >= 1.0 - alpha)
        out.append(int(hits[0]) + 1 if hits.size else None)
    return out


def _safe_slope(dist: np.ndarray, burn_in: int) -> tuple[float | None, int | None]:
    try:
        return rate_fit(dist, burn_in=burn_in), None
    except ExactConvergence as exc:
        return None, exc.step
    except ArgumentError:
        return None, None


def _envelope(dist: np.ndarray, start: int, kappa: float, i_star: float, eps: float) -> np.ndarray:
    """Geometric envelope from ``start`` on; NaN where it is undefined."""
    out = np.full(dist.size, np.nan)
    if start >= dist.size or not 0.0 <= kappa <= 1.0:
        return out
    anchor = 1.0 - dist[start] / 2.0
    for n in range(start, dist.size):
        try:
            out[n] = theorem1_bound(anchor, kappa, i_star, eps, n - start)
        except (BoundUndefinedError, ArgumentError, OverflowError):
            break
    return out


# --------------------------------------------------------------------------
# multi-node experiment


@dataclass
class MultiTrace:
    rep: int
    seed: int
    lambdas: np.ndarray
    exact_gamma: np.ndarray | None    # (horizon+1, d)
    approx_gamma: np.ndarray          # (horizon+1, d)
    pair_gamma: np.ndarray            # (horizon+1, |E|)
    dist_exact: np.ndarray | None
    dist_approx: np.ndarray | None
    dist_gap: np.ndarray | None
    envelope_exact: np.ndarray | None = None
    envelope_approx: np.ndarray | None = None
    tau_exact: list[int | None] = field(default_factory=list)
    tau_approx: list[int | None] = field(default_factory=list)
    slope_exact: float | None = None
    slope_approx: float | None = None
    converged_exact: int | None = None
    converged_approx: int | None = None
    error: str | None = None


def sample_conditioned_changes(config: ExperimentConfig, rng: np.random.Generator):
    """Change vector, rejection-sampled on ``max lambda <= max_lambda`` if set."""
    changes = sample_changes(config.network, rng)
    if config.max_lambda is not None:
        while changes.max_lambda > config.max_lambda:
            changes = sample_changes(config.network, rng)
    return changes


def _fit_start(config: ExperimentConfig, lambdas: np.ndarray) -> int:
    """Rate fits start after the last change; the conditioning bound if one is set."""
    return int(config.max_lambda) if config.max_lambda is not None else int(lambdas.max())


def multi_replication(config: ExperimentConfig, rep: int) -> MultiTrace:
    """One replication: both algorithms on one shared observation stream."""
    net = config.network
    seed = config.seed + rep
    rng = np.random.default_rng(seed)
    changes = sample_conditioned_changes(config, rng)
    frames = [sample_frame(net, changes, t, rng, config.edge_convention)
              for t in range(1, config.horizon + 1)]
    d, horizon = net.d, config.horizon
    full = d <= MAX_FULL_DIM
    rhos = net.rhos

    def series(width=None):
        shape = (horizon + 1,) if width is None else (horizon + 1, width)
        return np.full(shape, np.nan)

    trace = MultiTrace(rep, seed, changes.lambdas,
                       exact_gamma=series(d) if full else None,
                       approx_gamma=series(d), pair_gamma=series(len(net.edges)),
                       dist_exact=series() if full else None,
                       dist_approx=series() if full else None,
                       dist_gap=series() if full else None)
    state = MarginalState.initial(d)
    trace.approx_gamma[0] = state.gammas
    trace.pair_gamma[0] = 0.0
    if full:
        kernel = build_tex(rhos)
        y = np.zeros(1 << d)
        y[0] = 1.0
        yt = y.copy()
        trace.exact_gamma[0] = 0.0
        trace.dist_exact[0] = trace.dist_approx[0] = 2.0
        trace.dist_gap[0] = 0.0
    t = 0
    try:
        for t, frame in enumerate(frames, start=1):
            lr = net.log_ratios(frame.values)
            state, pairs = algorithm1_step(state, frame, net)
            trace.approx_gamma[t] = state.gammas
            trace.pair_gamma[t] = [pairs[(e.i, e.j)] for e in net.edges]
            if full:
                log_theta = net.exponent_matrix @ lr
                y = bayes_update_array(kernel.apply_array(y), log_theta)
                yt = bayes_update_array(t_ap_array(yt, rhos), log_theta)
                trace.exact_gamma[t] = marginals_array(y)[0]
                trace.dist_exact[t] = 2.0 * y[:-1].sum()
                trace.dist_approx[t] = 2.0 * yt[:-1].sum()
                trace.dist_gap[t] = np.abs(y - yt).sum()
    except IrfcpError as exc:
        trace.error = f"step {t}: {exc}"
        return trace

    trace.tau_approx = first_crossings(trace.approx_gamma, config.alpha)
    if not full:
        return trace
    trace.tau_exact = first_crossings(trace.exact_gamma, config.alpha)
    start = _fit_start(config, changes.lambdas)
    stats = info_stats(net, config.kappa_bar)
    seg = slice(start, None)
    trace.slope_exact, trace.converged_exact = _safe_slope(trace.dist_exact[seg], config.burn_in)
    trace.slope_approx, trace.converged_approx = _safe_slope(trace.dist_approx[seg],
                                                             config.burn_in)
    trace.envelope_exact = _envelope(trace.dist_exact, start, lipschitz_bound_tex(rhos),
                                     stats.i_star, config.eps)
    trace.envelope_approx = _envelope(trace.dist_approx, start, lipschitz_bound_tap(rhos),
                                      stats.i_star, config.eps)
    return trace


def _multi_worker(args):
    return multi_replication(*args)


def run_multi(config: ExperimentConfig) -> "MultiResult":
    """Replicated exact vs approximate message passing on a tree network."""
    if not config.network.is_tree:
        raise UnsupportedTopologyError("run_multi needs an acyclic network")
    jobs = [(config, r) for r in range(config.reps)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            traces = list(pool.map(_multi_worker, jobs))
    else:
        traces = [_multi_worker(job) for job in jobs]
    return MultiResult(config, traces, summarize_multi(config, traces))


def _node_stats(taus: Sequence[int | None], lambdas: Sequence[int], horizon: int) -> dict[str, Any]:
    n = len(taus)
    false_alarms = sum(1 for tau, lam in zip(taus, lambdas) if tau is not None and tau < lam)
    delays = [tau - lam for tau, lam in zip(taus, lambdas) if tau is not None and tau >= lam]
    censored = sum(1 for tau, lam in zip(taus, lambdas) if tau is None and lam <= horizon)
    low, high, half = wilson_interval(false_alarms, n)
    return {
        "false_alarms": false_alarms,
        "false_alarm_rate": false_alarms / n if n else 0.0,
        "wilson_low": low,
        "wilson_high": high,
        "wilson_half_width": half,
        "mean_delay": float(np.mean(delays)) if delays else None,
        "detected": len(delays),
        "censored": censored,
    }


def _slope_stats(slopes: Sequence[float | None], converged: Sequence[int | None]) -> dict[str, Any]:
    vals = [s for s in slopes if s is not None]
    return {
        "fitted": len(vals),
        "exactly_converged": sum(1 for c in converged if c is not None),
        "mean": float(np.mean(vals)) if vals else None,
        "median": float(np.median(vals)) if vals else None,
        "negative_fraction": (sum(1 for s in vals if s < 0) + sum(1 for c in converged if c is not None))
        / max(len(slopes), 1),
    }


def gap_decayed(gap: np.ndarray, fraction: float = 0.1) -> bool:
    """Final gap below ``fraction`` of its running maximum."""
    g = gap[np.isfinite(gap)]
    if g.size == 0:
        return False
    peak = g.max()
    return bool(peak == 0.0 or g[-1] < fraction * peak)


def hypothesis_flags(config: ExperimentConfig) -> dict[str, Any]:
    net = config.network
    stats = info_stats(net, config.kappa_bar)
    k_rho = lipschitz_bound_tap(net.rhos)
    return {
        "I_min": stats.i_min,
        "sigma_max_proxy": stats.sigma_max,
        "I_star": stats.i_star,
        "M": stats.m,
        "kappa_bar": config.kappa_bar,
        "I_star_positive": stats.hypothesis_met,
        "L_rho": lipschitz_bound_tex(net.rhos),
        "K_rho": k_rho,
        "K_rho_at_most_one": k_rho <= 1.0,
    }


def summarize_multi(config: ExperimentConfig, traces: Sequence[MultiTrace]) -> dict[str, Any]:
    net = config.network
    names = net.names or tuple(str(k + 1) for k in range(net.d))
    ok = [tr for tr in traces if tr.error is None]
    summary: dict[str, Any] = {
        "kind": "multi",
        "config": config.echo(),
        "seeds": [tr.seed for tr in traces],
        "replications": len(traces),
        "failed_replications": [{"rep": tr.rep, "error": tr.error} for tr in traces if tr.error],
        "hypotheses": hypothesis_flags(config),
        "envelope": {"label": ENVELOPE_LABEL, "c": 1.0, "kappa_bar": config.kappa_bar,
                     "eps": config.eps},
    }
    nodes: dict[str, Any] = {}
    for j, name in enumerate(names):
        lams = [int(tr.lambdas[j]) for tr in ok]
        entry = {"approx": _node_stats([tr.tau_approx[j] for tr in ok], lams, config.horizon)}
        if ok and ok[0].exact_gamma is not None:
            entry["exact"] = _node_stats([tr.tau_exact[j] for tr in ok], lams, config.horizon)
        nodes[name] = entry
    summary["nodes"] = nodes
    if ok and ok[0].dist_exact is not None:
        summary["rate_fit"] = {
            "exact": _slope_stats([tr.slope_exact for tr in ok], [tr.converged_exact for tr in ok]),
            "approx": _slope_stats([tr.slope_approx for tr in ok], [tr.converged_approx for tr in ok]),
        }
        summary["gap_decay_fraction"] = float(np.mean([gap_decayed(tr.dist_gap) for tr in ok]))
    return summary


@dataclass
class MultiResult:
    config: ExperimentConfig
    traces: list[MultiTrace]
    summary: dict[str, Any]


# --------------------------------------------------------------------------
# single-node experiment


@dataclass
class ClassicRep:
    rep: int
    seed: int
    trace: classic.ClassicTrace
    rate_check: classic.RateCheck | None
    envelope: np.ndarray


def classic_replication(config: ExperimentConfig, rep: int) -> ClassicRep:
    model = config.classic_model()
    seed = config.seed + rep
    rng = np.random.default_rng(seed)
    lam = classic.sample_changepoint(model, rng)
    if config.max_lambda is not None:
        while lam > config.max_lambda:
            lam = classic.sample_changepoint(model, rng)
    _, trace = classic.shiryayev_run(model, config.alpha, lam, config.horizon, rng)
    trial = classic.rate_check_from_trace(model, trace, burn_in=config.burn_in)
    i_rate = classic.kl_gaussian(model.f, model.g)
    envelope = _envelope(trace.distances, lam - 1, 1.0 - model.rho, i_rate, config.eps)
    return ClassicRep(rep, seed, trace, trial, envelope)


def _classic_worker(args):
    return classic_replication(*args)


def run_classic(config: ExperimentConfig) -> "ClassicResult":
    reps = range(config.reps)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_classic_worker, [(config, r) for r in reps]))
    else:
        results = [classic_replication(config, r) for r in reps]
    return ClassicResult(config, results, summarize_classic(config, results))


def summarize_classic(config: ExperimentConfig, results: Sequence[ClassicRep]) -> dict[str, Any]:
    model = config.classic_model()
    taus = [r.trace.tau for r in results]
    lams = [r.trace.lam for r in results]
    trials = [r.rate_check for r in results if r.rate_check is not None]
    i_rate = classic.kl_gaussian(model.f, model.g)
    return {
        "kind": "classic",
        "config": config.echo(),
        "seeds": [r.seed for r in results],
        "replications": len(results),
        "node": _node_stats(taus, lams, config.horizon),
        "detectable": model.detectable,
        "KL": i_rate,
        "rate_check": {
            "bound_slope": math.log(1.0 - model.rho) - i_rate if model.rho < 1 else None,
            "checked": len(trials),
            "pass_fraction": float(np.mean([t.passed for t in trials])) if trials else None,
            "mean_slope": float(np.mean([t.slope for t in trials if t.converged_at is None]))
            if any(t.converged_at is None for t in trials) else None,
        },
        "envelope": {"label": ENVELOPE_LABEL, "c": 1.0, "eps": config.eps},
    }


@dataclass
class ClassicResult:
    config: ExperimentConfig
    reps: list[ClassicRep]
    summary: dict[str, Any]


# --------------------------------------------------------------------------
# Lipschitz report


@dataclass
class LipschitzReport:
    rhos: list[float]
    tex_bound: float
    tap_bound: float
    tex_empirical: float
    tap_empirical: float
    tex_jacobian_bound: float | None
    jacobian: Any
    checks: dict[str, bool]
    warnings: list[str]

    def render(self) -> str:
        lines = [
            f"rho = {self.rhos}",
            f"T_ex: bound 1 - prod(rho) = {self.tex_bound:.6g}, empirical = {self.tex_empirical:.6g}",
            f"T_ap: bound sum(1 - rho) = {self.tap_bound:.6g}, empirical = {self.tap_empirical:.6g}",
        ]
        if self.tex_jacobian_bound is not None:
            lines.append(f"T_ex corrected column-sum bound = {self.tex_jacobian_bound:.6g}")
        if self.jacobian is not None:
            j = self.jacobian
            lines.append(f"J_H column sums: max |colsum - 2| = {j.jh_colsum_max_dev:.3g}")
            lines.append(f"J_K corrected column sums: max deviation = {j.jk_corrected_colsum_max_dev:.3g}")
            lines.append(f"corrected product norm: max {j.product_norm_max:.6g} vs bound {j.bound:.6g}")
        for name, ok in self.checks.items():
            lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rhos": self.rhos, "tex_bound": self.tex_bound, "tap_bound": self.tap_bound,
            "tex_empirical": self.tex_empirical, "tap_empirical": self.tap_empirical,
            "tex_jacobian_bound": self.tex_jacobian_bound, "checks": self.checks,
            "warnings": self.warnings,
        }


def cmd_lipschitz(rhos: Sequence[float], num_pairs: int = 10_000, seed: int = 0,
                  jacobian_samples: int = 200, tol: float = 1e-9) -> LipschitzReport:
    r = np.asarray(rhos, dtype=float)
    d = r.size
    tex = tex_operator(r)
    tap = tap_operator(r)
    tex_bound = lipschitz_bound_tex(r)
    tap_bound = lipschitz_bound_tap(r)
    extra = vertex_pairs(d) if d <= 8 else None
    tex_emp = empirical_lipschitz(tex, num_pairs, seed, pairs=extra)
    tap_emp = empirical_lipschitz(tap, num_pairs, seed + 1)
    checks = {
        "empirical T_ex <= 1 - prod(rho)": tex_emp <= tex_bound + tol,
        "empirical T_ap <= sum(1 - rho)": tap_emp <= tap_bound + tol,
    }
    tex_jac = None
    if d <= DENSE_MAX_DIM:
        anchor = np.zeros(1 << d)
        anchor[-1] = np.prod(r)
        tex_jac = jacobian_lipschitz_bound(build_tex(r).matrix, anchor)
        checks["corrected T_ex column sums == 1 - prod(rho)"] = abs(tex_jac - tex_bound) <= tol
    jac = None
    if d <= 10:
        jac = tap_jacobian_bound_check(r, jacobian_samples, seed)
        checks["J_H absolute column sums == 2"] = jac.jh_ok
        checks["corrected J_K column sums == sum(1 - rho)/2"] = jac.jk_ok
        checks["corrected J_H J_K norm <= sum(1 - rho)"] = jac.product_ok
    warnings = []
    if tap_bound > 1:
        warnings.append(f"K_rho = {tap_bound:.6g} > 1: the contraction hypothesis for the "
                        "approximate algorithm does not hold")
    return LipschitzReport([float(x) for x in r], tex_bound, tap_bound, tex_emp, tap_emp,
                           tex_jac, jac, checks, warnings)


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".17g")


def multi_rows(trace: MultiTrace, config: ExperimentConfig):
    net = config.network
    names = net.names or tuple(str(k + 1) for k in range(net.d))
    header = ["n"]
    header += [f"exact_gamma_{s}" for s in names] if trace.exact_gamma is not None else []
    header += [f"approx_gamma_{s}" for s in names]
    header += [f"approx_pair_{names[e.i]}_{names[e.j]}" for e in net.edges]
    full = trace.dist_exact is not None
    if full:
        header += ["dist_exact", "dist_approx", "dist_gap", "envelope_exact", "envelope_approx"]
    header += [f"changed_{s}" for s in names]
    rows = []
    for n in range(config.horizon + 1):
        row = [str(n)]
        if trace.exact_gamma is not None:
            row += [_fmt(v) for v in trace.exact_gamma[n]]
        row += [_fmt(v) for v in trace.approx_gamma[n]]
        row += [_fmt(v) for v in trace.pair_gamma[n]]
        if full:
            row += [_fmt(trace.dist_exact[n]), _fmt(trace.dist_approx[n]),
                    _fmt(trace.dist_gap[n] if trace.dist_gap is not None else None),
                    _fmt(trace.envelope_exact[n] if trace.envelope_exact is not None else None),
                    _fmt(trace.envelope_approx[n] if trace.envelope_approx is not None else None)]
        row += ["1" if n >= lam else "0" for lam in trace.lambdas]
        rows.append(row)
    return header, rows


def classic_rows(rep: ClassicRep, config: ExperimentConfig):
    header = ["n", "gamma", "log_one_minus_gamma", "dist", "envelope", "changed"]
    tr = rep.trace
    rows = []
    for n in range(tr.gammas.size):
        rows.append([str(n), _fmt(tr.gammas[n]), _fmt(tr.log_complements[n]),
                     _fmt(tr.distances[n]), _fmt(rep.envelope[n]),
                     "1" if n >= tr.lam else "0"])
    return header, rows


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def emit(result, out_dir: str | Path) -> list[Path]:
    """Write one CSV per replication plus ``summary.json``; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if isinstance(result, MultiResult):
        items = [(tr.rep, multi_rows(tr, result.config)) for tr in result.traces]
    elif isinstance(result, ClassicResult):
        items = [(r.rep, classic_rows(r, result.config)) for r in result.reps]
    else:
        raise ArgumentError(f"cannot emit {type(result).__name__}")
    for rep, (header, rows) in items:
        path = out / f"rep_{rep:05d}.csv"
        _write_csv(path, header, rows)
        written.append(path)
    summary_path = out / "summary.json"
    try:
        with open(summary_path, "w") as fh:
            json.dump(result.summary, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {summary_path}: {exc}") from exc
    written.append(summary_path)
    return written


def refit_csv(path: str | Path, burn_in: int = 5) -> dict[str, Any]:
    """Re-run the rate fit on every ``dist*`` column of an emitted trace CSV.

    The fit starts at the first row where every ``changed_*`` marker is 1.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ArgumentError(f"{path} has no rows")
    markers = [k for k in rows[0] if k.startswith("changed")]
    start = next((i for i, row in enumerate(rows) if all(row[k] == "1" for k in markers)), None)
    out: dict[str, Any] = {"file": str(path), "start": start}
    if start is None:
        return out
    for col in rows[0]:
        if not col.startswith("dist") or col == "dist_gap":
            continue
        vals = np.array([float(r[col]) if r[col] != "" else np.nan for r in rows[start:]])
        vals = vals[np.isfinite(vals)]
        slope, conv = _safe_slope(vals, burn_in)
        out[col] = {"slope": slope, "exact_convergence_step": None if conv is None else conv + start}
    return out
