"""Entanglement-distribution planning on the augmented ground multigraph.

For every unordered station pair the plan picks a generation ratio ``g`` over
the pair's combined fiber + lightpath capacity, and for every repeater ``k``
and pair ``mn`` a swapping rate ``y`` (consuming one ``mk`` and one ``kn``
ebit per attempt, producing an ``mn`` ebit with probability ``q_k``).  Pair
balances force every produced ebit to be either consumed by a swap or
delivered to the commodity on that pair.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import stats

from . import lpsolve
from .netmodel import AugmentedGraph, pair_key

MODES = ("max_total", "max_total_demand_capped", "max_min_fairness")


@dataclass(frozen=True)
class EdtObjective:
    mode: str = "max_total"
    window: int = 0  # demand window used by the demand-aware modes

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown EDT objective {self.mode!r}; expected one of {MODES}")


@dataclass
class EdtPlan:
    g: dict  # pair -> generation ratio
    swaps: dict  # (k, pair) -> swapping rate
    zeta: dict  # commodity id -> expected EDR
    inputs: dict  # pair -> I(pair)
    outputs: dict  # pair -> Omega(pair)
    commodity_pairs: dict  # commodity id -> pair
    fairness: float | None = None
    status: str = "optimal"

    @property
    def total(self) -> float:
        return float(sum(self.zeta.values()))

    def swap_rate(self, k, m, n) -> float:
        return self.swaps.get((k, pair_key(m, n)), 0.0)

    def export(self, directory) -> None:
        import os

        with open(os.path.join(directory, "plan_g.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair", "g"])
            for p, v in sorted(self.g.items(), key=lambda kv: str(kv[0])):
                w.writerow([f"{p[0]}-{p[1]}", v])
        with open(os.path.join(directory, "plan_y.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "m", "n", "y"])
            for (k, (m, n)), v in sorted(self.swaps.items(), key=lambda kv: str(kv[0])):
                w.writerow([k, m, n, v])
        with open(os.path.join(directory, "plan_zeta.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["commodity", "zeta"])
            for c, v in self.zeta.items():
                w.writerow([c, v])


def _swap_closure(base_pairs, nodes, repeaters, dense=False):
    """Pairs that can hold ebits and the swaps ``(k, mn)`` that can produce them."""
    nodes = sorted(nodes, key=str)
    if dense:
        swaps = set()
        for k in repeaters:
            for i, m in enumerate(nodes):
                for n in nodes[i + 1:]:
                    if k not in (m, n):
                        swaps.add((k, pair_key(m, n)))
        pairs = set(base_pairs) | {p for _, p in swaps}
        return pairs, sorted(swaps, key=str)
    pairs = set(base_pairs)
    swaps = set()
    changed = True
    while changed:
        changed = False
        for k in repeaters:
            partners = sorted({a if b == k else b for a, b in pairs if k in (a, b)}, key=str)
            for i, m in enumerate(partners):
                for n in partners[i + 1:]:
                    s = (k, pair_key(m, n))
                    if s not in swaps:
                        swaps.add(s)
                        changed = True
                        pairs.add(s[1])
    return pairs, sorted(swaps, key=str)


def build_edt(graph: AugmentedGraph, commodities, objective: EdtObjective | str = "max_total",
              repeaters: Iterable | None = None, nodes: Iterable | None = None,
              dense: bool = False) -> lpsolve.LpModel:
    """Program over ``g``/``y``/``zeta``.  ``nodes`` limits which stations take part,
    ``repeaters`` which of them may swap (both default to every station)."""
    if isinstance(objective, str):
        objective = EdtObjective(objective)
    station_ids = set(graph.station_ids)
    nodes = set(station_ids if nodes is None else nodes)
    repeaters = set(nodes if repeaters is None else repeaters) & nodes
    commodities = list(commodities)
    for c in commodities:
        if c.source not in station_ids or c.dest not in station_ids:
            raise ValueError(f"commodity {c.id} endpoint not in graph")
    q_swap = graph.swap_success()

    rate: dict = {}
    for e in graph.edges:
        a, b = e.pair
        if a in nodes and b in nodes:
            rate[e.pair] = rate.get(e.pair, 0.0) + e.capacity * e.success
    base = {p for p, r in rate.items() if r > 0}
    pairs, swaps = _swap_closure(base, nodes, repeaters, dense)

    model = lpsolve.LpModel(f"edt-{objective.mode}")
    gvar = {p: model.add_var(("g", p), 0.0, 1.0) for p in sorted(base, key=str)}
    yvar = {s: model.add_var(("y", s[0], s[1])) for s in swaps}
    zvar = {}
    demand = {}
    capped = objective.mode != "max_total"
    for c in commodities:
        z = c.demand(objective.window)
        demand[c.id] = z
        ub = z if capped else lpsolve.INF
        if c.pair not in pairs:
            ub = 0.0
        zvar[c.id] = model.add_var(("zeta", c.id), 0.0, ub,
                                   obj=1.0 if objective.mode != "max_min_fairness" else 0.0)

    rows = {p: {} for p in pairs}
    for p, j in gvar.items():
        rows[p][j] = rate[p]
    for (k, p), j in yvar.items():
        m, n = p
        rows[p][j] = rows[p].get(j, 0.0) + q_swap[k]
        for used in (pair_key(m, k), pair_key(k, n)):
            rows[used][j] = rows[used].get(j, 0.0) - 1.0
    for c in commodities:
        if c.pair in rows:
            rows[c.pair][zvar[c.id]] = -1.0
    for p in sorted(pairs, key=str):
        model.add_constraint(rows[p], "==", 0.0, name=("bal", p))

    lam = None
    if objective.mode == "max_min_fairness":
        positive = [c for c in commodities if demand[c.id] > 0]
        lam = model.add_var("lambda", 0.0, 1.0 if positive else 0.0, obj=1.0)
        for c in positive:
            model.add_constraint({zvar[c.id]: 1.0, lam: -demand[c.id]}, ">=", 0.0, name=("fair", c.id))

    model.edt = dict(g=gvar, y=yvar, zeta=zvar, pairs=pairs, rate=rate, q_swap=q_swap,
                     lam=lam, objective=objective,
                     commodity_pairs={c.id: c.pair for c in commodities})
    return model


def extract_plan(solution: lpsolve.LpSolution, model: lpsolve.LpModel, tol: float = 1e-6) -> EdtPlan:
    if not solution.optimal:
        raise lpsolve.LpSolveError(f"EDT program is {solution.status}")
    meta = model.edt
    x = solution.x
    g = {p: float(x[j]) for p, j in meta["g"].items()}
    swaps = {s: float(x[j]) for s, j in meta["y"].items() if x[j] > 1e-12}
    zeta = {c: float(x[j]) for c, j in meta["zeta"].items()}
    inputs = {p: 0.0 for p in meta["pairs"]}
    outputs = {p: 0.0 for p in meta["pairs"]}
    for p, v in g.items():
        inputs[p] += meta["rate"][p] * v
    for (k, p), v in swaps.items():
        inputs[p] += meta["q_swap"][k] * v
        m, n = p
        outputs[pair_key(m, k)] += v
        outputs[pair_key(k, n)] += v
    delivered = {p: 0.0 for p in meta["pairs"]}
    for c, p in meta["commodity_pairs"].items():
        if p in delivered:
            delivered[p] += zeta[c]
    for p in meta["pairs"]:
        resid = inputs[p] - outputs[p] - delivered[p]
        if abs(resid) > tol:
            raise lpsolve.LpSolveError(f"pair {p}: conservation residual {resid:.3g}")
    lam = float(x[meta["lam"]]) if meta["lam"] is not None else None
    return EdtPlan(g, swaps, zeta, inputs, outputs, dict(meta["commodity_pairs"]), lam)


def solve_edt(graph: AugmentedGraph, commodities, objective: EdtObjective | str = "max_total",
              repeaters=None, nodes=None, backend="auto", dense=False) -> EdtPlan:
    """Build, solve and extract.  Max-min fairness is solved lexicographically:
    best worst-case ratio first, then the largest total at that ratio."""
    if isinstance(objective, str):
        objective = EdtObjective(objective)
    model = build_edt(graph, commodities, objective, repeaters, nodes, dense)
    sol = lpsolve.solve(model, backend)
    if objective.mode == "max_min_fairness" and sol.optimal and model.edt["lam"] is not None:
        lam_j = model.edt["lam"]
        best = float(sol.x[lam_j])
        model.lb[lam_j] = max(0.0, best - 1e-9)
        for j in model.edt["zeta"].values():
            model.obj[j] = 1.0
        model.obj[lam_j] = 0.0
        sol = lpsolve.solve(model, backend)
    return extract_plan(sol, model)


@dataclass
class BoundReport:
    insufficient_data: bool
    slots: int
    per_commodity: dict = field(default_factory=dict)  # id -> (realized, zeta, halfwidth, ok)
    total: tuple | None = None

    @property
    def ok(self) -> bool:
        if self.insufficient_data:
            return False
        return all(v[3] for v in self.per_commodity.values()) and (self.total is None or self.total[3])


def batch_means_ci(series, confidence=0.99, batches=20) -> tuple[float, float]:
    """Mean and Student-t half-width from non-overlapping batch means."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n == 0:
        return float("nan"), float("inf")
    b = min(batches, n)
    if b < 2:
        return float(x.mean()), float("inf")
    size = n // b
    means = x[: size * b].reshape(b, size).mean(axis=1)
    hw = stats.t.ppf(0.5 + confidence / 2, b - 1) * means.std(ddof=1) / math.sqrt(b)
    return float(x.mean()), float(hw)


def verify_upper_bound(plan: EdtPlan, realized: dict, confidence: float = 0.99) -> BoundReport:
    """``realized`` maps commodity id to its per-slot delivered series.

    A commodity fails when its mean exceeds ``zeta`` by more than the CI
    half-width; the total over all commodities is checked the same way.
    """
    lengths = {len(v) for v in realized.values()}
    n = min(lengths) if lengths else 0
    if n == 0:
        return BoundReport(True, 0)
    rep = BoundReport(False, n)
    for cid, series in realized.items():
        mean, hw = batch_means_ci(series[:n], confidence)
        z = plan.zeta.get(cid, 0.0)
        rep.per_commodity[cid] = (mean, z, hw, mean <= z + hw + 1e-12)
    total_series = np.sum([np.asarray(s[:n], dtype=float) for s in realized.values()], axis=0)
    mean, hw = batch_means_ci(total_series, confidence)
    rep.total = (mean, plan.total, hw, mean <= plan.total + hw + 1e-12)
    return rep
