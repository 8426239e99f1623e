"""Lightpath provisioning over the satellite ISL graph.

The relaxation maximizes duration-weighted received flow per commodity epoch
under lens-set capacities; fractional flows are stripped into candidate
lightpaths and rounded either randomly or by threshold, then pruned back to
capacity.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from . import lpsolve
from .netmodel import Gsl, Lightpath

log = logging.getLogger(__name__)

# tiny penalty on injected flow; removes objective-neutral dissipating loops
INJECTION_PENALTY = 1e-6


@dataclass(frozen=True)
class EpochDemand:
    """One (commodity, epoch) block of the relaxation."""
    commodity: Hashable
    epoch: int
    start_s: float
    end_s: float
    source_station: Hashable
    dest_station: Hashable
    source_sats: frozenset
    dest_sats: frozenset
    weight: float  # epoch length in slots

    def active_at(self, t) -> bool:
        return self.start_s <= t < self.end_s


@dataclass
class LppInstance:
    satellites: dict  # id -> Satellite
    isls: list  # [(u, v)] or Isl objects
    blocks: list  # EpochDemand
    alpha: float = 10.0
    gsl_up: float = 0.2
    gsl_down: float = 0.5
    path_slack: int | None = None  # None keeps the whole ISL graph per block
    charge_gsl: bool = False
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        self.isls = [(e.u, e.v) if hasattr(e, "u") else (min(e), max(e)) for e in self.isls]
        self._adj: dict = {}
        for u, v in self.isls:
            self._adj.setdefault(u, set()).add(v)
            self._adj.setdefault(v, set()).add(u)

    @classmethod
    def from_epochs(cls, satellites, isls, epochs, commodities, slot_s=10.0, **kw) -> "LppInstance":
        blocks = []
        for c in commodities:
            if c.id not in epochs.starts:
                continue
            for m, a, b, src, dst in epochs.epochs(c.id):
                blocks.append(EpochDemand(c.id, m, a, b, c.source, c.dest, src, dst, (b - a) / slot_s))
        sats = satellites if isinstance(satellites, dict) else {s.id: s for s in satellites}
        return cls(sats, list(isls), blocks, **kw)

    def neighbors(self, v) -> set:
        return self._adj.get(v, set())

    def check_instants(self) -> list:
        return sorted({b.start_s for b in self.blocks})

    def _bfs(self, roots) -> dict:
        dist = {r: 0 for r in roots}
        q = deque(sorted(roots))
        while q:
            u = q.popleft()
            for w in sorted(self.neighbors(u)):
                if w not in dist:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return dist

    def block_edges(self, src, dst) -> list:
        """ISLs considered for one block (all of them, or those on near-shortest routes)."""
        if self.path_slack is None:
            return list(self.isls)
        ds, dd = self._bfs(src), self._bfs(dst)
        reach = [dd[s] for s in src if s in dd]
        if not reach:
            return []
        limit = min(reach) + self.path_slack
        inf = float("inf")
        out = []
        for u, v in self.isls:
            a = ds.get(u, inf) + 1 + dd.get(v, inf)
            b = ds.get(v, inf) + 1 + dd.get(u, inf)
            if min(a, b) <= limit:
                out.append((u, v))
        return out


@dataclass
class CandidateLightpath:
    commodity: Hashable
    epoch: int
    satellites: tuple
    x_hat: float
    received: float  # expected ebit flow per slot at the receiver
    injected: float
    weight: float = 1.0
    start_s: float = 0.0
    end_s: float = float("inf")
    source_station: Hashable = None
    dest_station: Hashable = None

    def active_at(self, t) -> bool:
        return self.start_s <= t < self.end_s


@dataclass
class LppSolution:
    selected: list  # CandidateLightpath
    sol_lp: float
    sol_alg: float
    candidates: list = field(default_factory=list)
    removed: list = field(default_factory=list)

    def lightpaths(self, instance: LppInstance) -> list[Lightpath]:
        out = []
        for c in self.selected:
            sats = tuple(instance.satellites[v] for v in c.satellites)
            out.append(Lightpath(
                c.source_station, c.dest_station,
                Gsl(c.source_station, c.satellites[0], instance.gsl_up), sats,
                Gsl(c.dest_station, c.satellites[-1], instance.gsl_down),
                instance.alpha, start_s=c.start_s, end_s=c.end_s, commodity=c.commodity, epoch=c.epoch))
        return out


def build_relaxation(instance: LppInstance) -> lpsolve.LpModel:
    """LP relaxation of the provisioning program; variable names are tuples
    ``("x", k, u, v)``, ``("f", k, u, v)``, ``("src", k, s)``, ``("dst", k, d)``
    where ``k`` indexes ``instance.blocks``."""
    model = lpsolve.LpModel("lpp")
    model.blocks = {}
    instance.skipped = []
    alpha = instance.alpha
    lens_terms: dict = {}  # (v, t) -> {var: coef}
    instants = instance.check_instants()

    for k, blk in enumerate(instance.blocks):
        src = set(blk.source_sats) - set(blk.dest_sats)
        dst = set(blk.dest_sats) - set(blk.source_sats)
        src &= set(instance.satellites)
        dst &= set(instance.satellites)
        if not src or not dst:
            instance.skipped.append((blk.commodity, blk.epoch, "no candidate satellites"))
            continue
        edges = instance.block_edges(src, dst)
        if not edges:
            instance.skipped.append((blk.commodity, blk.epoch, "no ISL route"))
            continue
        nodes = sorted({u for e in edges for u in e})
        inflow = {v: {} for v in nodes}
        outflow = {v: {} for v in nodes}
        xs = []
        for u, v in edges:
            x = model.add_var(("x", k, u, v), 0.0, 1.0)
            fuv = model.add_var(("f", k, u, v))
            fvu = model.add_var(("f", k, v, u))
            model.add_constraint({fuv: 1.0, fvu: 1.0, x: -alpha}, "<=", 0.0, name=("cap", k, u, v))
            outflow[u][fuv] = 1.0
            inflow[v][fuv] = 1.0
            outflow[v][fvu] = 1.0
            inflow[u][fvu] = 1.0
            xs.append((x, u, v))
        sigma = {s: model.add_var(("src", k, s), obj=-INJECTION_PENALTY * blk.weight)
                 for s in sorted(src) if s in inflow}
        tau = {d: model.add_var(("dst", k, d), obj=blk.weight) for d in sorted(dst) if d in inflow}
        if not sigma or not tau:
            instance.skipped.append((blk.commodity, blk.epoch, "no ISL route"))
        for w in nodes:
            q = instance.satellites[w].lens_success
            row = {j: q for j in inflow[w]}
            for j, c in outflow[w].items():
                row[j] = row.get(j, 0.0) - c
            if w in sigma:
                row[sigma[w]] = 1.0
            if w in tau:
                row[tau[w]] = -1.0
            model.add_constraint(row, "==", 0.0, name=("bal", k, w))
        model.blocks[k] = (sigma, tau, [x for x, _, _ in xs])

        for t in instants:
            if not blk.active_at(t):
                continue
            for x, u, v in xs:
                for node in (u, v):
                    lens_terms.setdefault((node, t), {})[x] = 1.0
            if instance.charge_gsl:
                for node, var in list(sigma.items()) + list(tau.items()):
                    lens_terms.setdefault((node, t), {})[var] = 1.0 / alpha

    for (v, t), terms in sorted(lens_terms.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        model.add_constraint(terms, "<=", instance.satellites[v].lens_capacity, name=("lens", v, t))
    return model


def relaxation_value(model: lpsolve.LpModel, sol: lpsolve.LpSolution, instance: LppInstance) -> float:
    """Duration-weighted received flow (the relaxation objective without the penalty)."""
    return float(sum(instance.blocks[k].weight * sum(sol.x[j] for j in tau.values())
                     for k, (_, tau, _) in model.blocks.items()))


def block_eta(model, sol, k) -> float:
    _, tau, _ = model.blocks[k]
    return float(sum(sol.x[j] for j in tau.values()))


def decompose_flows(model: lpsolve.LpModel, sol: lpsolve.LpSolution, instance: LppInstance,
                    tol: float = 1e-10) -> list[CandidateLightpath]:
    """Strip the fractional flows of every block into source-to-destination paths."""
    if not sol.optimal:
        raise ValueError(f"cannot decompose a {sol.status} solution")
    x = sol.x
    names = model.var_names
    cands: list[CandidateLightpath] = []
    per_block: dict = {}
    for j, name in enumerate(names):
        if name[0] in ("f", "x"):
            per_block.setdefault(name[1], []).append(j)

    for k, (sigma, tau, _) in sorted(model.blocks.items()):
        blk = instance.blocks[k]
        flow: dict = {}
        xhat: dict = {}
        for j in per_block.get(k, []):
            kind, _, u, v = names[j]
            if kind == "f":
                flow[(u, v)] = max(float(x[j]), 0.0)
            else:
                xhat[(u, v)] = float(x[j])
        total = {}
        for (u, v), fl in flow.items():
            e = (min(u, v), max(u, v))
            total[e] = total.get(e, 0.0) + fl
        # the relaxation never needs more selection than the flow it carries
        xhat = {e: min(xv, total.get(e, 0.0) / instance.alpha) for e, xv in xhat.items()}
        res = dict(flow)
        src = {s: max(float(x[j]), 0.0) for s, j in sigma.items()}
        dst = {d: max(float(x[j]), 0.0) for d, j in tau.items()}
        out_arcs: dict = {}
        for (u, v) in flow:
            out_arcs.setdefault(u, []).append(v)
        for u in out_arcs:
            out_arcs[u].sort()
        q = {v: instance.satellites[v].lens_success for v in instance.satellites}

        scale = max([instance.alpha] + list(flow.values()))
        eps = tol * scale
        for s in sorted(src):
            while src[s] > eps:
                path = _find_path(s, res, dst, out_arcs, eps)
                if path is None:
                    if src[s] > 1e3 * eps:
                        log.debug("block %s: %.3g of injected flow at %s reaches no receiver; discarded",
                                  k, src[s], s)
                    src[s] = 0.0
                    break
                mults = [1.0]
                for node in path[1:-1]:
                    mults.append(mults[-1] * q[node])
                gain = mults[-1] * q[path[-1]]
                amount = src[s]
                for (a, b), m in zip(zip(path, path[1:]), mults):
                    amount = min(amount, res[(a, b)] / m)
                amount = min(amount, dst[path[-1]] / gain)
                if amount <= 0:
                    break
                src[s] -= amount
                share = 0.0
                for (a, b), m in zip(zip(path, path[1:]), mults):
                    res[(a, b)] -= amount * m
                    e = (min(a, b), max(a, b))
                    if total.get(e, 0.0) > 0:
                        share = max(share, xhat.get(e, 0.0) * amount * m / total[e])
                dst[path[-1]] -= amount * gain
                cands.append(CandidateLightpath(
                    blk.commodity, blk.epoch, tuple(path), min(share, 1.0), amount * gain, amount,
                    blk.weight, blk.start_s, blk.end_s, blk.source_station, blk.dest_station))
    return [c for c in cands if c.received > tol]


def _find_path(s, res, dst, out_arcs, eps):
    """Depth-first search along positive residual arcs, lowest id first."""
    stack = [(s, iter(out_arcs.get(s, ())))]
    on_path = {s}
    dead = set()
    while stack:
        node, it = stack[-1]
        advanced = False
        for w in it:
            if res.get((node, w), 0.0) <= eps or w in on_path or w in dead:
                continue
            if dst.get(w, 0.0) > eps:
                return [n for n, _ in stack] + [w]
            stack.append((w, iter(out_arcs.get(w, ()))))
            on_path.add(w)
            advanced = True
            break
        if not advanced:
            stack.pop()
            on_path.discard(node)
            dead.add(node)
    return None


def lens_load(paths, satellite, t) -> int:
    """Number of paths active at ``t`` whose ISLs touch ``satellite``."""
    return sum(1 for p in paths if p.active_at(t) and satellite in p.satellites)


def capacity_violations(paths, instance: LppInstance) -> list:
    """``(satellite, t, load, capacity)`` for every over-subscribed satellite."""
    out = []
    for t in instance.check_instants():
        active = [p for p in paths if p.active_at(t)]
        load: dict = {}
        for p in active:
            for v in set(p.satellites):
                load[v] = load.get(v, 0) + 1
        for v, n in sorted(load.items()):
            cap = instance.satellites[v].lens_capacity
            if n > cap:
                out.append((v, t, n, cap))
    return out


def _objective(paths) -> float:
    return float(sum(p.weight * p.received for p in paths))


def prune_to_capacity(selection, instance: LppInstance, sol_lp: float = float("nan"),
                      candidates=None) -> LppSolution:
    """Drop paths, lowest received flow first, until no satellite exceeds its lens sets."""
    keep = list(selection)
    removed = []
    for t in instance.check_instants():
        for v in sorted(instance.satellites):
            cap = instance.satellites[v].lens_capacity
            through = [p for p in keep if p.active_at(t) and v in p.satellites]
            excess = len(through) - cap
            if excess <= 0:
                continue
            # stable sort: among equal flows the later candidate goes first
            order = sorted(range(len(through)), key=lambda i: (through[i].received, -i))
            drop = {id(through[i]) for i in order[:excess]}
            removed.extend(p for p in keep if id(p) in drop)
            keep = [p for p in keep if id(p) not in drop]
    return LppSolution(keep, sol_lp, _objective(keep), list(candidates or []), removed)


def round_randomized(candidates, rng_seed, instance: LppInstance | None = None,
                     sol_lp: float = float("nan"), prune: bool = True) -> LppSolution:
    rng = np.random.default_rng(rng_seed)
    draws = rng.random(len(candidates))
    chosen = [c for c, u in zip(candidates, draws) if u < c.x_hat]
    if prune and instance is not None:
        return prune_to_capacity(chosen, instance, sol_lp, candidates)
    return LppSolution(chosen, sol_lp, _objective(chosen), list(candidates))


def round_deterministic(candidates, threshold: float = 0.5, instance: LppInstance | None = None,
                        sol_lp: float = float("nan"), prune: bool = True) -> LppSolution:
    delta = min(max(threshold, 1e-12), 1.0)
    chosen = [c for c in candidates if c.x_hat >= delta - 1e-12]
    if prune and instance is not None:
        return prune_to_capacity(chosen, instance, sol_lp, candidates)
    return LppSolution(chosen, sol_lp, _objective(chosen), list(candidates))


def solve_relaxation(instance: LppInstance, backend="auto"):
    model = build_relaxation(instance)
    sol = lpsolve.solve(model, backend)
    if not sol.optimal:
        raise lpsolve.LpSolveError(f"provisioning relaxation is {sol.status}")
    return model, sol, relaxation_value(model, sol, instance)


def provision(instance: LppInstance, rounding="deterministic", threshold=0.5, seed=0,
              backend="auto") -> LppSolution:
    """Relax, decompose and round in one call (``rounding`` is ``deterministic`` or ``randomized``)."""
    model, sol, sol_lp = solve_relaxation(instance, backend)
    cands = decompose_flows(model, sol, instance)
    if rounding == "deterministic":
        return round_deterministic(cands, threshold, instance, sol_lp)
    if rounding == "randomized":
        return round_randomized(cands, seed, instance, sol_lp)
    raise ValueError(f"unknown rounding {rounding!r}")


def export_lightpaths(paths, path, alpha, q_of=None) -> None:
    """CSV with one row per selected lightpath."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["commodity", "epoch", "start_s", "end_s", "sat_sequence", "q_path", "alpha"])
        for p in paths:
            q = q_of(p) if q_of else getattr(p, "success", "")
            w.writerow([p.commodity, p.epoch, p.start_s, p.end_s,
                        "-".join(str(v) for v in (getattr(p, "satellite_ids", None) or p.satellites)),
                        q, alpha])
