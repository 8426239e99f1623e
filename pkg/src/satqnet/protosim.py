"""Slotted Monte-Carlo execution of an entanglement-distribution plan.

Phase 1 attempts elementary-ebit generation on every fiber and lightpath,
Phase 2 performs swaps and deliveries.  Generation and swap attempts follow the
plan's rates through fractional carry accumulators, so long-run attempt
rates match the plan exactly; swap attempts that find no input ebits stay
owed in the carry and run in a later slot.  Ebits left on a commodity pair
once the slot's swaps are done are delivered.
"""
from __future__ import annotations

import logging
import math
import zlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import edt as edt_mod
from .netmodel import AugmentedGraph, ground_graph, pair_key

log = logging.getLogger(__name__)


def _key(obj) -> int:
    return zlib.crc32(repr(obj).encode())


class Substreams:
    """Counter-based random substreams: one independent generator per key tuple."""

    def __init__(self, root_seed: int):
        self.root_seed = int(root_seed)

    def get(self, *keys) -> np.random.Generator:
        ss = np.random.SeedSequence(self.root_seed, spawn_key=tuple(_key(k) for k in keys))
        return np.random.Generator(np.random.Philox(ss))


class EbitInventory:
    """Stored ebits per unordered pair, oldest first, with optional expiry."""

    def __init__(self, max_age: float = math.inf):
        self.max_age = max_age
        self._store: dict = {}

    def count(self, pair) -> int:
        return sum(n for _, n in self._store.get(pair, ()))

    def counts(self) -> dict:
        return {p: self.count(p) for p in self._store if self.count(p)}

    def add(self, pair, n: int, slot: int) -> None:
        if n < 0:
            raise ValueError("cannot add a negative number of ebits")
        if n:
            q = self._store.setdefault(pair, deque())
            if q and q[-1][0] == slot:
                q[-1][1] += n
            else:
                q.append([slot, n])

    def take(self, pair, n: int) -> None:
        q = self._store.get(pair)
        if n > self.count(pair):
            raise ValueError(f"inventory for {pair} would go negative")
        while n:
            head = q[0]
            used = min(head[1], n)
            head[1] -= used
            n -= used
            if head[1] == 0:
                q.popleft()

    def expire(self, slot: int) -> dict:
        out = {}
        if math.isinf(self.max_age):
            return out
        for p, q in self._store.items():
            while q and slot - q[0][0] > self.max_age:
                out[p] = out.get(p, 0) + q.popleft()[1]
        return out


@dataclass
class SlotTrace:
    slot: int
    delivered: dict  # commodity id -> ebits
    generated: dict = field(default_factory=dict)
    produced: dict = field(default_factory=dict)
    consumed: dict = field(default_factory=dict)
    expired: dict = field(default_factory=dict)
    seed: tuple = ()


@dataclass
class ProtocolState:
    """Carry accumulators tied to one (graph, plan); reset when the plan changes."""
    gen_carry: dict = field(default_factory=dict)
    swap_carry: dict = field(default_factory=dict)
    share_carry: dict = field(default_factory=dict)

    def reset(self):
        self.gen_carry.clear()
        self.swap_carry.clear()
        self.share_carry.clear()


def _bump(d, k, n):
    if n:
        d[k] = d.get(k, 0) + n


def _swap_order(plan) -> list:
    """Swaps fed by directly generated pairs run before swaps fed by swaps."""
    level: dict = {}
    swaps = [s for s, y in plan.swaps.items() if y > 0]

    def lvl(pair, seen=()):
        if pair in level:
            return level[pair]
        producers = [s for s in swaps if s[1] == pair and pair not in seen]
        if not producers:
            level[pair] = 0
            return 0
        best = 0
        for k, (m, n) in producers:
            best = max(best, 1 + max(lvl(pair_key(m, k), seen + (pair,)), lvl(pair_key(k, n), seen + (pair,))))
        level[pair] = best
        return best

    def swap_level(s):
        k, (m, n) = s
        return max(lvl(pair_key(m, k)), lvl(pair_key(k, n)))

    return sorted(swaps, key=lambda s: (swap_level(s), str(s)))


def _delivery_groups(plan) -> dict:
    groups: dict = {}
    for cid in sorted(plan.zeta, key=str):
        if plan.zeta[cid] > 1e-12:
            groups.setdefault(plan.commodity_pairs[cid], []).append(cid)
    return groups


def _apportion(total: int, weights, carry: dict | None = None) -> dict:
    """Largest-remainder split of an integer total by positive weights.  With
    ``carry``, fractional entitlements roll over between calls so repeated
    small splits converge to the weights."""
    w = sum(v for _, v in weights)
    carry = {} if carry is None else carry
    exact = [(c, total * v / w + carry.get(c, 0.0)) for c, v in weights]
    out = {c: int(math.floor(x)) for c, x in exact}
    left = total - sum(out.values())
    for c, x in sorted(exact, key=lambda cx: (-(cx[1] - math.floor(cx[1])), str(cx[0])))[:left]:
        out[c] += 1
    for c, x in exact:
        carry[c] = x - out[c]
    return out


def run_slot(graph: AugmentedGraph, plan, inventory: EbitInventory, streams: Substreams,
             slot: int, state: ProtocolState | None = None, order=None, max_passes: int = 32) -> SlotTrace:
    state = state if state is not None else ProtocolState()
    trace = SlotTrace(slot, {c: 0 for c in plan.zeta}, seed=(streams.root_seed, slot))
    trace.expired = inventory.expire(slot)

    # Phase 1: elementary generation
    by_pair = graph.edges_by_pair()
    for pair in sorted(plan.g, key=str):
        g = plan.g[pair]
        if g <= 0 or pair not in by_pair:
            continue
        rng = None
        edges = sorted(by_pair[pair], key=lambda e: (e.kind != "fiber", str(e.key)))
        for e in edges:
            carry = state.gen_carry.get(e.key, 0.0) + e.capacity * g
            attempts = min(int(math.floor(carry + 1e-9)), int(math.ceil(e.capacity)))
            state.gen_carry[e.key] = carry - attempts
            if attempts <= 0:
                continue
            if rng is None:
                rng = streams.get(slot, "gen", pair)
            ok = int(rng.binomial(attempts, e.success))
            inventory.add(pair, ok, slot)
            _bump(trace.generated, pair, ok)

    # Phase 2: swapping, then delivery
    q_swap = graph.swap_success()
    order = order if order is not None else _swap_order(plan)
    for s in order:
        state.swap_carry[s] = state.swap_carry.get(s, 0.0) + plan.swaps[s]
    rng = streams.get(slot, "swap") if order else None
    for _ in range(max_passes):
        progress = False
        for s in order:
            k, pair = s
            m, n = pair
            left, right = pair_key(m, k), pair_key(k, n)
            attempts = min(int(math.floor(state.swap_carry[s] + 1e-9)),
                           inventory.count(left), inventory.count(right))
            if attempts <= 0:
                continue
            progress = True
            inventory.take(left, attempts)
            inventory.take(right, attempts)
            _bump(trace.consumed, left, attempts)
            _bump(trace.consumed, right, attempts)
            state.swap_carry[s] -= attempts
            ok = int(rng.binomial(attempts, q_swap[k]))
            inventory.add(pair, ok, slot)
            _bump(trace.produced, pair, ok)
        if not progress:
            break

    # whatever is left on a commodity pair after this slot's swaps is delivered,
    # split across that pair's commodities in proportion to their planned rates
    for pair, cids in _delivery_groups(plan).items():
        avail = inventory.count(pair)
        if avail <= 0:
            continue
        inventory.take(pair, avail)
        for cid, n in _apportion(avail, [(c, plan.zeta[c]) for c in cids], state.share_carry).items():
            trace.delivered[cid] += n
    return trace


@dataclass
class HorizonResult:
    traces: list
    plans: list  # (slot, EdtPlan)
    commodities: list
    slot_s: float
    window_slots: int
    inventory: EbitInventory | None = None

    def delivered_series(self, cid) -> np.ndarray:
        return np.array([t.delivered.get(cid, 0) for t in self.traces], dtype=float)

    def plan_at(self, slot):
        cur = None
        for s, p in self.plans:
            if s <= slot:
                cur = p
        return cur


def run_horizon(stations, fibers, lightpaths, commodities, horizon_slots: int, seed: int,
                slot_s: float = 10.0, demand_period_s: float = 3600.0, objective="max_total",
                repeaters=None, nodes=None, backend="auto", max_age=math.inf,
                extra_change_times=()) -> HorizonResult:
    """Execute the plan-and-run loop: re-plan whenever the active lightpath set
    or the demand window changes, run every slot in between."""
    commodities = list(commodities)
    lightpaths = list(lightpaths)
    window_slots = max(1, int(round(demand_period_s / slot_s)))
    result = HorizonResult([], [], commodities, slot_s, window_slots)
    if horizon_slots <= 0:
        return result
    change_slots = {0}
    for lp in lightpaths:
        for t in (lp.start_s, lp.end_s):
            if math.isfinite(t):
                change_slots.add(int(math.ceil(t / slot_s - 1e-9)))
    change_slots.update(range(0, horizon_slots, window_slots))
    change_slots.update(int(math.ceil(t / slot_s - 1e-9)) for t in extra_change_times)
    change_slots = sorted(s for s in change_slots if 0 <= s < horizon_slots)

    streams = Substreams(seed)
    inventory = EbitInventory(max_age)
    state = ProtocolState()
    plan, order, graph = None, None, None
    pending = deque(change_slots)
    for slot in range(horizon_slots):
        if pending and pending[0] == slot:
            pending.popleft()
            t = slot * slot_s
            active = [lp for lp in lightpaths if lp.active_at(t)]
            graph = ground_graph(stations, fibers, active)
            obj = edt_mod.EdtObjective(objective if isinstance(objective, str) else objective.mode,
                                       window=slot // window_slots)
            plan = edt_mod.solve_edt(graph, commodities, obj, repeaters, nodes, backend)
            # the zero plan is always feasible, so anything else is a solver fault
            assert plan.status == "optimal"
            order = _swap_order(plan)
            state.reset()
            result.plans.append((slot, plan))
        result.traces.append(run_slot(graph, plan, inventory, streams, slot, state, order))
    result.inventory = inventory
    return result


def average_throughput(traces, commodities) -> float:
    """Mean over commodities of delivered ebits per slot."""
    traces = list(traces)
    if not traces:
        raise ValueError("no slots to average over")
    commodities = list(commodities)
    if not commodities:
        return 0.0
    ids = [getattr(c, "id", c) for c in commodities]
    return float(np.mean([sum(t.delivered.get(i, 0) for t in traces) / len(traces) for i in ids]))


def satisfaction_ratio(traces, commodities, demands, window_slots: int | None = None) -> float:
    """Average over windows of the fraction of commodities whose realized
    rate meets their demand.  ``demands(cid, window)`` or a ``{cid: z}`` dict
    gives per-slot demand; zero demand always counts as satisfied."""
    traces = list(traces)
    if not traces:
        raise ValueError("no slots to measure")
    commodities = list(commodities)
    if not commodities:
        return 1.0
    window_slots = window_slots or len(traces)
    lookup = demands if callable(demands) else (lambda cid, w: demands.get(cid, 0.0))
    ratios = []
    for w, start in enumerate(range(0, len(traces), window_slots)):
        chunk = traces[start:start + window_slots]
        hit = 0
        for c in commodities:
            cid = getattr(c, "id", c)
            z = lookup(cid, w)
            rate = sum(t.delivered.get(cid, 0) for t in chunk) / len(chunk)
            if z <= 0 or rate >= z:
                hit += 1
        ratios.append(hit / len(commodities))
    return float(np.mean(ratios))


def conservation_residuals(traces, inventory: EbitInventory, commodity_pairs: dict) -> dict:
    """Per pair: generated + produced - delivered - consumed - expired - stored (should be 0)."""
    bal: dict = {}
    for t in traces:
        for p, n in t.generated.items():
            bal[p] = bal.get(p, 0) + n
        for p, n in t.produced.items():
            bal[p] = bal.get(p, 0) + n
        for p, n in t.consumed.items():
            bal[p] = bal.get(p, 0) - n
        for p, n in t.expired.items():
            bal[p] = bal.get(p, 0) - n
        for cid, n in t.delivered.items():
            p = commodity_pairs[cid]
            bal[p] = bal.get(p, 0) - n
    for p, n in inventory.counts().items():
        bal[p] = bal.get(p, 0) - n
    return {p: v for p, v in bal.items() if v}
