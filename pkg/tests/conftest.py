import functools

import numpy as np
import pytest

from satqnet import lpp
from satqnet.netmodel import Commodity, FiberLink, GroundStation, Satellite, ground_graph


def make_chain(rates, swap, caps=None):
    """Stations s0..sL joined by fibers; ``rates[i]`` = q*c of link i, ``swap[i]`` = q at s_i."""
    L = len(rates)
    caps = caps or [10] * L
    stations = [GroundStation(f"s{i}", 0.0, float(i), swap_success=float(swap[i])) for i in range(L + 1)]
    fibers = [FiberLink(f"s{i}", f"s{i+1}", int(caps[i]), float(rates[i]) / caps[i]) for i in range(L)]
    return stations, fibers


def chain_graph(rates, swap, caps=None):
    stations, fibers = make_chain(rates, swap, caps)
    return ground_graph(stations, fibers), Commodity("c", "s0", f"s{len(rates)}")


def trees(i, j):
    """All binary swap trees over chain nodes i..j (leaf = elementary link index)."""
    if j == i + 1:
        yield i
        return
    for k in range(i + 1, j):
        for a in trees(i, k):
            for b in trees(k, j):
                yield (k, a, b)


def tree_demand(tree, q):
    """Elementary ebits per link needed to deliver one end-to-end ebit through ``tree``."""
    if isinstance(tree, int):
        return {tree: 1.0}
    k, a, b = tree
    out = {}
    for sub in (a, b):
        for e, v in tree_demand(sub, q).items():
            out[e] = out.get(e, 0.0) + v / q[k]
    return out


def chain_tree_oracle(rates, swap) -> float:
    """Best mixture of swap trees: an LP over tree usage, independent of the pair-balance model."""
    from scipy.optimize import linprog

    L = len(rates)
    cols = [tree_demand(t, swap) for t in trees(0, L)]
    A = np.array([[c.get(e, 0.0) for c in cols] for e in range(L)])
    res = linprog(-np.ones(len(cols)), A_ub=A, b_ub=np.asarray(rates, float),
                  bounds=[(0, None)] * len(cols), method="highs")
    assert res.status == 0
    return -res.fun


def sats(spec):
    """``{id: (lens_capacity, lens_success)}`` -> satellite dict."""
    return {v: Satellite(v, 0, i, cap, q) for i, (v, (cap, q)) in enumerate(sorted(spec.items()))}


def block(src, dst, commodity="c", epoch=0, start=0.0, end=10.0, weight=1.0):
    return lpp.EpochDemand(commodity, epoch, start, end, "A", "B", frozenset(src), frozenset(dst), weight)


def single_isl_instance(q=0.95, cap=4, alpha=10.0):
    return lpp.LppInstance(sats({1: (cap, q), 2: (cap, q)}), [(1, 2)], [block({1}, {2})], alpha=alpha)


def two_path_instance(cap=2, q=0.9, alpha=10.0):
    # s -> d directly and s -> m -> d
    return lpp.LppInstance(sats({1: (cap, q), 2: (cap, q), 3: (cap, q)}), [(1, 3), (1, 2), (2, 3)],
                           [block({1}, {3})], alpha=alpha)


def random_lpp_instance(rng, n_sats=None, n_blocks=None):
    """Small random grid-like ISL graph with overlapping commodity epochs."""
    n = n_sats or int(rng.integers(5, 11))
    spec = {v: (int(rng.integers(1, 4)), float(rng.uniform(0.85, 0.99))) for v in range(n)}
    edges = {(v, v + 1) for v in range(n - 1)}
    for _ in range(int(rng.integers(1, n))):
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        edges.add((a, b))
    blocks = []
    for k in range(n_blocks or int(rng.integers(1, 5))):
        src = set(rng.choice(n, int(rng.integers(1, 3)), replace=False).tolist())
        dst = set(rng.choice(n, int(rng.integers(1, 3)), replace=False).tolist())
        a = float(rng.integers(0, 3)) * 10
        b = a + float(rng.integers(1, 4)) * 10
        blocks.append(lpp.EpochDemand(f"c{k % 3}", k, a, b, "A", "B", frozenset(src), frozenset(dst),
                                      (b - a) / 10))
    return lpp.LppInstance(sats(spec), sorted(edges), blocks, alpha=10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@functools.lru_cache(maxsize=None)
def chain_run(slots=10_000, seed=7):
    """The 3-station chain (q1c1=9, q2c2=8, q_k=0.9) executed for ``slots`` slots."""
    from satqnet import protosim

    stations, fibers = make_chain([9.0, 8.0], [1.0, 0.9, 1.0])
    commodity = Commodity("c", "s0", "s2", {0: 7.0})
    return protosim.run_horizon(stations, fibers, [], [commodity], slots, seed, demand_period_s=1e12), commodity


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
