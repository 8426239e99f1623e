"""Cross-run aggregation and the statistical checks for the rounding guarantees."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import lpp


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    sd: float
    count: int
    ci_halfwidth: float  # 99% Student-t

    def as_dict(self) -> dict:
        return asdict(self)


def aggregate(series, confidence: float = 0.99) -> SummaryStats:
    x = np.sort(np.asarray(list(series), dtype=float))  # sorted: order-free summation
    if x.size == 0:
        raise ValueError("cannot aggregate an empty series")
    mean = float(np.mean(x))
    if x.size == 1:
        return SummaryStats(mean, 0.0, 1, 0.0)
    sd = float(np.std(x, ddof=1))
    hw = float(stats.t.ppf(0.5 + confidence / 2, x.size - 1) * sd / math.sqrt(x.size))
    return SummaryStats(mean, sd, int(x.size), hw)


@dataclass(frozen=True)
class ExpectationCheck:
    mean: float
    expected: float
    stderr: float
    trials: int

    @property
    def ok(self) -> bool:
        return abs(self.mean - self.expected) <= 3 * self.stderr + 1e-12


def _candidate_value(c: lpp.CandidateLightpath) -> float:
    return c.weight * c.received


def rounding_expectation(candidates, trials: int = 200, first_seed: int = 0) -> ExpectationCheck:
    """Mean pre-pruning objective of randomized rounding against sum of x_hat * value."""
    expected = sum(c.x_hat * _candidate_value(c) for c in candidates)
    vals = []
    for seed in range(first_seed, first_seed + trials):
        sel = lpp.round_randomized(candidates, seed, prune=False).selected
        vals.append(sum(_candidate_value(c) for c in sel))
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return ExpectationCheck(float(vals.mean()), float(expected), se, trials)


@dataclass(frozen=True)
class ViolationCheck:
    frequency: float
    allowed: float
    factor: float
    trials: int

    @property
    def ok(self) -> bool:
        return self.frequency <= self.allowed


def capacity_violation_frequency(candidates, instance: lpp.LppInstance, trials: int = 10_000,
                                 varsigma: float = 1.0, first_seed: int = 0) -> ViolationCheck:
    """How often randomized rounding (before pruning) overloads some lens set by
    more than ``1 + varsigma * sqrt(2 log(|sats| * |commodities|))``."""
    n_sats = max(1, len(instance.satellites))
    n_comm = max(1, len({b.commodity for b in instance.blocks}))
    factor = 1 + varsigma * math.sqrt(2 * math.log(max(n_sats * n_comm, 2)))
    bad = 0
    for seed in range(first_seed, first_seed + trials):
        sel = lpp.round_randomized(candidates, seed, prune=False).selected
        for t in instance.check_instants():
            loads: dict = {}
            for c in sel:
                if c.active_at(t):
                    for v in set(c.satellites):
                        loads[v] = loads.get(v, 0) + 1
            if any(n > factor * instance.satellites[v].lens_capacity for v, n in loads.items()):
                bad += 1
                break
    return ViolationCheck(bad / trials, 5.0 / n_sats ** 2, factor, trials)
