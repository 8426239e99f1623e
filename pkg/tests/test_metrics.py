import itertools

import numpy as np
import pytest

from satqnet import metrics, protosim
from satqnet.netmodel import Commodity
from tests.conftest import make_chain


def test_constant_series():
    s = metrics.aggregate([7.2, 7.2, 7.2])
    assert (s.mean, s.sd, s.ci_halfwidth, s.count) == (pytest.approx(7.2), pytest.approx(0.0, abs=1e-12),
                                                       pytest.approx(0.0, abs=1e-12), 3)


def test_two_points():
    s = metrics.aggregate([4, 8])
    assert s.mean == 6 and s.sd == pytest.approx(2.8284271247, rel=1e-9)
    # t(0.995, 1) = 63.657
    assert s.ci_halfwidth == pytest.approx(63.656741 * 2.8284271247 / np.sqrt(2), rel=1e-6)


def test_single_and_empty():
    assert metrics.aggregate([3.0]).as_dict() == {"mean": 3.0, "sd": 0.0, "count": 1, "ci_halfwidth": 0.0}
    with pytest.raises(ValueError):
        metrics.aggregate([])


def test_permutation_invariance():
    xs = [0.1, 1e16, -1e16, 3.3, 2.2]
    ref = metrics.aggregate(xs)
    for p in itertools.permutations(xs):
        assert metrics.aggregate(p) == ref


def test_chain_ci_across_seeds():
    stations, fibers = make_chain([9.0, 8.0], [1.0, 0.9, 1.0])
    c = Commodity("c", "s0", "s2")
    rates = [protosim.average_throughput(protosim.run_horizon(stations, fibers, [], [c], 10_000, seed=s).traces, [c])
             for s in range(20)]
    s = metrics.aggregate(rates)
    assert abs(s.mean - 7.2) <= s.ci_halfwidth


def test_violation_check_threshold():
    ok = metrics.ViolationCheck(0.0, 0.05, 2.0, 100)
    bad = metrics.ViolationCheck(0.06, 0.05, 2.0, 100)
    assert ok.ok and not bad.ok
    assert metrics.ExpectationCheck(1.0, 1.05, 0.02, 10).ok
    assert not metrics.ExpectationCheck(1.0, 1.1, 0.02, 10).ok
