import numpy as np
import pytest

from satqnet import lpsolve

BACKENDS = ["simplex", "highs"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_box_example(backend):
    m = lpsolve.LpModel()
    x = m.add_var("x", obj=1.0)
    y = m.add_var("y", obj=1.0)
    m.add_constraint({x: 1}, "<=", 1)
    m.add_constraint({"y": 1}, "<=", 2)
    s = lpsolve.solve(m, backend)
    assert s.optimal and s.objective == pytest.approx(3.0)
    assert s.value("x") == pytest.approx(1.0) and s.value(y) == pytest.approx(2.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    m = lpsolve.LpModel()
    x = m.add_var("x", obj=1.0)
    m.add_constraint({x: 1}, "<=", -1)
    assert lpsolve.solve(m, backend).status == "infeasible"


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded(backend):
    m = lpsolve.LpModel()
    m.add_var("x", obj=1.0)
    assert lpsolve.solve(m, backend).status == "unbounded"


def test_model_errors():
    m = lpsolve.LpModel()
    m.add_var("x")
    with pytest.raises(lpsolve.LpModelError):
        m.add_var("x")
    with pytest.raises(lpsolve.LpModelError):
        m.add_constraint({"nope": 1.0}, "<=", 1)
    with pytest.raises(lpsolve.LpModelError):
        m.add_constraint({"x": 1.0}, "<>", 1)
    m.add_var("y", lb=2.0, ub=1.0)
    with pytest.raises(lpsolve.LpModelError):
        lpsolve.solve(m)
    with pytest.raises(lpsolve.LpModelError):
        lpsolve.solve(lpsolve.LpModel(), "cplex")


def _random_model(rng, scaled=False):
    m = lpsolve.LpModel()
    n, k = int(rng.integers(2, 12)), int(rng.integers(1, 10))
    scale = 10.0 ** rng.uniform(-5, 2, size=n) if scaled else np.ones(n)
    for j in range(n):
        m.add_var(j, float(rng.choice([0.0, -1.0])), float(rng.choice([1.0, 5.0, np.inf])), float(rng.normal()))
    for _ in range(k):
        coefs = {j: float(rng.normal() * scale[j]) for j in range(n) if rng.random() < 0.6}
        m.add_constraint(coefs, str(rng.choice(["<=", "==", ">="], p=[0.6, 0.2, 0.2])),
                         float(rng.uniform(0, 5)) if rng.random() < 0.8 else 0.0)
    return m


@pytest.mark.parametrize("scaled", [False, True])
def test_simplex_agrees_with_highs(scaled):
    rng = np.random.default_rng(2024 + scaled)
    checked = 0
    for _ in range(300):
        m = _random_model(rng, scaled)
        try:
            ref = lpsolve.solve(m, "highs")
        except lpsolve.LpSolveError:
            continue  # reference could not certify its own answer
        got = lpsolve.solve(m, "simplex")
        assert got.status == ref.status
        if ref.optimal:
            assert got.objective == pytest.approx(ref.objective, rel=1e-6, abs=1e-6)
            checked += 1
    assert checked > 50


def test_dual_certificate_bounds_objective():
    rng = np.random.default_rng(7)
    for _ in range(100):
        m = _random_model(rng)
        s = lpsolve.solve(m, "simplex")
        if not s.optimal:
            continue
        # weak duality: the solver's multipliers certify its own optimum
        assert lpsolve.dual_bound(m, s.duals) == pytest.approx(s.objective, rel=1e-6, abs=1e-6)
        # any sign-feasible perturbation only loosens the bound
        assert lpsolve.dual_bound(m, np.zeros(m.num_rows)) >= s.objective - 1e-9


def test_auto_uses_certified_answer():
    m = _random_model(np.random.default_rng(3))
    s = lpsolve.solve(m, "auto")
    assert s.backend in ("simplex", "highs")
    if s.optimal:
        rows, bounds = lpsolve.max_violation(m, s.x)
        assert rows <= 1e-7 and bounds <= 1e-9


def test_lp_text_dump(tmp_path):
    m = lpsolve.LpModel("demo")
    x = m.add_var(("x", 1), 0, 1, 2.0)
    m.add_var("y", 0, lpsolve.INF, -1.0)
    m.add_constraint({x: 1.0, "y": 3.0}, ">=", 1.5)
    text = m.to_lp_text()
    assert text.startswith("\\ demo\nMaximize")
    assert "Subject To" in text and ">= 1.5" in text and "+inf" in text and text.endswith("End\n")
    m.dump(tmp_path / "m.lp")
    assert (tmp_path / "m.lp").read_text() == text


def test_tiny_coefficients_regression():
    # a near-dead generation edge (rate 1e-11) next to O(1) rates
    m = lpsolve.LpModel()
    g1, g2, z = m.add_var("g1", 0, 1), m.add_var("g2", 0, 1), m.add_var("z", obj=1.0)
    y = m.add_var("y")
    m.add_constraint({g1: 1.6e-11, y: -1.0}, "==", 0.0)
    m.add_constraint({g2: 2.2, y: 0.9, z: -1.0}, "==", 0.0)
    s = lpsolve.solve(m, "simplex")
    assert s.objective == pytest.approx(2.2, abs=1e-9)
