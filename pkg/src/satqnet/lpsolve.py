"""Small linear-programming layer shared by the planners.

``LpModel`` is a backend-neutral container (maximization, bounded variables,
``<=``/``==``/``>=`` rows).  ``solve`` dispatches to the built-in dense
revised simplex or, for large models, to HiGHS through scipy.  Every optimal
answer is checked against the original model before it is returned.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

INF = math.inf
LE, EQ, GE = "<=", "==", ">="
_SENSES = {LE: LE, "<": LE, "le": LE, EQ: EQ, "=": EQ, "eq": EQ, GE: GE, ">": GE, "ge": GE}

# above this many dense matrix entries the built-in simplex hands off to HiGHS
AUTO_DENSE_LIMIT = 400_000

CONSTRAINT_TOL = 1e-7
BOUND_TOL = 1e-9


class LpModelError(ValueError):
    """The model is malformed (bad bounds, unknown variables, ...)."""


class LpSolveError(RuntimeError):
    """The backend failed to produce a certified answer."""


@dataclass
class LpModel:
    name: str = "lp"
    var_names: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    obj: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (coef dict, sense, rhs, name)
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name, lb=0.0, ub=INF, obj=0.0) -> int:
        if name in self._index:
            raise LpModelError(f"duplicate variable {name!r}")
        self._index[name] = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        return len(self.var_names) - 1

    def index(self, name) -> int:
        return self._index[name]

    def has_var(self, name) -> bool:
        return name in self._index

    def set_obj(self, var, coef) -> None:
        j = var if isinstance(var, int) else self._index[var]
        self.obj[j] = float(coef)

    def add_constraint(self, coefs, sense, rhs, name=None) -> int:
        """Add ``sum(coef * x) <sense> rhs``; ``coefs`` maps var index or name to coefficient."""
        if sense not in _SENSES:
            raise LpModelError(f"unknown constraint sense {sense!r}")
        items = coefs.items() if hasattr(coefs, "items") else coefs
        row: dict = {}
        for var, c in items:
            if isinstance(var, (int, np.integer)):
                j = int(var)
            else:
                if var not in self._index:
                    raise LpModelError(f"constraint {name!r} references unknown variable {var!r}")
                j = self._index[var]
            row[j] = row.get(j, 0.0) + float(c)
        self.rows.append((row, _SENSES[sense], float(rhs), name or f"r{len(self.rows)}"))
        return len(self.rows) - 1

    def check(self) -> None:
        n = self.num_vars
        if not (len(self.lb) == len(self.ub) == len(self.obj) == n):
            raise LpModelError("variable arrays have inconsistent lengths")
        for j in range(n):
            if not self.lb[j] <= self.ub[j]:
                raise LpModelError(f"variable {self.var_names[j]!r}: lb > ub")
            if not math.isfinite(self.lb[j]):
                raise LpModelError(f"variable {self.var_names[j]!r}: lower bound must be finite")
            if not math.isfinite(self.obj[j]):
                raise LpModelError(f"variable {self.var_names[j]!r}: non-finite objective")
        for row, sense, rhs, name in self.rows:
            if not math.isfinite(rhs):
                raise LpModelError(f"constraint {name!r}: non-finite rhs")
            for j, c in row.items():
                if not 0 <= j < n:
                    raise LpModelError(f"constraint {name!r}: variable index {j} out of range")
                if not math.isfinite(c):
                    raise LpModelError(f"constraint {name!r}: non-finite coefficient")

    def dense(self):
        """(A, senses, rhs) with A as a dense float array."""
        A = np.zeros((self.num_rows, self.num_vars))
        for r, (row, _, _, _) in enumerate(self.rows):
            for j, c in row.items():
                A[r, j] = c
        return A, [s for _, s, _, _ in self.rows], np.array([b for _, _, b, _ in self.rows])

    def sparse(self):
        from scipy import sparse

        ri, ci, vals = [], [], []
        for r, (row, _, _, _) in enumerate(self.rows):
            for j, c in row.items():
                ri.append(r)
                ci.append(j)
                vals.append(c)
        A = sparse.csr_matrix((vals, (ri, ci)), shape=(self.num_rows, self.num_vars))
        return A, [s for _, s, _, _ in self.rows], np.array([b for _, _, b, _ in self.rows])

    def to_lp_text(self) -> str:
        """Dump in CPLEX LP text format for cross-checking with external solvers."""
        def nm(j):
            return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in str(self.var_names[j])) + f"_{j}"

        def expr(terms):
            parts = []
            for j, c in terms:
                if c == 0:
                    continue
                parts.append(f"{'-' if c < 0 else '+'} {abs(c):.17g} {nm(j)}")
            return " ".join(parts) if parts else "0 " + nm(0) if self.num_vars else "0"

        lines = [f"\\ {self.name}", "Maximize", " obj: " + expr(enumerate(self.obj)), "Subject To"]
        ops = {LE: "<=", EQ: "=", GE: ">="}
        for r, (row, sense, rhs, _) in enumerate(self.rows):
            lines.append(f" c{r}: {expr(sorted(row.items()))} {ops[sense]} {rhs:.17g}")
        lines.append("Bounds")
        for j in range(self.num_vars):
            ub = "+inf" if self.ub[j] == INF else f"{self.ub[j]:.17g}"
            lines.append(f" {self.lb[j]:.17g} <= {nm(j)} <= {ub}")
        lines.append("End")
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_lp_text())


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = float("nan")
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    backend: str = ""
    iterations: int = 0
    var_names: list | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, var) -> float:
        if isinstance(var, (int, np.integer)):
            return float(self.x[var])
        return float(self.x[self.var_names.index(var)])

    def as_dict(self) -> dict:
        return dict(zip(self.var_names, self.x.tolist()))


def solve(model: LpModel, backend: str = "auto") -> LpSolution:
    """Solve ``model`` (maximize).  ``backend`` is ``auto``, ``simplex`` or ``highs``."""
    model.check()
    auto = backend == "auto"
    if auto:
        backend = "simplex" if model.num_rows * (model.num_vars + model.num_rows) <= AUTO_DENSE_LIMIT else "highs"
    if backend == "simplex":
        try:
            sol = _solve_simplex(model)
            sol.var_names = model.var_names
            if sol.optimal:
                _certify(model, sol)
            return sol
        except LpSolveError as exc:
            if not auto:
                raise
            log.warning("%s; retrying %r with HiGHS", exc, model.name)
        backend = "highs"
    if backend != "highs":
        raise LpModelError(f"unknown backend {backend!r}")
    sol = _solve_highs(model)
    sol.var_names = model.var_names
    if sol.optimal:
        _certify(model, sol)
    return sol


def max_violation(model: LpModel, x) -> tuple[float, float]:
    """Largest (constraint, bound) violation of ``x`` against ``model``."""
    x = np.asarray(x, dtype=float)
    worst_row = 0.0
    for row, sense, rhs, _ in model.rows:
        lhs = math.fsum(c * x[j] for j, c in row.items())
        if sense == LE:
            v = lhs - rhs
        elif sense == GE:
            v = rhs - lhs
        else:
            v = abs(lhs - rhs)
        worst_row = max(worst_row, v)
    lb, ub = np.asarray(model.lb), np.asarray(model.ub)
    worst_bound = float(max(np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0)))
    return worst_row, worst_bound


def _certify(model: LpModel, sol: LpSolution) -> None:
    lb, ub = np.asarray(model.lb), np.asarray(model.ub)
    x = np.asarray(sol.x, dtype=float)
    # snap values that are within tolerance of a bound
    x = np.where((x < lb) & (x > lb - 1e-7), lb, x)
    x = np.where((x > ub) & (x < ub + 1e-7), ub, x)
    sol.x = x
    rows, bounds = max_violation(model, x)
    if rows > CONSTRAINT_TOL or bounds > BOUND_TOL:
        raise LpSolveError(
            f"{sol.backend} returned a solution violating the model "
            f"(constraint {rows:.3g}, bound {bounds:.3g}) for {model.name!r}")
    sol.objective = math.fsum(c * xi for c, xi in zip(model.obj, x))


def _solve_highs(model: LpModel) -> LpSolution:
    from scipy.optimize import linprog
    from scipy import sparse

    A, senses, b = model.sparse()
    senses = np.array(senses)
    c = -np.asarray(model.obj)
    le = senses == LE
    ge = senses == GE
    eq = senses == EQ
    A_ub = sparse.vstack([A[le], -A[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([b[le], -b[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = b[eq] if eq.any() else None
    bounds = [(lo, None if hi == INF else hi) for lo, hi in zip(model.lb, model.ub)]
    opts = {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs", options=opts)
    if res.status == 2:
        # presolve may report "infeasible or unbounded"; a feasibility solve settles which
        feas = linprog(np.zeros_like(c), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                       method="highs", options=opts)
        return LpSolution("unbounded" if feas.status == 0 else "infeasible", backend="highs")
    if res.status == 3:
        return LpSolution("unbounded", backend="highs")
    if res.status != 0:
        raise LpSolveError(f"HiGHS failed on {model.name!r}: {res.message}")
    duals = np.zeros(model.num_rows)
    if A_ub is not None:
        m_ub = -res.ineqlin.marginals  # marginals of the min problem, sign-flipped for max
        duals[np.flatnonzero(le)] = m_ub[: le.sum()]
        duals[np.flatnonzero(ge)] = -m_ub[le.sum():]
    if A_eq is not None:
        duals[np.flatnonzero(eq)] = -res.eqlin.marginals
    return LpSolution("optimal", -res.fun, res.x, duals, "highs", int(getattr(res, "nit", 0)))


def _equilibrate(A, passes=3):
    """Power-of-two row and column scales bringing every row and column max to about 1."""
    m, n = A.shape
    r, s = np.ones(m), np.ones(n)
    absA = np.abs(A)
    for _ in range(passes):
        rmax = (absA * r[:, None] * s[None, :]).max(axis=1, initial=0.0)
        r *= np.where(rmax > 0, np.exp2(-np.round(np.log2(np.where(rmax > 0, rmax, 1.0)))), 1.0)
        cmax = (absA * r[:, None] * s[None, :]).max(axis=0, initial=0.0)
        s *= np.where(cmax > 0, np.exp2(-np.round(np.log2(np.where(cmax > 0, cmax, 1.0)))), 1.0)
    return r, s


def _solve_simplex(model: LpModel) -> LpSolution:
    A, senses, b = model.dense()
    c, lb, ub = np.asarray(model.obj, float), np.asarray(model.lb, float), np.asarray(model.ub, float)
    # solve in scaled variables x = s * x'
    r, s = _equilibrate(A)
    sol = RevisedSimplex(A * r[:, None] * s[None, :], senses, b * r, c * s, lb / s, ub / s).run()
    if sol.x is not None:
        sol.x = sol.x * s
    if sol.duals is not None:
        sol.duals = sol.duals * r
    return sol


class RevisedSimplex:
    """Dense bounded-variable revised simplex (two phases, explicit basis inverse).

    Dantzig pricing with a switch to Bland's rule once ``bland_after``
    degenerate pivots have been made, which rules out cycling.
    """

    feas_tol = 1e-9
    opt_tol = 1e-9
    pivot_tol = 1e-9
    refactor_every = 64

    def __init__(self, A, senses, b, c, lb, ub, bland_after=1000, max_iter=None):
        m, n = A.shape
        self.m, self.n = m, n
        self.bland_after = bland_after
        self.lb = lb.astype(float)
        # shift x = lb + x'
        b = b - A @ self.lb
        sign = np.array([-1.0 if s == GE else 1.0 for s in senses])
        A = A * sign[:, None]
        b = b * sign
        self.row_sign = sign
        is_eq = np.array([s == EQ for s in senses], dtype=bool)

        # columns: structural | slacks | artificials
        need_art = is_eq | (b < 0)
        art_rows = np.flatnonzero(need_art)
        k = len(art_rows)
        N = n + m + k
        M = np.zeros((m, N))
        M[:, :n] = A
        M[np.arange(m), n + np.arange(m)] = 1.0
        for t, r in enumerate(art_rows):
            M[r, n + m + t] = 1.0 if b[r] >= 0 else -1.0
        upper = np.empty(N)
        upper[:n] = ub - lb
        upper[n:n + m] = np.where(is_eq, 0.0, INF)
        upper[n + m:] = INF
        self.M, self.b, self.upper = M, b, upper
        self.N, self.k = N, k
        self.c = np.concatenate([-c, np.zeros(m + k)])  # minimize -c.x

        basis = n + np.arange(m)
        basis[art_rows] = n + m + np.arange(k)
        self.basis = basis
        self.at_upper = np.zeros(N, dtype=bool)
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[basis] = True
        self.max_iter = max_iter or 50 * (m + N) + 1000
        self.iterations = 0
        self.degenerate = 0
        self._refactor()

    def _refactor(self):
        B = self.M[:, self.basis]
        self.Binv = np.linalg.inv(B) if self.m else np.zeros((0, 0))
        self._recompute_xb()
        self.since_refactor = 0

    def _recompute_xb(self):
        xn = np.where(self.at_upper & ~self.is_basic, self.upper, 0.0)
        xn[self.is_basic] = 0.0
        xn[~np.isfinite(xn)] = 0.0
        self.xB = self.Binv @ (self.b - self.M @ xn)

    def _phase(self, cost) -> str:
        bland = self.degenerate >= self.bland_after
        while True:
            if self.iterations >= self.max_iter:
                raise LpSolveError("simplex iteration limit reached")
            if self.since_refactor >= self.refactor_every:
                self._refactor()
            pi = cost[self.basis] @ self.Binv
            d = cost - pi @ self.M
            movable = ~self.is_basic & (self.upper > 0)
            cand = movable & (((~self.at_upper) & (d < -self.opt_tol)) | (self.at_upper & (d > self.opt_tol)))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return "optimal"
            bland = bland or self.degenerate >= self.bland_after
            j = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
            direction = -1.0 if self.at_upper[j] else 1.0
            alpha = self.Binv @ self.M[:, j]
            delta = direction * alpha  # x_B decreases by theta * delta

            theta = self.upper[j]  # bound flip of the entering variable
            leave = -1
            ub_basic = self.upper[self.basis]
            best_piv = 0.0
            tol = max(self.pivot_tol, 1e-9 * float(np.abs(delta).max(initial=0.0)))
            for i in range(self.m):
                di = delta[i]
                if di > tol:
                    lim = max(self.xB[i], 0.0) / di
                elif di < -tol and ub_basic[i] < INF:
                    lim = max(ub_basic[i] - self.xB[i], 0.0) / -di
                else:
                    continue
                if lim < theta - 1e-12:
                    theta, leave, best_piv = lim, i, abs(di)
                elif leave >= 0 and abs(lim - theta) <= 1e-12:
                    if bland:
                        if self.basis[i] < self.basis[leave]:
                            leave, best_piv = i, abs(di)
                    elif abs(di) > best_piv:
                        leave, best_piv = i, abs(di)
            if theta == INF:
                return "unbounded"
            self.iterations += 1
            if theta <= 1e-12:
                self.degenerate += 1
            self.xB -= theta * delta
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            out = self.basis[leave]
            # leaving variable settles on whichever bound it hit
            self.at_upper[out] = delta[leave] < 0
            entering_value = (self.upper[j] - theta) if self.at_upper[j] else theta
            self.is_basic[out] = False
            self.is_basic[j] = True
            self.at_upper[j] = False
            self.basis[leave] = j
            self.xB[leave] = entering_value
            piv = alpha[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[leave] = row
            self.since_refactor += 1

    def _values(self):
        x = np.where(self.at_upper, self.upper, 0.0)
        x[~np.isfinite(x)] = 0.0
        x[self.basis] = self.xB
        return x

    def run(self) -> LpSolution:
        n, m, k = self.n, self.m, self.k
        if k:
            cost1 = np.zeros(self.N)
            cost1[n + m:] = 1.0
            status = self._phase(cost1)
            self._refactor()
            infeas = float(self._values()[n + m:].sum())
            if status != "optimal" or infeas > self.feas_tol * (1.0 + float(np.abs(self.b).max(initial=0.0))):
                return LpSolution("infeasible", backend="simplex", iterations=self.iterations)
            # artificials are pinned at zero from here on
            self.upper[n + m:] = 0.0
            self.at_upper[n + m:] = False
        status = self._phase(self.c)
        if status == "unbounded":
            return LpSolution("unbounded", backend="simplex", iterations=self.iterations)
        self._refactor()
        xs = self._values()[:n]
        xs = np.clip(xs, 0.0, self.upper[:n])
        x = xs + self.lb
        pi = self.c[self.basis] @ self.Binv
        duals = -pi * self.row_sign
        return LpSolution("optimal", float(-self.c[:n] @ xs), x, duals, "simplex", self.iterations)


def dual_bound(model: LpModel, y) -> float:
    """Upper bound on the max objective implied by row multipliers ``y``.

    Returns ``inf`` when ``y`` has the wrong sign for some row or leaves an
    unbounded direction open.  Independent of any solver.
    """
    y = np.asarray(y, dtype=float)
    A, senses, b = model.dense()
    for yr, s in zip(y, senses):
        if (s == LE and yr < -1e-12) or (s == GE and yr > 1e-12):
            return INF
    red = np.asarray(model.obj) - y @ A
    total = float(y @ b)
    for j, r in enumerate(red):
        if r > 1e-12:
            if model.ub[j] == INF:
                return INF
            total += r * model.ub[j]
        else:
            total += r * model.lb[j]
    return total
