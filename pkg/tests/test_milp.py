import itertools
import sys

import numpy as np
import pytest

from surropt import milp
from surropt.errors import NumericalFailure


def _lp(c, rows, senses, rhs, lower, upper, **kw):
    return milp.LpProblem(
        c=np.asarray(c, dtype=float),
        rows=np.asarray(rows, dtype=float).reshape(len(senses), -1),
        senses=list(senses),
        rhs=np.asarray(rhs, dtype=float),
        lower=np.asarray(lower, dtype=float),
        upper=np.asarray(upper, dtype=float),
        **kw,
    )


def test_lp_simple_maximize():
    lp = _lp([1, 1], [[1, 1]], ["<="], [1], [0, 0], [np.inf, np.inf], minimize=False)
    sol = milp.solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0)


def test_lp_lower_bounded_min():
    lp = _lp([1], [[1]], [">="], [3], [-np.inf], [np.inf])
    assert milp.solve_lp(lp).objective == pytest.approx(3.0)


def test_lp_infeasible_and_unbounded():
    bad = _lp([1], [[1], [1]], ["<=", ">="], [0, 1], [-np.inf], [np.inf])
    assert milp.solve_lp(bad).status == "infeasible"
    free = _lp([-1], [[1]], [">="], [0], [-np.inf], [np.inf])
    assert milp.solve_lp(free).status == "unbounded"


def test_lp_matches_scipy_on_random_instances():
    from scipy.optimize import linprog

    rng = np.random.default_rng(0)
    for _ in range(150):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 6))
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m) + 1.0
        c = rng.normal(size=n)
        lo = np.where(rng.random(n) < 0.8, rng.uniform(-2, 0, n), -np.inf)
        hi = np.where(rng.random(n) < 0.8, rng.uniform(0.5, 3, n), np.inf)
        senses = [("<=", ">=", "=")[rng.integers(0, 3)] for _ in range(m)]
        sol = milp.solve_lp(_lp(c, A, senses, b, lo, hi))
        A_ub, b_ub, A_eq, b_eq = [], [], [], []
        for i, sense in enumerate(senses):
            if sense == "<=":
                A_ub.append(A[i]); b_ub.append(b[i])
            elif sense == ">=":
                A_ub.append(-A[i]); b_ub.append(-b[i])
            else:
                A_eq.append(A[i]); b_eq.append(b[i])
        ref = linprog(
            c,
            A_ub=np.array(A_ub) if A_ub else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=np.array(A_eq) if A_eq else None,
            b_eq=np.array(b_eq) if b_eq else None,
            bounds=[
                (None if not np.isfinite(l) else l, None if not np.isfinite(u) else u)
                for l, u in zip(lo, hi)
            ],
            method="highs",
        )
        ref_status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(ref.status)
        assert sol.status == ref_status
        if sol.status == "optimal":
            assert sol.objective == pytest.approx(ref.fun, abs=1e-6, rel=1e-6)


def test_milp_binary_knapsack():
    m = milp.MilpModel()
    a = m.add_binary("a")
    b = m.add_binary("b")
    m.add_row({a: 1.0, b: 1.0}, "<=", 1.0)
    m.add_objective_term(a, -1.0)
    m.add_objective_term(b, -1.0)
    sol = milp.solve_milp(m)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-1.0)
    assert sol.gap <= 1e-6


def test_milp_integral_relaxation_solves_at_root():
    m = milp.MilpModel()
    b0 = m.add_binary("b0")
    b1 = m.add_binary("b1")
    m.add_row({b0: 1.0, b1: 1.0}, "=", 1.0)
    m.add_objective_term(b0, 2.0)
    m.add_objective_term(b1, 1.0)
    sol = milp.solve_milp(m)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0)
    assert sol.nodes == 1


def test_milp_infeasible_status():
    m = milp.MilpModel()
    z = m.add_binary("z")
    m.add_row({z: 1.0}, ">=", 2.0)
    assert milp.solve_milp(m).status == "infeasible"


def _random_model(rng):
    nb = int(rng.integers(1, 13))
    nc = int(rng.integers(0, 4))
    m = milp.MilpModel()
    bs = [m.add_binary(f"b{i}") for i in range(nb)]
    cs = [
        m.add_var(f"c{i}", float(rng.uniform(-3, 0)), float(rng.uniform(0.5, 3)))
        for i in range(nc)
    ]
    for _ in range(int(rng.integers(1, 8))):
        coeffs = {j: float(rng.normal()) for j in bs + cs if rng.random() < 0.7}
        if coeffs:
            m.add_row(coeffs, ("<=", ">=")[int(rng.integers(0, 2))], float(rng.normal() * 2))
    for j in bs + cs:
        m.add_objective_term(j, float(rng.normal()))
    return m, bs


def _enumerate_best(model, binaries):
    best = None
    for assignment in itertools.product([0.0, 1.0], repeat=len(binaries)):
        lo = list(model.lower)
        hi = list(model.upper)
        for j, v in zip(binaries, assignment):
            lo[j] = hi[j] = v
        sol = milp.solve_lp(model.to_lp(lo, hi))
        if sol.status == "optimal" and (best is None or sol.objective < best):
            best = sol.objective
    return best


def test_milp_matches_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(50):
        model, binaries = _random_model(rng)
        sol = milp.solve_milp(model)
        best = _enumerate_best(model, binaries)
        if best is None:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(best, abs=1e-6, rel=1e-6)


def test_milp_general_integers_match_enumeration():
    rng = np.random.default_rng(123)
    for _ in range(10):
        nb = int(rng.integers(0, 5))
        ng = int(rng.integers(1, 4))
        m = milp.MilpModel()
        bs = [m.add_binary(f"b{i}") for i in range(nb)]
        gs = [m.add_var(f"g{i}", 0, int(rng.integers(2, 5)), integral=True) for i in range(ng)]
        for _ in range(int(rng.integers(1, 6))):
            coeffs = {j: float(rng.normal()) for j in bs + gs if rng.random() < 0.7}
            if coeffs:
                m.add_row(coeffs, ("<=", ">=")[int(rng.integers(0, 2))], float(rng.normal() * 3))
        for j in bs + gs:
            m.add_objective_term(j, float(rng.normal()))
        sol = milp.solve_milp(m)
        ranges = [range(2)] * nb + [range(int(m.upper[j]) + 1) for j in gs]
        best = None
        for assign in itertools.product(*ranges):
            lo = list(m.lower)
            hi = list(m.upper)
            for j, v in zip(bs + gs, assign):
                lo[j] = hi[j] = float(v)
            r = milp.solve_lp(m.to_lp(lo, hi))
            if r.status == "optimal" and (best is None or r.objective < best):
                best = r.objective
        if best is None:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(best, abs=1e-6, rel=1e-6)


def test_milp_solution_satisfies_rows_and_integrality():
    rng = np.random.default_rng(21)
    for _ in range(20):
        model, _ = _random_model(rng)
        sol = milp.solve_milp(model)
        if sol.status != "optimal":
            continue
        assert model.row_residuals(sol.x).max(initial=0.0) <= 1e-6
        for j in model.integer_indices():
            assert abs(sol.x[j] - round(sol.x[j])) <= 1e-6
        assert sol.bound <= sol.objective + 1e-9


def test_pivot_budget_failure():
    # maximizing forces at least one pivot, which the zero budget forbids
    lp = _lp([-1, -1], [[1, 1]], ["<="], [1], [0, 0], [np.inf, np.inf])
    with pytest.raises(NumericalFailure):
        milp.solve_lp(lp, max_pivots=0)


# ---------------------------------------------------------------------------
# LP-format files and the external solver seam
# ---------------------------------------------------------------------------

def _demo_model():
    m = milp.MilpModel("demo")
    x = m.add_var("v", -1.5, 2.5)
    z = m.add_binary("flag")
    g = m.add_var("count", 0, 5, integral=True)
    m.add_row({x: 1.25, z: -2.0}, "<=", 3.5)
    m.add_row({g: 1.0, x: -0.5}, ">=", -1.0)
    m.add_objective_term(x, 0.75)
    m.add_objective_term(z, -1.0)
    m.obj_const = 4.25
    return m


def test_lp_file_roundtrip(tmp_path):
    model = _demo_model()
    path = tmp_path / "model.lp"
    milp.export_lp_file(model, str(path))
    back = milp.read_lp_file(str(path))
    assert milp.models_equal(model, back)


def test_lp_file_empty_model(tmp_path):
    model = milp.MilpModel()
    path = tmp_path / "empty.lp"
    milp.export_lp_file(model, str(path))
    back = milp.read_lp_file(str(path))
    assert back.n_vars == 0 and back.n_rows == 0


def test_external_solver_seam(tmp_path, monkeypatch):
    script = tmp_path / "extsolve.py"
    script.write_text(
        "#!/usr/bin/env python3\n"
        "import sys\n"
        "from surropt import milp\n"
        "model = milp.read_lp_file(sys.argv[1])\n"
        "sol = milp.solve_milp(model)\n"
        "with open(sys.argv[2], 'w') as fh:\n"
        "    fh.write(f'status {sol.status}\\n')\n"
        "    if sol.x is not None:\n"
        "        fh.write(f'objective {float(sol.objective)!r}\\n')\n"
        "        for j in range(model.n_vars):\n"
        "            name = ('z' if model.integral[j] else 'x') + str(j)\n"
        "            fh.write(f'{name} {float(sol.x[j])!r}\\n')\n"
    )
    model = _demo_model()
    builtin = milp.solve_milp(model)
    monkeypatch.setenv(milp.EXTERNAL_SOLVER_ENV, f"{sys.executable} {script}")
    ext = milp.solve(model, solver="external")
    assert ext.status == "optimal"
    assert ext.objective == pytest.approx(builtin.objective, abs=1e-9)


def test_external_solver_requires_env(monkeypatch):
    monkeypatch.delenv(milp.EXTERNAL_SOLVER_ENV, raising=False)
    with pytest.raises(ValueError):
        milp.solve(_demo_model(), solver="external")
