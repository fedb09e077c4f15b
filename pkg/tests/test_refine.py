import numpy as np
import pytest

from surropt.driver import generate_quadratic_sigmoid
from surropt.model import (
    LinearConstraint,
    LinearObjective,
    NonlinearConstraint,
    NonlinearObjective,
    StandardProblem,
    VarSpec,
    standardize,
)
from surropt.refine import PgdConfig, merit_state, pgd_improve, project


def _rows(*entries):
    return tuple(LinearConstraint(np.asarray(c, dtype=float), s, r) for c, s, r in entries)


def test_project_identity_when_feasible():
    rows = _rows(([1.0, 0.0], "<=", 1.0))
    x = project([0.2, 0.3], rows, np.zeros(2), np.ones(2))
    assert np.allclose(x, [0.2, 0.3])


def test_project_halfspace():
    rows = _rows(([1.0, 0.0], "<=", 1.0))
    x = project([2.0, 0.0], rows, np.full(2, -5.0), np.full(2, 5.0))
    assert np.allclose(x, [1.0, 0.0], atol=1e-9)


def test_project_diagonal_row_with_box():
    rows = _rows(([1.0, 1.0], "<=", 2.0))
    x = project([2.0, 2.0], rows, np.zeros(2), np.full(2, 3.0))
    assert np.allclose(x, [1.0, 1.0], atol=1e-8)


def test_project_respects_frozen_coordinates():
    rows = _rows(([1.0, 1.0], "<=", 2.0))
    x = project([2.0, 2.0], rows, np.zeros(2), np.full(2, 3.0),
                frozen=np.array([True, False]))
    assert x[0] == 2.0
    assert x[1] == pytest.approx(0.0, abs=1e-8)


def test_project_equality_row():
    rows = _rows(([1.0, -1.0], "=", 0.0))
    x = project([1.0, 0.0], rows, np.full(2, -5.0), np.full(2, 5.0))
    assert np.allclose(x, [0.5, 0.5], atol=1e-8)


def _linear_sp():
    return StandardProblem(
        vars=(VarSpec("x1", 0, 0.0, 1.0), VarSpec("x2", 1, 0.0, 1.0)),
        objective=LinearObjective(np.array([1.0, 1.0])),
        linear=_rows(([1.0, 1.0], ">=", 0.5)),
        bound_provenance=("user", "user"),
    )


def test_pgd_linear_problem_descends_to_face():
    sp = _linear_sp()
    out = pgd_improve(sp, np.array([0.8, 0.8]))
    assert out.merit <= merit_state(sp, np.array([0.8, 0.8]), 1e3).merit
    # optimum of x1+x2 over the wedge is the row face
    assert out.objective == pytest.approx(0.5, abs=1e-6)


def test_pgd_stays_at_smooth_local_optimum():
    sp = StandardProblem(
        vars=(VarSpec("x1", 0, -1.0, 1.0),),
        objective=NonlinearObjective(
            evaluator=lambda x: float((x[0] - 0.3) ** 2),
            support=frozenset({0}),
            gradient=lambda x: np.array([2.0 * (x[0] - 0.3)]),
        ),
        bound_provenance=("user",),
    )
    out = pgd_improve(sp, np.array([0.3]))
    assert out.x[0] == pytest.approx(0.3, abs=1e-6)


def test_pgd_never_degrades_merit():
    problem = generate_quadratic_sigmoid(4, 3, seed=5)
    sp = standardize(problem)
    lo, hi = sp.box()
    rng = np.random.default_rng(0)
    cfg = PgdConfig()
    for _ in range(25):
        x0 = rng.uniform(lo, hi)
        start = merit_state(sp, x0, cfg.penalty)
        out = pgd_improve(sp, x0, cfg)
        assert out.merit <= start.merit + 1e-12


def test_pgd_iterates_respect_linear_rows_and_box():
    problem = generate_quadratic_sigmoid(3, 2, seed=9)
    sp = standardize(problem)
    lo, hi = sp.box()
    out = pgd_improve(sp, np.array([1.5, -1.5, 0.2]))
    assert (out.x >= lo - 1e-8).all() and (out.x <= hi + 1e-8).all()


def test_pgd_momentum_zero_matches_disabled():
    problem = generate_quadratic_sigmoid(3, 1, seed=2)
    sp = standardize(problem)
    x0 = np.array([1.0, -1.0, 0.5])
    out_zero = pgd_improve(sp, x0, PgdConfig(momentum=0.0))
    out_off = pgd_improve(sp, x0, PgdConfig(use_momentum=False))
    assert np.array_equal(out_zero.x, out_off.x)
    assert out_zero.merit == out_off.merit


def test_pgd_freezes_integral_coordinates():
    sp = StandardProblem(
        vars=(
            VarSpec("n", 0, 0.0, 5.0, integral=True),
            VarSpec("x", 1, 0.0, 5.0),
        ),
        objective=LinearObjective(np.array([1.0, 1.0])),
        bound_provenance=("user", "user"),
    )
    out = pgd_improve(sp, np.array([3.0, 3.0]))
    assert out.x[0] == 3.0
    assert out.x[1] == pytest.approx(0.0, abs=1e-8)


def test_pgd_reports_warning_on_failing_evaluator():
    def bad(x):
        raise ValueError("nope")

    sp = StandardProblem(
        vars=(VarSpec("x", 0, 0.0, 1.0),),
        objective=LinearObjective(np.array([1.0])),
        nonlinear=(
            NonlinearConstraint(
                evaluator=lambda x: (_ for _ in ()).throw(
                    __import__("surropt.errors", fromlist=["EvaluationError"]).EvaluationError("bad point")
                ),
                sense="<=0",
                support=frozenset({0}),
            ),
        ),
        bound_provenance=("user",),
    )
    out = pgd_improve(sp, np.array([0.5]))
    assert out.warning is not None
