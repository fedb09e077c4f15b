"""Local improvement of incumbents by projected gradient descent.

The merit function is objective plus a penalty on nonlinear-constraint
violations; linear rows and the box are enforced by cyclic Dykstra
projection instead. Momentum is conditional: it stays on only while the
previous accepted step decreased the merit. A short Gauss-Newton polish
drives residual nonlinear violations toward zero at the end, which under
the penalty weighting is itself a merit descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EvaluationError, ProjectionStall
from .model import StandardProblem


@dataclass
class PgdConfig:
    iterations: int = 10
    max_halvings: int = 20
    momentum: float = 0.9
    penalty: float = 1e3
    step_tol: float = 1e-9
    polish_iters: int = 30
    use_momentum: bool = True
    second_order: bool = True  # diagonal curvature scaling of the direction

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum coefficient must lie in [0, 1)")
        if self.penalty <= 0:
            raise ValueError("violation penalty must be positive")


@dataclass
class MeritState:
    x: np.ndarray
    objective: float
    violations: np.ndarray
    merit: float
    warning: Optional[str] = None


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def project(
    x,
    rows,
    lo,
    hi,
    frozen=None,
    tol: float = 1e-9,
    max_sweeps: int = 500,
) -> np.ndarray:
    """Dykstra projections onto each linear row and the box.

    ``frozen`` marks coordinates held fixed at their incoming values
    (integer variables during refinement). Raises ProjectionStall when the
    sweep budget ends with a violation above tolerance.
    """
    x = np.asarray(x, dtype=float).copy()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = x.shape[0]
    if frozen is None:
        frozen = np.zeros(n, dtype=bool)
    else:
        frozen = np.asarray(frozen, dtype=bool)
    free = ~frozen

    # reduce rows to the free subspace
    reduced = []
    for row in rows:
        a = np.asarray(row.coeffs, dtype=float)
        b = float(row.rhs) - float(a[frozen] @ x[frozen])
        af = a[free]
        nrm2 = float(af @ af)
        if nrm2 < 1e-18:
            continue
        reduced.append((af, b, row.sense, nrm2))

    z = x[free].copy()
    lo_f = lo[free]
    hi_f = hi[free]
    if not reduced:
        x[free] = np.clip(z, lo_f, hi_f)
        return x

    corrections = [np.zeros_like(z) for _ in reduced] + [np.zeros_like(z)]

    def max_violation(v) -> float:
        worst = float(np.max(np.maximum(lo_f - v, v - hi_f), initial=0.0))
        for af, b, sense, _ in reduced:
            lhs = float(af @ v)
            if sense == "<=":
                worst = max(worst, lhs - b)
            elif sense == ">=":
                worst = max(worst, b - lhs)
            else:
                worst = max(worst, abs(lhs - b))
        return worst

    for sweep in range(max_sweeps):
        if max_violation(z) <= tol:
            x[free] = z
            return x
        for idx, (af, b, sense, nrm2) in enumerate(reduced):
            y = z + corrections[idx]
            lhs = float(af @ y)
            if sense == "<=":
                step = max(0.0, lhs - b) / nrm2
            elif sense == ">=":
                step = min(0.0, lhs - b) / nrm2
            else:
                step = (lhs - b) / nrm2
            z_new = y - step * af
            corrections[idx] = y - z_new
            z = z_new
        y = z + corrections[-1]
        z_new = np.clip(y, lo_f, hi_f)
        corrections[-1] = y - z_new
        z = z_new

    if max_violation(z) <= tol:
        x[free] = z
        return x
    raise ProjectionStall(
        f"projection still violated by {max_violation(z):.3e} after {max_sweeps} sweeps"
    )


# ---------------------------------------------------------------------------
# PGD with conditional momentum
# ---------------------------------------------------------------------------

def _violations(sp: StandardProblem, x) -> np.ndarray:
    return np.array([con.violation(x) for con in sp.nonlinear])


def merit_state(sp: StandardProblem, x, penalty: float) -> MeritState:
    v = _violations(sp, x)
    f = sp.objective.value(x)
    return MeritState(x=np.asarray(x, dtype=float), objective=f, violations=v, merit=f + penalty * v.sum())


def _merit_gradient(sp: StandardProblem, x, penalty: float) -> np.ndarray:
    g = sp.objective.grad(x)
    for con in sp.nonlinear:
        value = con.value(x)
        if con.sense == "=0":
            if abs(value) > 0.0:
                g = g + penalty * math.copysign(1.0, value) * con.grad(x)
        elif value > 0.0:
            g = g + penalty * con.grad(x)
    return g


def _diag_curvature(sp: StandardProblem, x, penalty, merit0, lo, hi, frozen) -> np.ndarray:
    """Second differences of the merit along each coordinate.

    Probes shrink to stay inside the box, so bound-pinned coordinates report
    zero instead of a clipping artifact. Penalty kinks of active nonlinear
    constraints show up as huge curvature, which is exactly what keeps the
    direction from ramming walls.
    """
    n = x.shape[0]
    curv = np.zeros(n)
    for j in range(n):
        if frozen[j]:
            continue
        h = 1e-4 * max(1.0, abs(x[j]))
        h = min(h, hi[j] - x[j], x[j] - lo[j])
        if h < 1e-9:
            continue
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        try:
            mp = merit_state(sp, xp, penalty).merit
            mm = merit_state(sp, xm, penalty).merit
        except EvaluationError:
            continue
        curv[j] = (mp - 2.0 * merit0 + mm) / (h * h)
    return curv


def _scale_by_curvature(g: np.ndarray, curv: np.ndarray, lo, hi, frozen) -> np.ndarray:
    """Per-coordinate step proposal: a Newton step g/curv where curvature is
    meaningful, a full box-width move where the merit is locally flat."""
    n = g.shape[0]
    width = np.where(np.isfinite(hi - lo) & (hi > lo), hi - lo, 1.0)
    d = np.zeros(n)
    for j in range(n):
        if frozen[j] or g[j] == 0.0:
            continue
        gj = abs(g[j])
        denom = max(curv[j], gj / width[j])
        d[j] = math.copysign(gj / denom, g[j])
    return d


def _coordinate_interval(x, j, rows, lo, hi):
    """Feasible step range along coordinate j under the box and linear rows."""
    a_lo = lo[j] - x[j]
    a_hi = hi[j] - x[j]
    for row in rows:
        aj = float(row.coeffs[j])
        if aj == 0.0:
            continue
        slack = float(row.rhs - row.coeffs @ x)
        if row.sense == "<=":
            bound = slack / aj
            if aj > 0:
                a_hi = min(a_hi, bound)
            else:
                a_lo = max(a_lo, bound)
        elif row.sense == ">=":
            bound = slack / aj
            if aj > 0:
                a_lo = max(a_lo, bound)
            else:
                a_hi = min(a_hi, bound)
        else:
            a_lo = max(a_lo, 0.0)
            a_hi = min(a_hi, 0.0)
    return a_lo, a_hi


def _coordinate_sweep(sp: StandardProblem, state: MeritState, penalty, rows, lo, hi, frozen) -> MeritState:
    """One pass of per-coordinate merit line searches.

    Each coordinate moves inside its exact row/box interval: a coarse grid
    locates the basin, a few ternary steps refine it. Decoupled moves reach
    flat coordinates that a shared step length starves.
    """
    current = state
    for j in range(current.x.shape[0]):
        if frozen[j]:
            continue
        a_lo, a_hi = _coordinate_interval(current.x, j, rows, lo, hi)
        if a_hi - a_lo < 1e-12:
            continue

        def merit_at(alpha, j=j):
            xc = current.x.copy()
            xc[j] += alpha
            try:
                return merit_state(sp, xc, penalty)
            except EvaluationError:
                return None

        grid = np.linspace(a_lo, a_hi, 9)
        cands = [(0.0, current)]
        for alpha in grid:
            st = merit_at(alpha)
            if st is not None:
                cands.append((alpha, st))
        alpha_best, best_here = min(cands, key=lambda t: t[1].merit)
        span = (a_hi - a_lo) / 8.0
        left, right = alpha_best - span, alpha_best + span
        for _ in range(25):
            third = (right - left) / 3.0
            for alpha in (left + third, right - third):
                alpha = min(max(alpha, a_lo), a_hi)
                st = merit_at(alpha)
                if st is not None and st.merit < best_here.merit:
                    alpha_best, best_here = alpha, st
            left, right = alpha_best - third, alpha_best + third
            if third < 1e-12:
                break
        if best_here.merit < current.merit - 1e-12:
            current = best_here
    return current


def _cone_filter(move: np.ndarray, x, rows, lo, hi, frozen, tol: float = 1e-9) -> np.ndarray:
    """Drop movement components that push out of active bounds or rows."""
    v = move.copy()
    v[frozen] = 0.0
    for _ in range(3):
        at_lo = (x <= lo + tol) & (v < 0.0)
        at_hi = (x >= hi - tol) & (v > 0.0)
        v[at_lo | at_hi] = 0.0
        changed = False
        for row in rows:
            a = np.asarray(row.coeffs, dtype=float)
            lhs = float(a @ x)
            push = float(a @ v)
            blocked = (
                (row.sense == "<=" and lhs >= row.rhs - tol and push > tol)
                or (row.sense == ">=" and lhs <= row.rhs + tol and push < -tol)
                or (row.sense == "=" and abs(push) > tol)
            )
            if blocked:
                nrm2 = float(a @ a)
                if nrm2 > 1e-18:
                    v = v - (push / nrm2) * a
                    v[frozen] = 0.0
                    changed = True
        if not changed:
            break
    return v


def pgd_improve(sp: StandardProblem, x0, cfg: Optional[PgdConfig] = None) -> MeritState:
    """Improve an incumbent; never returns a point with merit above the start.

    Iterates x <- project(x - alpha (grad + gamma * velocity)) with
    backtracking halvings. On evaluator failure the best state found so far
    comes back with a warning instead of raising.
    """
    cfg = cfg or PgdConfig()
    lo, hi = sp.box()
    frozen = np.array([v.integral for v in sp.vars], dtype=bool)
    rows = sp.linear

    def proj(p):
        return project(p, rows, lo, hi, frozen=frozen)

    x = proj(np.asarray(x0, dtype=float))
    try:
        best = merit_state(sp, x, cfg.penalty)
    except EvaluationError as exc:
        return MeritState(
            x=x, objective=math.nan, violations=np.array([]), merit=math.inf,
            warning=f"start evaluation failed: {exc}",
        )
    current = best
    velocity = np.zeros_like(x)
    momentum_on = False
    gamma = cfg.momentum if cfg.use_momentum else 0.0

    try:
        for _ in range(cfg.iterations):
            progress = False
            g = _merit_gradient(sp, current.x, cfg.penalty)
            if cfg.second_order:
                curv = _diag_curvature(sp, current.x, cfg.penalty, current.merit, lo, hi, frozen)
                g = _scale_by_curvature(g, curv, lo, hi, frozen)
            move = _cone_filter(-g, current.x, rows, lo, hi, frozen)
            d = -move
            if momentum_on:
                d = d + gamma * velocity
            norm_d = float(np.linalg.norm(d))
            if norm_d > cfg.step_tol:
                alpha = 1.0
                accepted = None
                for _ in range(cfg.max_halvings + 1):
                    try:
                        cand_x = proj(current.x - alpha * d)
                        cand = merit_state(sp, cand_x, cfg.penalty)
                    except (EvaluationError, ProjectionStall):
                        alpha *= 0.5
                        continue
                    if cand.merit < current.merit - 1e-12:
                        accepted = cand
                        break
                    alpha *= 0.5
                if accepted is None:
                    momentum_on = False
                    velocity[:] = 0.0
                else:
                    velocity = alpha * d
                    momentum_on = cfg.use_momentum and gamma > 0.0
                    current = accepted
                    progress = True
            if cfg.second_order:
                swept = _coordinate_sweep(sp, current, cfg.penalty, rows, lo, hi, frozen)
                if swept.merit < current.merit - 1e-12:
                    current = swept
                    progress = True
            if current.merit < best.merit:
                best = current
            if not progress:
                break

        best = _polish(sp, best, cfg, proj)
    except EvaluationError as exc:
        best.warning = f"evaluation failed mid-run: {exc}"
    return best


def _polish(sp: StandardProblem, best: MeritState, cfg: PgdConfig, proj) -> MeritState:
    """Gauss-Newton steps on the violated nonlinear constraints."""
    state = best
    for _ in range(cfg.polish_iters):
        total = state.violations.sum()
        if total <= 1e-12:
            break
        step = np.zeros_like(state.x)
        for con, v in zip(sp.nonlinear, state.violations):
            if v <= 0.0:
                continue
            value = con.value(state.x)
            grad = con.grad(state.x)
            nrm2 = float(grad @ grad)
            if nrm2 < 1e-18:
                continue
            step -= (value / nrm2) * grad
        if not np.any(step):
            break
        damp = 1.0
        improved = None
        for _ in range(12):
            try:
                cand_x = proj(state.x + damp * step)
                cand = merit_state(sp, cand_x, cfg.penalty)
            except (EvaluationError, ProjectionStall):
                damp *= 0.5
                continue
            if cand.violations.sum() < total - 1e-15:
                improved = cand
                break
            damp *= 0.5
        if improved is None:
            break
        state = improved
        if state.merit < best.merit:
            best = state
    return best
