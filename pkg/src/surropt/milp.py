"""Dense two-phase simplex and branch-and-bound, sized for desk-scale models.

The LP core shifts variables to nonnegative form, turns finite upper bounds
into rows, and runs a tableau simplex with a Dantzig entering rule that
falls back to Bland's rule when the objective stalls. Branch and bound uses
best-bound node selection, most-fractional branching, and a root rounding
heuristic. An LP-format writer/reader provides the seam for external solvers
(see GOML_EXTERNAL_SOLVER_CMD in the README).
"""

from __future__ import annotations

import heapq
import math
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalFailure

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
INT_TOL = 1e-6
EXTERNAL_SOLVER_ENV = "GOML_EXTERNAL_SOLVER_CMD"


@dataclass
class LpProblem:
    """min c @ x + const  s.t.  rows @ x (sense) rhs,  lower <= x <= upper."""

    c: np.ndarray
    rows: np.ndarray
    senses: list
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    const: float = 0.0
    minimize: bool = True

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.rows.shape[0] != self.rhs.shape[0] or len(self.senses) != self.rhs.shape[0]:
            raise ValueError("row/sense/rhs sizes disagree")


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None


def solve_lp(lp: LpProblem, max_pivots: Optional[int] = None) -> LpSolution:
    """Primal simplex on the tableau; Bland's rule engages on stalls.

    Both phase cost rows live inside the tableau, so reduced costs update
    with the same vectorized elimination as the constraint rows.
    """
    n = lp.c.shape[0]
    sign = 1.0 if lp.minimize else -1.0
    c_orig = sign * lp.c
    lower, upper = lp.lower, lp.upper
    if np.any(lower > upper + 1e-12):
        return LpSolution(status="infeasible")

    # Shift every variable to t >= 0. Finite lower: x = lo + t. Infinite lower
    # with finite upper: x = hi - t. Free: x = t_plus - t_minus.
    finite_lo = np.isfinite(lower)
    finite_hi = np.isfinite(upper)
    src = []        # original variable per generated column
    col_sign = []   # +1 shift / -1 mirror, free vars contribute both
    col_of = []     # per original var: (kind, col indices..., base)
    ub_rows = []    # (col, span) rows t_col <= span
    for j in range(n):
        if finite_lo[j]:
            col_of.append(("shift", len(src), lower[j]))
            if finite_hi[j]:
                ub_rows.append((len(src), upper[j] - lower[j]))
            src.append(j)
            col_sign.append(1.0)
        elif finite_hi[j]:
            col_of.append(("mirror", len(src), upper[j]))
            src.append(j)
            col_sign.append(-1.0)
        else:
            col_of.append(("free", len(src), len(src) + 1))
            src.extend((j, j))
            col_sign.extend((1.0, -1.0))
    src = np.array(src, dtype=int)
    col_sign = np.array(col_sign)
    ncols = len(src)

    base = np.where(finite_lo, lower, 0.0)
    base = np.where(~finite_lo & finite_hi, upper, base)
    m_user = lp.rows.shape[0]
    m = m_user + len(ub_rows)
    A = np.zeros((m, ncols))
    b = np.zeros(m)
    if m_user:
        A[:m_user] = lp.rows[:, src] * col_sign
        b[:m_user] = lp.rhs - lp.rows @ base
    senses = list(lp.senses)
    for k, (col, span) in enumerate(ub_rows):
        A[m_user + k, col] = 1.0
        b[m_user + k] = span
        senses.append("<=")

    # Objective in shifted coordinates; constants are irrelevant here because
    # the reported objective is recomputed from x in original coordinates.
    c = c_orig[src] * col_sign

    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    for i in np.nonzero(flip)[0]:
        if senses[i] == "<=":
            senses[i] = ">="
        elif senses[i] == ">=":
            senses[i] = "<="

    extra = []
    for i in range(m):
        if senses[i] == "<=":
            extra.append((i, 1.0, "slack"))
        elif senses[i] == ">=":
            extra.append((i, -1.0, "slack"))
            extra.append((i, 1.0, "art"))
        else:
            extra.append((i, 1.0, "art"))
    total = ncols + len(extra)
    art_cols = []

    # tableau rows: m constraints, then the phase-1 and phase-2 cost rows
    T = np.zeros((m + 2, total + 1))
    T[:m, :ncols] = A
    T[:m, -1] = b
    basis = [-1] * m
    col = ncols
    for i, coef, kind in extra:
        T[i, col] = coef
        if kind == "slack":
            if coef > 0:
                basis[i] = col
        else:
            art_cols.append(col)
            basis[i] = col
        col += 1
    if any(idx == -1 for idx in basis):
        raise NumericalFailure("row without initial basis column")

    R1, R2 = m, m + 1
    T[R2, :ncols] = c
    if art_cols:
        T[R1, art_cols] = 1.0
    # eliminate the initial basic columns from both cost rows
    for i in range(m):
        for row in (R1, R2):
            coef = T[row, basis[i]]
            if coef != 0.0:
                T[row] -= coef * T[i]

    budget = max_pivots if max_pivots is not None else 20000 + 60 * (m + total)
    pivots = 0
    work = np.empty_like(T)
    ratios = np.empty(m)
    rhs_col = T[:m, -1]

    def run_phase(cost_row: int, allowed: int):
        """Pivot until the given cost row is optimal over columns < allowed."""
        nonlocal pivots
        stall = 0
        bland = False
        while True:
            z = T[cost_row, :allowed]
            if bland:
                neg = np.nonzero(z < -PIVOT_TOL)[0]
                if neg.size == 0:
                    return "optimal"
                q = int(neg[0])
            else:
                q = int(np.argmin(z))
                if z[q] >= -PIVOT_TOL:
                    return "optimal"
            colv = T[:m, q]
            ok = colv > PIVOT_TOL
            if not ok.any():
                return "unbounded"
            np.divide(rhs_col, colv, out=ratios, where=ok)
            ratios[~ok] = np.inf
            p = int(np.argmin(ratios))
            if bland:
                # Bland needs the smallest basis index among ratio ties
                tie = np.nonzero(ratios <= ratios[p] + 1e-12)[0]
                if tie.size > 1:
                    p = int(min(tie, key=lambda i: basis[i]))
            prev_obj = T[cost_row, -1]
            piv = T[p, q]
            T[p] /= piv
            colq = T[:, q].copy()
            colq[p] = 0.0
            row_p = T[p]
            np.multiply(colq[:, None], row_p[None, :], out=work)
            np.subtract(T, work, out=T)
            basis[p] = q
            if T[cost_row, -1] > prev_obj + 1e-12:
                stall = 0
            else:
                stall += 1
                if stall > 200:
                    bland = True
            pivots += 1
            if pivots > budget:
                raise NumericalFailure("pivot budget exceeded")

    if art_cols:
        status = run_phase(R1, total)
        if status == "unbounded":
            raise NumericalFailure("phase-1 LP unbounded")
        if -T[R1, -1] > FEAS_TOL:
            return LpSolution(status="infeasible")
        # Drive remaining artificials out of the basis where possible.
        art_set = set(art_cols)
        art_bound = min(art_cols)
        for i in range(m):
            if basis[i] in art_set:
                row = T[i, :art_bound]
                cands = np.nonzero(np.abs(row) > 1e-8)[0]
                if cands.size:
                    q = int(cands[0])
                    piv = T[i, q]
                    T[i] /= piv
                    colq = T[:, q].copy()
                    colq[i] = 0.0
                    T -= np.outer(colq, T[i])
                    basis[i] = q
        # Freeze leftover artificials (degenerate rows) at zero.
        T[:, art_cols] = 0.0

    status = run_phase(R2, total)
    if status == "unbounded":
        return LpSolution(status="unbounded")

    tvals = np.zeros(total)
    for i in range(m):
        tvals[basis[i]] = T[i, -1]
    x = np.zeros(n)
    for j in range(n):
        kind = col_of[j]
        if kind[0] == "shift":
            x[j] = kind[2] + tvals[kind[1]]
        elif kind[0] == "mirror":
            x[j] = kind[2] - tvals[kind[1]]
        else:
            x[j] = tvals[kind[1]] - tvals[kind[2]]
    objective = float(lp.c @ x) + lp.const
    return LpSolution(status="optimal", x=x, objective=objective)


# ---------------------------------------------------------------------------
# MILP model
# ---------------------------------------------------------------------------

class MilpModel:
    """Mixed-integer linear model built incrementally by the encoder."""

    def __init__(self, name: str = ""):
        self.name = name
        self.var_names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.integral: list[bool] = []
        self.row_coeffs: list[dict[int, float]] = []
        self.row_senses: list[str] = []
        self.row_rhs: list[float] = []
        self.row_names: list[str] = []
        self.obj: dict[int, float] = {}
        self.obj_const: float = 0.0
        self.registry: dict = {}

    # -- construction ------------------------------------------------------
    def add_var(self, name: str, lower: float, upper: float, integral: bool = False) -> int:
        self.var_names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.integral.append(bool(integral))
        return len(self.var_names) - 1

    def add_binary(self, name: str) -> int:
        return self.add_var(name, 0.0, 1.0, integral=True)

    def add_row(self, coeffs: dict[int, float], sense: str, rhs: float, name: str = "") -> int:
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"bad sense {sense!r}")
        self.row_coeffs.append({int(k): float(v) for k, v in coeffs.items() if v != 0.0})
        self.row_senses.append(sense)
        self.row_rhs.append(float(rhs))
        self.row_names.append(name)
        return len(self.row_rhs) - 1

    def add_objective_term(self, idx: int, coef: float) -> None:
        self.obj[idx] = self.obj.get(idx, 0.0) + float(coef)

    # -- views --------------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_rhs)

    def integer_indices(self) -> list[int]:
        return [j for j, flag in enumerate(self.integral) if flag]

    def _dense_parts(self):
        """Dense objective/rows, cached; invalidated by any later mutation."""
        key = (self.n_vars, self.n_rows, tuple(sorted(self.obj.items())))
        cached = getattr(self, "_dense_cache", None)
        if cached is not None and cached[0] == key:
            return cached[1]
        n = self.n_vars
        c = np.zeros(n)
        for j, v in self.obj.items():
            c[j] = v
        rows = np.zeros((self.n_rows, n))
        for i, coeffs in enumerate(self.row_coeffs):
            for j, v in coeffs.items():
                rows[i, j] = v
        parts = (c, rows, np.array(self.row_rhs, dtype=float))
        self._dense_cache = (key, parts)
        return parts

    def to_lp(self, lower=None, upper=None) -> LpProblem:
        c, rows, rhs = self._dense_parts()
        return LpProblem(
            c=c,
            rows=rows,
            senses=list(self.row_senses),
            rhs=rhs,
            lower=np.array(self.lower if lower is None else lower, dtype=float),
            upper=np.array(self.upper if upper is None else upper, dtype=float),
            const=self.obj_const,
        )

    def row_residuals(self, x) -> np.ndarray:
        """Per-row violation of the solution (0 when satisfied)."""
        out = np.zeros(self.n_rows)
        for i, coeffs in enumerate(self.row_coeffs):
            lhs = sum(v * x[j] for j, v in coeffs.items())
            if self.row_senses[i] == "<=":
                out[i] = max(0.0, lhs - self.row_rhs[i])
            elif self.row_senses[i] == ">=":
                out[i] = max(0.0, self.row_rhs[i] - lhs)
            else:
                out[i] = abs(lhs - self.row_rhs[i])
        return out


@dataclass
class MilpSolution:
    status: str  # optimal | infeasible | unbounded | time_limit
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    bound: Optional[float] = None
    gap: Optional[float] = None
    nodes: int = 0


def solve_milp(
    model: MilpModel,
    time_limit: Optional[float] = None,
    gap_tol: float = 1e-6,
    node_limit: int = 1_000_000,
) -> MilpSolution:
    """Branch and bound with best-bound selection and most-fractional branching."""
    start = time.monotonic()
    int_idx = model.integer_indices()
    lower = np.array(model.lower, dtype=float)
    upper = np.array(model.upper, dtype=float)

    def out_of_time() -> bool:
        return time_limit is not None and time.monotonic() - start > time_limit

    root = solve_lp(model.to_lp(lower, upper))
    if root.status == "infeasible":
        return MilpSolution(status="infeasible", nodes=1)
    if root.status == "unbounded":
        return MilpSolution(status="unbounded", nodes=1)

    def fractional(x) -> Optional[int]:
        worst, worst_j = INT_TOL, None
        for j in int_idx:
            dist = abs(x[j] - round(x[j]))
            if dist > worst:
                worst, worst_j = dist, j
        return worst_j

    def snap(x) -> np.ndarray:
        out = x.copy()
        for j in int_idx:
            out[j] = round(out[j])
        return out

    incumbent_x = None
    incumbent_obj = math.inf
    nodes_solved = 1

    j0 = fractional(root.x)
    if j0 is None:
        x = snap(root.x)
        return MilpSolution(
            status="optimal", x=x, objective=root.objective,
            bound=root.objective, gap=0.0, nodes=1,
        )

    # Diving heuristic: repeatedly fix the most fractional integer variable
    # at its rounded value; a plain all-at-once rounding often breaks the
    # one-hot rows coming out of tree encodings.
    dive_lo, dive_hi = lower.copy(), upper.copy()
    dive_x, dive_obj = root.x, root.objective
    for _ in range(min(len(int_idx), 25)):
        j = fractional(dive_x)
        if j is None:
            break
        near = float(np.clip(round(dive_x[j]), dive_lo[j], dive_hi[j]))
        far = math.floor(dive_x[j]) if near > dive_x[j] else math.ceil(dive_x[j])
        far = float(np.clip(far, dive_lo[j], dive_hi[j]))
        dived = None
        for candidate in dict.fromkeys((near, far)):
            trial_lo = _with(dive_lo, j, candidate)
            trial_hi = _with(dive_hi, j, candidate)
            trial = solve_lp(model.to_lp(trial_lo, trial_hi))
            nodes_solved += 1
            if trial.status == "optimal":
                dive_lo, dive_hi = trial_lo, trial_hi
                dived = trial
                break
        if dived is None:
            dive_x = None
            break
        dive_x, dive_obj = dived.x, dived.objective
    if dive_x is not None and fractional(dive_x) is None:
        incumbent_x = snap(dive_x)
        incumbent_obj = dive_obj

    counter = 0
    heap = [(root.objective, counter, lower, upper, root.x)]
    best_bound = root.objective
    status = "optimal"

    while heap:
        if out_of_time() or nodes_solved >= node_limit:
            status = "time_limit"
            break
        node_bound, _, lo, hi, x_lp = heapq.heappop(heap)
        best_bound = node_bound
        if incumbent_x is not None and node_bound >= incumbent_obj - gap_tol * max(1.0, abs(incumbent_obj)):
            best_bound = incumbent_obj
            break
        j = fractional(x_lp)
        if j is None:
            if node_bound < incumbent_obj:
                incumbent_obj, incumbent_x = node_bound, snap(x_lp)
            continue
        floor_v = math.floor(x_lp[j] + INT_TOL)
        for child_lo, child_hi in (
            (lo, _with(hi, j, float(floor_v))),
            (_with(lo, j, float(floor_v + 1)), hi),
        ):
            if child_lo[j] > child_hi[j] + 1e-12:
                continue
            sol = solve_lp(model.to_lp(child_lo, child_hi))
            nodes_solved += 1
            if sol.status != "optimal":
                continue
            if incumbent_x is not None and sol.objective >= incumbent_obj - gap_tol * max(1.0, abs(incumbent_obj)):
                continue
            if fractional(sol.x) is None:
                if sol.objective < incumbent_obj:
                    incumbent_obj, incumbent_x = sol.objective, snap(sol.x)
            else:
                counter += 1
                heapq.heappush(heap, (sol.objective, counter, child_lo, child_hi, sol.x))

    if incumbent_x is None:
        if status == "time_limit":
            return MilpSolution(status="time_limit", bound=best_bound, nodes=nodes_solved)
        return MilpSolution(status="infeasible", nodes=nodes_solved)

    if heap and status != "time_limit":
        best_bound = min(best_bound, min(entry[0] for entry in heap))
    if not heap and status == "optimal":
        best_bound = incumbent_obj if best_bound > incumbent_obj else best_bound
        best_bound = min(best_bound, incumbent_obj)
    gap = abs(incumbent_obj - best_bound) / max(1.0, abs(incumbent_obj))
    return MilpSolution(
        status=status if status == "time_limit" else "optimal",
        x=incumbent_x,
        objective=incumbent_obj,
        bound=best_bound,
        gap=gap,
        nodes=nodes_solved,
    )


def _with(arr: np.ndarray, j: int, value: float) -> np.ndarray:
    out = arr.copy()
    out[j] = value
    return out


# ---------------------------------------------------------------------------
# LP-format export / import and the external solver seam
# ---------------------------------------------------------------------------

def _canon_name(model: MilpModel, j: int) -> str:
    return (f"z{j}" if model.integral[j] else f"x{j}")


def export_lp_file(model: MilpModel, path: str) -> None:
    """Write the model in LP text format with deterministic names x<j>/z<j>."""
    lines = ["\\ surropt model" + (f": {model.name}" if model.name else "")]
    lines.append("Minimize")
    terms = []
    for j in sorted(model.obj):
        v = model.obj[j]
        if v == 0.0:
            continue
        terms.append(f"{'+' if v >= 0 else '-'} {abs(v)!r} {_canon_name(model, j)}")
    if model.obj_const:
        terms.append(f"{'+' if model.obj_const >= 0 else '-'} {abs(model.obj_const)!r}")
    if not terms:
        terms = ["+ 0"]
    lines.append(" obj: " + " ".join(terms).lstrip("+ "))
    lines.append("Subject To")
    for i, coeffs in enumerate(model.row_coeffs):
        terms = []
        for j in sorted(coeffs):
            v = coeffs[j]
            terms.append(f"{'+' if v >= 0 else '-'} {abs(v)!r} {_canon_name(model, j)}")
        body = " ".join(terms).lstrip("+ ") if terms else "0"
        lines.append(f" c{i}: {body} {model.row_senses[i]} {model.row_rhs[i]!r}")
    lines.append("Bounds")
    for j in range(model.n_vars):
        lo, hi = model.lower[j], model.upper[j]
        nm = _canon_name(model, j)
        if not math.isfinite(lo) and not math.isfinite(hi):
            lines.append(f" {nm} free")
        else:
            left = "-inf" if not math.isfinite(lo) else repr(lo)
            right = "+inf" if not math.isfinite(hi) else repr(hi)
            lines.append(f" {left} <= {nm} <= {right}")
    binaries = [j for j in range(model.n_vars) if model.integral[j] and model.lower[j] == 0.0 and model.upper[j] == 1.0]
    generals = [j for j in range(model.n_vars) if model.integral[j] and j not in set(binaries)]
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(_canon_name(model, j) for j in binaries))
    if generals:
        lines.append("Generals")
        lines.append(" " + " ".join(_canon_name(model, j) for j in generals))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_lp_file(path: str) -> MilpModel:
    """Parse files produced by export_lp_file back into a model."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = [ln.strip() for ln in fh]
    lines = [ln for ln in raw if ln and not ln.startswith("\\")]
    section = None
    obj_tokens: list[str] = []
    rows: list[tuple[str, str, float, str]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: set[str] = set()
    generals: set[str] = set()
    for ln in lines:
        low = ln.lower()
        if low in ("minimize", "maximize"):
            section = "obj"
            continue
        if low == "subject to":
            section = "rows"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low == "binaries":
            section = "bin"
            continue
        if low == "generals":
            section = "gen"
            continue
        if low == "end":
            break
        if section == "obj":
            body = ln.split(":", 1)[1] if ":" in ln else ln
            obj_tokens.extend(body.split())
        elif section == "rows":
            name, body = (ln.split(":", 1) + [""])[:2] if ":" in ln else ("", ln)
            for sense in ("<=", ">=", "="):
                if f" {sense} " in body:
                    lhs, rhs = body.rsplit(f" {sense} ", 1)
                    rows.append((name.strip(), lhs.strip(), float(rhs), sense))
                    break
            else:
                raise ValueError(f"row without sense: {ln}")
        elif section == "bounds":
            if ln.endswith(" free"):
                bounds[ln.split()[0]] = (-math.inf, math.inf)
            else:
                parts = ln.split("<=")
                lo = -math.inf if "inf" in parts[0] else float(parts[0])
                nm = parts[1].strip()
                hi = math.inf if "inf" in parts[2] else float(parts[2])
                bounds[nm] = (lo, hi)
        elif section == "bin":
            binaries.update(ln.split())
        elif section == "gen":
            generals.update(ln.split())

    names = sorted(bounds, key=lambda nm: int(nm[1:]))
    model = MilpModel()
    index = {}
    for nm in names:
        lo, hi = bounds[nm]
        index[nm] = model.add_var(nm, lo, hi, integral=(nm in binaries or nm in generals))

    def parse_terms(tokens):
        coeffs: dict[int, float] = {}
        const = 0.0
        sign = 1.0
        pending: Optional[float] = None
        for tok in tokens:
            if tok == "+":
                if pending is not None:
                    const += sign * pending
                    pending = None
                sign = 1.0
            elif tok == "-":
                if pending is not None:
                    const += sign * pending
                    pending = None
                sign = -1.0
            elif tok in index:
                v = pending if pending is not None else 1.0
                coeffs[index[tok]] = coeffs.get(index[tok], 0.0) + sign * v
                pending = None
                sign = 1.0
            else:
                if pending is not None:
                    const += sign * pending
                    sign = 1.0
                pending = float(tok)
        if pending is not None:
            const += sign * pending
        return coeffs, const

    coeffs, const = parse_terms(obj_tokens)
    model.obj = coeffs
    model.obj_const = const
    for name, lhs, rhs, sense in rows:
        row, row_const = parse_terms(lhs.split())
        model.add_row(row, sense, rhs - row_const, name=name)
    return model


def models_equal(a: MilpModel, b: MilpModel, tol: float = 0.0) -> bool:
    if a.n_vars != b.n_vars or a.n_rows != b.n_rows:
        return False
    for j in range(a.n_vars):
        if a.integral[j] != b.integral[j]:
            return False
        if not (_close(a.lower[j], b.lower[j], tol) and _close(a.upper[j], b.upper[j], tol)):
            return False
    if set(a.obj) != set(b.obj) or not _close(a.obj_const, b.obj_const, tol):
        return False
    for j in a.obj:
        if not _close(a.obj[j], b.obj[j], tol):
            return False
    for i in range(a.n_rows):
        if a.row_senses[i] != b.row_senses[i] or not _close(a.row_rhs[i], b.row_rhs[i], tol):
            return False
        if set(a.row_coeffs[i]) != set(b.row_coeffs[i]):
            return False
        for j in a.row_coeffs[i]:
            if not _close(a.row_coeffs[i][j], b.row_coeffs[i][j], tol):
                return False
    return True


def _close(a: float, b: float, tol: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol


def solve_with_external(model: MilpModel, command: str, time_limit=None) -> MilpSolution:
    """Run an external MILP solver via the documented two-file protocol.

    The command receives the LP file path and a solution file path. The
    solution file starts with ``status <word>`` and ``objective <value>``
    lines followed by ``<name> <value>`` pairs using the canonical names from
    the LP file.
    """
    with tempfile.TemporaryDirectory(prefix="surropt_ext_") as tmp:
        lp_path = os.path.join(tmp, "model.lp")
        sol_path = os.path.join(tmp, "model.sol")
        export_lp_file(model, lp_path)
        argv = shlex.split(command) + [lp_path, sol_path]
        subprocess.run(argv, check=True, timeout=time_limit)
        status = "infeasible"
        objective = None
        values: dict[str, float] = {}
        with open(sol_path, "r", encoding="utf-8") as fh:
            for ln in fh:
                parts = ln.split()
                if not parts:
                    continue
                if parts[0] == "status":
                    status = parts[1]
                elif parts[0] == "objective":
                    objective = float(parts[1])
                else:
                    values[parts[0]] = float(parts[1])
        if status not in ("optimal", "time_limit") or objective is None:
            return MilpSolution(status=status, nodes=0)
        x = np.zeros(model.n_vars)
        for j in range(model.n_vars):
            x[j] = values.get(_canon_name(model, j), 0.0)
        return MilpSolution(status=status, x=x, objective=objective, bound=objective, gap=0.0)


def solve(model: MilpModel, time_limit=None, gap_tol: float = 1e-6, solver: str = "builtin") -> MilpSolution:
    """Dispatch between the built-in solver and the external seam."""
    if solver == "external":
        command = os.environ.get(EXTERNAL_SOLVER_ENV)
        if not command:
            raise ValueError(f"external solver requested but {EXTERNAL_SOLVER_ENV} is unset")
        return solve_with_external(model, command, time_limit=time_limit)
    if solver != "builtin":
        raise ValueError(f"unknown solver {solver!r}")
    return solve_milp(model, time_limit=time_limit, gap_tol=gap_tol)
