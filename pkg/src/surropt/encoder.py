"""Compile trained surrogates into mixed-integer linear constraints.

Trees become one binary per leaf with big-M activated path rows, boosted
ensembles chain tree encodings through a weighted linking row, ReLU networks
use the standard per-neuron big-M activation encoding with interval-propagated
bounds, and linear models transcribe directly. Robust counterparts add a dual
norm of the coefficient-by-input elementwise product to every affected row,
linearized exactly for dual norms 1 and infinity. The assembled model carries
the original linear rows, one threshold row per surrogate, and optional
nonnegative relaxation variables penalized in the objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import UnsupportedNorm
from .learners import GbmEnsemble, LinearModel, Mlp, ObliqueTree, Surrogate
from .milp import MilpModel
from .model import EQUALITY_BAND, LinearObjective, StandardProblem

SPLIT_EPS_SCALE = 1e-6  # strict-side margin, scaled by the row norm
BIG_M_SAFETY = 1.01
BIG_M_FLOOR = 1.0


@dataclass
class RobustConfig:
    """Uncertainty radius and the norm of the coefficient uncertainty set.

    ``p`` names the uncertainty set's norm; rows are tightened with the dual
    norm q (p=1 -> q=inf, p=inf -> q=1). The conic q=2 case is only valid for
    LP-file export, never for the built-in solver.
    """

    rho: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")

    @property
    def q(self) -> float:
        if self.p == 1.0:
            return math.inf
        if math.isinf(self.p):
            return 1.0
        if self.p == 2.0:
            return 2.0
        raise UnsupportedNorm(f"no dual-norm rule for p={self.p}")

    @property
    def active(self) -> bool:
        return self.rho > 0.0


@dataclass
class RelaxConfig:
    penalty: float

    def __post_init__(self):
        if self.penalty <= 0:
            raise ValueError("relaxation penalty must be positive")


@dataclass
class SurrogateEncoding:
    """Bookkeeping for one embedded surrogate."""

    output: Optional[int]          # model-output variable, None for a direct row
    threshold_rows: list
    relax_var: Optional[int] = None
    binaries: Optional[list] = None
    trees: Optional[list] = None   # per-tree encodings inside an ensemble


# ---------------------------------------------------------------------------
# Interval helpers
# ---------------------------------------------------------------------------

def affine_range(coeffs, lo, hi, const: float = 0.0):
    """Interval bounds of const + coeffs @ x over the box."""
    coeffs = np.asarray(coeffs, dtype=float)
    low = const + float(np.minimum(coeffs * lo, coeffs * hi).sum())
    high = const + float(np.maximum(coeffs * lo, coeffs * hi).sum())
    return low, high


def big_m_value(a, b: float, lo, hi) -> float:
    """Interval bound on |a @ x - b| over the box, padded and floored."""
    low, high = affine_range(a, lo, hi, -b)
    return max(BIG_M_FLOOR, BIG_M_SAFETY * max(abs(low), abs(high)))


def _norm_upper(a, lo, hi, q: float) -> float:
    mags = np.maximum(np.abs(np.asarray(a) * lo), np.abs(np.asarray(a) * hi))
    if math.isinf(q):
        return float(mags.max()) if len(mags) else 0.0
    return float(mags.sum())


def _split_eps(a) -> float:
    return SPLIT_EPS_SCALE * max(1.0, float(np.linalg.norm(a)))


# ---------------------------------------------------------------------------
# Norm linearization
# ---------------------------------------------------------------------------

def add_norm_var(m: MilpModel, a, cols, lo, hi, q: float, prefix: str) -> int:
    """Add t >= || a (*) x ||_q rows over the columns in ``cols``.

    The componentwise products a_k * x_k are affine, so the envelope is exact
    for q in {1, inf}: the smallest admissible t equals the norm.
    """
    a = np.asarray(a, dtype=float)
    nz = [k for k in range(len(a)) if a[k] != 0.0]
    t_up = BIG_M_SAFETY * _norm_upper(a, lo, hi, q) + 1e-9
    t = m.add_var(f"{prefix}_norm", 0.0, t_up, integral=False)
    if math.isinf(q):
        for k in nz:
            m.add_row({cols[k]: a[k], t: -1.0}, "<=", 0.0, name=f"{prefix}_ninf_p{k}")
            m.add_row({cols[k]: -a[k], t: -1.0}, "<=", 0.0, name=f"{prefix}_ninf_m{k}")
        return t
    if q == 1.0:
        s_vars = []
        for k in nz:
            s_up = BIG_M_SAFETY * max(abs(a[k] * lo[k]), abs(a[k] * hi[k])) + 1e-9
            s = m.add_var(f"{prefix}_abs{k}", 0.0, s_up, integral=False)
            m.add_row({cols[k]: a[k], s: -1.0}, "<=", 0.0, name=f"{prefix}_n1_p{k}")
            m.add_row({cols[k]: -a[k], s: -1.0}, "<=", 0.0, name=f"{prefix}_n1_m{k}")
            s_vars.append(s)
        m.add_row({**{s: 1.0 for s in s_vars}, t: -1.0}, "<=", 0.0, name=f"{prefix}_n1_sum")
        return t
    raise UnsupportedNorm(f"built-in solver cannot linearize q={q}")


# ---------------------------------------------------------------------------
# Family encodings
# ---------------------------------------------------------------------------

def encode_linear_model(model: LinearModel, task: str, m: MilpModel, cols, lo, hi,
                        robust: Optional[RobustConfig] = None, prefix: str = "lin",
                        relax_var: Optional[int] = None) -> SurrogateEncoding:
    """Regression adds an output variable; classification adds the margin row
    directly (robustified when requested)."""
    beta = np.asarray(model.beta, dtype=float)
    if task == "regressor":
        out_lo, out_hi = affine_range(beta, lo, hi, model.beta0)
        y = m.add_var(f"{prefix}_out", out_lo - 1.0, out_hi + 1.0, integral=False)
        coeffs = {cols[k]: beta[k] for k in range(len(beta)) if beta[k] != 0.0}
        coeffs[y] = -1.0
        m.add_row(coeffs, "=", -model.beta0, name=f"{prefix}_def")
        return SurrogateEncoding(output=y, threshold_rows=[])
    coeffs = {cols[k]: beta[k] for k in range(len(beta)) if beta[k] != 0.0}
    if robust is not None and robust.active:
        t = add_norm_var(m, beta, cols, lo, hi, robust.q, prefix)
        coeffs[t] = -robust.rho
    if relax_var is not None:
        coeffs[relax_var] = 1.0
    row = m.add_row(coeffs, ">=", -model.beta0, name=f"{prefix}_margin")
    return SurrogateEncoding(output=None, threshold_rows=[row], relax_var=relax_var)


def encode_tree(tree: ObliqueTree, task: str, m: MilpModel, cols, lo, hi,
                robust: Optional[RobustConfig] = None, prefix: str = "dt") -> SurrogateEncoding:
    """One binary per leaf, big-M deactivated path rows, and a linking row
    for the output value. Robust mode widens each split row by
    rho * ||a (*) x||_q on its restrictive side."""
    leaves = tree.leaves()
    zs = [m.add_binary(f"{prefix}_z{i}") for i in range(len(leaves))]
    m.add_row({z: 1.0 for z in zs}, "=", 1.0, name=f"{prefix}_onehot")

    values = [v for v, _ in leaves]
    y = m.add_var(f"{prefix}_out", min(values) - 1e-9, max(values) + 1e-9, integral=False)
    link = {z: values[i] for i, z in enumerate(zs)}
    link[y] = -1.0
    m.add_row(link, "=", 0.0, name=f"{prefix}_value")

    robust_on = robust is not None and robust.active
    norm_vars = {}  # split identity -> t variable

    def norm_var_for(a):
        key = id(a)
        if key not in norm_vars:
            norm_vars[key] = add_norm_var(m, a, cols, lo, hi, robust.q, f"{prefix}_s{len(norm_vars)}")
        return norm_vars[key]

    for i, (_, path) in enumerate(leaves):
        for j, (a, b, on_left) in enumerate(path):
            a = np.asarray(a, dtype=float)
            margin = robust.rho * _norm_upper(a, lo, hi, robust.q) if robust_on else 0.0
            M = big_m_value(a, b, lo, hi) + BIG_M_SAFETY * margin
            coeffs = {cols[k]: a[k] for k in range(len(a)) if a[k] != 0.0}
            if on_left:
                # a.x <= b + M(1-z), robust: a.x + rho||a*x||_q <= b + M(1-z)
                if robust_on:
                    coeffs[norm_var_for(a)] = robust.rho
                coeffs[zs[i]] = M
                m.add_row(coeffs, "<=", b + M, name=f"{prefix}_l{i}_{j}")
            else:
                # a.x >= b - M(1-z) + eps, robust: a.x - rho||a*x||_q >= ...
                if robust_on:
                    coeffs[norm_var_for(a)] = -robust.rho
                coeffs[zs[i]] = -M
                m.add_row(coeffs, ">=", b - M + _split_eps(a), name=f"{prefix}_r{i}_{j}")
    return SurrogateEncoding(output=y, threshold_rows=[], binaries=zs)


def encode_gbm(ens: GbmEnsemble, task: str, m: MilpModel, cols, lo, hi,
               robust: Optional[RobustConfig] = None, prefix: str = "gbm") -> SurrogateEncoding:
    """Encode every tree, then link y = base + sum of weighted tree outputs."""
    encodings = []
    for i, tree in enumerate(ens.trees):
        encodings.append(
            encode_tree(tree, "regressor", m, cols, lo, hi, robust=robust, prefix=f"{prefix}_t{i}")
        )
    lo_sum = ens.base + sum(
        w * (min(v for v, _ in t.leaves()) if t.leaves() else 0.0)
        for w, t in zip(ens.weights, ens.trees)
    )
    hi_sum = ens.base + sum(
        w * (max(v for v, _ in t.leaves()) if t.leaves() else 0.0)
        for w, t in zip(ens.weights, ens.trees)
    )
    y = m.add_var(f"{prefix}_out", lo_sum - 1e-6, hi_sum + 1e-6, integral=False)
    coeffs = {enc.output: w for enc, w in zip(encodings, ens.weights)}
    coeffs[y] = -1.0
    m.add_row(coeffs, "=", -ens.base, name=f"{prefix}_link")
    return SurrogateEncoding(output=y, threshold_rows=[], trees=encodings)


def encode_mlp(net: Mlp, task: str, m: MilpModel, cols, lo, hi,
               prefix: str = "mlp") -> SurrogateEncoding:
    """Standard big-M ReLU encoding with per-neuron interval bounds.

    Units that an interval pass proves always active get an equality row and
    no binary; provably inactive units pin to zero.
    """
    prev_cols = list(cols)
    prev_lo = np.asarray(lo, dtype=float).copy()
    prev_hi = np.asarray(hi, dtype=float).copy()
    binaries = []
    for layer_idx, (W, b) in enumerate(net.layers[:-1]):
        n_out = W.shape[0]
        new_cols = []
        new_lo = np.zeros(n_out)
        new_hi = np.zeros(n_out)
        for i in range(n_out):
            w = W[i]
            pre_lo, pre_hi = affine_range(w, prev_lo, prev_hi, float(b[i]))
            name = f"{prefix}_h{layer_idx}_{i}"
            wcoeffs = {prev_cols[k]: w[k] for k in range(len(w)) if w[k] != 0.0}
            if pre_hi <= 0.0:
                u = m.add_var(name, 0.0, 0.0, integral=False)
            elif pre_lo >= 0.0:
                u = m.add_var(name, pre_lo, pre_hi, integral=False)
                coeffs = dict(wcoeffs)
                coeffs[u] = coeffs.get(u, 0.0) - 1.0
                m.add_row(coeffs, "=", -float(b[i]), name=f"{name}_eq")
            else:
                u = m.add_var(name, 0.0, pre_hi, integral=False)
                z = m.add_binary(f"{name}_on")
                binaries.append(z)
                # u >= pre
                coeffs = dict(wcoeffs)
                coeffs[u] = coeffs.get(u, 0.0) - 1.0
                m.add_row(coeffs, "<=", -float(b[i]), name=f"{name}_ge")
                # u <= pre - pre_lo (1 - z)
                coeffs = {u: 1.0}
                for k, v in wcoeffs.items():
                    coeffs[k] = coeffs.get(k, 0.0) - v
                coeffs[z] = coeffs.get(z, 0.0) - pre_lo
                m.add_row(coeffs, "<=", float(b[i]) - pre_lo, name=f"{name}_ub1")
                # u <= pre_hi z
                m.add_row({u: 1.0, z: -pre_hi}, "<=", 0.0, name=f"{name}_ub2")
            new_cols.append(u)
            new_lo[i] = max(0.0, pre_lo)
            new_hi[i] = max(0.0, pre_hi)
        prev_cols, prev_lo, prev_hi = new_cols, new_lo, new_hi

    W, b = net.layers[-1]
    out_lo, out_hi = affine_range(W[0], prev_lo, prev_hi, float(b[0]))
    y = m.add_var(f"{prefix}_out", out_lo - 1e-6, out_hi + 1e-6, integral=False)
    coeffs = {prev_cols[k]: W[0][k] for k in range(W.shape[1]) if W[0][k] != 0.0}
    coeffs[y] = coeffs.get(y, 0.0) - 1.0
    m.add_row(coeffs, "=", -float(b[0]), name=f"{prefix}_outrow")
    return SurrogateEncoding(output=y, threshold_rows=[], binaries=binaries)


def robustify_linear(model: LinearModel, cfg: RobustConfig, m: MilpModel, cols, lo, hi,
                     prefix: str = "svc", relax_var: Optional[int] = None) -> SurrogateEncoding:
    """Robust margin row for a linear classifier (replaces the plain row)."""
    return encode_linear_model(
        model, "classifier", m, cols, lo, hi, robust=cfg, prefix=prefix, relax_var=relax_var
    )


# ---------------------------------------------------------------------------
# Unified assembly
# ---------------------------------------------------------------------------

ALWAYS_FEASIBLE = "always_feasible"
ALWAYS_INFEASIBLE = "always_infeasible"


def assemble(
    sp: StandardProblem,
    constraint_surrogates,
    objective_surrogate: Optional[Surrogate] = None,
    robust: Optional[RobustConfig] = None,
    relax: Optional[RelaxConfig] = None,
) -> MilpModel:
    """Build the unified approximation model.

    ``constraint_surrogates`` aligns with ``sp.nonlinear``; each entry is a
    Surrogate, ALWAYS_FEASIBLE (constraint dropped), or ALWAYS_INFEASIBLE
    (an unsatisfiable marker row that only relaxation can absorb). Equality
    constraints use a regressor surrogate held inside a small band around
    zero. With ``relax`` set, every surrogate rule gains a nonnegative slack
    penalized in the objective.
    """
    m = MilpModel(name=sp.name or "model")
    x_cols = [
        m.add_var(v.name or f"x{v.index}", v.lower, v.upper, integral=v.integral)
        for v in sp.vars
    ]
    for i, row in enumerate(sp.linear):
        coeffs = {x_cols[k]: row.coeffs[k] for k in range(sp.n) if row.coeffs[k] != 0.0}
        m.add_row(coeffs, row.sense, row.rhs, name=row.name or f"lin{i}")

    lo_all, hi_all = sp.box()
    relax_vars = []
    registry_entries = []

    for ci, (con, sur) in enumerate(zip(sp.nonlinear, constraint_surrogates)):
        if sur == ALWAYS_FEASIBLE:
            registry_entries.append({"kind": ALWAYS_FEASIBLE})
            continue
        u = None
        if relax is not None:
            u = m.add_var(f"u{ci}", 0.0, math.inf, integral=False)
            relax_vars.append(u)
        if sur == ALWAYS_INFEASIBLE:
            # no feasible sample was ever seen: 0 >= 1 unless relaxed
            coeffs = {} if u is None else {u: 1.0}
            row = m.add_row(coeffs, ">=", 1.0, name=f"c{ci}_nofeas")
            registry_entries.append({"kind": ALWAYS_INFEASIBLE, "relax": u, "rows": [row]})
            continue

        support = sorted(sur.support) if sur.support else sorted(con.support)
        cols = [x_cols[k] for k in support]
        lo = lo_all[support]
        hi = hi_all[support]
        prefix = f"c{ci}_{sur.family}"

        if con.sense == "=0":
            # regression surrogate pinned inside a band around zero
            enc = _encode_output(sur, m, cols, lo, hi, robust, prefix)
            rows = [
                m.add_row(_with_coef({enc.output: 1.0}, u, -1.0), "<=", EQUALITY_BAND, name=f"{prefix}_band_hi"),
                m.add_row(_with_coef({enc.output: 1.0}, u, 1.0), ">=", -EQUALITY_BAND, name=f"{prefix}_band_lo"),
            ]
            enc.threshold_rows = rows
            enc.relax_var = u
        elif sur.family == "svm" and sur.task == "classifier":
            enc = encode_linear_model(
                sur.model, "classifier", m, cols, lo, hi, robust=robust, prefix=prefix, relax_var=u
            )
        else:
            enc = _encode_output(sur, m, cols, lo, hi, robust, prefix)
            row = m.add_row(
                _with_coef({enc.output: 1.0}, u, 1.0), ">=", sur.threshold, name=f"{prefix}_rule"
            )
            enc.threshold_rows = [row]
            enc.relax_var = u
        registry_entries.append(
            {
                "kind": sur.family,
                "output": enc.output,
                "rows": enc.threshold_rows,
                "relax": u,
                "binaries": enc.binaries,
            }
        )

    obj_entry = None
    if isinstance(sp.objective, LinearObjective):
        for k in range(sp.n):
            if sp.objective.coeffs[k] != 0.0:
                m.add_objective_term(x_cols[k], float(sp.objective.coeffs[k]))
        m.obj_const = float(sp.objective.constant)
    else:
        if objective_surrogate is None:
            raise ValueError("nonlinear objective needs a regressor surrogate")
        support = sorted(objective_surrogate.support) or sorted(sp.objective.support)
        cols = [x_cols[k] for k in support]
        enc = _encode_output(
            objective_surrogate, m, cols, lo_all[support], hi_all[support], None, "obj"
        )
        m.add_objective_term(enc.output, 1.0)
        obj_entry = {"kind": objective_surrogate.family, "output": enc.output}

    if relax is not None:
        for u in relax_vars:
            m.add_objective_term(u, relax.penalty)

    m.registry = {
        "x_vars": x_cols,
        "constraints": registry_entries,
        "objective": obj_entry,
        "relax_vars": relax_vars,
    }
    return m


def _with_coef(coeffs: dict, var: Optional[int], coef: float) -> dict:
    if var is not None:
        coeffs = dict(coeffs)
        coeffs[var] = coef
    return coeffs


def _encode_output(sur: Surrogate, m, cols, lo, hi, robust, prefix) -> SurrogateEncoding:
    """Encode any family so that its model output lands in one variable."""
    if sur.family == "svm":
        return encode_linear_model(sur.model, "regressor", m, cols, lo, hi, prefix=prefix)
    if sur.family == "tree":
        return encode_tree(sur.model, sur.task, m, cols, lo, hi, robust=robust, prefix=prefix)
    if sur.family == "gbm":
        return encode_gbm(sur.model, sur.task, m, cols, lo, hi, robust=robust, prefix=prefix)
    if sur.family == "mlp":
        return encode_mlp(sur.model, sur.task, m, cols, lo, hi, prefix=prefix)
    raise ValueError(f"unknown family {sur.family!r}")


def fix_point(m: MilpModel, cols, values) -> None:
    """Pin selected variables with equality rows (used by fidelity checks)."""
    for col, v in zip(cols, values):
        m.add_row({col: 1.0}, "=", float(v), name=f"fix_{col}")


# ---------------------------------------------------------------------------
# Pointwise robust feasibility (no solver involved)
# ---------------------------------------------------------------------------

def _dual_norm(vec, q: float) -> float:
    vec = np.abs(np.asarray(vec, dtype=float))
    if math.isinf(q):
        return float(vec.max()) if vec.size else 0.0
    if q == 1.0:
        return float(vec.sum())
    return float(np.linalg.norm(vec, 2))


def robust_feasible(sur: Surrogate, x, cfg: Optional[RobustConfig]) -> bool:
    """Does point x satisfy the surrogate's (possibly robustified) rule?

    Mirrors the MILP encoding arithmetic: split rows shrink by the dual-norm
    term, so each tree admits at most its nominal leaf.
    """
    x = np.asarray(x, dtype=float)
    rho = cfg.rho if cfg is not None else 0.0
    q = cfg.q if (cfg is not None and cfg.active) else None

    def tree_leaf_robust(tree: ObliqueTree):
        node = tree.root
        while not node.is_leaf:
            a = node.a
            lhs = float(a @ x)
            shift = rho * _dual_norm(a * x, q) if q is not None else 0.0
            if lhs + shift <= node.b:
                node = node.left
            elif lhs - shift >= node.b + _split_eps(a):
                node = node.right
            else:
                return None  # robustly in neither side
        return float(node.value)

    if sur.family == "svm":
        margin = sur.model.predict_one(x)
        if q is not None:
            margin -= rho * _dual_norm(sur.model.beta * x, q)
        return margin >= sur.threshold
    if sur.family == "tree":
        leaf = tree_leaf_robust(sur.model)
        return leaf is not None and leaf >= sur.threshold
    if sur.family == "gbm":
        total = sur.model.base
        for w, tree in zip(sur.model.weights, sur.model.trees):
            leaf = tree_leaf_robust(tree)
            if leaf is None:
                return False
            total += w * leaf
        return total >= sur.threshold
    if sur.family == "mlp":
        return sur.model.predict_one(x) >= sur.threshold
    raise ValueError(f"unknown family {sur.family!r}")
