"""Dense two-phase simplex over box-bounded polytopes, plus exact leaf checks.

The solver replaces an external LP dependency. It uses Bland's anti-cycling
pivot rule throughout, so identical inputs always take identical pivot
sequences. Problems here are always box-bounded, so no unbounded status
exists; a failed pivot or hitting the iteration cap raises SolverFailure
rather than returning a wrong verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .bound import ConstraintSeq, preactivation_bounds
from .model import RELU, Network
from .specs import Specification, is_counterexample

FEASIBILITY_TOL = 1e-7
PIVOT_TOL = 1e-9


class LpError(ValueError):
    """Dimension mismatch in LP construction."""


class SolverFailure(RuntimeError):
    """Numerical breakdown; surfaced instead of a possibly wrong verdict."""


class LeafPreconditionError(ValueError):
    """exact_leaf_check called with an ambiguous neuron left unfixed."""


@dataclass(frozen=True)
class LinearProgram:
    """minimize objective . x  subject to  coeffs . x <= rhs per row and
    var_lower <= x <= var_upper (finite)."""

    objective: np.ndarray
    constraints: tuple  # of (coeffs, rhs) pairs
    var_lower: np.ndarray
    var_upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=np.float64)
        lo = np.asarray(self.var_lower, dtype=np.float64)
        hi = np.asarray(self.var_upper, dtype=np.float64)
        n = c.shape[0]
        if lo.shape != (n,) or hi.shape != (n,):
            raise LpError("bound vectors must match objective length")
        if np.any(lo > hi):
            raise LpError("var_lower > var_upper")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise LpError("box bounds must be finite")
        rows = []
        for coeffs, rhs in self.constraints:
            a = np.asarray(coeffs, dtype=np.float64)
            if a.shape != (n,):
                raise LpError(f"constraint row shape {a.shape}, expected ({n},)")
            rows.append((a, float(rhs)))
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraints", tuple(rows))
        object.__setattr__(self, "var_lower", lo)
        object.__setattr__(self, "var_upper", hi)

    @property
    def dim(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True)
class LpResult:
    status: str  # "optimal" | "infeasible"
    x: np.ndarray | None = None
    value: float | None = None


def solve(lp: LinearProgram) -> LpResult:
    """Global minimum over the polytope, or infeasible."""
    n = lp.dim
    lo, hi = lp.var_lower, lp.var_upper
    ub = hi - lo

    # shift x = lo + x', x' >= 0; box uppers become ordinary rows
    m_user = len(lp.constraints)
    G = np.zeros((m_user + n, n))
    h = np.zeros(m_user + n)
    for i, (a, rhs) in enumerate(lp.constraints):
        G[i] = a
        h[i] = rhs - a @ lo
    G[m_user:] = np.eye(n)
    h[m_user:] = ub

    m = G.shape[0]
    neg = h < 0.0
    n_art = int(np.count_nonzero(neg))
    num_cols = n + m + n_art
    T = np.zeros((m + 1, num_cols + 1))
    basis = np.empty(m, dtype=np.int64)

    art = n + m
    for i in range(m):
        sgn = -1.0 if neg[i] else 1.0
        T[i, :n] = sgn * G[i]
        T[i, n + i] = sgn
        T[i, num_cols] = sgn * h[i]
        if neg[i]:
            T[i, art] = 1.0
            basis[i] = art
            art += 1
        else:
            basis[i] = n + i

    # phase 1: drive the artificial variables to zero
    if n_art:
        T[m, n + m : num_cols] = 1.0
        for i in range(m):
            if basis[i] >= n + m:
                T[m, :] -= T[i, :]
        code = k.bland_pivot(T, basis, num_cols, PIVOT_TOL, _iter_cap(m, num_cols))
        if code != 0:
            raise SolverFailure(f"phase-1 pivot failure (code {code})")
        if -T[m, num_cols] > FEASIBILITY_TOL:
            return LpResult("infeasible")
        T, basis, num_cols = _drop_artificials(T, basis, n, m)
        m = basis.shape[0]

    # phase 2: original objective on the shifted variables
    T[m, :] = 0.0
    T[m, :n] = lp.objective
    for i in range(m):
        cb = T[m, basis[i]]
        if cb != 0.0:
            T[m, :] -= cb * T[i, :]
    code = k.bland_pivot(T, basis, num_cols, PIVOT_TOL, _iter_cap(m, num_cols))
    if code != 0:
        raise SolverFailure(f"phase-2 pivot failure (code {code})")

    x_shift = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            x_shift[basis[i]] = T[i, num_cols]
    x = lo + x_shift
    _validate(lp, x)
    return LpResult("optimal", x, float(lp.objective @ x))


def _iter_cap(rows: int, cols: int) -> int:
    return 2000 + 50 * (rows + cols)


def _drop_artificials(T, basis, n: int, m: int):
    """Pivot leftover artificials out of the basis; drop redundant rows and
    the artificial columns."""
    for i in range(m):
        if basis[i] < n + m:
            continue
        for j in range(n + m):
            if abs(T[i, j]) > PIVOT_TOL:
                piv = T[i, j]
                T[i, :] /= piv
                for r in range(T.shape[0]):
                    if r != i and T[r, j] != 0.0:
                        T[r, :] -= T[r, j] * T[i, :]
                basis[i] = j
                break
    keep_rows = [i for i in range(m) if basis[i] < n + m]
    num_cols = n + m
    rows = keep_rows + [T.shape[0] - 1]
    T2 = np.ascontiguousarray(
        np.hstack([T[np.ix_(rows, range(num_cols))], T[rows][:, [-1]]])
    )
    basis2 = np.ascontiguousarray(basis[keep_rows])
    return T2, basis2, num_cols


def _validate(lp: LinearProgram, x: np.ndarray) -> None:
    if np.any(x < lp.var_lower - FEASIBILITY_TOL) or np.any(x > lp.var_upper + FEASIBILITY_TOL):
        raise SolverFailure("solution violates box bounds beyond tolerance")
    for a, rhs in lp.constraints:
        if a @ x > rhs + FEASIBILITY_TOL:
            raise SolverFailure("solution violates a constraint beyond tolerance")


# -- exact resolution of fully phase-fixed sub-problems -----------------------

@dataclass(frozen=True)
class LeafResult:
    verified: bool
    witness: np.ndarray | None
    lp_calls: int


def exact_leaf_check(net: Network, s: Specification, gamma: ConstraintSeq,
                     domain: str = "linrelax") -> LeafResult:
    """Resolve a sub-problem where every ReLU phase is determined.

    Each phase must come from gamma or from stable pre-activation bounds
    under gamma ('domain' selects the analyzer those bounds come from). All
    pre-activations are then affine in the input, so each property
    constraint's margin minimum is one LP over the region box intersected
    with the phase half-spaces. An empty intersection or an all-nonnegative
    minimum verifies the leaf; otherwise the minimizer is a concrete
    counterexample (checked, never assumed).
    """
    s.check_dims(net)
    region = s.region
    preact = preactivation_bounds(net, region, gamma, domain)
    if preact is None:
        return LeafResult(True, None, 0)

    signs = gamma.sign_map(net)
    phases = np.empty(preact.shape[0], dtype=np.int64)
    for i in range(preact.shape[0]):
        if i in signs:
            phases[i] = signs[i]
        elif preact[i, 0] >= 0.0:
            phases[i] = 1
        elif preact[i, 1] <= 0.0:
            phases[i] = -1
        else:
            raise LeafPreconditionError(
                f"neuron {i} is ambiguous and not fixed by the constraint sequence"
            )

    # exact affine composition under the fixed phases; only the phases chosen
    # by gamma need constraint rows, stability of the rest is already implied
    # by the box plus those rows
    n = net.input_dim
    M = np.eye(n)
    c = np.zeros(n)
    rows: list[tuple[np.ndarray, float]] = []
    base = 0
    for layer in net.layers:
        M = layer.weights @ M
        c = layer.weights @ c + layer.bias
        if layer.activation == RELU:
            for u in range(layer.out_dim):
                g = base + u
                if g in signs:
                    if signs[g] == 1:
                        rows.append((-M[u].copy(), c[u]))  # pre-activation >= 0
                    else:
                        rows.append((M[u].copy(), -c[u]))  # pre-activation <= 0
                if phases[g] == -1:
                    M[u] = 0.0
                    c[u] = 0.0
            base += layer.out_dim
    constraints = tuple(rows)

    best = math.inf
    best_x = None
    lp_calls = 0
    for row, off in zip(s.property.coeffs, s.property.offsets):
        lp = LinearProgram(row @ M, constraints, region.lower, region.upper)
        res = solve(lp)
        lp_calls += 1
        if res.status == "infeasible":
            # all margin LPs share one feasible set; empty means empty leaf
            return LeafResult(True, None, lp_calls)
        total = res.value + float(row @ c + off)
        if total < best:
            best = total
            best_x = res.x
    if best >= 0.0:
        return LeafResult(True, None, lp_calls)
    if is_counterexample(net, s, best_x):
        return LeafResult(False, best_x, lp_calls)
    if best < -PIVOT_TOL:
        raise SolverFailure(
            f"leaf LP reports margin {best} but the minimizer is not a "
            "concrete counterexample"
        )
    return LeafResult(True, None, lp_calls)  # margin is zero within tolerance
