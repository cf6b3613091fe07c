"""Dense two-phase primal simplex with Bland's entering rule.

Kept deliberately small: the programs solved here have at most a few
dozen variables and constraints, so there is no tableau sparsity, no
revised form, no presolve. Equalities get artificial variables in
phase one; redundant equality rows surface as zero rows after phase one
and are dropped. Feasibility is declared when the phase-one objective
falls below `feas_tol`.

The solver exists so the occupation-measure program has an independent
code path from the convex-hull construction it is checked against; the
two are never allowed to share geometry code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NumericalFailure

# Reduced costs within _RC_TOL of zero count as zero; pivots smaller
# than _PIV_TOL are treated as structurally zero; rhs entries smaller
# than _RHS_TOL are rounding noise from degenerate pivots.
_RC_TOL = 1e-10
_PIV_TOL = 1e-11
_RHS_TOL = 1e-13


@dataclass(frozen=True)
class SimplexResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float | None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] = T[row] / T[row, col]
    piv = T[row]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] = T[i] - T[i, col] * piv
    basis[row] = col


def _bland_min(T: np.ndarray, basis: np.ndarray, active: np.ndarray, max_iter: int) -> str:
    """Minimize the cost row in place. Returns "optimal" or "unbounded".

    Entering column is the smallest-index active column with negative
    reduced cost (Bland). The leaving row is the minimum-ratio row with
    ties broken toward the largest pivot element, then the smallest
    basic index; rounding noise in the rhs is clamped to zero so a
    tiny-negative-over-tiny ratio cannot walk the basis infeasible.
    The iteration cap turns any residual cycling into an error.
    """
    m = T.shape[0] - 1
    for _ in range(max_iter):
        rhs = T[:m, -1]
        np.copyto(rhs, 0.0, where=np.abs(rhs) < _RHS_TOL)
        cost = T[-1, :-1]
        enter = -1
        for j in np.flatnonzero(active):
            if cost[j] < -_RC_TOL:
                enter = int(j)
                break
        if enter < 0:
            return "optimal"
        col = T[:m, enter]
        best = np.inf
        for i in range(m):
            if col[i] > _PIV_TOL:
                best = min(best, max(rhs[i], 0.0) / col[i])
        if not np.isfinite(best):
            return "unbounded"
        leave = -1
        window = 1e-12 + 1e-9 * best
        for i in range(m):
            a = col[i]
            if a > _PIV_TOL and max(rhs[i], 0.0) / a <= best + window:
                if leave < 0 or a > col[leave] or (a == col[leave] and basis[i] < basis[leave]):
                    leave = i
        if T[leave, -1] < 0.0:
            T[leave, -1] = 0.0
        _pivot(T, basis, leave, enter)
    raise NumericalFailure("simplex iteration limit exceeded")


def solve_simplex(
    c,
    A_eq=None,
    b_eq=None,
    A_ub=None,
    b_ub=None,
    feas_tol: float = 1e-9,
    max_iter: int | None = None,
) -> SimplexResult:
    """min c.x subject to A_eq x = b_eq, A_ub x <= b_ub, x >= 0."""
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = []
    rhs = []
    n_slack = 0 if A_ub is None else np.atleast_2d(A_ub).shape[0]
    if A_ub is not None:
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        b_ub = np.atleast_1d(np.asarray(b_ub, dtype=float))
        for i in range(A_ub.shape[0]):
            row = np.zeros(n + n_slack)
            row[:n] = A_ub[i]
            row[n + i] = 1.0
            rows.append(row)
            rhs.append(b_ub[i])
    if A_eq is not None:
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
        for i in range(A_eq.shape[0]):
            row = np.zeros(n + n_slack)
            row[:n] = A_eq[i]
            rows.append(row)
            rhs.append(b_eq[i])
    if not rows:
        raise ValueError("no constraints given")

    A = np.vstack(rows)
    b = np.asarray(rhs, dtype=float)
    neg = b < 0.0
    A[neg] *= -1.0
    b[neg] *= -1.0

    m, n_tot = A.shape
    if max_iter is None:
        max_iter = 200 * (m + n_tot + 10)

    # Phase one: artificial basis, minimize the sum of artificials.
    T = np.zeros((m + 1, n_tot + m + 1))
    T[:m, :n_tot] = A
    T[:m, n_tot : n_tot + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n_tot] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n_tot, n_tot + m)
    active = np.ones(n_tot + m, dtype=bool)

    status = _bland_min(T, basis, active, max_iter)
    if status != "optimal" or not np.all(np.isfinite(T)):
        raise NumericalFailure(f"phase-one simplex ended with status {status}")
    # the objective row accumulates rounding drift, so judge feasibility
    # by the artificial levels actually left in the basis
    phase1 = sum(max(float(T[i, -1]), 0.0) for i in range(m) if basis[i] >= n_tot)
    if phase1 > feas_tol:
        return SimplexResult("infeasible", None, None)

    # Drive artificials out of the basis; a row with no real pivot
    # candidate is a redundant constraint and is dropped.  Tableau rows
    # are never reordered, so row_ids keeps the map back to A.
    row_ids = np.arange(m)
    drop = []
    for i in range(m):
        if basis[i] >= n_tot:
            cand = -1
            for j in range(n_tot):
                if abs(T[i, j]) > _PIV_TOL:
                    cand = j
                    break
            if cand < 0:
                drop.append(i)
            else:
                _pivot(T, basis, i, cand)
    if drop:
        keep = [i for i in range(m) if i not in set(drop)]
        T = T[keep + [m]]
        basis = basis[keep]
        row_ids = row_ids[keep]
        m = len(keep)

    # Phase two on the original columns only.
    T2 = np.zeros((m + 1, n_tot + 1))
    T2[:m, :n_tot] = T[:m, :n_tot]
    T2[:m, -1] = T[:m, -1]
    cost = np.zeros(n_tot)
    cost[:n] = c
    T2[-1, :n_tot] = cost
    # reduce the cost row against the current basis
    for i in range(m):
        cb = cost[basis[i]]
        if cb != 0.0:
            T2[-1] -= cb * T2[i]
    active = np.ones(n_tot, dtype=bool)
    status = _bland_min(T2, basis, active, max_iter)
    if status == "unbounded":
        return SimplexResult("unbounded", None, None)

    x = np.zeros(n_tot)
    x[basis] = T2[:m, -1]

    # The tableau accumulates elimination error over many pivots while
    # the basis itself stays reliable, so re-solve the basic system from
    # the untouched constraint data and keep whichever levels satisfy
    # the kept rows better.
    xb = None
    if m > 0:
        try:
            xb = np.linalg.solve(A[row_ids][:, basis], b[row_ids])
        except np.linalg.LinAlgError:
            pass
    if xb is not None and np.all(np.isfinite(xb)):
        x_rep = np.zeros(n_tot)
        x_rep[basis] = xb
        res_tab = np.max(np.abs(A[row_ids] @ x - b[row_ids]))
        res_rep = np.max(np.abs(A[row_ids] @ x_rep - b[row_ids]))
        if res_rep <= res_tab and xb.min() > -1e-9:
            x = x_rep
    x = np.where(np.abs(x) < 1e-14, 0.0, x)
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("simplex produced non-finite solution")

    # audit against the original constraints; tableau arithmetic can
    # decay silently and a wrong "optimum" is worse than an error
    audit_tol = max(feas_tol, 1e-8)
    if x.min() < -audit_tol:
        raise NumericalFailure(f"simplex solution has negative entry {x.min():.3e}")
    if A_eq is not None:
        resid = float(np.max(np.abs(A_eq @ x[:n] - b_eq)))
        if resid > audit_tol * (1.0 + float(np.abs(b_eq).max())):
            raise NumericalFailure(f"simplex equality residual {resid:.3e}")
    if A_ub is not None:
        excess = float(np.max(A_ub @ x[:n] - b_ub))
        if excess > audit_tol * (1.0 + float(np.abs(b_ub).max())):
            raise NumericalFailure(f"simplex inequality excess {excess:.3e}")
    value = float(c @ x[:n])
    return SimplexResult("optimal", x[:n], value)
