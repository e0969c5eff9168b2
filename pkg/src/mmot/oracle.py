"""Exact LP baseline for tiny instances.

The plan is flattened row-major. Marginal rows for axis 1 are all kept; the
last row of every later axis is dropped because it is implied by the others
and by the total mass carried in axis 1. That leaves m(n-1)+1 independent rows.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .regmot import MotInstance
from .report import NonConvergenceError

ORACLE_CAP = 4096
REDUCED_COST_TOL = 1e-10


@dataclass
class StandardFormLP:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    shape: tuple

    @property
    def rows(self) -> int:
        return self.A.shape[0]


@dataclass
class LPSolution:
    value: float
    x: np.ndarray
    status: str
    basis: list

    def plan(self, shape) -> np.ndarray:
        return self.x.reshape(shape)


def marginal_rows(n: int, m: int) -> np.ndarray:
    """All mn marginal-equality rows over the row-major flattening, axis-major order."""
    idx = np.indices((n,) * m).reshape(m, -1)
    A = np.zeros((m * n, n**m), dtype=np.int64)
    for k in range(m):
        A[k * n + idx[k], np.arange(n**m)] = 1
    return A


def kept_rows(n: int, m: int) -> list[int]:
    return list(range(n)) + [k * n + j for k in range(1, m) for j in range(n - 1)]


def build_lp(inst: MotInstance, cap: int = ORACLE_CAP) -> StandardFormLP:
    n, m = inst.n, inst.m
    if n**m > cap:
        raise ValueError(f"n^m = {n**m} exceeds the oracle cap {cap}")
    keep = kept_rows(n, m)
    A = marginal_rows(n, m)[keep]
    b = inst.marginals.reshape(-1)[keep].astype(np.float64)
    return StandardFormLP(A, b, inst.cost.reshape(-1).astype(np.float64), inst.cost.shape)


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0:
            T[i] -= T[i, col] * T[row]


def _bland(T, basis, cost_row, allowed, tol, max_pivots):
    """Minimize with Bland's rule on tableau T whose last row is the reduced-cost row."""
    for _ in range(max_pivots):
        red = T[cost_row, :-1]
        entering = next((j for j in allowed if red[j] < -tol), None)
        if entering is None:
            return "optimal"
        col = T[:cost_row, entering]
        ratios = [(T[i, -1] / col[i], basis[i], i) for i in range(cost_row) if col[i] > tol]
        if not ratios:
            return "unbounded"
        best = min(r[0] for r in ratios)
        # ties broken by the smallest basic index
        _, _, row = min(r for r in ratios if r[0] <= best + tol)
        _pivot(T, row, entering)
        basis[row] = entering
    return "stalled"


def simplex_solve(lp: StandardFormLP, tol: float = REDUCED_COST_TOL, max_pivots: int = 100000) -> LPSolution:
    """Two-phase primal simplex with Bland's anti-cycling rule.

    Returns
    -------
    LPSolution
        ``status`` is "optimal" when every reduced cost is >= -tol, otherwise
        "stalled" or "infeasible" with the best point found.
    """
    A = lp.A.astype(np.float64)
    b = lp.b.copy()
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    p, N = A.shape

    # phase 1: artificials N..N+p-1, objective = sum of artificials
    T = np.zeros((p + 1, N + p + 1))
    T[:p, :N] = A
    T[:p, N:N + p] = np.eye(p)
    T[:p, -1] = b
    T[p, :N] = -A.sum(axis=0)
    T[p, -1] = -b.sum()
    basis = list(range(N, N + p))
    status = _bland(T, basis, p, range(N + p), tol, max_pivots)
    if status != "optimal" or -T[p, -1] > 1e-9:
        x = _extract(T, basis, N)
        return LPSolution(float(lp.c @ x), x, "infeasible" if status == "optimal" else status, basis)

    # drive remaining artificials out of the basis where possible
    for i, v in enumerate(basis):
        if v >= N:
            j = next((j for j in range(N) if abs(T[i, j]) > tol), None)
            if j is not None:
                _pivot(T, i, j)
                basis[i] = j

    # phase 2 on the original columns
    T2 = np.zeros((p + 1, N + 1))
    T2[:p, :N] = T[:p, :N]
    T2[:p, -1] = T[:p, -1]
    T2[p, :N] = lp.c
    for i, v in enumerate(basis):
        if v < N:
            T2[p] -= lp.c[v] * T2[i]
    status = _bland(T2, basis, p, range(N), tol, max_pivots)
    x = _extract(T2, basis, N)
    return LPSolution(float(lp.c @ x), x, status, basis)


def _extract(T, basis, N):
    x = np.zeros(N)
    for i, v in enumerate(basis):
        if v < N:
            x[v] = T[i, -1]
    return np.maximum(x, 0.0)


def solve_mot(inst: MotInstance, cap: int = ORACLE_CAP) -> LPSolution:
    return simplex_solve(build_lp(inst, cap))


def _solve_exact(M, rhs):
    """Gauss-Jordan over Fractions; None if M is singular."""
    k = len(M)
    aug = [list(row) + [v] for row, v in zip(M, rhs)]
    for c in range(k):
        piv = next((r for r in range(c, k) if aug[r][c] != 0), None)
        if piv is None:
            return None
        aug[c], aug[piv] = aug[piv], aug[c]
        pv = aug[c][c]
        aug[c] = [v / pv for v in aug[c]]
        for r in range(k):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [a - f * bb for a, bb in zip(aug[r], aug[c])]
    return [aug[r][k] for r in range(k)]


def enumerate_bfs(lp: StandardFormLP, max_subsets: int = 2_000_000) -> tuple[Fraction, list[Fraction]]:
    """Minimum over all basic feasible solutions, computed in exact rationals.

    The rows are independent, so every basis has exactly ``rows`` columns.
    Cost and right-hand side are converted exactly from their float values.
    """
    p, N = lp.A.shape
    A = [[Fraction(int(v)) for v in row] for row in lp.A]
    b = [Fraction(float(v)) for v in lp.b]
    c = [Fraction(float(v)) for v in lp.c]
    best, best_x = None, None
    for count, cols in enumerate(itertools.combinations(range(N), p)):
        if count >= max_subsets:
            raise ValueError("basis enumeration budget exceeded")
        sub = [[A[i][j] for j in cols] for i in range(p)]
        xb = _solve_exact(sub, b)
        if xb is None or any(v < 0 for v in xb):
            continue
        val = sum(c[j] * v for j, v in zip(cols, xb))
        if best is None or val < best:
            best = val
            best_x = [Fraction(0)] * N
            for j, v in zip(cols, xb):
                best_x[j] = v
    if best is None:
        raise ValueError("no basic feasible solution")
    return best, best_x


def lp_dual_optimum_phi(inst: MotInstance, eta: float, tol: float = 1e-10,
                        max_iter: int = 10**6) -> float:
    """Reference value of the dual objective: greedy Sinkhorn run to a residue of ``tol``."""
    from .sinkhorn import multi_sinkhorn

    _, report = multi_sinkhorn(inst, eta, tol, max_iter=max_iter)
    if not report.converged:
        raise NonConvergenceError(report)
    return report.final_phi
