"""Constraint matrices of the multi-index transportation LP and total-unimodularity checks.

Determinants are computed with fraction-free (Bareiss) elimination on Python
integers, so every value is exact.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

SIZE_CAP = 10**6


def _cap(rows, cols):
    if rows * cols > SIZE_CAP:
        raise ValueError(f"matrix of {rows}x{cols} entries exceeds the size cap")


def build_L(n: int, t: int) -> np.ndarray:
    """Entry-by-constraint incidence, built as L_1 = I_n, L_t = [1_n kron L_{t-1}, I_n kron 1_{n^(t-1)}].

    Row p encodes the multi-index with digit d_k of weight n^(k-1); column
    block k holds the n constraints of axis k.
    """
    if n < 1 or t < 1:
        raise ValueError("n and t must be positive")
    _cap(n**t, n * t)
    L = np.eye(n, dtype=np.int64)
    for s in range(2, t + 1):
        L = np.hstack([np.kron(np.ones((n, 1), dtype=np.int64), L),
                       np.kron(np.eye(n, dtype=np.int64), np.ones((n ** (s - 1), 1), dtype=np.int64))])
    return L


def slice_order(n: int, m: int) -> np.ndarray:
    """Permutation taking the Kronecker row order to slice-by-slice numbering.

    In slice numbering axis 1 moves slowest inside each n x n slice and axis 2
    fastest, so the two lowest digits trade places. For m = 2 this is the
    row-major numbering of an n x n matrix.
    """
    if m < 2:
        return np.arange(n**m)
    p = np.arange(n**m)
    d1, d2, rest = p // n % n, p % n, p // (n * n)
    return rest * n * n + d2 * n + d1


def build_primal_constraints(n: int, m: int, order: str = "slice") -> np.ndarray:
    """Transpose of L_{n,m} with the redundant columns 2n, 3n, ..., mn (1-based) removed.

    Parameters
    ----------
    order : {"slice", "kron"}
        Column numbering of the tensor entries. "kron" keeps the recursion's
        row order; "slice" numbers entries slice by slice.

    Returns
    -------
    ndarray, shape (mn - m + 1, n^m)
    """
    if order not in ("slice", "kron"):
        raise ValueError("order must be 'slice' or 'kron'")
    L = build_L(n, m)
    if order == "slice":
        L = L[slice_order(n, m)]
    strip = [k * n - 1 for k in range(2, m + 1)]
    keep = [j for j in range(n * m) if j not in strip]
    return np.ascontiguousarray(L[:, keep].T)


def det_bareiss(M) -> int:
    """Exact integer determinant by fraction-free elimination."""
    a = [[int(v) for v in row] for row in M]
    k = len(a)
    if k == 0:
        return 1
    sign, prev = 1, 1
    for i in range(k - 1):
        if a[i][i] == 0:
            swap = next((r for r in range(i + 1, k) if a[r][i] != 0), None)
            if swap is None:
                return 0
            a[i], a[swap] = a[swap], a[i]
            sign = -sign
        for r in range(i + 1, k):
            for c in range(i + 1, k):
                a[r][c] = (a[r][c] * a[i][i] - a[r][i] * a[i][c]) // prev
        prev = a[i][i]
    return sign * a[k - 1][k - 1]


@dataclass
class TUResult:
    is_tu: bool
    max_order: int
    complete: bool = True
    checked: int = 0
    # 1-based indices, as usually printed for constraint matrices
    witness_rows: tuple | None = None
    witness_cols: tuple | None = None
    witness_det: int | None = None

    @property
    def verdict(self) -> str:
        if self.witness_det is not None:
            return "not TU"
        return f"TU up to order {self.max_order}" + ("" if self.complete else " (partial)")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict, "is_tu": self.is_tu, "max_order": self.max_order,
            "complete": self.complete, "checked": self.checked,
            "witness_rows": None if self.witness_rows is None else list(self.witness_rows),
            "witness_cols": None if self.witness_cols is None else list(self.witness_cols),
            "witness_det": self.witness_det,
        }


def tu_check(M, max_order: int | None = None, budget: int = 5_000_000) -> TUResult:
    """Search square submatrices for a determinant outside {-1, 0, 1}.

    Orders are tried from ``max_order`` downwards; within an order, row sets
    then column sets in lexicographic order. The first offending submatrix is
    returned. When ``budget`` submatrices have been examined without a
    witness, the result is flagged incomplete.
    """
    M = np.asarray(M, dtype=np.int64)
    if M.ndim != 2:
        raise ValueError("a matrix is required")
    if np.any(np.abs(M) > 1):
        raise ValueError("entries must lie in {-1, 0, 1}")
    p, q = M.shape
    top = min(p, q) if max_order is None else min(max_order, p, q)
    checked = 0
    rows_list = M.tolist()
    for k in range(top, 0, -1):
        for rows in itertools.combinations(range(p), k):
            sub_rows = [rows_list[i] for i in rows]
            for cols in itertools.combinations(range(q), k):
                if checked >= budget:
                    return TUResult(False, top, complete=False, checked=checked)
                checked += 1
                d = det_bareiss([[r[j] for j in cols] for r in sub_rows])
                if abs(d) >= 2:
                    return TUResult(False, top, True, checked, tuple(i + 1 for i in rows),
                                    tuple(j + 1 for j in cols), d)
    return TUResult(True, top, True, checked)


def sufficient_tu(M) -> bool:
    """Two-set row partition test for matrices with at most two nonzeros per column.

    Two nonzeros of equal sign in a column must fall in different sets, and of
    opposite sign in the same set. Returns True when such a partition exists,
    which certifies total unimodularity; False means the test is inconclusive
    or fails.
    """
    M = np.asarray(M, dtype=np.int64)
    if np.any(np.abs(M) > 1):
        raise ValueError("entries must lie in {-1, 0, 1}")
    p = M.shape[0]
    parent = list(range(p))
    parity = [0] * p  # colour relative to parent

    def find(i):
        if parent[i] == i:
            return i, 0
        root, par = find(parent[i])
        parent[i] = root
        parity[i] ^= par
        return root, parity[i]

    for col in M.T:
        nz = np.flatnonzero(col)
        if len(nz) > 2:
            return False
        if len(nz) < 2:
            continue
        i, j = nz
        want = 1 if col[i] == col[j] else 0
        ri, pi = find(i)
        rj, pj = find(j)
        if ri == rj:
            if pi ^ pj != want:
                return False
        else:
            parent[ri] = rj
            parity[ri] = pi ^ pj ^ want
    return True


def incidence_matrix(num_nodes: int, arcs) -> np.ndarray:
    """Node-arc incidence of a directed graph: +1 at the tail, -1 at the head."""
    M = np.zeros((num_nodes, len(arcs)), dtype=np.int64)
    for a, (u, v) in enumerate(arcs):
        if u == v:
            raise ValueError("self-loops have no incidence column")
        M[u, a] = 1
        M[v, a] = -1
    return M
