"""Rounding of an approximate plan onto the transportation polytope.

Each axis is scaled down slice by slice wherever its marginal overshoots the
target, then the leftover deficits are filled with a single rank-one tensor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tz

SKIP_CORRECTION_BELOW = 1e-15


@dataclass
class RoundingReport:
    mass_removed: list[float]
    err_norms: list[float]
    l1_move: float
    correction_applied: bool

    def to_dict(self) -> dict:
        return {
            "mass_removed": [float(x) for x in self.mass_removed],
            "err_norms": [float(x) for x in self.err_norms],
            "l1_move": float(self.l1_move),
            "correction_applied": self.correction_applied,
        }


def round_plan(X: np.ndarray, marginals) -> tuple[np.ndarray, RoundingReport]:
    """Return a nonnegative Y with r_k(Y) = r_k for every k, close to X in l1.

    Parameters
    ----------
    X : ndarray
        Nonnegative m-way tensor.
    marginals : sequence of m vectors
        Targets; each should sum to one.

    Returns
    -------
    Y : ndarray
        Feasible plan; ``||Y - X||_1 <= 2 sum_k ||r_k(X) - r_k||_1``.
    report : RoundingReport
    """
    X = tz.as_tensor(X)
    if np.any(X < 0):
        raise ValueError("rounding needs a nonnegative tensor")
    m = X.ndim
    targets = [np.asarray(r, dtype=np.float64) for r in marginals]
    if len(targets) != m or any(t.shape != (X.shape[k],) for k, t in enumerate(targets)):
        raise ValueError("one marginal per axis with matching length is required")

    Y = X.copy()
    removed = []
    for k in range(m):
        current = tz.marginal(Y, k)
        # an empty slice is left alone; its deficit goes to the rank-one term
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(current > 0, np.minimum(1.0, targets[k] / current), 1.0)
        shape = [1] * m
        shape[k] = -1
        before = tz.norm1(Y)
        Y *= z.reshape(shape)
        removed.append(before - tz.norm1(Y))

    errs = [np.maximum(targets[k] - tz.marginal(Y, k), 0.0) for k in range(m)]
    err_norms = [float(e.sum()) for e in errs]
    scale = err_norms[0]
    applied = scale >= SKIP_CORRECTION_BELOW
    if applied:
        Y += tz.outer(errs) / scale ** (m - 1)
    np.maximum(Y, 0.0, out=Y)
    return Y, RoundingReport(removed, err_norms, tz.norm1(Y - X), applied)
