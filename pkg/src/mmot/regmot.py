"""Entropic-regularized multimarginal OT: dual objective, gradient, residue and bounds.

The dual variables are stored as an ``(m, n)`` array ``beta`` of log-scalings;
the implicit plan is B(beta)_i = exp(sum_k beta[k, i_k] - C_i / eta). All
exponentials live inside log-sum-exp kernels; B is only materialized on
request.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import tensor as tz

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class MotInstance:
    """A cost tensor with m equal axes of size n plus one marginal per axis."""

    cost: np.ndarray
    marginals: np.ndarray

    def __post_init__(self):
        cost = tz.as_tensor(self.cost)
        r = np.array(self.marginals, dtype=np.float64)
        if cost.ndim < 2:
            raise ValueError("need at least two marginals")
        if len(set(cost.shape)) != 1:
            raise ValueError(f"solvers require equal axis sizes, got {cost.shape}")
        if r.shape != (cost.ndim, cost.shape[0]):
            raise ValueError(f"marginals have shape {r.shape}, expected {(cost.ndim, cost.shape[0])}")
        if np.any(cost < 0) or not np.all(np.isfinite(cost)):
            raise ValueError("cost tensor must be finite and nonnegative")
        if np.any(r < 0) or np.any(np.abs(r.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise ValueError("each marginal must lie on the probability simplex")
        cost.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "marginals", r)

    @property
    def m(self) -> int:
        return self.cost.ndim

    @property
    def n(self) -> int:
        return self.cost.shape[0]

    @cached_property
    def cost_inf(self) -> float:
        return tz.norm_inf(self.cost)

    def with_marginals(self, marginals) -> "MotInstance":
        return MotInstance(self.cost, marginals)


@dataclass(frozen=True)
class SolverBounds:
    R: float
    Rbar: float
    eta: float


def load_instance(cost_path, marginals_path) -> MotInstance:
    """Read a cost tensor file and a JSON array-of-arrays of marginals."""
    cost = tz.load_tensor(cost_path)
    marg = json.loads(Path(marginals_path).read_text())
    return MotInstance(cost, marg)


def scaled(inst: MotInstance, eta: float) -> np.ndarray:
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return inst.cost / eta


def _as_beta(inst: MotInstance, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (inst.m, inst.n):
        raise ValueError(f"beta has shape {beta.shape}, expected {(inst.m, inst.n)}")
    return beta


def log_mass(inst: MotInstance, eta: float, beta) -> float:
    """log ||B(beta)||_1 by a full log-sum-exp."""
    return float(tz.logsumexp(tz.log_plan(_as_beta(inst, beta), scaled(inst, eta))))


def phi(inst: MotInstance, eta: float, beta) -> float:
    """Dual objective log ||B(beta)||_1 - sum_k <beta_k, r_k>."""
    beta = _as_beta(inst, beta)
    return log_mass(inst, eta, beta) - float(np.sum(beta * inst.marginals))


def log_marginals(logB: np.ndarray) -> tuple[np.ndarray, float]:
    """Unnormalized log-marginals of exp(logB) (one row per axis) and log ||exp(logB)||_1."""
    rows = np.stack([tz.log_marginal(logB, k) for k in range(logB.ndim)])
    return rows, float(tz.logsumexp(rows[0]))


def normalized_log_marginals(inst: MotInstance, eta: float, beta) -> np.ndarray:
    """log(r_k(B) / ||B||_1) for every axis, shape (m, n)."""
    rows, lognorm = log_marginals(tz.log_plan(_as_beta(inst, beta), scaled(inst, eta)))
    return rows - lognorm


def grad_phi(inst: MotInstance, eta: float, beta) -> np.ndarray:
    """Gradient of phi: r_k(B)/||B||_1 - r_k for each axis."""
    return np.exp(normalized_log_marginals(inst, eta, beta)) - inst.marginals


def rho(a, b) -> float:
    """rho(a, b) = 1^T (b - a) + sum_i a_i log(a_i / b_i), with 0 log 0 = 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(b <= 0):
        raise ValueError("rho needs a strictly positive second argument")
    if np.any(a < 0):
        raise ValueError("rho needs a nonnegative first argument")
    # per entry: a (e^x - 1 - x) with x = log(b/a), which stays accurate when
    # b is close to a (the plain formula cancels to noise below ~1e-16)
    pos = a > 0
    x = np.log(b[pos]) - np.log(a[pos])
    small = np.abs(x) < 1e-2
    h = np.where(small, x * x * (0.5 + x * (1 / 6 + x * (1 / 24 + x / 120))), np.expm1(x) - x)
    return float(np.sum(a[pos] * h) + np.sum(b[~pos]))


def residue(inst: MotInstance, eta: float, beta) -> tuple[float, np.ndarray]:
    """E = sum_k ||r_k(B)/||B||_1 - r_k||_1 and its per-axis terms."""
    per_axis = np.abs(grad_phi(inst, eta, beta)).sum(axis=1)
    return float(per_axis.sum()), per_axis


def bounds(inst: MotInstance, eta: float) -> SolverBounds:
    """Dual-optimum radius R and gap constant Rbar for this instance and eta."""
    rmin = float(inst.marginals.min())
    if rmin <= 0:
        raise ValueError(
            "bounds need strictly positive marginals; smooth them first "
            "(see mmot.driver.smooth_marginals)"
        )
    base = inst.cost_inf / eta
    R = base + (inst.m - 1) * np.log(inst.n) - 2.0 * np.log(rmin)
    Rbar = base - np.log(rmin)
    return SolverBounds(R=float(R), Rbar=float(Rbar), eta=float(eta))


def coordinate_update(inst: MotInstance, eta: float, beta, k: int,
                      log_rk: np.ndarray | None = None) -> np.ndarray:
    """Exact minimization of phi over block k.

    Sets beta_k <- beta_k + log r_k - log r_k(B(beta)). Afterwards
    r_k(B) = r_k, hence ||B||_1 = 1, whatever the mass before the update.
    ``log_rk`` may carry a precomputed unnormalized log-marginal of axis k.
    """
    beta = _as_beta(inst, beta).copy()
    if log_rk is None:
        log_rk = tz.lse_marginal(beta, scaled(inst, eta), k)
    with np.errstate(divide="ignore"):
        beta[k] += np.log(inst.marginals[k]) - log_rk
    return beta


def plan(inst: MotInstance, eta: float, beta, normalize: bool = True) -> np.ndarray:
    """Materialize B(beta), divided by its mass unless ``normalize`` is False."""
    logB = tz.log_plan(_as_beta(inst, beta), scaled(inst, eta))
    if normalize:
        logB = logB - tz.logsumexp(logB)
    return np.exp(logB)


def canonical_shift(beta) -> np.ndarray:
    """Center blocks 1..m-1 so that max + min = 0 and absorb the shifts into the last block.

    The shift leaves every entry of log B, and hence phi, unchanged.
    """
    beta = np.array(beta, dtype=np.float64)
    total = 0.0
    for i in range(beta.shape[0] - 1):
        delta = 0.5 * (beta[i].max() + beta[i].min())
        beta[i] -= delta
        total += delta
    beta[-1] += total
    return beta
