"""End-to-end epsilon-approximation: parameter schedule, smoothing, solve, round."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import regmot
from . import tensor as tz
from .accel import accelerated_multi_sinkhorn
from .regmot import MotInstance
from .report import NonConvergenceError, SolveReport
from .rounding import RoundingReport, round_plan
from .sinkhorn import multi_sinkhorn

DEFAULT_MATERIALIZE_CAP = 2 * 10**7

SOLVERS = {
    "greedy": multi_sinkhorn,
    "accelerated": accelerated_multi_sinkhorn,
    "accel": accelerated_multi_sinkhorn,
}


class SizeCapError(ValueError):
    """The instance is too large to materialize."""


@dataclass
class ApproxConfig:
    epsilon: float
    solver: str = "greedy"
    eta: float | None = None
    eps_prime: float | None = None
    max_iter: int | None = None
    round_target: str = "original"
    materialize_cap: int = DEFAULT_MATERIALIZE_CAP

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.round_target not in ("original", "smoothed"):
            raise ValueError("round_target must be 'original' or 'smoothed'")

    def resolve(self, inst: MotInstance) -> tuple[float, float]:
        """(eta, eps_prime) after applying the default schedules."""
        if inst.n < 2:
            raise ValueError("n >= 2 is required (log n appears in the eta schedule)")
        eta = self.eta if self.eta is not None else self.epsilon / (2 * inst.m * math.log(inst.n))
        if self.eps_prime is not None:
            eps_prime = self.eps_prime
        elif inst.cost_inf > 0:
            eps_prime = self.epsilon / (8 * inst.cost_inf)
        else:
            eps_prime = 1.0
        return eta, min(eps_prime, 1.0)


@dataclass
class ApproxResult:
    plan: np.ndarray
    objective: float
    report: SolveReport
    rounding_report: RoundingReport
    eta: float
    eps_prime: float
    smoothed: np.ndarray = field(repr=False)
    pre_rounding_objective: float = float("nan")
    pre_rounding_deviation: float = float("nan")

    def guarantee_terms(self, inst: MotInstance) -> dict:
        """Pieces of the additive error budget: entropic bias and rounding terms."""
        return {
            "entropic": inst.m * self.eta * math.log(inst.n),
            "rounding": 4.0 * self.pre_rounding_deviation * inst.cost_inf,
            "rounding_budget": 4.0 * self.eps_prime * inst.cost_inf,
        }


def smooth_marginals(marginals, eps_prime: float, m: int | None = None, n: int | None = None) -> np.ndarray:
    """(1 - eps'/(4m)) r_k + eps'/(4mn) for every k; keeps each row on the simplex."""
    r = np.asarray(marginals, dtype=np.float64)
    m = r.shape[0] if m is None else m
    n = r.shape[1] if n is None else n
    w = eps_prime / (4.0 * m)
    return (1.0 - w) * r + w / n


def approx_mot(inst: MotInstance, config: ApproxConfig) -> ApproxResult:
    """Feasible plan whose cost is within ``config.epsilon`` of the LP optimum.

    Raises
    ------
    NonConvergenceError
        The solver ran out of iterations; the exception carries the report.
    SizeCapError
        n^m exceeds ``config.materialize_cap``.
    """
    size = inst.n ** inst.m
    if size > config.materialize_cap:
        raise SizeCapError(f"n^m = {size} exceeds the materialization cap {config.materialize_cap}")
    eta, eps_prime = config.resolve(inst)
    smoothed = smooth_marginals(inst.marginals, eps_prime, inst.m, inst.n)
    work = inst.with_marginals(smoothed)

    beta, report = SOLVERS[config.solver](work, eta, eps_prime / 2.0, config.max_iter)
    if not report.converged:
        raise NonConvergenceError(report)

    X = regmot.plan(work, eta, beta)
    target = inst.marginals if config.round_target == "original" else smoothed
    Y, rrep = round_plan(X, target)
    deviation = sum(float(np.abs(tz.marginal(X, k) - inst.marginals[k]).sum()) for k in range(inst.m))
    return ApproxResult(plan=Y, objective=tz.inner(inst.cost, Y), report=report,
                        rounding_report=rrep, eta=eta, eps_prime=eps_prime, smoothed=smoothed,
                        pre_rounding_objective=tz.inner(inst.cost, X),
                        pre_rounding_deviation=deviation)
