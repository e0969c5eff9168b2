"""Solve reports shared by the greedy and accelerated solvers."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class NonConvergenceError(RuntimeError):
    """Raised when a solver exhausts its iteration budget; carries the report."""

    def __init__(self, report: "SolveReport"):
        super().__init__(
            f"{report.solver} did not reach E <= {report.eps_prime:.3g} within "
            f"{report.max_iter} iterations (last E = {report.final_residue:.3g})"
        )
        self.report = report


@dataclass
class SolveReport:
    solver: str
    eta: float
    eps_prime: float
    R: float
    Rbar: float
    max_iter: int
    iteration_bound: float
    converged: bool = False
    iterations: int = 0
    final_residue: float = float("nan")
    final_phi: float = float("nan")
    # accelerated solver only: the same bound with m in place of m^2
    iteration_bound_stated: float | None = None
    trace: list[dict[str, Any]] = field(default_factory=list)
    elapsed: float = 0.0

    def within_bound(self) -> bool:
        return self.iterations <= self.iteration_bound

    def to_dict(self, include_trace: bool = True, include_timings: bool = False) -> dict:
        out = {
            "solver": self.solver,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residue": self.final_residue,
            "final_phi": self.final_phi,
            "eta": self.eta,
            "eps_prime": self.eps_prime,
            "R": self.R,
            "Rbar": self.Rbar,
            "max_iter": self.max_iter,
            "iteration_bound": self.iteration_bound,
            "iteration_bound_stated": self.iteration_bound_stated,
        }
        if include_trace:
            out["trace"] = [_plain(row) for row in self.trace]
        if include_timings:
            out["elapsed"] = self.elapsed
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(**kwargs), sort_keys=True)

    def write_trace_csv(self, path) -> None:
        """Columns t, E_t, phi, axis, followed by solver-specific extras."""
        base = ["t", "E_t", "phi", "axis"]
        extras = sorted({k for row in self.trace for k in row} - set(base) - {"rho"})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(base + extras)
            for row in self.trace:
                w.writerow([fmt(row.get(k)) for k in base + extras])


def fmt(value) -> str:
    """Full-precision text for CSV cells."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _plain(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, np.floating):
            v = float(v)
        elif isinstance(v, np.integer):
            v = int(v)
        out[k] = v
    return out
