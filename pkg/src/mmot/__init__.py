"""Multimarginal optimal transport: entropic solvers, rounding, exact LP baseline, TU lab, benchmarks."""

__version__ = "0.1.0"

from .regmot import MotInstance  # noqa: E402
from .sinkhorn import multi_sinkhorn  # noqa: E402
from .accel import accelerated_multi_sinkhorn  # noqa: E402
from .rounding import round_plan  # noqa: E402
from .driver import ApproxConfig, approx_mot  # noqa: E402

__all__ = ["MotInstance", "multi_sinkhorn", "accelerated_multi_sinkhorn", "round_plan",
           "ApproxConfig", "approx_mot", "__version__"]
