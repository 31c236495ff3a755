"""Composable Anderson acceleration solvers and a fixed-point benchmark harness."""

__version__ = "0.1.0"

from .accelerator import (
    DampingPolicy,
    HistoryWindow,
    MixingResult,
    WindowMeter,
    aa_step,
    optimized_beta,
    safeguard_beta,
    solve_mixing_coefficients,
)
from .composer import (
    AA,
    AcceleratorSpec,
    Additive,
    Multiplicative,
    Picard,
    RunConfig,
    feval_count,
    run,
)
from .diagnostics import (
    ConvergenceTrace,
    Termination,
    TraceRow,
    contraction_audit,
    memory_footprint,
    read_trace_rows,
    spectral_norm,
    theta_of_step,
    write_trace_csv,
)
from .kernel import axpy, dot, least_squares, norm2
from .problems import (
    FixedPointProblem,
    Grid2D,
    bratu_problem,
    convdiff_problem,
    gmres_reference,
    tridiag_problem,
)

__all__ = [
    "AA",
    "AcceleratorSpec",
    "Additive",
    "ConvergenceTrace",
    "DampingPolicy",
    "FixedPointProblem",
    "Grid2D",
    "HistoryWindow",
    "MixingResult",
    "Multiplicative",
    "Picard",
    "RunConfig",
    "Termination",
    "TraceRow",
    "WindowMeter",
    "aa_step",
    "axpy",
    "bratu_problem",
    "contraction_audit",
    "convdiff_problem",
    "dot",
    "feval_count",
    "gmres_reference",
    "least_squares",
    "memory_footprint",
    "norm2",
    "optimized_beta",
    "read_trace_rows",
    "run",
    "safeguard_beta",
    "solve_mixing_coefficients",
    "spectral_norm",
    "theta_of_step",
    "tridiag_problem",
    "write_trace_csv",
]
