"""Convergence traces, contraction audits, and the memory model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .accelerator import MixingResult

TRACE_COLUMNS = ("iter", "fevals", "res_norm", "beta", "theta", "alpha_abs_sum", "wall_ns")


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    MAX_FEVALS = "max_fevals"
    DIVERGED = "diverged"


@dataclass
class TraceRow:
    """One outer iterate. Optional fields are absent on the seed row.

    alpha_sum, inner_theta and mixing_checks are in-memory audit fields;
    only the seven named trace columns are serialized.
    """

    k: int
    fevals: int
    res_norm: float
    beta: float | None = None
    theta: float | None = None
    alpha_abs_sum: float | None = None
    wall_ns: int = 0
    alpha_sum: float | None = None
    inner_theta: float | None = None
    mixing_checks: tuple = ()


@dataclass
class ConvergenceTrace:
    rows: list[TraceRow]
    termination: Termination

    @property
    def final_res(self) -> float:
        return self.rows[-1].res_norm if self.rows else math.nan

    @property
    def iters(self) -> int:
        return self.rows[-1].k if self.rows else 0

    @property
    def fevals(self) -> int:
        return self.rows[-1].fevals if self.rows else 0


def theta_of_step(mix: MixingResult, residual_norm: float) -> float:
    """Mixing gain ||sum alpha_i f_i|| / ||f_k||, zero when f_k vanishes."""
    if residual_norm <= 0.0:
        return 0.0
    return mix.mixed_norm / residual_norm


def memory_footprint(spec) -> int:
    """History slots a spec keeps live at once.

    A window of size m holds m + 1 iterate slots. Additive composition
    shares one history, so the deeper window dominates; multiplicative
    composition keeps the inner window alive next to the outer one.
    """
    # Imported here: composer imports this module for the trace types.
    from . import composer

    if isinstance(spec, composer.Picard):
        return 1
    if isinstance(spec, composer.AA):
        return spec.m + 1
    if isinstance(spec, composer.Additive):
        return max(memory_footprint(spec.left), memory_footprint(spec.right))
    if isinstance(spec, composer.Multiplicative):
        return memory_footprint(spec.outer) + memory_footprint(spec.inner)
    raise TypeError(f"not an accelerator spec: {spec!r}")


@dataclass
class AuditViolation:
    k: int
    res_norm: float
    bound: float


@dataclass
class AuditReport:
    kind: str
    kappa: float
    tol: float
    checked: int = 0
    violations: list[AuditViolation] = field(default_factory=list)
    skipped: bool = False
    notice: str | None = None


def contraction_audit(
    trace: ConvergenceTrace, kappa: float, kind: str = "damped", tol: float = 1e-8
) -> AuditReport:
    """Check per-step residual bounds that hold exactly on affine maps.

    kind "damped" checks ||f_{k+1}|| <= theta * ((1 - beta) + kappa * beta)
    * ||f_k|| + tol on steps carrying theta and beta. kind "composite"
    checks the two-stage bound ||f_{k+1}|| <= inner_theta * theta * kappa^2
    * ||f_k|| + tol on steps that also carry the inner mixing gain. Steps
    without the needed fields are skipped; a trace with none yields a
    skipped report with a notice.
    """
    if kind not in ("damped", "composite"):
        raise ValueError(f"unknown audit kind {kind!r}")
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    report = AuditReport(kind=kind, kappa=kappa, tol=tol)
    for prev, row in zip(trace.rows, trace.rows[1:]):
        if row.theta is None:
            continue
        if kind == "damped":
            if row.beta is None:
                continue
            factor = row.theta * ((1.0 - row.beta) + kappa * row.beta)
        else:
            if row.inner_theta is None:
                continue
            factor = row.inner_theta * row.theta * kappa * kappa
        bound = factor * prev.res_norm + tol
        report.checked += 1
        if row.res_norm > bound:
            report.violations.append(AuditViolation(row.k, row.res_norm, bound))
    if report.checked == 0:
        report.skipped = True
        report.notice = "trace carries no usable mixing diagnostics"
    return report


def spectral_norm(mat, iters: int = 2000, rtol: float = 1e-13, seed: int = 0) -> float:
    """2-norm of a dense matrix by power iteration on mat.T @ mat."""
    a = np.asarray(mat, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {a.shape}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[1])
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    sigma = 0.0
    for _ in range(iters):
        u = a.T @ (a @ v)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        v = u / nu
        new = float(np.linalg.norm(a @ v))
        if abs(new - sigma) <= rtol * max(new, 1e-300):
            return new
        sigma = new
    return sigma


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{value:.17g}"


def write_trace_csv(trace: ConvergenceTrace, path, iter_scale: int = 1) -> None:
    """Write the seven trace columns; floats carry 17 significant digits."""
    if iter_scale < 1:
        raise ValueError(f"iter_scale must be >= 1, got {iter_scale}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in trace.rows:
            writer.writerow(
                [
                    str(row.k * iter_scale),
                    str(row.fevals),
                    _fmt(row.res_norm),
                    _fmt(row.beta),
                    _fmt(row.theta),
                    _fmt(row.alpha_abs_sum),
                    str(row.wall_ns),
                ]
            )


def read_trace_rows(path) -> list[TraceRow]:
    """Read rows written by write_trace_csv; empty fields become None."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header in {Path(path).name}: {header}")
        for rec in reader:
            rows.append(
                TraceRow(
                    k=int(rec[0]),
                    fevals=int(rec[1]),
                    res_norm=float(rec[2]),
                    beta=float(rec[3]) if rec[3] else None,
                    theta=float(rec[4]) if rec[4] else None,
                    alpha_abs_sum=float(rec[5]) if rec[5] else None,
                    wall_ns=int(rec[6]),
                )
            )
    return rows
