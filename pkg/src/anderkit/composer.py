"""Accelerator composition algebra and the fixed-point runner.

A solver is described by a small recursive spec: Picard, a windowed
Anderson accelerator AA, an Additive blend of two specs over one shared
iterate history, or a Multiplicative chain where each outer Anderson step
hands its result to a freshly started inner accelerator for iter_n steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .accelerator import (
    DampingPolicy,
    DivergedError,
    HistoryWindow,
    StepDiagnostics,
    WindowMeter,
    aa_step,
)
from .diagnostics import ConvergenceTrace, Termination, TraceRow
from .kernel import norm2


@dataclass(frozen=True)
class Picard:
    """Plain fixed-point iteration x <- g(x)."""


@dataclass(frozen=True)
class AA:
    """Anderson acceleration with window size m (m + 1 stored iterates)."""

    m: int
    damping: DampingPolicy = field(default_factory=DampingPolicy.none)

    def __post_init__(self):
        if self.m < 0:
            raise ValueError(f"window size must be >= 0, got {self.m}")


@dataclass(frozen=True)
class Additive:
    """Convex blend of two accelerator steps over one shared history."""

    left: "AcceleratorSpec"
    right: "AcceleratorSpec"
    w_left: float = 0.5
    w_right: float = 0.5

    def __post_init__(self):
        if abs(self.w_left + self.w_right - 1.0) > 1e-12:
            raise ValueError(
                f"weights must sum to 1, got {self.w_left} + {self.w_right}"
            )


@dataclass(frozen=True)
class Multiplicative:
    """Outer windowed accelerator chained with a fresh inner one per step.

    iter_n = 0 degenerates to the plain outer accelerator.
    """

    outer: "AcceleratorSpec"
    inner: "AcceleratorSpec"
    iter_n: int = 1

    def __post_init__(self):
        if not isinstance(self.outer, AA):
            raise ValueError("multiplicative composition needs a windowed outer accelerator")
        if self.iter_n < 0:
            raise ValueError(f"iter_n must be >= 0, got {self.iter_n}")


AcceleratorSpec = Union[Picard, AA, Additive, Multiplicative]


@dataclass
class RunConfig:
    tol: float = 1e-8
    max_iters: int = 1000
    max_fevals: int = 1_000_000
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.max_fevals < 1:
            raise ValueError(f"max_fevals must be >= 1, got {self.max_fevals}")
        if not self.divergence_factor > 1.0:
            raise ValueError(
                f"divergence_factor must exceed 1, got {self.divergence_factor}"
            )


class CountingMap:
    """Wraps the fixed-point map and counts evaluations."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn
        self.calls = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.calls += 1
        return self.fn(x)


@dataclass
class _StepOutcome:
    x_next: np.ndarray
    gx_next: np.ndarray | None
    diag: StepDiagnostics
    checks: list
    inner_theta: float | None = None


class _WindowedStepper:
    def __init__(self, m: int, policy: DampingPolicy):
        self.depth = m + 1
        self.policy = policy

    def step(self, window: HistoryWindow, g) -> _StepOutcome:
        x_next, diag = aa_step(window.tail(self.depth), self.policy, g)
        return _StepOutcome(x_next, None, diag, [(diag.theta, diag.alpha_sum)])


class _AdditiveStepper:
    """Blends two sub-steps; both read the same shared window.

    The trace row carries the left component's mixing coefficients, the
    larger of the two gains, and no single beta.
    """

    def __init__(self, left, right, w_left: float, w_right: float):
        self.left = left
        self.right = right
        self.w_left = w_left
        self.w_right = w_right
        self.depth = max(left.depth, right.depth)

    def step(self, window: HistoryWindow, g) -> _StepOutcome:
        lo = self.left.step(window, g)
        ro = self.right.step(window, g)
        x_next = self.w_left * lo.x_next + self.w_right * ro.x_next
        if not np.all(np.isfinite(x_next)):
            raise DivergedError("blended iterate left the finite range")
        worst_sum = max((lo.diag.alpha_sum, ro.diag.alpha_sum), key=lambda s: abs(s - 1.0))
        diag = StepDiagnostics(
            alpha=lo.diag.alpha,
            beta=None,
            theta=max(lo.diag.theta, ro.diag.theta),
            alpha_sum=worst_sum,
            alpha_abs_sum=max(lo.diag.alpha_abs_sum, ro.diag.alpha_abs_sum),
            extra_fevals=lo.diag.extra_fevals + ro.diag.extra_fevals,
        )
        return _StepOutcome(x_next, None, diag, lo.checks + ro.checks)


class _MultiplicativeStepper:
    def __init__(self, outer, inner_spec: AcceleratorSpec, iter_n: int, meter: WindowMeter):
        self.outer = outer
        self.inner_spec = inner_spec
        self.iter_n = iter_n
        self.meter = meter
        self.depth = outer.depth

    def step(self, window: HistoryWindow, g) -> _StepOutcome:
        oo = self.outer.step(window, g)
        if self.iter_n == 0:
            return oo
        checks = list(oo.checks)
        spent = oo.diag.extra_fevals
        inner = build_stepper(self.inner_spec, self.meter)
        inner_window = HistoryWindow(inner.depth, self.meter)
        try:
            x_cur = oo.x_next
            gx_cur = g(x_cur)
            spent += 1
            if not np.all(np.isfinite(gx_cur)):
                raise DivergedError("inner seed evaluation left the finite range")
            inner_window.push(x_cur, gx_cur)
            inner_theta = None
            for _ in range(self.iter_n):
                io = inner.step(inner_window, g)
                if inner_theta is None:
                    inner_theta = io.diag.theta
                checks.extend(io.checks)
                spent += io.diag.extra_fevals
                x_cur = io.x_next
                if io.gx_next is not None:
                    gx_cur = io.gx_next
                else:
                    gx_cur = g(x_cur)
                    spent += 1
                if not np.all(np.isfinite(gx_cur)):
                    raise DivergedError("inner evaluation left the finite range")
                inner_window.push(x_cur, gx_cur)
        finally:
            inner_window.close()
        diag = StepDiagnostics(
            alpha=oo.diag.alpha,
            beta=oo.diag.beta,
            theta=oo.diag.theta,
            alpha_sum=oo.diag.alpha_sum,
            alpha_abs_sum=oo.diag.alpha_abs_sum,
            extra_fevals=spent,
        )
        return _StepOutcome(x_cur, gx_cur, diag, checks, inner_theta=inner_theta)


def build_stepper(spec: AcceleratorSpec, meter: WindowMeter):
    if isinstance(spec, Picard):
        return _WindowedStepper(0, DampingPolicy.none())
    if isinstance(spec, AA):
        return _WindowedStepper(spec.m, spec.damping)
    if isinstance(spec, Additive):
        return _AdditiveStepper(
            build_stepper(spec.left, meter),
            build_stepper(spec.right, meter),
            spec.w_left,
            spec.w_right,
        )
    if isinstance(spec, Multiplicative):
        return _MultiplicativeStepper(
            build_stepper(spec.outer, meter), spec.inner, spec.iter_n, meter
        )
    raise TypeError(f"not an accelerator spec: {spec!r}")


def run(
    spec: AcceleratorSpec,
    problem,
    x0,
    config: RunConfig | None = None,
    meter: WindowMeter | None = None,
) -> ConvergenceTrace:
    """Iterate a solver spec on problem.g from x0 until a termination fires.

    The first evaluation g(x0) seeds the history; every later iterate comes
    from the solver's step. Each trace row records the residual recomputed
    from the freshly evaluated pair, cumulative evaluation counts, and the
    step's mixing diagnostics.
    """
    config = config if config is not None else RunConfig()
    x = np.asarray(x0, dtype=float)
    if x.ndim != 1 or x.shape[0] != problem.n:
        raise ValueError(f"x0 must be a length-{problem.n} vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")

    meter = meter if meter is not None else WindowMeter()
    stepper = build_stepper(spec, meter)
    g = CountingMap(problem.g)
    window = HistoryWindow(stepper.depth, meter)
    start = time.perf_counter_ns()

    rows: list[TraceRow] = []
    termination: Termination | None = None

    gx = g(x)
    if not np.all(np.isfinite(gx)):
        termination = Termination.DIVERGED
    else:
        window.push(x, gx)
        res = norm2(window.newest().f)
        res0 = res
        rows.append(
            TraceRow(k=0, fevals=g.calls, res_norm=res, wall_ns=time.perf_counter_ns() - start)
        )
        if res <= config.tol:
            termination = Termination.CONVERGED

    k = 0
    while termination is None:
        if k >= config.max_iters:
            termination = Termination.MAX_ITERS
            break
        if g.calls >= config.max_fevals:
            termination = Termination.MAX_FEVALS
            break
        try:
            out = stepper.step(window, g)
            gx = out.gx_next if out.gx_next is not None else g(out.x_next)
            if not np.all(np.isfinite(gx)):
                raise DivergedError("evaluation left the finite range")
        except DivergedError:
            termination = Termination.DIVERGED
            break
        window.push(out.x_next, gx)
        res = norm2(window.newest().f)
        k += 1
        rows.append(
            TraceRow(
                k=k,
                fevals=g.calls,
                res_norm=res,
                beta=out.diag.beta,
                theta=out.diag.theta,
                alpha_abs_sum=out.diag.alpha_abs_sum,
                wall_ns=time.perf_counter_ns() - start,
                alpha_sum=out.diag.alpha_sum,
                inner_theta=out.inner_theta,
                mixing_checks=tuple(out.checks),
            )
        )
        if res <= config.tol:
            termination = Termination.CONVERGED
        elif not np.isfinite(res) or res > config.divergence_factor * res0:
            termination = Termination.DIVERGED

    window.close()
    return ConvergenceTrace(rows=rows, termination=termination)


def feval_count(trace: ConvergenceTrace) -> int:
    """Total g evaluations recorded by the run."""
    return trace.fevals
