"""Anderson mixing core: iterate history, coefficient solves, damping.

At iterate x_k with residual f_k = g(x_k) - x_k, a window holds the most
recent m_k + 1 triples (x_i, g(x_i), f_i). The mixing coefficients alpha
minimize ||sum_i alpha_i f_i||_2 subject to sum_i alpha_i = 1. The
constraint is eliminated by solving the unconstrained least-squares problem
in the residual differences (f_i - f_k) and assigning the slack coefficient
to the newest entry, so a degenerate window falls back to the plain step.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .kernel import dot, least_squares, norm2

# Relative threshold below which the damping direction r_p - r_q is treated
# as degenerate and the undamped step is taken.
_DEGENERATE_RTOL = 1e-14


class DivergedError(RuntimeError):
    """Raised when a step or an evaluation leaves the finite float range."""


class WindowEntry(NamedTuple):
    x: np.ndarray
    gx: np.ndarray
    f: np.ndarray


class WindowMeter:
    """Counts history slots held by live windows; tracks the peak."""

    def __init__(self) -> None:
        self.current = 0
        self.peak = 0

    def acquire(self, k: int = 1) -> None:
        self.current += k
        if self.current > self.peak:
            self.peak = self.current

    def release(self, k: int) -> None:
        self.current -= k


class HistoryWindow:
    """Sliding window over the last `capacity` iterate triples.

    Pushing beyond capacity evicts the oldest entry. All vectors in a
    window share one dimension; single-writer use is assumed.
    """

    def __init__(self, capacity: int, meter: WindowMeter | None = None):
        if capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.entries: deque[WindowEntry] = deque(maxlen=capacity)
        self.meter = meter
        self._closed = False

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def push(self, x, gx) -> "HistoryWindow":
        x = np.asarray(x, dtype=float)
        gx = np.asarray(gx, dtype=float)
        if x.ndim != 1 or gx.shape != x.shape:
            raise ValueError(
                f"push expects matching 1-D vectors, got {x.shape} and {gx.shape}"
            )
        if self.entries and x.shape != self.entries[0].x.shape:
            raise ValueError(
                f"dimension {x.shape[0]} does not match window dimension "
                f"{self.entries[0].x.shape[0]}"
            )
        grew = len(self.entries) < self.capacity
        self.entries.append(WindowEntry(x, gx, gx - x))
        if grew and self.meter is not None:
            self.meter.acquire(1)
        return self

    def tail(self, k: int) -> "HistoryWindow":
        """Read-only view of the newest min(k, len) entries, unmetered."""
        if k < 1:
            raise ValueError(f"tail size must be >= 1, got {k}")
        view = HistoryWindow(k)
        view.entries.extend(list(self.entries)[-k:])
        return view

    def newest(self) -> WindowEntry:
        return self.entries[-1]

    def close(self) -> None:
        if self.meter is not None and not self._closed:
            self.meter.release(len(self.entries))
        self._closed = True


@dataclass(frozen=True)
class DampingPolicy:
    """How the mixed step is damped.

    kind "none" takes the undamped step (beta = 1), "constant" uses a fixed
    beta in (0, 1], and "optimized" picks beta per step by projecting the
    averaged residual onto the damping direction. The optional safeguard
    keeps an optimized beta away from zero: "floor" clamps it up to eta,
    "reflect" maps beta < eta to 1 - beta. eta must lie in (0, 0.5).
    """

    kind: str = "none"
    beta: float = 1.0
    safeguard: str = "off"
    eta: float = 0.1

    def __post_init__(self):
        if self.kind not in ("none", "constant", "optimized"):
            raise ValueError(f"unknown damping kind {self.kind!r}")
        if self.kind == "constant" and not 0.0 < self.beta <= 1.0:
            raise ValueError(f"constant beta must be in (0, 1], got {self.beta}")
        if self.safeguard not in ("off", "floor", "reflect"):
            raise ValueError(f"unknown safeguard {self.safeguard!r}")
        if not 0.0 < self.eta < 0.5:
            raise ValueError(f"eta must be in (0, 0.5), got {self.eta}")

    @classmethod
    def none(cls) -> "DampingPolicy":
        return cls()

    @classmethod
    def constant(cls, beta: float) -> "DampingPolicy":
        return cls(kind="constant", beta=beta)

    @classmethod
    def optimized(cls, safeguard: str = "off", eta: float = 0.1) -> "DampingPolicy":
        return cls(kind="optimized", safeguard=safeguard, eta=eta)


@dataclass
class MixingResult:
    """Coefficients and averages of one mixing solve.

    alpha is ordered oldest entry first and sums to one; mixed_norm is
    ||sum_i alpha_i f_i||_2, the residual norm left after mixing.
    """

    alpha: np.ndarray
    x_avg: np.ndarray
    gx_avg: np.ndarray
    mixed_norm: float

    @property
    def alpha_sum(self) -> float:
        return float(sum(self.alpha.tolist()))

    @property
    def alpha_abs_sum(self) -> float:
        return float(sum(np.abs(self.alpha).tolist()))


@dataclass
class StepDiagnostics:
    """Per-step record attached to each produced iterate."""

    alpha: np.ndarray
    beta: float | None
    theta: float
    alpha_sum: float
    alpha_abs_sum: float
    extra_fevals: int


def _weighted_sum(alpha: np.ndarray, vectors) -> np.ndarray:
    # Fixed oldest-first accumulation keeps traces reproducible.
    acc = alpha[0] * vectors[0]
    for a, v in zip(alpha[1:].tolist(), vectors[1:]):
        acc = acc + a * v
    return acc


def solve_mixing_coefficients(window: HistoryWindow) -> MixingResult:
    """Solve the constrained mixing problem over the window's residuals.

    The newest entry carries the slack coefficient 1 - sum(others), so the
    sum-to-one constraint holds by construction and a window whose residual
    differences are rank deficient prefers the newest iterate.
    """
    entries = list(window.entries)
    if not entries:
        raise ValueError("cannot mix an empty window")
    newest = entries[-1]
    p = len(entries) - 1
    if p == 0:
        alpha = np.array([1.0])
    else:
        diffs = np.column_stack([e.f - newest.f for e in entries[:-1]])
        w = least_squares(diffs, -newest.f)
        alpha = np.append(w, 1.0 - float(sum(w.tolist())))
    x_avg = _weighted_sum(alpha, [e.x for e in entries])
    gx_avg = _weighted_sum(alpha, [e.gx for e in entries])
    mixed = _weighted_sum(alpha, [e.f for e in entries])
    return MixingResult(alpha=alpha, x_avg=x_avg, gx_avg=gx_avg, mixed_norm=norm2(mixed))


def optimized_beta(r_p, r_q) -> float:
    """Damping factor minimizing ||r_p - beta (r_p - r_q)||_2 over the line.

    r_p and r_q are the residuals at the averaged iterate and at the
    averaged g-image. The magnitude of the 1-D least-squares minimizer is
    clamped to 1; a degenerate or uninformative direction falls back to
    the undamped value 1.
    """
    r_p = np.asarray(r_p, dtype=float)
    r_q = np.asarray(r_q, dtype=float)
    diff = r_p - r_q
    dn = norm2(diff)
    if dn < _DEGENERATE_RTOL * max(norm2(r_p), 1.0):
        return 1.0
    raw = abs(dot(diff, r_p)) / (dn * dn)
    if raw == 0.0:
        # A zero projection would freeze the iterate; take the plain step.
        return 1.0
    return min(raw, 1.0)


def safeguard_beta(beta: float, policy: DampingPolicy) -> float:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    if policy.safeguard == "floor":
        return max(beta, policy.eta)
    if policy.safeguard == "reflect":
        return beta if beta >= policy.eta else 1.0 - beta
    return beta


def aa_step(
    window: HistoryWindow,
    policy: DampingPolicy,
    g: Callable[[np.ndarray], np.ndarray],
) -> tuple[np.ndarray, StepDiagnostics]:
    """One Anderson step from the window's current contents.

    Returns the next iterate and its diagnostics. The optimized policy
    spends exactly two additional g evaluations (at the averaged iterate
    and at the averaged g-image); the other policies spend none.
    """
    mix = solve_mixing_coefficients(window)
    fk_norm = norm2(window.newest().f)
    theta = mix.mixed_norm / fk_norm if fk_norm > 0.0 else 0.0
    extra = 0

    if policy.kind == "optimized":
        gp = g(mix.x_avg)
        gq = g(mix.gx_avg)
        extra = 2
        if not (np.all(np.isfinite(gp)) and np.all(np.isfinite(gq))):
            raise DivergedError("damping probe evaluations left the finite range")
        r_p = mix.x_avg - gp
        r_q = mix.gx_avg - gq
        beta = safeguard_beta(optimized_beta(r_p, r_q), policy)
        x_next = mix.x_avg + beta * (mix.gx_avg - mix.x_avg)
    else:
        beta = 1.0 if policy.kind == "none" else policy.beta
        x_next = (1.0 - beta) * mix.x_avg + beta * mix.gx_avg

    if not np.all(np.isfinite(x_next)):
        raise DivergedError("next iterate left the finite range")
    diag = StepDiagnostics(
        alpha=mix.alpha,
        beta=beta,
        theta=theta,
        alpha_sum=mix.alpha_sum,
        alpha_abs_sum=mix.alpha_abs_sum,
        extra_fevals=extra,
    )
    return x_next, diag
