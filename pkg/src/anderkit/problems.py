"""Benchmark fixed-point problems and a full-memory GMRES reference.

The PDE problems discretize on a uniform interior grid with h = 1/(N+1)
and keep the discrete equations in h^2-scaled stencil form, so the plain
five-point Laplacian reads (4 u_ij - neighbours). Each problem is exposed
as the Jacobi-preconditioned Richardson map

    g(u) = u + D^{-1} (rhs - operator(u)),

whose fixed points solve operator(u) = rhs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernel import norm2

# Dense assembly is an oracle path for small grids only.
_DENSE_LIMIT = 32


@dataclass
class Grid2D:
    """Interior nodes of the unit square, n_side per direction.

    Lexicographic row-major indexing: node (i, j) with zero-based interior
    coordinates (row i along y, column j along x) maps to i * n_side + j.
    """

    n_side: int

    def __post_init__(self):
        if self.n_side < 1:
            raise ValueError(f"n_side must be >= 1, got {self.n_side}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_side + 1)

    @property
    def unknowns(self) -> int:
        return self.n_side * self.n_side

    def index(self, i: int, j: int) -> int:
        if not (0 <= i < self.n_side and 0 <= j < self.n_side):
            raise ValueError(f"interior node ({i}, {j}) out of range")
        return i * self.n_side + j

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Interior coordinate arrays (X, Y), each shaped (n_side, n_side)."""
        pts = (np.arange(self.n_side) + 1.0) * self.h
        xgrid, ygrid = np.meshgrid(pts, pts, indexing="ij")
        return xgrid, ygrid


@dataclass
class FixedPointProblem:
    """A fixed-point map x = g(x) in R^n with benchmark metadata."""

    n: int
    g: Callable[[np.ndarray], np.ndarray]
    label: str
    default_start: np.ndarray
    params: dict = field(default_factory=dict)
    known_solution: np.ndarray | None = None

    def __post_init__(self):
        self.default_start = np.asarray(self.default_start, dtype=float)
        if self.default_start.shape != (self.n,):
            raise ValueError("default_start dimension does not match n")
        if not np.all(np.isfinite(self.default_start)):
            raise ValueError("default_start must be finite")
        if self.known_solution is not None:
            self.known_solution = np.asarray(self.known_solution, dtype=float)
            if self.known_solution.shape != (self.n,):
                raise ValueError("known_solution dimension does not match n")
            gap = norm2(self.g(self.known_solution) - self.known_solution)
            if not gap <= 1e-10:
                raise ValueError(f"known_solution is not a fixed point (residual {gap:.3e})")

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.g(x) - x


def _neighbours(u2d: np.ndarray):
    p = np.pad(u2d, 1)
    east = p[1:-1, 2:]
    west = p[1:-1, :-2]
    north = p[2:, 1:-1]
    south = p[:-2, 1:-1]
    return east, west, north, south


def bratu_problem(n_side: int, lam: float = 6.0) -> FixedPointProblem:
    """Nonlinear Bratu equation -lap(u) = lam * e^u, zero boundary.

    h^2-scaled form: (4u - neighbours) - lam h^2 e^u = 0, diagonal 4.
    """
    if n_side < 2:
        raise ValueError(f"n_side must be >= 2, got {n_side}")
    if lam < 0.0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    grid = Grid2D(n_side)
    h2 = grid.h * grid.h
    n = grid.unknowns

    def g(u):
        u = np.asarray(u, dtype=float)
        u2d = u.reshape(n_side, n_side)
        east, west, north, south = _neighbours(u2d)
        lap = 4.0 * u2d - east - west - north - south
        with np.errstate(over="ignore", invalid="ignore"):
            source = lam * h2 * np.exp(u2d)
        return u + (source - lap).ravel() / 4.0

    return FixedPointProblem(
        n=n,
        g=g,
        label="bratu",
        default_start=np.zeros(n),
        params={"N": n_side, "lam": lam, "h": grid.h, "operator_diag": 4.0},
    )


def convdiff_problem(
    n_side: int, eps: float = 1.0, react: float = 3.0, scheme: str = "centered"
) -> FixedPointProblem:
    """Convection-diffusion-reaction: eps(-u_xx - u_yy) + u_x + u_y + react u^2 = f.

    f = 2 pi^2 sin(pi x) sin(pi y), zero boundary. Convection is either
    centered or backward (upwind for the +x, +y flow). In h^2-scaled form
    the operator diagonal is 4 eps (centered) or 4 eps + 2h (upwind).
    """
    if scheme not in ("centered", "upwind"):
        raise ValueError(f"scheme must be 'centered' or 'upwind', got {scheme!r}")
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if n_side < 2:
        raise ValueError(f"n_side must be >= 2, got {n_side}")
    grid = Grid2D(n_side)
    h = grid.h
    h2 = h * h
    n = grid.unknowns
    xg, yg = grid.mesh()
    rhs = h2 * 2.0 * np.pi**2 * np.sin(np.pi * xg) * np.sin(np.pi * yg)
    diag = 4.0 * eps if scheme == "centered" else 4.0 * eps + 2.0 * h

    def g(u):
        u = np.asarray(u, dtype=float)
        u2d = u.reshape(n_side, n_side)
        east, west, north, south = _neighbours(u2d)
        lap = 4.0 * u2d - east - west - north - south
        if scheme == "centered":
            conv = 0.5 * h * (east - west + north - south)
        else:
            conv = h * (2.0 * u2d - west - south)
        with np.errstate(over="ignore", invalid="ignore"):
            resid = rhs - (eps * lap + conv + react * h2 * u2d * u2d)
        return u + resid.ravel() / diag

    return FixedPointProblem(
        n=n,
        g=g,
        label=f"convdiff-{scheme}",
        default_start=np.ones(n),
        params={
            "N": n_side,
            "eps": eps,
            "react": react,
            "scheme": scheme,
            "h": h,
            "rhs": rhs.ravel(),
            "operator_diag": diag,
        },
    )


def tridiag_problem(n: int = 100) -> FixedPointProblem:
    """Linear system A x = b with A = tridiag(-1, 2, -1) and b = ones.

    Jacobi splitting gives g(x) = x - (A x - b) / 2; the solution is
    x_i = i (n + 1 - i) / 2 for 1-based i.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    b = np.ones(n)
    idx = np.arange(1, n + 1, dtype=float)
    known = idx * (n + 1 - idx) / 2.0

    def a_apply(x):
        x = np.asarray(x, dtype=float)
        p = np.pad(x, 1)
        return 2.0 * x - p[:-2] - p[2:]

    def g(x):
        x = np.asarray(x, dtype=float)
        return x - (a_apply(x) - b) / 2.0

    return FixedPointProblem(
        n=n,
        g=g,
        label="tridiag",
        default_start=np.zeros(n),
        params={"n": n, "b": b, "a_apply": a_apply, "operator_diag": 2.0},
        known_solution=known,
    )


def _dense_guard(n_side: int) -> None:
    if n_side > _DENSE_LIMIT:
        raise ValueError(
            f"dense assembly is an oracle path, limited to n_side <= {_DENSE_LIMIT}"
        )


def bratu_dense_operator(n_side: int) -> np.ndarray:
    """Dense linear part of the Bratu stencil (entry loops, oracle path)."""
    _dense_guard(n_side)
    grid = Grid2D(n_side)
    a = np.zeros((grid.unknowns, grid.unknowns))
    for i in range(n_side):
        for j in range(n_side):
            row = grid.index(i, j)
            a[row, row] = 4.0
            for di, dj, coeff in ((0, 1, -1.0), (0, -1, -1.0), (1, 0, -1.0), (-1, 0, -1.0)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n_side and 0 <= jj < n_side:
                    a[row, grid.index(ii, jj)] = coeff
    return a


def convdiff_dense_operator(n_side: int, eps: float, scheme: str = "centered") -> np.ndarray:
    """Dense linear convection-diffusion operator (entry loops, oracle path)."""
    _dense_guard(n_side)
    if scheme not in ("centered", "upwind"):
        raise ValueError(f"scheme must be 'centered' or 'upwind', got {scheme!r}")
    grid = Grid2D(n_side)
    h = grid.h
    if scheme == "centered":
        diag = 4.0 * eps
        east = north = -eps + 0.5 * h
        west = south = -eps - 0.5 * h
    else:
        diag = 4.0 * eps + 2.0 * h
        east = north = -eps
        west = south = -eps - h
    a = np.zeros((grid.unknowns, grid.unknowns))
    for i in range(n_side):
        for j in range(n_side):
            row = grid.index(i, j)
            a[row, row] = diag
            for di, dj, coeff in ((0, 1, east), (0, -1, west), (1, 0, north), (-1, 0, south)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n_side and 0 <= jj < n_side:
                    a[row, grid.index(ii, jj)] = coeff
    return a


def gmres_reference(
    a_apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray,
    iters: int,
) -> tuple[list[np.ndarray], list[float]]:
    """Full-memory GMRES with Givens rotations, for equivalence checks.

    Returns the iterates x_0 .. x_K and the true residual norms
    ||b - A x_k||_2, recomputed per iterate. Stops early on happy
    breakdown, where the Krylov space contains the exact solution.
    """
    b = np.asarray(b, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if b.ndim != 1 or x0.shape != b.shape:
        raise ValueError("b and x0 must be matching 1-D vectors")
    n = b.shape[0]
    if not 1 <= iters <= n:
        raise ValueError(f"iters must be in [1, {n}], got {iters}")

    xs = [x0.copy()]
    r0 = b - a_apply(x0)
    beta = float(np.linalg.norm(r0))
    rnorms = [beta]
    if beta == 0.0:
        return xs, rnorms

    basis = np.zeros((n, iters + 1))
    basis[:, 0] = r0 / beta
    rmat = np.zeros((iters + 1, iters))
    cs = np.zeros(iters)
    sn = np.zeros(iters)
    gvec = np.zeros(iters + 1)
    gvec[0] = beta

    for j in range(iters):
        w = a_apply(basis[:, j])
        scale = float(np.linalg.norm(w))
        col = np.zeros(j + 2)
        for i in range(j + 1):  # modified Gram-Schmidt
            col[i] = float(np.dot(basis[:, i], w))
            w = w - col[i] * basis[:, i]
        hsub = float(np.linalg.norm(w))
        col[j + 1] = hsub
        happy = hsub <= 1e-14 * max(scale, 1e-300)

        for i in range(j):
            tmp = cs[i] * col[i] + sn[i] * col[i + 1]
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1]
            col[i] = tmp
        denom = float(np.hypot(col[j], col[j + 1]))
        if denom == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j], sn[j] = col[j] / denom, col[j + 1] / denom
        col[j] = denom
        col[j + 1] = 0.0
        rmat[: j + 2, j] = col
        gvec[j + 1] = -sn[j] * gvec[j]
        gvec[j] = cs[j] * gvec[j]

        y = np.linalg.solve(rmat[: j + 1, : j + 1], gvec[: j + 1])
        x = x0 + basis[:, : j + 1] @ y
        xs.append(x)
        rnorms.append(float(np.linalg.norm(b - a_apply(x))))
        if happy or j + 1 >= iters:
            break
        basis[:, j + 1] = w / hsub
    return xs, rnorms
