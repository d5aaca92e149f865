"""First-kind integral equations (Tx)(t) = int_a^b K(t,s) x(s) ds = g(t) on a grid,
solved by random row projections.

Functions on [a, b] are stored by their values at n uniform nodes; the inner
product is the composite trapezoid rule <u, v> = sum_j w_j u_j v_j.  Each
node t_i gives one affine constraint <u_i, x> = g(t_i) with u_i = K(t_i, .),
whose projection is x + (g(t_i) - (Tx)(t_i)) / |u_i|^2 u_i.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, RowSkippedError
from .operators import Operator, as_point
from .sampling import RngStream

UNUSABLE_REL = 1e-14


@dataclass
class DiscreteL2Problem:
    grid: np.ndarray
    weights: np.ndarray
    kernel_matrix: np.ndarray  # K[i, j] ~ K(t_i, s_j)
    rhs: np.ndarray
    a: float
    b: float

    def __post_init__(self):
        self.row_norms2 = (self.kernel_matrix**2 * self.weights).sum(axis=1)
        top = self.row_norms2.max(initial=0.0)
        self.usable = self.row_norms2 > max(UNUSABLE_REL * top, 0.0) if top > 0 else np.zeros(len(self.grid), bool)
        self._A = self.kernel_matrix * self.weights  # (Tx)_i = A[i] @ x

    @property
    def n(self) -> int:
        return len(self.grid)

    def inner(self, u, v) -> float:
        return float(np.sum(self.weights * u * v))

    def norm(self, u) -> float:
        return math.sqrt(self.inner(u, u))


def _trapezoid_weights(a, b, n):
    h = (b - a) / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def discretize(
    kernel: Callable,
    g: Callable,
    a: float,
    b: float,
    n: int,
    cell_integral: Optional[Callable] = None,
) -> DiscreteL2Problem:
    """Tabulate kernel and right-hand side on a uniform grid with trapezoid weights.

    ``kernel(t, s)`` and ``g(t)`` must accept numpy arrays.  Kernels with a
    jump along a curve should pass ``cell_integral(t, lo, hi)`` returning
    int_lo^hi K(t, s) ds; the tabulated value is then the average of K over
    the dual cell of each node (whose length equals its trapezoid weight).
    """
    if n < 2 or not a < b:
        raise ConfigError("need n >= 2 and a < b")
    t = np.linspace(a, b, n)
    w = _trapezoid_weights(a, b, n)
    if cell_integral is None:
        Kmat = np.asarray(kernel(t[:, None], t[None, :]), dtype=float) * np.ones((n, n))
    else:
        h = (b - a) / (n - 1)
        lo = np.maximum(t - h / 2, a)
        hi = np.minimum(t + h / 2, b)
        Kmat = np.asarray(cell_integral(t[:, None], lo[None, :], hi[None, :]), dtype=float) / w[None, :]
    rhs = np.asarray(g(t), dtype=float) * np.ones(n)
    if not np.all(np.isfinite(Kmat)) or not np.all(np.isfinite(rhs)):
        raise NumericError("non-finite kernel or right-hand side values")
    return DiscreteL2Problem(t, w, Kmat, rhs, float(a), float(b))


def apply_T(problem: DiscreteL2Problem, x) -> np.ndarray:
    x = as_point(x)
    if len(x) != problem.n:
        raise DimensionError(f"expected {problem.n} grid values, got {len(x)}")
    return problem._A @ x


def project_row(problem: DiscreteL2Problem, t_index: int, x) -> np.ndarray:
    """Projection onto C_t = {x : (Tx)(t) = g(t)} in the weighted inner product."""
    x = as_point(x)
    if len(x) != problem.n:
        raise DimensionError(f"expected {problem.n} grid values, got {len(x)}")
    i = int(t_index)
    if not problem.usable[i]:
        raise RowSkippedError(f"row {i} (t={problem.grid[i]:g}) has negligible norm")
    c = (problem.rhs[i] - problem._A[i] @ x) / problem.row_norms2[i]
    return x + c * problem.kernel_matrix[i]


@dataclass(frozen=True)
class RowProjector(Operator):
    """The projector onto one constraint of a discretized integral equation, as an Operator."""

    problem: DiscreteL2Problem = None
    t_index: int = 0
    averaged_constant: Optional[float] = 0.5
    is_projector: bool = True

    def expected_dim(self):
        return self.problem.n

    def _apply_many(self, X):
        return np.array([project_row(self.problem, self.t_index, x) for x in X])


def least_squares_solution(problem: DiscreteL2Problem) -> np.ndarray:
    """Minimum weighted-norm least-squares solution of the usable rows (direct solve)."""
    rows = problem.usable
    sw = np.sqrt(problem.weights)
    y, *_ = np.linalg.lstsq(problem._A[rows] / sw, problem.rhs[rows], rcond=None)
    return y / sw


@dataclass
class ResidualHistory:
    sup: np.ndarray
    l2: np.ndarray  # weighted L2 norm of Tx - g
    rows: np.ndarray  # row index used at each iteration

    def smoothed(self, window: int = 100) -> np.ndarray:
        """Block means of the L2 residual over consecutive windows."""
        m = len(self.l2) // window
        return self.l2[: m * window].reshape(m, window).mean(axis=1)


def _draw_rows(problem: DiscreteL2Problem, K: int, rng: RngStream) -> np.ndarray:
    # uniform over the usable rows; one uniform per draw
    usable = np.nonzero(problem.usable)[0]
    idx = (rng.uniform(K) * len(usable)).astype(np.int64)
    return usable[np.minimum(idx, len(usable) - 1)]


def solve_random_sweep(problem: DiscreteL2Problem, x0, K: int, seed: int, refresh: int = 1000):
    """K random row projections x_{k+1} = P_{t_k} x_k starting from x0.

    The residual Tx - g is updated incrementally through the Gram matrix of
    the rows and recomputed exactly every ``refresh`` iterations.
    """
    if not np.any(problem.usable):
        raise ConfigError("no usable rows: the kernel vanishes on the grid")
    x = as_point(x0).copy()
    if len(x) != problem.n:
        raise DimensionError(f"expected {problem.n} grid values, got {len(x)}")
    rows = _draw_rows(problem, K, RngStream(seed, 0))
    Kmat, A, g = problem.kernel_matrix, problem._A, problem.rhs
    gram_rows = np.ascontiguousarray((A @ Kmat.T).T)  # gram_rows[i] = T u_i
    nrm2, w = problem.row_norms2, problem.weights
    r = A @ x - g
    sup = np.empty(K)
    l2 = np.empty(K)
    for k, i in enumerate(rows):
        c = -r[i] / nrm2[i]
        x += c * Kmat[i]
        if (k + 1) % refresh == 0:
            r = A @ x - g
        else:
            r += c * gram_rows[i]
        sup[k] = np.abs(r).max()
        l2[k] = math.sqrt(w @ (r * r))
    return x, ResidualHistory(sup, l2, rows)


# ----------------------------------------------------------------------------
# kernel registry
# ----------------------------------------------------------------------------


def _indicator_kernel(a):
    def kernel(t, s):
        return (s <= t).astype(float) * (s >= a)

    def cell(t, lo, hi):
        return np.clip(np.minimum(hi, t) - lo, 0.0, None)

    return kernel, cell


def _product_kernel(t, s):
    return t * s


def _gaussian_kernel(width=0.1):
    def kernel(t, s):
        return np.exp(-((t - s) ** 2) / (2 * width**2))

    return kernel


@dataclass(frozen=True)
class KernelEntry:
    name: str
    description: str
    make: Callable  # (a, b) -> (kernel, cell_integral or None)


KERNELS = {
    "indicator": KernelEntry(
        "indicator",
        "K(t,s) = 1[a <= s <= t]; (Tx)(t) = int_a^t x, the differentiation example",
        lambda a, b: _indicator_kernel(a),
    ),
    "product_ts": KernelEntry("product_ts", "separable K(t,s) = t s", lambda a, b: (_product_kernel, None)),
    "gaussian_kernel": KernelEntry(
        "gaussian_kernel", "smoothing K(t,s) = exp(-(t-s)^2 / 0.02)", lambda a, b: (_gaussian_kernel(0.1), None)
    ),
}

RHS = {
    "half_t_squared": lambda t: 0.5 * t**2,
    "t_over_3": lambda t: t / 3.0,
    "t": lambda t: 1.0 * t,
    "zero": lambda t: 0.0 * t,
}

SOLUTIONS = {
    "identity": lambda s: 1.0 * s,
    "one": lambda s: np.ones_like(s),
}


def build_problem(kernel: str, rhs: str, a: float, b: float, n: int) -> DiscreteL2Problem:
    if kernel not in KERNELS:
        raise ConfigError(f"unknown kernel {kernel!r}; valid: {sorted(KERNELS)}")
    if rhs not in RHS:
        raise ConfigError(f"unknown rhs {rhs!r}; valid: {sorted(RHS)}")
    k, cell = KERNELS[kernel].make(a, b)
    return discretize(k, RHS[rhs], a, b, n, cell_integral=cell)
