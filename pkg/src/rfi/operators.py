"""Operator families on R^n and their fixed-point sets.

Every operator works on a single point (``apply``) and on a batch of points
stored row-wise (``apply_many``).  The single-point path is the batch path on
one row, so both give bitwise identical results.  Parametric operators
(interval, line, rotation, disk-on-circle) also expose a classmethod
``batch(params, X)`` that applies a *different* member of the family to
every row, which is what the Markov chain engine uses.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, NumericError, SolverError

TAU_C = 1e-9  # membership tolerance for "x in C"


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    """Validate and copy ``x`` into a finite 1-D float array."""
    p = np.array(x, dtype=float, ndmin=1)
    if p.ndim != 1:
        raise DimensionError(f"a point must be 1-D, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise NumericError(f"non-finite coordinates in {p}")
    return p


def as_batch(X, dim: Optional[int] = None) -> np.ndarray:
    B = np.array(X, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.ndim != 2:
        raise DimensionError(f"a batch must be 2-D, got shape {B.shape}")
    if dim is not None and B.shape[1] != dim:
        raise DimensionError(f"expected dimension {dim}, got {B.shape[1]}")
    if not np.all(np.isfinite(B)):
        raise NumericError("non-finite coordinates in batch")
    return B


def _rowdot(X: np.ndarray, a: np.ndarray) -> np.ndarray:
    # explicit per-row reduction; keeps results independent of batch size
    return (X * a).sum(axis=1)


@dataclass(frozen=True)
class ClassFlags:
    nonexpansive: bool
    paracontractive: bool
    averaged: bool


_PROJECTOR_FLAGS = ClassFlags(nonexpansive=True, paracontractive=True, averaged=True)


class Operator:
    """Base class.  Subclasses implement ``_apply_many`` on a validated batch."""

    dim: Optional[int] = None
    averaged_constant: Optional[float] = None
    flags: ClassFlags = ClassFlags(False, False, False)
    is_projector: bool = False

    def expected_dim(self) -> Optional[int]:
        return self.dim

    def apply_many(self, X) -> np.ndarray:
        B = as_batch(X, self.expected_dim())
        return self._apply_many(B)

    def apply(self, x) -> np.ndarray:
        p = as_point(x, self.expected_dim())
        return self._apply_many(p[None, :])[0]

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    def fixed_point_set(self, dim: Optional[int] = None) -> "FixedPointSet":
        raise NotImplementedError(f"{type(self).__name__} has no registered fixed-point set")

    def _apply_many(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


# ----------------------------------------------------------------------------
# projectors
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Identity(Operator):
    """Projector onto the whole space."""

    averaged_constant: Optional[float] = 0.5
    flags: ClassFlags = _PROJECTOR_FLAGS
    is_projector: bool = True

    def _apply_many(self, X):
        return X.copy()


@dataclass(frozen=True)
class IntervalProjector(Operator):
    """Projector onto the interval [r - 1/2, r + 1/2] of the real line."""

    r: float = 0.0
    dim: Optional[int] = 1
    averaged_constant: Optional[float] = 0.5
    flags: ClassFlags = _PROJECTOR_FLAGS
    is_projector: bool = True

    @classmethod
    def batch(cls, r, X: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)[:, None]
        return np.minimum(np.maximum(X, r - 0.5), r + 0.5)

    def _apply_many(self, X):
        return self.batch(np.full(len(X), self.r), X)

    def fixed_point_set(self, dim=None):
        return Box([self.r - 0.5], [self.r + 0.5])


@dataclass(frozen=True)
class LineProjector(Operator):
    """Projector onto the line through 0 spanned by (cos alpha, sin alpha)."""

    alpha: float = 0.0
    dim: Optional[int] = 2
    averaged_constant: Optional[float] = 0.5
    flags: ClassFlags = _PROJECTOR_FLAGS
    is_projector: bool = True

    @classmethod
    def batch(cls, alpha, X: np.ndarray) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        s, c = np.sin(alpha), np.cos(alpha)
        d = X[:, 0] * s - X[:, 1] * c
        out = np.empty_like(X)
        out[:, 0] = X[:, 0] - d * s
        out[:, 1] = X[:, 1] + d * c
        return out

    def _apply_many(self, X):
        return self.batch(np.full(len(X), self.alpha), X)

    def fixed_point_set(self, dim=None):
        return AffineSubspace([0.0, 0.0], [[math.cos(self.alpha), math.sin(self.alpha)]])


def _ball_project(centers: np.ndarray, radius, X: np.ndarray) -> np.ndarray:
    V = X - centers
    nv = np.sqrt((V * V).sum(axis=1))
    radius = np.broadcast_to(np.asarray(radius, dtype=float), nv.shape)
    outside = nv > radius
    out = X.copy()
    if np.any(outside):
        scale = radius[outside] / nv[outside]
        out[outside] = centers[outside] + V[outside] * scale[:, None]
    return out


@dataclass(frozen=True)
class BallProjector(Operator):
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    averaged_constant: Optional[float] = 0.5
    flags: ClassFlags = _PROJECTOR_FLAGS
    is_projector: bool = True

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(as_point(self.center).tolist()))
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def expected_dim(self):
        return len(self.center)

    def _apply_many(self, X):
        C = np.broadcast_to(np.asarray(self.center), X.shape)
        return _ball_project(C, self.radius, X)

    def fixed_point_set(self, dim=None):
        return Ball(self.center, self.radius)


@dataclass(frozen=True)
class PointProjector(Operator):
    """The constant map onto one point (projector onto a singleton)."""

    point: tuple = (0.0, 0.0)
    averaged_constant: Optional[float] = 0.5
    flags: ClassFlags = _PROJECTOR_FLAGS
    is_projector: bool = True

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(as_point(self.point).tolist()))

    def expected_dim(self):
        return len(self.point)

    def _apply_many(self, X):
        return np.broadcast_to(np.asarray(self.point), X.shape).copy()

    def fixed_point_set(self, dim=None):
        return SinglePoint(self.point)


@dataclass(frozen=True)
class DiskOnCircle:
    """Builder t -> projector onto the closed ball B(rho * e_t, radius) in R^2."""

    rho: float
    radius: float = 1.0

    def __call__(self, t: float) -> BallProjector:
        return BallProjector((self.rho * math.cos(t), self.rho * math.sin(t)), self.radius)

    def batch(self, t, X: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        C = np.stack([self.rho * np.cos(t), self.rho * np.sin(t)], axis=1)
        return _ball_project(C, self.radius, X)


@dataclass(frozen=True)
class HalfspaceProjector(Operator):
    """Projector onto {x : <normal, x> <= offset}."""

    normal: tuple = (1.0, 0.0)
    offset: float = 0.0
    averaged_constant: Optional[float] = 0.5
    flags: ClassFlags = _PROJECTOR_FLAGS
    is_projector: bool = True

    def __post_init__(self):
        a = as_point(self.normal)
        if not np.any(a != 0):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", tuple(a.tolist()))

    def expected_dim(self):
        return len(self.normal)

    def _apply_many(self, X):
        a = np.asarray(self.normal)
        viol = _rowdot(X, a) - self.offset
        out = X.copy()
        hit = viol > 0
        if np.any(hit):
            out[hit] = X[hit] - (viol[hit] / float(a @ a))[:, None] * a
        return out

    def fixed_point_set(self, dim=None):
        return HalfspaceIntersection([(self.normal, self.offset)])


@dataclass(frozen=True)
class AffineHyperplaneProjector(Operator):
    """Projector onto {x : <u, x> = b}."""

    u: tuple = (1.0, 0.0)
    b: float = 0.0
    averaged_constant: Optional[float] = 0.5
    flags: ClassFlags = _PROJECTOR_FLAGS
    is_projector: bool = True

    def __post_init__(self):
        u = as_point(self.u)
        if not np.any(u != 0):
            raise ValueError("hyperplane normal must be nonzero")
        object.__setattr__(self, "u", tuple(u.tolist()))

    def expected_dim(self):
        return len(self.u)

    def _apply_many(self, X):
        u = np.asarray(self.u)
        gap = self.b - _rowdot(X, u)
        return X + (gap / float(u @ u))[:, None] * u

    def fixed_point_set(self, dim=None):
        u = np.asarray(self.u)
        p = self.b / float(u @ u) * u
        # orthonormal basis of u-perp from the SVD null space
        _, _, vt = np.linalg.svd(u[None, :])
        return AffineSubspace(p, vt[1:])


# ----------------------------------------------------------------------------
# non-projector operators
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Rotation(Operator):
    """Counter-clockwise rotation of the plane by ``phi``: nonexpansive, not paracontractive."""

    phi: float = 0.0
    dim: Optional[int] = 2
    flags: ClassFlags = ClassFlags(nonexpansive=True, paracontractive=False, averaged=False)

    @classmethod
    def batch(cls, phi, X: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        c, s = np.cos(phi), np.sin(phi)
        out = np.empty_like(X)
        out[:, 0] = c * X[:, 0] - s * X[:, 1]
        out[:, 1] = s * X[:, 0] + c * X[:, 1]
        return out

    def _apply_many(self, X):
        return self.batch(np.full(len(X), self.phi), X)

    def fixed_point_set(self, dim=None):
        if math.remainder(self.phi, 2 * math.pi) == 0:
            return AffineSubspace([0.0, 0.0], np.eye(2))
        return SinglePoint([0.0, 0.0])


@dataclass(frozen=True)
class Huber(Operator):
    """The Huber function x^2/(2a) for |x| <= a, |x| - a/2 otherwise, as a map R -> R.

    Paracontractive with Fix = {0}, but not averaged for any constant.
    """

    alpha: float = 1.0
    dim: Optional[int] = 1
    flags: ClassFlags = ClassFlags(nonexpansive=True, paracontractive=True, averaged=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("Huber parameter must be positive")

    def _apply_many(self, X):
        a = self.alpha
        ax = np.abs(X)
        return np.where(ax <= a, X * X / (2 * a), ax - a / 2)

    def fixed_point_set(self, dim=None):
        return SinglePoint([0.0])


def _polish(rho: float, res: float, s: float) -> float:
    # one more Newton step once within tolerance, kept only if it helps
    e = math.exp(-rho * rho)
    cand = rho - res / (1.0 + 2.0 * e * (1.0 - 2.0 * rho * rho))
    ec = math.exp(-cand * cand)
    return cand if cand >= 0 and abs((1.0 + 2.0 * ec) * cand - s) < abs(res) else rho


def solve_exp_prox_radius(s: float, tol: float = 1e-12, maxiter: int = 200) -> float:
    """Return the unique rho >= 0 with (1 + 2 exp(-rho^2)) rho = s.

    The left side is strictly increasing on [0, inf), so a Newton iteration
    safeguarded by the bracket [0, s] converges from rho = s.
    """
    s = float(s)
    if not math.isfinite(s) or s < 0:
        raise NumericError(f"radius must be finite and >= 0, got {s}")
    if s == 0.0:
        return 0.0
    lo, hi = 0.0, s
    rho = s
    for _ in range(maxiter):
        e = math.exp(-rho * rho)
        res = (1.0 + 2.0 * e) * rho - s
        if abs(res) <= tol:
            return _polish(rho, res, s)
        if res > 0:
            hi = rho
        else:
            lo = rho
        deriv = 1.0 + 2.0 * e * (1.0 - 2.0 * rho * rho)
        step = rho - res / deriv
        rho = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            e = math.exp(-rho * rho)
            if abs((1.0 + 2.0 * e) * rho - s) <= tol:
                return rho
    raise SolverError(f"exp-prox radius solve did not converge for s={s}")


@dataclass(frozen=True)
class ExpQuasiconvexProx(Operator):
    """prox of f(x) = 1 - exp(-|x|^2): the inverse of A(x) = (1 + 2 exp(-|x|^2)) x.

    Paracontracting towards 0 but not nonexpansive (its Jacobian at A(e_1) has
    norm > 1).
    """

    dim: Optional[int] = None
    flags: ClassFlags = ClassFlags(nonexpansive=False, paracontractive=True, averaged=False)

    def _apply_many(self, X):
        s = np.sqrt((X * X).sum(axis=1))
        out = np.zeros_like(X)
        for i, si in enumerate(s):
            if si > 0:
                out[i] = X[i] * (solve_exp_prox_radius(si) / si)
        return out

    def fixed_point_set(self, dim=None):
        n = self.dim if self.dim is not None else dim
        if n is None:
            raise DimensionError("dimension needed for the fixed-point set")
        return SinglePoint(np.zeros(n))


def exp_prox_forward(x) -> np.ndarray:
    """A(x) = (1 + 2 exp(-|x|^2)) x, the map inverted by ExpQuasiconvexProx."""
    x = as_point(x)
    return (1.0 + 2.0 * math.exp(-float(x @ x))) * x


# ----------------------------------------------------------------------------
# fixed-point sets
# ----------------------------------------------------------------------------


class FixedPointSet:
    """A closed set with exact distance and (for built-ins) nearest-point maps."""

    dim: Optional[int] = None

    def dist_many(self, X: np.ndarray) -> np.ndarray:
        return np.sqrt(((X - self.project_many(X)) ** 2).sum(axis=1))

    def project_many(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dist(self, x) -> float:
        return float(self.dist_many(as_point(x, self.dim)[None, :])[0])

    def project(self, x) -> np.ndarray:
        return self.project_many(as_point(x, self.dim)[None, :])[0]

    def contains(self, x, tol: float = TAU_C) -> bool:
        return self.dist(x) <= tol

    def probes(self, x) -> list:
        """Points of the set used to test strict decrease of d(Tx, y) against d(x, y)."""
        return [self.project(x)]


class SinglePoint(FixedPointSet):
    def __init__(self, point):
        self.point = as_point(point)
        self.dim = len(self.point)

    def project_many(self, X):
        return np.broadcast_to(self.point, X.shape).copy()

    def dist_many(self, X):
        V = X - self.point
        return np.sqrt((V * V).sum(axis=1))

    def __repr__(self):
        return f"SinglePoint({self.point.tolist()})"


class Ball(FixedPointSet):
    def __init__(self, center, radius: float):
        self.center = as_point(center)
        self.radius = float(radius)
        if not self.radius >= 0:
            raise ValueError("ball radius must be >= 0")
        self.dim = len(self.center)

    def dist_many(self, X):
        V = X - self.center
        return np.maximum(np.sqrt((V * V).sum(axis=1)) - self.radius, 0.0)

    def project_many(self, X):
        return _ball_project(np.broadcast_to(self.center, X.shape), self.radius, X)

    def probes(self, x):
        return [self.project(x), self.center.copy()]

    def __repr__(self):
        return f"Ball({self.center.tolist()}, {self.radius})"


class Box(FixedPointSet):
    """Axis-aligned box; bounds may be infinite (orthants, slabs, halfplanes)."""

    def __init__(self, lo, hi):
        self.lo = np.array(lo, dtype=float, ndmin=1)
        self.hi = np.array(hi, dtype=float, ndmin=1)
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("box needs lo <= hi of equal length")
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)):
            raise NumericError("NaN box bound")
        self.dim = len(self.lo)

    def project_many(self, X):
        return np.minimum(np.maximum(X, self.lo), self.hi)

    def probes(self, x):
        x = as_point(x, self.dim)
        near = self.project(x)
        corner = np.where(np.abs(x - self.lo) <= np.abs(x - self.hi), self.lo, self.hi)
        out = [near]
        if np.all(np.isfinite(corner)):
            out.append(corner)
        return out

    def __repr__(self):
        return f"Box({self.lo.tolist()}, {self.hi.tolist()})"


class AffineSubspace(FixedPointSet):
    """point + span(directions); directions are orthonormalized on construction."""

    def __init__(self, point, directions=()):
        self.point = as_point(point)
        self.dim = len(self.point)
        D = np.array(directions, dtype=float).reshape(-1, self.dim)
        if len(D):
            q, r = np.linalg.qr(D.T)
            keep = np.abs(np.diag(r)) > 1e-12
            self.basis = q[:, keep].T.copy()
        else:
            self.basis = np.zeros((0, self.dim))

    def project_many(self, X):
        V = X - self.point
        out = np.broadcast_to(self.point, X.shape).copy()
        for q in self.basis:
            out += _rowdot(V, q)[:, None] * q
        return out

    def __repr__(self):
        return f"AffineSubspace({self.point.tolist()}, rank={len(self.basis)})"


class HalfspaceIntersection(FixedPointSet):
    """{x : <a_i, x> <= b_i for all i}, projected exactly by active-set enumeration.

    Enumeration is exponential in the number of constraints, so it is limited
    to small systems (the feasibility examples here have at most a handful).
    """

    max_constraints = 12

    def __init__(self, constraints: Sequence[tuple]):
        if not constraints:
            raise ValueError("need at least one halfspace")
        if len(constraints) > self.max_constraints:
            raise ValueError(f"at most {self.max_constraints} halfspaces supported")
        self.A = np.array([as_point(a) for a, _ in constraints])
        self.b = np.array([float(b) for _, b in constraints])
        self.dim = self.A.shape[1]

    def _project_one(self, x):
        A, b = self.A, self.b
        if np.all(A @ x <= b):
            return x.copy()
        m, n = A.shape
        for size in range(1, min(m, n) + 1):
            for S in itertools.combinations(range(m), size):
                AS = A[list(S)]
                lam, *_ = np.linalg.lstsq(AS @ AS.T, AS @ x - b[list(S)], rcond=None)
                if np.any(lam < -1e-12):
                    continue
                y = x - AS.T @ lam
                if np.all(A @ y <= b + 1e-12):
                    return y
        raise SolverError("no KKT point found; the halfspace intersection may be empty")

    def project_many(self, X):
        return np.array([self._project_one(x) for x in X]).reshape(X.shape)

    def __repr__(self):
        return f"HalfspaceIntersection({len(self.b)} constraints)"


class Custom(FixedPointSet):
    """User-supplied distance (and optionally nearest-point) callbacks."""

    def __init__(self, dist_fn: Callable, project_fn: Optional[Callable] = None, dim=None):
        self._dist = dist_fn
        self._project = project_fn
        self.dim = dim

    def dist_many(self, X):
        return np.array([float(self._dist(x)) for x in X])

    def project_many(self, X):
        if self._project is None:
            raise NotImplementedError("custom set has no projection callback")
        return np.array([self._project(x) for x in X]).reshape(X.shape)


# ----------------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------------


def apply(op: Operator, x) -> np.ndarray:
    return op.apply(x)


def fixed_point_residual(op: Operator, x) -> float:
    """Euclidean norm of x - T x."""
    p = as_point(x, op.expected_dim())
    return float(np.linalg.norm(p - op.apply(p)))


@dataclass
class AveragedReport:
    alpha: float
    passed: np.ndarray
    slack: np.ndarray  # rhs - lhs; negative means violated
    tol: float = 1e-9

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def worst_violation(self) -> float:
        """Largest amount by which the inequality is exceeded (0 when all pass)."""
        return float(max(0.0, -np.min(self.slack)))


def verify_averaged_sampled(op: Operator, alpha: float, pairs, tol: float = 1e-9) -> AveragedReport:
    """Check |Tx-Ty|^2 + (1-a)/a |(x-Tx)-(y-Ty)|^2 <= |x-y|^2 on each sampled pair."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one pair")
    dim = op.expected_dim()
    X = as_batch([as_point(x, dim) for x, _ in pairs], dim)
    Y = as_batch([as_point(y, dim) for _, y in pairs], dim)
    TX, TY = op.apply_many(X), op.apply_many(Y)
    lhs = ((TX - TY) ** 2).sum(axis=1) + (1 - alpha) / alpha * (((X - TX) - (Y - TY)) ** 2).sum(axis=1)
    rhs = ((X - Y) ** 2).sum(axis=1)
    slack = rhs - lhs
    return AveragedReport(alpha=alpha, passed=slack >= -tol, slack=slack, tol=tol)


@dataclass
class ParacontractionReport:
    margins: np.ndarray  # min over probes y of d(x,y) - d(Tx,y), NaN for skipped samples
    skipped: np.ndarray  # samples lying in the fixed-point set

    @property
    def min_margin(self) -> float:
        m = self.margins[~self.skipped]
        return float(np.min(m)) if m.size else math.inf

    @property
    def passed(self) -> bool:
        return self.min_margin > 0


def verify_paracontraction_sampled(op: Operator, fix: FixedPointSet, samples, tau: float = TAU_C) -> ParacontractionReport:
    """Report the strict-decrease margin d(x,y) - d(Tx,y) for probes y in ``fix``."""
    samples = [as_point(x, op.expected_dim()) for x in samples]
    margins = np.full(len(samples), np.nan)
    skipped = np.zeros(len(samples), dtype=bool)
    for i, x in enumerate(samples):
        if fix.dist(x) <= tau:
            skipped[i] = True
            continue
        tx = op.apply(x)
        margins[i] = min(np.linalg.norm(x - y) - np.linalg.norm(tx - y) for y in fix.probes(x))
    return ParacontractionReport(margins=margins, skipped=skipped)
