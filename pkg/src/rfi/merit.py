"""The merit function R(x) = E|x - T_xi x|^2, its gradient and derived constants.

R vanishes exactly on the feasible set.  For projector families it is convex
with a 4-Lipschitz gradient, 1/2 grad R(x) = x - E[P_xi x], and the
regularity constant kappa = sup dist^2(x, C) / R(x) fixes the geometric rate
sqrt(1 - (1 - alpha) / (alpha kappa)) of E[dist(X_k, C)].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .chain import Problem
from .errors import ConfigError, InconsistencyError, UnsupportedOperatorError
from .operators import TAU_C, as_point
from .sampling import TAG_S, RngStream


@dataclass
class MeritEstimate:
    value: float
    std_error: float
    n_samples: int
    method: str  # "closed_form" | "monte_carlo" | "quadrature"

    @classmethod
    def exact(cls, value: float) -> "MeritEstimate":
        return cls(float(value), 0.0, 0, "closed_form")


def _draw_images(problem: Problem, x: np.ndarray, N: int, rng: RngStream) -> np.ndarray:
    X = np.tile(x, (N, 1))
    u = rng.uniform(N)
    v = rng.substream(TAG_S).uniform(N) if problem.second_family is not None else None
    return problem.step_many(X, u, v)


def merit_mc(problem: Problem, x, N: int, rng: RngStream) -> MeritEstimate:
    """Sample mean of |x - T_xi x|^2 over N index draws; std_error = s / sqrt(N)."""
    if N < 2:
        raise ConfigError("merit_mc needs N >= 2")
    x = as_point(x)
    TX = _draw_images(problem, x, N, rng)
    sq = ((x - TX) ** 2).sum(axis=1)
    return MeritEstimate(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(N)), N, "monte_carlo")


def merit_quadrature(problem: Problem, x, points: int = 2001) -> MeritEstimate:
    """Composite Simpson rule in the index for continuous uniform laws.

    Accurate for smooth integrands (lines, disks); use the closed forms for
    families whose integrand has kinks close to x.
    """
    fam = problem.family
    if not hasattr(fam, "lo") or problem.second_family is not None:
        raise UnsupportedOperatorError("quadrature needs a single continuous uniform family")
    if points % 2 == 0:
        points += 1
    x = as_point(x)
    t = np.linspace(fam.lo, fam.hi, points)
    TX = fam.apply_drawn(t, np.tile(x, (points, 1)))
    f = ((x - TX) ** 2).sum(axis=1)
    w = np.ones(points)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    val = float((w * f).sum() / (3 * (points - 1)))
    return MeritEstimate(val, 0.0, points, "quadrature")


# ----------------------------------------------------------------------------
# closed forms
# ----------------------------------------------------------------------------


def merit_closed_intervals(eps: float, x: float) -> float:
    """R for projectors onto [r - 1/2, r + 1/2], r ~ unif[eps - 1/2, 1/2 - eps]."""
    if not 0 <= eps < 0.5:
        raise ConfigError("eps must lie in [0, 1/2)")
    ax = abs(float(x))
    if ax < eps:
        return 0.0
    return ((ax - eps) ** 3 + min(1 - ax - eps, 0.0) ** 3) / (3 * (1 - 2 * eps))


def grad_closed_intervals(eps: float, x: float) -> float:
    """Derivative of merit_closed_intervals in x."""
    ax = abs(float(x))
    if ax < eps:
        return 0.0
    d = ((ax - eps) ** 2 - min(1 - ax - eps, 0.0) ** 2) / (1 - 2 * eps)
    return math.copysign(d, x)


def _lines_quadratic(beta: float) -> np.ndarray:
    if not 0 < beta <= math.pi / 2:
        raise ConfigError("beta must lie in (0, pi/2]")
    sc = math.sin(beta) * math.cos(beta)
    s2 = math.sin(beta) ** 2
    return np.array([[(beta - sc) / 2, -s2 / 2], [-s2 / 2, (beta + sc) / 2]]) / beta


def merit_closed_lines(beta: float, x) -> float:
    """R for projectors onto lines R e_a, a ~ unif[0, beta]: a quadratic form in x."""
    x = as_point(x, 2)
    return float(x @ _lines_quadratic(beta) @ x)


def grad_closed_lines(beta: float, x) -> np.ndarray:
    x = as_point(x, 2)
    return 2.0 * _lines_quadratic(beta) @ x


def kappa_closed_lines(beta: float) -> float:
    """sup_x |x|^2 / R(x) = 1 / lambda_min(Q) = 2 beta / (beta - sin beta), attained at a = beta/2."""
    return 2 * beta / (beta - math.sin(beta))


def disk_feasibility_closed(rho: float, lam: float) -> float:
    """P(x in B(rho e_xi, 1)) for x = (lam, 0), xi ~ unif[0, 2 pi]."""
    if lam <= 1 - rho:
        return 1.0
    if lam > 1 + rho:
        return 0.0
    c = (lam * lam + rho * rho - 1) / (2 * lam * rho)
    return math.acos(max(-1.0, min(1.0, c))) / math.pi


# ----------------------------------------------------------------------------
# gradient
# ----------------------------------------------------------------------------


def _require_projectors(problem: Problem):
    if problem.second_family is not None or not problem.all_projectors:
        raise UnsupportedOperatorError("grad R is only available for a single family of projectors")


def grad_R(problem: Problem, x, N: int, rng: RngStream, closed_form: Optional[Callable] = None, return_std_error: bool = False):
    """2 (x - mean P_xi x) over N draws, or ``closed_form(x)`` when supplied.

    With ``return_std_error`` the componentwise standard error is returned too.
    """
    _require_projectors(problem)
    x = as_point(x)
    if closed_form is not None:
        g = np.asarray(closed_form(x), dtype=float).reshape(x.shape)
        return (g, np.zeros_like(g)) if return_std_error else g
    TX = _draw_images(problem, x, N, rng)
    D = 2.0 * (x - TX)
    g = D.mean(axis=0)
    if return_std_error:
        return g, D.std(axis=0, ddof=1) / math.sqrt(N)
    return g


# ----------------------------------------------------------------------------
# regularity and KL
# ----------------------------------------------------------------------------


@dataclass
class RegularityReport:
    kappa_hat: float
    argmax: np.ndarray
    ratios: np.ndarray  # dist^2 / R per probe, in probe order
    n_probes: int
    divergence_flag: bool
    refined_kappa: float = float("nan")
    halvings: int = 0


def _value(est) -> float:
    return float(est.value) if isinstance(est, MeritEstimate) else float(est)


def regularity_constant(
    problem: Problem,
    probe_grid: Sequence,
    merit_evaluator: Callable,
    halvings: int = 4,
    tau: float = TAU_C,
) -> RegularityReport:
    """kappa_hat = max over probes of dist^2(x, C) / R(x).

    The divergence test moves the probe closest to C towards its projection,
    halving the distance ``halvings`` times, and flags divergence when the
    ratio there exceeds 10 * kappa_hat.  Needs ``feasible_set.project``.
    """
    C = problem.feasible_set
    probes = [as_point(p) for p in probe_grid]
    if not probes:
        raise ConfigError("empty probe grid")
    ratios = np.empty(len(probes))
    dists = np.empty(len(probes))
    for i, p in enumerate(probes):
        d = C.dist(p)
        if d <= tau:
            raise ConfigError(f"probe {p} lies in the feasible set")
        R = _value(merit_evaluator(p))
        if R <= 0:
            raise InconsistencyError(f"R vanishes at the infeasible probe {p} (dist {d:g})")
        ratios[i] = d * d / R
        dists[i] = d
    j = int(np.argmax(ratios))
    kappa = float(ratios[j])

    flag, refined = False, float("nan")
    if halvings > 0:
        near = probes[int(np.argmin(dists))]
        try:
            c = C.project(near)
        except NotImplementedError:
            c = None
        if c is not None:
            q = c + (near - c) * 0.5**halvings
            dq = C.dist(q)
            Rq = _value(merit_evaluator(q))
            if dq > tau and Rq > 0:
                refined = dq * dq / Rq
                flag = refined > 10 * kappa
            elif dq > tau:
                refined, flag = math.inf, True
    return RegularityReport(kappa, probes[j], ratios, len(probes), flag, refined, halvings)


@dataclass
class KLReport:
    kappa: float
    slack: np.ndarray  # (kappa/4)|grad R|^2 + tol - R per probe
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.slack >= 0))

    @property
    def worst_slack(self) -> float:
        return float(np.min(self.slack))


def kl_check(
    problem: Problem,
    probes: Sequence,
    kappa: float,
    merit_evaluator: Optional[Callable] = None,
    grad_evaluator: Optional[Callable] = None,
    N: int = 20000,
    seed: int = 0,
    tol: float = 1e-9,
) -> KLReport:
    """Test R(x) <= (kappa/4) |grad R(x)|^2 at every probe.

    Without evaluators, R and grad R are Monte Carlo estimates sharing the
    same index draws per probe.
    """
    _require_projectors(problem)
    if not kappa > 0:
        raise ConfigError("kappa must be positive")
    slack = []
    for i, p in enumerate(probes):
        p = as_point(p)
        if merit_evaluator is None or grad_evaluator is None:
            rng = RngStream(seed, i)
            R = merit_mc(problem, p, N, rng.replay()).value
            g = grad_R(problem, p, N, rng.replay())
        else:
            R, g = _value(merit_evaluator(p)), np.asarray(grad_evaluator(p), dtype=float)
        slack.append(kappa / 4 * float(np.sum(np.square(g))) + tol - R)
    return KLReport(kappa, np.array(slack), tol)


def rate_bound(kappa: float, alpha: float) -> float:
    """sqrt(1 - (1 - alpha) / (alpha kappa))."""
    if not kappa > 0 or not 0 < alpha < 1:
        raise ConfigError("need kappa > 0 and alpha in (0, 1)")
    q = (1 - alpha) / (alpha * kappa)
    if q > 1 + 1e-12:
        raise ConfigError(f"inconsistent pair kappa={kappa}, alpha={alpha}: (1-alpha)/(alpha kappa) = {q} > 1")
    return math.sqrt(max(0.0, 1 - q))


def epsilon_fixed_point_budget(kappa: float, alpha: float, R_x0: float, eps: float, beta: float) -> int:
    """Smallest k >= ln(beta eps / sqrt(kappa R(x0))) / ln(c) with c = rate_bound(kappa, alpha).

    Then P(dist(X_k, C) < eps) >= 1 - beta for X_0 = x0.
    """
    if not (0 < eps < 1 and 0 < beta < 1):
        raise ConfigError("eps and beta must lie in (0, 1)")
    if not R_x0 > 0:
        raise ConfigError("R(x0) must be positive")
    num = math.log(beta * eps / math.sqrt(kappa * R_x0))
    if num >= 0:
        return 0
    c = rate_bound(kappa, alpha)
    if c == 0.0:
        return 1
    return max(0, math.ceil(num / math.log(c)))
