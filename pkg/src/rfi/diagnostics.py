"""Post-processing of ensembles: empirical rates, feasibility probabilities,
finite/infinite hitting classification and distances between laws."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import Ensemble
from .errors import ConfigError, DegenerateError, ShapeError
from .operators import TAU_C, as_point
from .sampling import IndexDistribution, RngStream

RATIO_FLOOR = 1e-12


@dataclass
class RateCurve:
    mean_dist: np.ndarray
    steps: np.ndarray  # k with mean_dist[k] > RATIO_FLOOR
    ratios: np.ndarray  # mean_dist[k+1] / mean_dist[k] for k in steps
    errors: np.ndarray  # delta-method standard errors of the ratios
    r_theory: Optional[float] = None
    checked: Optional[np.ndarray] = None  # steps tested against r_theory
    flagged: Optional[np.ndarray] = None  # steps whose ratio exceeds r_theory + 3 err

    @property
    def passed(self) -> bool:
        return self.flagged is None or len(self.flagged) == 0


def empirical_rate(ensemble: Ensemble, r_theory: Optional[float] = None, tau: float = TAU_C) -> RateCurve:
    """Ratios of successive mean distances, checked against ``r_theory``.

    The MC error of a ratio m1/m0 of means uses the per-trajectory residual
    d1 - (m1/m0) d0.  Steps are checked only while mean_dist[k] > 100 tau.
    """
    if ensemble.K < 2:
        raise ConfigError("need K >= 2")
    D = ensemble.dists
    m = D.mean(axis=0)
    if m[0] <= tau:
        raise DegenerateError("the ensemble starts in the feasible set")
    steps = np.nonzero(m[:-1] > RATIO_FLOOR)[0]
    ratios = m[steps + 1] / m[steps]
    M = D.shape[0]
    resid = D[:, steps + 1] - ratios * D[:, steps]
    sd = resid.std(axis=0, ddof=1) if M > 1 else np.zeros(len(steps))
    errors = sd / (math.sqrt(M) * m[steps])
    curve = RateCurve(m, steps, ratios, errors, r_theory)
    if r_theory is not None:
        ok = m[steps] > 100 * tau
        curve.checked = steps[ok]
        bad = ok & (ratios > r_theory + 3 * errors)
        curve.flagged = steps[bad]
    return curve


@dataclass
class FeasProbReport:
    probe: np.ndarray
    p_hat: float
    std_error: float
    n: int
    closed_form: Optional[float] = None

    @property
    def z_score(self) -> float:
        if self.closed_form is None:
            return float("nan")
        sigma = math.sqrt(max(self.closed_form * (1 - self.closed_form), 0.0) / self.n)
        if sigma == 0:
            return 0.0 if self.p_hat == self.closed_form else math.inf
        return (self.p_hat - self.closed_form) / sigma


def feasibility_probability(
    family: IndexDistribution,
    x,
    N: int,
    rng: RngStream,
    closed_form: Optional[float] = None,
    tau: float = TAU_C,
) -> FeasProbReport:
    """Fraction of N index draws whose operator fixes x (residual <= tau)."""
    if N < 100:
        raise ConfigError("feasibility_probability needs N >= 100")
    x = as_point(x)
    X = np.tile(x, (N, 1))
    TX = family.apply_drawn(family.draw(rng.uniform(N)), X)
    res = np.sqrt(((X - TX) ** 2).sum(axis=1))
    p = float(np.mean(res <= tau))
    return FeasProbReport(x, p, math.sqrt(p * (1 - p) / N), N, closed_form)


class Convergence(enum.Enum):
    ONE_STEP = "OneStep"
    NEVER_CERTAIN = "NeverCertain"


@dataclass
class Classification:
    kind: Convergence
    contradiction: bool  # NeverCertain but some simulated step was fully feasible
    first_full_step: Optional[int]


def classify_finite_infinite(ensemble: Ensemble) -> Classification:
    """OneStep iff every trajectory is feasible by step 1; otherwise NeverCertain.

    For projector families a NeverCertain ensemble must have feas_frac < 1 at
    every simulated step; a violation is reported as a contradiction.
    """
    h = ensemble.hits
    one = bool(np.all((h >= 0) & (h <= 1)))
    ff = ensemble.feas_frac
    full = np.nonzero(ff[1:] >= 1.0)[0]
    first_full = int(full[0]) + 1 if full.size else None
    if one:
        return Classification(Convergence.ONE_STEP, False, first_full)
    return Classification(Convergence.NEVER_CERTAIN, first_full is not None, first_full)


def wasserstein_1d(a, b) -> float:
    """Exact W1 between two empirical laws on R with equal sample counts."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.shape != b.shape:
        raise ShapeError(f"sample counts differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ShapeError("empty samples")
    return float(np.mean(np.abs(a - b)))


def wasserstein_curve(ensemble: Ensemble, K_ref: Optional[int] = None) -> np.ndarray:
    """W1(law X_k, law X_{K_ref}) per step, for one-dimensional ensembles."""
    if ensemble.points is None:
        raise ConfigError("the ensemble did not retain points")
    P = ensemble.points
    if P.shape[2] != 1:
        raise ShapeError("wasserstein_curve is one-dimensional only")
    K_ref = ensemble.K if K_ref is None else K_ref
    ref = P[:, K_ref, 0]
    return np.array([wasserstein_1d(P[:, k, 0], ref) for k in range(K_ref + 1)])


def limit_distance_curve(ensemble: Ensemble, K_ref: Optional[int] = None) -> np.ndarray:
    """Mean of |X_k - X_{K_ref}| per step k = 0..K_ref (X_{K_ref} stands in for the limit)."""
    if ensemble.points is None:
        raise ConfigError("the ensemble did not retain points")
    K_ref = ensemble.K if K_ref is None else K_ref
    if not 0 <= K_ref <= ensemble.K:
        raise ConfigError("K_ref outside the simulated range")
    P = ensemble.points
    diff = P[:, : K_ref + 1, :] - P[:, K_ref : K_ref + 1, :]
    return np.sqrt((diff**2).sum(axis=2)).mean(axis=0)
