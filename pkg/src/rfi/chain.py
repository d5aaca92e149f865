"""Random function iteration as a seeded Markov chain, single runs and ensembles."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericError
from .operators import TAU_C, FixedPointSet, as_batch, as_point
from .sampling import (
    TAG_INIT,
    TAG_S,
    TAG_T,
    Dirac,
    IndexDistribution,
    InitialLaw,
    RngStream,
    StreamBank,
)

CHUNK = 2048  # trajectories per work item; fixed so results never depend on worker count


@dataclass
class Problem:
    """The family T (and optional second family S), the exact feasible set C and
    the uniform averagedness bound alpha_bar."""

    family: IndexDistribution
    feasible_set: FixedPointSet
    alpha_bar: float = 0.5
    second_family: Optional[IndexDistribution] = None
    name: str = ""

    def __post_init__(self):
        if not 0 < self.alpha_bar < 1:
            raise ConfigError(f"alpha_bar must lie in (0, 1), got {self.alpha_bar}")
        ops = self.family.members()
        if self.second_family is None and all(op.flags.averaged for op in ops):
            worst = max(op.averaged_constant for op in ops)
            if worst > self.alpha_bar:
                raise ConfigError(f"alpha_bar={self.alpha_bar} below an operator constant {worst}")

    @property
    def all_projectors(self) -> bool:
        fams = [self.family] + ([self.second_family] if self.second_family is not None else [])
        return all(op.is_projector for f in fams for op in f.members())

    def step_many(self, X: np.ndarray, u: np.ndarray, v: Optional[np.ndarray] = None) -> np.ndarray:
        """Apply T_xi (then S_zeta) row-wise, with xi, zeta read off uniforms u, v."""
        X = self.family.apply_drawn(self.family.draw(u), X)
        if self.second_family is not None:
            X = self.second_family.apply_drawn(self.second_family.draw(v), X)
        return X


@dataclass
class Trajectory:
    points: Optional[np.ndarray]  # (K+1, n) or None when not retained
    dists: np.ndarray  # (K+1,)
    hit: Optional[int]
    stream_id: int


@dataclass
class Ensemble:
    """M trajectories; ``dists[m, k]`` is dist(X_k, C) along trajectory m."""

    dists: np.ndarray
    hits: np.ndarray  # first k with dist <= tau, -1 if never
    points: Optional[np.ndarray] = None  # (M, K+1, n) when retained
    base_seed: int = 0
    tau: float = TAU_C
    all_projectors: bool = False

    @property
    def M(self) -> int:
        return self.dists.shape[0]

    @property
    def K(self) -> int:
        return self.dists.shape[1] - 1

    @property
    def mean_dist(self) -> np.ndarray:
        return self.dists.mean(axis=0)

    @property
    def feas_frac(self) -> np.ndarray:
        return (self.dists <= self.tau).mean(axis=0)

    def trajectory(self, m: int) -> Trajectory:
        hit = int(self.hits[m])
        return Trajectory(
            points=None if self.points is None else self.points[m],
            dists=self.dists[m],
            hit=None if hit < 0 else hit,
            stream_id=m,
        )

    @property
    def trajectories(self) -> list:
        return [self.trajectory(m) for m in range(self.M)]


def _first_hits(dists: np.ndarray, tau: float) -> np.ndarray:
    inside = dists <= tau
    return np.where(inside.any(axis=1), inside.argmax(axis=1), -1)


def rfi_step(problem: Problem, x, rng: RngStream, rng_second: Optional[RngStream] = None) -> np.ndarray:
    """One step X_{k+1} = T_xi X_k (or S_zeta T_xi X_k).

    Draws exactly one uniform per family; the second family reads from
    ``rng_second`` (default: the TAG_S sub-stream of ``rng``).
    """
    x = as_point(x)
    u = rng.uniform(1)
    v = None
    if problem.second_family is not None:
        if rng_second is None:
            rng_second = rng.substream(TAG_S)
        v = rng_second.uniform(1)
    return problem.step_many(x[None, :], u, v)[0]


def _simulate(problem, X0, U, V, keep_points, tau):
    M, K = U.shape
    n = X0.shape[1]
    dists = np.empty((M, K + 1))
    pts = np.empty((M, K + 1, n)) if keep_points else None
    X = X0
    with np.errstate(over="ignore", invalid="ignore"):
        dists[:, 0] = problem.feasible_set.dist_many(X)
        if keep_points:
            pts[:, 0] = X
        for k in range(K):
            X = problem.step_many(X, U[:, k], None if V is None else V[:, k])
            dists[:, k + 1] = problem.feasible_set.dist_many(X)
            if keep_points:
                pts[:, k + 1] = X
    if not np.all(np.isfinite(dists)):
        raise NumericError("distance to C overflowed; the iterates are too large for float64")
    return dists, pts


def run_trajectory(problem: Problem, x0, K: int, stream: RngStream, tau: float = TAU_C, keep_points: bool = True) -> Trajectory:
    """Run K steps from x0 using ``stream`` (and its TAG_S sub-stream for S)."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    x0 = as_point(x0)
    U = stream.uniform(K)[None, :]
    V = stream.substream(TAG_S).uniform(K)[None, :] if problem.second_family is not None else None
    dists, pts = _simulate(problem, x0[None, :], U, V, keep_points, tau)
    hit = int(_first_hits(dists, tau)[0])
    return Trajectory(points=None if pts is None else pts[0], dists=dists[0], hit=None if hit < 0 else hit, stream_id=stream.stream_id)


def _run_block(problem, mu, K, base_seed, ids, keep_points, tau):
    bank = StreamBank(base_seed)
    U = bank.uniforms(ids, K, TAG_T)
    V = bank.uniforms(ids, K, TAG_S) if problem.second_family is not None else None
    if isinstance(mu, Dirac):
        X0 = mu.sample_with(None, len(ids))
    else:
        X0 = np.array([mu.sample_with(bank.generator(int(sid), TAG_INIT), 1)[0] for sid in ids])
    X0 = as_batch(X0)
    return _simulate(problem, X0, U, V, keep_points, tau)


def run_ensemble(
    problem: Problem,
    mu: InitialLaw,
    K: int,
    M: int,
    base_seed: int,
    keep_points: bool = False,
    workers: int = 1,
    tau: float = TAU_C,
) -> Ensemble:
    """M independent trajectories; trajectory m uses stream id m.

    Work is split into fixed-size chunks and merged by stream id, so the
    result is bitwise identical for any ``workers``.
    """
    if M < 1 or K < 1:
        raise ConfigError("need M >= 1 and K >= 1")
    chunks = [np.arange(s, min(s + CHUNK, M)) for s in range(0, M, CHUNK)]
    job = lambda ids: _run_block(problem, mu, K, base_seed, ids, keep_points, tau)  # noqa: E731
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    dists = np.concatenate([p[0] for p in parts])
    pts = np.concatenate([p[1] for p in parts]) if keep_points else None
    return Ensemble(
        dists=dists,
        hits=_first_hits(dists, tau),
        points=pts,
        base_seed=base_seed,
        tau=tau,
        all_projectors=problem.all_projectors,
    )


@dataclass
class HittingStats:
    fraction_hit: np.ndarray  # P(hit <= k), k = 0..K
    mean_hitting_time: float  # among trajectories that hit; NaN if none did
    n_hit: int


def hitting_stats(ensemble: Ensemble) -> HittingStats:
    h = ensemble.hits
    ks = np.arange(ensemble.K + 1)
    hitters = h[h >= 0]
    frac = ((h[:, None] >= 0) & (h[:, None] <= ks[None, :])).mean(axis=0)
    mean = float(hitters.mean()) if hitters.size else float("nan")
    return HittingStats(fraction_hit=frac, mean_hitting_time=mean, n_hit=int(hitters.size))
