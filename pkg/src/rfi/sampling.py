"""Seeded sampling of random indices and initial points.

Random streams are Philox counter-based generators keyed by
``(base_seed, stream_id)``; the last counter word holds a *tag* so that the
independent sub-streams a trajectory needs (index draws of each family,
the initial point) never overlap.  Identical keys replay identical
sequences on any machine and in any scheduling order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .operators import Operator, as_point

TAG_T = 0  # index draws of the primary family
TAG_S = 1  # index draws of the second family (two-family iteration)
TAG_INIT = 2  # initial point
TAG_AUX = 3  # estimators (merit, feasibility probability)

_MASK64 = (1 << 64) - 1


def _check_u64(v: int, name: str) -> int:
    v = int(v)
    if not 0 <= v <= _MASK64:
        raise ConfigError(f"{name} must be an unsigned 64-bit integer, got {v}")
    return v


class RngStream:
    """An independent, reproducible random stream identified by (base_seed, stream_id, tag)."""

    def __init__(self, base_seed: int, stream_id: int = 0, tag: int = TAG_T):
        self.base_seed = _check_u64(base_seed, "base_seed")
        self.stream_id = _check_u64(stream_id, "stream_id")
        self.tag = _check_u64(tag, "tag")
        self.bit_generator = np.random.Philox(
            key=np.array([self.base_seed, self.stream_id], dtype=np.uint64),
            counter=np.array([0, 0, 0, self.tag], dtype=np.uint64),
        )
        self.generator = np.random.Generator(self.bit_generator)

    def uniform(self, size=None):
        """Uniform draws on [0, 1): one 64-bit word per draw."""
        return self.generator.random(size)

    def replay(self) -> "RngStream":
        """A fresh stream that repeats this one from the start (common random numbers)."""
        return RngStream(self.base_seed, self.stream_id, self.tag)

    def substream(self, tag: int) -> "RngStream":
        return RngStream(self.base_seed, self.stream_id, tag)

    def __repr__(self):
        return f"RngStream(base_seed={self.base_seed}, stream_id={self.stream_id}, tag={self.tag})"


class StreamBank:
    """Fast access to many streams through one re-keyed Philox.

    ``generator(stream_id, tag)`` returns a Generator positioned exactly where
    ``RngStream(base_seed, stream_id, tag).generator`` starts.  The returned
    object is shared and re-keyed by the next call.
    """

    def __init__(self, base_seed: int):
        self.base_seed = _check_u64(base_seed, "base_seed")
        self._bg = np.random.Philox(key=np.array([self.base_seed, 0], dtype=np.uint64))
        self._gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def generator(self, stream_id: int, tag: int) -> np.random.Generator:
        st = self._state
        st["state"]["key"] = np.array([self.base_seed, stream_id], dtype=np.uint64)
        st["state"]["counter"] = np.array([0, 0, 0, tag], dtype=np.uint64)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self._gen

    def uniforms(self, stream_ids: Sequence[int], n: int, tag: int) -> np.ndarray:
        out = np.empty((len(stream_ids), n))
        for i, sid in enumerate(stream_ids):
            out[i] = self.generator(int(sid), tag).random(n)
        return out


# ----------------------------------------------------------------------------
# index laws
# ----------------------------------------------------------------------------


class IndexDistribution:
    """Law of the random index.  ``draw`` maps uniforms to parameters,
    ``apply_drawn`` applies the corresponding operators row-wise."""

    def draw(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def operator(self, param) -> Operator:
        raise NotImplementedError

    def apply_drawn(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def members(self) -> list:
        """Representative operators (all of them for finite laws)."""
        raise NotImplementedError


class FiniteDiscrete(IndexDistribution):
    """Index i with probability probs[i]; ``operators[i]`` is T_i.

    Sampling is by inverse CDF on a single uniform draw.
    """

    def __init__(self, operators: Sequence[Operator], probs: Sequence[float], ids: Optional[Sequence[Any]] = None):
        self.operators = list(operators)
        self.probs = np.array(probs, dtype=float)
        self.ids = list(ids) if ids is not None else list(range(1, len(self.operators) + 1))
        if len(self.operators) == 0 or len(self.operators) != len(self.probs) or len(self.ids) != len(self.probs):
            raise ConfigError("operators, probs and ids must have equal nonzero length")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ConfigError(f"probabilities must be nonnegative and sum to 1, got {self.probs.tolist()}")
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0

    def draw(self, u):
        # positions into self.operators
        idx = np.searchsorted(self._cdf, np.asarray(u), side="right")
        return np.minimum(idx, len(self.operators) - 1)

    def operator(self, param) -> Operator:
        return self.operators[int(param)]

    def index_id(self, param):
        return self.ids[int(param)]

    def apply_drawn(self, params, X):
        params = np.asarray(params)
        if len(self.operators) == 1:
            return self.operators[0].apply_many(X)
        out = np.empty_like(X)
        for i, op in enumerate(self.operators):
            rows = params == i
            if np.any(rows):
                out[rows] = op.apply_many(X[rows])
        return out

    def members(self):
        return list(self.operators)

    def __repr__(self):
        return f"FiniteDiscrete(ids={self.ids}, probs={self.probs.tolist()})"


class ContinuousUniform(IndexDistribution):
    """t ~ unif[lo, hi] and T_t = builder(t).

    If the builder has a ``batch(t_array, X)`` method (the parametric operator
    classes and DiskOnCircle do) it is used for whole ensembles; otherwise
    operators are built and applied row by row.
    """

    def __init__(self, lo: float, hi: float, builder: Callable[[float], Operator]):
        self.lo, self.hi = float(lo), float(hi)
        if not self.lo < self.hi:
            raise ConfigError(f"need lo < hi, got [{lo}, {hi}]")
        self.builder = builder

    def draw(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u)

    def operator(self, param) -> Operator:
        return self.builder(float(param))

    def apply_drawn(self, params, X):
        batch = getattr(self.builder, "batch", None)
        params = np.asarray(params, dtype=float)
        if batch is not None:
            return batch(params, X)
        return np.array([self.builder(float(t)).apply(x) for t, x in zip(params, X)]).reshape(X.shape)

    def members(self):
        return [self.builder(self.lo), self.builder(0.5 * (self.lo + self.hi))]

    def __repr__(self):
        name = getattr(self.builder, "__name__", type(self.builder).__name__)
        return f"ContinuousUniform({self.lo}, {self.hi}, {name})"


def sample_index(dist: IndexDistribution, rng: RngStream) -> Operator:
    """Draw T_xi.  Consumes exactly one uniform from ``rng``."""
    return dist.operator(dist.draw(rng.uniform(1))[0])


# ----------------------------------------------------------------------------
# initial laws
# ----------------------------------------------------------------------------


class InitialLaw:
    dim: int

    def sample_with(self, gen: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Dirac(InitialLaw):
    point: tuple

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(as_point(self.point).tolist()))

    @property
    def dim(self):
        return len(self.point)

    def sample_with(self, gen, size):
        return np.tile(np.asarray(self.point), (size, 1))


@dataclass(frozen=True)
class UniformBox(InitialLaw):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = as_point(self.lo), as_point(self.hi)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ConfigError("UniformBox needs lo < hi componentwise")
        object.__setattr__(self, "lo", tuple(lo.tolist()))
        object.__setattr__(self, "hi", tuple(hi.tolist()))

    @property
    def dim(self):
        return len(self.lo)

    def sample_with(self, gen, size):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return lo + (hi - lo) * gen.random((size, len(lo)))


@dataclass(frozen=True)
class Gaussian(InitialLaw):
    mean: tuple
    stddev: float

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(as_point(self.mean).tolist()))
        if not self.stddev > 0:
            raise ConfigError("stddev must be positive")

    @property
    def dim(self):
        return len(self.mean)

    def sample_with(self, gen, size):
        return np.asarray(self.mean) + self.stddev * gen.standard_normal((size, len(self.mean)))


def sample_initial(law: InitialLaw, rng: RngStream) -> np.ndarray:
    return law.sample_with(rng.generator, 1)[0]
