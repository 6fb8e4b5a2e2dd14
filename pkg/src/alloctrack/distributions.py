"""Discrete distributions, pull bookkeeping, and distances between distributions."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    DivisionByZeroMass,
    InvalidDistribution,
    ZeroPulls,
)

RNG_ALGORITHM = "numpy.random.Philox(4x64, 10 rounds) keyed by SeedSequence(seed, spawn_key)"


class DiscreteDistribution:
    """A probability vector on the alphabet {0, ..., l-1}.

    Masses are validated (finite, nonnegative, positive total) and normalized
    once at construction, so downstream code can assume exact simplex
    membership. Instances are immutable.
    """

    __slots__ = ("_probs", "_cdf")

    def __init__(self, probs: Sequence[float]):
        p = np.array(probs, dtype=float).ravel()
        if p.size < 2:
            raise InvalidDistribution("alphabet size must be at least 2")
        if not np.all(np.isfinite(p)):
            raise InvalidDistribution("masses must be finite")
        if np.any(p < 0):
            raise InvalidDistribution("masses must be nonnegative")
        total = p.sum()
        if total <= 0:
            raise InvalidDistribution("masses must have a positive total")
        p = p / total
        p.setflags(write=False)
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        self._probs = p
        self._cdf = cdf

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def l(self) -> int:
        return self._probs.size

    def __len__(self) -> int:
        return self._probs.size

    def __getitem__(self, j):
        return self._probs[j]

    def __iter__(self):
        return iter(self._probs)

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return self.l == other.l and bool(np.all(self._probs == other._probs))

    def __hash__(self):
        return hash(self._probs.tobytes())

    def __repr__(self):
        return f"DiscreteDistribution({np.array2string(self._probs, precision=6, separator=', ')})"

    @property
    def min_mass(self) -> float:
        return float(self._probs.min())

    def is_strictly_positive(self) -> bool:
        return bool(np.all(self._probs > 0))

    @classmethod
    def uniform(cls, l: int) -> "DiscreteDistribution":
        return cls(np.full(l, 1.0 / l))

    @classmethod
    def bernoulli(cls, p: float) -> "DiscreteDistribution":
        """Two-symbol distribution with mass ``p`` on symbol 0."""
        return cls([p, 1.0 - p])


def as_distribution(P) -> DiscreteDistribution:
    return P if isinstance(P, DiscreteDistribution) else DiscreteDistribution(P)


@dataclass(frozen=True)
class EtaInterior:
    """The subset of the simplex with every mass in [eta, 1 - eta]."""

    eta: float

    def __post_init__(self):
        if not 0.0 < self.eta < 0.5:
            raise ValueError("eta must lie in (0, 1/2)")

    def contains(self, P) -> bool:
        p = as_distribution(P).probs
        return bool(np.all(p >= self.eta) and np.all(p <= 1.0 - self.eta))

    __contains__ = contains


@dataclass
class ArmState:
    """Pull count and per-symbol counts for one arm.

    ``pulls`` is always the sum of ``counts``; mutate only through
    :meth:`observe`.
    """

    arm_id: int
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).copy()
        if self.counts.ndim != 1 or self.counts.size < 2:
            raise DimensionMismatch("counts must be a vector of length l >= 2")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    @classmethod
    def empty(cls, arm_id: int, l: int) -> "ArmState":
        return cls(arm_id, np.zeros(l, dtype=np.int64))

    @property
    def pulls(self) -> int:
        return int(self.counts.sum())

    @property
    def l(self) -> int:
        return self.counts.size

    def observe(self, symbol: int) -> None:
        self.counts[symbol] += 1

    def centered_sums(self, P) -> np.ndarray:
        """W_j = T_j - pulls * p_j against the true distribution ``P``."""
        return self.counts - self.pulls * as_distribution(P).probs


def empirical(arm: ArmState) -> DiscreteDistribution:
    """Empirical distribution counts / pulls."""
    if arm.pulls == 0:
        raise ZeroPulls(f"arm {arm.arm_id} has no pulls")
    return DiscreteDistribution(arm.counts / arm.pulls)


class RngStream:
    """Splittable, counter-based random stream.

    A stream is identified by ``(seed, key)``; the same pair always produces
    the same draws and :meth:`spawn` derives statistically independent child
    streams. The backing generator is Philox keyed through ``SeedSequence``.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, stream_id: Union[int, Sequence[int]] = 0):
        self.seed = int(seed)
        if isinstance(stream_id, (int, np.integer)):
            key = (int(stream_id),)
        else:
            key = tuple(int(k) for k in stream_id)
        self.key = key
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.Philox(ss))

    @property
    def stream_id(self) -> int:
        return self.key[-1]

    def spawn(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.key + (int(k),))

    def random(self, size=None):
        return self.generator.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"


def draw(dist: DiscreteDistribution, rng: RngStream, size: int) -> np.ndarray:
    """Draw ``size`` i.i.d. symbols by inverse-CDF lookup."""
    u = rng.random(size)
    return _symbols_from_uniforms(dist._cdf, u)


def _symbols_from_uniforms(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    sym = np.searchsorted(cdf, u, side="right")
    return np.minimum(sym, cdf.size - 1)


def sample(dist: DiscreteDistribution, rng: RngStream) -> int:
    """Draw a single symbol; symbol j is returned with probability p_j."""
    return int(_symbols_from_uniforms(dist._cdf, np.atleast_1d(rng.random()))[0])


# -- distances ---------------------------------------------------------------


@dataclass(frozen=True)
class FDivergence:
    """An f-divergence sum_j q_j f(p_j / q_j) with its Taylor table at 1.

    ``taylor`` lists f^(m)(1) / m! for m = 1, 2, ...; it may be shorter than
    needed if ``taylor_fn`` is given for the general term.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    taylor_fn: Callable[[int], float]

    def taylor_coefficients(self, r: int) -> tuple:
        return tuple(float(self.taylor_fn(m)) for m in range(1, r + 1))


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def _kl_taylor(m: int) -> float:
    if m == 1:
        return 1.0
    return (-1.0) ** m / (m * (m - 1))


def _chi2_taylor(m: int) -> float:
    return 1.0 if m == 2 else 0.0


def _hellinger_taylor(m: int) -> float:
    # f(x) = 2(1 - sqrt x)  =>  f^(m)(1)/m! = -2 * binom(1/2, m)
    b = 1.0
    for k in range(m):
        b *= (0.5 - k) / (k + 1)
    return -2.0 * b


KL_F = FDivergence("kl", _xlogx, _kl_taylor)
CHI2_F = FDivergence("chi2", lambda x: (np.asarray(x, dtype=float) - 1.0) ** 2, _chi2_taylor)
HELLINGER_F = FDivergence(
    "hellinger_sq", lambda x: 2.0 * (1.0 - np.sqrt(np.asarray(x, dtype=float))), _hellinger_taylor
)


class DistanceKind(str, enum.Enum):
    L2SQ = "l2"
    L1 = "l1"
    TV = "tv"
    KL = "kl"
    CHI2 = "chi2"
    HELLINGER = "hellinger"
    SEPARATION = "sep"

    @classmethod
    def parse(cls, value) -> Union["DistanceKind", FDivergence]:
        if isinstance(value, (cls, FDivergence)):
            return value
        aliases = {"l2sq": "l2", "separation": "sep", "l2_sq": "l2"}
        v = str(value).lower()
        return cls(aliases.get(v, v))


Kind = Union[DistanceKind, FDivergence, str]

_NEEDS_POSITIVE_Q = {DistanceKind.KL, DistanceKind.CHI2, DistanceKind.SEPARATION}


def distance_batch(kind: Kind, phat: np.ndarray, P) -> np.ndarray:
    """Distance D(phat_r, P) for each row r of ``phat`` (shape (R, l))."""
    kind = DistanceKind.parse(kind)
    q = as_distribution(P).probs
    phat = np.asarray(phat, dtype=float)
    if phat.ndim == 1:
        phat = phat[None, :]
    if phat.shape[-1] != q.size:
        raise DimensionMismatch(f"alphabet sizes differ: {phat.shape[-1]} vs {q.size}")
    if (isinstance(kind, FDivergence) or kind in _NEEDS_POSITIVE_Q) and np.any(q == 0):
        raise DivisionByZeroMass("reference distribution has a zero mass")

    if isinstance(kind, FDivergence):
        return np.sum(q * kind.f(phat / q), axis=-1)
    diff = phat - q
    if kind is DistanceKind.L2SQ:
        return np.sum(diff * diff, axis=-1)
    if kind is DistanceKind.L1:
        return np.sum(np.abs(diff), axis=-1)
    if kind is DistanceKind.TV:
        return 0.5 * np.sum(np.abs(diff), axis=-1)
    if kind is DistanceKind.KL:
        return np.sum(_xlogx(phat) - phat * np.log(q), axis=-1)
    if kind is DistanceKind.CHI2:
        return np.sum(diff * diff / q, axis=-1)
    if kind is DistanceKind.HELLINGER:
        s = np.sqrt(phat) - np.sqrt(q)
        return np.sqrt(np.sum(s * s, axis=-1))
    if kind is DistanceKind.SEPARATION:
        return np.max(1.0 - phat / q, axis=-1)
    raise ValueError(f"unknown distance {kind!r}")


def distance(kind: Kind, Phat, P) -> float:
    """Distance D(Phat, P); the true distribution goes second."""
    phat = as_distribution(Phat).probs if not isinstance(Phat, np.ndarray) else Phat
    return float(distance_batch(kind, phat, P)[0])
