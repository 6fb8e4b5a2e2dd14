"""Confidence schedules, concentration radii and optimistic upper bounds on c.

Two views of every bound are provided. The scalar functions
(``upper_l2`` and friends) turn one :class:`ArmState` into an
:class:`ArmBound` whose infinite case is a typed sentinel. The ``*_batch``
functions work on stacked count arrays for the vectorized tracking engine
and return ``(upper, finite)`` pairs on the scale of the matching ``c``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import ArmState, DistanceKind, FDivergence
from .errors import ZeroPulls
from .objectives import SQRT_2PI, c_for, c_l1, c_l2

GATE = 3.5


class Family(str, enum.Enum):
    REL_CHERNOFF = "rel_chernoff"
    EMP_BERNSTEIN = "emp_bernstein"
    HOEFFDING = "hoeffding"


_NUMERATOR = {Family.REL_CHERNOFF: 6, Family.EMP_BERNSTEIN: 3, Family.HOEFFDING: 6}


@dataclass(frozen=True)
class ConfidenceSchedule:
    """delta_t = numerator * delta / (K l pi^2 t^2)."""

    delta: float
    K: int
    l: int
    family: Family = Family.HOEFFDING
    numerator: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.K < 1 or self.l < 2:
            raise ValueError("need K >= 1 and l >= 2")
        object.__setattr__(self, "family", Family(self.family))
        if self.numerator is None:
            object.__setattr__(self, "numerator", _NUMERATOR[self.family])

    def delta_t(self, t):
        t = np.asarray(t, dtype=float)
        return self.numerator * self.delta / (self.K * self.l * math.pi**2 * t * t)

    def log_inv(self, t, scale: float = 1.0):
        """log(scale / delta_t), stable for large t."""
        t = np.asarray(t, dtype=float)
        return (math.log(scale * self.K * self.l * math.pi**2 / (self.numerator * self.delta))
                + 2.0 * np.log(t))

    def budget_partial_sum(self, t_max: int) -> float:
        """sum_{t <= t_max} sum_i sum_j delta_t; never exceeds numerator/6 * delta."""
        t = np.arange(1, t_max + 1, dtype=float)
        return float(np.sum(self.delta_t(t)) * self.K * self.l)


def schedule_for(kind, delta: float, K: int, l: int) -> ConfidenceSchedule:
    kind = DistanceKind.parse(kind)
    if kind is DistanceKind.L2SQ:
        fam = Family.REL_CHERNOFF
    elif kind in (DistanceKind.L1, DistanceKind.TV):
        fam = Family.EMP_BERNSTEIN
    else:
        fam = Family.HOEFFDING
    return ConfidenceSchedule(delta, K, l, fam)


@dataclass(frozen=True)
class ArmBound:
    c_hat: Optional[float]
    radius: Optional[float]
    upper: Optional[float]  # None encodes +infinity

    @property
    def finite(self) -> bool:
        return self.upper is not None

    def dominates(self, other: "ArmBound") -> bool:
        if not self.finite:
            return other.finite
        return other.finite and self.upper > other.upper

    def as_float(self) -> float:
        return math.inf if self.upper is None else self.upper


INFINITE = ArmBound(None, None, None)


# -- radii ---------------------------------------------------------------


def radius_hoeffding(sched: ConfidenceSchedule, t, pulls):
    """sqrt(2 log(2 / delta_t) / pulls)."""
    pulls = np.asarray(pulls, dtype=float)
    if np.any(pulls < 1):
        raise ZeroPulls("radius needs at least one pull")
    out = np.sqrt(2.0 * sched.log_inv(t, 2.0) / pulls)
    return out if out.ndim else float(out)


def radius_l2(sched: ConfidenceSchedule, t, pulls):
    pulls = np.asarray(pulls, dtype=float)
    out = np.sqrt(27.0 * sched.log_inv(t) / pulls)
    return out if out.ndim else float(out)


def radius_l1(sched: ConfidenceSchedule, t, pulls):
    pulls = np.asarray(pulls, dtype=float)
    out = np.sqrt(2.0 * sched.l**2 * sched.log_inv(t, 2.0) / pulls)
    return out if out.ndim else float(out)


# -- batch bounds ----------------------------------------------------------


def _phat(counts):
    counts = np.asarray(counts, dtype=float)
    pulls = counts.sum(axis=-1)
    safe = np.where(pulls > 0, pulls, 1.0)
    return counts / safe[..., None], pulls


def upper_l2_batch(sched, counts, t, c_hat=None):
    ph, pulls = _phat(counts)
    if c_hat is None:
        c_hat = 1.0 - np.sum(ph * ph, axis=-1)
    finite = pulls > 0
    rad = radius_l2(sched, t, np.where(finite, pulls, 1.0))
    return np.where(finite, c_hat + rad, np.inf), finite


def upper_l1_batch(sched, counts, t, c_hat=None):
    ph, pulls = _phat(counts)
    if c_hat is None:
        c_hat = np.sum(np.sqrt(ph * (1.0 - ph)), axis=-1)
    finite = pulls > 0
    rad = radius_l1(sched, t, np.where(finite, pulls, 1.0))
    return np.where(finite, c_hat + rad, np.inf), finite


def _gated_lower_masses(sched, counts, t):
    ph, pulls = _phat(counts)
    has = pulls > 0
    e = radius_hoeffding(sched, t, np.where(has, pulls, 1.0))
    e = np.asarray(e)[..., None]
    finite = has & np.all(ph >= GATE * e, axis=-1)
    low = np.where(finite[..., None], ph - e, 1.0)
    return low, finite


def upper_kl_batch(sched, counts, t, c_hat=None):
    low, finite = _gated_lower_masses(sched, counts, t)
    u = (np.sum(1.0 / low, axis=-1) - 1.0) / 12.0
    return np.where(finite, u, np.inf), finite


def upper_sep_batch(sched, counts, t, c_hat=None):
    """Upper bound on c_sep itself; the published u^(s) is this over sqrt(2 pi)."""
    low, finite = _gated_lower_masses(sched, counts, t)
    u = np.sum(np.sqrt(np.maximum(0.0, 1.0 / low - 1.0)), axis=-1)
    return np.where(finite, u, np.inf), finite


def upper_hellinger_batch(sched, counts, t, c_hat=None):
    # (1-q)(7+q)/q is decreasing in q, so lower masses give an upper bound
    low, finite = _gated_lower_masses(sched, counts, t)
    u = np.sum((1.0 - low) * (7.0 + low) / (64.0 * low), axis=-1)
    return np.where(finite, u, np.inf), finite


def upper_chi2_batch(sched, counts, t, c_hat=None):
    _, pulls = _phat(counts)
    finite = pulls > 0
    return np.where(finite, 0.0, np.inf), finite


_BATCH = {
    DistanceKind.L2SQ: upper_l2_batch,
    DistanceKind.L1: upper_l1_batch,
    DistanceKind.TV: upper_l1_batch,
    DistanceKind.KL: upper_kl_batch,
    DistanceKind.SEPARATION: upper_sep_batch,
    DistanceKind.HELLINGER: upper_hellinger_batch,
    DistanceKind.CHI2: upper_chi2_batch,
}


def upper_batch(kind, sched, counts, t, c_hat=None):
    kind = DistanceKind.parse(kind)
    if isinstance(kind, FDivergence):
        raise NotImplementedError("no confidence bound for a generic f-divergence")
    return _BATCH[kind](sched, counts, t, c_hat)


def plugin_c_batch(kind, counts):
    """Plug-in c of the empirical distribution, for the kinds that cache it."""
    kind = DistanceKind.parse(kind)
    ph, _ = _phat(counts)
    if kind is DistanceKind.L2SQ:
        return 1.0 - np.sum(ph * ph, axis=-1)
    if kind in (DistanceKind.L1, DistanceKind.TV):
        return np.sum(np.sqrt(ph * (1.0 - ph)), axis=-1)
    return None


def target_c(kind, P) -> float:
    """The quantity the bound for ``kind`` is meant to cover."""
    return c_for(kind, P)


# -- scalar bounds -------------------------------------------------------


def _plugin(fn, arm):
    try:
        return fn(arm.counts / arm.pulls)
    except (ValueError, ZeroDivisionError):
        return None


def _scalar(kind, sched, arm: ArmState, t, c_hat):
    if arm.pulls == 0:
        return INFINITE
    u, fin = upper_batch(kind, sched, arm.counts[None, :], t)
    if not fin[0]:
        return ArmBound(c_hat, None, None)
    return ArmBound(c_hat, None if c_hat is None else float(u[0] - c_hat), float(u[0]))


def upper_l2(sched, arm: ArmState, t) -> ArmBound:
    if arm.pulls == 0:
        return INFINITE
    c_hat = c_l2(arm.counts / arm.pulls)
    return ArmBound(c_hat, radius_l2(sched, t, arm.pulls), c_hat + radius_l2(sched, t, arm.pulls))


def upper_l1(sched, arm: ArmState, t) -> ArmBound:
    if arm.pulls == 0:
        return INFINITE
    c_hat = c_l1(arm.counts / arm.pulls)
    r = radius_l1(sched, t, arm.pulls)
    return ArmBound(c_hat, r, c_hat + r)


def upper_kl(sched, arm: ArmState, t, eta: Optional[float] = None) -> ArmBound:
    """Gated KL bound; ``radius`` reports u - c_hat when both are finite."""
    c_hat = None
    if arm.pulls:
        ph = arm.counts / arm.pulls
        if np.all(ph > 0):
            c_hat = float((np.sum(1.0 / ph) - 1.0) / 12.0)
    return _scalar(DistanceKind.KL, sched, arm, t, c_hat)


def upper_sep(sched, arm: ArmState, t, eta: Optional[float] = None) -> ArmBound:
    """Gated separation bound on the c / sqrt(2 pi) scale."""
    if arm.pulls == 0:
        return INFINITE
    ph = arm.counts / arm.pulls
    c_hat = float(np.sum(np.sqrt((1.0 - ph[ph > 0]) / ph[ph > 0]))) / SQRT_2PI if np.all(ph > 0) else None
    b = _scalar(DistanceKind.SEPARATION, sched, arm, t, None)
    if not b.finite:
        return ArmBound(c_hat, None, None)
    u = b.upper / SQRT_2PI
    return ArmBound(c_hat, None if c_hat is None else u - c_hat, u)


@dataclass(frozen=True)
class SepDiagnostics:
    a: float
    b_max: float
    b_min: float
    radius: float


def sep_diagnostics(sched, arm: ArmState, t, eta: float) -> SepDiagnostics:
    """The a_{i,t} and both readings (max and min) of b_{i,t}."""
    if arm.pulls == 0:
        raise ZeroPulls("diagnostics need at least one pull")
    a = (32.0 * float(sched.log_inv(t, 2.0)) / arm.pulls) ** 0.25
    base = sched.l * a / eta
    ratio = a / (2.0 * eta**1.5)
    return SepDiagnostics(a, base * max(1.0, ratio), base * min(1.0, ratio),
                          radius_hoeffding(sched, t, arm.pulls))


def kl_gap_bound(sched, arm: ArmState, t, eta: float) -> float:
    """Width (l / eta^2) sqrt(32 l^2 log(2/delta_t) / pulls) of the KL bound."""
    l = sched.l
    return (l / eta**2) * math.sqrt(32.0 * l * l * float(sched.log_inv(t, 2.0)) / arm.pulls)


BOUNDS = {
    "l2": upper_l2,
    "l1": upper_l1,
    "kl": upper_kl,
    "sep": upper_sep,
}
