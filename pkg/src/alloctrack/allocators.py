"""Allocation rules: oracle solvers, the uniform baseline and optimistic tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import confidence as conf
from .distributions import ArmState, DiscreteDistribution, DistanceKind, RngStream, as_distribution
from .errors import (
    AllZeroParams,
    BudgetTooSmall,
    DegenerateB,
    NonconvexObjective,
    NonpositiveBudget,
)
from .objectives import ObjectiveSpec, c_for, objective, regularity_audit


@dataclass(frozen=True)
class Allocation:
    counts: np.ndarray
    n: int
    fractional: bool

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float if self.fractional else np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def K(self) -> int:
        return self.counts.size

    def rounded(self) -> "Allocation":
        if not self.fractional:
            return self
        return Allocation(largest_remainder(self.counts, self.n), self.n, False)

    def __iter__(self):
        return iter(self.counts)

    def __len__(self):
        return self.counts.size


def largest_remainder(x, n: int) -> np.ndarray:
    """Round nonnegative ``x`` (summing to n) to integers with the same sum.

    Leftover units go to the largest fractional parts; ties favor the lower index.
    """
    x = np.asarray(x, dtype=float)
    base = np.floor(x + 1e-9).astype(np.int64)
    rem = x - base
    short = int(n - base.sum())
    if short > 0:
        order = np.argsort(-rem, kind="stable")
        base[order[:short]] += 1
    elif short < 0:
        order = np.argsort(rem, kind="stable")
        for _ in range(-short):
            for k in order:
                if base[k] > 0:
                    base[k] -= 1
                    break
    return base


def _check_budget(n, K):
    if n <= 0:
        raise NonpositiveBudget("budget n must be positive")
    if n < K:
        raise BudgetTooSmall(f"need n >= K ({n} < {K})")


def uniform(K: int, n: int, integer: bool = False) -> Allocation:
    _check_budget(n, K)
    a = Allocation(np.full(K, n / K), n, True)
    return a.rounded() if integer else a


def oracle_power_law(cs: Sequence[float], alpha: float, n) -> Allocation:
    """Equalize c_i / T_i^alpha: T_i proportional to c_i^(1/alpha)."""
    cs = np.asarray(cs, dtype=float)
    if n <= 0:
        raise NonpositiveBudget("budget n must be positive")
    if np.any(cs < 0):
        raise ValueError("parameters must be nonnegative")
    if not np.any(cs > 0):
        raise AllZeroParams("every c_i is zero")
    w = cs ** (1.0 / alpha)
    return Allocation(w * n / w.sum(), n, True)


def oracle_equalize(spec: ObjectiveSpec, cs: Sequence[float], n) -> Allocation:
    """Equalize phi(c_i, T_i) under sum T_i = n by bisection on the common level."""
    cs = np.asarray(cs, dtype=float)
    if spec.alpha is not None:
        return oracle_power_law(cs, spec.alpha, n)
    _check_budget(n, cs.size)
    # bracket the level v: sum T_i(v) is strictly decreasing in v
    lo, hi = math.log(1e-300), math.log(1e300)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        total = float(np.sum(spec.solve_T(cs, math.exp(mid))))
        if total > n:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    T = np.asarray(spec.solve_T(cs, math.exp(0.5 * (lo + hi))), dtype=float)
    return Allocation(T, n, True)


def oracle_kl(cs: Sequence[float], l: int, n) -> Allocation:
    return oracle_equalize(objective(DistanceKind.KL, l), cs, n)


def approx_oracle(kind, dists, n) -> Allocation:
    """Approx-oracle allocation for a list of true distributions."""
    dists = [as_distribution(P) for P in dists]
    spec = objective(kind, dists[0].l)
    return oracle_equalize(spec, [c_for(kind, P) for P in dists], n)


def average_cost_oracle(spec, cs: Sequence[float], n, audit: bool = True) -> Allocation:
    """Minimize the average of phi_i(T_i): equalize dphi_i/dT_i = lam.

    ``spec`` is one ObjectiveSpec shared by all arms or one per arm.
    """
    cs = np.asarray(cs, dtype=float)
    specs = list(spec) if isinstance(spec, (list, tuple)) else [spec] * cs.size
    if audit:
        for s in {id(s): s for s in specs}.values():
            res = regularity_audit(s)
            if not res.passed:
                raise NonconvexObjective("; ".join(res.failures[:3]))
    if n <= 0:
        raise NonpositiveBudget("budget n must be positive")

    def T_of(lam):
        return np.array([float(s.solve_dT(c, lam)[0]) for s, c in zip(specs, cs)])

    lo, hi = math.log(1e-300), math.log(1e300)  # log(-lam)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if T_of(-math.exp(mid)).sum() > n:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    T = T_of(-math.exp(0.5 * (lo + hi)))
    return Allocation(T, n, True)


def default_delta(kind, n: int, K: int = 2, eta: Optional[float] = None) -> float:
    """Per-distance default confidence level for budget n."""
    kind = DistanceKind.parse(kind)
    if kind is DistanceKind.L2SQ:
        d = n ** -2.5
    elif kind in (DistanceKind.L1, DistanceKind.TV):
        d = 1.0 / n
    elif kind is DistanceKind.SEPARATION:
        d = (eta if eta is not None else 0.05) / n
    else:
        d = (3.0 * K / n) ** 6
    # (3K/n)^6 is not a probability for n <= 3K
    return d if d < 1.0 else 0.5


# -- deviation band around the oracle ------------------------------------


@dataclass(frozen=True)
class DeviationBand:
    A: float
    B: float
    e_tilde: float
    K: int

    @property
    def lower(self) -> float:
        return -2.0 * self.A * self.e_tilde / self.B

    @property
    def upper(self) -> float:
        return 2.0 * self.A * (self.K - 1) * self.e_tilde / self.B

    def contains(self, deviations) -> bool:
        d = np.asarray(deviations, dtype=float)
        return bool(np.all((d >= self.lower) & (d <= self.upper)))


def deviation_band(spec: ObjectiveSpec, cs, oracle: Allocation, e_stars, K: Optional[int] = None
                   ) -> DeviationBand:
    cs = np.asarray(cs, dtype=float)
    T = np.asarray(oracle.counts, dtype=float)
    K = cs.size if K is None else K
    A = float(np.max(spec.dC(cs, T)))
    B = abs(float(np.max(spec.dT(cs, T))))
    if not B > 0:
        raise DegenerateB("B must be positive")
    return DeviationBand(A, B, float(np.max(e_stars)), K)


def oracle_radii(kind, sched: "conf.ConfidenceSchedule", oracle: Allocation, t: Optional[int] = None):
    """Radius of each arm after its oracle number of pulls, at round t (default n)."""
    kind = DistanceKind.parse(kind)
    t = oracle.n if t is None else t
    T = np.asarray(oracle.counts, dtype=float)
    if kind is DistanceKind.L2SQ:
        return conf.radius_l2(sched, t, T)
    if kind in (DistanceKind.L1, DistanceKind.TV):
        return conf.radius_l1(sched, t, T)
    return conf.radius_hoeffding(sched, t, T)


# -- symbol streams ----------------------------------------------------------


def symbol_streams(dists, n: int, rng: RngStream, reps: int, rep_offset: int = 0) -> np.ndarray:
    """Symbols for each replication and arm, shape (reps, K, n).

    Replication r, arm i reads ``rng.spawn(rep_offset + r).spawn(i)``, so every
    scheme run on the same (rng, r) sees the same sample path per arm.
    """
    dists = [as_distribution(P) for P in dists]
    K = len(dists)
    dtype = np.int16 if dists[0].l < 2**15 else np.int32
    out = np.empty((reps, K, n), dtype=dtype)
    for r in range(reps):
        rr = rng.spawn(rep_offset + r)
        for i, P in enumerate(dists):
            u = rr.spawn(i).random(n)
            s = np.searchsorted(P._cdf, u, side="right")
            out[r, i] = np.minimum(s, P.l - 1)
    return out


def counts_from_allocation(symbols: np.ndarray, alloc, l: int) -> np.ndarray:
    """Counts (reps, K, l) from the first alloc[i] symbols of each arm's stream."""
    alloc = np.asarray(alloc, dtype=np.int64)
    R, K, _ = symbols.shape
    counts = np.zeros((R, K, l), dtype=np.int64)
    for i in range(K):
        s = symbols[:, i, : alloc[i]].astype(np.int64)
        offs = (np.arange(R)[:, None] * l + s).ravel()
        counts[:, i, :] = np.bincount(offs, minlength=R * l).reshape(R, l)
    return counts


# -- optimistic tracking -----------------------------------------------------


@dataclass
class TrackingRecord:
    t: int
    arm: int
    u: List[Optional[float]]
    phi: List[Optional[float]]
    pulls: List[int]


@dataclass
class TrackingTrajectory:
    records: List[TrackingRecord]
    arms: List[ArmState]

    @property
    def pulls(self) -> np.ndarray:
        return np.array([a.pulls for a in self.arms], dtype=np.int64)


@dataclass
class BatchResult:
    counts: np.ndarray  # (R, K, l)
    pulls: np.ndarray  # (R, K)
    covered: Optional[np.ndarray] = None  # (R,) bool
    finite_checks: Optional[np.ndarray] = None  # (R,) number of finite (arm, round) bounds checked
    records: Optional[list] = None


def _select(phi_vals, finite, pulls):
    """Argmax with infinite bounds first (fewest pulls, then lowest index)."""
    any_inf = ~np.all(finite, axis=1)
    inf_key = np.where(finite, -np.inf, -pulls.astype(float))
    fin_key = np.where(finite, phi_vals, -np.inf)
    return np.where(any_inf, np.argmax(inf_key, axis=1), np.argmax(fin_key, axis=1))


def track_batch(dists, kind, n: int, delta: float, symbols: np.ndarray, spec: Optional[ObjectiveSpec] = None,
                c_true=None, record: bool = False) -> BatchResult:
    """Optimistic tracking on many replications at once.

    ``symbols`` has shape (R, K, >= n); arm i's k-th pull consumes
    symbols[r, i, k]. When ``c_true`` is given, coverage of u >= c is tracked
    at every selection round.
    """
    dists = [as_distribution(P) for P in dists]
    K, l = len(dists), dists[0].l
    kind = DistanceKind.parse(kind)
    _check_budget(n, K)
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    spec = spec or objective(kind, l)
    sched = conf.schedule_for(kind, delta, K, l)
    R = symbols.shape[0]
    rows = np.arange(R)
    counts = np.zeros((R, K, l), dtype=np.int64)
    pulls = np.zeros((R, K), dtype=np.int64)
    cached = kind in (DistanceKind.L2SQ, DistanceKind.L1, DistanceKind.TV)
    c_hat = np.zeros((R, K)) if cached else None
    covered = finite_checks = None
    if c_true is not None:
        c_true = np.asarray(c_true, dtype=float)
        covered = np.ones(R, dtype=bool)
        finite_checks = np.zeros(R, dtype=np.int64)
    records = [] if record else None

    def pull(arm, t):
        sym = symbols[rows, arm, pulls[rows, arm]]
        counts[rows, arm, sym] += 1
        pulls[rows, arm] += 1
        if cached:
            c_hat[rows, arm] = conf.plugin_c_batch(kind, counts[rows, arm, :])

    for t in range(1, n + 1):
        if t <= K:
            arm = np.full(R, t - 1)
            if record:
                records.append((t, arm.copy(), None, None, pulls.copy()))
        else:
            u, fin = conf.upper_batch(kind, sched, counts, t, c_hat)
            phi_vals = spec.value(np.where(fin, u, 0.0), np.maximum(pulls, 1))
            arm = _select(phi_vals, fin, pulls)
            if covered is not None:
                ok = np.where(fin, u >= c_true[None, :] * (1 - 1e-12), True)
                covered &= np.all(ok, axis=1)
                finite_checks += fin.sum(axis=1)
            if record:
                records.append((t, arm.copy(), np.where(fin, u, np.nan), np.where(fin, phi_vals, np.nan),
                                pulls.copy()))
        pull(arm, t)
    return BatchResult(counts, pulls, covered, finite_checks, records)


def optimistic_tracking(problem, objective_spec, bound, n: int, delta: float, rng: RngStream,
                        rep: int = 0) -> TrackingTrajectory:
    """One run of optimistic tracking with per-round records.

    ``bound`` is a distance kind (or a scalar bound function from the
    confidence module, used only to identify the kind).
    """
    kind = _bound_kind(bound, objective_spec)
    dists = [as_distribution(P) for P in problem]
    symbols = symbol_streams(dists, n, rng, 1, rep)
    res = track_batch(dists, kind, n, delta, symbols, spec=objective_spec, record=True)
    scale = 1.0 / conf.SQRT_2PI if kind is DistanceKind.SEPARATION else 1.0
    recs = []
    for t, arm, u, ph, pl in res.records:
        if u is None:
            uu = [None] * len(dists)
            pp = [None] * len(dists)
        else:
            uu = [None if np.isnan(x) else float(x) * scale for x in u[0]]
            pp = [None if np.isnan(x) else float(x) for x in ph[0]]
        recs.append(TrackingRecord(t, int(arm[0]), uu, pp, [int(x) for x in pl[0]]))
    arms = [ArmState(i, res.counts[0, i]) for i in range(len(dists))]
    return TrackingTrajectory(recs, arms)


_BOUND_KINDS = {
    conf.upper_l2: DistanceKind.L2SQ,
    conf.upper_l1: DistanceKind.L1,
    conf.upper_kl: DistanceKind.KL,
    conf.upper_sep: DistanceKind.SEPARATION,
}


def _bound_kind(bound, spec):
    if callable(bound) and bound in _BOUND_KINDS:
        kind = _BOUND_KINDS[bound]
        if kind is DistanceKind.L1 and spec is not None and spec.kind is DistanceKind.TV:
            return DistanceKind.TV
        return kind
    return DistanceKind.parse(bound)
