"""Monte Carlo and exact risk evaluation plus the experiment drivers.

Replications are processed in fixed-size chunks. Replication ``r`` always
reads the random streams ``rng.spawn(r).spawn(i)`` (one per arm), whatever
the chunking or thread count, so every scheme evaluated on the same ``rng``
shares sample paths (common random numbers) and reruns are bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import comb, gammaln
from scipy.stats import binom

from . import allocators as al
from . import confidence as conf
from .distributions import (
    DiscreteDistribution,
    DistanceKind,
    EtaInterior,
    RngStream,
    as_distribution,
    distance_batch,
)
from .errors import DimensionMismatch, InvalidDistribution, TooManyOutcomes
from .objectives import c_for, objective

CHUNK = 128
MAX_OUTCOMES = 10**6


@dataclass(frozen=True)
class ProblemInstance:
    distributions: tuple
    eta: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        ds = tuple(as_distribution(P) for P in self.distributions)
        if not ds:
            raise ValueError("need at least one arm")
        if len({P.l for P in ds}) != 1:
            raise DimensionMismatch("all arms must share the alphabet size")
        if self.eta is not None:
            region = EtaInterior(self.eta)
            for i, P in enumerate(ds):
                if P not in region:
                    raise InvalidDistribution(f"arm {i} is not in the eta-interior (eta={self.eta})")
        object.__setattr__(self, "distributions", ds)

    @property
    def K(self) -> int:
        return len(self.distributions)

    @property
    def l(self) -> int:
        return self.distributions[0].l

    @property
    def min_mass(self) -> float:
        return min(P.min_mass for P in self.distributions)

    def swapped(self) -> "ProblemInstance":
        return ProblemInstance(self.distributions[::-1], self.eta, self.label + "~swapped")


def as_instance(x) -> ProblemInstance:
    return x if isinstance(x, ProblemInstance) else ProblemInstance(tuple(x))


@dataclass(frozen=True)
class Scheme:
    """An allocation producer: ``uniform``, ``oracle`` (rounded approx-oracle) or ``adaptive``."""

    name: str
    delta: Optional[float] = None
    eta: Optional[float] = None

    def __post_init__(self):
        if self.name not in ("uniform", "oracle", "adaptive"):
            raise ValueError(f"unknown scheme {self.name!r}")


def as_scheme(s) -> Scheme:
    return s if isinstance(s, Scheme) else Scheme(str(s))


def resolve_delta(scheme: Scheme, kind, inst: ProblemInstance, n: int) -> float:
    if scheme.delta is not None:
        return scheme.delta
    eta = scheme.eta if scheme.eta is not None else (inst.eta if inst.eta is not None else inst.min_mass)
    return al.default_delta(kind, n, inst.K, eta)


# -- core replication runner ---------------------------------------------


@dataclass
class _Chunk:
    counts: np.ndarray
    pulls: np.ndarray
    covered: Optional[np.ndarray] = None
    finite_checks: Optional[np.ndarray] = None


def _run_chunk(scheme, inst, kind, n, rng, start, size, c_true=None):
    symbols = al.symbol_streams(inst.distributions, n, rng, size, start)
    if scheme.name == "adaptive":
        delta = resolve_delta(scheme, kind, inst, n)
        res = al.track_batch(inst.distributions, kind, n, delta, symbols, c_true=c_true)
        return _Chunk(res.counts, res.pulls, res.covered, res.finite_checks)
    if scheme.name == "uniform":
        alloc = al.uniform(inst.K, n, integer=True).counts
    else:
        alloc = al.approx_oracle(kind, inst.distributions, n).rounded().counts
    counts = al.counts_from_allocation(symbols, alloc, inst.l)
    pulls = np.broadcast_to(alloc, (size, inst.K)).copy()
    return _Chunk(counts, pulls)


def run_replications(scheme, inst, kind, n: int, reps: int, rng: RngStream, threads: int = 1,
                     c_true=None) -> _Chunk:
    """Final counts (reps, K, l) and pulls (reps, K) for ``reps`` replications."""
    scheme, inst = as_scheme(scheme), as_instance(inst)
    kind = DistanceKind.parse(kind)
    starts = list(range(0, reps, CHUNK))
    job = lambda s: _run_chunk(scheme, inst, kind, n, rng, s, min(CHUNK, reps - s), c_true)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    cat = lambda name: (None if getattr(parts[0], name) is None
                        else np.concatenate([getattr(p, name) for p in parts]))
    return _Chunk(cat("counts"), cat("pulls"), cat("covered"), cat("finite_checks"))


def distances_from_counts(kind, inst: ProblemInstance, counts: np.ndarray) -> np.ndarray:
    """D(P_hat_i, P_i) per replication and arm, shape (reps, K)."""
    inst = as_instance(inst)
    out = np.empty(counts.shape[:2])
    for i, P in enumerate(inst.distributions):
        c = counts[:, i, :].astype(float)
        out[:, i] = distance_batch(kind, c / c.sum(axis=1, keepdims=True), P)
    return out


def _fmean(x) -> float:
    return math.fsum(x) / len(x)


# -- risk ----------------------------------------------------------------


@dataclass(frozen=True)
class RiskEstimate:
    per_arm_mean: np.ndarray
    per_arm_stderr: np.ndarray
    risk: float
    reps: int
    max_then_mean: float = float("nan")

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.per_arm_mean))

    @property
    def stderr(self) -> float:
        return float(self.per_arm_stderr[self.argmax])


def summarize(D: np.ndarray) -> RiskEstimate:
    """Mean over replications per arm, then the max over arms."""
    R = D.shape[0]
    if R < 2:
        raise ValueError("need at least 2 replications")
    means = np.array([_fmean(D[:, i]) for i in range(D.shape[1])])
    sd = np.array([math.sqrt(math.fsum((D[:, i] - means[i]) ** 2) / (R - 1)) for i in range(D.shape[1])])
    return RiskEstimate(means, sd / math.sqrt(R), float(means.max()), R, _fmean(D.max(axis=1)))


def estimate_risk(scheme, instance, distance, n: int, reps: int, rng: RngStream, threads: int = 1
                  ) -> RiskEstimate:
    inst = as_instance(instance)
    res = run_replications(scheme, inst, distance, n, reps, rng, threads)
    return summarize(distances_from_counts(distance, inst, res.counts))


def compositions(T: int, l: int) -> np.ndarray:
    """All count vectors of length l summing to T (stars and bars)."""
    rows = []
    for bars in combinations(range(T + l - 1), l - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(T + l - 2 - prev)
        rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(-1, l)


def exact_risk_enumeration(P, distance, T: int) -> float:
    """E[D(P_hat, P)] by summing over every multinomial outcome of T draws."""
    P = as_distribution(P)
    T = int(T)
    n_out = comb(T + P.l - 1, P.l - 1, exact=True)
    if n_out > MAX_OUTCOMES:
        raise TooManyOutcomes(f"{n_out} outcomes exceed the cap of {MAX_OUTCOMES}")
    k = compositions(T, P.l)
    p = P.probs
    with np.errstate(divide="ignore"):
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), -np.inf)
    kl = np.where(k > 0, k * logp, 0.0)
    logw = gammaln(T + 1) - gammaln(k + 1).sum(axis=1) + kl.sum(axis=1)
    w = np.exp(logw)
    d = distance_batch(distance, k / T, P)
    return float(np.sum(w * d))


_SEPARABLE = {DistanceKind.L2SQ, DistanceKind.L1, DistanceKind.TV, DistanceKind.KL, DistanceKind.CHI2}


def exact_risk_marginal(P, distance, T: int) -> float:
    """E[D(P_hat, P)] for a distance that is a sum over symbols, via binomial marginals."""
    kind = DistanceKind.parse(distance)
    if kind not in _SEPARABLE:
        raise ValueError(f"{kind} is not a sum over symbols")
    P = as_distribution(P)
    T = int(T)
    k = np.arange(T + 1)
    total = 0.0
    for pj in P.probs:
        w = binom.pmf(k, T, pj)
        x = k / T
        if kind is DistanceKind.L2SQ:
            g = (x - pj) ** 2
        elif kind is DistanceKind.L1:
            g = np.abs(x - pj)
        elif kind is DistanceKind.TV:
            g = 0.5 * np.abs(x - pj)
        elif kind is DistanceKind.CHI2:
            g = (x - pj) ** 2 / pj
        else:
            g = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0) / pj), 0.0)
        total += float(np.sum(w * g))
    return total


def exact_risk(P, distance, T: int) -> Optional[float]:
    """Best available exact expectation, or None when none is cheap."""
    kind = DistanceKind.parse(distance)
    if T < 1:
        return None
    if kind in _SEPARABLE:
        return exact_risk_marginal(P, kind, T)
    try:
        return exact_risk_enumeration(P, kind, T)
    except TooManyOutcomes:
        return None


# -- regret --------------------------------------------------------------


@dataclass(frozen=True)
class RegretReport:
    scheme_risk: float
    oracle_risk: float
    regret: float
    stderr: float
    reps: int
    overlay: Dict[str, float] = field(default_factory=dict)
    decomposition: Dict[str, float] = field(default_factory=dict)


def paired_difference(DA: np.ndarray, DB: np.ndarray):
    """Risk difference L(A) - L(B) and its stderr from per-replication pairs."""
    a, b = summarize(DA), summarize(DB)
    d = DA[:, a.argmax] - DB[:, b.argmax]
    R = d.size
    m = _fmean(d)
    se = math.sqrt(math.fsum((d - m) ** 2) / (R - 1) / R)
    return a, b, a.risk - b.risk, se


def theory_overlay(kind, inst: ProblemInstance, n: int, delta: float, eta: Optional[float] = None
                   ) -> Dict[str, float]:
    """Bound constants and leading regret terms, for plotting only."""
    kind = DistanceKind.parse(kind)
    K, l = inst.K, inst.l
    sched = conf.schedule_for(kind, delta, K, l)
    log_inv_n = float(sched.log_inv(n))
    cs = np.array([c_for(kind, P) for P in inst.distributions])
    out = {}
    if kind is DistanceKind.L2SQ and cs.sum() > 0:
        lam = cs / cs.sum()
        M = lam.max() * math.sqrt(2 * log_inv_n) / (lam.min() * cs.sum())
        out = {"M": M, "leading_term": (K + 5) * M * l / (lam.min() ** 2 * n**1.5)}
    elif kind in (DistanceKind.L1, DistanceKind.TV) and cs.sum() > 0:
        lam = cs**2 / np.sum(cs**2)
        C = math.sqrt(np.sum(cs**2))
        M = 2 * l * lam.max() * math.sqrt(log_inv_n) / (C * lam.min())
        out = {"M": M, "leading_term": l * math.sqrt((K + 5) * M) / (2 * lam.min() * n**0.75)}
    elif kind is DistanceKind.KL:
        eta = eta if eta is not None else inst.min_mass
        M = math.sqrt(96 * K * log_inv_n) / eta**3
        out = {"M": M, "leading_term": 2 * (l - 1) * K * M / n**2.5}
    return out


def regret(scheme, instance, distance, n: int, reps: int, rng: RngStream, threads: int = 1,
           deduce_terms: bool = True) -> RegretReport:
    """Risk of ``scheme`` minus risk of the rounded approx-oracle on common random numbers.

    When every arm's expected distance at the oracle counts is exactly
    computable, the scheme risk of arm i is estimated as
    mean(D_scheme_i - D_oracle_i) + E[D_oracle_i] and the oracle risk is exact.
    Otherwise both risks are plain Monte Carlo means on shared streams.
    """
    inst = as_instance(instance)
    kind = DistanceKind.parse(distance)
    scheme = as_scheme(scheme)
    DA = distances_from_counts(kind, inst, run_replications(scheme, inst, kind, n, reps, rng, threads).counts)
    DO = distances_from_counts(kind, inst, run_replications("oracle", inst, kind, n, reps, rng, threads).counts)
    T_orc = al.approx_oracle(kind, inst.distributions, n).rounded().counts
    gam = [exact_risk(P, kind, int(T)) for P, T in zip(inst.distributions, T_orc)]
    if all(g is not None for g in gam):
        # control variate: same-arm differences on shared streams plus the
        # oracle's exact per-arm expectation
        diffs = DA - DO
        est = np.array([_fmean(diffs[:, i]) + gam[i] for i in range(inst.K)])
        k = int(np.argmax(est))
        d = diffs[:, k]
        m = _fmean(d)
        se = math.sqrt(math.fsum((d - m) ** 2) / (reps - 1) / reps)
        scheme_risk, oracle_risk = float(est[k]), float(max(gam))
    else:
        a, o, _, se = paired_difference(DA, DO)
        scheme_risk, oracle_risk = a.risk, o.risk
    diff = scheme_risk - oracle_risk
    delta = resolve_delta(scheme if scheme.name == "adaptive" else Scheme("adaptive"), kind, inst, n)
    overlay = theory_overlay(kind, inst, n, delta)
    decomp = {}
    if deduce_terms:
        decomp = proposition_terms(kind, inst, n, scheme_risk)
    return RegretReport(scheme_risk, oracle_risk, diff, se, reps, overlay, decomp)


def proposition_terms(kind, inst: ProblemInstance, n: int, scheme_risk: float) -> Dict[str, float]:
    """Terms of the approximate-objective regret decomposition.

    level = phi_i at the approx-oracle (common to all arms), max_abs_remainder
    = max_i |gamma_i(T_i) - phi_i(T_i)| at the rounded approx-oracle counts and
    bound = scheme_risk - level + 2 max_abs_remainder. Exact expectations are
    used when cheap; otherwise the entries are omitted.
    """
    kind = DistanceKind.parse(kind)
    spec = objective(kind, inst.l)
    cs = np.array([c_for(kind, P) for P in inst.distributions])
    frac = al.approx_oracle(kind, inst.distributions, n)
    level = float(np.max(spec.value(cs, np.maximum(frac.counts, 1e-300))))
    T_int = frac.rounded().counts
    rem = []
    for P, c, T in zip(inst.distributions, cs, T_int):
        g = exact_risk(P, kind, int(T))
        if g is None:
            return {"level": level}
        rem.append(g - spec.value(c, max(int(T), 1)))
    R = float(np.max(np.abs(rem)))
    return {"level": level, "max_abs_remainder": R, "bound": scheme_risk - level + 2 * R}


# -- experiment families and drivers ----------------------------------------


@dataclass(frozen=True)
class EpsFamily:
    """Arm 1 uniform on l symbols; arm 2 puts eps on symbol 0 and spreads the rest."""

    l: int = 10

    def arm2(self, eps: float) -> DiscreteDistribution:
        p = np.full(self.l, (1.0 - eps) / (self.l - 1))
        p[0] = eps
        return DiscreteDistribution(p)

    def instance(self, eps: float) -> ProblemInstance:
        return ProblemInstance((DiscreteDistribution.uniform(self.l), self.arm2(eps)), label=f"eps={eps:g}")


DEFAULT_EPS = tuple(round(0.1 * k, 10) for k in range(1, 10))


@dataclass(frozen=True)
class EpsSweepRecord:
    epsilon: float
    n: int
    distance: str
    approx_oracle_T2: float
    adaptive_T2_mean: float
    adaptive_T2_std: float


def figure2_sweep(family: EpsFamily = EpsFamily(), distances=("l2", "l1", "kl", "sep"),
                  n_list=(200, 500, 1000, 2000), eps_list=DEFAULT_EPS, reps: int = 100,
                  rng: Optional[RngStream] = None, threads: int = 1) -> List[EpsSweepRecord]:
    rng = rng or RngStream(0)
    out = []
    for di, dname in enumerate(distances):
        kind = DistanceKind.parse(dname)
        for ni, n in enumerate(n_list):
            for ei, eps in enumerate(eps_list):
                inst = family.instance(eps)
                sub = rng.spawn(di).spawn(ni).spawn(ei)
                res = run_replications("adaptive", inst, kind, n, reps, sub, threads)
                T2 = res.pulls[:, 1].astype(float)
                orc = al.approx_oracle(kind, inst.distributions, n).counts[1]
                out.append(EpsSweepRecord(float(eps), int(n), kind.value, float(orc), _fmean(T2),
                                          float(np.std(T2, ddof=1)) if reps > 1 else 0.0))
    return out


@dataclass(frozen=True)
class GapRecord:
    distance: str
    epsilon: float
    n: int
    uniform_risk: float
    adaptive_risk: float
    gap: float
    stderr: float
    reps: int


def table1_gaps(family: EpsFamily = EpsFamily(), distances=("l2", "l1", "kl", "sep"), n: int = 500,
                eps_list=DEFAULT_EPS, reps: int = 2000, rng: Optional[RngStream] = None,
                threads: int = 1) -> List[GapRecord]:
    """L_n(uniform) - L_n(adaptive) per distance and eps on common random numbers."""
    rng = rng or RngStream(0)
    out = []
    for di, dname in enumerate(distances):
        kind = DistanceKind.parse(dname)
        for ei, eps in enumerate(eps_list):
            inst = family.instance(eps)
            sub = rng.spawn(di).spawn(ei)
            DU = distances_from_counts(kind, inst, run_replications("uniform", inst, kind, n, reps, sub, threads).counts)
            DA = distances_from_counts(kind, inst, run_replications("adaptive", inst, kind, n, reps, sub, threads).counts)
            u, a, gap, se = paired_difference(DU, DA)
            out.append(GapRecord(kind.value, float(eps), n, u.risk, a.risk, gap, se, reps))
    return out


@dataclass(frozen=True)
class DeviationRecord:
    scheme: str
    distance: str
    n: int
    epsilon: float
    max_mean_abs_dev: float
    stderr: float


def mean_abs_deviation(pulls: np.ndarray, target) -> tuple:
    """max over arms of mean |T_i - target_i|, with the stderr of that arm."""
    dev = np.abs(pulls - np.asarray(target, dtype=float)[None, :])
    m = dev.mean(axis=0)
    k = int(np.argmax(m))
    se = float(dev[:, k].std(ddof=1) / math.sqrt(dev.shape[0])) if dev.shape[0] > 1 else 0.0
    return float(m[k]), se


def lower_bound_experiment(p0: float = 0.75, n_list=(500, 1000, 2000, 4000, 8000),
                           schemes=("l2", "l1", "sep"), reps: int = 200, rng: Optional[RngStream] = None,
                           eps_fn=None, threads: int = 1) -> List[DeviationRecord]:
    """Deviation of adaptive schemes on the pair (Ber(p0), Ber(p0 - eps)) and its swap."""
    rng = rng or RngStream(0)
    eps_fn = eps_fn or (lambda n: 1.0 / (4.0 * math.sqrt(n)))
    out = []
    for si, dname in enumerate(schemes):
        kind = DistanceKind.parse(dname)
        for ni, n in enumerate(n_list):
            eps = float(eps_fn(n))
            if not 0.0 <= eps < p0 - 0.5:
                raise ValueError("need 0 <= eps < p0 - 1/2")
            base = ProblemInstance((DiscreteDistribution.bernoulli(p0), DiscreteDistribution.bernoulli(p0 - eps)))
            worst = (-1.0, 0.0)
            for ii, inst in enumerate((base, base.swapped())):
                res = run_replications("adaptive", inst, kind, n, reps, rng.spawn(si).spawn(ni).spawn(ii), threads)
                target = al.approx_oracle(kind, inst.distributions, n).counts
                worst = max(worst, mean_abs_deviation(res.pulls, target))
            out.append(DeviationRecord("adaptive", kind.value, n, eps, worst[0], worst[1]))
    return out


def deviation_rates(instance, distance="l2", n_list=(500, 1000, 2000, 4000, 8000), reps: int = 200,
                    rng: Optional[RngStream] = None, delta=None, threads: int = 1) -> List[DeviationRecord]:
    """max_i mean |T_i - T~_i*| of the adaptive scheme across budgets."""
    rng = rng or RngStream(0)
    inst = as_instance(instance)
    kind = DistanceKind.parse(distance)
    out = []
    for ni, n in enumerate(n_list):
        res = run_replications(Scheme("adaptive", delta), inst, kind, n, reps, rng.spawn(ni), threads)
        target = al.approx_oracle(kind, inst.distributions, n).counts
        m, se = mean_abs_deviation(res.pulls, target)
        out.append(DeviationRecord("adaptive", kind.value, n, float("nan"), m, se))
    return out


@dataclass(frozen=True)
class RateRecord:
    distance: str
    n: int
    scheme_risk: float
    oracle_risk: float
    regret: float
    stderr: float
    theory_leading_term: float


def regret_rates(instance, distance="l2", n_list=(500, 1000, 2000, 4000, 8000), reps: int = 500,
                 rng: Optional[RngStream] = None, delta=None, threads: int = 1) -> List[RateRecord]:
    rng = rng or RngStream(0)
    inst = as_instance(instance)
    kind = DistanceKind.parse(distance)
    out = []
    for ni, n in enumerate(n_list):
        rep = regret(Scheme("adaptive", delta), inst, kind, n, reps, rng.spawn(ni), threads, deduce_terms=False)
        out.append(RateRecord(kind.value, n, rep.scheme_risk, rep.oracle_risk, rep.regret, rep.stderr,
                              rep.overlay.get("leading_term", float("nan"))))
    return out


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class CoverageResult:
    distance: str
    coverage: float
    reps: int
    delta: float
    sigma: float
    threshold: float
    finite_checks: int
    runs_with_finite: int

    @property
    def passed(self) -> bool:
        return self.coverage >= self.threshold


def coverage_audit(bound, instance, n: int, delta: float, reps: int, rng: Optional[RngStream] = None,
                   threads: int = 1) -> CoverageResult:
    """Fraction of runs with u_{i,t} >= c_i at every selection round and arm.

    Rounds where a bound is infinite count as covered; ``finite_checks``
    reports how many finite bounds were actually compared.
    """
    rng = rng or RngStream(0)
    inst = as_instance(instance)
    kind = al._bound_kind(bound, None)
    c_true = [conf.target_c(kind, P) for P in inst.distributions]
    res = run_replications(Scheme("adaptive", delta), inst, kind, n, reps, rng, threads, c_true=c_true)
    cov = float(res.covered.mean())
    sigma = math.sqrt(delta * (1 - delta) / reps)
    return CoverageResult(kind.value, cov, reps, delta, sigma, 1 - delta - 3 * sigma,
                          int(res.finite_checks.sum()), int(np.count_nonzero(res.finite_checks)))
