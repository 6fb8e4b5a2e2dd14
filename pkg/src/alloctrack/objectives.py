"""Regular objectives phi(c, T), their parameters c(P), and Taylor machinery.

Every shipped objective has the form

    phi(c, T) = k * c * T**(-alpha) + a * (l - 1) / T

with ``a = 0`` for the power-law objectives (l2, l1, tv, separation) and
``alpha = 2`` for the Taylor-type objectives (kl, chi2, hellinger). That
shape gives closed-form derivatives and a closed-form inverse in T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distributions import (
    DistanceKind,
    FDivergence,
    CHI2_F,
    HELLINGER_F,
    KL_F,
    as_distribution,
)
from .errors import (
    AlphabetTooLarge,
    DivisionByZeroMass,
    MissingConstant,
    NonpositiveBudget,
)

SUBSET_CAP = 20
SQRT_2PI = math.sqrt(2.0 * math.pi)
EPS = np.finfo(float).eps


def _positive_probs(P) -> np.ndarray:
    p = as_distribution(P).probs
    if np.any(p == 0):
        raise DivisionByZeroMass("parameter needs strictly positive masses")
    return p


# -- parameter extractors ----------------------------------------------------


def c_l2(P) -> float:
    p = as_distribution(P).probs
    return float(np.sum(p * (1.0 - p)))


def c_l1(P) -> float:
    p = as_distribution(P).probs
    return float(np.sum(np.sqrt(p * (1.0 - p))))


def c_kl(P) -> float:
    p = _positive_probs(P)
    return float((np.sum(1.0 / p) - 1.0) / 12.0)


def rho1(p):
    p = np.asarray(p, dtype=float)
    return np.sqrt((1.0 - p) / p)


def rho2(p):
    return rho1(p) + rho1(1.0 - np.asarray(p, dtype=float))


def c_sep(P) -> float:
    return float(np.sum(rho1(_positive_probs(P))))


def _subset_masses(p: np.ndarray):
    """Masses p_S and membership masks for all nonempty proper subsets S."""
    l = p.size
    if l > SUBSET_CAP:
        raise AlphabetTooLarge(f"subset enumeration supports l <= {SUBSET_CAP}, got {l}")
    codes = np.arange(1, 2**l - 1, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(l)) & 1).astype(bool)
    return masks @ p, masks


def c_tilde_sep_subset(P):
    """Return (c_tilde, S*) where S* is the maximizing subset as a tuple of indices."""
    p = _positive_probs(P)
    pS, masks = _subset_masses(p)
    # guard rounding that pushes p_S onto {0, 1}
    pS = np.clip(pS, 1e-300, 1.0 - 1e-16)
    vals = rho2(pS)
    k = int(np.argmax(vals))
    return float(vals[k]), tuple(int(j) for j in np.flatnonzero(masks[k]))


def c_tilde_sep(P) -> float:
    return c_tilde_sep_subset(P)[0]


def _sandwich_term(p):
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    return q * (1.0 + 2.0 * p * p - 2.0 * p) + np.sqrt(2.0 * q * (q**3 + p**3) / math.pi)


def sep_sandwich_constants(P):
    """Constants (C_upper, C_tilde) of the O(1/T) separation sandwich."""
    p = _positive_probs(P)
    C_upper = float(np.sum(_sandwich_term(p)))
    _, S = c_tilde_sep_subset(p)
    pS = float(p[list(S)].sum())
    C_tilde = float(np.sum(_sandwich_term(np.array([pS, 1.0 - pS]))))
    return C_upper, C_tilde


def c_taylor(fm_over_mfact: Sequence[float], P) -> float:
    """Coefficient of 1/T^2 in the expected Taylor objective of an f-divergence.

    Uses E(p_hat - p)^3 = p(1-p)(1-2p)/T^2 and the leading part
    3 p^2 (1-p)^2 / T^2 of E(p_hat - p)^4.
    """
    p = _positive_probs(P)
    a = list(fm_over_mfact) + [0.0] * 4
    a3, a4 = a[2], a[3]
    q = 1.0 - p
    return float(np.sum(a3 * q * (1.0 - 2.0 * p) / p + 3.0 * a4 * q * q / p))


@dataclass(frozen=True)
class DistanceParams:
    c: float
    c_tilde: Optional[float] = None
    C_upper: Optional[float] = None
    C_tilde: Optional[float] = None


def distance_params(kind, P) -> DistanceParams:
    kind = DistanceKind.parse(kind)
    if kind is DistanceKind.SEPARATION:
        C_upper, C_tilde = sep_sandwich_constants(P)
        return DistanceParams(c_sep(P), c_tilde_sep(P), C_upper, C_tilde)
    return DistanceParams(c_for(kind, P))


def c_for(kind, P) -> float:
    """The c parameter that matches the objective for ``kind``."""
    kind = DistanceKind.parse(kind)
    if isinstance(kind, FDivergence):
        return c_taylor(kind.taylor_coefficients(4), P)
    if kind is DistanceKind.L2SQ:
        return c_l2(P)
    if kind in (DistanceKind.L1, DistanceKind.TV):
        return c_l1(P)
    if kind is DistanceKind.KL:
        return c_kl(P)
    if kind is DistanceKind.CHI2:
        return c_taylor(CHI2_F.taylor_coefficients(4), P)
    if kind is DistanceKind.HELLINGER:
        return c_taylor(HELLINGER_F.taylor_coefficients(4), P)
    if kind is DistanceKind.SEPARATION:
        return c_sep(P)
    raise ValueError(f"unknown distance {kind!r}")


# -- objectives --------------------------------------------------------------


@dataclass(frozen=True)
class ObjectiveSpec:
    """phi(c, T) = k c T^-power + a (l - 1) / T, with analytic partials."""

    kind: object
    k: float
    power: float
    a: float = 0.0
    l: Optional[int] = None

    @property
    def alpha(self) -> Optional[float]:
        """Exponent when phi is a pure power law c / T^alpha, else None."""
        return self.power if self.a == 0 else None

    @property
    def extra(self) -> dict:
        return {} if self.l is None else {"l": self.l}

    @property
    def _lin(self) -> float:
        return self.a * (self.l - 1) if self.a else 0.0

    def value(self, c, T):
        T = np.asarray(T, dtype=float)
        if np.any(T <= 0):
            raise NonpositiveBudget("T must be positive")
        out = self.k * np.asarray(c, dtype=float) * T ** (-self.power) + self._lin / T
        return out if out.ndim else float(out)

    __call__ = value

    def eval(self, c, T):
        return self.value(c, T)

    def dC(self, c, T):
        T = np.asarray(T, dtype=float)
        out = self.k * T ** (-self.power) + 0.0 * np.asarray(c, dtype=float)
        return out if out.ndim else float(out)

    def dT(self, c, T):
        T = np.asarray(T, dtype=float)
        c = np.asarray(c, dtype=float)
        out = -self.power * self.k * c * T ** (-self.power - 1.0) - self._lin / (T * T)
        return out if out.ndim else float(out)

    def solve_T(self, c, v):
        """The T > 0 with phi(c, T) = v (phi is strictly decreasing in T)."""
        c = np.asarray(c, dtype=float)
        v = np.asarray(v, dtype=float)
        if self._lin == 0:
            out = (self.k * c / v) ** (1.0 / self.power)
        elif self.power == 2:
            b = self._lin
            out = (b + np.sqrt(b * b + 4.0 * v * self.k * c)) / (2.0 * v)
        else:
            raise NotImplementedError("closed-form inverse needs power 2 or a = 0")
        return out if out.ndim else float(out)

    def solve_dT(self, c, lam):
        """The T > 0 with dphi/dT(c, T) = lam < 0, by bisection in log T."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        lam = float(lam)
        lo = np.full(c.shape, -60.0)
        hi = np.full(c.shape, 60.0)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            # dT increases toward 0 as T grows
            too_small = self.dT(c, np.exp(mid)) < lam
            lo = np.where(too_small, mid, lo)
            hi = np.where(too_small, hi, mid)
        return np.exp(0.5 * (lo + hi))


def objective(kind, l: Optional[int] = None) -> ObjectiveSpec:
    """The shipped approximate objective for a distance."""
    kind = DistanceKind.parse(kind)
    if isinstance(kind, FDivergence):
        if l is None:
            raise ValueError("f-divergence objectives need the alphabet size l")
        a2 = kind.taylor_coefficients(2)[1]
        return ObjectiveSpec(kind, 1.0, 2.0, a2, int(l))
    if kind is DistanceKind.L2SQ:
        return ObjectiveSpec(kind, 1.0, 1.0)
    if kind is DistanceKind.L1:
        return ObjectiveSpec(kind, 1.0, 0.5)
    if kind is DistanceKind.TV:
        return ObjectiveSpec(kind, 0.5, 0.5)
    if kind is DistanceKind.SEPARATION:
        return ObjectiveSpec(kind, 1.0 / SQRT_2PI, 0.5)
    if l is None:
        raise ValueError(f"{kind.value} objective needs the alphabet size l")
    if kind in (DistanceKind.KL, DistanceKind.CHI2):
        # chi2 keeps the factor 1/2 on the (l - 1)/T term
        return ObjectiveSpec(kind, 1.0, 2.0, 0.5, int(l))
    if kind is DistanceKind.HELLINGER:
        # tracks the squared Hellinger f-divergence
        return ObjectiveSpec(kind, 1.0, 2.0, 0.25, int(l))
    raise ValueError(f"unknown distance {kind!r}")


def phi(kind, c, T, l: Optional[int] = None):
    return objective(kind, l).value(c, T)


@dataclass
class AuditResult:
    passed: bool
    failures: list = field(default_factory=list)


def regularity_audit(spec: ObjectiveSpec, c_values=None, T_grid=None, slack: float = 1e-6,
                     rng_seed: int = 0) -> AuditResult:
    """Numerical check that phi is regular on a log grid.

    Checks: nonincreasing and convex in T, nondecreasing and concave in c,
    and agreement of dC/dT with central differences.
    """
    if T_grid is None:
        T_grid = np.logspace(0, 7, 401)
    if c_values is None:
        c_values = np.linspace(0.0, 10.0, 41)
    T_grid = np.asarray(T_grid, dtype=float)
    c_values = np.asarray(c_values, dtype=float)
    fails = []

    for c in c_values[c_values > 0]:
        v = spec.value(c, T_grid)
        scale = np.abs(v).max()
        dv = np.diff(v)
        if np.any(dv > slack * scale):
            fails.append(f"not nonincreasing in T at c={c}")
        slopes = dv / np.diff(T_grid)
        # convexity: secant slopes nondecreasing; compare relative to slope size
        ds = np.diff(slopes)
        if np.any(ds < -slack * np.maximum(np.abs(slopes[:-1]), 1e-300)):
            fails.append(f"not convex in T at c={c}")

    for T in (1.0, 10.0, 1e3, 1e7):
        v = spec.value(c_values, np.full(c_values.shape, T))
        scale = max(np.abs(v).max(), 1e-300)
        dv = np.diff(v)
        if np.any(dv < -slack * scale):
            fails.append(f"not nondecreasing in c at T={T}")
        slopes = dv / np.diff(c_values)
        if np.any(np.diff(slopes) > slack * np.maximum(np.abs(slopes[:-1]), 1e-300)):
            fails.append(f"not concave in c at T={T}")

    rng = np.random.default_rng(rng_seed)
    cs = rng.uniform(0.01, 10.0, 50)
    Ts = np.exp(rng.uniform(0.0, math.log(1e7), 50))
    for c, T in zip(cs, Ts):
        hT = 1e-5 * T
        fd_T = (spec.value(c, T + hT) - spec.value(c, T - hT)) / (2 * hT)
        an_T = spec.dT(c, T)
        # roundoff of a central difference is about eps * |phi| / h
        noise_T = 8 * EPS * abs(spec.value(c, T)) / hT
        if abs(fd_T - an_T) > slack * abs(an_T) + noise_T:
            fails.append(f"dT mismatch at c={c:.4g}, T={T:.4g}")
        hc = 1e-5 * c
        fd_c = (spec.value(c + hc, T) - spec.value(c - hc, T)) / (2 * hc)
        an_c = spec.dC(c, T)
        noise_c = 8 * EPS * abs(spec.value(c, T)) / hc
        if abs(fd_c - an_c) > slack * abs(an_c) + noise_c:
            fails.append(f"dC mismatch at c={c:.4g}, T={T:.4g}")
    return AuditResult(not fails, fails)


def exact_expected_distance(kind, P, T) -> float:
    """Closed-form E[D(P_hat, P)] for the distances that have one."""
    kind = DistanceKind.parse(kind)
    if T < 1:
        raise NonpositiveBudget("T must be at least 1")
    if kind is DistanceKind.L2SQ:
        return c_l2(P) / T
    if kind is DistanceKind.CHI2:
        return (as_distribution(P).l - 1) / T
    raise ValueError(f"no closed form for {kind!r}")


# -- Taylor expansion of f-divergences --------------------------------------


@dataclass(frozen=True)
class TaylorSpec:
    """Truncated Taylor table of an f-divergence around x = 1.

    ``fm_over_mfact[m-1]`` holds f^(m)(1)/m!; ``C1`` bounds their magnitudes
    and ``Cf_r1`` is the optional remainder constant.
    """

    r: int
    fm_over_mfact: tuple
    C1: float
    Cf_r1: Optional[float] = None

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be at least 1")
        if len(self.fm_over_mfact) < self.r:
            raise ValueError("Taylor table shorter than r")
        if any(abs(a) > self.C1 + 1e-15 for a in self.fm_over_mfact):
            raise ValueError("C1 must bound every table entry")

    @classmethod
    def from_fdivergence(cls, fdiv: FDivergence, r: int = 5, Cf_r1=None, C1=None):
        table = fdiv.taylor_coefficients(r)
        if C1 is None:
            C1 = max(abs(a) for a in fdiv.taylor_coefficients(max(r, 50)))
        return cls(r, table, float(C1), Cf_r1)

    @classmethod
    def kl(cls, r: int = 5, Cf_r1=None):
        return cls.from_fdivergence(KL_F, r, Cf_r1)

    @classmethod
    def chi2(cls, r: int = 2, Cf_r1=None):
        return cls.from_fdivergence(CHI2_F, r, Cf_r1)

    @classmethod
    def hellinger(cls, r: int = 5, Cf_r1=None):
        return cls.from_fdivergence(HELLINGER_F, r, Cf_r1)

    def with_constant(self, Cf_r1: float) -> "TaylorSpec":
        return TaylorSpec(self.r, self.fm_over_mfact, self.C1, float(Cf_r1))


def taylor_f_div(spec: TaylorSpec, Phat, P) -> float:
    """r-term Taylor approximation sum_m a_m sum_j (phat_j - p_j)^m / p_j^(m-1)."""
    p = _positive_probs(P)
    ph = as_distribution(Phat).probs if not isinstance(Phat, np.ndarray) else np.asarray(Phat, float)
    d = ph - p
    total = 0.0
    for m in range(1, spec.r + 1):
        total += spec.fm_over_mfact[m - 1] * float(np.sum(d**m / p ** (m - 1)))
    return total


def taylor_moment_terms(spec: TaylorSpec, P, T: int) -> float:
    """E of the r-term Taylor objective, exactly, from binomial moments."""
    from scipy.stats import binom

    p = _positive_probs(P)
    T = int(T)
    k = np.arange(T + 1)
    total = 0.0
    for pj in p:
        w = binom.pmf(k, T, pj)
        d = k / T - pj
        for m in range(1, spec.r + 1):
            total += spec.fm_over_mfact[m - 1] * float(np.sum(w * d**m)) / pj ** (m - 1)
    return total


def remainder_bound(spec: TaylorSpec, p: float, T: float) -> float:
    """C_{f,r+1} (p T)^(-(r+1)/2)."""
    if spec.Cf_r1 is None:
        raise MissingConstant("TaylorSpec.Cf_r1 is not set")
    if p <= 0 or T < 1:
        raise ValueError("need p > 0 and T >= 1")
    return spec.Cf_r1 * (p * T) ** (-(spec.r + 1) / 2.0)


def subgaussian_moment_factor(r: int) -> float:
    return (3.0 * math.exp(2.0 / math.e) * (r + 1) / 2.0) ** (r + 1)


@dataclass(frozen=True)
class RemainderWorksheet:
    Cf_r1: float
    eps_star: float
    C_eps: float
    gamma_eps: float
    prefactor: float


def kl_remainder_constant(p: float, r: int = 5, eps_grid=None, q_points: int = 20001,
                          fdiv: FDivergence = KL_F) -> RemainderWorksheet:
    """Evaluate C_{f,r+1} for one true mass p.

    For each eps on the grid: gamma_eps = sup |R(q)| over q in [0, 1] with
    |q - p| / p >= eps, C_eps = gamma_eps / eps^(r+1), and the prefactor is
    C1 p / (1 - eps) + C_eps. The grid infimum is multiplied by the
    subgaussian (r+1)-th moment factor.
    """
    if eps_grid is None:
        eps_grid = np.round(np.arange(0.05, 0.951, 0.05), 10)
    spec = TaylorSpec.from_fdivergence(fdiv, r)
    q = np.linspace(0.0, 1.0, q_points)
    x = q / p
    poly = np.zeros_like(x)
    for m in range(1, r + 1):
        poly += spec.fm_over_mfact[m - 1] * (x - 1.0) ** m
    R = p * (fdiv.f(x) - poly)
    rel = np.abs(q - p) / p
    best = None
    for eps in eps_grid:
        sel = rel >= eps
        gamma = float(np.abs(R[sel]).max()) if np.any(sel) else 0.0
        C_eps = gamma / eps ** (r + 1)
        pref = spec.C1 * p / (1.0 - eps) + C_eps
        if best is None or pref < best[0]:
            best = (pref, float(eps), C_eps, gamma)
    pref, eps, C_eps, gamma = best
    return RemainderWorksheet(pref * subgaussian_moment_factor(r), eps, C_eps, gamma, pref)
