"""Finite measures on [0,1] driving the block counting models.

A measure is decomposed as m0*delta_0 + m1*delta_1 + interior part, the
interior being zero, a scaled uniform, a beta density, a finite atom list,
or a custom density.  Derived quantities: the multiple-merger rates
lambda_{k,j}, the critical selection strength sigma_Lambda, the
positive-recurrence test, and the tail coefficients c_{n,k} of the
stationary pmf recursion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, IntegrabilityError, PreconditionViolated
from .specfun import adaptive_quad, log_beta, quad_power_endpoints

ATOM_CAP = 10_000


# ----------------------------------------------------------------------
# Parameter records
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Selection and mutation intensities of the infinite-population model."""

    sigma: float
    theta0: float = 0.0
    theta1: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.theta0 < 0 or self.theta1 < 0:
            raise DomainError("sigma, theta0, theta1 must be nonnegative")

    @property
    def theta(self) -> float:
        return self.theta0 + self.theta1


@dataclass(frozen=True)
class MoranParams:
    """Finite-population Moran model parameters."""

    N: int
    s: float
    u0: float = 0.0
    u1: float = 0.0

    def __post_init__(self):
        if self.N < 2:
            raise DomainError("Moran model needs N >= 2")
        if self.s <= 0:
            raise DomainError("Moran selection s must be positive")
        if self.u0 < 0 or self.u1 < 0:
            raise DomainError("mutation rates must be nonnegative")

    @property
    def u(self) -> float:
        return self.u0 + self.u1


# ----------------------------------------------------------------------
# Interior parts
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Zero:
    def mass(self) -> float:
        return 0.0


@dataclass(frozen=True)
class UniformScaled:
    c: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError("uniform interior needs c > 0")

    def mass(self) -> float:
        return self.c


@dataclass(frozen=True)
class BetaDensity:
    a: float
    b: float
    total_mass: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.total_mass <= 0:
            raise DomainError("beta interior needs a, b, total_mass > 0")

    def mass(self) -> float:
        return self.total_mass

    def density(self, x: np.ndarray) -> np.ndarray:
        lognorm = math.log(self.total_mass) - log_beta(self.a, self.b)
        return np.exp(lognorm + (self.a - 1) * np.log(x) + (self.b - 1) * np.log1p(-x))


@dataclass(frozen=True)
class Atoms:
    locations: tuple[float, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        xs = np.asarray(self.locations, dtype=float)
        ms = np.asarray(self.masses, dtype=float)
        if xs.size != ms.size:
            raise DomainError("atom locations and masses must align")
        if xs.size > ATOM_CAP:
            raise DomainError(f"atom list exceeds the cap of {ATOM_CAP}")
        if xs.size and (np.any(xs <= 0) or np.any(xs >= 1)):
            raise DomainError("atom locations must lie strictly inside (0,1)")
        if np.any(np.diff(xs) <= 0):
            raise DomainError("atom locations must be strictly increasing")
        if np.any(ms <= 0):
            raise DomainError("atom masses must be positive")

    def mass(self) -> float:
        return float(np.sum(self.masses))

    @property
    def xs(self) -> np.ndarray:
        return np.asarray(self.locations, dtype=float)

    @property
    def ms(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float)


@dataclass(frozen=True)
class CustomDensity:
    """Density handle on (0,1); integrability near the endpoints is probed
    numerically on dyadic shells rather than trusted."""

    density: Callable[[np.ndarray], np.ndarray]
    label: str = "custom"

    def mass(self) -> float:
        return _dyadic_integral(lambda x: self.density(x))


InteriorPart = Zero | UniformScaled | BetaDensity | Atoms | CustomDensity


def _dyadic_integral(f: Callable[[np.ndarray], np.ndarray], cap: float = 1e12) -> float:
    """Integral of f over (0,1) by dyadic shells toward both endpoints.

    Returns +inf when partial sums exceed the divergence cap.
    """
    total = adaptive_quad(f, 0.25, 0.75, tol=1e-13)
    lo, hi = 0.25, 0.75
    for _ in range(200):
        left = adaptive_quad(f, lo / 2.0, lo, tol=1e-14)
        right = adaptive_quad(f, hi, 1.0 - (1.0 - hi) / 2.0, tol=1e-14)
        total += left + right
        if total > cap:
            return math.inf
        lo /= 2.0
        hi = 1.0 - (1.0 - hi) / 2.0
        if abs(left) + abs(right) < 1e-15 * (1.0 + abs(total)):
            return total
    raise IntegrabilityError("dyadic shell integration did not settle")


# ----------------------------------------------------------------------
# The measure itself
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaMeasure:
    """Finite measure m0*delta_0 + m1*delta_1 + interior on (0,1)."""

    m0: float = 0.0
    m1: float = 0.0
    interior: InteriorPart = field(default_factory=Zero)

    def __post_init__(self):
        if self.m0 < 0 or self.m1 < 0:
            raise DomainError("endpoint atom masses must be nonnegative")

    def total_mass(self) -> float:
        return self.m0 + self.m1 + self.interior.mass()

    def is_zero(self) -> bool:
        return self.m0 == 0.0 and self.m1 == 0.0 and isinstance(self.interior, Zero)

    # -- constructors ---------------------------------------------------

    @staticmethod
    def kingman(m0: float = 2.0) -> "LambdaMeasure":
        return LambdaMeasure(m0=m0)

    @staticmethod
    def star(m1: float = 1.0) -> "LambdaMeasure":
        return LambdaMeasure(m1=m1)

    @staticmethod
    def uniform(c: float = 1.0) -> "LambdaMeasure":
        return LambdaMeasure(interior=UniformScaled(c))

    @staticmethod
    def beta(a: float, b: float, total_mass: float = 1.0) -> "LambdaMeasure":
        return LambdaMeasure(interior=BetaDensity(a, b, total_mass))

    @staticmethod
    def beta31(total_mass: float = 1.0) -> "LambdaMeasure":
        """The density 3*x^2 (times total_mass) on (0,1)."""
        return LambdaMeasure(interior=BetaDensity(3.0, 1.0, total_mass))

    @staticmethod
    def crow_kimura() -> "LambdaMeasure":
        return LambdaMeasure()

    @staticmethod
    def from_atoms(
        locations: Sequence[float], masses: Sequence[float]
    ) -> "LambdaMeasure":
        order = np.argsort(np.asarray(locations, dtype=float))
        xs = tuple(float(np.asarray(locations)[i]) for i in order)
        ms = tuple(float(np.asarray(masses)[i]) for i in order)
        return LambdaMeasure(interior=Atoms(xs, ms))

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        if isinstance(self.interior, Zero):
            inner = {"type": "zero"}
        elif isinstance(self.interior, UniformScaled):
            inner = {"type": "uniform", "c": self.interior.c}
        elif isinstance(self.interior, BetaDensity):
            inner = {
                "type": "beta",
                "a": self.interior.a,
                "b": self.interior.b,
                "mass": self.interior.total_mass,
            }
        elif isinstance(self.interior, Atoms):
            inner = {
                "type": "atoms",
                "atoms": [
                    [x, m]
                    for x, m in zip(self.interior.locations, self.interior.masses)
                ],
            }
        else:
            raise DomainError("custom densities are not serialisable")
        return {"m0": self.m0, "m1": self.m1, "interior": inner}

    @staticmethod
    def from_dict(d: dict) -> "LambdaMeasure":
        inner = d.get("interior", {"type": "zero"})
        kind = inner.get("type", "zero")
        if kind == "zero":
            interior: InteriorPart = Zero()
        elif kind == "uniform":
            interior = UniformScaled(float(inner.get("c", 1.0)))
        elif kind == "beta":
            interior = BetaDensity(
                float(inner["a"]), float(inner["b"]), float(inner.get("mass", 1.0))
            )
        elif kind == "atoms":
            pairs = sorted((float(x), float(m)) for x, m in inner["atoms"])
            interior = Atoms(
                tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)
            )
        else:
            raise DomainError(f"unknown interior type {kind!r}")
        return LambdaMeasure(
            m0=float(d.get("m0", 0.0)), m1=float(d.get("m1", 0.0)), interior=interior
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "LambdaMeasure":
        return LambdaMeasure.from_dict(json.loads(text))


# ----------------------------------------------------------------------
# Merger rates lambda_{k,j} = int x^(j-2) (1-x)^(k-j) Lambda(dx)
# ----------------------------------------------------------------------


def lambda_rate(measure: LambdaMeasure, k: int, j: int) -> float:
    """Rate factor of a j-merger among k blocks, 2 <= j <= k.

    The atom at 0 contributes only to j = 2, the atom at 1 only to j = k;
    beta interiors reduce to a ratio of beta functions.
    """
    if not 2 <= j <= k:
        raise DomainError("lambda_rate needs 2 <= j <= k")
    out = 0.0
    if j == 2:
        out += measure.m0
    if j == k:
        out += measure.m1
    interior = measure.interior
    if isinstance(interior, Zero):
        pass
    elif isinstance(interior, UniformScaled):
        out += interior.c * math.exp(log_beta(j - 1, k - j + 1))
    elif isinstance(interior, BetaDensity):
        a, b = interior.a, interior.b
        out += interior.total_mass * math.exp(
            log_beta(a + j - 2, b + k - j) - log_beta(a, b)
        )
    elif isinstance(interior, Atoms):
        xs, ms = interior.xs, interior.ms
        with np.errstate(divide="ignore"):
            logterm = (j - 2) * np.log(xs) + (k - j) * np.log1p(-xs)
        out += float(np.sum(ms * np.exp(logterm)))
    else:
        def f(x):
            return np.power(x, j - 2) * np.power(1.0 - x, k - j) * interior.density(x)

        out += adaptive_quad(f, 0.0, 1.0, tol=1e-13)
    return out


def total_merger_rate(measure: LambdaMeasure, k: int) -> float:
    """Sum over targets of binom(k, k-l+1) * lambda_{k, k-l+1}."""
    return float(
        sum(
            math.comb(k, k - ell + 1) * lambda_rate(measure, k, k - ell + 1)
            for ell in range(1, k)
        )
    )


# ----------------------------------------------------------------------
# sigma_Lambda = -int log(1-x) x^-2 Lambda(dx)
# ----------------------------------------------------------------------


def sigma_lambda(measure: LambdaMeasure) -> float:
    """Critical selection strength; +inf signals certain positive recurrence.

    The atom at 0 contributes +inf (the integrand behaves like 1/x there),
    as does the atom at 1 (log divergence); interior densities that are
    too heavy near 0 are reported as +inf as well.
    """
    if measure.m0 > 0 or measure.m1 > 0:
        return math.inf
    interior = measure.interior
    if isinstance(interior, Zero):
        return 0.0
    if isinstance(interior, UniformScaled):
        return math.inf  # integrand ~ c/x near 0
    if isinstance(interior, BetaDensity):
        a, b, mass = interior.a, interior.b, interior.total_mass
        if a <= 1.0:
            return math.inf

        def f(x):
            out = np.zeros_like(x)
            inside = (x > 0) & (x < 1)
            xx = x[inside]
            out[inside] = -np.log1p(-xx) * np.exp(
                (a - 3.0) * np.log(xx)
                + (b - 1.0) * np.log1p(-xx)
                + math.log(mass)
                - log_beta(a, b)
            )
            return out

        return adaptive_quad(f, 0.0, 1.0, tol=1e-11, max_panels=8192)
    if isinstance(interior, Atoms):
        xs, ms = interior.xs, interior.ms
        return float(np.sum(-np.log1p(-xs) * ms / xs**2))

    def f(x):
        return -np.log1p(-x) / x**2 * interior.density(x)

    return _dyadic_integral(f)


@dataclass(frozen=True)
class RecurrenceReport:
    recurrent: bool
    clause: str
    sigma_lambda: float

    def __bool__(self) -> bool:
        return self.recurrent


def is_positive_recurrent(
    measure: LambdaMeasure, params: ModelParams
) -> RecurrenceReport:
    """Sufficient positive-recurrence test; sharp for the zero measure.

    For Lambda == 0 the criterion is exact: theta0 > 0, or theta0 = 0 and
    theta1 > sigma.  Otherwise theta0 > 0 or sigma < sigma_Lambda + theta1
    is sufficient only, so a False answer means "not established".
    """
    if params.sigma <= 0:
        raise PreconditionViolated("positive recurrence test assumes sigma > 0")
    if measure.is_zero():
        if params.theta0 > 0:
            return RecurrenceReport(True, "theta0 > 0", 0.0)
        if params.theta1 > params.sigma:
            return RecurrenceReport(True, "theta1 > sigma (exact zero-measure criterion)", 0.0)
        return RecurrenceReport(
            False, "zero measure with theta0 = 0 and theta1 <= sigma", 0.0
        )
    if params.theta0 > 0:
        return RecurrenceReport(True, "theta0 > 0", math.nan)
    sl = sigma_lambda(measure)
    if params.sigma < sl + params.theta1:
        return RecurrenceReport(True, "sigma < sigma_Lambda + theta1", sl)
    return RecurrenceReport(
        False, "sufficient condition sigma < sigma_Lambda + theta1 fails", sl
    )


# ----------------------------------------------------------------------
# c_{n,k}: tail coefficients of the pmf recursion
# ----------------------------------------------------------------------


def _bracket_small(x: np.ndarray, n: int, k: int) -> np.ndarray:
    """(1-x)^n * sum_{m > k-n} binom(m+n-1, n-1) x^m for x below 1/2.

    Summed in log space term by term; safe for locations that underflow
    x^(k-n+1).
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if x.size == 0:
        return out
    m0 = k - n + 1
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    logcoef = (
        math.lgamma(m0 + n) - math.lgamma(n) - math.lgamma(m0 + 1)
    )  # log binom(m0+n-1, n-1)
    logterm = logcoef + m0 * logx
    acc = np.exp(logterm)
    m = m0
    # ratio of consecutive terms: x * (m+n)/(m+1) <= x * cst -> geometric
    for _ in range(100_000):
        m += 1
        logterm = logterm + math.log((m + n - 1.0) / m) + logx
        term = np.exp(logterm)
        acc += term
        ratio = x * (m + n) / (m + 1.0)
        bound = term * ratio / np.maximum(1.0 - ratio, 1e-6)
        if np.all(bound <= 1e-18 * (acc + 1e-300)):
            break
    return np.exp(n * np.log1p(-x)) * acc


def _bracket_large(x: np.ndarray, n: int, k: int) -> np.ndarray:
    """1 - (1-x)^n * sum_{m=0}^{k-n} binom(m+n-1, n-1) x^m for x >= 1/2."""
    x = np.asarray(x, dtype=float)
    term = np.exp(n * np.log1p(-x))  # m = 0 term times (1-x)^n
    acc = term.copy()
    for m in range(k - n):
        term = term * x * (m + n) / (m + 1.0)
        acc += term
    return 1.0 - acc


def tail_bracket(x: np.ndarray, n: int, k: int) -> np.ndarray:
    """Stable value of 1 - (1-x)^n sum_{m<=k-n} binom(m+n-1,n-1) x^m on (0,1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 0.5
    out[small] = _bracket_small(x[small], n, k)
    out[~small] = _bracket_large(x[~small], n, k)
    return out


def cnk(measure: LambdaMeasure, n: int, k: int, tol: float = 1e-12) -> float:
    """Coefficient c_{n,k} (k > n >= 1) of the stationary pmf recursion.

    Evaluated in the complementary form
        (1/n) int x^-2 [1 - (1-x)^n sum_{m=0}^{k-n} binom(m+n-1,n-1) x^m] L0(dx),
    which keeps the integrand bounded near 0.  Exact for the uniform
    (c/(k-n)) and beta(3,1) (3 mass/(k+1)) interiors.
    """
    if not k > n >= 1:
        raise DomainError("cnk needs k > n >= 1")
    interior = measure.interior
    if isinstance(interior, Zero):
        return 0.0
    if isinstance(interior, UniformScaled):
        return interior.c / (k - n)
    if isinstance(interior, BetaDensity) and interior.a == 3.0 and interior.b == 1.0:
        return 3.0 * interior.total_mass / (k + 1)
    if isinstance(interior, Atoms):
        xs, ms = interior.xs, interior.ms
        return float(np.sum(ms * tail_bracket(xs, n, k) / xs**2)) / n
    if isinstance(interior, BetaDensity):
        a, b, mass = interior.a, interior.b, interior.total_mass
        lognorm = math.log(mass) - log_beta(a, b)

        def f(x):
            out = np.zeros_like(x)
            inside = (x > 0) & (x < 1)
            xx = x[inside]
            out[inside] = tail_bracket(xx, n, k) * np.exp(
                lognorm + (a - 3.0) * np.log(xx)
            )
            return out

        return quad_power_endpoints(f, 0.0, 1.0, alpha=0.0, beta=b - 1.0, tol=tol) / n

    def f(x):
        out = np.zeros_like(x)
        inside = (x > 0) & (x < 1)
        xx = x[inside]
        out[inside] = tail_bracket(xx, n, k) / xx**2 * interior.density(xx)
        return out

    return adaptive_quad(f, 0.0, 1.0, tol=tol, max_panels=8192) / n


def cnk_row(measure: LambdaMeasure, n: int, K: int) -> np.ndarray:
    """Vector (c_{n,n+1}, ..., c_{n,K}); vectorised over k for atom interiors."""
    interior = measure.interior
    ks = np.arange(n + 1, K + 1)
    if isinstance(interior, Zero) or ks.size == 0:
        return np.zeros(ks.size)
    if isinstance(interior, UniformScaled):
        return interior.c / (ks - n)
    if isinstance(interior, BetaDensity) and interior.a == 3.0 and interior.b == 1.0:
        return 3.0 * interior.total_mass / (ks + 1.0)
    if isinstance(interior, Atoms):
        return _cnk_row_atoms(interior.xs, interior.ms, n, K)
    return np.array([cnk(measure, n, int(k)) for k in ks])


def _cnk_row_atoms(xs: np.ndarray, ms: np.ndarray, n: int, K: int) -> np.ndarray:
    """Atom-interior c_{n,k} for k = n+1..K in one sweep.

    Locations >= 1/2 accumulate the complementary partial sums upward in
    k; smaller ones carry the tail series downward in k (one log-space
    term per step), so the whole row costs O(K * n_atoms).
    """
    ks = np.arange(n + 1, K + 1)
    out = np.zeros(ks.size)
    small = xs < 0.5
    xs_l, ms_l = xs[~small], ms[~small]
    if xs_l.size:
        # S accumulates binom(m+n-1, n-1) x^m (1-x)^n upward in m = k-n
        term = np.exp(n * np.log1p(-xs_l))
        acc = term.copy()
        w_l = ms_l / xs_l**2
        for m in range(1, K - n + 1):
            term = term * xs_l * (m + n - 1.0) / m
            acc += term
            out[m - 1] += float(np.dot(w_l, 1.0 - acc))
    xs_s, ms_s = xs[small], ms[small]
    if xs_s.size:
        # tail S_k = sum_{m > k-n} binom(m+n-1, n-1) x^m, descending in k
        with np.errstate(divide="ignore"):
            logx = np.log(xs_s)
        onemx_n = np.exp(n * np.log1p(-xs_s))
        w_s = ms_s * onemx_n / xs_s**2
        m_top = K - n + 1
        logc = math.lgamma(m_top + n) - math.lgamma(n) - math.lgamma(m_top + 1)
        logterm = logc + m_top * logx
        tail = np.exp(logterm)
        m = m_top
        for _ in range(200_000):
            m += 1
            logterm = logterm + math.log((m + n - 1.0) / m) + logx
            t = np.exp(logterm)
            tail += t
            ratio = xs_s * (m + n) / (m + 1.0)
            bound = t * ratio / np.maximum(1.0 - ratio, 1e-6)
            if np.all(bound <= 1e-18 * (tail + 1e-300)):
                break
        # now descend: S_{k} = S_{k+1} + term at m = k-n+1
        logterm = logc + m_top * logx  # term at m = K-n+1 (already inside tail)
        out[K - n - 1] += float(np.dot(w_s, tail))
        for k in range(K - 1, n, -1):
            mm = k - n + 1
            logterm = logterm - math.log((mm + n) / (mm + 1.0)) - logx
            tail = tail + np.exp(logterm)
            out[k - n - 1] += float(np.dot(w_s, tail))
    return out / n
