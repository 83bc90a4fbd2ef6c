"""Geometric-law toolkit: Moebius dynamics, the measure operator, and
fixed-point measures.

A stationary block-count law is geometric with parameter 1-rho exactly
when the measure has no endpoint atoms and satisfies a pushforward
identity (cg3a) together with a scalar normalisation (cg3b).  The
involution phi(x) = (1-x)/(1-rho x) transports such measures to fixed
points of the operator S mu = rho y (2 - rho y) mu + (1-rho) mu o phi^-1,
whose discrete fixed points are built here explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, PreconditionViolated
from .measures import (
    Atoms,
    BetaDensity,
    CustomDensity,
    LambdaMeasure,
    ModelParams,
    UniformScaled,
    Zero,
)
from .specfun import adaptive_quad


def phi_big(rho: float, x):
    """The involution (1-x)/(1-rho x); its own inverse."""
    return (1.0 - x) / (1.0 - rho * x)


def phi_small(rho: float, x):
    """The contraction (1-rho) x / (1-rho x) toward 0."""
    return (1.0 - rho) * x / (1.0 - rho * x)


def phi_iterate(rho: float, x, n: int):
    """n-th iterate of phi_small (negative n gives the inverse iterates)."""
    if not 0.0 < rho < 1.0:
        raise DomainError("rho must lie in (0,1)")
    if n == 0:
        return x + 0.0
    if n > 0:
        q = (1.0 - rho) ** n
        return q * x / (1.0 - x * (1.0 - q))
    q = (1.0 - rho) ** (-n)
    return x / (q + x * (1.0 - q))


@dataclass(frozen=True)
class MobiusInvolution:
    """phi(x) = (1-x)/(1-rho x) with phi(phi(x)) = x."""

    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise DomainError("rho must lie in (0,1)")

    def __call__(self, x):
        return phi_big(self.rho, x)


# ----------------------------------------------------------------------
# Atomic measures on (0,1)
# ----------------------------------------------------------------------


@dataclass
class AtomicMeasure:
    """Countable atom list on (0,1), ordered by the orbit index k.

    locations[i] = phi_small^(ks[i])(x0); tail_bound covers the mass of
    the omitted |k| > K atoms.
    """

    ks: np.ndarray
    locations: np.ndarray
    masses: np.ndarray
    truncation_index_K: int
    tail_bound: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.masses <= 0):
            raise DomainError("atom masses must be positive")
        if np.any((self.locations <= 0) | (self.locations >= 1)):
            raise DomainError("atom locations must lie in (0,1)")
        order = np.argsort(self.locations)
        diffs = np.diff(self.locations[order])
        if np.any(diffs == 0):
            raise DomainError("atom locations must be distinct")

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def moment(self, j: int) -> float:
        return float(np.dot(self.locations**j, self.masses))

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("k,location,mass\n")
            for k, x, m in zip(self.ks, self.locations, self.masses):
                fh.write(f"{int(k)},{float(x)!r},{float(m)!r}\n")


def build_discrete_fixed_point(
    rho: float, x0: float, m0_mass: float, K: int | None = None
) -> AtomicMeasure:
    """Fixed-point atom family of the measure operator at parameter rho.

    Atoms sit on the phi orbit of x0 with masses
      m_k  = (1-rho)^k (1-rho x0)^2 m0 / (1 - x0 (1-(1-rho)^(k+1)))^2
      m_-k = (1-rho)^(k-2) (1-rho x0)^2 m0 / ((1-rho)^(k-1) + x0 (1-(1-rho)^(k-1)))^2
    which decay geometrically at rate (1-rho) on both sides.
    """
    if not 0.0 < rho < 1.0:
        raise DomainError("rho must lie in (0,1)")
    if not 0.0 < x0 < 1.0 or m0_mass <= 0.0:
        raise DomainError("x0 in (0,1) and m0_mass > 0 required")
    if K is None:
        K = max(16, int(math.ceil(math.log(1e-12) / math.log(1.0 - rho))))
    q = 1.0 - rho
    c2 = (1.0 - rho * x0) ** 2 * m0_mass

    def mass_pos(k: int) -> float:
        return q**k * c2 / (1.0 - x0 * (1.0 - q ** (k + 1))) ** 2

    def mass_neg(k: int) -> float:
        return q ** (k - 2) * c2 / (q ** (k - 1) + x0 * (1.0 - q ** (k - 1))) ** 2

    # orbit iterates collapse onto the endpoints once (1-rho)^k falls below
    # the floating-point resolution; such atoms carry mass < 1e-16 m0 and
    # are folded into the tail bound instead of being stored
    ks_list: list[int] = [0]
    locs_list: list[float] = [x0]
    mass_list: list[float] = [m0_mass]
    k_pos_end = K
    prev = x0
    for k in range(1, K + 1):
        loc = phi_iterate(rho, x0, k)
        m = mass_pos(k)
        if not (0.0 < loc < prev) or m < 1e-290:
            k_pos_end = k - 1
            break
        ks_list.append(k)
        locs_list.append(loc)
        mass_list.append(m)
        prev = loc
    k_neg_end = K
    prev = x0
    for k in range(1, K + 1):
        loc = phi_iterate(rho, x0, -k)
        m = mass_neg(k)
        # stop before orbit gaps near 1 fall under the atom-merge resolution
        if not (prev < loc < 1.0) or m < 1e-290 or loc - prev < 5e-12:
            k_neg_end = k - 1
            break
        ks_list.append(-k)
        locs_list.append(loc)
        mass_list.append(m)
        prev = loc

    tail = 0.0
    for k in range(k_pos_end + 1, k_pos_end + 4001):
        t = mass_pos(k)
        tail += t
        if t < 1e-22 * (m0_mass + tail):
            break
    for k in range(k_neg_end + 1, k_neg_end + 4001):
        t = mass_neg(k)
        tail += t
        if t < 1e-22 * (m0_mass + tail):
            break

    ks = np.array(ks_list)
    order = np.argsort(ks)
    return AtomicMeasure(
        ks[order],
        np.array(locs_list)[order],
        np.array(mass_list)[order],
        int(max(k_pos_end, k_neg_end)),
        tail,
        meta={"rho": rho, "x0": x0, "requested_K": K},
    )


def apply_S(
    mu: AtomicMeasure | Callable[[np.ndarray], np.ndarray], rho: float
):
    """One application of the measure operator.

    S mu(dy) = rho y (2 - rho y) mu(dy) + (1-rho) (mu o phi_small^-1)(dy);
    atoms map to pairs (y, rho y (2-rho y) m) and (phi_small(y), (1-rho) m),
    merged when locations coincide; densities transform with the exact
    change-of-variables Jacobian.
    """
    if not 0.0 < rho < 1.0:
        raise DomainError("rho must lie in (0,1)")
    if callable(mu):
        h = mu

        def s_density(y):
            y = np.asarray(y, dtype=float)
            pre = phi_iterate(rho, y, -1)
            jac = (1.0 - rho) / ((1.0 - rho) + rho * y) ** 2
            return rho * y * (2.0 - rho * y) * h(y) + (1.0 - rho) * h(pre) * jac

        return s_density

    stay_loc = mu.locations
    stay_mass = rho * stay_loc * (2.0 - rho * stay_loc) * mu.masses
    push_loc = phi_small(rho, stay_loc)
    push_mass = (1.0 - rho) * mu.masses
    locs = np.concatenate([stay_loc, push_loc])
    mass = np.concatenate([stay_mass, push_mass])
    ks = np.concatenate([mu.ks, mu.ks + 1])
    order = np.argsort(locs)
    locs, mass, ks = locs[order], mass[order], ks[order]
    out_loc: list[float] = []
    out_mass: list[float] = []
    out_k: list[int] = []
    for x, m, k in zip(locs, mass, ks):
        if out_loc and abs(x - out_loc[-1]) <= 1e-12 * max(abs(x), 1e-300):
            out_mass[-1] += m
        else:
            out_loc.append(float(x))
            out_mass.append(float(m))
            out_k.append(int(k))
    return AtomicMeasure(
        np.array(out_k),
        np.array(out_loc),
        np.array(out_mass),
        mu.truncation_index_K + 1,
        mu.tail_bound,
        meta=dict(mu.meta),
    )


def rho_star(x0: float, m0_mass: float, params: ModelParams) -> float:
    """Unique root in (0,1) of
    m0 (1 - rho x0)^2 - x0 (1-x0) (theta1 rho^2 - (sigma+theta) rho + sigma).

    Requires m0_mass < sigma x0 (1-x0) so the endpoint signs bracket a root.
    """
    sigma, theta, th1 = params.sigma, params.theta, params.theta1
    if m0_mass >= sigma * x0 * (1.0 - x0):
        raise PreconditionViolated(
            "need m0_mass < sigma x0 (1-x0) for a root in (0,1)"
        )

    def r(z: float) -> float:
        return m0_mass * (1.0 - z * x0) ** 2 - x0 * (1.0 - x0) * (
            th1 * z * z - (sigma + theta) * z + sigma
        )

    lo, hi = 0.0, 1.0
    flo = r(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = r(mid)
        if (fm < 0.0) == (flo < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    z = 0.5 * (lo + hi)
    for _ in range(8):
        dr = -2.0 * x0 * m0_mass * (1.0 - z * x0) - x0 * (1.0 - x0) * (
            2.0 * th1 * z - sigma - theta
        )
        step = r(z) / dr
        z_new = z - step
        if 0.0 < z_new < 1.0:
            z = z_new
        if abs(step) < 1e-16:
            break
    return z


def pushforward_to_lambda(mu: AtomicMeasure, rho: float) -> LambdaMeasure:
    """Transport an atomic fixed point through the involution phi_big.

    Atoms (x, m) map to (phi_big(x), m); the result is the coalescence
    measure whose stationary block-count law is Geom(1-rho).
    """
    locs = phi_big(rho, mu.locations)
    return LambdaMeasure.from_atoms(locs, mu.masses)


def fixed_point_sum_identity(mu: AtomicMeasure, rho: float) -> tuple[float, float]:
    """Numeric and closed value of sum_i m_i (1 - rho phi^(i)(x0)) / (1-rho).

    The closed form is m0 (1-rho x0)^2 / (rho (1-rho) x0 (1-x0)).
    """
    x0 = mu.meta.get("x0")
    if x0 is None:
        raise DomainError("measure was not built from an orbit (no x0 recorded)")
    m0 = float(mu.masses[mu.ks == 0][0])
    numeric = float(np.sum(mu.masses * (1.0 - rho * mu.locations) / (1.0 - rho)))
    closed = m0 * (1.0 - rho * x0) ** 2 / (rho * (1.0 - rho) * x0 * (1.0 - x0))
    return numeric, closed


# ----------------------------------------------------------------------
# Geometric-law conditions
# ----------------------------------------------------------------------


def _series_exp(coeffs: np.ndarray, order: int) -> np.ndarray:
    """Power-series exp of a polynomial with zero constant term."""
    e = np.zeros(order + 1)
    e[0] = 1.0
    for k in range(1, order + 1):
        acc = 0.0
        for j in range(1, min(k, coeffs.size - 1) + 1):
            acc += j * coeffs[j] * e[k - j]
        e[k] = acc / k
    return e


def _cg1_bracket_series(rho: float, n: int, order: int = 18) -> np.ndarray:
    """Series coefficients of (1-rho)(1-x)^n + rho - ((1-x)/(1-rho x))^n."""
    j = np.arange(order + 1, dtype=float)
    log_1mx = np.zeros(order + 1)
    log_phi = np.zeros(order + 1)
    log_1mx[1:] = -n / j[1:]
    log_phi[1:] = -n * (1.0 - rho ** j[1:]) / j[1:]
    e1 = _series_exp(log_1mx, order)
    e2 = _series_exp(log_phi, order)
    c = (1.0 - rho) * e1 - e2
    c[0] += rho  # (1-rho) + rho - 1 = 0 by construction
    return c


def cg1_integrand(rho: float, n: int, x: np.ndarray) -> np.ndarray:
    """Stable [(1-rho)(1-x)^n + rho - phi_big(x)^n] / x^2 on (0,1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    cut = 0.25 / max(n, 1)
    small = x < cut
    if np.any(small):
        c = _cg1_bracket_series(rho, n)
        xs = x[small]
        acc = np.zeros_like(xs)
        for j in range(c.size - 1, 1, -1):
            acc = acc * xs + c[j]
        out[small] = acc
    big = ~small
    if np.any(big):
        xb = x[big]
        bracket = (
            (1.0 - rho) * np.exp(n * np.log1p(-xb))
            + rho
            - np.exp(n * (np.log1p(-xb) - np.log1p(-rho * xb)))
        )
        out[big] = bracket / xb**2
    return out


def _interior_integral(measure: LambdaMeasure, f: Callable, tol: float = 1e-12) -> float:
    """Integral of f against the interior part of the measure."""
    interior = measure.interior
    if isinstance(interior, Zero):
        return 0.0
    if isinstance(interior, Atoms):
        return float(np.sum(interior.ms * f(interior.xs)))
    if isinstance(interior, UniformScaled):
        return interior.c * adaptive_quad(f, 0.0, 1.0, tol=tol, max_panels=8192)
    if isinstance(interior, BetaDensity):
        def g(x):
            return f(x) * interior.density(x)

        return adaptive_quad(g, 0.0, 1.0, tol=tol, max_panels=8192)
    def g(x):
        return f(x) * interior.density(x)

    return adaptive_quad(g, 0.0, 1.0, tol=tol, max_panels=8192)


def _dust_free(measure: LambdaMeasure) -> bool | None:
    """Heuristic flag for int x^-1 Lambda_0(dx) = +inf (dust-free component)."""
    interior = measure.interior
    if isinstance(interior, Zero):
        return False
    if isinstance(interior, UniformScaled):
        return True
    if isinstance(interior, BetaDensity):
        return interior.a <= 1.0
    if isinstance(interior, Atoms):
        xs, ms = interior.xs, interior.ms
        if xs.size < 8:
            return False
        terms = (ms / xs)[np.argsort(xs)]
        head = terms[:4].mean()
        mid = terms[xs.size // 3 : xs.size // 3 + 4].mean()
        return bool(head >= 0.25 * mid)
    return None


@dataclass
class GeometricCheck:
    passed: bool
    reasons: list[str]
    rho: float
    cg3a_residuals: np.ndarray
    cg3b_residual: float
    cg1_residuals: np.ndarray
    dust_free: bool | None

    def __bool__(self) -> bool:
        return self.passed


def check_geometric(
    measure: LambdaMeasure,
    rho: float,
    n_max: int = 30,
    tol: float = 1e-8,
    params: ModelParams | None = None,
    cg1_n_max: int = 10,
) -> GeometricCheck:
    """Test whether the stationary block-count law can be Geom(1-rho).

    Verifies the necessary endpoint conditions m0 = m1 = 0, the
    pushforward identities (cg3a) for n = 0..n_max, the scalar balance
    (cg3b) when model parameters are supplied, and (redundantly, the
    conditions are equivalent) the combined identity (cg1) on a short
    range.  The dust-free criterion is reported as a diagnostic flag.
    """
    if not 0.0 < rho < 1.0:
        raise DomainError("rho must lie in (0,1)")
    reasons: list[str] = []
    if measure.m0 > 0.0:
        reasons.append("atom at 0 present (m0 > 0)")
    if measure.m1 > 0.0:
        reasons.append("atom at 1 present (m1 > 0)")

    ns = np.arange(0, n_max + 1)
    cg3a = np.empty(ns.size)
    for n in ns:
        lhs = _interior_integral(measure, lambda x: np.exp(n * np.log1p(-x)))
        rhs = (1.0 - rho) * _interior_integral(
            measure,
            lambda x: np.exp(
                n * (np.log1p(-x) - np.log1p(-rho * x)) - 2.0 * np.log1p(-rho * x)
            ),
        )
        cg3a[n] = abs(lhs - rhs)
    if np.max(cg3a) > tol:
        reasons.append(f"cg3a residual {np.max(cg3a):.3e} exceeds {tol:.1e}")

    cg3b = math.nan
    if params is not None:
        lhs = _interior_integral(measure, lambda x: 1.0 / (1.0 - rho * x))
        rhs = (
            params.theta1 * rho**2 - (params.sigma + params.theta) * rho + params.sigma
        ) / (rho * (1.0 - rho))
        cg3b = abs(lhs - rhs)
        if cg3b > tol:
            reasons.append(f"cg3b residual {cg3b:.3e} exceeds {tol:.1e}")

    cg1 = np.empty(0)
    if params is not None and not reasons:
        target = (
            params.theta1 * rho**2 - (params.sigma + params.theta) * rho + params.sigma
        )
        cg1 = np.empty(cg1_n_max)
        for n in range(1, cg1_n_max + 1):
            val = _interior_integral(measure, lambda x: cg1_integrand(rho, n, x)) / n
            cg1[n - 1] = abs(val - target)
        if np.max(cg1) > 10.0 * tol:
            reasons.append(f"cg1 residual {np.max(cg1):.3e} exceeds {10 * tol:.1e}")

    return GeometricCheck(
        passed=not reasons,
        reasons=reasons,
        rho=rho,
        cg3a_residuals=cg3a,
        cg3b_residual=cg3b,
        cg1_residuals=cg1,
        dust_free=_dust_free(measure),
    )
