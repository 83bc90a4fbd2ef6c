"""Moment duality: stationary moments, generating function, fixation laws."""

import math

import numpy as np
import pytest

from blockstat.closedform import PgfEvaluator, bs_rho
from blockstat.duality import (
    ancestral_type_h,
    ancestral_type_h_from_tails,
    bs_absorption,
    bs_s2,
    bs_w_generating,
    complete_monotonicity_defect,
    geometric_pgf_absorption,
    kimura_fixation,
    moran_fixation,
    poisson_duality_fixation,
    solve_w_moments,
)
from blockstat.errors import DomainError, PreconditionViolated
from blockstat.measures import LambdaMeasure, ModelParams
from blockstat.recursions import crow_kimura_geometric


def test_w_moments_zero_measure_power_law():
    zero = LambdaMeasure.crow_kimura()
    ms = solve_w_moments(zero, ModelParams(1.0, 1.0, 1.0), tol=1e-12)
    w = (3 - math.sqrt(5)) / 2
    for n in range(12):
        assert ms[n] == pytest.approx(w**n, abs=1e-12)
    assert ms[0] == 1.0
    assert np.all(np.diff(ms.w[:40]) <= 0)
    assert ms.monotonicity_defect <= 1e-10


def test_w_moments_requires_two_way_mutation():
    with pytest.raises(PreconditionViolated):
        solve_w_moments(LambdaMeasure.uniform(), ModelParams(1.0, 1.0, 0.0))


def test_complete_monotonicity_detector():
    geom = 0.5 ** np.arange(12)
    assert complete_monotonicity_defect(geom) == 0.0
    assert complete_monotonicity_defect(np.array([1.0, 0.1, 0.5])) > 0


def test_bs_s2_is_root():
    prm = ModelParams(1.0, 0.5, 0.5)
    s2 = bs_s2(prm)
    h = (
        prm.theta * s2
        - prm.theta1 * s2**2
        - prm.sigma * (1 - s2)
        - (1 - s2) * math.log1p(-s2)
    )
    assert abs(h) < 1e-12


def test_bs_w_generating_against_moments():
    uni = LambdaMeasure.uniform()
    for prm in (ModelParams(1.0, 0.5, 0.5), ModelParams(1.0, 1.0, 1.0), ModelParams(0.5, 2.0, 0.3)):
        ms = solve_w_moments(uni, prm, tol=1e-12)
        wg = bs_w_generating(prm, n_taylor=12)
        for n in range(1, 13):
            assert wg.taylor[n] == pytest.approx(ms[n], abs=1e-10)
        assert wg.circle_closure < 1e-10
        # values: w(0) = 0, increasing, convex; matches the moment series
        grid = np.linspace(1e-3, wg.s2 * 0.98, 25)
        vals = wg.values(grid)
        assert np.all(np.diff(vals) > 0)
        assert np.all(np.diff(vals, 2) > -1e-10)
        nn = np.arange(1, ms.truncation_K + 1)
        for s in grid[::6]:
            series = float(np.dot(ms.w[1:], s**nn))
            assert wg.value(float(s)) == pytest.approx(series, abs=1e-9)


def test_bs_w_domain_error_beyond_s2():
    wg = bs_w_generating(ModelParams(1.0, 0.5, 0.5))
    with pytest.raises(DomainError):
        wg.value(wg.s2 + 0.01)
    with pytest.raises(DomainError):
        wg.stieltjes(1.0 / wg.s2 - 0.1)


def test_bs_w_kernel_generating_function_value():
    # sum s^k/(k(k+1)) at s = 1/2 equals 1 - ln 2
    val = sum(0.5**k / (k * (k + 1)) for k in range(1, 400))
    assert val == pytest.approx(1 - math.log(2), abs=1e-14)


def test_stieltjes_transform_asymptotics():
    wg = bs_w_generating(ModelParams(1.0, 0.5, 0.5))
    t = 50.0
    # E[1/(t-Y)] ~ 1/t + E[Y]/t^2 for large t
    approx = 1 / t + wg.taylor[1] / t**2
    assert wg.stieltjes(t) == pytest.approx(approx, abs=1e-4 / t)


def test_bs_absorption_examples_and_identity():
    assert bs_absorption(0.0, 1.0) == 1.0
    assert bs_absorption(1.0, 1.0) == 0.0
    assert bs_absorption(0.5, math.log(2)) == pytest.approx(1 / 3, abs=1e-15)
    rng = np.random.default_rng(11)
    for _ in range(30):
        sigma = float(rng.uniform(0.05, 4.0))
        x = float(rng.uniform(0, 1))
        rho = 1.0 - math.exp(-sigma)
        assert bs_absorption(x, sigma) == pytest.approx(
            geometric_pgf_absorption(x, rho), abs=1e-13
        )
    # and rho agrees with the general root at theta = 0
    assert bs_rho(ModelParams(1.7)) == pytest.approx(1 - math.exp(-1.7), abs=1e-13)


def test_kimura_fixation_examples_and_duality():
    assert kimura_fixation(1.0, 1.0, 2.0) == 1.0
    assert kimura_fixation(0.0, 1.0, 2.0) == 0.0
    got = kimura_fixation(0.5, 1.0, 2.0)
    assert got == pytest.approx(
        (1 - math.exp(-0.5)) / (1 - math.exp(-1.0)), abs=1e-15
    )
    rng = np.random.default_rng(12)
    for _ in range(30):
        sigma = float(rng.uniform(0.05, 4.0))
        m0 = float(rng.uniform(0.3, 4.0))
        x = float(rng.uniform(0, 1))
        assert kimura_fixation(x, sigma, m0) == pytest.approx(
            poisson_duality_fixation(x, sigma, m0), abs=1e-12
        )


def test_moran_fixation_examples():
    assert moran_fixation(2, 2, 1.0) == 1.0
    assert moran_fixation(1, 2, 1.0) == pytest.approx(2 / 3, abs=1e-15)
    # large-N stability in log space
    val = moran_fixation(5, 10**6, 1e-3)
    assert 0.0 < val < 1.0
    assert val == pytest.approx(-math.expm1(-5 * math.log1p(1e-3)), rel=1e-10)


def test_ancestral_type_dual_paths():
    # Crow-Kimura sigma = 1, theta0 = 1, theta1 = 0: p = 1/2 geometric
    prm = ModelParams(1.0, 1.0, 0.0)
    p, pmf = crow_kimura_geometric(prm)
    pgf = PgfEvaluator("crow-kimura", {}, lambda z: (1 - p) * z / (1 - p * z), 1 - p)
    assert ancestral_type_h(pgf, 1.0) == pytest.approx(1.0, abs=1e-14)
    assert ancestral_type_h(pgf, 0.0) == pytest.approx(0.0, abs=1e-14)
    for x in np.linspace(0.05, 0.95, 10):
        a = ancestral_type_h(pgf, float(x))
        b = ancestral_type_h_from_tails(pmf, float(x))
        assert a == pytest.approx(b, abs=1e-12)


def test_w1_matches_moran_frequency_surrogate():
    # weak-convergence sanity check: w_1 = E[1 - X_inf] for the diffusion,
    # with X surrogated by the N = 200 Moran frequency chain.  The exact
    # birth-death stationary law carries the mathematical content at the
    # 0.01 tolerance; a single seeded occupancy run ties the simulator to
    # that law at its own Monte Carlo accuracy (frequency-chain mixing is
    # slow, so the run-length budget only supports a loose bound).
    from blockstat.measures import MoranParams
    from blockstat.simulate import occupancy, simulate_moran_X

    king = LambdaMeasure.kingman(2.0)
    prm = ModelParams(1.0, 1.0, 1.0)
    ms = solve_w_moments(king, prm, tol=1e-10)
    N = 200
    mp = MoranParams(N, prm.sigma / N, prm.theta0 / N, prm.theta1 / N)
    lam = lambda k: k * (N - k) * (1 + mp.s) / N + (N - k) * mp.u0
    mu = lambda k: k * (N - k) / N + k * mp.u1
    pi = [1.0]
    for k in range(1, N + 1):
        pi.append(pi[-1] * lam(k - 1) / mu(k))
    pi = np.array(pi) / sum(pi)
    exact_mean = float(np.dot(np.arange(N + 1), pi)) / N
    assert ms[1] == pytest.approx(1.0 - exact_mean, abs=0.01)

    path = simulate_moran_X(mp, N // 2, 4 * 10**5, seed=31)
    occ = occupancy(path, 0.2)
    mc_mean = sum(k * w for k, w in occ.distribution().items()) / N
    assert mc_mean == pytest.approx(exact_mean, abs=0.06)
