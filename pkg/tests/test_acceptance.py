"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one line `[criterion NN] name: value <= tol  PASS` so the
whole gate is auditable from the pytest -s output.  All randomness is
seeded; runtime-limited criteria assert their budget.
"""

import math
import time
import warnings

import numpy as np
import pytest

import blockstat.closedform as cf
import blockstat.duality as du
import blockstat.geomfix as gf
import blockstat.recursions as rc
import blockstat.simulate as sim
import blockstat.specfun as sf
from blockstat.measures import LambdaMeasure, ModelParams, MoranParams


def _report(num: int, name: str, value: float, tol: float) -> None:
    status = "PASS" if value <= tol else "FAIL"
    print(f"[criterion {num:2d}] {name}: {value:.3e} <= {tol:.1e}  {status}")
    assert value <= tol, f"criterion {num} failed: {name} = {value} > {tol}"


def _moran_grid(seed: int, count: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        out.append(
            MoranParams(
                int(rng.integers(2, 51)),
                float(rng.uniform(0.1, 2.0)),
                float(rng.uniform(0.0, 1.0)) * (rng.random() > 0.25),
                float(rng.uniform(0.0, 1.0)) * (rng.random() > 0.25),
            )
        )
    return out


def test_criterion_01_moran_triple_agreement():
    t0 = time.monotonic()
    worst = 0.0
    for mp in _moran_grid(20260810, 50):
        closed, _ = cf.moran_closed(mp)
        shoot = rc.solve_moran(mp)
        gth = rc.solve_moran_nullspace(mp)
        worst = max(
            worst,
            closed.sup_distance(shoot),
            closed.sup_distance(gth),
            shoot.sup_distance(gth),
        )
    elapsed = time.monotonic() - t0
    _report(1, "Moran triple agreement (50 random sets, N <= 50)", worst, 1e-9)
    _report(1, "Moran triple runtime [s]", elapsed, 5.0)


def test_criterion_02_moran_simulation_tv():
    mp = MoranParams(10, 0.5, 0.1, 0.1)
    t0 = time.monotonic()
    path = sim.simulate_moran_L(mp, 5, 10**6, seed=20260810)
    occ = sim.occupancy(path, 0.2)
    tv = occ.tv_distance(rc.solve_moran(mp).probs)
    elapsed = time.monotonic() - t0
    _report(2, "Moran occupancy vs solver (TV, 1e6 events)", tv, 0.01)
    _report(2, "Moran simulation runtime [s]", elapsed, 10.0)


def test_criterion_03_kingman_closed_vs_solver():
    king = LambdaMeasure.kingman(2.0)
    worst = 0.0
    for s_ in (0.5, 1.0, 2.0):
        for t0_ in (0.5, 1.0, 2.0):
            for t1_ in (0.5, 1.0, 2.0):
                prm = ModelParams(s_, t0_, t1_)
                pmf, _ = cf.wf_closed(2.0, prm)
                rec = rc.solve_lambda_truncated(king, prm, tol=1e-12)
                worst = max(worst, pmf.sup_distance(rec))
    _report(3, "Kingman closed vs recursion (27 parameter sets)", worst, 1e-8)
    pmf0, _ = cf.wf_closed(2.0, ModelParams(1.0, 0.0, 0.0))
    n = np.arange(1, pmf0.truncation_K + 1)
    pois = np.exp(-1.0) / (1 - np.exp(-1.0)) / np.array(
        [math.factorial(int(k)) for k in n]
    )
    _report(
        3,
        "theta = 0 equals conditioned Poisson(sigma)",
        float(np.max(np.abs(pmf0.probs - pois))),
        1e-12,
    )


def test_criterion_04_finite_N_convergence():
    prm = ModelParams(1.0, 0.5, 0.5)
    wf_pmf, _ = cf.wf_closed(2.0, prm)
    sups = []
    for N in (100, 1000, 10000):
        mp = MoranParams(N, 1.0 / N, 0.5 / N, 0.5 / N)
        m_pmf, _ = cf.moran_closed(mp, n_max=80)
        width = max(m_pmf.truncation_K, wf_pmf.truncation_K)
        a = np.zeros(width)
        a[: m_pmf.truncation_K] = m_pmf.probs
        b = np.zeros(width)
        b[: wf_pmf.truncation_K] = wf_pmf.probs
        sups.append(float(np.max(np.abs(a - b))))
    print(f"[criterion  4] sup distances over N in (100, 1000, 10000): {sups}")
    assert sups[0] > sups[1] > sups[2], "convergence not monotone"
    _report(4, "monotone decrease indicator (0 = strict)", 0.0, 0.5)


def test_criterion_05_bolthausen_sznitman_geometry():
    prm = ModelParams(1.0, 0.5, 0.5)
    uni = LambdaMeasure.uniform()
    rho, geo = cf.bs_geometric_pmf(prm)
    rec = rc.solve_lambda_truncated(uni, prm, tol=1e-11)
    _report(5, "uniform recursion vs Geom(1-rho)", rec.sup_distance(geo), 1e-6)
    rep = gf.check_geometric(uni, rho, n_max=50, params=prm)
    _report(
        5,
        "geometric conditions residual (n <= 50)",
        max(float(np.max(rep.cg3a_residuals)), rep.cg3b_residual),
        1e-8,
    )
    worst = 0.0
    for prm_sp in (
        ModelParams(1.0, 0.0, 0.0),
        ModelParams(1.0, 0.0, 0.5),
        ModelParams(1.0, 0.5, 0.0),
    ):
        worst = max(worst, abs(cf.bs_rho(prm_sp) - cf.bs_rho_special(prm_sp)))
    _report(5, "Lambert-W special cases vs general root", worst, 1e-12)


def test_criterion_06_star_shaped():
    prm0 = ModelParams(1.0, 0.4, 0.0)
    closed0, _ = cf.star_closed(1.0, prm0, K=600)
    rec0 = rc.solve_star(prm0, 1.0, K=600)
    _report(6, "star theta1 = 0 closed vs recursion", closed0.sup_distance(rec0), 1e-12)

    prm = ModelParams(1.0, 0.5, 0.5)
    pmf, pgf = cf.star_closed(1.0, prm, K=400)
    n = np.arange(1, pmf.truncation_K + 1)
    worst = max(
        abs(pgf.evaluate(z) - float(np.dot(pmf.probs, z**n)))
        for z in np.linspace(0.05, 0.95, 20)
    )
    _report(6, "star closed pgf vs recursion pmf", worst, 1e-7)
    eps = 1e-5
    extrap = 2 * pgf.evaluate(1 - eps / 2) - pgf.evaluate(1 - eps)
    _report(6, "|g(1) - 1| (Richardson toward 1)", abs(extrap - 1.0), 1e-8)


def test_criterion_07_factorial_moment_recursions():
    worst = 0.0
    for mp in _moran_grid(7, 10):
        pmf = rc.solve_moran_nullspace(mp)
        j = np.arange(1, pmf.truncation_K + 1, dtype=float)
        for n in range(1, min(10, mp.N - 1) + 1):
            en, en1 = pmf.falling_moment(n), pmf.falling_moment(n + 1)
            sh = np.ones_like(j)
            for i in range(n):
                sh *= j - 1 - i
            esh = float(np.dot(sh, pmf.probs))
            lhs = ((n + 1) * (1 + mp.s) + mp.N * mp.u0) * en1
            rhs = (n + 1) * (mp.N - n) * mp.s * en - mp.N * (n + 1) * mp.u1 * esh
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0))
    _report(7, "Moran factorial-moment recursion residual", worst, 1e-8)

    king = LambdaMeasure.kingman(2.0)
    worst = 0.0
    for s_ in (0.5, 1.0, 2.0):
        for t0_ in (0.5, 1.0, 2.0):
            for t1_ in (0.5, 1.0, 2.0):
                prm = ModelParams(s_, t0_, t1_)
                pmf = rc.solve_lambda_truncated(king, prm, tol=1e-12)
                j = np.arange(1, pmf.truncation_K + 1, dtype=float)
                for n in range(1, 11):
                    en, en1 = pmf.falling_moment(n), pmf.falling_moment(n + 1)
                    sh = np.ones_like(j)
                    for i in range(n):
                        sh *= j - 1 - i
                    esh = float(np.dot(sh, pmf.probs))
                    lhs = ((n + 1) * 2.0 + 2 * t0_) * en1
                    rhs = 2 * (n + 1) * s_ * en - 2 * (n + 1) * t1_ * esh
                    worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0))
    _report(7, "Kingman factorial-moment recursion residual", worst, 1e-8)


def test_criterion_08_duality_monte_carlo():
    t0 = time.monotonic()
    king = LambdaMeasure.kingman(2.0)
    prm = ModelParams(1.0, 1.0, 1.0)
    ms = du.solve_w_moments(king, prm, tol=1e-10)
    worst_z = 0.0
    for n in range(1, 6):
        freq = sim.simulate_killed_asg(king, prm, n, 10**5, seed=8000 + n)
        se = math.sqrt(ms[n] * (1 - ms[n]) / 1e5)
        worst_z = max(worst_z, abs(freq - ms[n]) / se)
    _report(8, "killed-ASG absorption vs moments (|z|, n <= 5)", worst_z, 3.0)

    zero = LambdaMeasure.crow_kimura()
    ms0 = du.solve_w_moments(zero, ModelParams(1.0, 1.0, 1.0), tol=1e-12)
    w = (3 - math.sqrt(5)) / 2
    worst = max(abs(ms0[n] - w**n) for n in range(0, 13))
    _report(8, "zero-measure moments vs closed power law", worst, 1e-10)
    _report(8, "duality runtime [s]", time.monotonic() - t0, 60.0)


def test_criterion_09_generating_function_taylor_head():
    prm = ModelParams(1.0, 0.5, 0.5)
    uni = LambdaMeasure.uniform()
    ms = du.solve_w_moments(uni, prm, tol=1e-12)
    wg = du.bs_w_generating(prm, n_taylor=10)
    worst = max(abs(wg.taylor[n] - ms[n]) for n in range(1, 11))
    _report(9, "generating-function Taylor head vs moments", worst, 1e-5)


def test_criterion_10_fixed_point_pipeline():
    mu_half = gf.build_discrete_fixed_point(0.5, 0.3, 0.05, K=200)
    smu = gf.apply_S(mu_half, 0.5)
    got = {int(k): m for k, m in zip(smu.ks, smu.masses)}
    worst = max(
        abs(got[int(k)] - m) / m
        for k, m in zip(mu_half.ks, mu_half.masses)
        if mu_half.ks.min() < k < mu_half.ks.max()
    )
    _report(10, "S mu = mu on atoms (rho = 0.5, relative)", worst, 1e-12)

    prm = ModelParams(1.0, 0.2, 0.2)
    rs = gf.rho_star(0.3, 0.05, prm)
    mu = gf.build_discrete_fixed_point(rs, 0.3, 0.05)
    lam = gf.pushforward_to_lambda(mu, rs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pmf = rc.solve_lambda_truncated(lam, prm, tol=1e-10)
    n = np.arange(1, pmf.truncation_K + 1)
    geo = (1 - rs) * rs ** (n - 1.0)
    _report(
        10, "pushforward measure yields Geom(1-rho*)",
        float(np.max(np.abs(pmf.probs - geo))), 1e-6,
    )
    numeric, closed = gf.fixed_point_sum_identity(mu, rs)
    _report(10, "fixed-point sum identity", abs(numeric - closed), 1e-10)


def test_criterion_11_master_equation_residuals():
    zg = np.linspace(0.04, 0.92, 20)
    mp = MoranParams(12, 0.7, 0.25, 0.15)
    _, pg = cf.moran_closed(mp)
    _report(11, "Moran pgf ODE residual", cf.verify_master_equation(pg, None, mp, zg), 1e-6)

    king = LambdaMeasure.kingman(2.0)
    prm_k = ModelParams(1.0, 1.0, 0.5)
    _, pg_k = cf.wf_closed(2.0, prm_k)
    _report(
        11, "Kingman pgf ODE residual",
        cf.verify_master_equation(pg_k, king, prm_k, zg), 1e-6,
    )

    star = LambdaMeasure.star(1.0)
    prm_s = ModelParams(1.0, 0.5, 0.5)
    _, pg_s = cf.star_closed(1.0, prm_s)
    _report(
        11, "star integro-differential residual",
        cf.verify_master_equation(pg_s, star, prm_s, zg), 1e-6,
    )

    prm_b = ModelParams(1.0, 0.5, 0.5)
    rho, _ = cf.bs_geometric_pmf(prm_b)
    pg_b = cf.PgfEvaluator("bs", {}, lambda z: (1 - rho) * z / (1 - rho * z), 1 - rho)
    _report(
        11, "Carleman singular-equation residual",
        cf.verify_master_equation(pg_b, LambdaMeasure.uniform(), prm_b, zg), 1e-6,
    )


def test_criterion_12_beta31():
    prm = ModelParams(1.0, 0.5, 0.5)
    _, pmf_ode = cf.beta31_pgf(prm, K=256)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = rc.solve_lambda_truncated(LambdaMeasure.beta31(), prm, tol=1e-11)
    _report(12, "beta(3,1) ODE pmf vs recursion", pmf_ode.sup_distance(rec), 1e-6)


def test_criterion_13_special_function_identities():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(100):
        b = rng.uniform(0.1, 3.0)
        c = b + rng.uniform(0.1, 3.0)
        a = rng.uniform(-2.0, 3.0)
        z = rng.uniform(-0.9, 0.9)
        worst = max(
            worst,
            abs(sf.gauss_2f1(a, b, c, z).value - sf.gauss_2f1_quadrature(a, b, c, z)),
        )
    _report(13, "2F1 series vs integral representation", worst, 1e-9)

    worst = 0.0
    for _ in range(100):
        a = rng.uniform(0.1, 3.0)
        c = a + rng.uniform(0.1, 3.0)
        z = rng.uniform(-10.0, 10.0)
        s = sf.kummer_1f1(a, c, z)
        worst = max(worst, abs(s.value - sf.kummer_1f1_quadrature(a, c, z)) / max(1.0, abs(s.value)))
    _report(13, "1F1 series vs integral representation", worst, 1e-9)

    worst = 0.0
    for _ in range(100):
        a = rng.uniform(0.2, 2.0)
        d = a + rng.uniform(0.2, 2.0)
        b, cc = rng.uniform(0.1, 1.5, size=2)
        z, w = rng.uniform(-0.8, 0.8, size=2)
        worst = max(
            worst,
            abs(sf.appell_f1(a, b, cc, d, z, w).value - sf.appell_f1_quadrature(a, b, cc, d, z, w)),
        )
    _report(13, "Appell F1 series vs integral representation", worst, 1e-9)

    worst = 0.0
    for _ in range(100):
        al, be, ga, nu = rng.uniform(0.1, 5.0, size=4)
        worst = max(
            worst,
            abs(sf.integral_I(al, be, ga, nu, 1.0) - sf.integral_I_gauss_form(al, be, ga, nu)),
        )
    _report(13, "integral family vs Gauss closed form (z = 1)", worst, 1e-9)

    worst = 0.0
    for _ in range(100):
        al, be, ga, nu = rng.uniform(0.1, 5.0, size=4)
        z_cap = nu / math.sqrt(nu * nu + 2 * nu)
        z = rng.uniform(0.05, 0.95) * min(z_cap, 1.0)
        worst = max(
            worst,
            abs(sf.integral_I(al, be, ga, nu, z) - sf.integral_I_appell_form(al, be, ga, nu, z)),
        )
    _report(13, "integral family vs Appell closed form (z in D_nu)", worst, 1e-9)


def test_criterion_14_absorption_identities():
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(60):
        sigma = float(rng.uniform(0.05, 4.0))
        x = float(rng.uniform(0.0, 1.0))
        rho = 1.0 - math.exp(-sigma)
        worst = max(
            worst, abs(du.bs_absorption(x, sigma) - du.geometric_pgf_absorption(x, rho))
        )
    _report(14, "uniform-measure absorption vs geometric pgf", worst, 1e-13)

    worst = 0.0
    for _ in range(60):
        sigma = float(rng.uniform(0.05, 4.0))
        m0 = float(rng.uniform(0.3, 4.0))
        x = float(rng.uniform(0.0, 1.0))
        worst = max(
            worst,
            abs(du.kimura_fixation(x, sigma, m0) - du.poisson_duality_fixation(x, sigma, m0)),
        )
    _report(14, "Kimura fixation vs conditioned-Poisson duality", worst, 1e-12)

    mp = MoranParams(5, 0.5)
    target = du.moran_fixation(2, 5, 0.5)
    fixed = 0
    n_rep = 10**5
    rng_paths = sim._BlockRng(202614)
    cache: dict = {}
    for _rep in range(n_rep):
        state = 2
        while 0 < state < 5:
            entry = cache.get(state)
            if entry is None:
                entry = sim.moran_X_rates(mp, state)
                cache[state] = entry
            targets, cum, total = entry
            _, u = rng_paths.draw()
            state = int(targets[np.searchsorted(cum, u * total, side="right")])
        fixed += state == 5
    se = math.sqrt(target * (1 - target) / n_rep)
    _report(
        14, "Moran fixation formula vs simulation (|z|)",
        abs(fixed / n_rep - target) / se, 3.0,
    )


def test_criterion_15_negative_controls():
    failures_ok = True
    worst_margin = math.inf
    for name, measure in (
        ("kingman", LambdaMeasure.kingman(2.0)),
        ("star", LambdaMeasure.star(1.0)),
        ("beta(2,1)", LambdaMeasure.beta(2, 1)),
        ("beta(1,2)", LambdaMeasure.beta(1, 2)),
        ("beta(3,1)", LambdaMeasure.beta31()),
    ):
        for rho in np.linspace(0.01, 0.99, 99):
            rep = gf.check_geometric(measure, float(rho), n_max=3)
            if rep.passed:
                failures_ok = False
            if measure.m0 == 0 and measure.m1 == 0:
                worst_margin = min(worst_margin, float(np.max(rep.cg3a_residuals)))
    print(
        f"[criterion 15] negative controls fail everywhere: {failures_ok}; "
        f"smallest beta-family margin {worst_margin:.3e}"
    )
    assert failures_ok
    assert worst_margin > 1e-6
