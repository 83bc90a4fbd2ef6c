"""Measures: merger rates, critical selection strength, tail coefficients."""

import json
import math

import numpy as np
import pytest

from blockstat.errors import DomainError, PreconditionViolated
from blockstat.measures import (
    Atoms,
    LambdaMeasure,
    ModelParams,
    MoranParams,
    cnk,
    cnk_row,
    is_positive_recurrent,
    lambda_rate,
    sigma_lambda,
    tail_bracket,
)


def test_lambda_rate_endpoint_atoms():
    king = LambdaMeasure.kingman(1.0)
    assert lambda_rate(king, 5, 2) == 1.0
    assert lambda_rate(king, 5, 3) == 0.0
    star = LambdaMeasure.star(1.0)
    assert lambda_rate(star, 5, 5) == 1.0
    assert lambda_rate(star, 5, 4) == 0.0


def test_lambda_rate_uniform_beta():
    uni = LambdaMeasure.uniform(1.0)
    assert lambda_rate(uni, 4, 3) == pytest.approx(1 / 6, rel=1e-14)
    # beta closed form vs quadrature through a custom density
    a, b, mass = 1.7, 2.4, 0.8
    beta = LambdaMeasure.beta(a, b, mass)
    from blockstat.measures import CustomDensity

    custom = LambdaMeasure(
        interior=CustomDensity(lambda x: beta.interior.density(x))
    )
    for k, j in [(2, 2), (5, 3), (20, 11), (50, 50)]:
        assert lambda_rate(beta, k, j) == pytest.approx(
            lambda_rate(custom, k, j), abs=1e-12
        )


def test_lambda_rate_domain():
    with pytest.raises(DomainError):
        lambda_rate(LambdaMeasure.uniform(), 3, 1)


def test_sigma_lambda_cases():
    assert sigma_lambda(LambdaMeasure.crow_kimura()) == 0.0
    assert sigma_lambda(LambdaMeasure.uniform()) == math.inf
    assert sigma_lambda(LambdaMeasure.kingman(2.0)) == math.inf
    assert sigma_lambda(LambdaMeasure.star(1.0)) == math.inf
    atom = LambdaMeasure.from_atoms([0.5], [1.0])
    assert sigma_lambda(atom) == pytest.approx(4 * math.log(2), rel=1e-13)
    assert sigma_lambda(LambdaMeasure.beta31()) == pytest.approx(3.0, abs=1e-9)
    # beta with a <= 1 diverges at 0
    assert sigma_lambda(LambdaMeasure.beta(0.8, 1.0)) == math.inf


def test_positive_recurrence():
    uni = LambdaMeasure.uniform()
    rep = is_positive_recurrent(uni, ModelParams(5.0, 0.1, 0.0))
    assert rep and rep.clause == "theta0 > 0"
    zero = LambdaMeasure.crow_kimura()
    assert not is_positive_recurrent(zero, ModelParams(2.0, 0.0, 1.0))
    assert is_positive_recurrent(zero, ModelParams(2.0, 0.0, 2.5))
    assert is_positive_recurrent(uni, ModelParams(7.0, 0.0, 0.0))  # sigma_L = inf
    b31 = LambdaMeasure.beta31()
    assert is_positive_recurrent(b31, ModelParams(2.0, 0.0, 0.0))  # sigma_L = 3
    assert not is_positive_recurrent(b31, ModelParams(4.0, 0.0, 0.0))
    with pytest.raises(PreconditionViolated):
        is_positive_recurrent(uni, ModelParams(0.0, 1.0, 1.0))


def test_cnk_closed_forms():
    uni = LambdaMeasure.uniform()
    assert cnk(uni, 2, 5) == pytest.approx(1 / 3, rel=1e-14)
    b31 = LambdaMeasure.beta31()
    assert cnk(b31, 1, 4) == pytest.approx(3 / 5, rel=1e-14)
    assert cnk(LambdaMeasure.crow_kimura(), 3, 9) == 0.0


def test_cnk_uniform_matches_quadrature_path():
    # the closed value 1/(k-n) against the generic beta quadrature path
    near_uniform = LambdaMeasure.beta(1.0 + 1e-14, 1.0)
    for n, k in [(1, 2), (2, 5), (5, 17), (20, 60)]:
        assert cnk(near_uniform, n, k) == pytest.approx(1 / (k - n), abs=1e-10)


def test_cnk_row_matches_scalar():
    lam = LambdaMeasure.from_atoms(
        [1e-8, 1e-3, 0.2, 0.49, 0.51, 0.9], [0.05, 0.1, 0.3, 0.2, 0.2, 0.15]
    )
    for n in (1, 2, 6):
        row = cnk_row(lam, n, 25)
        direct = np.array([cnk(lam, n, k) for k in range(n + 1, 26)])
        assert np.max(np.abs(row - direct)) < 1e-13


def test_cnk_monotone_and_nonnegative():
    for lam in (LambdaMeasure.uniform(), LambdaMeasure.beta(2.0, 3.0)):
        for n in (1, 4):
            row = cnk_row(lam, n, 30)
            assert np.all(row >= 0)
            assert np.all(np.diff(row) <= 1e-15)


def test_bracket_integrand_bounded_near_zero():
    # x^-2 * bracket stays finite as x -> 0 (the bracket is O(x^2) there)
    for n, k in [(1, 2), (3, 4), (5, 9)]:
        for x in (1e-4, 1e-6):
            val = tail_bracket(np.array([x]), n, k)[0] / x**2
            limit = math.comb(k, n - 1) if k == n + 1 else 0.0
            # k = n+1 tends to binom(n+1, 2); larger k tends to 0
            if k == n + 1:
                assert val == pytest.approx(math.comb(n + 1, 2), rel=5e-4)
            assert np.isfinite(val)


def test_measure_json_round_trip():
    for lam in (
        LambdaMeasure.kingman(2.0),
        LambdaMeasure.star(0.7),
        LambdaMeasure.uniform(1.3),
        LambdaMeasure.beta(2.5, 0.7, 1.1),
        LambdaMeasure.from_atoms([0.2, 0.8], [1.0, 2.0]),
    ):
        back = LambdaMeasure.from_json(lam.to_json())
        assert back == lam
    parsed = LambdaMeasure.from_dict(
        json.loads('{"m0": 0.5, "m1": 0, "interior": {"type": "uniform", "c": 2.0}}')
    )
    assert parsed.m0 == 0.5 and parsed.interior.c == 2.0


def test_atom_validation():
    with pytest.raises(DomainError):
        Atoms((0.5, 0.2), (1.0, 1.0))  # not increasing
    with pytest.raises(DomainError):
        Atoms((0.0,), (1.0,))  # on the boundary
    with pytest.raises(DomainError):
        LambdaMeasure.from_atoms(list(np.linspace(0.001, 0.999, 10_001)), [1.0] * 10_001)


def test_moran_params_validation():
    with pytest.raises(DomainError):
        MoranParams(1, 1.0)
    with pytest.raises(DomainError):
        MoranParams(5, 0.0)
    with pytest.raises(DomainError):
        ModelParams(-1.0)
    assert MoranParams(5, 1.0, 0.25, 0.5).u == 0.75
    assert ModelParams(1.0, 0.25, 0.5).theta == 0.75
