from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from conftest import kilbas_saigo_oracle, ml_oracle, multi_ml_oracle
from hypothesis import given, settings
from hypothesis import strategies as st

from fracdirac import specfun, timefrac
from fracdirac.errors import PoleError, ValidationError

# {{{ Gamma


def test_gamma_special_values():
    assert specfun.gamma(1.0) == pytest.approx(1.0, rel=1e-15)
    assert specfun.gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert specfun.gamma(1.5) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-14)


@pytest.mark.parametrize("x", [10.3, 0.01, 3.7, 55.5, 120.25, 169.5, -0.5, -2.3, -7.9])
def test_gamma_extended_precision(x):
    ref = float(mp.gamma(x))
    assert specfun.gamma(x) == pytest.approx(ref, rel=1e-12)
    assert specfun.log_gamma(x) == pytest.approx(float(mp.log(abs(mp.gamma(x)))),
                                                 rel=1e-12, abs=1e-13)


@pytest.mark.parametrize("x", [0.0, -1.0, -4.0])
def test_gamma_poles(x):
    with pytest.raises(PoleError):
        specfun.gamma(x)
    assert specfun.rgamma(x) == 0.0


@given(st.floats(0.05, 160.0))
def test_gamma_recurrence(x):
    lhs = specfun.log_gamma(x + 1.0)
    rhs = math.log(x) + specfun.log_gamma(x)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

# }}}


# {{{ Mittag-Leffler


def test_ml_examples():
    assert specfun.ml_two_param(1.0, 1.0, -1.0).value == pytest.approx(math.exp(-1), abs=1e-15)
    assert specfun.ml_two_param(2.0, 1.0, -(math.pi / 3) ** 2).value == pytest.approx(
        0.5, abs=1e-14)
    m = specfun.ml_multivariate(specfun.MultiMLParams((1.0,), 1.0), [1.0])
    assert m.value == pytest.approx(math.e, abs=1e-14)
    m = specfun.ml_multivariate(specfun.MultiMLParams((1.0,), 2.0), [1.0])
    assert m.value == pytest.approx(math.e - 1.0, abs=1e-14)
    m = specfun.ml_multivariate(specfun.MultiMLParams((1.0, 1.0), 1.0), [0.3, 0.5])
    assert m.value == pytest.approx(math.exp(0.8), abs=1e-14)


@given(st.floats(0.1, 3.0), st.floats(0.1, 4.0))
def test_ml_at_zero(alpha, beta):
    val = specfun.ml_two_param(alpha, beta, 0.0).value
    assert val == pytest.approx(1.0 / math.gamma(beta), rel=1e-14)


@settings(max_examples=50)
@given(st.floats(0.2, 2.5), st.floats(0.2, 3.0), st.floats(0.0, 2.0), st.floats(0, 2 * math.pi))
def test_ml_reduction_matches_oracle(alpha, beta, r, theta):
    z = r * complex(math.cos(theta), math.sin(theta))
    one = specfun.ml_multivariate(specfun.MultiMLParams((alpha,), beta), [z]).value
    two = specfun.ml_two_param(alpha, beta, z).value
    assert abs(one - two) <= 1e-12 * max(1.0, abs(two))
    res = specfun.ml_two_param(alpha, beta, z)
    err = abs(res.value - ml_oracle(alpha, beta, z))
    assert err <= res.error
    if alpha >= 0.5:
        assert err <= 1e-12 * max(1.0, abs(two))


@settings(max_examples=30)
@given(st.lists(st.floats(-0.66, 0.66), min_size=1, max_size=3))
def test_multinomial_collapse(z):
    params = specfun.MultiMLParams(tuple(1.0 for _ in z), 1.0)
    val = specfun.ml_multivariate(params, z).value
    assert val == pytest.approx(math.exp(sum(z)), abs=1e-10)


def test_ml_recurrence_identity():
    # E_{a,b}(z) = 1/Gamma(b) + z E_{a,a+b}(z)
    z = np.linspace(-3.0, 2.0, 11)
    for a, b in ((0.5, 1.0), (1.3, 0.7), (2.0, 2.0)):
        lhs = specfun.ml_two_param(a, b, z)
        rhs = specfun.ml_two_param(a, a + b, z)
        gap = np.abs(lhs.value - (1 / math.gamma(b) + z * rhs.value))
        assert np.all(gap <= lhs.error + np.abs(z) * rhs.error + 1e-15)
        assert np.max(gap) < 1e-10


@pytest.mark.parametrize("a,b,z", [
    ((0.5, 1.2), 1.0, (0.4, -0.3)),
    ((0.7, 1.5, 2.0), 1.3, (-0.5, 0.2, 0.8)),
    ((1.4, 0.6), 2.0, (-1.0, -0.5)),
])
def test_multivariate_against_brute_force(a, b, z):
    res = specfun.ml_multivariate(specfun.MultiMLParams(a, b), list(z))
    ref = multi_ml_oracle(a, b, z, shells=60 if len(a) < 3 else 45)
    assert abs(res.value - ref) < 1e-10
    assert res.error >= abs(res.value - ref) - 1e-15


def test_error_estimate_bounds_true_error():
    for a, b, z in ((0.5, 1.0, -1.5), (0.9, 1.1, 1.8), (1.7, 2.0, -2.0), (0.3, 0.5, 0.9)):
        res = specfun.ml_two_param(a, b, z)
        assert res.error >= abs(res.value - ml_oracle(a, b, z))


def test_ml_validation():
    with pytest.raises(ValidationError):
        specfun.MultiMLParams((0.0,), 1.0)
    with pytest.raises(ValidationError):
        specfun.MultiMLParams((1.0,), -1.0)
    with pytest.raises(ValidationError):
        specfun.ml_multivariate(specfun.MultiMLParams((1.0, 1.0), 1.0), [1.0])


@pytest.mark.parametrize("alpha,mu", [(0.5, 1.0), (0.5, 4.0), (0.9, 1.0), (0.9, 4.0)])
def test_ml_solves_relaxation_equation(alpha, mu):
    clock = timefrac.identity_clock(0.0, 1.0)
    grid = timefrac.TimeGrid.uniform(0.0, 1.0, 512)
    t = grid.nodes
    u = specfun.ml_two_param(alpha, 1.0, -mu * t**alpha).value.real
    exps = tuple(alpha * k for k in range(1, 6))
    d = timefrac.caputo_derivative(alpha, clock, timefrac.TimeSeries(grid, u, exponents=exps),
                                   [1.0])
    res = np.abs(d.values + mu * u)[d.valid]
    assert np.max(res) / np.max(np.abs(mu * u)) < 1e-2

# }}}


# {{{ Kilbas-Saigo


def test_kilbas_saigo_zero_and_exp():
    p = specfun.KilbasSaigoParams(1.0, 1.0, 0.0, 1.0)
    assert specfun.kilbas_saigo(p, 0.0).value == 1.0
    z = np.linspace(-2, 2, 9)
    assert np.max(np.abs(specfun.kilbas_saigo(p, z).value - np.exp(z))) < 1e-13


@pytest.mark.parametrize("params,z", [
    ((1.5, 3.0, 1.5, 1.5), -0.25),
    ((1.0, 3.0, 2.5, 1.5), -1.0),
    ((0.7, 1.2, 0.3, 0.9), 1.5),
    ((1.0, 2.0, 1.0, 1.0), -3.0),
])
def test_kilbas_saigo_against_oracle(params, z):
    res = specfun.kilbas_saigo(specfun.KilbasSaigoParams(*params), z)
    ref = kilbas_saigo_oracle(*params, z)
    assert abs(res.value - ref) < 1e-10
    assert res.error >= abs(res.value - ref) - 1e-16


def test_kilbas_saigo_coefficient_ratio():
    p = specfun.KilbasSaigoParams(1.5, 3.0, 1.5, 1.5)
    logc, sign = specfun.kilbas_saigo_log_coefficients(p, 51)
    for k in range(51):
        x = p.alpha * (k * p.beta + p.gamma) + 1
        ratio = float(mp.gamma(x) / mp.gamma(x + p.lam))
        got = sign[k + 1] * sign[k] * math.exp(logc[k + 1] - logc[k])
        assert got == pytest.approx(ratio, rel=1e-12)


def test_kilbas_saigo_pole():
    with pytest.raises(PoleError):
        specfun.kilbas_saigo(specfun.KilbasSaigoParams(1.0, 1.0, -1.0, 0.5), 0.5)

# }}}


# {{{ Bessel


def test_bessel_examples():
    assert specfun.bessel_j(0.5, math.pi) == pytest.approx(0.0, abs=1e-15)
    assert specfun.bessel_j(0.0, 0.0) == 1.0
    assert specfun.bessel_j(1.0, 1.0) == pytest.approx(0.4400505857449335, abs=1e-15)


def test_bessel_box_against_mpmath():
    nus = np.linspace(-0.5, 20.0, 9)
    xs = np.linspace(0.0, 100.0, 41)
    worst = 0.0
    for nu in nus:
        # J_nu is unbounded at the origin for negative orders
        x = xs[1:] if nu < 0 else xs
        got = specfun.bessel_j(nu, x)
        ref = np.array([float(mp.besselj(nu, v)) for v in x])
        assert np.all(np.isfinite(got))
        worst = max(worst, float(np.max(np.abs(got - ref))))
    assert worst < 1e-10


def test_bessel_negative_order_singular_at_origin():
    assert specfun.bessel_j(-0.5, 0.0) == math.inf


def test_bessel_validation():
    with pytest.raises(ValidationError):
        specfun.bessel_j(-1.0, 1.0)
    with pytest.raises(ValidationError):
        specfun.bessel_j(0.0, -1.0)

# }}}
