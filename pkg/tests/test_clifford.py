from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracdirac import specfun
from fracdirac.clifford import (
    Lattice,
    Multivector,
    MultivectorField,
    blade_product,
    dirac_apply,
    dirac_apply_fd,
    generator_count,
    geometric_product,
    monogenic_residual,
    witt_pair,
)
from fracdirac.errors import ValidationError
from fracdirac.inverse import window

# {{{ algebra


def _generators(n):
    return [Multivector.generator(n, i) for i in range(generator_count(n))]


def test_product_examples():
    e1, e2 = Multivector.e(2, 1), Multivector.e(2, 2)
    assert e1 * e1 == Multivector.scalar(2, -1)
    assert e1 * e2 == -(e2 * e1)
    one = Multivector.scalar(2)
    assert (one + e1) * (one - e1) == Multivector.scalar(2, 2)
    assert geometric_product(e1, e2) == e1 * e2


def test_zero_coefficients_are_dropped():
    e1 = Multivector.e(3, 1)
    assert (e1 - e1).terms == {}
    assert Multivector(3, {0: 0, 1: 2}).terms == {1: 2}


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        Multivector.e(2, 1) * Multivector.e(3, 1)
    with pytest.raises(ValidationError):
        Multivector.e(2, 3)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_anticommutation(n):
    gens = _generators(n)
    squares = (-1,) * n + (1, -1)
    for i, gi in enumerate(gens):
        for j, gj in enumerate(gens):
            expected = Multivector.scalar(n, 2 * squares[i] if i == j else 0)
            assert gi * gj + gj * gi == expected


def _sparse_multivector(n):
    limit = 1 << generator_count(n)
    coeff = st.fractions(min_value=-5, max_value=5, max_denominator=7)
    return st.dictionaries(st.integers(0, limit - 1), coeff, max_size=6).map(
        lambda d: Multivector(n, d))


@settings(max_examples=100)
@given(st.integers(1, 4).flatmap(
    lambda n: st.tuples(_sparse_multivector(n), _sparse_multivector(n), _sparse_multivector(n))))
def test_associativity(abc):
    a, b, c = abc
    assert (a * b) * c == a * (b * c)


@settings(max_examples=50)
@given(st.integers(1, 4).flatmap(
    lambda n: st.tuples(_sparse_multivector(n), _sparse_multivector(n), _sparse_multivector(n))))
def test_distributivity(abc):
    a, b, c = abc
    assert a * (b + c) == a * b + a * c


def test_blade_product_sign_brute_force():
    # compare with sorting an explicit generator word by adjacent swaps
    n = 3
    sig = (-1,) * n + (1, -1)
    g = generator_count(n)
    for a, b in itertools.product(range(1 << g), repeat=2):
        word = [i for i in range(g) if a >> i & 1] + [i for i in range(g) if b >> i & 1]
        sign = 1
        changed = True
        while changed:
            changed = False
            for k in range(len(word) - 1):
                if word[k] > word[k + 1]:
                    word[k], word[k + 1] = word[k + 1], word[k]
                    sign = -sign
                    changed = True
                elif word[k] == word[k + 1]:
                    sign *= sig[word[k]]
                    del word[k:k + 2]
                    changed = True
                    break
        mask = sum(1 << i for i in word)
        assert blade_product(a, b, n) == (sign, mask)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_witt_identities_exact(n):
    f, fp = witt_pair(n)
    zero = Multivector(n, {})
    assert f * f == zero
    assert fp * fp == zero
    assert f * fp + fp * f == Multivector.scalar(n, 1)
    for k in range(1, n + 1):
        ek = Multivector.e(n, k)
        assert f * ek + ek * f == zero
        assert fp * ek + ek * fp == zero
    assert all(isinstance(c, Fraction) for c in f.terms.values())

# }}}


# {{{ Dirac operator


def test_dirac_examples():
    lat = Lattice.cube(1, 64)
    (x,) = lat.coordinates()
    assert monogenic_residual(MultivectorField.scalar(lat, np.full(lat.shape, 3.0))) < 1e-14
    d = dirac_apply(MultivectorField.scalar(lat, np.sin(x)))
    assert np.max(np.abs(d.component(1) - np.cos(x))) < 1e-10
    assert np.max(np.abs(d.component(0))) == 0.0

    lat2 = Lattice.cube(2, 32)
    x1, x2 = lat2.coordinates()
    f = MultivectorField.scalar(lat2, np.sin(x1) * np.sin(x2))
    dd = dirac_apply(dirac_apply(f))
    assert np.max(np.abs(dd.component(0) - 2 * np.sin(x1) * np.sin(x2))) < 1e-8


def test_dirac_needs_resolution():
    lat = Lattice.cube(1, 4)
    with pytest.raises(ValidationError):
        dirac_apply(MultivectorField.scalar(lat, np.zeros(4)))


def _tapered_linear(n_nodes=512):
    lat = Lattice.cube(2, n_nodes)
    x1, x2 = lat.coordinates()
    c = np.pi
    taper = window(x1, 0.4, 2 * c - 0.4, 1.2) * window(x2, 0.4, 2 * c - 0.4, 1.2)
    inner = (np.abs(x1 - c) < 1.2) & (np.abs(x2 - c) < 1.2)
    return lat, (x1 - c) * taper, (x2 - c) * taper, inner


def test_monogenic_examples():
    lat, y1, y2, inner = _tapered_linear()
    e1, e2 = Multivector.e(2, 1), Multivector.e(2, 2)
    radial = (MultivectorField.scalar(lat, y1).left_multiply(e1)
              + MultivectorField.scalar(lat, y2).left_multiply(e2))
    assert monogenic_residual(radial, inner) == pytest.approx(2.0, abs=1e-8)
    assert np.allclose(dirac_apply(radial).component(0)[inner], -2.0, atol=1e-8)

    swapped = (MultivectorField.scalar(lat, y1).left_multiply(e2)
               + MultivectorField.scalar(lat, y2).left_multiply(e1))
    assert monogenic_residual(swapped, inner) < 1e-8

    # with a relative minus sign the bivector parts add instead of cancelling
    rotated = (MultivectorField.scalar(lat, y1).left_multiply(e2)
               - MultivectorField.scalar(lat, y2).left_multiply(e1))
    assert np.allclose(dirac_apply(rotated).component(0b11)[inner], 2.0, atol=1e-8)


@settings(max_examples=20)
@given(st.integers(0, 3), st.integers(-3, 3), st.integers(-3, 3))
def test_dirac_squares_to_minus_laplacian(seed, k1, k2):
    lat = Lattice.cube(2, 16)
    x1, x2 = lat.coordinates()
    rng = np.random.default_rng(seed)
    mv = Multivector(2, {int(m): float(rng.normal()) for m in rng.choice(16, 3, replace=False)})
    f = MultivectorField.scalar(lat, np.cos(k1 * x1 + k2 * x2)).left_multiply(mv)
    dd = dirac_apply(dirac_apply(f))
    expected = f.scale(-(k1 * k1 + k2 * k2)).scale(-1.0)
    for m in range(16):
        assert np.max(np.abs(dd.component(m) - expected.component(m))) < 1e-10


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_bessel_kernel_dirac_identity(n, r):
    m = 41 if n == 2 else 25
    axis = np.linspace(0.5, 2.5, m)
    h = axis[1] - axis[0]
    xs = np.meshgrid(*([axis] * n), indexing="ij")
    rho = np.sqrt(sum(x * x for x in xs))
    f = rho ** (1 - n / 2) * specfun.bessel_j(n / 2 - 1, r * rho)
    got = dirac_apply_fd({0: f}, n, (h,) * n)
    radial = specfun.bessel_j(n / 2, r * rho) / rho ** (n / 2)
    worst = 0.0
    for k in range(n):
        exact = -r * xs[k] * radial
        approx = got[1 << k]
        inside = np.isfinite(approx)
        scale = np.max(np.abs(exact[inside]))
        worst = max(worst, np.max(np.abs(approx[inside] - exact[inside])) / scale)
    assert set(got) == {1 << k for k in range(n)}
    assert worst < 1e-3

# }}}
