from __future__ import annotations

import json
import math

import numpy as np
import pytest
from conftest import PROBLEMS, kilbas_saigo_oracle, ml_integral_oracle

from fracdirac import solver, specfun, timefrac
from fracdirac.clifford import Lattice
from fracdirac.errors import ConvergenceError, ValidationError

CFG = solver.KernelSeriesConfig(n_time=2048)


def _clock(t1=1.0):
    return timefrac.identity_clock(0.0, t1)


def _mode(betas, coeffs, data, xi=(1.0,), lam=1.0, nu=2.0, **kw):
    return solver.CauchyProblem(tuple(betas), lam, tuple(coeffs), kw.pop("clock", _clock()),
                                tuple(data), xi=xi, nu=nu, **kw)


def _wave(c=2.0, nodes=64, w1=None, nu=6.0):
    lat = Lattice.cube(1, nodes)
    (x,) = lat.coordinates()
    w1 = np.sin(x) if w1 is None else w1
    return solver.CauchyProblem((2.0,), 1.0, (solver.Coefficient.constant(c * c),), _clock(),
                                (np.zeros_like(x), w1), space_mode="spectral-lattice",
                                lattice=lat, nu=nu), x


# {{{ problem description and index sets


def test_index_set_examples():
    assert solver.index_sets((1.8, 0.9), 0) == 2
    assert solver.index_sets((1.8, 0.9), 1) == 1
    assert solver.index_sets((0.9,), 0) == 1
    with pytest.raises(ValidationError):
        solver.index_sets((1.8, 0.9), 2)


def test_problem_validation():
    with pytest.raises(ValidationError, match="strictly decreasing"):
        _mode((0.9, 1.8), (1.0, 1.0), (1.0, 0.0))
    with pytest.raises(ValidationError, match="initial data"):
        _mode((1.5,), (1.0,), (1.0,))
    with pytest.raises(ValidationError, match="coefficients"):
        _mode((1.5,), (1.0, 1.0), (1.0, 0.0))
    with pytest.raises(ValidationError, match="lambda"):
        _mode((0.5,), (1.0,), (1.0,), lam=1.5)


def test_symbol_and_frac_laplacian():
    assert solver.SpectralSymbol(2.0, 0.75).multiplier == pytest.approx(2.0**1.5)
    assert solver.SpectralSymbol(0.0, 0.5).multiplier == 0.0
    lat = Lattice.cube(1, 64)
    (x,) = lat.coordinates()
    assert np.max(np.abs(solver.frac_laplacian(np.sin(x), 1.0, lat) - np.sin(x))) < 1e-10
    wave = np.exp(2j * x)
    assert np.max(np.abs(solver.frac_laplacian(wave, 0.5, lat) - 2 * wave)) < 1e-10


def test_frac_laplacian_composition(rng):
    lat = Lattice.cube(2, 32)
    spec = np.zeros(lat.shape, dtype=complex)
    spec[:5, :5] = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    f = np.fft.ifftn(spec)
    for lam in (0.3, 0.75, 1.0):
        half = solver.frac_laplacian(solver.frac_laplacian(f, lam / 2, lat), lam / 2, lat)
        assert np.max(np.abs(half - solver.frac_laplacian(f, lam, lat))) < 1e-10

# }}}


# {{{ convergence check


def test_convergence_check_examples():
    for nu, ok in ((0.5, False), (2.0, True)):
        p = _mode((1.0,), (1.0,), (1.0,), nu=nu)
        rep = solver.convergence_check(p)
        # I^1 e^{nu t} / e^{nu t} = (1 - e^{-nu t}) / nu
        assert rep["C_estimate"] == pytest.approx((1 - math.exp(-nu)) / nu, rel=1e-4)
        assert rep["pass"] is ok or nu == 0.5 and rep["C_estimate"] > 0.78
    zero = _mode((1.0,), (0.0,), (1.0,))
    assert solver.convergence_check(zero) == {**solver.convergence_check(zero),
                                              "C_estimate": 0.0, "pass": True}
    huge = _mode((1.0,), (1e6,), (1.0,), nu=1.0)
    rep = solver.convergence_check(huge)
    assert not rep["pass"] and rep["C_estimate"] > 1
    with pytest.raises(ConvergenceError) as info:
        solver.solve_scalar(huge, CFG)
    assert info.value.report["C_estimate"] > 1

# }}}


# {{{ kernels


def test_zero_symbol_kernel_vanishes():
    p = _mode((0.7,), (1.0,), (1.0,))
    k = solver.kernel_K(0, solver.SpectralSymbol(0.0), p, cfg=CFG)
    assert np.all(k.values == 0)


def test_kernel_reproduces_mittag_leffler():
    p = _mode((0.7,), (1.0,), (1.0,))
    k = solver.kernel_K(0, solver.SpectralSymbol(1.0), p, cfg=CFG)
    t = k.grid.nodes
    exact = specfun.ml_two_param(0.7, 1.0, -t**0.7).value
    assert np.max(np.abs(1 + k.values - exact)) < 1e-6


def _ex1(alpha0, s, t):
    """t E^{alpha0}_{1, 2 alpha0, alpha0 + 1}(-s^2 t^{2 alpha0}) via specfun."""
    params = specfun.KilbasSaigoParams(1.0, 2 * alpha0, alpha0 + 1, alpha0)
    return t * specfun.kilbas_saigo(params, -s * s * t ** (2 * alpha0)).value.real


def test_kilbas_saigo_kernel():
    a0 = 1.5
    p = _mode((a0,), (solver.Coefficient.power(1.0, a0),), (0.0, 1.0))
    k = solver.kernel_K(1, solver.SpectralSymbol(1.0), p, cfg=CFG)
    t = k.grid.nodes
    w = _ex1(a0, 1.0, t)
    clock = _clock()
    ref = -timefrac.frac_integral(a0, clock, timefrac.TimeSeries(k.grid, t**a0 * w)).values
    assert np.max(np.abs(k.values - ref)) < 1e-5
    assert np.max(np.abs(t + k.values - w)) < 1e-4


def test_kilbas_saigo_helper_matches_oracle():
    t = np.array([0.25, 0.5, 1.0])
    ref = [t_ * kilbas_saigo_oracle(1.0, 3.0, 2.5, 1.5, -t_**3).real for t_ in t]
    assert np.max(np.abs(_ex1(1.5, 1.0, t) - ref)) < 1e-12


def test_source_response_heat_sign():
    p = _mode((1.0,), (1.0,), (0.0,))
    grid = timefrac.TimeGrid.uniform(0.0, 1.0, 2048)
    t = grid.nodes
    h = timefrac.TimeSeries(grid, np.ones_like(t))
    total = solver.source_series_G(h, p, solver.SpectralSymbol(1.0), CFG, total=True)
    # u' + u = 1, u(0) = 0
    assert np.max(np.abs(total.values - (1 - np.exp(-t)))) < 1e-6
    g = solver.source_series_G(h, p, solver.SpectralSymbol(1.0), CFG)
    assert np.max(np.abs(g.values - (1 - np.exp(-t) - t))) < 1e-6
    zero = solver.source_series_G(timefrac.TimeSeries(grid, np.zeros_like(t)), p,
                                  solver.SpectralSymbol(1.0), CFG, total=True)
    assert np.all(zero.values == 0)


def test_source_response_wave():
    p = _mode((2.0,), (1.0,), (0.0, 0.0), nu=4.0)
    grid = timefrac.TimeGrid.uniform(0.0, 1.0, 2048)
    t = grid.nodes
    total = solver.source_series_G(timefrac.TimeSeries(grid, np.ones_like(t)), p,
                                   solver.SpectralSymbol(1.0), CFG, total=True)
    assert np.max(np.abs(total.values - (1 - np.cos(t)))) < 1e-5


def test_single_mode_source_through_solve():
    p = _mode((1.0,), (1.0,), (0.5,), source=lambda t: np.cos(2 * t))
    res = solver.solve_scalar(p, CFG)
    t = res.grid.nodes
    # u' + u = cos 2t, u(0) = 1/2
    exact = 0.5 * np.exp(-t) + (np.cos(2 * t) + 2 * np.sin(2 * t) - np.exp(-t)) / 5
    assert np.max(np.abs(res.values - exact)) < 1e-6

# }}}


# {{{ scalar solves


def test_heat_mode_alpha_one():
    # the trapezoid error is O((mu h)^2), so 1e-8 at N = 2048 needs |xi| near 1
    p = _mode((1.0,), (1.0,), (1.0,), xi=(1.0,))
    res = solver.solve_scalar(p, CFG)
    t = res.grid.nodes
    assert np.max(np.abs(res.values - np.exp(-t))) < 1e-8
    p = _mode((1.0,), (1.0,), (1.0,), xi=(1.5,))
    res = solver.solve_scalar(p, CFG)
    assert np.max(np.abs(res.values - np.exp(-2.25 * t))) < 1e-7


def test_heat_mode_alpha_half():
    p = _mode((0.5,), (1.0,), (1.0,), xi=(1.0,))
    res = solver.solve_scalar(p, CFG)
    t = res.grid.nodes
    exact = specfun.ml_two_param(0.5, 1.0, -np.sqrt(t)).value
    assert np.max(np.abs(res.values - exact)) < 1e-5


def test_wave_closed_form():
    c = 2.0
    p, x = _wave(c)
    res = solver.solve_scalar(p, CFG)
    t = res.grid.nodes[:, None]
    exact = -(np.cos(x + c * t) - np.cos(x - c * t)) / (2 * c)
    assert np.max(np.abs(res.values - exact)) < 1e-4


def test_variable_coefficient_closed_form():
    a0 = 1.5
    p = _mode((a0,), (solver.Coefficient.power(1.0, a0),), (0.0, 1.0))
    res = solver.solve_scalar(p, CFG)
    t = res.grid.nodes
    assert np.max(np.abs(res.values.real - _ex1(a0, 1.0, t))) < 1e-4


def test_zero_data_gives_zero_field():
    p, x = _wave(w1=np.zeros(64))
    res = solver.solve_scalar(p, CFG)
    assert np.all(res.values == 0)
    assert np.all(solver.solve_scalar_constant(p, CFG).values == 0)


@pytest.mark.parametrize("betas,coeffs,data", [
    ((0.7,), (1.0,), (1.0,)),
    ((1.6,), (2.0,), (1.0, -0.5)),
    ((1.8, 0.9), (0.3, 1.0), (1.0, 0.5)),
    ((1.5, 0.8, 0.3), (0.2, 0.1, 1.0), (0.5, 1.0)),
])
def test_constant_cross_validation(betas, coeffs, data):
    p = _mode(betas, coeffs, data, xi=(1.2,), lam=0.8, nu=4.0)
    a = solver.solve_scalar(p, CFG).values
    b = solver.solve_scalar_constant(p, CFG).values
    assert np.max(np.abs(a - b)) < 1e-5


def test_constant_cross_validation_lattice_with_source():
    lat = Lattice.cube(1, 16)
    (x,) = lat.coordinates()
    p = solver.CauchyProblem(
        (1.8, 0.9), 0.75, (0.3, 1.0), _clock(), (np.sin(x), np.cos(2 * x)),
        space_mode="spectral-lattice", lattice=lat, nu=4.0,
        source=lambda coords, t: np.cos(coords[0])[None, :] * np.exp(-t)[:, None])
    a = solver.solve_scalar(p, CFG).values
    b = solver.solve_scalar_constant(p, CFG).values
    assert np.max(np.abs(a - b)) < 1e-5


def test_branch_switch_residual():
    # beta0 = 1.8 (n0 = 2) and beta1 = 0.9 (n1 = 1): H_1 uses the full kernel
    p = _mode((1.8, 0.9), (solver.Coefficient.polynomial([0.3, 0.2]),
                           solver.Coefficient.polynomial([1.0, 0.5])), (1.0, 0.5), xi=(1.2,),
              lam=0.75, nu=3.0)
    assert p.n0 == 2 and p.n1 == 1
    res = solver.solve_scalar(p, CFG)
    r = solver.field_residual(p, res)
    assert r["relative"] < 1e-2
    assert r["modes"][0]["relative"] < 1e-2


def test_telegraph_constant_residual():
    a, c, xi = 0.5, 1.0, 1.5
    p = _mode((1.6, 0.7), (a, c * c), (1.0, 0.0), xi=(xi,), nu=3.0)
    res = solver.solve_scalar_constant(p, CFG)
    amp = timefrac.TimeSeries(res.grid, res.values, exponents=(0.9, 1.6))
    r = solver.mode_residual(p, amp, xi * xi, [1.0, 0.0])
    assert r["relative"] < 1e-3


def test_radial_gaussian_heat():
    # heat equation in R^2 from exp(-|x|^2 / 2): the Gaussian spreads in closed form
    radii = np.array([0.0, 0.5, 1.0, 2.0])
    p = solver.CauchyProblem((1.0,), 1.0, (1.0,), _clock(),
                             (lambda r: np.exp(-r * r / 2),), space_mode="radial-hankel",
                             dim=2, radii=radii, nu=2.0)
    errs = []
    for n_time in (256, 512):
        res = solver.solve_scalar(p, solver.KernelSeriesConfig(n_time=n_time))
        t = res.grid.nodes[:, None]
        s = 1 + 2 * t
        exact = np.exp(-radii[None, :] ** 2 / (2 * s)) / s
        errs.append(np.max(np.abs(res.values - exact)))
    # second order in time
    assert errs[0] / errs[1] > 3.5
    assert errs[1] < 1e-6


def test_hankel_examples():
    x = np.linspace(0.0, 3.0, 7)
    got = solver.hankel_inverse_fourier(lambda r: np.exp(-r * r / 2), 1, x)
    assert np.max(np.abs(got - np.exp(-x * x / 2) / np.sqrt(2 * np.pi))) < 1e-6
    got = solver.hankel_inverse_fourier(lambda r: np.exp(-r * r / 2), 3, x)
    assert np.max(np.abs(got - np.exp(-x * x / 2) / (2 * np.pi) ** 1.5)) < 1e-6
    with pytest.raises(ConvergenceError):
        solver.hankel_inverse_fourier(lambda r: np.ones_like(r), 2, [1.0], r_max=50.0)

# }}}


# {{{ stiff initial layers


@pytest.mark.parametrize("xi,stiff", [(1.0, 0), (4.0, 1), (8.0, 1), (16.0, 1)])
def test_stiff_modes_are_accurate_away_from_the_layer(xi, stiff):
    # xi^2 u^0.6 over the first few cells decides whether corrections are trusted
    p = _mode((0.6,), (1.0,), (1.0,), xi=(xi,))
    res = solver.solve_scalar(p, CFG)
    assert res.report["stiff_modes"] == stiff
    t = res.grid.nodes
    for k, tol in ((20, 1e-3), (2048, 1e-6)):
        assert abs(res.values[k].real - ml_integral_oracle(0.6, xi * xi * t[k] ** 0.6)) < tol


def test_stiff_mode_first_node_error_is_large():
    # an initial layer thinner than one cell is not resolved on a uniform grid
    p = _mode((0.6,), (1.0,), (1.0,), xi=(16.0,))
    res = solver.solve_scalar(p, CFG)
    t1 = res.grid.nodes[1]
    assert abs(res.values[1].real - ml_integral_oracle(0.6, 256 * t1**0.6)) > 1e-2

# }}}


# {{{ Dirac assembly


def _dirac_problem(theta=4.0, nodes=64):
    lat = Lattice.cube(1, nodes)
    (x,) = lat.coordinates()
    return solver.CauchyProblem((2.0,), 1.0, (solver.Coefficient.constant(theta),), _clock(),
                                (np.zeros_like(x), np.sin(x)), space_mode="spectral-lattice",
                                lattice=lat, nu=6.0)


def test_dirac_f_plus_is_scalar_solution():
    p = _dirac_problem()
    d = solver.solve_dirac(p, CFG)
    w = solver.solve_scalar(p, CFG)
    assert np.array_equal(d.witt["f_plus"].real, w.values)


def test_dirac_residual_wave():
    p = _dirac_problem()
    d = solver.solve_dirac(p, CFG)
    lat = p.lattice
    xi = np.stack([np.broadcast_to(k, lat.shape).reshape(-1) for k in lat.wavenumbers()])
    xi = solver._zero_nyquist(lat, xi)
    comps_hat = {m: np.fft.fft(c, axis=1) for m, c in d.components.items()}
    out, flagged = solver.apply_dirac_operator(p, d.grid, comps_hat, xi, exponents=d.exponents)
    scale = max(np.max(np.abs(c)) for c in comps_hat.values())
    worst = max(np.max(np.abs(c[flagged:])) for c in out.values())
    assert worst / scale < 1e-2


def test_dirac_zero_data():
    p = _dirac_problem()
    p = solver.CauchyProblem(p.betas, p.lam, p.coeffs, p.clock,
                             (np.zeros(64), np.zeros(64)), space_mode="spectral-lattice",
                             lattice=p.lattice, nu=6.0)
    d = solver.solve_dirac(p, CFG)
    assert all(np.all(c == 0) for c in d.components.values())


def test_dirac_rejects_source():
    p = _mode((1.0,), (1.0,), (1.0,), source=lambda t: np.ones_like(t))
    with pytest.raises(ValidationError):
        solver.solve_dirac(p, CFG)


def _random_factorization(p, lat, rng, trials):
    grid = timefrac.TimeGrid.uniform(0.0, 1.0, 2048)
    t = grid.nodes
    xi = solver._zero_nyquist(
        lat, np.stack([np.broadcast_to(w, lat.shape).reshape(-1) for w in lat.wavenumbers()]))
    mu = np.sqrt(np.sum(xi**2, 0)) ** (2 * p.lam)
    band = np.all(np.abs(xi) <= 3, axis=0)
    worst = 0.0
    for _ in range(trials):
        coef = rng.normal(size=(4, xi.shape[1])) + 1j * rng.normal(size=(4, xi.shape[1]))
        coef[:, ~band] = 0
        w_hat = (coef[0] + np.outer(t, coef[1]) + np.outer(np.sin(2 * t), coef[2])
                 + np.outer(np.exp(-t), coef[3]))
        once, _ = solver.apply_dirac_operator(p, grid, {0: w_hat}, xi)
        twice, fl = solver.apply_dirac_operator(p, grid, once, xi)
        ref = solver.scalar_operator(p, grid, w_hat, mu)
        fl = max(fl, ref.flagged)
        diff = max(np.max(np.abs((c - (ref.values if m == 0 else 0))[fl:]))
                   for m, c in twice.items())
        worst = max(worst, diff / np.max(np.abs(ref.values[fl:])))
    return worst


def test_factorization_variable_lower_coefficient(rng):
    lat = Lattice.cube(1, 64)
    p = solver.CauchyProblem((1.5, 0.5), 0.75, (solver.Coefficient.polynomial([1.0, 1.0]), 2.0),
                             _clock(), (np.zeros(64), np.zeros(64)),
                             space_mode="spectral-lattice", lattice=lat, nu=4.0)
    assert _random_factorization(p, lat, rng, 4) < 1e-3


def test_factorization_fails_for_time_dependent_top_coefficient(rng):
    # sqrt(Theta_m(t)) does not commute with the time derivatives
    lat = Lattice.cube(1, 64)
    p = solver.CauchyProblem((2.0,), 1.0, (solver.Coefficient.polynomial([1.0, 2.0]),),
                             _clock(), (np.zeros(64), np.zeros(64)),
                             space_mode="spectral-lattice", lattice=lat, nu=4.0)
    assert _random_factorization(p, lat, rng, 2) > 1e-2

# }}}


# {{{ shipped problems


def _forward_problems():
    out = []
    for path in sorted(PROBLEMS.glob("*.json")):
        if "inverse" not in json.loads(path.read_text()):
            out.append(path)
    return out


@pytest.mark.parametrize("path", _forward_problems(), ids=lambda p: p.stem)
def test_shipped_forward_residual(path):
    from fracdirac.cli import load_problem

    # Dirac runs are checked through their scalar part (the f+ coefficient)
    loaded = load_problem(path)
    res = solver.solve_scalar(loaded.problem, loaded.config)
    assert solver.field_residual(loaded.problem, res)["relative"] < 1e-2

# }}}
