"""Invariant suites run by ``fracdirac selfcheck``.

Each suite is a list of named checks comparing a computed quantity against
an independent reference (stdlib functions, closed forms or algebraic
identities). A suite passes when every check is below its tolerance.
Suites are isolated: an exception inside one check fails that check only.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

LEVELS = {"fast": 512, "full": 2048}


def _check(name: str, residual: float, tol: float) -> dict:
    residual = float(residual)
    return {"name": name, "residual": residual, "tol": tol,
            "pass": bool(np.isfinite(residual) and residual < tol)}


# {{{ suites

def suite_specfun(n_time: int) -> list[dict]:
    from fracdirac import specfun

    x = np.linspace(0.1, 9.5, 40)
    out = [_check("gamma vs math.gamma",
                  np.max(np.abs(specfun.gamma(x) / np.array([math.gamma(v) for v in x]) - 1)),
                  1e-13)]
    z = np.linspace(-2.0, 2.0, 21)
    out.append(_check("E_{1,1}(z) = exp(z)",
                      np.max(np.abs(specfun.ml_two_param(1.0, 1.0, z).value - np.exp(z))), 1e-12))
    out.append(_check("E_{2,1}(-x^2) = cos(x)",
                      np.max(np.abs(specfun.ml_two_param(2.0, 1.0, -z**2).value - np.cos(z))),
                      1e-12))
    val = specfun.ml_multivariate(specfun.MultiMLParams((1.0, 1.0), 1.0), [0.3, 0.5]).value
    out.append(_check("E_{(1,1),1}(z1, z2) = exp(z1 + z2)", abs(val - math.exp(0.8)), 1e-12))
    ks = specfun.kilbas_saigo(specfun.KilbasSaigoParams(1.0, 1.0, 0.0, 1.0), z).value
    out.append(_check("Kilbas-Saigo telescoping to exp", np.max(np.abs(ks - np.exp(z))), 1e-12))
    xb = np.linspace(0.5, 20.0, 30)
    out.append(_check("J_{1/2}(x) = sqrt(2/(pi x)) sin(x)",
                      np.max(np.abs(specfun.bessel_j(0.5, xb)
                                    - np.sqrt(2 / (np.pi * xb)) * np.sin(xb))), 1e-12))
    return out


def suite_timefrac(n_time: int) -> list[dict]:
    from fracdirac import timefrac

    out = []
    for name, (t0, t1) in (("identity", (0.0, 1.0)), ("exp", (0.0, 1.0))):
        clock = timefrac.clock_from_name(name, t0, t1)
        grid = timefrac.TimeGrid.uniform(t0, t1, n_time)
        u = timefrac.clock_nodes(clock, grid)
        for alpha in (0.5, 1.3):
            for p in (0.0, 1.0, 2.5):
                f = timefrac.TimeSeries(grid, u**p, exponents=(p,) if p % 1 else ())
                got = timefrac.frac_integral(alpha, clock, f).values
                exact = math.gamma(p + 1) / math.gamma(p + alpha + 1) * u ** (p + alpha)
                err = np.max(np.abs(got - exact)) / np.max(np.abs(exact))
                out.append(_check(f"I^{alpha} u^{p} closed form ({name})", err, 1e-6))
            f = timefrac.sample(clock, grid, np.sin)
            d = timefrac.rl_derivative(alpha, clock, timefrac.frac_integral(alpha, clock, f))
            err = np.max(np.abs(d.values - f.values)[d.valid]) / np.max(np.abs(f.values))
            out.append(_check(f"D^{alpha} I^{alpha} sin = sin ({name})", err, 1e-3))
    return out


def suite_witt(n_time: int) -> list[dict]:
    from fracdirac.clifford import Multivector, witt_pair

    worst = 0.0
    for n in range(1, 5):
        f, fp = witt_pair(n)
        one = Multivector.scalar(n)
        worst = max(worst, (f * f).norm(), (fp * fp).norm(),
                    (f * fp + fp * f - one).norm())
        for k in range(1, n + 1):
            ek = Multivector.e(n, k)
            worst = max(worst, (ek * f + f * ek).norm(), (ek * fp + fp * ek).norm(),
                        (ek * ek + one).norm())
    return [_check("Witt relations for n <= 4", worst, 1e-15)]


def suite_dirac(n_time: int) -> list[dict]:
    from fracdirac.clifford import (
        Lattice,
        Multivector,
        MultivectorField,
        dirac_apply,
    )

    lattice = Lattice.cube(2, 32)
    x1, x2 = lattice.coordinates()
    field = MultivectorField.scalar(lattice, np.sin(x1) * np.cos(x2))
    twice = dirac_apply(dirac_apply(field))
    lap = -2.0 * np.sin(x1) * np.cos(x2)
    err = np.max(np.abs(twice.component(0) + lap))
    out = [_check("D^2 = -Laplacian on a trigonometric field", err, 1e-10)]
    g = (MultivectorField.scalar(lattice, np.sin(x1)).left_multiply(Multivector.e(2, 1))
         + MultivectorField.scalar(lattice, np.sin(x2)).left_multiply(Multivector.e(2, 2)))
    res = dirac_apply(g)
    expected = -(np.cos(x1) + np.cos(x2))
    out.append(_check("D(sin x1 e1 + sin x2 e2) scalar part",
                      np.max(np.abs(res.component(0) - expected)), 1e-10))
    return out


def suite_solver(n_time: int) -> list[dict]:
    from fracdirac import solver, specfun, timefrac
    from fracdirac.clifford import Lattice

    cfg = solver.KernelSeriesConfig(n_time=n_time)
    clock = timefrac.identity_clock(0.0, 1.0)
    out = []

    prob = solver.CauchyProblem((0.7,), 1.0, (solver.Coefficient.constant(1.0),), clock,
                                (1.0,), xi=(1.5,))
    res = solver.solve_scalar(prob, cfg)
    t = res.grid.nodes
    exact = specfun.ml_two_param(0.7, 1.0, -2.25 * t**0.7).value
    out.append(_check("single mode vs E_0.7(-mu t^0.7)", np.max(np.abs(res.values - exact)),
                      1e-4))

    c = 2.0
    lattice = Lattice.cube(1, 64)
    (x,) = lattice.coordinates()
    wave = solver.CauchyProblem((2.0,), 1.0, (solver.Coefficient.constant(c * c),),
                                timefrac.identity_clock(0.0, 1.0),
                                (np.zeros_like(x), np.sin(x)), space_mode="spectral-lattice",
                                lattice=lattice, nu=6.0)
    res = solver.solve_scalar(wave, cfg)
    tt = res.grid.nodes[:, None]
    exact = np.sin(x)[None, :] * np.sin(c * tt) / c
    out.append(_check("wave closed form", np.max(np.abs(res.values - exact)), 1e-4))

    tele = solver.CauchyProblem((1.8, 0.9), 0.75,
                                (solver.Coefficient.polynomial([0.3, 0.2]),
                                 solver.Coefficient.polynomial([1.0, 0.5])),
                                clock, (1.0, 0.5), xi=(1.2,), nu=3.0)
    res = solver.solve_scalar(tele, cfg)
    r = solver.field_residual(tele, res)
    out.append(_check("two-term mode residual", r["relative"], 1e-2))
    return out


def suite_inverse(n_time: int) -> list[dict]:
    from fracdirac import inverse, solver, timefrac
    from fracdirac.clifford import Lattice

    c = 2.0
    lattice = Lattice.cube(1, 64)
    (x,) = lattice.coordinates()
    w1 = np.sin(x) * inverse.window(x, 0.3, 2 * np.pi - 0.3, 0.6)
    prob = solver.CauchyProblem((2.0,), 1.0, (solver.Coefficient.constant(c * c),),
                                timefrac.identity_clock(0.0, 1.0), (np.zeros_like(x), w1),
                                space_mode="spectral-lattice", lattice=lattice, nu=6.0)
    obs = inverse.synthesize_observations(prob, w1, (16,),
                                          cfg=solver.KernelSeriesConfig(n_time=n_time))
    rec = inverse.recover_theta(obs)
    t = rec.theta.grid.nodes
    keep = rec.mask & (t >= 0.1)
    err = np.max(np.abs(rec.theta.values[keep] - c * c)) / (c * c)
    return [_check("recover constant c^2", err, 1e-3)]

# }}}


SUITES: dict[str, Callable[[int], list[dict]]] = {
    "specfun": suite_specfun,
    "timefrac": suite_timefrac,
    "witt": suite_witt,
    "dirac": suite_dirac,
    "solver": suite_solver,
    "inverse": suite_inverse,
}


def run(level: str = "fast") -> dict:
    """Run every suite at *level* and collect per-check residuals."""
    n_time = LEVELS[level]
    suites = {}
    for name, suite in SUITES.items():
        start = time.perf_counter()
        try:
            checks = suite(n_time)
            error = None
        except Exception as exc:  # noqa: BLE001 - isolate suites from each other
            checks, error = [], f"{type(exc).__name__}: {exc}"
        suites[name] = {
            "pass": error is None and all(c["pass"] for c in checks),
            "checks": checks, "error": error,
            "seconds": time.perf_counter() - start,
        }
    return {"level": level, "n_time": n_time, "suites": suites,
            "pass": all(s["pass"] for s in suites.values())}
