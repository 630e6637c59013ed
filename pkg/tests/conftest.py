from __future__ import annotations

from pathlib import Path

import mpmath as mp
import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("fracdirac", deadline=None, derandomize=True)
settings.load_profile("fracdirac")

PROBLEMS = Path(__file__).resolve().parents[1] / "src" / "fracdirac" / "problems"


def ml_oracle(alpha: float, beta: float, z: complex, dps: int = 40) -> complex:
    """Direct summation of the two-parameter series at extended precision."""
    with mp.workdps(dps):
        total = mp.mpf(0)
        term_z = mp.mpc(1)
        zz = mp.mpc(z)
        for k in range(400):
            term = term_z * mp.rgamma(alpha * k + beta)
            total += term
            if k > 10 and abs(term) < mp.mpf(10) ** (-dps + 5):
                break
            term_z *= zz
        return complex(total)


def ml_integral_oracle(alpha: float, x: float) -> float:
    r""":math:`E_\alpha(-x)` for :math:`0 < \alpha < 1`, :math:`x \ge 0` from its
    completely monotone integral representation (valid for large ``x``)."""
    a = mp.mpf(alpha)

    def integrand(s):
        return (mp.exp(-mp.mpf(x) ** (1 / a) * s) * s ** (a - 1)
                / (s ** (2 * a) + 2 * s**a * mp.cos(a * mp.pi) + 1))

    return float(mp.sin(a * mp.pi) / mp.pi * mp.quad(integrand, [0, 1, mp.inf]))


def multi_ml_oracle(a, b, z, shells: int = 60) -> complex:
    """Brute-force double sum over all multi-indices up to total degree *shells*."""
    with mp.workdps(40):
        total = mp.mpf(0)
        n = len(a)

        def rec(prefix):
            nonlocal total
            if len(prefix) == n:
                k = sum(prefix)
                coef = mp.factorial(k)
                for lk in prefix:
                    coef /= mp.factorial(lk)
                term = coef * mp.rgamma(b + sum(ai * lk for ai, lk in zip(a, prefix)))
                for zi, lk in zip(z, prefix):
                    term *= mp.mpc(zi) ** lk
                total += term
                return
            used = sum(prefix)
            for lk in range(shells - used + 1):
                rec(prefix + [lk])

        rec([])
        return complex(total)


def kilbas_saigo_oracle(alpha, beta, gamma, lam, z, terms: int = 200) -> complex:
    """Product-form coefficients summed at extended precision."""
    with mp.workdps(40):
        total = mp.mpf(0)
        c = mp.mpf(1)
        zz = mp.mpc(z)
        zk = mp.mpc(1)
        for k in range(terms):
            total += c * zk
            x = alpha * (k * beta + gamma) + 1
            c *= mp.gamma(x) / mp.gamma(x + lam)
            zk *= zz
        return complex(total)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
