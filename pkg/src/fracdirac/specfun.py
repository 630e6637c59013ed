r"""Series evaluation of the special functions used by the solvers.

All evaluators accept scalars or numpy arrays for the argument and return
a :class:`SeriesValue` carrying an a-posteriori error estimate, except the
Gamma family and :func:`bessel_j`, which return plain floats / arrays.

Gamma products are always formed in log space; the coefficient products of
the Kilbas-Saigo series and the denominators of the multivariate
Mittag-Leffler series overflow double precision long before the series
converge otherwise.

Argument boxes on which the evaluators agree with extended-precision
direct summation to ``1e-10`` (absolute):

* :func:`ml_multivariate`: :math:`n \le 3`, :math:`a_i \in [1/2, 5/2]`,
  :math:`b \in [1/2, 3]`, :math:`\sum_i |z_i| \le 2`;
* :func:`kilbas_saigo`: :math:`\alpha, \lambda \in [1/2, 2]`,
  :math:`\beta \in [1/2, 3]`, :math:`\gamma \in [0, 2]`, real
  :math:`|z| \le 2`;
* :func:`bessel_j`: :math:`\nu \in [-1/2, 20]`, :math:`x \in [0, 100]`
  (:math:`x > 0` for :math:`\nu < 0`).

Smaller :math:`a_i` lose digits to cancellation once :math:`|z|` grows;
the returned error estimate accounts for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.special

from fracdirac.errors import ConvergenceError, PoleError, ValidationError

EPS = np.finfo(float).eps

# {{{ gamma

# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

#: location and value of the minimum of Gamma on the positive axis
GAMMA_MIN_X = 1.4616321449683623
GAMMA_MIN = 0.8856031944108887


def _check_poles(x: np.ndarray) -> None:
    bad = (x <= 0) & (x == np.round(x))
    if np.any(bad):
        raise PoleError(f"Gamma pole at non-positive integer {x[bad].flat[0]:g}")


def _lanczos_sum(z: np.ndarray) -> np.ndarray:
    # z = x - 1 with x >= 0.5
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[i] / (z + i)
    return acc


def _log_gamma_pos(x: np.ndarray) -> np.ndarray:
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(_lanczos_sum(z))


def log_gamma(x):
    r"""Logarithm of :math:`|\Gamma(x)|` for real *x* off the non-positive integers.

    Uses the Lanczos approximation on :math:`x \ge 1/2` and the reflection
    formula below that.
    """
    xa = np.asarray(x, dtype=float)
    _check_poles(xa)
    flat = np.atleast_1d(xa)
    out = np.empty_like(flat)

    pos = flat >= 0.5
    out[pos] = _log_gamma_pos(flat[pos])
    neg = ~pos
    if np.any(neg):
        xn = flat[neg]
        out[neg] = (math.log(math.pi)
                    - np.log(np.abs(np.sin(math.pi * xn)))
                    - _log_gamma_pos(1.0 - xn))

    return out.reshape(xa.shape) if xa.ndim else float(out[0])


def gamma_sign(x):
    """Sign of :math:`\\Gamma(x)` (``+1`` on the positive axis)."""
    xa = np.asarray(x, dtype=float)
    _check_poles(xa)
    sign = np.where((xa > 0) | (np.floor(xa).astype(np.int64) % 2 == 0), 1.0, -1.0)
    return sign if xa.ndim else float(sign)


_FACTORIALS = np.array([float(math.factorial(k)) for k in range(23)])


def gamma(x):
    r""":math:`\Gamma(x)` for real *x* off the non-positive integers.

    Values with :math:`x \le 20` use the Lanczos product directly, which
    keeps the relative error near machine precision; larger arguments go
    through :func:`log_gamma`.
    """
    xa = np.asarray(x, dtype=float)
    _check_poles(xa)
    flat = np.atleast_1d(xa)
    out = np.empty_like(flat)

    small = (flat >= 0.5) & (flat <= 20.0)
    z = flat[small] - 1.0
    t = z + _LANCZOS_G + 0.5
    out[small] = math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * np.exp(-t) * _lanczos_sum(z)

    large = flat > 20.0
    out[large] = np.exp(_log_gamma_pos(flat[large]))

    neg = flat < 0.5
    if np.any(neg):
        xn = flat[neg]
        out[neg] = math.pi / (np.sin(math.pi * xn) * gamma(1.0 - xn))

    # factorials below 23! are exact in double precision
    whole = (flat >= 1.0) & (flat <= 23.0) & (flat == np.round(flat))
    out[whole] = _FACTORIALS[flat[whole].astype(int) - 1]

    return out.reshape(xa.shape) if xa.ndim else float(out[0])


def rgamma(x):
    """Reciprocal Gamma function, zero at the poles."""
    xa = np.asarray(x, dtype=float)
    pole = (xa <= 0) & (xa == np.round(xa))
    safe = np.where(pole, 0.5, xa)
    out = np.where(pole, 0.0, 1.0 / gamma(safe))
    return out if xa.ndim else float(out)


def _min_reciprocal_gamma_bound(x: float) -> float:
    """Upper bound of ``1/Gamma(y)`` over all ``y >= x > 0``."""
    if x >= GAMMA_MIN_X:
        return 1.0 / gamma(x)
    return 1.0 / GAMMA_MIN

# }}}


def _shell_bound(zsum: float, k: int, x: float) -> float:
    """``zsum**k * max_{y >= x} 1/Gamma(y)`` formed in log space."""
    if zsum == 0:
        return 0.0 if k > 0 else _min_reciprocal_gamma_bound(x)
    log_rg = -log_gamma(x) if x >= GAMMA_MIN_X else -math.log(GAMMA_MIN)
    log_bound = k * math.log(zsum) + log_rg
    return math.exp(min(log_bound, 700.0))

# }}}


# {{{ result type

@dataclass(frozen=True)
class SeriesValue:
    """Partial sum of a power series with its truncation diagnostics."""

    #: value of the partial sum (complex scalar or array)
    value: complex | np.ndarray
    #: a-posteriori bound on truncation plus rounding error (max over the array)
    error: float
    #: number of terms (shells for multivariate series) summed
    terms: int


# }}}


# {{{ multivariate Mittag-Leffler

@dataclass(frozen=True)
class MultiMLParams:
    """Parameters ``a = (a_1, ..., a_n)`` and ``b`` of the multivariate function."""

    a: tuple[float, ...]
    b: float

    def __post_init__(self) -> None:
        a = tuple(float(ai) for ai in np.atleast_1d(self.a))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        if not a:
            raise ValidationError("at least one parameter a_i is required", field="a")
        if any(ai <= 0 for ai in a):
            raise ValidationError("all a_i must be positive", field="a")
        if self.b <= 0:
            raise ValidationError("b must be positive", field="b")


@lru_cache(maxsize=4096)
def _compositions(k: int, n: int) -> np.ndarray:
    """All ``(l_1, ..., l_n) >= 0`` with ``sum l_i = k``, one per row."""
    if n == 1:
        return np.array([[k]], dtype=np.int64)
    rows = []
    for first in range(k, -1, -1):
        rest = _compositions(k - first, n - 1)
        rows.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.vstack(rows)


def _log_factorial(n: np.ndarray) -> np.ndarray:
    return scipy.special.gammaln(np.asarray(n, dtype=float) + 1.0)


def ml_multivariate(
    params: MultiMLParams,
    z: Sequence,
    *,
    abs_tol: float = 1.0e-16,
    max_terms: int = 10_000,
) -> SeriesValue:
    r"""Multivariate Mittag-Leffler function :math:`E_{(a_1,\ldots,a_n),b}(z_1,\ldots,z_n)`.

    The double sum is ordered by total degree :math:`k = l_1 + \cdots + l_n`
    (one *shell* per degree). Summation stops once the shell majorant

    .. math::

        \frac{(|z_1| + \cdots + |z_n|)^k}{\min_{y \ge b + k \min a_i} \Gamma(y)}

    has been below *abs_tol* for three consecutive shells. Each ``z_i`` may
    be an array; all are broadcast together.

    The power series cancels badly for small :math:`a_i` and large
    :math:`|z_i|` (terms grow like :math:`\exp(|z|^{1/a})`); the rounding
    part of the returned error estimate tracks this loss.
    """
    if len(z) != len(params.a):
        raise ValidationError(
            f"expected {len(params.a)} arguments, got {len(z)}", field="z")

    # the log-domain terms pick up rounding-level imaginary parts for z < 0
    real_input = not any(np.iscomplexobj(zi) for zi in z)
    zs = np.broadcast_arrays(*[np.asarray(zi, dtype=complex) for zi in z])
    shape = zs[0].shape
    zs = [zi.ravel() for zi in zs]
    n = len(zs)
    a = np.array(params.a)
    amin = float(a.min())

    absz = [np.abs(zi) for zi in zs]
    with np.errstate(divide="ignore"):
        logz = [np.log(zi) for zi in zs]
    zsum = float(np.max(sum(absz))) if zs[0].size else 0.0

    total = np.zeros(zs[0].shape, dtype=complex)
    abs_total = np.zeros(zs[0].shape)
    passed = 0
    k = 0
    while True:
        if k > max_terms:
            raise ConvergenceError(
                f"multivariate Mittag-Leffler series not converged in {max_terms} shells",
                report={"shells": max_terms, "max_abs_sum_z": zsum})

        comps = _compositions(k, n)
        arg = params.b + comps @ a
        _check_poles(arg)
        logc = _log_factorial(k) - _log_factorial(comps).sum(axis=1)
        rg_sign = gamma_sign(arg)
        logc = logc - log_gamma(arg)

        expo = np.broadcast_to(logc[:, None], (len(comps), total.size)).astype(complex)
        with np.errstate(invalid="ignore"):
            for i in range(n):
                li = comps[:, i][:, None]
                expo = expo + np.where(li == 0, 0.0, li * logz[i][None, :])
        terms = rg_sign[:, None] * np.exp(expo)
        shell = terms.sum(axis=0)
        total = total + shell
        # exp() of a large log-term carries a relative error of about eps*|expo|
        weight = np.where(terms == 0, 0.0, 2.0 + np.abs(expo))
        abs_total = abs_total + (np.abs(terms) * weight).sum(axis=0)

        bound = _shell_bound(zsum, k, params.b + k * amin)
        passed = passed + 1 if bound < abs_tol else 0
        if passed >= 3:
            break
        k += 1

    # the majorant decays faster than geometrically, a few more shells
    # dominate the remaining tail
    tail = sum(_shell_bound(zsum, kk, params.b + kk * amin) for kk in range(k + 1, k + 40))
    rounding = 8.0 * EPS * float(abs_total.max(initial=0.0)) * max(1.0, math.sqrt(k + 1))
    if real_input:
        total = total.real.astype(complex)
    value = total.reshape(shape) if shape else complex(total[0])
    return SeriesValue(value=value, error=float(tail + rounding), terms=k + 1)


def ml_two_param(alpha: float, beta: float, z, **kwargs) -> SeriesValue:
    r"""Two-parameter Mittag-Leffler function :math:`E_{\alpha,\beta}(z)`."""
    return ml_multivariate(MultiMLParams(a=(alpha,), b=beta), [z], **kwargs)

# }}}


# {{{ Kilbas-Saigo type function

@dataclass(frozen=True)
class KilbasSaigoParams:
    r"""Parameters of :math:`E^{\lambda}_{\alpha,\beta,\gamma}`."""

    alpha: float
    beta: float
    gamma: float
    lam: float

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive", field="alpha")
        if self.beta <= 0:
            raise ValidationError("beta must be positive", field="beta")

    def gamma_argument(self, j: int) -> float:
        return self.alpha * (j * self.beta + self.gamma) + 1.0


def kilbas_saigo_log_coefficients(
    params: KilbasSaigoParams, kmax: int
) -> tuple[np.ndarray, np.ndarray]:
    """``log|c_k|`` and ``sign(c_k)`` for ``k = 0, ..., kmax``.

    Coefficients after a pole of the denominator Gamma vanish; those are
    reported with ``log|c_k| = -inf``.
    """
    logc = np.zeros(kmax + 1)
    sign = np.ones(kmax + 1)
    for j in range(kmax):
        x = params.gamma_argument(j)
        if x <= 0 and x == round(x):
            raise PoleError(f"Kilbas-Saigo coefficient hits a Gamma pole at j = {j}")
        y = x + params.lam
        if y <= 0 and y == round(y):
            logc[j + 1:] = -np.inf
            break
        logc[j + 1] = logc[j] + log_gamma(x) - log_gamma(y)
        sign[j + 1] = sign[j] * gamma_sign(x) * gamma_sign(y)
    return logc, sign


def kilbas_saigo(
    params: KilbasSaigoParams,
    z,
    *,
    abs_tol: float = 1.0e-17,
    max_terms: int = 10_000,
) -> SeriesValue:
    r"""Evaluate :math:`E^{\lambda}_{\alpha,\beta,\gamma}(z) = \sum_k c_k z^k`.

    The coefficients follow the recurrence
    :math:`c_{k+1} = c_k \Gamma(\alpha[k\beta+\gamma]+1) /
    \Gamma(\alpha[k\beta+\gamma]+\lambda+1)`, :math:`c_0 = 1`, evaluated in
    log-Gamma form. Summation stops when three consecutive terms are below
    *abs_tol* in modulus.
    """
    za = np.asarray(z, dtype=complex)
    flat = za.ravel()
    absz = float(np.max(np.abs(flat))) if flat.size else 0.0
    with np.errstate(divide="ignore"):
        logabsz = math.log(absz) if absz > 0 else -math.inf

    total = np.ones_like(flat)
    abs_total = np.ones(flat.shape)
    zpow = np.ones_like(flat)
    logc, sign = 0.0, 1.0
    passed, k = 0, 0
    last_ratio = 1.0
    while True:
        if k >= max_terms:
            raise ConvergenceError(
                f"Kilbas-Saigo series not converged in {max_terms} terms",
                report={"terms": max_terms, "max_abs_z": absz})
        x = params.gamma_argument(k)
        if x <= 0 and x == round(x):
            raise PoleError(f"Kilbas-Saigo coefficient hits a Gamma pole at j = {k}")
        y = x + params.lam
        if y <= 0 and y == round(y):
            # all further coefficients vanish
            last_ratio = 0.0
            break
        step = log_gamma(x) - log_gamma(y)
        last_ratio = math.exp(step) * absz
        logc += step
        sign *= gamma_sign(x) * gamma_sign(y)
        k += 1
        zpow = zpow * flat
        term = sign * math.exp(logc) * zpow
        total = total + term
        abs_total = abs_total + np.abs(term)

        mag = math.exp(logc + k * logabsz) if absz > 0 else 0.0
        passed = passed + 1 if mag < abs_tol else 0
        if passed >= 3:
            break

    last = math.exp(logc + k * logabsz) if absz > 0 else 0.0
    if last_ratio < 1.0:
        tail = last * last_ratio / (1.0 - last_ratio)
    else:
        tail = last
    rounding = 8.0 * EPS * float(abs_total.max(initial=0.0))
    value = total.reshape(za.shape) if za.ndim else complex(total[0])
    return SeriesValue(value=value, error=float(tail + rounding), terms=k + 1)

# }}}


# {{{ Bessel

def bessel_j(nu: float, x):
    r"""Bessel function of the first kind :math:`J_\nu(x)` for
    :math:`\nu \ge -1/2`, :math:`x \ge 0`."""
    if nu < -0.5:
        raise ValidationError("order must be >= -1/2", field="nu")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or not np.all(np.isfinite(xa)):
        raise ValidationError("argument must be finite and non-negative", field="x")
    out = scipy.special.jv(nu, xa)
    return out if xa.ndim else float(out)

# }}}
