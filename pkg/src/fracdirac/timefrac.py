r"""Fractional integrals and derivatives with respect to a clock function.

For a strictly increasing clock :math:`\phi` the fractional integral is

.. math::

    I^{\alpha,\phi} f(t) = \frac{1}{\Gamma(\alpha)} \int_{t_0}^t
        \phi'(s) (\phi(t) - \phi(s))^{\alpha - 1} f(s) \,\mathrm{d}s,

and the Riemann-Liouville derivative is
:math:`D^{\alpha,\phi} = (\phi'^{-1} \mathrm{d}/\mathrm{d}t)^n I^{n - \alpha,\phi}`.
Everything is computed in the variable :math:`u = \phi(t) - \phi(t_0)`, in
which :math:`I^{\alpha,\phi}` becomes the classical Riemann-Liouville
integral and :math:`\phi'^{-1} \mathrm{d}/\mathrm{d}t` becomes
:math:`\mathrm{d}/\mathrm{d}u`.

Discretization
--------------

Integrals use product integration: :math:`f` is interpolated linearly in
:math:`u` on every cell and the singular kernel is integrated in closed
form. Functions of interest here are not smooth at :math:`t_0` (fractional
integrals of smooth functions behave like :math:`u^\alpha`), and the plain
rule loses all accuracy on the first few nodes, which the outer derivative
of :math:`D^{\alpha,\phi}` then amplifies. Every :class:`TimeSeries`
therefore carries the set of non-integer exponents :math:`\sigma` such that
:math:`f \sim \sum c_\sigma u^\sigma` near :math:`t_0`, and the weights of
the first few nodes are corrected so that the rule is exact on
:math:`\{1, u\} \cup \{u^\sigma\}`. The same exponents are used to build
generalized difference stencils for :math:`\mathrm{d}/\mathrm{d}u` near
:math:`t_0`. Exponents propagate through the operators
(:math:`\sigma \mapsto \sigma + \alpha` for integrals, :math:`\sigma \mapsto
\sigma - 1` for derivatives).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from fracdirac import specfun
from fracdirac.errors import GridError, ValidationError

#: singular exponents at or above this value are treated as smooth
EXPONENT_CAP = 3.0
#: exponents closer than this to each other (or to an integer) are merged
EXPONENT_GAP = 0.05
#: maximum number of tracked non-integer exponents
MAX_EXPONENTS = 6
#: number of rows past the flagged region that get generalized stencils
STENCIL_ROWS = 8
#: nodes per polynomial difference stencil (fourth order)
STENCIL_WIDTH = 5


# {{{ clocks

@dataclass(frozen=True, eq=False)
class ClockMap:
    r"""A clock :math:`\phi` on :math:`[t_{start}, t_{end}]` with :math:`\phi' > 0`."""

    phi: Callable[[np.ndarray], np.ndarray]
    phi_prime: Callable[[np.ndarray], np.ndarray]
    t_start: float
    t_end: float
    name: str = "custom"
    #: optional cancellation-free evaluation of :math:`\phi(t) - \phi(t_{start})`
    delta: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if not self.t_end > self.t_start:
            raise ValidationError("clock needs t_end > t_start", field="clock")

    def shift(self, t: np.ndarray) -> np.ndarray:
        r"""Evaluate :math:`u = \phi(t) - \phi(t_{start})`."""
        t = np.asarray(t, dtype=float)
        if self.delta is not None:
            return np.asarray(self.delta(t), dtype=float)
        return np.asarray(self.phi(t), dtype=float) - float(self.phi(np.array(self.t_start)))

    def validate(self, nodes: np.ndarray, *, rtol: float = 1.0e-6) -> None:
        """Check positivity of ``phi_prime`` at *nodes* and spot-check it
        against central differences of ``phi`` at interior nodes."""
        dphi = np.asarray(self.phi_prime(nodes), dtype=float)
        if not np.all(np.isfinite(dphi)):
            raise ValidationError(
                f"clock '{self.name}': phi_prime is not finite on the grid", field="clock")
        # a vanishing rate is tolerated at the initial time only (e.g. t^p, p > 1)
        nonpositive = dphi <= 0
        nonpositive[0] &= not (dphi[0] == 0 and nodes[0] == self.t_start)
        if np.any(nonpositive):
            bad = int(np.argmax(nonpositive))
            raise ValidationError(
                f"clock '{self.name}' is not monotone: phi_prime <= 0 at t = {nodes[bad]:g}",
                field="clock")

        interior = nodes[1:-1]
        if interior.size > 64:
            interior = interior[np.linspace(0, interior.size - 1, 64).astype(int)]
        if interior.size == 0:
            return
        span = self.t_end - self.t_start
        gap = np.minimum(interior - self.t_start, self.t_end - interior)
        step = np.minimum(1.0e-5 * span, 0.5 * gap)
        step = np.where(step > 0, step, 1.0e-5 * span)
        fd = (np.asarray(self.phi(interior + step)) - np.asarray(self.phi(interior - step))) / (2 * step)
        ref = np.asarray(self.phi_prime(interior), dtype=float)
        err = np.abs(fd - ref) / np.maximum(np.abs(ref), 1.0e-300)
        if np.max(err) > rtol:
            raise ValidationError(
                f"clock '{self.name}': phi_prime does not match the derivative of phi "
                f"(relative mismatch {np.max(err):.2e})", field="clock")


def identity_clock(t_start: float, t_end: float) -> ClockMap:
    r""":math:`\phi(t) = t`."""
    return ClockMap(
        phi=lambda t: np.asarray(t, dtype=float),
        phi_prime=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        t_start=t_start, t_end=t_end, name="identity",
        delta=lambda t: np.asarray(t, dtype=float) - t_start)


def power_clock(p: float, t_start: float, t_end: float) -> ClockMap:
    r""":math:`\phi(t) = t^p` for :math:`t > 0` (and :math:`t \ge 0` if :math:`p = 1`)."""
    if p <= 0:
        raise ValidationError("power clock needs p > 0", field="clock")
    if t_start < 0:
        raise ValidationError("power clock needs t_start >= 0", field="clock")
    return ClockMap(
        phi=lambda t: np.asarray(t, dtype=float) ** p,
        phi_prime=lambda t: p * np.asarray(t, dtype=float) ** (p - 1),
        t_start=t_start, t_end=t_end, name=f"power:{p:g}",
        delta=lambda t: (t_start ** p) * np.expm1(p * np.log(np.asarray(t, dtype=float) / t_start))
        if t_start > 0 else np.asarray(t, dtype=float) ** p)


def exp_clock(t_start: float, t_end: float) -> ClockMap:
    r""":math:`\phi(t) = e^t`."""
    return ClockMap(
        phi=lambda t: np.exp(np.asarray(t, dtype=float)),
        phi_prime=lambda t: np.exp(np.asarray(t, dtype=float)),
        t_start=t_start, t_end=t_end, name="exp",
        delta=lambda t: math.exp(t_start) * np.expm1(np.asarray(t, dtype=float) - t_start))


def tabulated_clock(t: np.ndarray, phi: np.ndarray, phi_prime: np.ndarray) -> ClockMap:
    """Clock from tabulated ``(t, phi, phi')`` triples, interpolated by a
    cubic Hermite spline (whose derivative is used as ``phi_prime``)."""
    from scipy.interpolate import CubicHermiteSpline

    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    phi_prime = np.asarray(phi_prime, dtype=float)
    if t.ndim != 1 or t.size < 2 or t.shape != phi.shape or t.shape != phi_prime.shape:
        raise ValidationError("tabulated clock needs matching 1D columns t, phi, phi'",
                              field="clock")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("tabulated clock times must be strictly increasing",
                              field="clock")
    if np.any(phi_prime <= 0) or np.any(np.diff(phi) <= 0):
        raise ValidationError("tabulated clock is not monotone", field="clock")

    spline = CubicHermiteSpline(t, phi, phi_prime)
    dspline = spline.derivative()
    return ClockMap(
        phi=lambda s: spline(np.asarray(s, dtype=float)),
        phi_prime=lambda s: dspline(np.asarray(s, dtype=float)),
        t_start=float(t[0]), t_end=float(t[-1]), name="tabulated",
        delta=lambda s: spline(np.asarray(s, dtype=float)) - phi[0])


def clock_from_name(name: str, t_start: float, t_end: float) -> ClockMap:
    """Look up a clock by registry name: ``identity``, ``power:p`` or ``exp``."""
    if name == "identity":
        return identity_clock(t_start, t_end)
    if name == "exp":
        return exp_clock(t_start, t_end)
    if name.startswith("power:"):
        try:
            p = float(name.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad clock name '{name}'", field="clock") from None
        return power_clock(p, t_start, t_end)
    raise ValidationError(f"unknown clock '{name}'", field="clock")

# }}}


# {{{ grids, series, orders

@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time nodes :math:`t_0 < \\cdots < t_N`, :math:`N \\ge 2`."""

    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise GridError("time grid needs at least 3 nodes")
        if not np.all(np.isfinite(nodes)) or np.any(np.diff(nodes) <= 0):
            raise GridError("time grid nodes must be finite and strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, t_start: float, t_end: float, n: int) -> TimeGrid:
        """Uniform grid with *n* cells."""
        if n < 2:
            raise GridError("time grid needs N >= 2 cells")
        return cls(np.linspace(t_start, t_end, n + 1))

    @property
    def n(self) -> int:
        """Number of cells :math:`N`."""
        return self.nodes.size - 1


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Values of a (complex) function on a :class:`TimeGrid`.

    The leading axis of *values* runs over the nodes; trailing axes hold
    independent components (e.g. Fourier modes) that are processed together.
    """

    grid: TimeGrid
    values: np.ndarray
    #: non-integer exponents of the expansion at the first node
    exponents: tuple[float, ...] = ()
    #: the first ``flagged`` values are extrapolated, not computed
    flagged: int = 0
    #: free-form quality note (e.g. estimated initial derivatives)
    note: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.dtype.kind not in "fc":
            values = values.astype(float)
        if values.ndim == 0 or values.shape[0] != self.grid.nodes.size:
            raise GridError(
                f"series has {values.shape[0] if values.ndim else 0} values "
                f"but the grid has {self.grid.nodes.size} nodes")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "exponents", normalize_exponents(self.exponents))

    @property
    def valid(self) -> np.ndarray:
        """Boolean mask of nodes that were computed (not extrapolated)."""
        mask = np.ones(self.grid.nodes.size, dtype=bool)
        mask[:self.flagged] = False
        return mask

    def replace(self, **kwargs) -> TimeSeries:
        from dataclasses import replace
        return replace(self, **kwargs)


@dataclass(frozen=True)
class FracOrder:
    r"""A real fractional order :math:`\alpha > 0` and its integer ceiling
    :math:`n = -\lfloor -\alpha \rfloor`, so that :math:`n - 1 < \alpha \le n`."""

    alpha: float

    def __post_init__(self) -> None:
        if isinstance(self.alpha, complex):
            raise ValidationError("complex orders are not supported numerically",
                                  field="alpha")
        alpha = float(self.alpha)
        if not (alpha > 0 and math.isfinite(alpha)):
            raise ValidationError(f"order must be positive, got {alpha!r}", field="alpha")
        object.__setattr__(self, "alpha", alpha)

    @property
    def n(self) -> int:
        return -math.floor(-self.alpha)

    @property
    def is_integer(self) -> bool:
        return self.alpha == self.n


def as_order(alpha: FracOrder | float) -> FracOrder:
    return alpha if isinstance(alpha, FracOrder) else FracOrder(alpha)


def normalize_exponents(exponents: Sequence[float], cap: float = EXPONENT_CAP) -> tuple[float, ...]:
    """Close a set of exponents under ``+1`` below *cap*, drop (near-)integers
    and merge near-duplicates; keeps the :data:`MAX_EXPONENTS` smallest."""
    closed = []
    for s in exponents:
        s = float(s)
        while s < cap:
            closed.append(s)
            s += 1.0

    out: list[float] = []
    for s in sorted(closed):
        if abs(s - round(s)) < EXPONENT_GAP and s > -0.5:
            continue
        if out and s - out[-1] < EXPONENT_GAP:
            continue
        out.append(s)
    return tuple(out[:MAX_EXPONENTS])


def _clock_nodes(clock: ClockMap, grid: TimeGrid) -> np.ndarray:
    nodes = grid.nodes
    scale = max(1.0, abs(clock.t_start), abs(clock.t_end))
    if abs(nodes[0] - clock.t_start) > 1.0e-12 * scale:
        raise GridError(
            f"grid starts at {nodes[0]:g} but the clock starts at {clock.t_start:g}")
    if nodes[-1] > clock.t_end + 1.0e-12 * scale:
        raise GridError(
            f"grid ends at {nodes[-1]:g} beyond the clock domain end {clock.t_end:g}")
    clock.validate(nodes)
    u = clock.shift(nodes)
    u[0] = 0.0
    if np.any(np.diff(u) <= 0):
        raise ValidationError(f"clock '{clock.name}' is not increasing on the grid",
                              field="clock")
    return u

# }}}


# {{{ integral weights

@lru_cache(maxsize=16)
def _trapezoid_weights(beta: float, u_bytes: bytes) -> np.ndarray:
    u = np.frombuffer(u_bytes, dtype=float)
    n = u.size
    uk = u[:, None]
    a = uk - u[None, :-1]
    h = np.diff(u)[None, :]
    active = a > 0

    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(active, np.minimum(h / np.where(active, a, 1.0), 1.0), 0.0)
        lg = np.log1p(-eps)
        m0 = -np.expm1(beta * lg)
        m1 = -np.expm1((beta + 1.0) * lg)
        abeta = np.where(active, np.where(active, a, 1.0) ** beta, 0.0)
        # A0 = int_b^a r^(beta-1) dr, A1 = int_b^a r^(beta-1) (a - r) dr
        a0 = abeta * m0 / beta
        a1_over_h = abeta / np.where(active, eps, 1.0) * (m0 / beta - m1 / (beta + 1.0))
    a0 = np.where(active, a0, 0.0)
    a1_over_h = np.where(active, a1_over_h, 0.0)

    w = np.zeros((n, n))
    w[:, :-1] += a0 - a1_over_h
    w[:, 1:] += a1_over_h
    w[0] = 0.0
    return w / specfun.gamma(beta)


def _power(u: np.ndarray, s: float, skip: int) -> np.ndarray:
    out = np.zeros_like(u)
    mask = np.arange(u.size) >= skip
    if s == 0:
        out[mask] = 1.0
    else:
        with np.errstate(divide="ignore"):
            out[mask] = u[mask] ** s
    return out


@lru_cache(maxsize=16)
def _corrected_integral_matrix(
    beta: float, u_bytes: bytes, exponents: tuple[float, ...], skip: int
) -> np.ndarray:
    u = np.frombuffer(u_bytes, dtype=float)
    w = _trapezoid_weights(beta, u_bytes).copy()
    w[:, :skip] = 0.0

    basis = (0.0, 1.0) + exponents
    k = len(basis)
    start = np.arange(skip, skip + k)
    if start[-1] >= u.size:
        w.setflags(write=False)
        return w

    scale = u[start[-1]]
    v = np.empty((k, k))
    r = np.empty((k, u.size))
    for i, s in enumerate(basis):
        bs = _power(u, s, skip)
        norm = scale ** s
        v[i] = bs[start] / norm
        exact = np.zeros_like(u)
        exact[1:] = (specfun.gamma(s + 1.0) / specfun.gamma(s + beta + 1.0)) * u[1:] ** (s + beta)
        r[i] = (exact - w @ bs) / norm
    corr = np.linalg.solve(v, r).T
    corr[0] = 0.0
    w[:, start] += corr
    w.setflags(write=False)
    return w


def integral_matrix(
    beta: float, u: np.ndarray, exponents: Sequence[float] = (), skip: int = 0
) -> np.ndarray:
    r"""Dense (read-only) matrix of :math:`I^{\beta}` in the variable *u*.

    The matrix is exact on :math:`\{1, u\} \cup \{u^\sigma\}` for the given
    non-integer exponents; values at the first *skip* nodes are ignored.
    """
    exps = normalize_exponents(exponents)
    if any(s <= -1 for s in exps):
        raise ValidationError("integrand is not integrable at the first node",
                              field="exponents")
    skip = max(skip, 1 if any(s < 0 for s in exps) else 0)
    u = np.ascontiguousarray(u, dtype=float)
    return _corrected_integral_matrix(float(beta), u.tobytes(), exps, int(skip))


def integral_exponents(beta: float, exponents: Sequence[float]) -> tuple[float, ...]:
    r"""Exponents of :math:`I^\beta f` given those of :math:`f`."""
    return normalize_exponents([s + beta for s in (0.0, 1.0, *normalize_exponents(exponents))])

# }}}


# {{{ derivatives

def _extrapolate_head(values: np.ndarray, u: np.ndarray, count: int, degree: int) -> np.ndarray:
    """Overwrite the first *count* values by a polynomial fit through the
    next ``degree + 1`` nodes."""
    if count <= 0:
        return values
    idx = np.arange(count, count + degree + 1)
    if idx[-1] >= u.size:
        raise GridError("grid too short to extrapolate the first nodes")
    x = u[idx] - u[count]
    vand = np.vander(x, degree + 1, increasing=True)
    target = np.vander(u[:count] - u[count], degree + 1, increasing=True)
    coef = np.linalg.solve(vand, values[idx].reshape(degree + 1, -1))
    out = values.copy()
    out[:count] = (target @ coef).reshape((count,) + values.shape[1:])
    return out


def _stencil(u: np.ndarray, cols: np.ndarray, row: int, basis: tuple[float, ...]) -> np.ndarray:
    """Weights on ``u[cols]`` reproducing the derivative at ``u[row]`` of
    every ``u**s`` for ``s`` in *basis*."""
    scale = u[cols[-1]] if u[cols[-1]] > 0 else 1.0
    v = np.empty((len(basis), len(cols)))
    rhs = np.empty(len(basis))
    for i, s in enumerate(basis):
        norm = scale ** s
        v[i] = _power(u[cols], s, 0) / norm
        rhs[i] = 0.0 if s == 0 else s * u[row] ** (s - 1.0) / norm
    return np.linalg.solve(v, rhs)


def _polynomial_rows(u: np.ndarray, values: np.ndarray, skip: int, width: int) -> np.ndarray:
    """Derivative by local polynomial stencils of *width* nodes on every row
    from *skip* on (centered where possible, one-sided at the ends)."""
    n = u.size
    rows = np.arange(skip, n)
    lo = np.clip(rows - width // 2, skip, n - width)
    cols = lo[:, None] + np.arange(width)[None, :]
    hloc = u[cols[:, -1]] - u[cols[:, 0]]
    x = (u[cols] - u[rows][:, None]) / hloc[:, None]
    vand = x[:, None, :] ** np.arange(width)[None, :, None]
    rhs = np.zeros((rows.size, width))
    rhs[:, 1] = 1.0
    weights = np.linalg.solve(vand, rhs[..., None])[..., 0] / hloc[:, None]
    out = np.zeros_like(values)
    out[skip:] = np.einsum("rw,rw...->r...", weights, values[cols])
    return out


def _derivative_values(
    u: np.ndarray, values: np.ndarray, exponents: tuple[float, ...], skip: int
) -> tuple[np.ndarray, int]:
    n = u.size
    if n - skip < STENCIL_WIDTH:
        raise GridError("grid too short for a derivative")
    out = _polynomial_rows(u, values, skip, STENCIL_WIDTH)

    skip_out = skip
    if skip == 0 and any(s < 1 for s in exponents):
        skip_out = 1

    if exponents or skip_out > skip:
        basis = tuple(float(i) for i in range(STENCIL_WIDTH)) + exponents
        k = len(basis)
        for row in range(skip_out, min(n, skip + k + STENCIL_ROWS)):
            lo = max(skip, min(row - k // 2, n - k))
            cols = np.arange(lo, lo + k)
            if cols[-1] >= n:
                continue
            out[row] = np.tensordot(_stencil(u, cols, row, basis), values[cols], axes=(0, 0))

    if skip_out > 0:
        out = _extrapolate_head(out, u, skip_out, 2)
    return out, skip_out


def derivative_exponents(exponents: Sequence[float]) -> tuple[float, ...]:
    return normalize_exponents([s - 1.0 for s in normalize_exponents(exponents)])

# }}}


# {{{ public operations

def _check_series(clock: ClockMap, f: TimeSeries) -> np.ndarray:
    return _clock_nodes(clock, f.grid)


def frac_integral(alpha: FracOrder | float, clock: ClockMap, f: TimeSeries) -> TimeSeries:
    r"""Fractional integral :math:`I^{\alpha,\phi} f` at every grid node.

    The first node maps to zero.
    """
    order = as_order(alpha)
    u = _check_series(clock, f)
    mat = integral_matrix(order.alpha, u, f.exponents, f.flagged)
    values = np.tensordot(mat, f.values, axes=(1, 0))
    return TimeSeries(f.grid, values,
                      exponents=integral_exponents(order.alpha, f.exponents),
                      flagged=0, note=f.note)


def _phi_diff_once(u: np.ndarray, f: TimeSeries) -> TimeSeries:
    values, skip = _derivative_values(u, f.values, f.exponents, f.flagged)
    return TimeSeries(f.grid, values, exponents=derivative_exponents(f.exponents),
                      flagged=skip, note=f.note)


def phi_diff(j: int, clock: ClockMap, f: TimeSeries) -> TimeSeries:
    r"""Apply :math:`(\phi'^{-1} \mathrm{d}/\mathrm{d}t)^j` by second-order
    differences in :math:`u` (one-sided at the ends, generalized stencils
    near the first node when *f* carries singular exponents)."""
    if j < 0 or int(j) != j:
        raise ValidationError("derivative count must be a non-negative integer", field="j")
    if f.grid.n < 2 * j + 2:
        raise GridError(f"grid too short for {j} derivatives (need N >= {2 * j + 2})")
    u = _check_series(clock, f)
    for _ in range(int(j)):
        f = _phi_diff_once(u, f)
    return f


def rl_derivative(alpha: FracOrder | float, clock: ClockMap, f: TimeSeries) -> TimeSeries:
    r"""Riemann-Liouville derivative :math:`D^{\alpha,\phi} f`.

    Computed as :math:`n` successive :math:`u`-derivatives of
    :math:`I^{n - \alpha,\phi} f`; the first :math:`n` nodes are filled by
    polynomial extrapolation and flagged.
    """
    order = as_order(alpha)
    n = order.n
    if f.grid.n < 2 * n + 2:
        raise GridError(f"grid too short for an order-{order.alpha:g} derivative "
                        f"(need N >= {2 * n + 2})")
    u = _check_series(clock, f)

    g = f
    if not order.is_integer:
        g = frac_integral(n - order.alpha, clock, f)
    for _ in range(n):
        g = _phi_diff_once(u, g)

    flagged = max(n, g.flagged)
    values = _extrapolate_head(g.values, u, flagged, n)
    return TimeSeries(f.grid, values, exponents=g.exponents, flagged=flagged, note=f.note)


def jet(clock: ClockMap, grid: TimeGrid, init: Sequence) -> np.ndarray:
    r""":math:`\sum_j c_j \Psi_j` for the coefficients ``init``."""
    u = _clock_nodes(clock, grid)
    total = None
    for j, c in enumerate(init):
        term = np.multiply.outer(u**j / specfun.gamma(j + 1.0), np.asarray(c))
        total = term if total is None else total + term
    return total


def caputo_derivative(
    alpha: FracOrder | float,
    clock: ClockMap,
    f: TimeSeries,
    init: Sequence | None = None,
) -> TimeSeries:
    r"""Caputo-type derivative :math:`{}^C D^{\alpha,\phi} f`.

    *init* holds :math:`f^{[j]}_\phi(t_0)` for :math:`j = 0, \ldots, n - 1`.
    When it is omitted the values are estimated by one-sided differences and
    the result is marked in :attr:`TimeSeries.note`.
    """
    order = as_order(alpha)
    n = order.n
    note = f.note
    if init is None:
        init = [phi_diff(j, clock, f).values[0] for j in range(n)]
        note = "estimated initial derivatives"
    elif len(init) != n:
        raise ValidationError(
            f"order {order.alpha:g} needs {n} initial derivatives, got {len(init)}",
            field="init")

    remainder = f.values - jet(clock, f.grid, init)
    g = TimeSeries(f.grid, remainder, exponents=f.exponents, flagged=f.flagged, note=note)
    return rl_derivative(order, clock, g)


def psi_basis(j: int, clock: ClockMap, grid: TimeGrid) -> TimeSeries:
    r""":math:`\Psi_j = (\phi(t) - \phi(t_0))^j / \Gamma(j + 1)`."""
    if j < 0 or int(j) != j:
        raise ValidationError("basis index must be a non-negative integer", field="j")
    u = _clock_nodes(clock, grid)
    return TimeSeries(grid, u**j / specfun.gamma(j + 1.0))


def clock_power(p: float, clock: ClockMap, grid: TimeGrid) -> TimeSeries:
    r""":math:`(\phi(t) - \phi(t_0))^p`, with *p* recorded as a singular exponent."""
    u = _clock_nodes(clock, grid)
    with np.errstate(divide="ignore"):
        values = u**p
    return TimeSeries(grid, values, exponents=(p,), flagged=1 if p < 0 else 0)


def sample(
    clock: ClockMap,
    grid: TimeGrid,
    func: Callable[[np.ndarray], np.ndarray],
    exponents: Sequence[float] = (),
) -> TimeSeries:
    """Sample ``func(t)`` on *grid* (the clock is validated against the grid)."""
    _clock_nodes(clock, grid)
    return TimeSeries(grid, np.asarray(func(grid.nodes)), exponents=tuple(exponents))


def clock_nodes(clock: ClockMap, grid: TimeGrid) -> np.ndarray:
    r"""Validated :math:`u = \phi(t) - \phi(t_0)` at the grid nodes."""
    return _clock_nodes(clock, grid)

# }}}
