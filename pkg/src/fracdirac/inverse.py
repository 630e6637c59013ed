r"""Recovery of a time-dependent coefficient from two point observations.

For the problem :math:`D^{\alpha,\phi} w + \Theta(t)(-\Delta)^\lambda w = 0`
with compactly supported data :math:`w_1`, the traces at a point :math:`q`

.. math::

    h_1(t) = w(q, t) - w_1(q)\,(\phi(t) - \phi(t_0))^{n - 1}, \qquad
    h_2(t) = v(q, t),

where :math:`v` solves the same problem with data
:math:`-(-\Delta)^\lambda w_1` (:math:`= \Delta w_1` for :math:`\lambda = 1`),
satisfy :math:`D^{\alpha,\phi} h_1 = \Theta h_2`. Wave-type orders
(:math:`1 < \alpha \le 2`) place :math:`w_1` as the first-derivative datum,
heat-type orders (:math:`0 < \alpha \le 1`) as the initial value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.signal

from fracdirac import solver, timefrac
from fracdirac.errors import GridError, ValidationError
from fracdirac.timefrac import ClockMap, FracOrder, TimeSeries

#: relative threshold below which observations of h2 are masked
H2_MASK = 1.0e-8
#: largest growth of the divided differences under grid halving read as bounded
SMOOTH_RATIO = 1.1


@dataclass(frozen=True, eq=False)
class ObservationPair:
    """Traces ``h1``, ``h2`` observed at the lattice node ``q``."""

    q: tuple[int, ...]
    h1: TimeSeries
    h2: TimeSeries
    alpha: FracOrder
    clock: ClockMap

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", timefrac.as_order(self.alpha))
        if self.h1.grid is not self.h2.grid and not np.array_equal(
                self.h1.grid.nodes, self.h2.grid.nodes):
            raise GridError("h1 and h2 must share one time grid")
        if not 0 < self.alpha.alpha <= 2:
            raise ValidationError("recovery supports orders in (0, 2]", field="alpha")


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    r"""Recovered :math:`\Theta` (masked nodes hold NaN) and diagnostics."""

    theta: TimeSeries
    mask: np.ndarray
    diagnostics: dict = field(default_factory=dict)


# {{{ synthesis

def smooth_step(z):
    """C-infinity step from 0 (``z <= 0``) to 1 (``z >= 1``)."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)
        b = np.where(z < 1, np.exp(-1.0 / np.where(z < 1, 1.0 - z, 1.0)), 0.0)
    return a / (a + b)


def window(x, start: float, end: float, width: float):
    """Smooth cutoff equal to 1 on ``[start + width, end - width]`` and 0
    outside ``[start, end]``."""
    return smooth_step((x - start) / width) * smooth_step((end - x) / width)


def _data_slots(alpha: float, w1):
    n = FracOrder(alpha).n
    if n == 1:
        return (w1,)
    return tuple(np.zeros_like(w1) for _ in range(n - 1)) + (w1,)


def synthesize_observations(problem: solver.CauchyProblem, w1: np.ndarray,
                            q: tuple[int, ...], *, support: np.ndarray | None = None,
                            cfg: solver.KernelSeriesConfig | None = None) -> ObservationPair:
    r"""Run the two forward problems on ``problem.lattice`` and extract the
    traces at node *q*.

    ``problem`` supplies orders, coefficient, clock and lattice; its initial
    data are replaced. *support* is a boolean mask of the sub-box
    :math:`\Omega`; *w1* must vanish outside it.
    """
    if problem.space_mode != "spectral-lattice":
        raise ValidationError("observations are synthesized on a lattice", field="space_mode")
    if problem.m != 1:
        raise ValidationError("coefficient recovery needs a single-term equation",
                              field="betas")
    w1 = np.asarray(w1, dtype=float)
    lattice = problem.lattice
    if w1.shape != lattice.shape:
        raise ValidationError("w1 does not match the lattice", field="w1")
    if support is not None:
        outside = np.abs(w1[~np.asarray(support, dtype=bool)])
        if outside.size and np.max(outside) > 1.0e-12 * max(np.max(np.abs(w1)), 1e-300):
            raise ValidationError("w1 is not supported inside the observation box",
                                  field="w1")
    q = tuple(int(i) for i in np.atleast_1d(q))
    if len(q) != lattice.dim or any(not 0 <= i < s for i, s in zip(q, lattice.shape)):
        raise ValidationError("observation point is not a lattice node", field="q")

    alpha = problem.beta0
    lap = -solver.frac_laplacian(w1, problem.lam, lattice)
    first = replace(problem, initial_data=_data_slots(alpha, w1), source=None)
    second = replace(problem, initial_data=_data_slots(alpha, lap), source=None)
    w = solver.solve_scalar(first, cfg)
    v = solver.solve_scalar(second, cfg)

    grid = w.grid
    u = timefrac.clock_nodes(problem.clock, grid)
    n = FracOrder(alpha).n
    index = (slice(None),) + q
    h1 = w.values[index] - w1[q] * u ** (n - 1)
    h2 = v.values[index]
    return ObservationPair(q, TimeSeries(grid, h1, exponents=w.exponents),
                           TimeSeries(grid, h2, exponents=v.exponents),
                           FracOrder(alpha), problem.clock)

# }}}


# {{{ recovery

def _smooth(h: TimeSeries, window: int, order: int = 4) -> TimeSeries:
    """Local least-squares (Savitzky-Golay) smoothing of the samples."""
    if window < order + 2 or window % 2 == 0:
        raise ValidationError("smoothing window must be odd and exceed the order + 1",
                              field="smooth")
    values = scipy.signal.savgol_filter(np.asarray(h.values), window, order, mode="interp")
    return h.replace(values=values)


def _mask(obs: ObservationPair, flagged: int) -> tuple[np.ndarray, np.ndarray]:
    h2 = np.asarray(obs.h2.values)
    small = np.abs(h2) < H2_MASK * np.max(np.abs(h2)) if np.any(h2) else np.ones(h2.size, bool)
    mask = np.ones(h2.size, dtype=bool)
    mask[:flagged] = False
    mask &= ~small
    return mask, np.nonzero(small)[0]


def recover_theta(obs: ObservationPair, *, smooth: int | None = None,
                  forward: solver.CauchyProblem | None = None,
                  w1: np.ndarray | None = None,
                  cfg: solver.KernelSeriesConfig | None = None) -> RecoveryResult:
    r""":math:`\Theta = D^{\alpha,\phi} h_1 / h_2` on unflagged nodes.

    Nodes where :math:`|h_2| < 10^{-8}\|h_2\|_\infty` are masked. With
    *forward* and *w1* given, the problem is re-solved with the recovered
    coefficient and the relative misfit of :math:`h_1` is reported.
    """
    h1 = _smooth(obs.h1, smooth) if smooth else obs.h1
    d = timefrac.rl_derivative(obs.alpha, obs.clock, h1)
    mask, small = _mask(obs, d.flagged)
    if not np.any(mask):
        raise GridError("no usable node: every node is flagged or has h2 = 0")

    theta = np.full(mask.size, np.nan)
    ratio = np.asarray(d.values)[mask] / np.asarray(obs.h2.values)[mask]
    theta[mask] = ratio.real
    grid = obs.h1.grid
    interior_zero = [int(i) for i in small if 0 < i < grid.n]
    diagnostics = {
        "min_ratio": float(np.min(theta[mask])),
        "flagged": int(d.flagged),
        "masked_nodes": int(np.sum(~mask)),
        "h2_small_nodes": interior_zero,
        "max_imag": float(np.max(np.abs(ratio.imag))) if np.iscomplexobj(ratio) else 0.0,
        "smoothing_window": smooth,
    }
    if forward is not None and w1 is not None:
        diagnostics["forward_misfit"] = _forward_misfit(obs, theta, mask, forward, w1, cfg)
    return RecoveryResult(TimeSeries(grid, theta), mask, diagnostics)


def _forward_misfit(obs, theta, mask, forward, w1, cfg) -> float:
    t = obs.h1.grid.nodes
    tv, thv = t[mask], theta[mask]
    coeff = solver.Coefficient(lambda s: np.interp(s, tv, thv), description="recovered")
    problem = replace(forward, coeffs=(coeff,))
    again = synthesize_observations(problem, w1, obs.q, cfg=cfg)
    ref = np.asarray(obs.h1.values)
    return float(np.max(np.abs(again.h1.values - ref)) / max(np.max(np.abs(ref)), 1e-300))

# }}}


# {{{ hypotheses

def validate_hypotheses(obs: ObservationPair, K: float, nu: float = 1.0,
                        problem: solver.CauchyProblem | None = None,
                        rtol: float = 1.0e-3) -> dict:
    r"""Evaluate the four recovery hypotheses with numeric evidence.

    1. series convergence (delegated to :func:`solver.convergence_check`,
       skipped without *problem*);
    2. smoothness of :math:`h_2` (:math:`C^2` for :math:`\alpha > 1`,
       :math:`C^1` otherwise): divided differences of that order stay bounded
       under grid refinement;
    3. :math:`h_2 \ne 0` on the open interval (no small values, no sign
       change);
    4. :math:`D^{\alpha,\phi} h_1 / h_2 \ge K` on unflagged nodes (with
       relative slack *rtol*).
    """
    if not K > 0 or not nu > 0:
        raise ValidationError("K and nu must be positive", field="K")
    report: dict = {}

    if problem is not None:
        check = solver.convergence_check(problem, nu)
        report["convergence"] = {"pass": check["pass"], "C_estimate": check["C_estimate"]}
    else:
        report["convergence"] = {"pass": None, "C_estimate": None}

    h2 = np.asarray(obs.h2.values).real
    u = timefrac.clock_nodes(obs.clock, obs.h2.grid)
    order = 2 if obs.alpha.alpha > 1 else 1

    def divided_difference(values, nodes):
        for _ in range(order):
            values = np.diff(values) / np.diff(nodes)
            nodes = 0.5 * (nodes[1:] + nodes[:-1])
        return float(np.max(np.abs(values)))

    fine = divided_difference(h2, u)
    coarse = divided_difference(h2[::2], u[::2])
    smooth_ok = bool(np.isfinite(fine) and fine <= SMOOTH_RATIO * coarse + 1.0e-8 * np.max(np.abs(h2)))
    report["smoothness"] = {"pass": smooth_ok, "order": order, "divided_difference": fine,
                            "divided_difference_coarse": coarse}

    interior = h2[1:-1]
    scale = np.max(np.abs(h2)) if h2.size else 0.0
    small = np.nonzero(np.abs(interior) < H2_MASK * scale)[0] + 1
    sign_change = np.nonzero(np.sign(interior[1:]) * np.sign(interior[:-1]) < 0)[0] + 1
    bad = sorted(set(small.tolist()) | set(sign_change.tolist()))
    report["h2_nonzero"] = {"pass": not bad, "min_abs_h2": float(np.min(np.abs(interior))),
                            "node": bad[0] if bad else None}

    d = timefrac.rl_derivative(obs.alpha, obs.clock, obs.h1)
    mask, _ = _mask(obs, d.flagged)
    ratio = (np.asarray(d.values)[mask] / h2[mask]).real
    min_ratio = float(np.min(ratio)) if ratio.size else float("nan")
    report["ratio_bound"] = {"pass": bool(ratio.size and min_ratio >= K * (1.0 - rtol)),
                             "min_ratio": min_ratio, "K": float(K)}
    report["all_pass"] = all(v["pass"] is not False for k, v in report.items()
                             if isinstance(v, dict))
    return report

# }}}
