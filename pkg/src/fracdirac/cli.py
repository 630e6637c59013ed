"""Command-line front end.

Subcommands: ``solve-forward``, ``solve-inverse``, ``eval-ml`` and
``selfcheck``. Problems are JSON documents with a ``"schema"`` field;
results are CSV tables plus one JSON run manifest per invocation.

Exit status: 0 on success, 1 for invalid input, 2 when a series or
iteration does not converge, 3 when self-checks fail. Errors are reported
on stderr as one line ``error: code=... field=... message=...``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

SCHEMA = "fracdirac/problem-v1"
EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_CHECK = 0, 1, 2, 3
CSV_FORMAT = "%.17g"

_TOP_FIELDS = {
    "schema", "description", "betas", "lambda", "coeffs", "clock", "space",
    "initial_data", "source", "nu", "dirac", "grid", "tol", "method", "inverse",
    "skip_convergence_check",
}
_INVERSE_FIELDS = {"w1", "q", "window", "support", "smooth", "K"}


class InputError(Exception):
    """Malformed problem document (exit status 1)."""

    def __init__(self, message: str, field: str | None = None) -> None:
        super().__init__(message)
        self.field = field


# {{{ problem documents

def _require(doc: dict, key: str, where: str = "") -> Any:
    if key not in doc:
        raise InputError(f"missing field '{key}'", field=f"{where}{key}")
    return doc[key]


def _check_fields(doc: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise InputError(f"unknown field '{unknown[0]}'", field=f"{where}{unknown[0]}")


def _coefficient(doc: Any, index: int, t_start: float):
    from fracdirac.solver import Coefficient

    where = f"coeffs[{index}]"
    if isinstance(doc, (int, float)):
        return Coefficient.constant(doc)
    if not isinstance(doc, dict):
        raise InputError("coefficient must be a number or an object", field=where)
    kind = _require(doc, "kind", where + ".")
    if kind == "constant":
        _check_fields(doc, {"kind", "value"}, where + ".")
        return Coefficient.constant(float(_require(doc, "value", where + ".")))
    if kind == "power":
        _check_fields(doc, {"kind", "scale", "exponent"}, where + ".")
        return Coefficient.power(float(doc.get("scale", 1.0)),
                                 float(_require(doc, "exponent", where + ".")), t_start)
    if kind == "polynomial":
        _check_fields(doc, {"kind", "coefficients"}, where + ".")
        return Coefficient.polynomial(_require(doc, "coefficients", where + "."))
    raise InputError(f"unknown coefficient kind '{kind}'", field=where + ".kind")


def _read_csv_columns(path: Path, columns: int) -> list:
    import numpy as np

    try:
        table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read CSV '{path}': {exc}", field="csv") from exc
    if table.shape[1] < columns:
        raise InputError(f"CSV '{path}' needs {columns} columns", field="csv")
    return [table[:, k] for k in range(columns)]


def _clock(doc: Any, base: Path):
    from fracdirac import timefrac

    if not isinstance(doc, dict):
        raise InputError("clock must be an object", field="clock")
    _check_fields(doc, {"name", "t_start", "t_end", "csv"}, "clock.")
    if "csv" in doc:
        t, phi, dphi = _read_csv_columns(base / doc["csv"], 3)
        return timefrac.tabulated_clock(t, phi, dphi)
    name = _require(doc, "name", "clock.")
    return timefrac.clock_from_name(name, float(doc.get("t_start", 0.0)),
                                    float(_require(doc, "t_end", "clock.")))


def _lattice_profile(spec: Any, lattice, base: Path, where: str):
    import numpy as np

    coords = lattice.coordinates()
    if isinstance(spec, list):
        arr = np.asarray(spec, dtype=float)
        if arr.shape != lattice.shape:
            raise InputError("inline data does not match the lattice", field=where)
        return arr
    if isinstance(spec, dict):
        _check_fields(spec, {"csv", "profile", "window"}, where + ".")
        if "csv" in spec:
            (col,) = _read_csv_columns(base / spec["csv"], 1)
            if col.size != int(np.prod(lattice.shape)):
                raise InputError("CSV data does not match the lattice", field=where)
            return col.reshape(lattice.shape)
        values = _lattice_profile(_require(spec, "profile", where + "."), lattice, base, where)
        if "window" in spec:
            values = values * _window(spec["window"], lattice, where + ".window")
        return values
    if not isinstance(spec, str):
        raise InputError("initial datum must be a name, list or object", field=where)
    name, _, arg = spec.partition(":")
    if name == "zero":
        return np.zeros(lattice.shape)
    if name == "sine":
        k = float(arg or 1.0)
        return np.sin(k * coords[0])
    if name == "gaussian":
        width = float(arg or 1.0)
        center = [0.5 * length for length in lattice.lengths]
        r2 = sum((x - c) ** 2 for x, c in zip(coords, center))
        return np.exp(-r2 / (2.0 * width**2))
    raise InputError(f"unknown profile '{spec}'", field=where)


def _window(spec: Any, lattice, where: str):
    """Smooth cutoff equal to 1 on ``[a + width, b - width]`` along every
    axis and 0 outside ``[a, b]``."""
    if not (isinstance(spec, list) and len(spec) == 3):
        raise InputError("window is [start, end, width]", field=where)
    from fracdirac.inverse import window

    a, b, width = (float(v) for v in spec)
    if not (width > 0 and b - a > 2 * width):
        raise InputError("window needs end - start > 2 width > 0", field=where)
    out = 1.0
    for x in lattice.coordinates():
        out = out * window(x, a, b, width)
    return out


def _radial_profile(spec: Any, where: str):
    import numpy as np

    if not isinstance(spec, str):
        raise InputError("radial data must be a named profile", field=where)
    name, _, arg = spec.partition(":")
    if name == "gaussian":
        width = float(arg or 1.0)
        return lambda r: np.exp(-np.asarray(r) ** 2 / (2.0 * width**2))
    if name == "zero":
        return lambda r: np.zeros_like(np.asarray(r, dtype=float))
    raise InputError(f"unknown radial profile '{spec}'", field=where)


def _mode_amplitude(spec: Any, where: str) -> complex:
    if isinstance(spec, (int, float)):
        return complex(spec)
    if isinstance(spec, list) and len(spec) == 2:
        return complex(float(spec[0]), float(spec[1]))
    if spec == "zero":
        return 0.0j
    raise InputError("single-mode data are numbers or [re, im] pairs", field=where)


def _source(spec: Any, mode: str):
    import numpy as np

    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise InputError("source must be an object", field="source")
    _check_fields(spec, {"kind", "value", "omega"}, "source.")
    kind = _require(spec, "kind", "source.")
    value = float(spec.get("value", 1.0))
    if kind == "constant":
        def time_part(t):
            return np.full_like(np.asarray(t, dtype=float), value)
    elif kind == "cosine":
        omega = float(_require(spec, "omega", "source."))

        def time_part(t):
            return value * np.cos(omega * np.asarray(t, dtype=float))
    else:
        raise InputError(f"unknown source kind '{kind}'", field="source.kind")
    if mode == "single-mode":
        return time_part

    def lattice_source(coords, t):
        shape = (len(t),) + coords[0].shape
        return np.broadcast_to(time_part(t).reshape((-1,) + (1,) * coords[0].ndim), shape)
    return lattice_source


@dataclass
class LoadedProblem:
    problem: Any
    doc: dict
    digest: str
    config: Any
    dirac: bool = False
    inverse: dict | None = None
    extras: dict = field(default_factory=dict)


def load_problem(path: Path, *, grid: int | None = None, tol: float | None = None,
                 modes: int | None = None) -> LoadedProblem:
    """Parse and validate a problem document."""
    import numpy as np

    from fracdirac import solver
    from fracdirac.clifford import Lattice

    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read spec: {exc}", field="spec") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InputError(f"spec is not valid JSON: {exc.msg}", field="spec") from exc
    if not isinstance(doc, dict):
        raise InputError("spec must be a JSON object", field="spec")
    if doc.get("schema") != SCHEMA:
        raise InputError(f"schema must be '{SCHEMA}'", field="schema")
    _check_fields(doc, _TOP_FIELDS, "")
    base = Path(path).parent

    clock = _clock(_require(doc, "clock"), base)
    betas = _require(doc, "betas")
    if not isinstance(betas, list) or not betas:
        raise InputError("betas must be a non-empty list", field="betas")
    coeffs = tuple(_coefficient(c, i, clock.t_start)
                   for i, c in enumerate(_require(doc, "coeffs")))

    space = _require(doc, "space")
    if not isinstance(space, dict):
        raise InputError("space must be an object", field="space")
    mode = _require(space, "mode", "space.")
    kwargs: dict[str, Any] = {}
    data_specs = _require(doc, "initial_data")
    if not isinstance(data_specs, list):
        raise InputError("initial_data must be a list", field="initial_data")

    if mode == "spectral-lattice":
        _check_fields(space, {"mode", "nodes", "lengths"}, "space.")
        nodes = _require(space, "nodes", "space.")
        lengths = space.get("lengths", [2.0 * np.pi] * len(nodes))
        lattice = Lattice(tuple(nodes), tuple(lengths))
        kwargs["lattice"] = lattice
        data = [_lattice_profile(d, lattice, base, f"initial_data[{j}]")
                for j, d in enumerate(data_specs)]
        if modes is not None:
            data = [_band_limit(w, lattice, modes) for w in data]
    elif mode == "single-mode":
        _check_fields(space, {"mode", "xi"}, "space.")
        kwargs["xi"] = tuple(float(x) for x in np.atleast_1d(_require(space, "xi", "space.")))
        data = [_mode_amplitude(d, f"initial_data[{j}]") for j, d in enumerate(data_specs)]
    elif mode == "radial-hankel":
        _check_fields(space, {"mode", "dim", "radii"}, "space.")
        kwargs["dim"] = int(_require(space, "dim", "space."))
        kwargs["radii"] = np.asarray(_require(space, "radii", "space."), dtype=float)
        data = [_radial_profile(d, f"initial_data[{j}]") for j, d in enumerate(data_specs)]
    else:
        raise InputError(f"unknown space mode '{mode}'", field="space.mode")

    try:
        problem = solver.CauchyProblem(
            betas=tuple(float(b) for b in betas), lam=float(doc.get("lambda", 1.0)),
            coeffs=coeffs, clock=clock, initial_data=tuple(data), space_mode=mode,
            source=_source(doc.get("source"), mode), nu=float(doc.get("nu", 1.0)),
            **kwargs)
        config = solver.KernelSeriesConfig(
            abs_tol=float(tol if tol is not None else doc.get("tol", 1.0e-10)),
            n_time=int(grid if grid is not None else doc.get("grid", 2048)),
            method=doc.get("method", "auto"),
            require_convergence_check=not bool(doc.get("skip_convergence_check", False)))
    except (TypeError, ValueError) as exc:
        if hasattr(exc, "field"):
            raise
        raise InputError(str(exc), field="spec") from exc

    inverse = doc.get("inverse")
    if inverse is not None:
        if not isinstance(inverse, dict):
            raise InputError("inverse must be an object", field="inverse")
        _check_fields(inverse, _INVERSE_FIELDS, "inverse.")
        if mode != "spectral-lattice":
            raise InputError("inverse runs need a lattice", field="space.mode")

    return LoadedProblem(problem, doc, hashlib.sha256(raw).hexdigest(), config,
                         dirac=bool(doc.get("dirac", False)), inverse=inverse)


def _band_limit(values, lattice, modes: int):
    import numpy as np

    spec = np.fft.fftn(values)
    for k, s in enumerate(lattice.shape):
        idx = np.abs(np.fft.fftfreq(s, d=1.0 / s))
        shape = [1] * lattice.dim
        shape[k] = s
        spec = spec * (idx <= modes).reshape(shape)
    return np.fft.ifftn(spec).real

# }}}


# {{{ output

def _write_csv(path: Path, header: list[str], columns: list) -> None:
    import numpy as np

    table = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
    with open(path, "w", newline="\n") as outf:
        outf.write(",".join(header) + "\n")
        np.savetxt(outf, table, fmt=CSV_FORMAT, delimiter=",", newline="\n")


def _jsonable(obj: Any) -> Any:
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def _write_manifest(out: Path, manifest: dict) -> None:
    with open(out / "manifest.json", "w", newline="\n") as outf:
        json.dump(_jsonable(manifest), outf, indent=2, sort_keys=True)
        outf.write("\n")


def _solution_columns(loaded: LoadedProblem, result) -> tuple[list[str], list]:
    import numpy as np

    problem = loaded.problem
    t = result.grid.nodes
    if problem.space_mode == "single-mode":
        values = np.asarray(result.values)
        return ["t", "re", "im"], [t, values.real, values.imag]
    if problem.space_mode == "radial-hankel":
        radii = np.asarray(result.space)
        tt, rr = np.meshgrid(t, radii, indexing="ij")
        return ["t", "r", "value"], [tt, rr, result.values]

    lattice = problem.lattice
    grids = np.meshgrid(t, *lattice.axes(), indexing="ij")
    header = ["t"] + [f"x{k + 1}" for k in range(lattice.dim)]
    columns = list(grids)
    values = np.asarray(result.values)
    header += ["re", "im"]
    columns += [values.real, np.imag(values) if np.iscomplexobj(values) else np.zeros_like(values)]
    return header, columns


def _dirac_columns(loaded: LoadedProblem, field_) -> tuple[list[str], list]:
    import numpy as np

    problem = loaded.problem
    t = field_.grid.nodes
    if problem.space_mode == "single-mode":
        header, columns = ["t"], [t]
    else:
        lattice = problem.lattice
        header = ["t"] + [f"x{k + 1}" for k in range(lattice.dim)]
        columns = list(np.meshgrid(t, *lattice.axes(), indexing="ij"))
    named = [(f"e{k + 1}", c) for k, c in enumerate(field_.witt["spatial"])]
    named += [("f", field_.witt["f"]), ("fplus", field_.witt["f_plus"])]
    for name, arr in named:
        header += [f"{name}_re", f"{name}_im"]
        columns += [np.real(arr), np.imag(arr)]
    return header, columns

# }}}


# {{{ commands

def cmd_solve_forward(args: argparse.Namespace) -> dict:
    from fracdirac import solver

    loaded = load_problem(Path(args.spec), grid=args.grid, tol=args.tol, modes=args.modes)
    if loaded.inverse is not None:
        raise InputError("spec describes an inverse run; use solve-inverse", field="inverse")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    problem, cfg = loaded.problem, loaded.config
    check = solver.convergence_check(problem)
    if loaded.dirac:
        result = solver.solve_dirac(problem, cfg)
        header, columns = _dirac_columns(loaded, result)
    else:
        result = solver.solve_scalar(problem, cfg)
        header, columns = _solution_columns(loaded, result)
    _write_csv(out / "solution.csv", header, columns)
    report = {k: v for k, v in result.report.items() if k != "convergence_check"}
    residual = None
    if not loaded.dirac and result.modes is not None:
        residual = solver.field_residual(problem, result)
    return {
        "input_sha256": loaded.digest, "config": _config_echo(loaded),
        "convergence": {"check": check, "series": report},
        "mode_residual": residual,
        "timing": {"solve_seconds": time.perf_counter() - start},
        "outputs": ["solution.csv"],
    }


def _config_echo(loaded: LoadedProblem) -> dict:
    cfg = loaded.config
    return {"spec": loaded.doc, "grid": cfg.n_time, "tol": cfg.abs_tol,
            "max_picard_terms": cfg.max_picard_terms, "method": cfg.method,
            "require_convergence_check": cfg.require_convergence_check}


def inverse_inputs(loaded: LoadedProblem, base: Path):
    """Datum ``w1``, support mask and observation node of an inverse spec."""
    import numpy as np

    inv = loaded.inverse
    lattice = loaded.problem.lattice
    w1 = _lattice_profile(_require(inv, "w1", "inverse."), lattice, base, "inverse.w1")
    if "window" in inv:
        w1 = w1 * _window(inv["window"], lattice, "inverse.window")
    support = None
    if "support" in inv:
        a, b = (float(v) for v in inv["support"])
        support = np.ones(lattice.shape, dtype=bool)
        for x in lattice.coordinates():
            support &= (x >= a) & (x <= b)
    q = tuple(int(i) for i in _require(inv, "q", "inverse."))
    return w1, support, q


def cmd_solve_inverse(args: argparse.Namespace) -> dict:
    import numpy as np

    from fracdirac import inverse, timefrac

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    if args.spec:
        loaded = load_problem(Path(args.spec), grid=args.grid, tol=args.tol, modes=args.modes)
        inv = loaded.inverse
        if inv is None:
            raise InputError("spec has no 'inverse' section", field="inverse")
        problem = loaded.problem
        w1, support, q = inverse_inputs(loaded, Path(args.spec).parent)
        obs = inverse.synthesize_observations(problem, w1, q, support=support,
                                              cfg=loaded.config)
        smooth = inv.get("smooth")
        result = inverse.recover_theta(obs, smooth=smooth)
        K = float(inv.get("K", max(result.diagnostics["min_ratio"], 1e-300)))
        hyp = inverse.validate_hypotheses(obs, K, problem.nu, problem)
        digest, config = loaded.digest, _config_echo(loaded)
    else:
        if not (args.h1 and args.h2 and args.alpha is not None):
            raise InputError("trace mode needs --h1, --h2 and --alpha", field="h1")
        t1, h1 = _read_csv_columns(Path(args.h1), 2)
        t2, h2 = _read_csv_columns(Path(args.h2), 2)
        if t1.shape != t2.shape or not np.allclose(t1, t2, rtol=0, atol=1e-14):
            raise InputError("h1 and h2 must share one time column", field="h2")
        grid = timefrac.TimeGrid(t1)
        clock = timefrac.clock_from_name(args.clock, float(t1[0]), float(t1[-1]))
        obs = inverse.ObservationPair((0,), timefrac.TimeSeries(grid, h1),
                                      timefrac.TimeSeries(grid, h2), args.alpha, clock)
        result = inverse.recover_theta(obs, smooth=args.smooth)
        K = float(args.K if args.K is not None else max(result.diagnostics["min_ratio"], 1e-300))
        hyp = inverse.validate_hypotheses(obs, K)
        digest = hashlib.sha256(Path(args.h1).read_bytes() + Path(args.h2).read_bytes()).hexdigest()
        config = {"h1": args.h1, "h2": args.h2, "alpha": args.alpha, "clock": args.clock,
                  "smooth": args.smooth}

    t = result.theta.grid.nodes
    _write_csv(out / "theta.csv", ["t", "theta", "mask"],
               [t, np.nan_to_num(result.theta.values, nan=0.0), result.mask.astype(float)])
    with open(out / "diagnostics.json", "w", newline="\n") as outf:
        json.dump(_jsonable({"recovery": result.diagnostics, "hypotheses": hyp}), outf,
                  indent=2, sort_keys=True)
        outf.write("\n")
    warnings = len(result.diagnostics["h2_small_nodes"])
    return {
        "input_sha256": digest, "config": config,
        "convergence": {"hypotheses": hyp},
        "warnings": warnings,
        "timing": {"solve_seconds": time.perf_counter() - start},
        "outputs": ["theta.csv", "diagnostics.json"],
    }


def _parse_params(text: str) -> dict[str, list[float]]:
    params: dict[str, list[float]] = {}
    for item in filter(None, (s.strip() for s in text.split(";"))):
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"parameter '{item}' is not key=value", field="params")
        try:
            params[key.strip()] = [float(v) for v in value.split(",")]
        except ValueError as exc:
            raise InputError(f"parameter '{key}' is not numeric", field="params") from exc
    return params


def cmd_eval(args: argparse.Namespace) -> dict:
    import numpy as np

    from fracdirac import specfun

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = _parse_params(args.params or "")
    try:
        start, stop, num = args.z.split(":")
        z = np.linspace(float(start), float(stop), int(num))
    except ValueError as exc:
        raise InputError("--z must be START:STOP:NUM", field="z") from exc

    def one(key: str, default: float | None = None) -> float:
        if key not in params:
            if default is None:
                raise InputError(f"missing parameter '{key}'", field="params")
            return default
        return params[key][0]

    name = args.function
    errors = None
    if name == "ml":
        res = specfun.ml_two_param(one("alpha"), one("beta", 1.0), z)
        values, errors = res.value, res.error
    elif name == "ml-multi":
        a = params.get("a")
        if not a:
            raise InputError("missing parameter 'a'", field="params")
        weights = params.get("w", [1.0] * len(a))
        if len(weights) != len(a):
            raise InputError("weights 'w' must match 'a'", field="params")
        res = specfun.ml_multivariate(specfun.MultiMLParams(tuple(a), one("b")),
                                      [wk * z for wk in weights])
        values, errors = res.value, res.error
    elif name == "kilbas-saigo":
        res = specfun.kilbas_saigo(specfun.KilbasSaigoParams(
            one("alpha"), one("beta"), one("gamma"), one("lam")), z)
        values, errors = res.value, res.error
    elif name == "bessel":
        values, errors = specfun.bessel_j(one("nu"), z), 0.0
    elif name == "gamma":
        values, errors = specfun.gamma(z), 0.0
    else:
        raise InputError(f"unknown function '{name}'", field="function")

    values = np.asarray(values)
    _write_csv(out / "table.csv", ["z", "re", "im", "error_estimate"],
               [z, values.real, np.imag(values), np.full(z.shape, float(errors))])
    return {"config": {"function": name, "params": params, "z": args.z},
            "outputs": ["table.csv"]}


def cmd_selfcheck(args: argparse.Namespace) -> dict:
    from fracdirac import selfcheck

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    summary = selfcheck.run(args.level)
    with open(out / "selfcheck.json", "w", newline="\n") as outf:
        json.dump(_jsonable(summary), outf, indent=2, sort_keys=True)
        outf.write("\n")
    failed = [name for name, suite in summary["suites"].items() if not suite["pass"]]
    for name, suite in summary["suites"].items():
        print(f"{name}: {'PASS' if suite['pass'] else 'FAIL'}")
    manifest = {"config": {"level": args.level},
                "timing": {"seconds": time.perf_counter() - start},
                "outputs": ["selfcheck.json"], "suites": summary["suites"],
                "failed": failed}
    if failed:
        manifest["exit"] = EXIT_CHECK
    return manifest

# }}}


# {{{ entry point

def _inject_fault(name: str) -> None:
    """Corrupt a building block to exercise failure isolation."""
    from fracdirac import specfun, timefrac

    if name != "gamma":
        raise InputError(f"unknown fault '{name}'", field="inject-fault")
    clean = specfun.gamma

    def corrupted(x):
        return clean(x) * 1.01

    specfun.gamma = corrupted
    timefrac._trapezoid_weights.cache_clear()
    timefrac._corrected_integral_matrix.cache_clear()


class _Parser(argparse.ArgumentParser):
    """Usage errors follow the one-line error format with exit status 1."""

    def error(self, message: str):
        sys.exit(_fail("BAD_USAGE", "argv", message, EXIT_INPUT))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fracdirac",
        description="Space-time fractional Cauchy problems with Dirac-type operators.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=0,
                        help="BLAS/OpenMP threads (0 = library default)")
    common.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)

    solve = argparse.ArgumentParser(add_help=False)
    solve.add_argument("--tol", type=float, default=None, help="Picard tolerance")
    solve.add_argument("--grid", type=int, default=None, help="number of time cells N")
    solve.add_argument("--modes", type=int, default=None,
                       help="keep lattice modes with |index| <= M per axis")

    sub = parser.add_subparsers(dest="command", required=True)
    fwd = sub.add_parser("solve-forward", parents=[common, solve],
                         help="solve a forward problem")
    fwd.add_argument("--spec", required=True, help="problem JSON")

    inv = sub.add_parser("solve-inverse", parents=[common, solve],
                         help="recover a time coefficient")
    inv.add_argument("--spec", default=None, help="problem JSON with an 'inverse' section")
    inv.add_argument("--h1", default=None, help="CSV trace (t, h1)")
    inv.add_argument("--h2", default=None, help="CSV trace (t, h2)")
    inv.add_argument("--alpha", type=float, default=None, help="order of the equation")
    inv.add_argument("--clock", default="identity", help="clock name for trace input")
    inv.add_argument("--smooth", type=int, default=None, help="smoothing window (odd)")
    inv.add_argument("--K", type=float, default=None, help="lower bound for the ratio")

    ev = sub.add_parser("eval-ml", parents=[common], help="tabulate special functions")
    ev.add_argument("function", choices=["ml", "ml-multi", "kilbas-saigo", "bessel", "gamma"])
    ev.add_argument("--params", default="",
                    help="'key=v[,v...];...' e.g. 'alpha=0.5;beta=1'")
    ev.add_argument("--z", default="-1:1:21",
                    help="START:STOP:NUM (write --z=-2:0:5 for a negative start)")

    chk = sub.add_parser("selfcheck", parents=[common], help="run invariant suites")
    chk.add_argument("--level", choices=["fast", "full"], default="fast")
    return parser


def _fail(code: str, field: str | None, message: str, status: int) -> int:
    line = " ".join(str(message).split())
    print(f"error: code={code} field={field or '-'} message={line}", file=sys.stderr)
    return status


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 0:
        return _fail("BAD_INPUT", "threads", "threads must be >= 0", EXIT_INPUT)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from fracdirac.errors import ConvergenceError, FracDiracError, PoleError

    commands = {"solve-forward": cmd_solve_forward, "solve-inverse": cmd_solve_inverse,
                "eval-ml": cmd_eval, "selfcheck": cmd_selfcheck}
    start = time.perf_counter()
    try:
        if args.inject_fault:
            _inject_fault(args.inject_fault)
        manifest = commands[args.command](args)
    except InputError as exc:
        return _fail("BAD_INPUT", exc.field, str(exc), EXIT_INPUT)
    except ConvergenceError as exc:
        _write_failure(args, exc)
        return _fail(exc.code, "convergence", str(exc), EXIT_CONVERGENCE)
    except (PoleError, FracDiracError) as exc:
        return _fail(exc.code, getattr(exc, "field", None), str(exc), EXIT_INPUT)

    status = manifest.pop("exit", EXIT_OK)
    manifest = {"command": args.command, **manifest}
    manifest.setdefault("timing", {})["wall_seconds"] = time.perf_counter() - start
    manifest["threads"] = args.threads
    _write_manifest(Path(args.out), manifest)
    if status == EXIT_CHECK:
        return _fail("CHECK_FAILED", "selfcheck",
                     "failing suites: " + ", ".join(manifest["failed"]), status)
    return status


def _write_failure(args: argparse.Namespace, exc) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, {"command": args.command, "error": exc.code, "message": str(exc),
                          "convergence": {"report": exc.report}})


if __name__ == "__main__":
    sys.exit(main())

# }}}
