r"""Complexified Clifford algebra :math:`Cl_{0,n}` with a Witt extension.

Generators are ordered :math:`(e_1, \ldots, e_n, e_+, e_-)` with squares
:math:`e_i^2 = -1`, :math:`e_+^2 = +1`, :math:`e_-^2 = -1`, all mutually
anticommuting. A blade is a bit mask over this ordering, so
:math:`Cl_{0,n}` embeds into the extended algebra by mask prefix.

Coefficients are kept in whatever numeric type they are given in (ints and
:class:`fractions.Fraction` give exact arithmetic).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from numbers import Number
from typing import Iterable, Mapping

import numpy as np

from fracdirac.errors import ValidationError


# {{{ blades

def generator_count(n: int) -> int:
    """Number of generators of the Witt-extended algebra over :math:`\\mathbb{R}^n`."""
    return n + 2


def signature(n: int) -> tuple[int, ...]:
    """Squares of the generators :math:`(e_1, \\ldots, e_n, e_+, e_-)`."""
    return (-1,) * n + (1, -1)


def reorder_sign(a: int, b: int) -> int:
    """Sign of the permutation that sorts the concatenation of two ascending
    generator lists (given as masks) into ascending order."""
    a >>= 1
    swaps = 0
    while a:
        swaps += (a & b).bit_count()
        a >>= 1
    return -1 if swaps & 1 else 1


@lru_cache(maxsize=65536)
def blade_product(a: int, b: int, n: int) -> tuple[int, int]:
    """Product of basis blades ``e_a e_b`` as ``(sign, mask)``."""
    sign = reorder_sign(a, b)
    common = a & b
    sig = signature(n)
    i = 0
    while common:
        if common & 1:
            sign *= sig[i]
        common >>= 1
        i += 1
    return sign, a ^ b


def blade_name(mask: int, n: int) -> str:
    """Readable blade name, e.g. ``e1e2``, ``e+`` or ``1``."""
    if mask == 0:
        return "1"
    names = [f"e{i + 1}" for i in range(n)] + ["e+", "e-"]
    return "".join(names[i] for i in range(n + 2) if mask >> i & 1)

# }}}


# {{{ multivectors

@dataclass(frozen=True)
class Multivector:
    """Sparse element of the Witt-extended algebra over :math:`\\mathbb{R}^n`."""

    n: int
    terms: Mapping[int, Number] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError("algebra dimension must be >= 1", field="n")
        limit = 1 << generator_count(self.n)
        clean = {}
        for mask, c in self.terms.items():
            if not 0 <= mask < limit:
                raise ValidationError(f"blade mask {mask} outside the algebra", field="mask")
            if c != 0:
                clean[int(mask)] = c
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    # {{{ constructors

    @classmethod
    def scalar(cls, n: int, value: Number = 1) -> Multivector:
        return cls(n, {0: value})

    @classmethod
    def generator(cls, n: int, index: int) -> Multivector:
        """Generator by 0-based index in ``(e_1, ..., e_n, e_+, e_-)``."""
        if not 0 <= index < generator_count(n):
            raise ValidationError(f"generator index {index} out of range", field="index")
        return cls(n, {1 << index: 1})

    @classmethod
    def e(cls, n: int, k: int) -> Multivector:
        """Spatial generator :math:`e_k`, ``1 <= k <= n``."""
        if not 1 <= k <= n:
            raise ValidationError(f"spatial generator e{k} out of range", field="k")
        return cls.generator(n, k - 1)

    @classmethod
    def e_plus(cls, n: int) -> Multivector:
        return cls.generator(n, n)

    @classmethod
    def e_minus(cls, n: int) -> Multivector:
        return cls.generator(n, n + 1)

    # }}}

    def _check(self, other: Multivector) -> None:
        if self.n != other.n:
            raise ValidationError(
                f"algebra dimension mismatch: {self.n} vs {other.n}", field="n")

    def _coerce(self, other) -> Multivector:
        if isinstance(other, Multivector):
            self._check(other)
            return other
        if isinstance(other, Number):
            return Multivector.scalar(self.n, other)
        return NotImplemented

    def __add__(self, other) -> Multivector:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self.terms)
        for mask, c in other.terms.items():
            terms[mask] = terms.get(mask, 0) + c
        return Multivector(self.n, terms)

    __radd__ = __add__

    def __neg__(self) -> Multivector:
        return Multivector(self.n, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> Multivector:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> Multivector:
        return (-self) + other

    def __mul__(self, other) -> Multivector:
        if isinstance(other, Number):
            return Multivector(self.n, {m: c * other for m, c in self.terms.items()})
        if not isinstance(other, Multivector):
            return NotImplemented
        return geometric_product(self, other)

    def __rmul__(self, other) -> Multivector:
        if isinstance(other, Number):
            return Multivector(self.n, {m: other * c for m, c in self.terms.items()})
        return NotImplemented

    def __eq__(self, other) -> bool:
        if isinstance(other, Number):
            other = Multivector.scalar(self.n, other)
        if not isinstance(other, Multivector):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.n, tuple(self.terms.items())))

    def __getitem__(self, mask: int) -> Number:
        return self.terms.get(mask, 0)

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(f"({c}){blade_name(m, self.n)}" for m, c in self.terms.items())

    def norm(self) -> float:
        """Euclidean norm of the coefficient vector."""
        return float(np.sqrt(sum(abs(c) ** 2 for c in self.terms.values())))


def geometric_product(a: Multivector, b: Multivector) -> Multivector:
    """Bilinear extension of the blade product."""
    if a.n != b.n:
        raise ValidationError(f"algebra dimension mismatch: {a.n} vs {b.n}", field="n")
    terms: dict[int, Number] = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            sign, mask = blade_product(ma, mb, a.n)
            terms[mask] = terms.get(mask, 0) + sign * ca * cb
    return Multivector(a.n, terms)


def witt_pair(n: int) -> tuple[Multivector, Multivector]:
    r"""Nilpotent pair :math:`\mathfrak{f} = (e_+ - e_-)/2`,
    :math:`\mathfrak{f}^+ = (e_+ + e_-)/2`."""
    from fractions import Fraction

    half = Fraction(1, 2)
    ep, em = Multivector.e_plus(n), Multivector.e_minus(n)
    return (ep - em) * half, (ep + em) * half

# }}}


# {{{ fields on periodic lattices

@dataclass(frozen=True)
class Lattice:
    """Uniform periodic lattice :math:`\\prod_k [0, L_k)` with ``shape[k]`` nodes per axis."""

    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self) -> None:
        shape = tuple(int(s) for s in self.shape)
        lengths = tuple(float(x) for x in self.lengths)
        if not shape or len(shape) != len(lengths):
            raise ValidationError("lattice shape and lengths must match", field="lattice")
        if any(s < 1 for s in shape) or any(x <= 0 for x in lengths):
            raise ValidationError("lattice needs positive sizes", field="lattice")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def cube(cls, n: int, nodes: int, length: float = 2.0 * np.pi) -> Lattice:
        return cls((nodes,) * n, (length,) * n)

    @property
    def dim(self) -> int:
        return len(self.shape)

    def axes(self) -> list[np.ndarray]:
        return [np.arange(s) * (x / s) for s, x in zip(self.shape, self.lengths)]

    def coordinates(self) -> list[np.ndarray]:
        """Node coordinates, one array of :attr:`shape` per axis."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers, broadcastable against :attr:`shape`."""
        out = []
        for k, (s, x) in enumerate(zip(self.shape, self.lengths)):
            xi = 2.0 * np.pi * np.fft.fftfreq(s, d=x / s)
            shape = [1] * self.dim
            shape[k] = s
            out.append(xi.reshape(shape))
        return out

    def xi_magnitude(self) -> np.ndarray:
        return np.sqrt(sum(xi**2 for xi in self.wavenumbers()))


@dataclass(frozen=True, eq=False)
class MultivectorField:
    """Multivector values on a :class:`Lattice`, stored per blade.

    ``components[mask]`` is an array of ``lattice.shape`` (possibly with
    leading axes, e.g. time, before the spatial ones).
    """

    lattice: Lattice
    n: int
    components: Mapping[int, np.ndarray]

    def __post_init__(self) -> None:
        if self.n != self.lattice.dim:
            raise ValidationError("field algebra dimension must match the lattice",
                                  field="n")
        limit = 1 << generator_count(self.n)
        comps = {}
        for mask, arr in self.components.items():
            if not 0 <= mask < limit:
                raise ValidationError(f"blade mask {mask} outside the algebra", field="mask")
            arr = np.asarray(arr)
            if arr.shape[arr.ndim - self.n:] != self.lattice.shape:
                raise ValidationError("component shape does not match the lattice",
                                      field="components")
            comps[int(mask)] = arr
        object.__setattr__(self, "components", dict(sorted(comps.items())))

    @classmethod
    def scalar(cls, lattice: Lattice, values: np.ndarray) -> MultivectorField:
        return cls(lattice, lattice.dim, {0: values})

    def left_multiply(self, mv: Multivector) -> MultivectorField:
        """Pointwise product ``mv * field``."""
        comps: dict[int, np.ndarray] = {}
        for ma, ca in mv.terms.items():
            for mb, arr in self.components.items():
                sign, mask = blade_product(ma, mb, self.n)
                term = (sign * ca) * arr
                comps[mask] = comps[mask] + term if mask in comps else term
        return MultivectorField(self.lattice, self.n, comps)

    def __add__(self, other: MultivectorField) -> MultivectorField:
        comps = dict(self.components)
        for m, arr in other.components.items():
            comps[m] = comps[m] + arr if m in comps else arr
        return MultivectorField(self.lattice, self.n, comps)

    def __sub__(self, other: MultivectorField) -> MultivectorField:
        return self + other.scale(-1.0)

    def scale(self, factor) -> MultivectorField:
        return MultivectorField(self.lattice, self.n,
                                {m: factor * arr for m, arr in self.components.items()})

    def pointwise_norm(self) -> np.ndarray:
        """Euclidean norm of the blade coefficients at every node."""
        total = 0.0
        for arr in self.components.values():
            total = total + np.abs(arr) ** 2
        return np.sqrt(total) if self.components else np.zeros(self.lattice.shape)

    def component(self, mask: int) -> np.ndarray:
        if mask in self.components:
            return self.components[mask]
        some = next(iter(self.components.values()), None)
        shape = some.shape if some is not None else self.lattice.shape
        return np.zeros(shape)


def spectral_derivative(values: np.ndarray, lattice: Lattice, axis: int) -> np.ndarray:
    """Derivative along spatial *axis* by discrete Fourier transform."""
    offset = values.ndim - lattice.dim
    ax = offset + axis
    xi = lattice.wavenumbers()[axis].reshape(-1)
    s = lattice.shape[axis]
    if s % 2 == 0:
        # the Nyquist mode has no consistent derivative
        xi = xi.copy()
        xi[s // 2] = 0.0
    shape = [1] * values.ndim
    shape[ax] = s
    spec = np.fft.fft(values, axis=ax) * (1j * xi.reshape(shape))
    out = np.fft.ifft(spec, axis=ax)
    return out.real if np.isrealobj(values) else out


def dirac_apply(f: MultivectorField) -> MultivectorField:
    r"""Euclidean Dirac operator :math:`D_x = \sum_k e_k \partial_{x_k}` with
    spectral differentiation."""
    for s in f.lattice.shape:
        if s < 8:
            raise ValidationError("dirac_apply needs at least 8 nodes per axis",
                                  field="lattice")
    out: MultivectorField | None = None
    for k in range(f.n):
        deriv = MultivectorField(
            f.lattice, f.n,
            {m: spectral_derivative(arr, f.lattice, k) for m, arr in f.components.items()})
        term = deriv.left_multiply(Multivector.e(f.n, k + 1))
        out = term if out is None else out + term
    return out


def central_difference(values: np.ndarray, spacing: float, axis: int) -> np.ndarray:
    """Fourth-order central difference along *axis*; the two boundary
    layers on each side are set to NaN."""
    v = np.moveaxis(np.asarray(values), axis, 0)
    out = np.full(v.shape, np.nan, dtype=np.result_type(v.dtype, float))
    out[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12.0 * spacing)
    return np.moveaxis(out, 0, axis)


def dirac_apply_fd(
    components: Mapping[int, np.ndarray], n: int, spacing: Iterable[float]
) -> dict[int, np.ndarray]:
    r""":math:`D_x` on a non-periodic box by fourth-order central differences.

    *components* maps blade masks to arrays of shape ``(m_1, ..., m_n)``;
    values within two nodes of the box boundary are NaN.
    """
    spacing = tuple(spacing)
    out: dict[int, np.ndarray] = {}
    for k in range(n):
        for mb, arr in components.items():
            sign, mask = blade_product(1 << k, mb, n)
            term = sign * central_difference(arr, spacing[k], k)
            out[mask] = out[mask] + term if mask in out else term
    return out


def monogenic_residual(f: MultivectorField, region: np.ndarray | None = None) -> float:
    """Max-norm of :math:`D_x f` over the nodes in *region* (all by default);
    zero means left-monogenic on the grid."""
    norm = dirac_apply(f).pointwise_norm()
    if region is not None:
        norm = norm[..., region]
    return float(np.max(norm)) if norm.size else 0.0

# }}}
