"""Discrete weights: lattice mass fields on the root cube and on the upper half-space."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate

from .dyadic import AlignedCube, DyadicCube, block_sum, lattice_level, pyramid

DEFAULT_QUANTUM = 2.0 ** -20


def _to_exact(a: np.ndarray) -> np.ndarray:
    out = np.empty(a.shape, dtype=object)
    flat = out.reshape(-1)
    for i, x in enumerate(np.asarray(a).reshape(-1)):
        flat[i] = x if isinstance(x, Fraction) else Fraction(x)
    return out


def _prefix(a: np.ndarray, d: int) -> np.ndarray:
    pad = [(0, 0)] * (a.ndim - d) + [(1, 0)] * d
    if a.dtype == object:
        out = np.empty(tuple(s + p[0] for s, p in zip(a.shape, pad)), dtype=object)
        out[...] = Fraction(0)
        out[(Ellipsis,) + (slice(1, None),) * d] = a
    else:
        out = np.pad(a, pad)
    for ax in range(a.ndim - d, a.ndim):
        out = np.cumsum(out, axis=ax)
    return out


def _box_sum(prefix: np.ndarray, lo: Sequence[int], hi: Sequence[int]):
    d = len(lo)
    total = 0
    for corner in range(1 << d):
        idx, sign = [], 1
        for i in range(d):
            if corner >> i & 1:
                idx.append(lo[i])
                sign = -sign
            else:
                idx.append(hi[i])
        total = total + sign * prefix[(Ellipsis,) + tuple(idx)]
    return total


def _as_cube(Q, L: int) -> AlignedCube:
    if isinstance(Q, AlignedCube):
        if not all(isinstance(a, (int, np.integer)) for a in Q.start) or Q.side < 1:
            raise ValueError(f"cube {Q} is not lattice-aligned")
        return Q
    if isinstance(Q, DyadicCube):
        if Q.level > L or Q.level < 0:
            raise ValueError(f"cube {Q} is not aligned to a level-{L} lattice")
        return Q.cells(L)
    raise TypeError(f"unsupported cube type {type(Q).__name__}")


@dataclass(frozen=True, eq=False)
class WeightField:
    """Nonnegative masses on a ``(2**L,)*d`` lattice over ``origin + [0, side)^d``.

    ``masses`` is float64, or an object array of ``Fraction`` in exact mode.
    """

    masses: np.ndarray
    origin: tuple = None
    side: float | Fraction = 1

    def __post_init__(self):
        m = self.masses
        if m.ndim < 1 or len(set(m.shape)) != 1:
            raise ValueError("masses must be a d-dimensional cube of cells")
        lattice_level(m.shape[0])
        m = np.array(m, dtype=object if m.dtype == object else float)
        object.__setattr__(self, "masses", m)
        if np.any(m < 0):
            raise ValueError("weight masses must be nonnegative")
        if self.origin is None:
            object.__setattr__(self, "origin", (0,) * m.ndim)
        m.setflags(write=False)

    @property
    def d(self) -> int:
        return self.masses.ndim

    @property
    def n(self) -> int:
        return self.masses.shape[0]

    @property
    def L(self) -> int:
        return lattice_level(self.n)

    @property
    def exact(self) -> bool:
        return self.masses.dtype == object

    @property
    def cell_side(self):
        if self.exact:
            return Fraction(self.side) / self.n
        return float(self.side) / self.n

    @property
    def cell_volume(self):
        return self.cell_side ** self.d

    def volume(self, side_cells: int):
        return side_cells ** self.d * self.cell_volume

    def level_volume(self, level: int):
        return self.volume(1 << (self.L - level))

    @cached_property
    def prefix(self) -> np.ndarray:
        return _prefix(self.masses, self.d)

    @cached_property
    def levels(self) -> list[np.ndarray]:
        """Dyadic cube masses, ``levels[l]`` indexed by cube coordinates."""
        return pyramid(self.masses, self.d)

    @cached_property
    def float_levels(self) -> list[np.ndarray]:
        return [a.astype(float) for a in self.levels]

    def averages(self, level: int, exact: bool | None = None) -> np.ndarray:
        use_exact = self.exact if exact is None else exact
        if use_exact:
            return self.levels[level] / self.level_volume(level)
        return self.float_levels[level] / float(self.level_volume(level))

    def measure(self, Q):
        """Mass of ``Q`` inside the root; ``O(2^d)`` prefix-sum lookups."""
        c = _as_cube(Q, self.L)
        lo, hi = c.clip(self.n)
        if any(a >= b for a, b in zip(lo, hi)):
            return Fraction(0) if self.exact else 0.0
        return _box_sum(self.prefix, lo, hi)

    def average(self, Q):
        c = _as_cube(Q, self.L)
        return self.measure(c) / self.volume(c.side)

    def cell_interval(self, lo: Sequence[float], hi: Sequence[float]) -> AlignedCube:
        """Convert a physical cube ``prod [lo_i, hi_i)`` to lattice cells, rejecting non-aligned input."""
        h = self.cell_side
        start, sides = [], set()
        for a, b, o in zip(lo, hi, self.origin):
            s, e = (a - o) / h, (b - o) / h
            if abs(s - round(s)) > 1e-9 or abs(e - round(e)) > 1e-9:
                raise ValueError("cube is not lattice-aligned")
            start.append(int(round(s)))
            sides.add(int(round(e)) - int(round(s)))
        if len(sides) != 1 or min(sides) < 1:
            raise ValueError("not a cube")
        return AlignedCube(tuple(start), sides.pop())

    def cell_centers(self) -> list[np.ndarray]:
        h = float(self.cell_side)
        return [float(o) + h * (np.arange(self.n) + 0.5) for o in self.origin]

    def total(self):
        return self.levels[0].reshape(-1)[0]

    def scaled(self, c) -> "WeightField":
        return WeightField(self.masses * c, self.origin, self.side)

    def as_float(self) -> "WeightField":
        if not self.exact:
            return self
        return WeightField(self.masses.astype(float), self.origin, float(self.side))

    def as_exact(self) -> "WeightField":
        if self.exact:
            return self
        return WeightField(_to_exact(self.masses), self.origin, Fraction(self.side))

    def to_json(self) -> dict:
        return _field_json("weight", self)

    @classmethod
    def from_json(cls, doc: dict) -> "WeightField":
        masses, origin, side = _field_from_json(doc, "weight", extra_axis=0)
        return cls(masses, origin, side)


@dataclass(frozen=True, eq=False)
class HalfSpaceField:
    """Masses on base cells times dyadic height slabs.

    ``masses[..., j]`` is the mass of ``cell x (2^-j-1, 2^-j] * side`` for ``j < L``
    and of ``cell x (0, 2^-L] * side`` for ``j = L``.
    """

    masses: np.ndarray
    origin: tuple = None
    side: float | Fraction = 1

    def __post_init__(self):
        m = self.masses
        d = m.ndim - 1
        n = m.shape[0]
        L = lattice_level(n)
        if d < 1 or m.shape[:-1] != (n,) * d or m.shape[-1] != L + 1:
            raise ValueError("half-space masses must have shape (n,)*d + (L+1,)")
        m = np.array(m, dtype=object if m.dtype == object else float)
        object.__setattr__(self, "masses", m)
        if np.any(m < 0):
            raise ValueError("weight masses must be nonnegative")
        if self.origin is None:
            object.__setattr__(self, "origin", (0,) * d)
        m.setflags(write=False)

    @property
    def d(self) -> int:
        return self.masses.ndim - 1

    @property
    def n(self) -> int:
        return self.masses.shape[0]

    @property
    def L(self) -> int:
        return lattice_level(self.n)

    @property
    def exact(self) -> bool:
        return self.masses.dtype == object

    @property
    def cell_side(self):
        if self.exact:
            return Fraction(self.side) / self.n
        return float(self.side) / self.n

    def box_volume(self, level: int):
        """``|Q~| = |Q| * side(Q)`` for a level-``level`` cube."""
        s = (1 << (self.L - level)) * self.cell_side
        return s ** (self.d + 1)

    @cached_property
    def slab_tails(self) -> np.ndarray:
        """``tails[..., j]`` = mass of slabs ``j..L`` over each cell."""
        return np.flip(np.cumsum(np.flip(self.masses, -1), axis=-1), -1)

    @cached_property
    def box_levels(self) -> list[np.ndarray]:
        """Carleson-box masses ``w(Q~)`` for every dyadic ``Q``, indexed ``[level]``."""
        out = []
        for level in range(self.L + 1):
            out.append(block_sum(self.slab_tails[..., level], 1 << (self.L - level), self.d))
        return out

    @cached_property
    def float_box_levels(self) -> list[np.ndarray]:
        return [a.astype(float) for a in self.box_levels]

    def box_averages(self, level: int) -> np.ndarray:
        return self.float_box_levels[level] / float(self.box_volume(level))

    def min_slab(self, side_cells: int) -> int:
        """First slab lying under a box of the given base side."""
        return self.L - (side_cells.bit_length() - 1)

    def measure_box(self, Q):
        c = _as_cube(Q, self.L)
        j0 = self.min_slab(c.side)
        if j0 > self.L:
            return Fraction(0) if self.exact else 0.0
        return self.slab_tails[c.slices(self.n) + (j0,)].sum()

    def scaled(self, c) -> "HalfSpaceField":
        return HalfSpaceField(self.masses * c, self.origin, self.side)

    def as_float(self) -> "HalfSpaceField":
        if not self.exact:
            return self
        return HalfSpaceField(self.masses.astype(float), self.origin, float(self.side))

    def to_json(self) -> dict:
        return _field_json("halfspace", self)

    @classmethod
    def from_json(cls, doc: dict) -> "HalfSpaceField":
        masses, origin, side = _field_from_json(doc, "halfspace", extra_axis=1)
        return cls(masses, origin, side)


def _field_json(kind: str, f) -> dict:
    flat = f.masses.reshape(-1)
    if f.exact:
        masses = [str(x) for x in flat]
        side = str(Fraction(f.side))
        origin = [str(Fraction(o)) for o in f.origin]
    else:
        masses = [float(x) for x in flat]
        side = float(f.side)
        origin = [float(o) for o in f.origin]
    return {"kind": kind, "dimension": f.d, "level": f.L, "exact": f.exact,
            "root": {"origin": origin, "side": side}, "masses": masses}


def _field_from_json(doc: dict, kind: str, extra_axis: int):
    try:
        if doc.get("kind", kind) != kind:
            raise ValueError(f"expected a {kind} field, got {doc.get('kind')!r}")
        d, L = int(doc["dimension"]), int(doc["level"])
        n = 1 << L
        shape = (n,) * d + ((L + 1,) if extra_axis else ())
        exact = bool(doc.get("exact", False))
        raw = doc["masses"]
        if len(raw) != math.prod(shape):
            raise ValueError(f"expected {math.prod(shape)} masses, got {len(raw)}")
        root_doc = doc.get("root", {})
        conv = Fraction if exact else float
        if exact:
            masses = np.empty(len(raw), dtype=object)
            for i, x in enumerate(raw):
                masses[i] = Fraction(x)
            masses = masses.reshape(shape)
        else:
            masses = np.asarray(raw, dtype=float).reshape(shape)
        origin = tuple(conv(o) for o in root_doc.get("origin", [0] * d))
        side = conv(root_doc.get("side", 1))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed field document: {exc}") from exc
    return masses, origin, side


def save_field(f, path: str | Path) -> None:
    Path(path).write_text(json.dumps(f.to_json()), encoding="utf-8")


def load_field(path: str | Path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("kind") == "halfspace":
        return HalfSpaceField.from_json(doc)
    return WeightField.from_json(doc)


# --- generators ----------------------------------------------------------------

def uniform_field(d: int, L: int, density=1, origin=None, side=1, exact: bool = False) -> WeightField:
    n = 1 << L
    if exact:
        vol = (Fraction(side) / n) ** d
        masses = np.empty((n,) * d, dtype=object)
        masses[...] = Fraction(density) * vol
    else:
        masses = np.full((n,) * d, float(density) * (float(side) / n) ** d)
    return WeightField(masses, origin, Fraction(side) if exact else side)


def uniform_halfspace(d: int, L: int, density=1, origin=None, side=1) -> HalfSpaceField:
    """Density ``density`` with respect to ``dx dt`` on the discretized half-space."""
    n = 1 << L
    h = float(side) / n
    heights = np.array([float(side) * 2.0 ** (-j - 1) for j in range(L)] + [float(side) * 2.0 ** -L])
    masses = np.broadcast_to(float(density) * h ** d * heights, (n,) * d + (L + 1,)).copy()
    return HalfSpaceField(masses, origin, side)


def _radial_antiderivative(u: np.ndarray, e: float) -> np.ndarray:
    return np.sign(u) * np.abs(u) ** (e + 1) / (e + 1)


def _corner_rect_integral(a: float, b: float, e: float) -> float:
    """Integral of ``|x|^e`` over ``[0, a] x [0, b]`` (singularity at the corner)."""
    if a <= 0 or b <= 0:
        return 0.0
    theta0 = math.atan2(b, a)
    k = e + 2

    def lower(t):
        return (a / math.cos(t)) ** k / k

    def upper(t):
        return (b / math.sin(t)) ** k / k

    i1, _ = integrate.quad(lower, 0.0, theta0, epsabs=0, epsrel=1e-12)
    i2, _ = integrate.quad(upper, theta0, math.pi / 2, epsabs=0, epsrel=1e-12)
    return i1 + i2


def _gauss_tensor(xlo, xhi, ylo, yhi, e, order):
    nodes, wts = np.polynomial.legendre.leggauss(order)
    hx, hy = (xhi - xlo) / 2, (yhi - ylo) / 2
    mx, my = (xhi + xlo) / 2, (yhi + ylo) / 2
    X = mx[:, None, None] + hx[:, None, None] * nodes[None, :, None]
    Y = my[:, None, None] + hy[:, None, None] * nodes[None, None, :]
    vals = (X * X + Y * Y) ** (e / 2)
    return hx * hy * np.einsum("kij,i,j->k", vals, wts, wts)


def power_weight(d: int, exponent: float, L: int, center=None, origin=None, side=2.0,
                 rtol: float = 1e-6) -> WeightField:
    """Cell masses of ``|x - center|^exponent`` on ``origin + [0, side)^d``.

    Defaults to the centered root ``[-1, 1)^d`` with the singularity at 0.
    """
    if exponent <= -d:
        raise ValueError(f"non-integrable: exponent {exponent} <= -{d}")
    if origin is None:
        origin = (-side / 2,) * d
    if center is None:
        center = (0.0,) * d
    n = 1 << L
    h = side / n
    edges = [o + h * np.arange(n + 1) for o in origin]
    if d == 1:
        u = edges[0] - center[0]
        masses = np.diff(_radial_antiderivative(u, exponent))
        return WeightField(masses, tuple(origin), side)
    if d != 2:
        raise NotImplementedError("power weights are implemented for d = 1, 2")

    xe, ye = edges[0] - center[0], edges[1] - center[1]
    XL, YL = np.meshgrid(xe[:-1], ye[:-1], indexing="ij")
    XH, YH = np.meshgrid(xe[1:], ye[1:], indexing="ij")
    touching = (XL <= 0) & (XH >= 0) & (YL <= 0) & (YH >= 0)
    masses = np.zeros((n, n))

    smooth = ~touching
    xlo, xhi, ylo, yhi = XL[smooth], XH[smooth], YL[smooth], YH[smooth]
    order = 4
    prev = _gauss_tensor(xlo, xhi, ylo, yhi, exponent, order)
    while True:
        order *= 2
        cur = _gauss_tensor(xlo, xhi, ylo, yhi, exponent, order)
        rel = np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300)
        prev = cur
        if rel.max() < rtol or order >= 256:
            break
    masses[smooth] = prev

    for i, j in zip(*np.nonzero(touching)):
        total = 0.0
        for a in (-XL[i, j], XH[i, j]):
            for b in (-YL[i, j], YH[i, j]):
                total += _corner_rect_integral(a, b, exponent)
        masses[i, j] = total
    return WeightField(masses, tuple(origin), side)


@dataclass(frozen=True)
class Lognormal:
    mu: float = 0.0
    s: float = 1.0


@dataclass(frozen=True)
class SparseAtoms:
    count: int = 1
    amplitude: float = 1.0


def _quantize(x: np.ndarray, quantum: float | None) -> np.ndarray:
    if quantum is None:
        return x
    return np.round(x / quantum) * quantum


def _draw(model, shape, rng) -> np.ndarray:
    if isinstance(model, Lognormal):
        return rng.lognormal(model.mu, model.s, size=shape)
    if isinstance(model, SparseAtoms):
        size = math.prod(shape)
        if not 0 <= model.count <= size:
            raise ValueError("atom count exceeds lattice size")
        out = np.zeros(size)
        out[rng.choice(size, size=model.count, replace=False)] = model.amplitude
        return out.reshape(shape)
    raise TypeError(f"unknown field model {model!r}")


def random_field(d: int, L: int, model, seed: int, exact: bool = False,
                 quantum: float | None = None, origin=None, side=1) -> WeightField:
    """Seeded random weight.  ``quantum`` rounds masses to a dyadic grid so that lattice sums are exact."""
    rng = np.random.default_rng(seed)
    masses = _draw(model, (1 << L,) * d, rng)
    if exact:
        q = DEFAULT_QUANTUM if quantum is None else quantum
        masses = _to_exact(_quantize(masses, q))
        return WeightField(masses, origin, Fraction(side))
    return WeightField(_quantize(masses, quantum), origin, side)


def random_halfspace(d: int, L: int, model, seed: int, quantum: float | None = None,
                     origin=None, side=1) -> HalfSpaceField:
    rng = np.random.default_rng(seed)
    masses = _draw(model, (1 << L,) * d + (L + 1,), rng)
    return HalfSpaceField(_quantize(masses, quantum), origin, side)


def lp_norm(f: np.ndarray, fld: WeightField, p: float):
    """``(sum_c f(c)^p mass(c))^(1/p)``; leading axes of ``f`` are treated as a batch."""
    if p < 1:
        raise ValueError("p must be >= 1")
    f = np.asarray(f)
    axes = tuple(range(f.ndim - fld.d, f.ndim))
    total = (f ** p * fld.masses).sum(axis=axes)
    return total ** (1.0 / p)
