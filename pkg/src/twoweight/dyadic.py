"""Dyadic cubes, shifted grids, aligned cubes and Carleson boxes on a finite lattice.

All geometry is integer arithmetic in units of finest-lattice cells.  A lattice
of level ``L`` has ``n = 2**L`` cells per side of the root cube; a dyadic cube
of level ``l`` has side ``2**(L - l)`` cells.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


class ResolutionError(ValueError):
    """Raised when a cube operation leaves the lattice (below a cell or above the root)."""


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    coords: tuple[int, ...]
    grid_id: int = 0

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def side_cells(self, L: int) -> int:
        return 1 << (L - self.level)

    def cells(self, L: int, shift: Sequence[int] | None = None) -> "AlignedCube":
        """Cell-unit footprint of the cube (may overhang the root for shifted grids)."""
        s = self.side_cells(L)
        if shift is None:
            shift = (0,) * self.dimension
        start = tuple(off + c * s for off, c in zip(shift, self.coords))
        return AlignedCube(start, s)

    def side_length(self, root_side=1) -> float:
        return root_side / (1 << self.level)

    def volume(self, root_side=1) -> float:
        return self.side_length(root_side) ** self.dimension

    def contains(self, other: "DyadicCube") -> bool:
        if other.level < self.level or other.grid_id != self.grid_id:
            return False
        shift = other.level - self.level
        return all((c >> shift) == s for c, s in zip(other.coords, self.coords))

    def to_json(self) -> dict:
        return {"level": self.level, "coords": list(self.coords)}


@dataclass(frozen=True)
class AlignedCube:
    """Axis-parallel cube with integer start corner and side, both in cells."""

    start: tuple[int, ...]
    side: int

    @property
    def dimension(self) -> int:
        return len(self.start)

    @property
    def stop(self) -> tuple[int, ...]:
        return tuple(a + self.side for a in self.start)

    @property
    def volume_cells(self) -> int:
        return self.side ** self.dimension

    def contains(self, other: "AlignedCube") -> bool:
        return all(a <= b and b + other.side <= a + self.side
                   for a, b in zip(self.start, other.start))

    def clip(self, n: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        lo = tuple(min(max(a, 0), n) for a in self.start)
        hi = tuple(min(max(a + self.side, 0), n) for a in self.start)
        return lo, hi

    def slices(self, n: int) -> tuple[slice, ...]:
        lo, hi = self.clip(n)
        return tuple(slice(a, b) for a, b in zip(lo, hi))


@dataclass(frozen=True)
class GridDescriptor:
    dimension: int
    shift: tuple[int, ...]
    id: int


@dataclass(frozen=True)
class CarlesonBox:
    """``Q x [0, side(Q))``; the height is measured in root-side units."""

    base: DyadicCube

    @property
    def height(self) -> float:
        return self.base.side_length(1)

    def contains(self, other: "CarlesonBox") -> bool:
        return self.base.contains(other.base)

    def slabs(self, L: int) -> range:
        # slab j carries heights (2^-j-1, 2^-j]; it lies under the box iff 2^-j <= side
        return range(self.base.level, L + 1)


def _check_level(Q: DyadicCube, max_level: int) -> None:
    if Q.level >= max_level:
        raise ResolutionError(f"below resolution: cube at level {Q.level} has no children "
                              f"on a level-{max_level} lattice")


def children(Q: DyadicCube, max_level: int) -> list[DyadicCube]:
    _check_level(Q, max_level)
    out = []
    for bits in itertools.product((0, 1), repeat=Q.dimension):
        coords = tuple(2 * c + b for c, b in zip(Q.coords, bits))
        out.append(DyadicCube(Q.level + 1, coords, Q.grid_id))
    return out


def parent(Q: DyadicCube) -> DyadicCube:
    return parent_chain(Q, 1)


def parent_chain(Q: DyadicCube, m: int) -> DyadicCube:
    """Return the ``m``-th dyadic ancestor ``Q^(m)``."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m > Q.level:
        raise ResolutionError(f"above root: level-{Q.level} cube has no {m}-th ancestor")
    return DyadicCube(Q.level - m, tuple(c >> m for c in Q.coords), Q.grid_id)


def root(d: int, grid_id: int = 0) -> DyadicCube:
    return DyadicCube(0, (0,) * d, grid_id)


def cubes_at_level(d: int, level: int) -> Iterator[DyadicCube]:
    for coords in itertools.product(range(1 << level), repeat=d):
        yield DyadicCube(level, coords)


def all_dyadic_cubes(d: int, L: int) -> Iterator[DyadicCube]:
    for level in range(L + 1):
        yield from cubes_at_level(d, level)


def descendants(Q: DyadicCube, L: int) -> Iterator[DyadicCube]:
    """Q and every dyadic subcube of Q down to lattice level ``L``."""
    for level in range(Q.level, L + 1):
        m = level - Q.level
        ranges = [range(c << m, (c + 1) << m) for c in Q.coords]
        for coords in itertools.product(*ranges):
            yield DyadicCube(level, coords, Q.grid_id)


def shifted_grids(d: int, n_cells: int) -> list[GridDescriptor]:
    """The 3^d one-third-shifted grids, shifts rounded down to whole cells.

    Shifts that coincide (tiny lattices) are deduplicated; grid 0 is unshifted.
    """
    if n_cells < 1 or n_cells & (n_cells - 1):
        raise ValueError("n_cells must be a power of 2")
    offsets = (0, n_cells // 3, (2 * n_cells) // 3)
    seen: dict[tuple[int, ...], None] = {}
    for combo in itertools.product(offsets, repeat=d):
        seen.setdefault(combo, None)
    return [GridDescriptor(d, shift, i) for i, shift in enumerate(seen)]


def aligned_cubes(d: int, n: int, side_cells: int) -> Iterator[AlignedCube]:
    """Every lattice-aligned cube of the given side lying inside the root."""
    if not 1 <= side_cells <= n:
        raise ValueError("side_cells must lie in [1, n]")
    for start in itertools.product(range(n - side_cells + 1), repeat=d):
        yield AlignedCube(start, side_cells)


def lattice_level(n: int) -> int:
    L = n.bit_length() - 1
    if n != 1 << L:
        raise ValueError("lattice side must be a power of 2")
    return L


# --- array kernels shared by the operators ------------------------------------

def block_sum(a: np.ndarray, factor: int, d: int) -> np.ndarray:
    """Sum the trailing ``d`` axes over non-overlapping blocks of ``factor`` cells."""
    if factor == 1:
        return a
    lead = a.shape[:-d]
    shape = list(lead)
    for m in a.shape[-d:]:
        shape += [m // factor, factor]
    axes = tuple(len(lead) + 2 * i + 1 for i in range(d))
    return a.reshape(shape).sum(axis=axes)


def upsample(a: np.ndarray, factor: int, d: int) -> np.ndarray:
    """Inverse of :func:`block_sum` in shape: repeat each entry over a block."""
    for ax in range(a.ndim - d, a.ndim):
        a = np.repeat(a, factor, axis=ax)
    return a


def pyramid(a: np.ndarray, d: int) -> list[np.ndarray]:
    """Masses of every dyadic cube, index ``[level]`` of shape ``(2**level,)*d``.

    Built bottom-up by pairwise summation so that additivity is exact whenever
    the cell values are exactly representable.
    """
    L = lattice_level(a.shape[-1])
    levels = [a]
    for _ in range(L):
        levels.append(block_sum(levels[-1], 2, d))
    return levels[::-1]


def pad_for_shift(a: np.ndarray, shift: Sequence[int], d: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Embed ``a`` so that the shifted grid's cube boundaries fall on multiples of every dyadic side.

    Returns the padded array and the offset of the original cell ``0``.
    """
    n = a.shape[-1]
    offsets = tuple((n - s) % n for s in shift)
    if not any(offsets):
        return a, offsets
    shape = a.shape[:-d] + tuple(2 * n if o else n for o in offsets)
    out = np.zeros(shape, dtype=a.dtype)
    if a.dtype == object:
        out[...] = 0
    idx = (Ellipsis,) + tuple(slice(o, o + n) for o in offsets)
    out[idx] = a
    return out, offsets
