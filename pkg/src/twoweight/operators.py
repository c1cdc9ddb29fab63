"""Maximal, dyadic Poisson and dyadic fractional operators acting on ``sigma * f``.

Every operator accepts ``f`` with arbitrary leading batch axes; the trailing
``d`` axes index lattice cells.  Outputs are per cell (and per height slab
for the Poisson model).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import (
    AlignedCube,
    DyadicCube,
    GridDescriptor,
    block_sum,
    pad_for_shift,
    shifted_grids,
    upsample,
)
from .weights import HalfSpaceField, WeightField, _prefix

FULL_MAXIMAL_BUDGET = 10**9

TAGS = ("dyadic_maximal", "shifted_maximal", "full_maximal", "dyadic_poisson", "dyadic_fractional")


class SizeGuardError(RuntimeError):
    pass


@dataclass(frozen=True)
class OperatorKind:
    tag: str
    grid: GridDescriptor | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown operator {self.tag!r}")
        if self.tag == "dyadic_fractional":
            if self.alpha is None or not 0 < self.alpha < 1:
                raise ValueError("fractional order alpha must lie in (0, 1)")

    @classmethod
    def dyadic_maximal(cls, grid: GridDescriptor | None = None) -> "OperatorKind":
        return cls("dyadic_maximal", grid)

    @classmethod
    def shifted_maximal(cls) -> "OperatorKind":
        return cls("shifted_maximal")

    @classmethod
    def full_maximal(cls) -> "OperatorKind":
        return cls("full_maximal")

    @classmethod
    def dyadic_poisson(cls) -> "OperatorKind":
        return cls("dyadic_poisson")

    @classmethod
    def dyadic_fractional(cls, alpha: float) -> "OperatorKind":
        return cls("dyadic_fractional", alpha=alpha)

    @property
    def half_space(self) -> bool:
        return self.tag == "dyadic_poisson"

    def describe(self) -> dict:
        out = {"tag": self.tag}
        if self.grid is not None:
            out["grid"] = self.grid.id
        if self.alpha is not None:
            out["alpha"] = self.alpha
        return out


def _weighted(sigma: WeightField, f) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[f.ndim - sigma.d:] != sigma.masses.shape:
        raise ValueError("cell function does not match the lattice")
    return f * sigma.masses


def _level_averages(sigma: WeightField, g: np.ndarray, d: int):
    """Yield ``(level, block average of g)`` from the finest level up to 0."""
    cur = g
    for level in range(sigma.L, -1, -1):
        yield level, cur / sigma.level_volume(level)
        if level:
            cur = block_sum(cur, 2, d)


def dyadic_maximal(sigma: WeightField, f, grid: GridDescriptor | None = None) -> np.ndarray:
    """``M_D(sigma f)(x) = max over cubes Q of the grid containing x of sigma f(Q) / |Q|``."""
    d, L, n = sigma.d, sigma.L, sigma.n
    g = _weighted(sigma, f)
    shift = grid.shift if grid is not None else (0,) * d
    gp, offsets = pad_for_shift(g, shift, d)
    out = None
    for level, avg in _level_averages(sigma, gp, d):
        up = upsample(avg, 1 << (L - level), d)
        out = up if out is None else np.maximum(out, up)
    crop = (Ellipsis,) + tuple(slice(o, o + n) for o in offsets)
    return out[crop]


def shifted_maximal(sigma: WeightField, f) -> np.ndarray:
    out = None
    for grid in shifted_grids(sigma.d, sigma.n):
        m = dyadic_maximal(sigma, f, grid)
        out = m if out is None else np.maximum(out, m)
    return out


def _window_sums(prefix: np.ndarray, side: int, d: int) -> np.ndarray:
    n = prefix.shape[-1] - 1
    m = n - side + 1
    total = 0
    for corner in range(1 << d):
        idx, sign = [], 1
        for i in range(d):
            if corner >> i & 1:
                idx.append(slice(0, m))
                sign = -sign
            else:
                idx.append(slice(side, side + m))
        total = total + sign * prefix[(Ellipsis,) + tuple(idx)]
    return total


def _spread_max(a: np.ndarray, side: int, d: int) -> np.ndarray:
    """Cellwise max over the windows (of the given side) containing each cell."""
    for ax in range(a.ndim - d, a.ndim):
        m = a.shape[ax]
        shape = list(a.shape)
        shape[ax] = m + side - 1
        out = np.zeros(shape, dtype=a.dtype)
        for k in range(side):
            idx = [slice(None)] * a.ndim
            idx[ax] = slice(k, k + m)
            out[tuple(idx)] = np.maximum(out[tuple(idx)], a)
        a = out
    return a


def full_maximal(sigma: WeightField, f) -> np.ndarray:
    """Supremum over every lattice-aligned cube inside the root."""
    d, n = sigma.d, sigma.n
    if n ** (2 * d + 1) > FULL_MAXIMAL_BUDGET:
        raise SizeGuardError(f"full maximal function on n={n}, d={d} exceeds the size guard; "
                             "use the shifted-grid surrogate (shifted_maximal) instead")
    g = _weighted(sigma, f)
    prefix = _prefix(g, d)
    out = None
    for side in range(1, n + 1):
        avg = _window_sums(prefix, side, d) / sigma.volume(side)
        spread = _spread_max(avg, side, d)
        out = spread if out is None else np.maximum(out, spread)
    return out


def dyadic_poisson(sigma: WeightField, f) -> np.ndarray:
    """``P_D(sigma f)`` on cells x slabs: slab ``j`` sums the averages of levels ``0..j``."""
    d, L = sigma.d, sigma.L
    g = _weighted(sigma, f)
    layers = [None] * (L + 1)
    for level, avg in _level_averages(sigma, g, d):
        layers[level] = upsample(avg, 1 << (L - level), d)
    return np.cumsum(np.stack(layers, axis=-1), axis=-1)


def poisson_adjoint(w: HalfSpaceField, g: np.ndarray) -> np.ndarray:
    """``P_D^*`` of a half-space mass array ``g``: ``sum over Q' containing x of g(Q'~) / |Q'|``."""
    d, L = w.d, w.L
    tails = np.flip(np.cumsum(np.flip(g, -1), axis=-1), -1)
    out = 0
    for level in range(L + 1):
        side = 1 << (L - level)
        vol = (side * w.cell_side) ** d
        box = block_sum(tails[..., level], side, d) / vol
        out = out + upsample(box, side, d)
    return out


def box_indicator(w: HalfSpaceField, Q) -> np.ndarray:
    """0/1 mask of the Carleson box over ``Q`` on cells x slabs."""
    c = Q.cells(w.L) if isinstance(Q, DyadicCube) else Q
    mask = np.zeros(w.masses.shape, dtype=bool)
    j0 = w.min_slab(c.side)
    mask[c.slices(w.n) + (slice(j0, None),)] = True
    return mask


def dyadic_poisson_dual(w: HalfSpaceField, Q) -> np.ndarray:
    """``P_D^*(w 1_{Q~})(x) = sum over dyadic Q' containing x of w(Q'~ & Q~) / |Q'|``."""
    g = np.where(box_indicator(w, Q), w.masses, 0)
    return poisson_adjoint(w, g)


def continuous_poisson(f, fld: WeightField, samples, refine: int = 4) -> np.ndarray:
    """Midpoint quadrature of ``int t / (t^2 + |x - y|^2)^((d+1)/2) f(y) dy``.

    ``f`` is a density per cell of ``fld``'s lattice; ``samples`` has rows ``(x_1..x_d, t)``.
    Cells within distance ``t`` of ``x`` are split ``refine`` times per axis.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    d = fld.d
    X, t = samples[:, :d], samples[:, d]
    if np.any(t <= 0):
        raise ValueError("Poisson samples need t > 0")
    f = np.asarray(f, dtype=float).reshape(-1)
    h = float(fld.cell_side)
    grids = np.meshgrid(*fld.cell_centers(), indexing="ij")
    C = np.stack([g.reshape(-1) for g in grids], axis=-1)
    live = f != 0
    C, f = C[live], f[live]
    expo = (d + 1) / 2

    diff = X[:, None, :] - C[None, :, :]
    K = t[:, None] / (t[:, None] ** 2 + (diff ** 2).sum(-1)) ** expo
    gap = np.clip(np.abs(diff) - h / 2, 0, None)
    near = np.sqrt((gap ** 2).sum(-1)) <= t[:, None]

    si, ci = np.nonzero(near)
    if si.size:
        sub = (np.arange(refine) + 0.5) / refine - 0.5
        offs = np.stack(np.meshgrid(*([sub] * d), indexing="ij"), -1).reshape(-1, d) * h
        dd = diff[si, ci][:, None, :] - offs[None, :, :]
        ts = t[si][:, None]
        K[si, ci] = (ts / (ts ** 2 + (dd ** 2).sum(-1)) ** expo).mean(axis=1)
    return (K * f[None, :]).sum(axis=1) * h ** d


def dyadic_fractional(sigma: WeightField, f, alpha: float) -> np.ndarray:
    """``sum over dyadic Q containing x of |Q|^(1 - alpha) <sigma f>_Q``."""
    if not 0 < alpha < 1:
        raise ValueError("fractional order alpha must lie in (0, 1)")
    d, L = sigma.d, sigma.L
    g = np.asarray(_weighted(sigma, f), dtype=float)
    out = 0
    cur = g
    for level in range(L, -1, -1):
        vol = float(sigma.level_volume(level))
        out = out + upsample(cur * vol ** -alpha, 1 << (L - level), d)
        if level:
            cur = block_sum(cur, 2, d)
    return out


def apply(op: OperatorKind, sigma: WeightField, f) -> np.ndarray:
    if op.tag == "dyadic_maximal":
        return dyadic_maximal(sigma, f, op.grid)
    if op.tag == "shifted_maximal":
        return shifted_maximal(sigma, f)
    if op.tag == "full_maximal":
        return full_maximal(sigma, f)
    if op.tag == "dyadic_poisson":
        return dyadic_poisson(sigma, f)
    return dyadic_fractional(sigma, f, op.alpha)


def indicator(sigma: WeightField, Q) -> np.ndarray:
    c = Q.cells(sigma.L) if isinstance(Q, DyadicCube) else Q
    if not isinstance(c, AlignedCube):
        raise TypeError("expected a cube")
    out = np.zeros(sigma.masses.shape)
    out[c.slices(sigma.n)] = 1.0
    return out


def poisson_samples(fld: WeightField, seed: int | None = None, per_box: int = 1) -> np.ndarray:
    """``(x, t)`` samples per (cell, slab) box.

    Without a seed: cell centers at heights ``2^(-j-1/2)`` (slab ``L`` is read
    as ``(2^(-L-1), 2^(-L)]``).  With a seed: seeded jitter over the middle half
    of each cell and of each slab in log scale (``per_box`` draws per box, plus
    the center), which keeps ``t`` comparable to the quadrature resolution.
    """
    d, L, h = fld.d, fld.L, float(fld.cell_side)
    lo = [np.asarray(c) - h / 2 for c in fld.cell_centers()]
    grids = np.meshgrid(*lo, np.arange(L + 1), indexing="ij")
    corner = np.stack([g.reshape(-1) for g in grids[:d]], -1)
    slab = grids[d].reshape(-1)
    u, v = np.full(corner.shape, 0.5), np.full(slab.shape, 0.5)
    if seed is not None:
        rng = np.random.default_rng(seed)
        reps = per_box + 1
        corner, slab = np.tile(corner, (reps, 1)), np.tile(slab, reps)
        u = 0.25 + 0.5 * rng.random(corner.shape)
        v = 0.25 + 0.5 * rng.random(slab.shape)
        u[: len(u) // reps], v[: len(v) // reps] = 0.5, 0.5
    x = corner + u * h
    t = float(fld.side) * 2.0 ** -(slab + v)
    return np.column_stack([x, t])


def poisson_domination(density, fld: WeightField, seed: int | None = None, per_box: int = 4,
                       polish: int = 8, refine: int = 4) -> dict:
    """Max of ``P_D(f) / P(f)`` for a cell density ``f`` against Lebesgue measure.

    Samples come from :func:`poisson_samples`.  With a seed, the ``polish``
    worst boxes are then refined by minimizing ``P`` over the sampled part of
    the box, so the estimate approaches the box supremum whatever the seed.
    """
    from scipy.optimize import minimize

    density = np.asarray(density, dtype=float)
    leb = WeightField(np.full(fld.masses.shape, float(fld.cell_volume)), fld.origin, fld.side)
    disc = dyadic_poisson(leb, density)
    d, L = fld.d, fld.L
    h, side = float(fld.cell_side), float(fld.side)
    origin = np.asarray(fld.origin, dtype=float)

    def box_of(pts):
        idx = np.clip(np.floor((pts[:, :d] - origin) / h).astype(int), 0, fld.n - 1)
        slab = np.minimum(np.floor(-np.log2(pts[:, d] / side)).astype(int), L)
        return idx, slab

    samples = poisson_samples(fld, seed, per_box)
    cont = continuous_poisson(density, fld, samples, refine)
    idx, slab = box_of(samples)
    vals = disc[tuple(idx.T) + (slab,)]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cont > 0, vals / np.where(cont > 0, cont, 1.0), np.where(vals > 0, np.inf, 0.0))

    if seed is not None and polish > 0 and np.isfinite(ratio).all():
        order = np.argsort(-ratio, kind="stable")
        seen = []
        for i in order:
            key = tuple(idx[i]) + (int(slab[i]),)
            if key in seen:
                continue
            seen.append(key)
            lo_x = origin + idx[i] * h + h / 4
            bounds = [(a, a + h / 2) for a in lo_x] + [(slab[i] + 0.25, slab[i] + 0.75)]

            def pval(z):
                pt = np.append(z[:d], side * 2.0 ** -z[d])[None, :]
                return float(continuous_poisson(density, fld, pt, refine)[0])

            z0 = np.append(samples[i, :d], -np.log2(samples[i, d] / side))
            res = minimize(pval, z0, method="L-BFGS-B", bounds=bounds)
            if res.fun > 0 and vals[i] / res.fun > ratio[i]:
                ratio = ratio.copy()
                ratio[i] = vals[i] / res.fun
                samples[i] = np.append(res.x[:d], side * 2.0 ** -res.x[d])
            if len(seen) >= polish:
                break

    i = int(np.argmax(ratio))
    return {"max_ratio": float(ratio[i]), "at": [float(v) for v in samples[i]], "samples": int(len(ratio))}
