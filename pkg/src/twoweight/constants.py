"""Scalar constants of a weight pair: A_p-type suprema, testing constants, norm lower bounds.

All suprema are evaluated in double precision; exact fields are converted
(exactly) to float first, except for the doubling predicates, which compare
masses in the field's own arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from .dyadic import AlignedCube, DyadicCube, block_sum, upsample
from .operators import OperatorKind, apply, poisson_adjoint
from .weights import HalfSpaceField, WeightField, _prefix

BATCH_CELLS = 1 << 21


@dataclass
class ConstantReport:
    constant: str
    value: float
    witness: Any = None
    family: str = "dyadic"
    params: dict = field(default_factory=dict)
    count: int | None = None
    extra: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        w = self.witness
        if isinstance(w, DyadicCube):
            wit = w.to_json()
        elif isinstance(w, AlignedCube):
            wit = {"start": list(w.start), "side": w.side}
        else:
            wit = None
        out = {"constant": self.constant, "value": float(self.value), "witness": wit,
               "family": self.family, "params": self.params}
        if self.count is not None:
            out["count"] = self.count
        return out


def dual_exponent(p: float) -> float:
    return p / (p - 1)


def _check_p(p: float) -> None:
    if not p > 1:
        raise ValueError("exponent p must exceed 1")


def _levelwise_argmax(arrays: list[np.ndarray], valid: list[np.ndarray] | None = None):
    """Largest entry across per-level arrays; ties resolved toward coarse levels, then row-major."""
    best, where = -math.inf, None
    for level, a in enumerate(arrays):
        if valid is not None:
            a = np.where(valid[level], a, -math.inf)
        if a.size == 0:
            continue
        i = int(np.argmax(a))
        v = float(a.reshape(-1)[i])
        if v > best:
            best, where = v, DyadicCube(level, tuple(int(c) for c in np.unravel_index(i, a.shape)))
    return best, where


def _pow_key(avg_w: np.ndarray, avg_s: np.ndarray, p: float) -> np.ndarray:
    """``<w> <sigma>^(p-1)``, the p-th power of the A_p product."""
    return avg_w * avg_s ** (p - 1)


# --- A_p type constants ---------------------------------------------------------

def _aligned_averages(fld: WeightField):
    f = fld.as_float()
    prefix = _prefix(f.masses, f.d)
    from .operators import _window_sums
    for side in range(1, f.n + 1):
        yield side, _window_sums(prefix, side, f.d) / f.volume(side)


def ap_constant(w: WeightField, sigma: WeightField, p: float, family: str = "dyadic") -> ConstantReport:
    """``sup_Q <w>_Q^(1/p) <sigma>_Q^(1/p')`` over dyadic or all aligned cubes."""
    _check_p(p)
    params = {"p": p}
    if family == "dyadic":
        keys = [_pow_key(w.averages(l, exact=False), sigma.averages(l, exact=False), p)
                for l in range(w.L + 1)]
        best, where = _levelwise_argmax(keys)
    elif family == "aligned":
        best, where = -math.inf, None
        for (side, aw), (_, asig) in zip(_aligned_averages(w), _aligned_averages(sigma)):
            key = _pow_key(aw, asig, p)
            i = int(np.argmax(key))
            if key.reshape(-1)[i] > best:
                best = float(key.reshape(-1)[i])
                where = AlignedCube(tuple(int(c) for c in np.unravel_index(i, key.shape)), side)
    else:
        raise ValueError(f"unknown cube family {family!r}")
    return ConstantReport("ap", max(best, 0.0) ** (1 / p), where, family, params)


def poisson_ap_constant(w: HalfSpaceField, sigma: WeightField, p: float) -> ConstantReport:
    """``sup_Q <w>_{Q~}^(1/p) <sigma>_Q^(1/p')`` with ``|Q~| = |Q| side(Q)``."""
    _check_p(p)
    keys = [_pow_key(w.box_averages(l), sigma.averages(l, exact=False), p) for l in range(w.L + 1)]
    best, where = _levelwise_argmax(keys)
    return ConstantReport("poisson_ap", max(best, 0.0) ** (1 / p), where, "dyadic", {"p": p})


def apq_constant(w: WeightField, sigma: WeightField, p: float, q: float, alpha: float,
                 family: str = "dyadic") -> ConstantReport:
    """``sup_Q w(Q)^(1/q) sigma(Q)^(1/p') / |Q|^alpha``."""
    _check_p(p)
    if not p <= q:
        raise ValueError("need p <= q")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    pp = dual_exponent(p)
    params = {"p": p, "q": q, "alpha": alpha}
    if family == "dyadic":
        vals = [w.float_levels[l] ** (1 / q) * sigma.float_levels[l] ** (1 / pp)
                / float(w.level_volume(l)) ** alpha for l in range(w.L + 1)]
        best, where = _levelwise_argmax(vals)
    elif family == "aligned":
        best, where = -math.inf, None
        for (side, aw), (_, asig) in zip(_aligned_averages(w), _aligned_averages(sigma)):
            vol = float(w.volume(side))
            v = (aw * vol) ** (1 / q) * (asig * vol) ** (1 / pp) / vol ** alpha
            i = int(np.argmax(v))
            if v.reshape(-1)[i] > best:
                best = float(v.reshape(-1)[i])
                where = AlignedCube(tuple(int(c) for c in np.unravel_index(i, v.shape)), side)
    else:
        raise ValueError(f"unknown cube family {family!r}")
    return ConstantReport("apq", max(best, 0.0), where, family, params)


# --- doubling predicates --------------------------------------------------------

def _source_levels(source) -> list[np.ndarray]:
    return source.box_levels if isinstance(source, HalfSpaceField) else source.levels


def _clipped_window_masses(source, S: int, lo: int, hi: int) -> np.ndarray:
    """Masses of the side-``S`` cubes (or Carleson boxes) starting at ``lo..hi`` per axis.

    Windows may overhang the root; mass outside the lattice is zero.
    """
    d, n = source.d, source.n
    if isinstance(source, HalfSpaceField):
        prefix = _prefix(source.slab_tails[..., source.min_slab(S)], d)
    else:
        prefix = source.prefix
    starts = np.arange(lo, hi + 1)
    ends = [np.clip(starts, 0, n), np.clip(starts + S, 0, n)]
    total = 0
    for corner in range(1 << d):
        idx, sign = [], 1
        for i in range(d):
            bit = corner >> i & 1
            idx.append(ends[1 - bit])
            if bit:
                sign = -sign
        total = total + sign * prefix[np.ix_(*idx)]
    return total


def _min_containing(W: np.ndarray, s: int, S: int, level: int, base: int, d: int) -> np.ndarray:
    """For each level-``level`` dyadic cube, min of ``W`` over side-``S`` windows containing it.

    ``W[i]`` is the window starting at cell ``base + i`` along each axis.
    """
    a = W
    for ax in range(d):
        rows = []
        for c in range(1 << level):
            x = c * s
            idx = [slice(None)] * a.ndim
            idx[ax] = slice(x + s - S - base, x - base + 1)
            rows.append(a[tuple(idx)].min(axis=ax))
        a = np.stack(rows, axis=ax)
    return a


def doubling_masks(source, rho: float, D, parent_mode: str = "sliding",
                   super_root: bool = True) -> list[np.ndarray]:
    """Per-level masks of dyadic cubes ``Q`` admitting ``P ⊇ Q`` with
    ``side(P) >= rho side(Q)`` and ``source(P) <= D source(Q)``.

    ``dyadic``: ``P`` is the ancestor ``Q^(ceil(log2 rho))``.
    ``sliding``: ``P`` ranges over cubes of side ``ceil(rho side(Q))`` cells at
    every cell offset.  With ``super_root`` (default) ``P`` may overhang the root,
    carrying only the mass inside it; otherwise ``P`` must lie inside the root.
    For a half-space source the masses are those of Carleson boxes.
    """
    if not rho > 1:
        raise ValueError("rho must exceed 1")
    levels = _source_levels(source)
    exact = levels[0].dtype == object
    Dv = Fraction(D) if exact else float(D)
    d, L, n = source.d, source.L, source.n
    total = levels[0].reshape(-1)[0]
    masks = []
    if parent_mode == "dyadic":
        r = max(1, math.ceil(math.log2(rho) - 1e-12))
        for level in range(L + 1):
            if level < r:
                ok = (total <= Dv * levels[level]) if super_root else np.zeros(levels[level].shape, bool)
                masks.append(np.asarray(ok, dtype=bool))
                continue
            anc = upsample(levels[level - r], 1 << r, d)
            masks.append(np.asarray(anc <= Dv * levels[level], dtype=bool))
    elif parent_mode == "sliding":
        for level in range(L + 1):
            s = 1 << (L - level)
            S = math.ceil(Fraction(rho) * s)
            if super_root:
                lo, hi = s - S, n - s
            else:
                lo, hi = 0, n - S
                if S > n:
                    masks.append(np.zeros(levels[level].shape, dtype=bool))
                    continue
            W = _clipped_window_masses(source, S, lo, hi)
            if not super_root:
                # pad so every cube sees the same index arithmetic; out-of-root windows never win
                W = _pad_inf(W, S - s, d)
                lo = s - S
            mins = _min_containing(W, s, S, level, lo, d)
            masks.append(np.asarray(mins <= Dv * levels[level], dtype=bool))
    else:
        raise ValueError(f"unknown parent mode {parent_mode!r}")
    return masks


def _pad_inf(W: np.ndarray, k: int, d: int) -> np.ndarray:
    out = np.full(tuple(m + 2 * k for m in W.shape), np.inf, dtype=W.dtype if W.dtype == object else float)
    out[tuple(slice(k, k + m) for m in W.shape)] = W
    return out


# --- testing constants ----------------------------------------------------------

def _level_indicators(d: int, L: int, level: int, start: int, stop: int) -> np.ndarray:
    k = 1 << level
    ids = np.arange(start, stop)
    coords = np.unravel_index(ids, (k,) * d)
    out = np.zeros((stop - start,) + (k,) * d)
    out[(np.arange(stop - start),) + tuple(coords)] = 1.0
    return upsample(out, 1 << (L - level), d)


def _chunks(count: int, per_item: int):
    step = max(1, BATCH_CELLS // max(per_item, 1))
    for a in range(0, count, step):
        yield a, min(count, a + step)


def _maximal_fast_ratios(w: WeightField, sigma: WeightField, p: float) -> list[np.ndarray]:
    """``||1_Q M_D(sigma 1_Q)||_{L^p(w)}^p`` for every dyadic ``Q`` in ``O(n^d L)``.

    Inside a dyadic ``Q`` only subcubes of ``Q`` matter, so a running maximum of
    averages swept from the finest level up gives all of them at once.
    """
    d, L = sigma.d, sigma.L
    wm = w.as_float().masses
    running = None
    out = [None] * (L + 1)
    for level in range(L, -1, -1):
        avg = upsample(sigma.averages(level, exact=False), 1 << (L - level), d)
        running = avg if running is None else np.maximum(running, avg)
        out[level] = block_sum(running ** p * wm, 1 << (L - level), d)
    return out


def _plain_dyadic(op: OperatorKind) -> bool:
    return op.tag == "dyadic_maximal" and (op.grid is None or not any(op.grid.shift))


def _testing_numerators(w, sigma, p: float, op: OperatorKind, q: float | None, dual: bool):
    """Per-level arrays of ``(numerator^r, normalizing mass, normalizer exponent, r)``."""
    d, L = sigma.d, sigma.L
    sf = sigma.as_float()
    if not dual:
        r = q if (op.tag == "dyadic_fractional" and q is not None) else p
        if _plain_dyadic(op) and isinstance(w, WeightField):
            nums = _maximal_fast_ratios(w, sf, r)
            return nums, sf.float_levels, 1 / p, r
        wm = w.as_float().masses
        nums = []
        for level in range(L + 1):
            count = 1 << (d * level)
            acc = np.empty(count)
            for a, b in _chunks(count, wm.size):
                ind = _level_indicators(d, L, level, a, b)
                out = apply(op, sf, ind)
                if op.half_space:
                    box = np.zeros(out.shape, dtype=bool)
                    box[..., level:] = ind[..., None].astype(bool)
                    acc[a:b] = (np.where(box, out, 0.0) ** r * wm).reshape(b - a, -1).sum(1)
                else:
                    acc[a:b] = (out ** r * ind * wm).reshape(b - a, -1).sum(1)
            nums.append(acc.reshape((1 << level,) * d))
        return nums, sf.float_levels, 1 / p, r

    pp = dual_exponent(p)
    if op.tag == "dyadic_poisson":
        wf = w.as_float()
        nums = []
        for level in range(L + 1):
            count = 1 << (d * level)
            acc = np.empty(count)
            for a, b in _chunks(count, wf.masses.size):
                ind = _level_indicators(d, L, level, a, b)
                box = np.zeros(ind.shape + (L + 1,))
                box[..., level:] = ind[..., None]
                out = poisson_adjoint(wf, box * wf.masses)
                acc[a:b] = (out ** pp * ind * sf.masses).reshape(b - a, -1).sum(1)
            nums.append(acc.reshape((1 << level,) * d))
        return nums, wf.float_box_levels, 1 / pp, pp
    if op.tag == "dyadic_fractional":
        qq = dual_exponent(q if q is not None else p)
        nums, _, _, _ = _testing_numerators(sigma, w, p, op, pp, dual=False)
        return nums, w.as_float().float_levels, 1 / qq, pp
    raise ValueError(f"no dual testing condition for {op.tag}")


def _ratios(nums, masses, norm_exp, r) -> list[np.ndarray]:
    out = []
    for num, m in zip(nums, masses):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(m > 0, np.maximum(num, 0.0) ** (1 / r) / np.where(m > 0, m, 1.0) ** norm_exp, 0.0)
        out.append(val)
    return out


def testing_ratios(w, sigma, p: float, op: OperatorKind, q: float | None = None,
                   dual: bool = False) -> list[np.ndarray]:
    """Testing ratio of every dyadic cube (0 where the normalizing mass vanishes).

    Direct: ``||1_Q Op(sigma 1_Q)||_{L^r(w)} / sigma(Q)^(1/p)`` with ``r = q`` for the
    fractional operator, else ``p``; the Poisson norm runs over the box ``Q~``.
    Dual (``dual=True``): Poisson ``||1_Q P^*(w 1_{Q~})||_{L^p'(sigma)} / w(Q~)^(1/p')``,
    fractional ``||1_Q T(w 1_Q)||_{L^p'(sigma)} / w(Q)^(1/q')``.
    """
    _check_p(p)
    return _ratios(*_testing_numerators(w, sigma, p, op, q, dual))


def _params(p, op, q=None, **kw) -> dict:
    out = {"p": p, "operator": op.describe()}
    if q is not None:
        out["q"] = q
    out.update(kw)
    return out


def full_testing_constant(w, sigma, p: float, op: OperatorKind | None = None,
                          q: float | None = None, dual: bool = False) -> ConstantReport:
    op = op or OperatorKind.dyadic_maximal()
    ratios = testing_ratios(w, sigma, p, op, q, dual)
    best, where = _levelwise_argmax(ratios)
    name = "full_testing_dual" if dual else "full_testing"
    return ConstantReport(name, max(best, 0.0), where, "dyadic", _params(p, op, q, dual=dual))


def restricted_testing_constant(w, sigma, p: float, rho: float, D, op: OperatorKind | None = None,
                                parent_mode: str = "sliding", q: float | None = None,
                                dual: bool = False) -> ConstantReport:
    """Testing supremum over the dyadic cubes that have a ``(rho, D)`` doubling parent.

    The doubling predicate is evaluated on ``sigma`` (direct) or ``w`` (dual).
    """
    op = op or OperatorKind.dyadic_maximal()
    if not D > 1:
        raise ValueError("D must exceed 1")
    source = w if dual else sigma
    masks = doubling_masks(source, rho, D, parent_mode)
    ratios = testing_ratios(w, sigma, p, op, q, dual)
    count = int(sum(int(m.sum()) for m in masks))
    if count == 0:
        best, where = 0.0, None
    else:
        best, where = _levelwise_argmax(ratios, masks)
    name = "restricted_testing_dual" if dual else "restricted_testing"
    params = _params(p, op, q, rho=rho, D=float(D), parent_mode=parent_mode, dual=dual)
    return ConstantReport(name, max(best, 0.0), where, "dyadic", params, count=count)


# --- operator norm lower bound ---------------------------------------------------

def _norm_ratio(w, sigma: WeightField, p: float, op: OperatorKind, r: float, F: np.ndarray) -> np.ndarray:
    out = apply(op, sigma, F)
    wm = w.masses
    axes = tuple(range(1, out.ndim))
    num = (out ** r * wm).sum(axis=axes) ** (1 / r)
    den = (F ** p * sigma.masses).sum(axis=tuple(range(1, F.ndim))) ** (1 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


ASCENT_FACTORS = (0.0, 0.25, 0.5, 2.0, 4.0, 16.0)


def norm_lower_bound(w, sigma: WeightField, p: float, op: OperatorKind | None = None,
                     budget: int = 4, seed: int = 0, q: float | None = None,
                     min_gain: float = 1e-4) -> ConstantReport:
    """Lower bound for ``||Op(sigma .)||_{L^p(sigma) -> L^r(w)}`` by candidate search.

    Candidates: indicators of every dyadic cube, ``budget`` seeded lognormal
    functions, then coordinate ascent on the best one (multiplicative bumps per
    cell) for at most ``budget`` passes or until a pass gains less than ``min_gain``.
    """
    _check_p(p)
    op = op or OperatorKind.dyadic_maximal()
    sf, wf = sigma.as_float(), w.as_float()
    d, L = sf.d, sf.L
    r = q if (op.tag == "dyadic_fractional" and q is not None) else p
    shape = sf.masses.shape

    best, best_f = 0.0, np.zeros(shape)
    for level in range(L + 1):
        count = 1 << (d * level)
        for a, b in _chunks(count, sf.masses.size * (L + 2)):
            F = _level_indicators(d, L, level, a, b)
            vals = _norm_ratio(wf, sf, p, op, r, F)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, best_f = float(vals[i]), F[i].copy()
    if budget > 0:
        rng = np.random.default_rng(seed)
        F = rng.lognormal(0.0, 2.0, size=(budget,) + shape)
        vals = _norm_ratio(wf, sf, p, op, r, F)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_f = float(vals[i]), F[i].copy()

    live = np.flatnonzero(sf.masses.reshape(-1) > 0)
    factors = np.asarray(ASCENT_FACTORS)
    passes = 0
    f = best_f.reshape(-1).copy()
    for _ in range(budget):
        start = best
        for c in live:
            base = f[c] if f[c] > 0 else max(f.max(), 1.0) / 4
            trial = np.repeat(f[None, :], len(factors), axis=0)
            trial[:, c] = base * factors
            vals = _norm_ratio(wf, sf, p, op, r, trial.reshape((-1,) + shape))
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, f = float(vals[i]), trial[i]
        passes += 1
        if best <= start * (1 + min_gain):
            break
    report = ConstantReport("norm_lower_bound", best, None, "candidates",
                            _params(p, op, q if r != p else None, budget=budget, seed=seed))
    report.extra["best_f"] = f.reshape(shape)
    report.extra["passes"] = passes
    return report
