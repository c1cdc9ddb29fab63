import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twoweight.constants import (
    ap_constant,
    apq_constant,
    doubling_masks,
    dual_exponent,
    full_testing_constant,
    norm_lower_bound,
    poisson_ap_constant,
    restricted_testing_constant,
    testing_ratios as ratios_by_level,
)
from twoweight.operators import OperatorKind
from twoweight.weights import (
    Lognormal,
    SparseAtoms,
    power_weight,
    random_field,
    random_halfspace,
    uniform_field,
    uniform_halfspace,
)

import oracles

seeds = st.integers(0, 10**6)
MAXIMAL = OperatorKind.dyadic_maximal()
POISSON = OperatorKind.dyadic_poisson()


def _pair(seed, L=3, d=1, model=Lognormal(0, 1)):
    return random_field(d, L, model, seed + 1), random_field(d, L, model, seed)


def _cubes(n):
    return list(oracles.dyadic_cubes(n, 1))


def oracle_testing(w, sigma, p, kind, q=None, alpha=0.5, dual=False):
    """Testing ratio per dyadic cube ``(start, side)`` by explicit summation."""
    n = sigma.n
    out = {}
    for start, side in _cubes(n):
        ind = np.zeros(n)
        ind[start[0]:start[0] + side] = 1.0
        inside = ind > 0
        if kind == "maximal":
            T = oracles.maximal(sigma.masses, ind, sigma.cell_volume)
            num = (T[inside] ** p * w.masses[inside]).sum() ** (1 / p)
            den = oracles.box_mass(sigma.masses, start, side)
            out[(start, side)] = num / den ** (1 / p) if den > 0 else 0.0
        elif kind == "poisson" and not dual:
            T = oracles.poisson(sigma.masses, ind, sigma.cell_volume)
            level = sigma.L - (side.bit_length() - 1)
            num = (T[inside, level:] ** p * w.masses[inside, level:]).sum() ** (1 / p)
            den = oracles.box_mass(sigma.masses, start, side)
            out[(start, side)] = num / den ** (1 / p) if den > 0 else 0.0
        elif kind == "poisson":
            pp = dual_exponent(p)
            T = oracles.poisson_dual(w.masses, start, side, sigma.cell_volume)
            level = sigma.L - (side.bit_length() - 1)
            num = (T[inside] ** pp * sigma.masses[inside]).sum() ** (1 / pp)
            den = w.masses[start[0]:start[0] + side, level:].sum()
            out[(start, side)] = num / den ** (1 / pp) if den > 0 else 0.0
        elif kind == "fractional" and not dual:
            T = oracles.fractional(sigma.masses, ind, sigma.cell_volume, alpha)
            num = (T[inside] ** q * w.masses[inside]).sum() ** (1 / q)
            den = oracles.box_mass(sigma.masses, start, side)
            out[(start, side)] = num / den ** (1 / p) if den > 0 else 0.0
        else:
            pp, qq = dual_exponent(p), dual_exponent(q)
            T = oracles.fractional(w.masses, ind, w.cell_volume, alpha)
            num = (T[inside] ** pp * sigma.masses[inside]).sum() ** (1 / pp)
            den = oracles.box_mass(w.masses, start, side)
            out[(start, side)] = num / den ** (1 / qq) if den > 0 else 0.0
    return out


def test_uniform_pair_is_one():
    u = uniform_field(1, 5)
    assert ap_constant(u, u, 2).value == pytest.approx(1.0)
    assert ap_constant(u, u, 3, "aligned").value == pytest.approx(1.0)
    assert full_testing_constant(u, u, 2).value == pytest.approx(1.0)
    r = restricted_testing_constant(u, u, 2, 2, 8)
    assert r.value == pytest.approx(1.0) and r.count == 63


@given(seeds, st.sampled_from([1.5, 2.0, 3.0]))
def test_ap_matches_oracle(seed, p):
    w, s = _pair(seed)
    assert ap_constant(w, s, p).value == pytest.approx(oracles.ap(w.masses, s.masses, p, w.cell_volume), rel=1e-12)
    assert ap_constant(w, s, p, "aligned").value == pytest.approx(
        oracles.ap(w.masses, s.masses, p, w.cell_volume, "aligned"), rel=1e-12)


def test_power_pair_a2_closed_form():
    # sup over cubes [0, r): <w><sigma> = 1 / (eps (2 - eps)), attained at the origin
    eps = 0.25
    w, s = power_weight(1, 1 - eps, 10), power_weight(1, eps - 1, 10)
    rep = ap_constant(w, s, 2)
    assert rep.value ** 2 == pytest.approx(1 / (eps * (2 - eps)), rel=1e-9)


@given(seeds, st.sampled_from([1.5, 2.0, 3.0]))
def test_maximal_testing_matches_oracle(seed, p):
    w, s = _pair(seed)
    ratios = ratios_by_level(w, s, p, MAXIMAL)
    want = oracle_testing(w, s, p, "maximal")
    for (start, side), v in want.items():
        level = s.L - (side.bit_length() - 1)
        assert ratios[level][start[0] // side] == pytest.approx(v, rel=1e-12)


@given(seeds)
def test_poisson_testing_matches_oracle(seed):
    s = random_field(1, 3, Lognormal(0, 1), seed)
    w = random_halfspace(1, 3, Lognormal(0, 1), seed + 1)
    for dual in (False, True):
        ratios = ratios_by_level(w, s, 2.0, POISSON, dual=dual)
        want = oracle_testing(w, s, 2.0, "poisson", dual=dual)
        for (start, side), v in want.items():
            level = s.L - (side.bit_length() - 1)
            assert ratios[level][start[0] // side] == pytest.approx(v, rel=1e-12)


@given(seeds, st.sampled_from([(1.5, 2.0), (2.0, 2.0), (2.0, 3.0)]))
def test_fractional_testing_matches_oracle(seed, pq):
    p, q = pq
    w, s = _pair(seed)
    op = OperatorKind.dyadic_fractional(0.5)
    for dual in (False, True):
        ratios = ratios_by_level(w, s, p, op, q, dual)
        want = oracle_testing(w, s, p, "fractional", q, 0.5, dual)
        for (start, side), v in want.items():
            level = s.L - (side.bit_length() - 1)
            assert ratios[level][start[0] // side] == pytest.approx(v, rel=1e-12)


@given(seeds, st.sampled_from([(1.5, 2.0), (2.0, 3.0)]))
def test_fractional_dual_is_transposed_direct(seed, pq):
    p, q = pq
    w, s = _pair(seed)
    op = OperatorKind.dyadic_fractional(0.3)
    dual = full_testing_constant(w, s, p, op, q, dual=True).value
    swapped = full_testing_constant(s, w, dual_exponent(q), op, dual_exponent(p)).value
    assert dual == pytest.approx(swapped, rel=1e-12)


@given(seeds, st.sampled_from(["dyadic", "sliding"]), st.booleans(), st.sampled_from([1.5, 2.0]),
       st.sampled_from([1.01, 2.0, 3.0, 8.0]))
def test_doubling_masks_match_oracle(seed, mode, super_root, rho, D):
    s = random_field(1, 4, SparseAtoms(3, 1.0) if seed % 2 else Lognormal(0, 2), seed, exact=True)
    masks = doubling_masks(s, rho, D, mode, super_root)
    for start, side in _cubes(s.n):
        level = s.L - (side.bit_length() - 1)
        want = oracles.doubling(s.masses, start, side, rho, D, mode, super_root)
        assert bool(masks[level][start[0] // side]) == want


def test_doubling_masks_2d_sliding():
    s = random_field(2, 3, Lognormal(0, 2), 7)
    masks = doubling_masks(s, 2.0, 2.5, "sliding", False)
    for start, side in oracles.dyadic_cubes(8, 2):
        level = 3 - (side.bit_length() - 1)
        idx = tuple(c // side for c in start)
        assert bool(masks[level][idx]) == oracles.doubling(s.masses, start, side, 2.0, 2.5, "sliding", False)


@given(seeds)
def test_restricted_monotone_and_dominated(seed):
    w, s = _pair(seed, L=5, model=SparseAtoms(4, 1.0))
    full = full_testing_constant(w, s, 2).value
    prev = (-1.0, -1)
    for D in (1.5, 2, 4, 8, 16, 64):
        r = restricted_testing_constant(w, s, 2, 2, D)
        assert r.value <= full * (1 + 1e-12)
        assert r.value >= prev[0] and r.count >= prev[1]
        prev = (r.value, r.count)


def test_restricted_equals_max_over_qualifying():
    w, s = _pair(3, L=4, model=Lognormal(0, 2))
    D = 2.5
    ratios = oracle_testing(w, s, 2.0, "maximal")
    want = max(v for (start, side), v in ratios.items()
               if oracles.doubling(s.masses, start, side, 2.0, D, "sliding", True))
    assert restricted_testing_constant(w, s, 2, 2, D).value == pytest.approx(want, rel=1e-12)


def test_poisson_ap_uniform():
    assert poisson_ap_constant(uniform_halfspace(1, 4), uniform_field(1, 4), 2).value == pytest.approx(1.0)


def test_zero_sigma_direct_constants_vanish():
    s = uniform_field(1, 3).scaled(0.0)
    w = uniform_halfspace(1, 3)
    assert full_testing_constant(w, s, 2, POISSON).value == 0.0
    assert restricted_testing_constant(w, s, 2, 2, 8, POISSON).value == 0.0
    assert poisson_ap_constant(w, s, 2).value == 0.0


def test_apq_formula():
    w, s = _pair(5)
    p, q, a = 2.0, 3.0, 0.4
    best = 0.0
    for start, side in _cubes(w.n):
        vol = side * w.cell_volume
        v = (oracles.box_mass(w.masses, start, side) ** (1 / q)
             * oracles.box_mass(s.masses, start, side) ** (1 - 1 / p) / vol ** a)
        best = max(best, v)
    assert apq_constant(w, s, p, q, a).value == pytest.approx(best, rel=1e-12)
    with pytest.raises(ValueError):
        apq_constant(w, s, 3.0, 2.0, a)


@given(seeds, st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_scaling_laws(seed, cw, cs):
    w, s = _pair(seed, L=4)
    p = 3.0
    pp = dual_exponent(p)
    base = (ap_constant(w, s, p).value, full_testing_constant(w, s, p).value,
            restricted_testing_constant(w, s, p, 2, 8).value)
    scaled = (ap_constant(w.scaled(cw), s.scaled(cs), p).value,
              full_testing_constant(w.scaled(cw), s.scaled(cs), p).value,
              restricted_testing_constant(w.scaled(cw), s.scaled(cs), p, 2, 8).value)
    factor = cw ** (1 / p) * cs ** (1 / pp)
    for a, b in zip(base, scaled):
        assert b == pytest.approx(factor * a, rel=1e-12)


def test_norm_lower_bound_brackets():
    u = uniform_field(1, 5)
    nb = norm_lower_bound(u, u, 2, budget=2)
    assert 1.0 <= nb.value <= 2.0  # Doob: ||M_D||_{L^2} <= 2
    w, s = _pair(2, L=5)
    nb = norm_lower_bound(w, s, 2, budget=2, seed=1)
    assert nb.value >= full_testing_constant(w, s, 2).value * (1 - 1e-12)
    again = norm_lower_bound(w, s, 2, budget=2, seed=1)
    assert again.value == nb.value


def test_witness_in_json():
    w, s = _pair(1)
    doc = ap_constant(w, s, 2).to_json()
    assert set(doc) >= {"constant", "value", "witness", "family", "params"}
    assert doc["witness"]["level"] >= 0
