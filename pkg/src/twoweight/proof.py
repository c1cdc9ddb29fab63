"""Four-collection decomposition of the dyadic subcubes of a test cube.

Every dyadic ``Q ⊆ Q0`` is labelled

* ``T`` - below a maximal cube whose dyadic parent is ``D``-doubling,
* ``U`` - within ``k`` generations of ``Q0`` (the top),
* ``A`` - small local A_p product, ``<sigma>^(1/p') <w>^(1/p) <= [w,sigma]_p / m``
  with ``m = log2(side Q0 / side Q)``,
* ``R`` - everything else, which must be empty once ``D >= 2^(d (p+1)/(p-1))``.

Membership decisions are made in the fields' own arithmetic, so exact
(``Fraction``) fields give an exact classification.  Integral sums are floats.
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dyadic import DyadicCube, block_sum, descendants, upsample
from .weights import WeightField

T, U, A, R = 0, 1, 2, 3
NAMES = ("T", "U", "A", "R")
TAIL_TERMS = 10**6


class ChainHypothesisError(ValueError):
    """The cube lies in the testing collection, so the chain argument does not apply."""


class TheoremViolation(RuntimeError):
    """The remaining collection is nonempty at a doubling parameter where it must be empty."""

    def __init__(self, message: str, certificate: dict):
        super().__init__(message)
        self.certificate = certificate


def paper_D(d: int, p: float) -> float:
    """``2^(d (p+1)/(p-1))``."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    return 2.0 ** (d * (p + 1) / (p - 1))


def _growth_exceeds_one(d: int, p: float, m: int) -> bool:
    # 2^(d m) m^(-p) > 1, compared in logs to avoid overflow
    return d * m * math.log(2) - p * math.log(m) > 0


def min_top_k(d: int, p: float) -> int:
    """Smallest ``k >= ceil(p / (d ln 2))`` with ``2^(dm) m^(-p) > 1`` for every ``m >= k``.

    ``t -> 2^(dt) t^(-p)`` increases past ``p / (d ln 2)``, so the first ``k``
    from there with a value above 1 works for all larger ``m``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    k = max(1, math.ceil(p / (d * math.log(2))))
    while not _growth_exceeds_one(d, p, k):
        k += 1
    return k


@lru_cache(maxsize=None)
def tail_coefficient(p: float, k: int, terms: int = TAIL_TERMS) -> float:
    """Certified upper bound for ``sum_{m > k} m^(-p)``: partial sum plus the integral tail."""
    m = np.arange(k + 1, k + 1 + terms, dtype=float)
    partial = math.fsum(m ** -p)
    last = k + terms
    return partial + last ** (1 - p) / (p - 1)


def _p_rational(p: float) -> Fraction:
    return Fraction(p).limit_denominator(1000) if abs(Fraction(p).limit_denominator(1000) - p) < 1e-12 \
        else Fraction(p)


@dataclass
class DecompositionReport:
    Q0: DyadicCube
    p: float
    rho: float
    D: float
    k: int
    L: int
    labels: list[np.ndarray]
    t_star: list[np.ndarray]
    ap: float
    sums: dict = field(default_factory=dict)
    testing_integral: float = 0.0
    t_star_sigma: object = 0
    sigma_Q0: object = 0
    tail_coeff: float = 0.0
    exact: bool = False

    @property
    def d(self) -> int:
        return len(self.Q0.coords)

    @property
    def certified_C(self) -> float:
        """Coefficient of ``sigma(Q0)`` multiplying ``ap^p`` plus the testing term."""
        return 1.0 + 2.0 ** (1 + self.d * (self.k + 1)) + self.tail_coeff

    @property
    def u_bound(self) -> int:
        return 2 ** (1 + self.d * (self.k + 1))

    def count(self, name: str) -> int:
        if name == "T_star":
            return int(sum(int(m.sum()) for m in self.t_star))
        code = NAMES.index(name)
        return int(sum(int((lab == code).sum()) for lab in self.labels))

    def cubes(self, name: str) -> list[DyadicCube]:
        out = []
        for rel, lab in enumerate(self.labels):
            mask = self.t_star[rel] if name == "T_star" else lab == NAMES.index(name)
            level = self.Q0.level + rel
            for idx in zip(*np.nonzero(mask)):
                coords = tuple((c << rel) + int(i) for c, i in zip(self.Q0.coords, idx))
                out.append(DyadicCube(level, coords))
        return out

    def to_json(self) -> dict:
        def num(x):
            return str(x) if self.exact else float(x)

        return {
            "Q0": self.Q0.to_json(),
            "params": {"p": self.p, "rho": self.rho, "D": self.D, "k": self.k},
            "counts": {name: self.count(name) for name in ("T_star",) + NAMES},
            "collections": {name: [c.to_json() for c in self.cubes(name)]
                            for name in ("T_star",) + NAMES},
            "sums": {k: float(v) for k, v in self.sums.items()},
            "testing_integral": float(self.testing_integral),
            "t_star_sigma": num(self.t_star_sigma),
            "sigma_Q0": num(self.sigma_Q0),
            "ap": self.ap,
            "tail_coeff": self.tail_coeff,
            "certified_C": self.certified_C,
            "u_bound": self.u_bound,
        }


class Decomposer:
    """Shared per-pair data for classifying many test cubes ``Q0``.

    ``super_root=False`` (default) gives the root no doubling parent, the
    stricter reading for the emptiness check.
    """

    def __init__(self, w: WeightField, sigma: WeightField, p: float, rho: float = 2.0,
                 D: float | None = None, parent_mode: str = "dyadic", super_root: bool = False):
        if w.masses.shape != sigma.masses.shape:
            raise ValueError("weights live on different lattices")
        if not 1 < rho <= 2:
            raise ValueError("rho must lie in (1, 2]")
        self.w, self.sigma = w, sigma
        self.d, self.L = sigma.d, sigma.L
        self.p, self.rho = p, rho
        self.D = paper_D(self.d, p) if D is None else D
        self.k = min_top_k(self.d, p)
        self.exact = sigma.exact and w.exact
        self.parent_mode = parent_mode

        if self.exact:
            pr = _p_rational(p)
            self._key_exp = pr.numerator
            a, b = pr.numerator, pr.denominator
            avg_s = [sigma.averages(l) for l in range(self.L + 1)]
            avg_w = [w.averages(l) for l in range(self.L + 1)]
            # (<sigma>^(p-1) <w>)^b, an exact rational
            self.keys = [s ** (a - b) * x ** b for s, x in zip(avg_s, avg_w)]
            Dv = Fraction(self.D)
        else:
            self._key_exp = p
            avg_s = [sigma.averages(l, exact=False) for l in range(self.L + 1)]
            avg_w = [w.averages(l, exact=False) for l in range(self.L + 1)]
            self.keys = [s ** (p - 1) * x for s, x in zip(avg_s, avg_w)]
            Dv = float(self.D)
        self.max_key = max(k.max() for k in self.keys)
        self.ap_pow = float(max(float(k.max()) for k in self.keys) ** (1 / self.key_power))
        self.ap = self.ap_pow ** (1 / p)
        self.avg_sigma_float = [sigma.averages(l, exact=False) for l in range(self.L + 1)]

        if parent_mode == "dyadic":
            levels = sigma.levels
            self.doubling = [np.zeros(levels[0].shape, dtype=bool)]
            if super_root:
                self.doubling[0] = np.asarray(levels[0] * 0 <= levels[0] * (Dv - 1), dtype=bool)
            for level in range(1, self.L + 1):
                par = upsample(levels[level - 1], 2, self.d)
                self.doubling.append(np.asarray(par <= Dv * levels[level], dtype=bool))
        elif parent_mode == "sliding":
            from .constants import doubling_masks
            self.doubling = doubling_masks(sigma, rho, self.D, "sliding", super_root=super_root)
        else:
            raise ValueError(f"unknown parent mode {parent_mode!r}")

    @property
    def key_power(self) -> float:
        """Power to which ``<sigma>^(p-1) <w>`` is raised in ``self.keys``."""
        return self._key_exp / self.p

    def _slice(self, arr: np.ndarray, Q0: DyadicCube, level: int) -> np.ndarray:
        m = level - Q0.level
        return arr[tuple(slice(c << m, (c + 1) << m) for c in Q0.coords)]

    def is_small(self, key, m: int) -> bool:
        """Small local A_p product at relative depth ``m >= 1``."""
        return key * m ** self._key_exp <= self.max_key

    def classify(self, Q0: DyadicCube) -> DecompositionReport:
        d, L = self.d, self.L
        labels, t_star = [], []
        in_t_prev = None
        run_all = run_t = None
        sums = {"T": 0.0, "U": 0.0, "A": 0.0, "R": 0.0}
        wl = self.w.float_levels
        for level in range(Q0.level, L + 1):
            m = level - Q0.level
            dbl = self._slice(self.doubling[level], Q0, level)
            if in_t_prev is None:
                in_t = dbl.copy()
                star = dbl.copy()
            else:
                inherited = upsample(in_t_prev, 2, d)
                in_t = inherited | dbl
                star = dbl & ~inherited
            lab = np.full(in_t.shape, R, dtype=np.int8)
            lab[in_t] = T
            if m <= self.k:
                lab[~in_t] = U
            else:
                keys = self._slice(self.keys[level], Q0, level)
                small = np.asarray(keys * m ** self._key_exp <= self.max_key, dtype=bool)
                lab[~in_t & small] = A
            labels.append(lab)
            t_star.append(star)
            in_t_prev = in_t

            avg = self._slice(self.avg_sigma_float[level], Q0, level)
            wq = self._slice(wl[level], Q0, level)
            contrib = avg ** self.p * wq
            for code, name in enumerate(NAMES):
                if code != T:
                    sums[name] += math.fsum(contrib[lab == code].tolist())

        # pointwise suprema over Q0's cells for the testing integral and the T majorant
        cells_w = self._slice(self.w.float_levels[L], Q0, L)
        for rel, lab in enumerate(labels):
            level = Q0.level + rel
            avg = upsample(self._slice(self.avg_sigma_float[level], Q0, level), 1 << (L - level), d)
            tmask = upsample(lab == T, 1 << (L - level), d)
            run_all = avg if run_all is None else np.maximum(run_all, avg)
            t_avg = np.where(tmask, avg, 0.0)
            run_t = t_avg if run_t is None else np.maximum(run_t, t_avg)
        sums["T"] = math.fsum((run_t ** self.p * cells_w).reshape(-1).tolist())
        testing_integral = math.fsum((run_all ** self.p * cells_w).reshape(-1).tolist())

        t_star_sigma = 0
        for rel, star in enumerate(t_star):
            level = Q0.level + rel
            vals = self._slice(self.sigma.levels[level], Q0, level)[star]
            for v in vals.reshape(-1):
                t_star_sigma = t_star_sigma + v

        return DecompositionReport(
            Q0=Q0, p=self.p, rho=self.rho, D=float(self.D), k=self.k, L=L,
            labels=labels, t_star=t_star, ap=self.ap, sums=sums,
            testing_integral=testing_integral, t_star_sigma=t_star_sigma,
            sigma_Q0=self.sigma.measure(Q0), tail_coeff=tail_coefficient(self.p, self.k),
            exact=self.exact,
        )

    def in_testing_collection(self, Q: DyadicCube, Q0: DyadicCube) -> bool:
        for level in range(Q0.level, Q.level + 1):
            anc = tuple(c >> (Q.level - level) for c in Q.coords)
            if self.doubling[level][anc]:
                return True
        return False

    def chain_certificate(self, Q: DyadicCube, Q0: DyadicCube) -> dict:
        """Every intermediate quantity of the chain argument for a cube outside ``T``."""
        if not Q0.contains(Q):
            raise ValueError("Q must lie inside Q0")
        if self.in_testing_collection(Q, Q0):
            raise ChainHypothesisError("chain hypothesis violated: Q lies in the testing collection")
        d, p = self.d, self.p
        m = Q.level - Q0.level
        sig = self.sigma.levels
        ladder = []
        for level in range(Q.level, Q0.level, -1):
            child = tuple(c >> (Q.level - level) for c in Q.coords)
            par = tuple(c >> 1 for c in child)
            child_mass, par_mass = sig[level][child], sig[level - 1][par]
            ratio = math.inf if child_mass == 0 and par_mass > 0 else (
                float(par_mass / child_mass) if child_mass != 0 else math.nan)
            ladder.append(ratio)
        sq, sq0 = self.sigma.measure(Q), self.sigma.measure(Q0)
        Dv = Fraction(self.D) if self.exact else self.D
        pp = p / (p - 1)
        key_q = float(self.keys[Q.level][Q.coords]) ** (1 / self.key_power)
        key_q0 = float(self.keys[Q0.level][Q0.coords]) ** (1 / self.key_power)
        ap_pow = self.ap_pow
        factor = (self.D / 2 ** (d * pp)) ** (m * (p - 1))
        fails_small = m == 0 or not self.is_small(self.keys[Q.level][Q.coords], m)
        links = {
            "sigma_growth": bool(sq0 >= Dv ** m * sq),
            "ap_dominates_Q0": bool(ap_pow >= key_q0 * (1 - 1e-12)),
            "Q0_vs_Q": bool(key_q0 >= factor * key_q * (1 - 1e-12)),
            "Q_not_small": bool(fails_small),
            "D_large_enough": bool(factor >= 2.0 ** (d * m) * (1 - 1e-12)),
            "m_le_k": bool(m <= self.k),
            "m_lt_k": bool(m < self.k),
        }
        return {
            "Q": Q.to_json(), "Q0": Q0.to_json(), "m": m, "k": self.k, "D": float(self.D),
            "parent_ratios": ladder,
            "sigma_ratio": float(sq0 / sq) if sq != 0 else math.inf,
            "local_product_Q": key_q,
            "local_product_Q0": key_q0,
            "ap_pow": ap_pow,
            "small_ratio": (key_q * m ** p / ap_pow) if ap_pow > 0 and m > 0 else 0.0,
            "growth": 2.0 ** (d * m) * m ** -p if m > 0 else math.inf,
            "links": links,
            "failing_links": [k for k, v in links.items() if not v and k not in ("m_le_k", "m_lt_k")],
        }


def classify(w: WeightField, sigma: WeightField, Q0: DyadicCube, p: float, rho: float = 2.0,
             D: float | None = None, **kw) -> DecompositionReport:
    return Decomposer(w, sigma, p, rho, D, **kw).classify(Q0)


def chain_certificate(w: WeightField, sigma: WeightField, Q: DyadicCube, Q0: DyadicCube,
                      p: float, D: float | None = None, **kw) -> dict:
    return Decomposer(w, sigma, p, 2.0, D, **kw).chain_certificate(Q, Q0)


def assemble_ept_bound(report: DecompositionReport, testing_constant: float, ap: float | None = None,
                       rtol: float = 1e-9, decomposer: Decomposer | None = None) -> dict:
    """Check the per-collection bounds and their sum against ``sigma(Q0)``.

    Raises :class:`TheoremViolation` when the remaining collection is nonempty.
    """
    if report.count("R"):
        cert = None
        if decomposer is not None:
            cert = decomposer.chain_certificate(report.cubes("R")[0], report.Q0)
        raise TheoremViolation(f"remaining collection has {report.count('R')} cubes", cert or {})
    ap = report.ap if ap is None else ap
    p = report.p
    sq0 = float(report.sigma_Q0)
    P_p, ap_p = testing_constant ** p, ap ** p
    n_u = report.count("U")
    slack = 1 + rtol
    bounds = {
        "T_star_disjoint_mass": (report.t_star_sigma, report.sigma_Q0),
        "U_count": (n_u, report.u_bound),
        "T": (report.sums["T"], P_p * sq0 * slack),
        "U": (report.sums["U"], ap_p * n_u * sq0 * slack),
        "A": (report.sums["A"], ap_p * report.tail_coeff * sq0 * slack),
        "total": (report.testing_integral, (P_p + ap_p * (n_u + report.tail_coeff)) * sq0 * slack),
    }
    checks = {name: bool(lhs <= rhs) for name, (lhs, rhs) in bounds.items()}
    return {
        "checks": checks,
        "holds": all(checks.values()),
        "values": {name: (float(lhs), float(rhs)) for name, (lhs, rhs) in bounds.items()},
    }


def all_test_cubes(d: int, max_level: int):
    from .dyadic import cubes_at_level
    for level in range(max_level + 1):
        yield from cubes_at_level(d, level)
