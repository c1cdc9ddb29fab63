"""Experiment drivers.  Each returns plain data; :mod:`twoweight.cli` handles I/O."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .config import SCHEMA_VERSION, ExperimentConfig, build_halfspace, build_weight
from .constants import (
    ConstantReport,
    ap_constant,
    apq_constant,
    dual_exponent,
    full_testing_constant,
    norm_lower_bound,
    poisson_ap_constant,
    restricted_testing_constant,
)
from .dyadic import DyadicCube
from .operators import OperatorKind, poisson_domination
from .proof import Decomposer, TheoremViolation, all_test_cubes, assemble_ept_bound, paper_D
from .weights import WeightField, power_weight, uniform_field


@dataclass
class SweepRow:
    instance: int
    seed: int
    dimension: int
    level: int
    p: float
    D: float
    ap: float
    full_testing: float
    restricted_testing: float
    qualifying: int
    norm_lower_bound: float
    ratio: float
    count_T: int
    count_U: int
    count_A: int
    count_R: int
    runtime: float = 0.0

    def check(self) -> "SweepRow":
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"sweep value {f.name}={v} is not finite and nonnegative")
        return self


def _header(cfg: ExperimentConfig, **extra) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "experiment": cfg.experiment, "dimension": cfg.dimension,
           "level": cfg.level, "p": cfg.p, "seed": cfg.seed, "exact": cfg.exact}
    out.update(extra)
    return out


def _D(cfg: ExperimentConfig) -> float:
    return cfg.D if cfg.D is not None else paper_D(cfg.dimension, cfg.p)


def _pair(cfg: ExperimentConfig, seed: int, exact: bool | None = None):
    exact = cfg.exact if exact is None else exact
    sigma = build_weight(cfg.sigma, cfg.dimension, cfg.level, seed, exact)
    w = build_weight(cfg.w, cfg.dimension, cfg.level, seed + 1, exact)
    if w.masses.shape != sigma.masses.shape:
        from .config import ConfigError
        raise ConfigError("sigma and w live on different lattices")
    return w, sigma


def _safe_ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


# --- constants ---------------------------------------------------------------------

def cmd_constants(cfg: ExperimentConfig) -> dict:
    """Every constant of the maximal-function pair described by ``cfg``."""
    w, sigma = _pair(cfg, cfg.seed)
    p, D = cfg.p, _D(cfg)
    reports: list[ConstantReport] = [
        ap_constant(w, sigma, p, "dyadic"),
        full_testing_constant(w, sigma, p),
        restricted_testing_constant(w, sigma, p, cfg.rho, D, parent_mode=cfg.parent_mode),
    ]
    if (1 << cfg.level) ** (2 * cfg.dimension) <= 1 << 24:
        reports.insert(1, ap_constant(w, sigma, p, "aligned"))
    if cfg.norm:
        reports.append(norm_lower_bound(w, sigma, p, budget=cfg.budget, seed=cfg.seed))
    return _header(cfg, D=D, rho=cfg.rho, constants=[r.to_json() for r in reports])


# --- decomposition -----------------------------------------------------------------

def cmd_decompose(cfg: ExperimentConfig) -> dict:
    """Classify every dyadic test cube up to ``q0_max_level``.

    Raises :class:`TheoremViolation` when a nonempty remainder appears at
    ``D >= paper_D``; below that threshold remainders are reported.
    """
    w, sigma = _pair(cfg, cfg.seed)
    p, D = cfg.p, _D(cfg)
    threshold = paper_D(cfg.dimension, p)
    dec = Decomposer(w, sigma, p, cfg.rho, D, parent_mode="dyadic")
    testing = restricted_testing_constant(w, sigma, p, cfg.rho, D, parent_mode="dyadic")
    out = []
    for Q0 in all_test_cubes(cfg.dimension, min(cfg.q0_max_level, cfg.level)):
        rep = dec.classify(Q0)
        entry = rep.to_json()
        if rep.count("R"):
            cert = dec.chain_certificate(rep.cubes("R")[0], Q0)
            if D >= threshold:
                raise TheoremViolation(f"remaining collection nonempty for Q0={Q0.to_json()}", cert)
            entry["chain_certificate"] = cert
        else:
            entry["bounds"] = assemble_ept_bound(rep, testing.value)
        out.append(entry)
    return _header(cfg, D=D, paper_D=threshold, rho=cfg.rho, restricted_testing=testing.to_json(),
                   reports=out)


# --- equivalence sweep -------------------------------------------------------------

def _default_models(cfg: ExperimentConfig) -> ExperimentConfig:
    lognormal = {"kind": "lognormal", "mu": 0.0, "s": 1.0}
    return replace(cfg, sigma=cfg.sigma or lognormal, w=cfg.w or lognormal)


def _instance_seed(cfg: ExperimentConfig, i: int) -> int:
    return cfg.seed * 1_000_003 + 2 * i


def _equivalence_row(args) -> SweepRow:
    cfg, i = args
    t0 = time.perf_counter()
    seed = _instance_seed(cfg, i)
    w, sigma = _pair(cfg, seed)
    p, D = cfg.p, _D(cfg)
    ap = ap_constant(w, sigma, p).value
    full = full_testing_constant(w, sigma, p).value
    rt = restricted_testing_constant(w, sigma, p, cfg.rho, D, parent_mode=cfg.parent_mode)
    norm = norm_lower_bound(w, sigma, p, budget=cfg.budget, seed=seed).value
    rep = Decomposer(w, sigma, p, cfg.rho, D).classify(DyadicCube(0, (0,) * cfg.dimension))
    return SweepRow(
        instance=i, seed=seed, dimension=cfg.dimension, level=cfg.level, p=p, D=float(D),
        ap=ap, full_testing=full, restricted_testing=rt.value, qualifying=rt.count,
        norm_lower_bound=norm, ratio=_safe_ratio(norm, ap + rt.value),
        count_T=rep.count("T"), count_U=rep.count("U"), count_A=rep.count("A"), count_R=rep.count("R"),
        runtime=time.perf_counter() - t0 if cfg.timing else 0.0,
    ).check()


def _map(fn, items, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def quantiles(values) -> dict:
    v = np.asarray(values, dtype=float)
    qs = {"min": 0.0, "q25": 0.25, "median": 0.5, "q75": 0.75, "q95": 0.95, "max": 1.0}
    return {k: float(np.quantile(v, q)) for k, q in qs.items()}


def cmd_equivalence(cfg: ExperimentConfig) -> tuple[list[SweepRow], dict]:
    """Per instance: norm lower bound, A_p and restricted testing constants, ``r = norm / (ap + P)``."""
    cfg = _default_models(cfg)
    rows = _map(_equivalence_row, [(cfg, i) for i in range(cfg.instances)], cfg.workers)
    summary = _header(cfg, D=_D(cfg), instances=cfg.instances, ratio_quantiles=quantiles([r.ratio for r in rows]))
    return rows, summary


# --- power weights -----------------------------------------------------------------

def power_pair(d: int, eps: float, L: int) -> tuple[WeightField, WeightField]:
    """``w = |x|^(d - eps)`` and ``sigma = |x|^(eps - d)`` on ``[-1, 1)^d``."""
    return power_weight(d, d - eps, L), power_weight(d, eps - d, L)


def origin_cube_masses(w: WeightField) -> tuple[np.ndarray, np.ndarray]:
    """Half-sides ``r`` (in cells) and masses ``w([-r, r)^d)`` for ``r = 1, 2, 4, ..., n/2``."""
    half = w.n // 2
    rs = [1 << j for j in range(w.L)]
    masses = []
    for r in rs:
        lo, hi = half - r, half + r
        masses.append(float(w.measure(w.cell_interval(
            [float(w.origin[i]) + lo * float(w.cell_side) for i in range(w.d)],
            [float(w.origin[i]) + hi * float(w.cell_side) for i in range(w.d)]))))
    return np.asarray(rs, dtype=float) * float(w.cell_side), np.asarray(masses)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def cmd_power_weight(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Sweep ``eps``: classical A_2 characteristic, origin mass exponent, doubling ratio, norm bound."""
    d, L = cfg.dimension, cfg.level
    rows = []
    for eps in cfg.epsilons:
        w, sigma = power_pair(d, eps, L)
        a2 = ap_constant(w, sigma, 2.0).value ** 2
        radii, masses = origin_cube_masses(w)
        fit = slice(min(3, len(radii) - 2), None)
        exponent = loglog_slope(radii[fit], masses[fit])
        doubling = float(masses[-1] / masses[-2])
        wn, sn = power_pair(d, eps, min(L, cfg.norm_level))
        norm = norm_lower_bound(wn, sn, 2.0, budget=cfg.budget, seed=cfg.seed).value
        rows.append({"epsilon": eps, "a2": a2, "mass_exponent": exponent,
                     "doubling_ratio": doubling, "doubling_target": 2.0 ** (2 * d - eps),
                     "norm_lower_bound": norm})
    eps = [r["epsilon"] for r in rows]
    slopes = {"a2_slope": loglog_slope(eps, [r["a2"] for r in rows]) if len(rows) > 1 else math.nan,
              "norm_slope": loglog_slope(eps, [r["norm_lower_bound"] for r in rows]) if len(rows) > 1 else math.nan}
    for r in rows:
        r.update(slopes)
    return rows, _header(cfg, norm_level=min(L, cfg.norm_level), **slopes)


# --- D threshold -------------------------------------------------------------------

def default_D_grid(d: int) -> list[float]:
    """Quarter-octave grid over ``[2^d, 2^(4d)]``."""
    return [2.0 ** (d + j / 4) for j in range(12 * d + 1)]


def _threshold_pairs(cfg: ExperimentConfig):
    d, L = cfg.dimension, cfg.level
    yield "power", *power_pair(d, cfg.epsilon, L)
    for i in range(max(1, cfg.instances)):
        seed = _instance_seed(cfg, i)
        w = uniform_field(d, L)
        sigma = build_weight(cfg.sigma or {"kind": "atoms", "count": 3, "amplitude": 1.0}, d, L, seed)
        yield f"atoms-{i}", w, sigma


def cmd_dthreshold(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Restricted testing constant and qualifying count across a D grid."""
    grid = sorted(cfg.D_grid or default_D_grid(cfg.dimension))
    threshold = paper_D(cfg.dimension, 2.0)
    rows = []
    for name, w, sigma in _threshold_pairs(cfg):
        ap = ap_constant(w, sigma, 2.0).value
        norm = norm_lower_bound(w, sigma, 2.0, budget=cfg.budget, seed=cfg.seed).value
        for D in grid:
            rt = restricted_testing_constant(w, sigma, 2.0, 2.0, D, parent_mode=cfg.parent_mode)
            rows.append({"pair": name, "D": D, "is_paper_D": D == threshold, "restricted_testing": rt.value,
                         "qualifying": rt.count, "ap": ap, "norm_lower_bound": norm,
                         "ratio": _safe_ratio(norm, ap + rt.value)})
    return rows, _header(cfg, p=2.0, rho=2.0, paper_D=threshold, D_grid=grid)


# --- Poisson and fractional --------------------------------------------------------

def cmd_poisson(cfg: ExperimentConfig) -> dict:
    """Poisson constants (direct and dual), norm lower bound and domination per instance."""
    d, L, p, D = cfg.dimension, cfg.level, cfg.p, _D(cfg)
    op = OperatorKind.dyadic_poisson()
    out = []
    for i in range(cfg.instances):
        seed = _instance_seed(cfg, i)
        sigma = build_weight(cfg.sigma, d, L, seed).as_float()
        w = build_halfspace(cfg.w, d, L, seed + 1)
        ap = poisson_ap_constant(w, sigma, p)
        reps = [ap,
                full_testing_constant(w, sigma, p, op),
                full_testing_constant(w, sigma, p, op, dual=True),
                restricted_testing_constant(w, sigma, p, cfg.rho, D, op, cfg.parent_mode),
                restricted_testing_constant(w, sigma, p, cfg.rho, D, op, cfg.parent_mode, dual=True)]
        norm = norm_lower_bound(w, sigma, p, op, budget=cfg.budget, seed=seed) if cfg.norm else None
        entry = {"instance": i, "seed": seed, "constants": [r.to_json() for r in reps]}
        if norm is not None:
            entry["constants"].append(norm.to_json())
            entry["ratio"] = _safe_ratio(norm.value, ap.value + reps[3].value + reps[4].value)
        density = np.asarray(sigma.masses, dtype=float) / float(sigma.cell_volume)
        entry["domination"] = poisson_domination(density, sigma, seed) if d == 1 and L <= 8 else None
        out.append(entry)
    return _header(cfg, D=D, rho=cfg.rho, instances=out)


def cmd_fractional(cfg: ExperimentConfig) -> dict:
    """Fractional A_{p,q} and testing constants (direct and dual) and norm lower bound."""
    d, L, p, D = cfg.dimension, cfg.level, cfg.p, _D(cfg)
    q = cfg.q if cfg.q is not None else p
    op = OperatorKind.dyadic_fractional(cfg.alpha)
    out = []
    for i in range(cfg.instances):
        seed = _instance_seed(cfg, i)
        w, sigma = _pair(cfg, seed, exact=False)
        apq = apq_constant(w, sigma, p, q, cfg.alpha)
        reps = [apq,
                full_testing_constant(w, sigma, p, op, q),
                full_testing_constant(w, sigma, p, op, q, dual=True),
                restricted_testing_constant(w, sigma, p, cfg.rho, D, op, cfg.parent_mode, q),
                restricted_testing_constant(w, sigma, p, cfg.rho, D, op, cfg.parent_mode, q, dual=True)]
        entry = {"instance": i, "seed": seed, "constants": [r.to_json() for r in reps]}
        if cfg.norm:
            norm = norm_lower_bound(w, sigma, p, op, budget=cfg.budget, seed=seed, q=q)
            entry["constants"].append(norm.to_json())
            entry["ratio"] = _safe_ratio(norm.value, apq.value + reps[3].value + reps[4].value)
        out.append(entry)
    return _header(cfg, q=q, alpha=cfg.alpha, D=D, rho=cfg.rho, dual_p=dual_exponent(p), instances=out)


COMMANDS = {
    "constants": cmd_constants,
    "decompose": cmd_decompose,
    "equivalence": cmd_equivalence,
    "power-weight": cmd_power_weight,
    "dthreshold": cmd_dthreshold,
    "poisson": cmd_poisson,
    "fractional": cmd_fractional,
}


def row_dict(row) -> dict:
    return asdict(row) if not isinstance(row, dict) else row
