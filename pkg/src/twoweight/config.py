"""Experiment configuration and weight descriptors."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .operators import SizeGuardError
from .weights import (
    HalfSpaceField,
    Lognormal,
    SparseAtoms,
    WeightField,
    load_field,
    power_weight,
    random_field,
    random_halfspace,
    uniform_field,
    uniform_halfspace,
)

SCHEMA_VERSION = 1
EXPERIMENTS = ("constants", "decompose", "equivalence", "power-weight", "dthreshold", "poisson", "fractional")
MAX_CELLS = 1 << 22


class ConfigError(ValueError):
    """Invalid configuration or malformed input file (exit code 2)."""


def _default_eps() -> list[float]:
    return [2.0 ** -j for j in range(2, 7)]


@dataclass
class ExperimentConfig:
    experiment: str = "constants"
    dimension: int = 1
    level: int = 6
    p: float = 2.0
    q: float | None = None
    rho: float = 2.0
    D: float | None = None
    alpha: float = 0.5
    epsilon: float = 0.25
    epsilons: list[float] = field(default_factory=_default_eps)
    D_grid: list[float] | None = None
    instances: int = 1
    seed: int = 0
    out: str | None = None
    exact: bool = False
    budget: int = 4
    norm: bool = False
    norm_level: int = 8
    parent_mode: str = "sliding"
    q0_max_level: int = 2
    sigma: dict | None = None
    w: dict | None = None
    workers: int = 1
    timing: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.p > 1:
            raise ConfigError("p must exceed 1")
        if self.q is not None and not self.q >= self.p:
            raise ConfigError("q must satisfy q >= p")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 1 < self.rho <= 2:
            raise ConfigError("rho must lie in (1, 2]")
        if self.D is not None and not self.D > 1:
            raise ConfigError("D must exceed 1")
        if self.dimension not in (1, 2):
            raise ConfigError("dimension must be 1 or 2")
        if self.level < 0 or self.instances < 1 or self.budget < 0:
            raise ConfigError("level, instances and budget must be nonnegative (instances >= 1)")
        if self.parent_mode not in ("dyadic", "sliding"):
            raise ConfigError("parent_mode must be 'dyadic' or 'sliding'")
        if any(not 0 < e < 0.5 for e in self.epsilons) or not 0 < self.epsilon < 0.5:
            raise ConfigError("epsilon values must lie in (0, 1/2)")
        if (1 << self.level) ** self.dimension > MAX_CELLS:
            raise SizeGuardError(f"lattice 2^{self.level} per side in d={self.dimension} exceeds "
                                    f"{MAX_CELLS} cells")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)


def build_weight(desc: dict | None, d: int, L: int, seed: int, exact: bool = False) -> WeightField:
    """Weight from a descriptor ``{"kind": uniform|power|lognormal|atoms|file, ...}``."""
    desc = dict(desc or {"kind": "uniform"})
    kind = desc.pop("kind", "uniform")
    seed = desc.pop("seed", seed)
    try:
        if kind == "uniform":
            return uniform_field(d, L, desc.get("density", 1), exact=exact)
        if kind == "power":
            f = power_weight(d, desc["exponent"], L)
            return f.as_exact() if exact else f
        if kind == "lognormal":
            return random_field(d, L, Lognormal(desc.get("mu", 0.0), desc.get("s", 1.0)), seed,
                                exact=exact, quantum=desc.get("quantum"))
        if kind == "atoms":
            return random_field(d, L, SparseAtoms(desc.get("count", 1), desc.get("amplitude", 1.0)),
                                seed, exact=exact, quantum=desc.get("quantum"))
        if kind == "file":
            f = load_field(desc["path"])
            if not isinstance(f, WeightField):
                raise ConfigError("expected a weight field file")
            return f.as_exact() if exact else f
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad weight descriptor {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown weight kind {kind!r}")


def build_halfspace(desc: dict | None, d: int, L: int, seed: int) -> HalfSpaceField:
    desc = dict(desc or {"kind": "uniform"})
    kind = desc.pop("kind", "uniform")
    seed = desc.pop("seed", seed)
    try:
        if kind == "uniform":
            return uniform_halfspace(d, L, desc.get("density", 1))
        if kind == "lognormal":
            return random_halfspace(d, L, Lognormal(desc.get("mu", 0.0), desc.get("s", 1.0)), seed)
        if kind == "atoms":
            return random_halfspace(d, L, SparseAtoms(desc.get("count", 1), desc.get("amplitude", 1.0)), seed)
        if kind == "file":
            f = load_field(desc["path"])
            if not isinstance(f, HalfSpaceField):
                raise ConfigError("expected a half-space field file")
            return f
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad half-space descriptor {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown half-space kind {kind!r}")
