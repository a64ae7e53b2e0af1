"""Run and experiment configuration: dataclasses, conversion to and from plain
dicts (the YAML file layout), hashing and validation.

File layout (all keys except ``env``, ``network`` and ``horizon`` optional)::

    horizon: 10000
    seed: 0                       # master seed of a single run
    seeds: [0, 1, 2]              # experiments: seed list
    high_type_fraction: 0.0
    env:
      dim: 1
      fields:
        - {type: holder_cone, peak: 0.9, center: [0.2], L: 1.0, gamma: 1.0}
        - {type: sine, amplitude: 0.3, frequency: 1.0, phase: 0.0, baseline: 0.5}
      drift: {type: none}         # or {type: rotation, stability: 5000}
                                  # or {type: abrupt_flips, period: 10000, fraction: 0.5}
      arrivals: {type: uniform}   # or {type: per_ca_group, boxes: [[[lo..], [hi..]], ...]}
      feedback: {p_r: 1.0}
    network:
      contents: [[0, 1], [2, 3]]  # global content ids per CA
      own_costs: [[0, 0], [0, 0]] # default all zero
      peer_costs: [[0, 0], [0, 0]]
    algorithm:                    # shared by all CAs; or a list with one entry per CA
      kind: discom                # discom | discom-w | hybrid-eps | uniform
      z: null                     # null -> 2γ/(3γ+d)
      divisor: 1
      slicing: null               # null -> slicing level from the horizon (or stability)
      stability: null             # discom-w: T_s
      half_window: null           # discom-w: null -> from T_s
      c_eps: 1.0                  # hybrid-eps
      c_max: null                 # must equal the largest content network if given
    sweep: {horizon: [...], p_r: [...], stability: [...], z: [...], divisor: [...], algorithm: [...]}
    output: out/
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import ConfigError, canonical_exponent, slicing_level
from .env import (
    AbruptFlips,
    CostMatrix,
    Environment,
    FeedbackConfig,
    HolderCone,
    NoDrift,
    PerCAGroup,
    RelevanceField,
    Rotation,
    SineLipschitz,
    UniformIID,
)
from .windowed import half_window

ALGORITHMS = ("discom", "discom-w", "hybrid-eps", "uniform")
SWEEP_AXES = ("horizon", "p_r", "stability", "z", "divisor", "algorithm")


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: str = "discom"
    z: Optional[float] = None
    divisor: float = 1.0
    slicing: Optional[int] = None
    stability: Optional[int] = None
    half_window: Optional[int] = None
    c_eps: float = 1.0
    c_max: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ALGORITHMS:
            raise ConfigError(f"algorithm.kind must be one of {ALGORITHMS}, got {self.kind!r}")
        if self.kind == "discom-w" and self.stability is None:
            raise ConfigError("algorithm.stability is required for discom-w")


@dataclass(frozen=True)
class SimConfig:
    env: Environment
    horizon: int
    algorithms: tuple[AlgorithmSpec, ...]
    seed: int = 0
    high_type_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if len(self.algorithms) == 1 and self.env.n_cas > 1:
            object.__setattr__(self, "algorithms", self.algorithms * self.env.n_cas)
        if len(self.algorithms) != self.env.n_cas:
            raise ConfigError(f"algorithm list has {len(self.algorithms)} entries for {self.env.n_cas} CAs")
        if not 0.0 <= self.high_type_fraction <= 1.0:
            raise ConfigError(f"high_type_fraction must lie in [0, 1], got {self.high_type_fraction}")

    @property
    def gamma(self) -> float:
        return self.env.holder_bound()[1]

    def z_for(self, spec: AlgorithmSpec) -> float:
        return spec.z if spec.z is not None else canonical_exponent(self.gamma, self.env.d)

    def slicing_for(self, spec: AlgorithmSpec) -> int:
        if spec.slicing is not None:
            return spec.slicing
        T = spec.stability if spec.kind == "discom-w" else self.horizon
        return slicing_level(int(T), self.gamma, self.env.d)

    def tau_for(self, spec: AlgorithmSpec) -> int:
        if spec.half_window is not None:
            return spec.half_window
        return half_window(int(spec.stability), self.gamma, self.env.d)

    def to_dict(self) -> dict:
        return sim_config_to_dict(self)

    def config_hash(self) -> str:
        return config_hash(self.to_dict())

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --- dict <-> dataclass ---------------------------------------------------------


def _field_from_dict(d: dict) -> Any:
    d = dict(d)
    kind = d.pop("type", None)
    try:
        if kind == "holder_cone":
            return HolderCone(peak=float(d["peak"]), center=tuple(d["center"]), L=float(d.get("L", 1.0)),
                              gamma=float(d.get("gamma", 1.0)))
        if kind == "sine":
            return SineLipschitz(amplitude=float(d["amplitude"]), frequency=float(d["frequency"]),
                                 phase=float(d.get("phase", 0.0)), baseline=float(d.get("baseline", 0.5)))
    except KeyError as e:
        raise ConfigError(f"env.fields entry of type {kind} is missing key {e}") from None
    raise ConfigError(f"env.fields entry has unknown type {kind!r}")


def _field_to_dict(f: Any) -> dict:
    if isinstance(f, HolderCone):
        return {"type": "holder_cone", "peak": f.peak, "center": list(f.center), "L": f.L, "gamma": f.gamma}
    return {"type": "sine", "amplitude": f.amplitude, "frequency": f.frequency, "phase": f.phase,
            "baseline": f.baseline}


def _drift_from_dict(d: Optional[dict]) -> Any:
    if not d or d.get("type", "none") == "none":
        return NoDrift()
    kind = d["type"]
    if kind == "rotation":
        return Rotation(stability=float(d["stability"]))
    if kind == "abrupt_flips":
        seed = d.get("seed")
        return AbruptFlips(period=int(d["period"]), fraction=float(d["fraction"]),
                           seed=None if seed is None else int(seed))
    raise ConfigError(f"env.drift.type must be none, rotation or abrupt_flips, got {kind!r}")


def _drift_to_dict(dr: Any) -> dict:
    if isinstance(dr, Rotation):
        return {"type": "rotation", "stability": dr.stability}
    if isinstance(dr, AbruptFlips):
        return {"type": "abrupt_flips", "period": dr.period, "fraction": dr.fraction, "seed": dr.seed}
    return {"type": "none"}


def _arrivals_from_dict(d: Optional[dict]) -> Any:
    if not d or d.get("type", "uniform") == "uniform":
        return UniformIID()
    if d["type"] == "per_ca_group":
        boxes = tuple((tuple(map(float, lo)), tuple(map(float, hi))) for lo, hi in d["boxes"])
        return PerCAGroup(boxes)
    raise ConfigError(f"env.arrivals.type must be uniform or per_ca_group, got {d['type']!r}")


def _arrivals_to_dict(a: Any) -> dict:
    if isinstance(a, PerCAGroup):
        return {"type": "per_ca_group", "boxes": [[list(lo), list(hi)] for lo, hi in a.boxes]}
    return {"type": "uniform"}


def env_from_dict(env: dict, network: dict) -> Environment:
    try:
        dim = int(env["dim"])
        fields = tuple(_field_from_dict(f) for f in env["fields"])
        contents = network["contents"]
    except KeyError as e:
        raise ConfigError(f"missing required key {e}") from None
    M = len(contents)
    own = network.get("own_costs") or [[0.0] * len(n) for n in contents]
    peer = network.get("peer_costs") or [[0.0] * M for _ in range(M)]
    for f in fields:
        if isinstance(f, HolderCone) and len(f.center) != dim:
            raise ConfigError(f"env.fields: cone center {f.center} does not match env.dim={dim}")
    return Environment(
        d=dim,
        relevance=RelevanceField(fields, _drift_from_dict(env.get("drift"))),
        networks=tuple(tuple(n) for n in contents),
        costs=CostMatrix(tuple(map(tuple, own)), tuple(map(tuple, peer))),
        arrivals=_arrivals_from_dict(env.get("arrivals")),
        feedback=FeedbackConfig(float((env.get("feedback") or {}).get("p_r", 1.0))),
    )


def _algo_from_dict(d: dict) -> AlgorithmSpec:
    known = {f.name for f in dataclasses.fields(AlgorithmSpec)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"algorithm has unknown keys {sorted(unknown)}")
    return AlgorithmSpec(**d)


def sim_config_from_dict(d: dict) -> SimConfig:
    for key in ("env", "network", "horizon"):
        if key not in d:
            raise ConfigError(f"missing required key {key!r}")
    algo = d.get("algorithm") or {}
    algos = tuple(_algo_from_dict(a) for a in algo) if isinstance(algo, list) else (_algo_from_dict(algo),)
    return SimConfig(
        env=env_from_dict(d["env"], d["network"]),
        horizon=int(d["horizon"]),
        algorithms=algos,
        seed=int(d.get("seed", 0)),
        high_type_fraction=float(d.get("high_type_fraction", 0.0)),
    )


def sim_config_to_dict(cfg: SimConfig) -> dict:
    env = cfg.env
    return {
        "horizon": cfg.horizon,
        "seed": cfg.seed,
        "high_type_fraction": cfg.high_type_fraction,
        "env": {
            "dim": env.d,
            "fields": [_field_to_dict(f) for f in env.relevance.fields],
            "drift": _drift_to_dict(env.relevance.drift),
            "arrivals": _arrivals_to_dict(env.arrivals),
            "feedback": {"p_r": env.feedback.p_r},
        },
        "network": {
            "contents": [list(n) for n in env.networks],
            "own_costs": [list(r) for r in env.costs.own],
            "peer_costs": [list(r) for r in env.costs.peer],
        },
        "algorithm": [dataclasses.asdict(a) for a in cfg.algorithms],
    }


def load_yaml(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


# --- experiments ----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    base: dict
    seeds: tuple[int, ...]
    sweep: dict = field(default_factory=dict)
    output: str = "out"

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must be a nonempty list")
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise ConfigError(f"sweep.{axis} is not a sweep axis (choose from {SWEEP_AXES})")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep.{axis} must be a nonempty list")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        seeds = d.get("seeds")
        if seeds is None:
            seeds = [d.get("seed", 0)]
        if not isinstance(seeds, list):
            raise ConfigError("seeds must be a list of integers")
        base = {k: v for k, v in d.items() if k not in ("seeds", "sweep", "output")}
        return cls(base=base, seeds=tuple(int(s) for s in seeds), sweep=dict(d.get("sweep") or {}),
                   output=str(d.get("output", "out")))

    def points(self) -> list[dict]:
        """Every sweep point as an ``{axis: value}`` dict, in a fixed order."""
        axes = [a for a in SWEEP_AXES if a in self.sweep]
        return [dict(zip(axes, combo)) for combo in itertools.product(*(self.sweep[a] for a in axes))]

    def n_runs(self) -> int:
        return len(self.points()) * len(self.seeds)

    def config_at(self, point: dict, seed: int) -> SimConfig:
        return sim_config_from_dict(apply_point(self.base, point, seed))


def apply_point(base: dict, point: dict, seed: int) -> dict:
    d = json.loads(json.dumps(base))
    d["seed"] = seed
    algo = d.get("algorithm") or {}
    algos = algo if isinstance(algo, list) else [algo]
    for axis, value in point.items():
        if axis == "horizon":
            d["horizon"] = value
        elif axis == "p_r":
            d["env"].setdefault("feedback", {})["p_r"] = value
        else:
            key = "kind" if axis == "algorithm" else axis
            for a in algos:
                a[key] = value
    d["algorithm"] = algo if isinstance(algo, list) else algos[0]
    return d


def point_label(point: dict) -> str:
    if not point:
        return "base"
    return "_".join(f"{k}={v}" for k, v in point.items()).replace("/", "-")


# --- validation -----------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    key: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.key}: {self.message}"


def validate_config(raw: dict) -> list[Diagnostic]:
    """Diagnostics for a raw config dict; never raises."""
    out: list[Diagnostic] = []

    def err(key: str, msg: str) -> None:
        out.append(Diagnostic("error", key, msg))

    def warn(key: str, msg: str) -> None:
        out.append(Diagnostic("warning", key, msg))

    network = raw.get("network") or {}
    for name in ("own_costs", "peer_costs"):
        for i, row in enumerate(network.get(name) or []):
            for k, v in enumerate(row):
                if not 0.0 <= float(v) <= 1.0:
                    err(f"network.{name}[{i}][{k}]", f"cost {v} outside [0, 1]")
    if any(d.level == "error" for d in out):
        return out
    try:
        cfg = sim_config_from_dict(raw)
        gamma = cfg.gamma
    except (ConfigError, ValueError, TypeError) as e:
        err("config", str(e))
        return out
    c_max = cfg.env.c_max
    z_canon = canonical_exponent(gamma, cfg.env.d)
    for i, spec in enumerate(cfg.algorithms):
        key = "algorithm" if len(set(cfg.algorithms)) == 1 else f"algorithm[{i}]"
        if spec.c_max is not None and spec.c_max != c_max:
            err(f"{key}.c_max", f"c_max={spec.c_max} but the largest content network has {c_max} contents")
        if spec.kind in ("discom", "discom-w"):
            if spec.z is not None and abs(spec.z - z_canon) > 1e-12:
                warn(f"{key}.z", f"z={spec.z} differs from the canonical {z_canon:g} = 2γ/(3γ+d)")
            T = spec.stability if spec.kind == "discom-w" else cfg.horizon
            m_canon = slicing_level(int(T), gamma, cfg.env.d)
            if spec.slicing is not None and spec.slicing != m_canon:
                warn(f"{key}.slicing", f"slicing={spec.slicing} differs from the canonical {m_canon}")
            if spec.divisor < 1:
                err(f"{key}.divisor", f"divisor must be >= 1, got {spec.divisor}")
        if spec.kind == "discom-w" and spec.half_window is not None:
            tau = half_window(int(spec.stability), gamma, cfg.env.d)
            if spec.half_window != tau:
                warn(f"{key}.half_window", f"half_window={spec.half_window} differs from the canonical {tau}")
        if i == 0 and len(set(cfg.algorithms)) == 1:
            break
    return out
