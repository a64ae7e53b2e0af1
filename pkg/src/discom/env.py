"""Ground-truth world: relevance fields, drift, costs, arrivals, feedback and
the full-information oracle.

Learners never see anything in here except sampled feedback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import Action, ActionKind, ConfigError, validate_context


# --- relevance fields -------------------------------------------------------


@dataclass(frozen=True)
class SineLipschitz:
    """π(x) = baseline + amplitude * sin(2π ω Σ_k x_k + phase), clamped to [0, 1].

    Lipschitz (γ = 1) with constant amplitude * 2π ω √d.
    """

    amplitude: float
    frequency: float
    phase: float = 0.0
    baseline: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.amplitude <= 0.5:
            raise ConfigError(f"sine amplitude must lie in [0, 0.5], got {self.amplitude}")
        if self.frequency <= 0:
            raise ConfigError(f"sine frequency must be positive, got {self.frequency}")

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        arg = 2.0 * math.pi * self.frequency * xs.sum(axis=1) + self.phase
        return np.clip(self.baseline + self.amplitude * np.sin(arg), 0.0, 1.0)

    def holder(self, d: int) -> tuple[float, float]:
        return self.amplitude * 2.0 * math.pi * self.frequency * math.sqrt(d), 1.0


@dataclass(frozen=True)
class HolderCone:
    """π(x) = max(0, peak - L ||x - center||^γ); γ must lie in (0, 1]."""

    peak: float
    center: tuple[float, ...]
    L: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.peak <= 1.0:
            raise ConfigError(f"cone peak must lie in [0, 1], got {self.peak}")
        if self.L < 0:
            raise ConfigError(f"cone constant L must be >= 0, got {self.L}")
        # ||.||^γ is only subadditive for γ <= 1
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"cone exponent gamma must lie in (0, 1], got {self.gamma}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        validate_context(self.center, len(self.center))

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        dist = np.linalg.norm(xs - np.asarray(self.center), axis=1)
        return np.clip(self.peak - self.L * dist**self.gamma, 0.0, 1.0)

    def holder(self, d: int) -> tuple[float, float]:
        return self.L, self.gamma


Field = Union[SineLipschitz, HolderCone]


# --- drift --------------------------------------------------------------------


@dataclass(frozen=True)
class NoDrift:
    pass


@dataclass(frozen=True)
class Rotation:
    """Content roles rotate: content c at time t blends the base fields of
    contents (c + k) and (c + k + 1) (mod C) with weight frac(t / T_s), k = floor(t / T_s).

    Each field moves by at most |t - t'| / T_s, which is the drift-speed bound.
    """

    stability: float

    def __post_init__(self) -> None:
        if self.stability <= 0:
            raise ConfigError(f"rotation stability must be positive, got {self.stability}")


@dataclass(frozen=True)
class AbruptFlips:
    """Every ``period`` slots a fresh random subset of contents is zeroed for
    the following period. The first period is untouched.

    Deliberately outside the drift-speed assumption. ``seed=None`` means the
    run's master seed picks the subsets.
    """

    period: int
    fraction: float
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ConfigError(f"flip period must be >= 1, got {self.period}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError(f"flip fraction must lie in [0, 1], got {self.fraction}")

    def flipped(self, epoch: int, n_contents: int) -> np.ndarray:
        if epoch < 1:
            return np.zeros(0, dtype=np.int64)
        k = int(round(self.fraction * n_contents))
        rng = np.random.default_rng([int(self.seed or 0), int(epoch)])
        return np.sort(rng.choice(n_contents, size=k, replace=False))


Drift = Union[NoDrift, Rotation, AbruptFlips]


@dataclass(frozen=True)
class RelevanceField:
    """Relevance of every global content, optionally drifting in time."""

    fields: tuple[Field, ...]
    drift: Drift = NoDrift()

    def __post_init__(self) -> None:
        if not self.fields:
            raise ConfigError("at least one content field is required")
        object.__setattr__(self, "fields", tuple(self.fields))

    @property
    def n_contents(self) -> int:
        return len(self.fields)

    def static_matrix(self, xs: np.ndarray) -> np.ndarray:
        return np.column_stack([f.evaluate(xs) for f in self.fields])

    def matrix(self, xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
        """Relevance of all contents, shape ``(n, C)``, for contexts ``xs`` at slots ``ts``."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ts = np.broadcast_to(np.asarray(ts, dtype=np.int64), (xs.shape[0],))
        base = self.static_matrix(xs)
        drift = self.drift
        if isinstance(drift, Rotation):
            n_c = self.n_contents
            s = ts / drift.stability
            k = np.floor(s).astype(np.int64)
            w = (s - k)[:, None]
            cols = np.arange(n_c)[None, :] + k[:, None]
            rows = np.arange(xs.shape[0])[:, None]
            out = (1.0 - w) * base[rows, cols % n_c] + w * base[rows, (cols + 1) % n_c]
            return np.clip(out, 0.0, 1.0)
        if isinstance(drift, AbruptFlips):
            epochs = (ts - 1) // drift.period
            for e in np.unique(epochs):
                idx = drift.flipped(int(e), self.n_contents)
                if idx.size:
                    base[np.ix_(epochs == e, idx)] = 0.0
        return base

    def holder(self, c: int, d: int) -> tuple[float, float]:
        return self.fields[c].holder(d)


def relevance(field: RelevanceField, c: int, x: Sequence[float], t: int = 1) -> float:
    if not 0 <= c < field.n_contents:
        raise ConfigError(f"unknown content id {c}")
    return float(field.matrix(np.asarray([x], dtype=float), np.asarray([t]))[0, c])


# --- world --------------------------------------------------------------------


@dataclass(frozen=True)
class CostMatrix:
    """own[i][k]: cost for CA i of its k-th own content; peer[i][j]: cost of calling CA j."""

    own: tuple[tuple[float, ...], ...]
    peer: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "own", tuple(tuple(float(v) for v in row) for row in self.own))
        object.__setattr__(self, "peer", tuple(tuple(float(v) for v in row) for row in self.peer))
        for name, rows in (("own", self.own), ("peer", self.peer)):
            for i, row in enumerate(rows):
                for k, v in enumerate(row):
                    if not 0.0 <= v <= 1.0:
                        raise ConfigError(f"costs.{name}[{i}][{k}] = {v} outside [0, 1]")

    @classmethod
    def zeros(cls, networks: Sequence[Sequence[int]]) -> "CostMatrix":
        M = len(networks)
        return cls(tuple((0.0,) * len(n) for n in networks), tuple((0.0,) * M for _ in range(M)))


@dataclass(frozen=True)
class UniformIID:
    def sample(self, ca: int, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
        return rng.random((n, d))


@dataclass(frozen=True)
class PerCAGroup:
    """Each CA draws its users uniformly from its own sub-box ``[lo, hi]``."""

    boxes: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]

    def sample(self, ca: int, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = (np.asarray(v, dtype=float) for v in self.boxes[ca])
        if lo.shape != (d,) or hi.shape != (d,) or np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
            raise ConfigError(f"arrival box for CA {ca} is not a valid sub-box of [0,1]^{d}")
        return lo + (hi - lo) * rng.random((n, d))


@dataclass(frozen=True)
class LogArrivals:
    """Contexts taken in order from logged rows, per CA."""

    contexts: tuple[np.ndarray, ...]

    def sample(self, ca: int, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
        xs = self.contexts[ca]
        if xs.shape[0] < n or xs.shape[1] != d:
            raise ConfigError(f"event log has {xs.shape[0]} rows of dim {xs.shape[1]} for CA {ca}; need {n} of dim {d}")
        return np.array(xs[:n], dtype=float)


ArrivalProcess = Union[UniformIID, PerCAGroup, LogArrivals]


@dataclass(frozen=True)
class FeedbackConfig:
    p_r: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.p_r <= 1.0:
            raise ConfigError(f"feedback probability p_r must lie in (0, 1], got {self.p_r}")


@dataclass(frozen=True)
class Environment:
    """Everything the oracle knows: fields, content networks, costs, user and feedback processes."""

    d: int
    relevance: RelevanceField
    networks: tuple[tuple[int, ...], ...]
    costs: CostMatrix
    arrivals: ArrivalProcess = UniformIID()
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "networks", tuple(tuple(int(c) for c in n) for n in self.networks))
        if self.d < 1:
            raise ConfigError(f"env.dim must be >= 1, got {self.d}")
        M = len(self.networks)
        if M < 1:
            raise ConfigError("network.contents must list at least one CA")
        for i, net in enumerate(self.networks):
            if not net:
                raise ConfigError(f"network.contents[{i}] is empty")
            for c in net:
                if not 0 <= c < self.relevance.n_contents:
                    raise ConfigError(f"network.contents[{i}] references unknown content {c}")
        if len(self.costs.own) != M or any(len(r) != len(n) for r, n in zip(self.costs.own, self.networks)):
            raise ConfigError("costs.own must have one row per CA matching its content list")
        if len(self.costs.peer) != M or any(len(r) != M for r in self.costs.peer):
            raise ConfigError("costs.peer must be an M x M matrix")
        if isinstance(self.arrivals, PerCAGroup) and len(self.arrivals.boxes) != M:
            raise ConfigError("arrivals.boxes must have one box per CA")

    @property
    def n_cas(self) -> int:
        return len(self.networks)

    @property
    def c_max(self) -> int:
        return max(len(n) for n in self.networks)

    def actions(self, ca: int) -> list[Action]:
        """Canonical action order: own contents, then peers ascending."""
        own = [Action.own(k) for k in range(len(self.networks[ca]))]
        return own + [Action.peer(j) for j in range(self.n_cas) if j != ca]

    def cost(self, ca: int, action: Action) -> float:
        if action.kind is ActionKind.OWN:
            return self.costs.own[ca][action.index]
        return self.costs.peer[ca][action.index]

    def served_content(self, ca: int, action: Action, peer_choice: Optional[int] = None) -> int:
        if action.kind is ActionKind.OWN:
            return self.networks[ca][action.index]
        if peer_choice is None:
            raise ValueError("peer action needs the peer's content choice")
        return self.networks[action.index][peer_choice]

    def net_reward_matrix(self, ca: int, pi: np.ndarray) -> np.ndarray:
        """μ for every action of ``ca`` (columns in canonical order) from a relevance matrix ``pi``."""
        cols = [pi[:, c] - self.costs.own[ca][k] for k, c in enumerate(self.networks[ca])]
        for j in range(self.n_cas):
            if j != ca:
                best = pi[:, list(self.networks[j])].max(axis=1)
                cols.append(best - self.costs.peer[ca][j])
        return np.column_stack(cols)

    def holder_bound(self) -> tuple[float, float]:
        """(L, γ) valid for every field; requires a common γ."""
        pairs = [f.holder(self.d) for f in self.relevance.fields]
        gammas = {g for _, g in pairs}
        if len(gammas) != 1:
            raise ConfigError(f"fields use different similarity exponents {sorted(gammas)}")
        return max(L for L, _ in pairs), gammas.pop()


def oracle_action(env: Environment, ca: int, x: Sequence[float], t: int = 1) -> tuple[Action, float]:
    """Best action under full knowledge; ties go to the lowest canonical action."""
    validate_context(x, env.d)
    pi = env.relevance.matrix(np.asarray([x], dtype=float), np.asarray([t]))
    mu = env.net_reward_matrix(ca, pi)[0]
    k = int(np.argmax(mu))
    return env.actions(ca)[k], float(mu[k])


def draw_feedback(env: Environment, c: int, x: Sequence[float], t: int, rng: np.random.Generator) -> int:
    return int(rng.random() < relevance(env.relevance, c, x, t))


def feedback_observed(cfg: FeedbackConfig, rng: np.random.Generator) -> bool:
    return bool(rng.random() < cfg.p_r)


# --- smoothness and drift audits ------------------------------------------


def audit_similarity(field: RelevanceField, d: int, n_probes: int, rng: np.random.Generator) -> float:
    """Largest excess of |π_c(x) - π_c(x')| over L ||x - x'||^γ across random pairs and contents."""
    xs, ys = rng.random((n_probes, d)), rng.random((n_probes, d))
    px, py = field.static_matrix(xs), field.static_matrix(ys)
    dist = np.linalg.norm(xs - ys, axis=1)
    worst = -np.inf
    for c, f in enumerate(field.fields):
        L, g = f.holder(d)
        worst = max(worst, float(np.max(np.abs(px[:, c] - py[:, c]) - L * dist**g)))
    return worst


def audit_drift(field: RelevanceField, d: int, n_probes: int, rng: np.random.Generator, t_max: int) -> float:
    """Largest excess of |π_{c,t}(x) - π_{c,t'}(x)| over |t - t'| / T_s."""
    if not isinstance(field.drift, Rotation):
        raise ConfigError("drift audit applies to rotation drift only")
    xs = rng.random((n_probes, d))
    t1 = rng.integers(1, t_max + 1, n_probes)
    t2 = rng.integers(1, t_max + 1, n_probes)
    diff = np.abs(field.matrix(xs, t1) - field.matrix(xs, t2))
    allowed = (np.abs(t1 - t2) / field.drift.stability)[:, None]
    return float(np.max(diff - allowed))
