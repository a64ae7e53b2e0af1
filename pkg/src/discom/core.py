"""Shared domain types: contexts, matching actions, the uniform partition and
the control-function formulas used by every learner."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence, Tuple

import numpy as np

CellId = Tuple[int, ...]


class ConfigError(ValueError):
    """Raised for invalid configuration or inconsistent inputs."""


class ActionKind(enum.IntEnum):
    OWN = 0
    PEER = 1


class Action(NamedTuple):
    """A matching action: one of the CA's own contents or a peer CA.

    Tuples sort in canonical order: own contents first, then peers, each by index.
    """

    kind: ActionKind
    index: int

    @classmethod
    def own(cls, index: int) -> "Action":
        return cls(ActionKind.OWN, index)

    @classmethod
    def peer(cls, ca: int) -> "Action":
        return cls(ActionKind.PEER, ca)

    @property
    def is_peer(self) -> bool:
        return self.kind is ActionKind.PEER

    def label(self) -> str:
        return f"{'peer' if self.kind is ActionKind.PEER else 'own'}:{self.index}"

    @classmethod
    def parse(cls, text: str) -> "Action":
        kind, _, index = text.partition(":")
        if kind not in ("own", "peer"):
            raise ValueError(f"bad action label {text!r}")
        return cls(ActionKind.PEER if kind == "peer" else ActionKind.OWN, int(index))


class Phase(str, enum.Enum):
    TRAIN = "train"
    EXPLORE_OWN = "explore_own"
    EXPLORE_PEER = "explore_peer"
    EXPLOIT = "exploit"

    @property
    def code(self) -> int:
        return _PHASE_CODES[self]


_PHASE_CODES = {p: i for i, p in enumerate(Phase)}
PHASES = tuple(Phase)


def validate_context(x: Sequence[float], d: int) -> None:
    if len(x) != d:
        raise ConfigError(f"context has dimension {len(x)}, expected {d}")
    for v in x:
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"context coordinate {v} outside [0, 1]")


@dataclass(frozen=True)
class Partition:
    """Uniform slicing of [0,1]^d into m^d cubes of edge 1/m anchored at the origin.

    Cells are half-open ``[k/m, (k+1)/m)`` along each axis except the last,
    which is closed so that 1.0 belongs to cell ``m - 1``.
    """

    d: int
    m: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigError(f"partition dimension must be >= 1, got {self.d}")
        if self.m < 1:
            raise ConfigError(f"slicing level must be >= 1, got {self.m}")

    @property
    def n_cells(self) -> int:
        return self.m**self.d

    @property
    def edge(self) -> float:
        return 1.0 / self.m

    def cells(self) -> Iterator[CellId]:
        return itertools.product(range(self.m), repeat=self.d)

    def locate(self, x: Sequence[float]) -> CellId:
        m = self.m
        return tuple(min(int(v * m), m - 1) for v in x)

    def locate_many(self, xs: np.ndarray) -> list[CellId]:
        """Vectorised ``locate`` for an ``(n, d)`` array of valid contexts."""
        idx = np.minimum(np.floor(np.asarray(xs) * self.m).astype(np.int64), self.m - 1)
        return [tuple(row) for row in idx.tolist()]

    def bounds(self, cell: CellId) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(cell, dtype=float) / self.m
        return lo, lo + 1.0 / self.m

    def contains(self, cell: CellId) -> bool:
        return len(cell) == self.d and all(0 <= k < self.m for k in cell)


def build_partition(d: int, m: int) -> Partition:
    return Partition(d, m)


def locate_cell(p: Partition, x: Sequence[float]) -> CellId:
    validate_context(x, p.d)
    return p.locate(x)


def cell_center(p: Partition, cell: CellId) -> tuple[float, ...]:
    if not p.contains(cell):
        raise ConfigError(f"cell {cell} not in partition with d={p.d}, m={p.m}")
    return tuple((k + 0.5) / p.m for k in cell)


def _snap(r: float) -> float:
    # float powers like 16 ** 0.25 can land a hair off an exact integer
    k = round(r)
    return float(k) if abs(r - k) <= 1e-9 * max(1.0, abs(r)) else r


def canonical_exponent(gamma: float, d: int) -> float:
    """Control-function exponent 2γ/(3γ+d) that balances the regret terms."""
    return 2.0 * gamma / (3.0 * gamma + d)


def slicing_level(T: int, gamma: float, d: int) -> int:
    """m_T = ceil(T^(1/(3γ+d)))."""
    if T < 1 or gamma <= 0 or d < 1:
        raise ConfigError(f"slicing_level needs T>=1, gamma>0, d>=1 (got {T}, {gamma}, {d})")
    return max(1, math.ceil(_snap(T ** (1.0 / (3.0 * gamma + d)))))


@dataclass(frozen=True)
class ControlParams:
    """Parameters of the three control functions.

    ``divisor`` scales all three functions down; 1 gives the theoretical values.
    """

    z: float
    c_max: int
    divisor: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.z < 1.0:
            raise ConfigError(f"control exponent z must lie in (0, 1), got {self.z}")
        if self.c_max < 1:
            raise ConfigError(f"c_max must be a positive integer, got {self.c_max}")
        if self.divisor < 1.0:
            raise ConfigError(f"control divisor must be >= 1, got {self.divisor}")


def _base_control(u: float, params: ControlParams) -> tuple[float, float, float]:
    h = u**params.z * math.log(u) / params.divisor
    return h, params.c_max * h, h


def control_values(t: int, params: ControlParams) -> tuple[float, float, float]:
    """(H1, H2, H3) at slot ``t``: H1 = H3 = t^z ln t / divisor, H2 = C_max * H1."""
    if t < 1:
        raise ConfigError(f"slot index must be >= 1, got {t}")
    return _base_control(float(t), params)


def confidence_radius(T: int, L: float, gamma: float, d: int) -> float:
    """δ_T = (6 L d^(γ/2) + 6) T^(-γ/(3γ+d))."""
    if T < 1:
        raise ConfigError(f"horizon must be >= 1, got {T}")
    return (6.0 * L * d ** (gamma / 2.0) + 6.0) * T ** (-gamma / (3.0 * gamma + d))

