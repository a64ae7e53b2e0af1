"""DISCOM-W: overlapping rounds of length 2*tau_h, each run by a fresh DISCOM
instance that learns passively during its first half and decides during its
second half.

Slots are grouped in blocks of tau_h. Block 1 and block 2 form the
initialization round, decided entirely by instance 1. From block 2 on,
instance b learns passively in block b and decides in block b+1.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .core import CellId, ConfigError, ControlParams, Partition, _base_control, _snap, control_values
from .learner import Decision, DiscomLearner


def half_window(T_s: int, gamma: float, d: int) -> int:
    """tau_h = floor(T_s^((3γ+d)/(4γ+d)))."""
    if T_s < 1:
        raise ConfigError(f"stability parameter must be >= 1, got {T_s}")
    return max(1, math.floor(_snap(T_s ** ((3.0 * gamma + d) / (4.0 * gamma + d)))))


def windowed_control_values(t: int, tau_h: int, params: ControlParams) -> tuple[float, float, float]:
    """Control values at u = (t mod tau_h) + 1."""
    if t < 1 or tau_h < 1:
        raise ConfigError(f"need t >= 1 and tau_h >= 1 (got {t}, {tau_h})")
    return _base_control(float(t % tau_h + 1), params)


@dataclass(frozen=True)
class WindowSchedule:
    tau_h: int

    def __post_init__(self) -> None:
        if self.tau_h < 1:
            raise ConfigError(f"half window must be >= 1, got {self.tau_h}")

    def block(self, t: int) -> int:
        return (t - 1) // self.tau_h + 1

    def selecting(self, t: int) -> int:
        """Index of the instance whose active sub-round contains ``t``."""
        return max(1, self.block(t) - 1)

    def live(self, t: int) -> tuple[int, ...]:
        """Instances updated by the outcome at ``t`` (selecting one first)."""
        b = self.block(t)
        return (1,) if b == 1 else (b - 1, b)

    def round_span(self, eta: int) -> tuple[int, int]:
        """First and last slot of round ``eta``."""
        if eta == 1:
            return 1, 2 * self.tau_h
        return (eta - 1) * self.tau_h + 1, (eta + 1) * self.tau_h


class DiscomW:
    """Time-windowed wrapper presenting the same interface as :class:`DiscomLearner`.

    Call :meth:`begin_slot` at the start of every slot before any other method.
    """

    kind = "discom-w"

    def __init__(
        self,
        ca: int,
        n_own: int,
        n_cas: int,
        partition: Partition,
        control: ControlParams,
        own_costs: Sequence[float],
        peer_costs: Sequence[float],
        rng: random.Random,
        tau_h: int,
    ) -> None:
        self.ca = ca
        self.partition = partition
        self.control = control
        self.schedule = WindowSchedule(tau_h)
        self._make: Callable[[int], DiscomLearner] = lambda eta: DiscomLearner(
            ca, n_own, n_cas, partition, control, own_costs, peer_costs, rng,
            thresholds=(lambda t: control_values(t, control)) if eta == 1
            else (lambda t: windowed_control_values(t, tau_h, control)),
        )
        self.instances: dict[int, DiscomLearner] = {}
        self.retired: set[int] = set()
        self.t = 0
        self.selecting_instance = 0
        self._live: tuple[int, ...] = ()

    def begin_slot(self, t: int) -> None:
        if t == self.t:
            return
        if t < self.t:
            raise ValueError(f"slots must advance (at {self.t}, got {t})")
        live = self.schedule.live(t)
        for eta in list(self.instances):
            if eta not in live:
                del self.instances[eta]
                self.retired.add(eta)
        for eta in live:
            if eta not in self.instances:
                if eta in self.retired:
                    raise RuntimeError(f"instance {eta} revived after retirement")
                self.instances[eta] = self._make(eta)
        self.t = t
        self._live = live
        self.selecting_instance = live[0]

    @property
    def active(self) -> DiscomLearner:
        return self.instances[self.selecting_instance]

    @property
    def passive(self) -> Optional[DiscomLearner]:
        return self.instances[self._live[1]] if len(self._live) > 1 else None

    def select(self, cell: CellId, t: int, report=None, *, force_exploit: bool = False, commit: bool = True) -> Decision:
        self.begin_slot(t)
        return self.active.select(cell, t, report, force_exploit=force_exploit, commit=commit)

    def apply_reports(self, decision: Decision) -> None:
        self.active.apply_reports(decision)

    def record_outcome(self, decision: Decision, reward: Optional[int]) -> None:
        for eta in self._live:
            self.instances[eta].record_outcome(decision, reward)

    def cooperate_select(self, cell: CellId, t: int) -> int:
        self.begin_slot(t)
        return self.active.cooperate_select(cell, t)

    def record_cooperation_outcome(self, content: int, cell: CellId, reward: Optional[int]) -> None:
        for eta in self._live:
            self.instances[eta].record_cooperation_outcome(content, cell, reward)

    def report_cell_count(self, cell: CellId) -> int:
        return self.active.report_cell_count(cell)

    def state_dict(self) -> dict:
        return {eta: inst.state_dict() for eta, inst in sorted(self.instances.items())}
