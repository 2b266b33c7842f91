"""Broadcast-channel attacks. True states are never modified here."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError


class BroadcastAttack:
    """Step-indexed transformer of one agent's outgoing broadcast.

    Subclasses set ``target`` and implement :meth:`corrupt`.
    """

    target: int

    def active(self, k: int) -> bool:
        raise NotImplementedError

    def corrupt(self, value: np.ndarray, k: int) -> np.ndarray:
        raise NotImplementedError

    def window(self) -> tuple[int, Optional[int]]:
        raise NotImplementedError


@dataclass(frozen=True)
class SpoofAttack(BroadcastAttack):
    """Constant-offset spoof: the target broadcasts ``x + offset`` while active."""

    target: int
    offset: tuple[float, ...]
    start_step: int = 0
    end_step: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "offset", tuple(float(v) for v in self.offset))
        if self.target < 0:
            raise ConfigurationError(f"attack target must be >= 0, got {self.target}", "target")
        if self.start_step < 0:
            raise ConfigurationError(f"start_step must be >= 0, got {self.start_step}", "start_step")
        if self.end_step is not None and self.end_step < self.start_step:
            raise ConfigurationError(
                f"end_step {self.end_step} precedes start_step {self.start_step}", "end_step"
            )

    def active(self, k: int) -> bool:
        return k >= self.start_step and (self.end_step is None or k <= self.end_step)

    def corrupt(self, value, k):
        return value + np.asarray(self.offset) if self.active(k) else value

    def window(self):
        return self.start_step, self.end_step


def validate_attacks(attacks: Sequence[BroadcastAttack], n_agents: int, dim: int) -> None:
    """Reject out-of-range targets, wrong offset sizes and overlapping attacks on one target."""
    by_target: dict[int, list[BroadcastAttack]] = {}
    for idx, atk in enumerate(attacks):
        if not 0 <= atk.target < n_agents:
            raise ConfigurationError(
                f"attack target {atk.target} out of range for {n_agents} agents", f"attacks[{idx}].target"
            )
        offset = getattr(atk, "offset", None)
        if offset is not None and len(offset) != dim:
            raise ConfigurationError(
                f"attack offset has {len(offset)} components, formation dimension is {dim}",
                f"attacks[{idx}].offset",
            )
        by_target.setdefault(atk.target, []).append(atk)
    for target, group in by_target.items():
        spans = sorted(a.window() for a in group)
        for (s0, e0), (s1, _) in zip(spans, spans[1:]):
            if e0 is None or s1 <= e0:
                raise ConfigurationError(f"two attacks on agent {target} are active at the same step", "attacks")


def corrupt_broadcasts(x_true: np.ndarray, attacks: Sequence[BroadcastAttack], k: int) -> np.ndarray:
    """Broadcast buffer ``Y`` for step ``k``: a copy of ``x_true`` with active attacks applied."""
    y = np.array(x_true, dtype=float, copy=True)
    for atk in attacks:
        if atk.active(k):
            y[atk.target] = atk.corrupt(y[atk.target], k)
    return y


def active_targets(attacks: Sequence[BroadcastAttack], k: int) -> frozenset[int]:
    return frozenset(a.target for a in attacks if a.active(k))


@dataclass(frozen=True)
class SelectorMask:
    attacked: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "attacked", frozenset(int(i) for i in self.attacked))


def selector_matrix(mask: SelectorMask, n_agents: int, dim: int) -> np.ndarray:
    """Block-diagonal 0/1 matrix with ``I_n`` blocks on attacked agents."""
    for i in mask.attacked:
        if not 0 <= i < n_agents:
            raise ConfigurationError(f"selector index {i} out of range for {n_agents} agents")
    diag = np.zeros(n_agents)
    diag[list(mask.attacked)] = 1.0
    return np.kron(np.diag(diag), np.eye(dim))
