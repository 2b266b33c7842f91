"""Synchronous closed-loop formation update and its stacked matrix form.

The update every agent runs is::

    x_i[k+1] = x_i[k] - dt * sum_{j in N_i} (x_i[k] - y_j[k] - d_ij)

so the stacked closed-loop matrix acting on deviations from the desired
formation is ``I - dt (L ⊗ I_n) + K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ShapeError
from .formation import FormationSpec
from .graph import Graph, kron_expand, laplacian
from .mitigation import readings_aggregate


@dataclass(frozen=True, eq=False)
class StepParams:
    dt: float = 0.05
    gain: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}", "dt")


@dataclass(eq=False)
class SimState:
    k: int
    x_true: np.ndarray
    broadcasts: np.ndarray
    flags: np.ndarray
    predictions: Optional[np.ndarray] = None
    attacked: frozenset = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.x_true.shape != self.broadcasts.shape:
            raise ShapeError(f"state shape {self.x_true.shape} != broadcast shape {self.broadcasts.shape}")
        if self.flags.shape[0] != self.x_true.shape[0]:
            raise ShapeError("flags must have one row per agent")


def apply_update(x: np.ndarray, aggregate: np.ndarray, spec: FormationSpec, p: StepParams) -> np.ndarray:
    """``x - dt * aggregate``, plus the optional linear gain on deviations."""
    x_next = x - p.dt * aggregate
    if p.gain is not None:
        dev = (x - spec.positions).ravel()
        x_next = x_next + (p.gain @ dev).reshape(x.shape)
    return x_next


def nominal_step(state: SimState, spec: FormationSpec, g: Graph, p: StepParams, readings: np.ndarray) -> SimState:
    """Advance all agents one step from the readings each one uses.

    ``readings[i, j]`` is the value agent ``i`` uses for neighbor ``j`` after
    mitigation. Entries for non-edges are ignored; NaN on an edge is an error.
    """
    agg = readings_aggregate(state.x_true, readings, g, spec)
    return replace(state, k=state.k + 1, x_true=apply_update(state.x_true, agg, spec, p))


def closed_loop_matrix(g: Graph, n: int, p) -> np.ndarray:
    """``I + c_G (L ⊗ I_n) + K`` with ``c_G = -dt``.

    ``p`` is a :class:`StepParams` or a bare step size (which may be 0 for
    analysis).
    """
    if isinstance(p, StepParams):
        dt, gain = p.dt, p.gain
    else:
        dt, gain = float(p), None
    gamma = np.eye(g.n_nodes * n) - dt * kron_expand(laplacian(g).L, n)
    if gain is not None:
        gamma = gamma + gain
    return gamma


def attacked_step_reference(
    X,
    gamma: np.ndarray,
    selector: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    block_size: Optional[int] = None,
) -> np.ndarray:
    """``X+ = Gamma X - P f(X)``.

    With ``block_size`` set, ``f`` is applied to each length-``block_size``
    block; otherwise to the whole vector.
    """
    X = np.asarray(X, dtype=float)
    if block_size is None:
        fx = np.asarray(f(X), dtype=float)
    else:
        fx = np.asarray(f(X.reshape(-1, block_size)), dtype=float).reshape(X.shape)
    return gamma @ X - selector @ fx
