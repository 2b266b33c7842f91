"""Residual-based detection of spoofed neighbors.

Every observer ``i`` keeps a model prediction ``x̂_j`` of each neighbor ``j``,
driven by the same update law the neighbor runs. A neighbor whose broadcast
drifts from its prediction by more than the observer's threshold is flagged,
and flags are sticky for the rest of the trial.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dynamics import StepParams
from .errors import CalibrationError
from .formation import FormationSpec
from .graph import Graph
from .mitigation import HallucinationParams, formation_pull, hallucinate

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ThresholdProfile:
    mean: np.ndarray
    std: np.ndarray
    kappa: float = 4.0
    floor: float = 1e-6

    def __post_init__(self) -> None:
        if not self.floor > 0:
            raise CalibrationError(f"threshold floor must be positive, got {self.floor}")
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=float))

    @property
    def thresholds(self) -> np.ndarray:
        return np.maximum(self.mean + self.kappa * self.std, self.floor)

    @classmethod
    def uncalibrated(cls, n_agents: int, kappa: float = 4.0, floor: float = 1e-6) -> "ThresholdProfile":
        """Profile of a perfectly quiet channel: every threshold sits at the floor."""
        return cls(np.zeros(n_agents), np.zeros(n_agents), kappa, floor)


@dataclass(frozen=True, eq=False)
class PredictionState:
    """``predictions[i, j]`` is observer ``i``'s model of agent ``j``.

    Entries for non-neighbors are carried along but never read.
    """

    predictions: np.ndarray
    flags: np.ndarray
    observable: np.ndarray
    degraded: tuple[tuple[int, int], ...] = field(default=())


def observability(g: Graph) -> np.ndarray:
    """``obs[i, j]`` is True when ``i`` hears every neighbor of ``j`` (or is one)."""
    A = g.adjacency
    sees = A | np.eye(g.n_nodes, dtype=bool)
    # j's neighborhood must be contained in i's closed neighborhood
    covered = ~np.any(A[None, :, :] & ~sees[:, None, :], axis=2)
    return A & covered


def bootstrap(Y: np.ndarray, g: Graph) -> PredictionState:
    """Initial predictions equal the first received broadcasts."""
    N = g.n_nodes
    obs = observability(g)
    degraded = tuple((int(i), int(j)) for i, j in np.argwhere(g.adjacency & ~obs))
    for i, j in degraded:
        log.warning("observer %d cannot model neighbor %d; using zero-order hold", i, j)
    return PredictionState(
        predictions=np.broadcast_to(Y, (N,) + Y.shape).copy(),
        flags=np.zeros((N, N), dtype=bool),
        observable=obs,
        degraded=degraded,
    )


def propagate_prediction(
    state: PredictionState,
    Y: np.ndarray,
    spec: FormationSpec,
    g: Graph,
    p: StepParams,
    hallucination: Optional[HallucinationParams] = None,
) -> PredictionState:
    """One-step model update of every neighbor prediction.

    ``x̂_j <- x̂_j - dt * sum_{l in N_j} (x̂_j - r_jl - d_jl)`` where ``r_jl`` is
    ``Y[l]``, unless ``hallucination`` is given and the observer has flagged
    ``l``: then the observer assumes ``j`` disconnected ``l`` too and models
    the hallucinated reading ``j`` would use in its place.
    """
    P = state.predictions
    D = spec.displacements
    A = g.adjacency
    if hallucination is None or not state.flags.any():
        # same operation order as the agents' own update, so honest predictions are exact
        agg = g.degrees[None, :, None] * P - (A.astype(float) @ Y)[None] - formation_pull(g, spec)[None]
        stepped = P - p.dt * agg
        return replace(state, predictions=np.where(state.observable[:, :, None], stepped, P))
    # readings[i, j, l]: what observer i believes j uses for l
    readings = np.broadcast_to(Y[None, None, :, :], P.shape[:2] + Y.shape).copy()
    if hallucination is not None and state.flags.any():
        anchors = P[:, :, None, :] - D[None, :, :, :]
        fake = hallucinate(P[:, None, :, :], anchors, hallucination)
        mask = np.broadcast_to(state.flags[:, None, :], readings.shape[:3])
        readings[mask] = fake[mask]
    contrib = P[:, :, None, :] - readings - D[None, :, :, :]
    contrib = np.where(A[None, :, :, None], contrib, 0.0)
    stepped = P - p.dt * contrib.sum(axis=2)
    new = np.where(state.observable[:, :, None], stepped, P)
    return replace(state, predictions=new)


def neighbor_residuals(Y: np.ndarray, state: PredictionState, g: Graph) -> np.ndarray:
    """``(N, N)`` array of ``||y_j - x̂_j||`` seen by observer ``i``; zero off-edge."""
    gap = np.linalg.norm(Y[None, :, :] - state.predictions, axis=2)
    return np.where(g.adjacency, gap, 0.0)


def residual(i: int, Y: np.ndarray, state: PredictionState, g: Graph) -> float:
    """Aggregate residual ``r_i``: sum of per-neighbor gaps."""
    return float(neighbor_residuals(Y, state, g)[i].sum())


def calibrate(samples, kappa: float = 4.0, floor: float = 1e-6) -> ThresholdProfile:
    """Threshold profile from nominal residual samples.

    ``samples`` has shape ``(W, N)`` or ``(W, N, K)``; a trailing axis holds
    per-neighbor samples for each observer and is pooled. NaN entries are
    ignored. Standard deviations use the ``W - 1`` denominator.
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim < 2 or s.shape[0] == 0:
        raise CalibrationError("calibration window is empty")
    if s.shape[0] < 2:
        raise CalibrationError(f"calibration needs at least 2 samples per agent, got {s.shape[0]}")
    pooled = np.moveaxis(s, 1, 0).reshape(s.shape[1], -1)
    counts = np.sum(~np.isnan(pooled), axis=1)
    if np.any(counts < 2):
        raise CalibrationError("every agent needs at least 2 finite residual samples")
    mean = np.nanmean(pooled, axis=1)
    std = np.nanstd(pooled, axis=1, ddof=1)
    return ThresholdProfile(mean, std, kappa, floor)


def detect_all(Y: np.ndarray, state: PredictionState, profile: ThresholdProfile, g: Graph) -> np.ndarray:
    """Boolean ``(N, N)``: neighbor ``j`` exceeds observer ``i``'s threshold this step."""
    return neighbor_residuals(Y, state, g) > profile.thresholds[:, None]


def detect(i: int, Y: np.ndarray, state: PredictionState, profile: ThresholdProfile, g: Graph) -> frozenset[int]:
    return frozenset(int(j) for j in np.flatnonzero(detect_all(Y, state, profile, g)[i]))


def update_flags(state: PredictionState, exceed: np.ndarray) -> PredictionState:
    """Merge this step's exceedances into the sticky flag set."""
    return replace(state, flags=state.flags | exceed)
