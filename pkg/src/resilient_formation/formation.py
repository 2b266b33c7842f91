"""Desired formation geometry, edge errors and the progress metric V."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ShapeError, UnsupportedSpecError
from .graph import Graph, incidence


@dataclass(frozen=True, eq=False)
class FormationSpec:
    """Desired absolute positions, one row per agent.

    Pairwise displacements ``d_ij = p_i - p_j`` are derived from the
    positions, so they are antisymmetric and sum to zero around any cycle.
    """

    positions: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ShapeError(f"positions must be an (N, n) array, got shape {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @cached_property
    def displacements(self) -> np.ndarray:
        """``(N, N, n)`` array with ``[i, j] = d_ij``."""
        d = self.positions[:, None, :] - self.positions[None, :, :]
        d.setflags(write=False)
        return d

    def displacement(self, i: int, j: int) -> np.ndarray:
        return self.displacements[i, j]

    def stacked_displacements(self, g: Graph) -> np.ndarray:
        """Edge-stacked ``d`` in incidence-row order."""
        return np.concatenate([self.displacements[i, j] for i, j in g.edges]) if g.edges else np.zeros(0)

    def relabeled(self, perm) -> "FormationSpec":
        p = np.empty_like(self.positions)
        p[np.asarray(perm)] = self.positions
        return FormationSpec(p)


def regular_polygon_spec(n_agents: int, dim: int = 2, radius: float = 1.0) -> FormationSpec:
    """Agent ``i`` sits at angle ``2*pi*i/N`` on a circle centred at the origin."""
    if dim != 2:
        raise UnsupportedSpecError(f"regular polygon formations are planar, got dim={dim}")
    if n_agents < 3:
        raise UnsupportedSpecError(f"a polygon needs at least 3 vertices, got {n_agents}")
    if radius <= 0:
        raise UnsupportedSpecError(f"radius must be positive, got {radius}")
    theta = 2.0 * np.pi * np.arange(n_agents) / n_agents
    return FormationSpec(radius * np.column_stack([np.cos(theta), np.sin(theta)]))


def as_matrix(X, n_agents: int, dim: int) -> np.ndarray:
    """Accept a stacked ``N*n`` vector or an ``(N, n)`` array; return ``(N, n)``."""
    X = np.asarray(X, dtype=float)
    if X.shape == (n_agents, dim):
        return X
    if X.shape == (n_agents * dim,):
        return X.reshape(n_agents, dim)
    raise ShapeError(f"expected {n_agents * dim} stacked values or shape ({n_agents}, {dim}), got {X.shape}")


def _check(spec: FormationSpec, g: Graph) -> None:
    if spec.n_agents != g.n_nodes:
        raise ShapeError(f"formation has {spec.n_agents} agents but graph has {g.n_nodes} nodes")


def edge_errors(X, spec: FormationSpec, g: Graph) -> np.ndarray:
    """Stacked ``e_ij = (x_i - x_j) - d_ij`` over edges, in incidence-row order."""
    _check(spec, g)
    Xm = as_matrix(X, spec.n_agents, spec.dim)
    if not g.edges:
        return np.zeros(0)
    i, j = np.array(g.edges).T
    return ((Xm[i] - Xm[j]) - spec.displacements[i, j]).ravel()


def edge_errors_matmul(X, spec: FormationSpec, g: Graph) -> np.ndarray:
    """Same quantity as :func:`edge_errors`, computed as ``(H ⊗ I_n) X - d``."""
    _check(spec, g)
    Xm = as_matrix(X, spec.n_agents, spec.dim)
    H = incidence(g).H
    return (H @ Xm).ravel() - spec.stacked_displacements(g)


def v_metric(X, spec: FormationSpec, g: Graph) -> float:
    """Half the squared norm of the edge-stacked formation error."""
    e = edge_errors(X, spec, g)
    return 0.5 * float(e @ e)


class VMetric:
    """Precomputed V evaluator for repeated calls in the simulation loop."""

    def __init__(self, spec: FormationSpec, g: Graph):
        _check(spec, g)
        self.H = incidence(g).H
        self.target = self.H @ spec.positions

    def __call__(self, Xm: np.ndarray) -> float:
        e = self.H @ Xm - self.target
        return 0.5 * float(np.sum(e * e))
