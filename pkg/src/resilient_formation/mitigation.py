"""Mitigation strategies: turn raw neighbor broadcasts into what an agent acts on.

``none`` and ``sosh`` produce effective readings that go through the ordinary
update sum. ``wmsr`` and ``huber`` change the aggregation itself and return the
per-agent sum of (possibly trimmed or reweighted) contributions directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ProtocolError
from .formation import FormationSpec
from .graph import Graph

METHODS = ("none", "sosh", "wmsr", "huber")


@dataclass(frozen=True)
class HallucinationParams:
    """Correction ``f(z) = gamma*z + Delta(z)`` with ``||Delta(z)|| <= (M/2)||z||^2``.

    ``Delta_m(z) = 0.5 * z^T H_m z``. Without explicit ``hessians`` every
    ``H_m`` is ``(M/sqrt(n)) I``, which attains the bound with equality.
    """

    gamma: float = 0.3
    M: float = 1.0
    hessians: Optional[tuple] = None

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}", "mitigation.sosh.gamma")
        if self.M < 0:
            raise ConfigurationError(f"M must be non-negative, got {self.M}", "mitigation.sosh.M")
        if self.hessians is not None:
            H = np.array(self.hessians, dtype=float)
            if H.ndim != 3 or H.shape[0] != H.shape[1] or H.shape[1] != H.shape[2]:
                raise ConfigurationError(f"hessians must have shape (n, n, n), got {H.shape}", "mitigation.sosh.hessians")
            if not np.allclose(H, H.transpose(0, 2, 1), atol=1e-12):
                raise ConfigurationError("hessians must be symmetric", "mitigation.sosh.hessians")
            total = sum(np.linalg.norm(h, 2) ** 2 for h in H)
            if total > self.M**2 * (1 + 1e-12) + 1e-15:
                raise ConfigurationError(
                    f"sum of squared Hessian norms {total:.6g} exceeds M^2 = {self.M ** 2:.6g}",
                    "mitigation.sosh.hessians",
                )
            object.__setattr__(self, "hessians", tuple(tuple(tuple(float(v) for v in row) for row in h) for h in H))

    @cached_property
    def hessian_array(self) -> Optional[np.ndarray]:
        return None if self.hessians is None else np.array(self.hessians)

    def delta(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = z.shape[-1]
        if self.hessians is None:
            sq = np.sum(z * z, axis=-1, keepdims=True)
            return np.broadcast_to(0.5 * self.M / np.sqrt(n) * sq, z.shape).copy()
        H = self.hessian_array
        if H.shape[0] != n:
            raise ConfigurationError(f"hessians are {H.shape[0]}-dimensional, state is {n}-dimensional")
        return 0.5 * np.einsum("...i,mij,...j->...m", z, H, z)

    def f(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.gamma * z + self.delta(z)


@dataclass(frozen=True)
class MitigationConfig:
    method: str = "none"
    sosh: HallucinationParams = field(default_factory=HallucinationParams)
    wmsr_F: int = 1
    huber_c: float = 1.0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown mitigation method {self.method!r}; expected one of {METHODS}", "mitigation.method")
        if self.wmsr_F < 0:
            raise ConfigurationError(f"wmsr_F must be >= 0, got {self.wmsr_F}", "mitigation.wmsr_F")
        if not self.huber_c > 0:
            raise ConfigurationError(f"huber_c must be positive, got {self.huber_c}", "mitigation.huber_c")


def hallucinate(predicted, anchor, params: HallucinationParams) -> np.ndarray:
    """Stand-in reading ``anchor + f(predicted - anchor)``.

    ``anchor`` is the observer's own estimate of where the neighbor belongs,
    ``x_i - d_ij``. Works element-wise over leading axes.
    """
    anchor = np.asarray(anchor, dtype=float)
    return anchor + params.f(np.asarray(predicted, dtype=float) - anchor)


def raw_readings(Y: np.ndarray) -> np.ndarray:
    """``(N, N, n)`` readings where observer ``i`` sees ``Y[l]`` from every ``l``."""
    N = Y.shape[0]
    return np.broadcast_to(Y, (N,) + Y.shape).copy()


def effective_readings_none(readings: np.ndarray) -> np.ndarray:
    return readings


def effective_readings_sosh(
    x: np.ndarray,
    readings: np.ndarray,
    flags: np.ndarray,
    predictions: np.ndarray,
    spec: FormationSpec,
    params: HallucinationParams,
) -> np.ndarray:
    """Replace readings of flagged neighbors by hallucinated ones.

    ``flags[i, l]`` marks neighbor ``l`` as disconnected by observer ``i``;
    ``predictions[i, l]`` is observer ``i``'s model of ``l``.
    """
    out = np.array(readings, copy=True)
    if not flags.any():
        return out
    anchors = x[:, None, :] - spec.displacements
    fake = hallucinate(predictions, anchors, params)
    out[flags] = fake[flags]
    return out


def readings_aggregate(x: np.ndarray, readings: np.ndarray, g: Graph, spec: FormationSpec) -> np.ndarray:
    """Per-agent ``sum_l (x_i - r_il - d_il)`` over graph neighbors."""
    A = g.adjacency
    contrib = x[:, None, :] - readings - spec.displacements
    on_edge = contrib[A]
    if np.isnan(on_edge).any():
        i, l = np.argwhere(A & np.isnan(contrib).any(axis=2))[0]
        raise ProtocolError(f"agent {i} has no reading for neighbor {l}")
    contrib = np.where(A[:, :, None], contrib, 0.0)
    return contrib.sum(axis=1)


def broadcast_aggregate(x: np.ndarray, Y: np.ndarray, g: Graph, spec: FormationSpec) -> np.ndarray:
    """``readings_aggregate`` when every observer uses the raw broadcasts ``Y``.

    Uses ``sum_l (x_i - y_l - d_il) = deg_i x_i - (A Y)_i - (L p)_i``.
    """
    A = g.adjacency.astype(float)
    return g.degrees[:, None] * x - A @ Y - formation_pull(g, spec)


def formation_pull(g: Graph, spec: FormationSpec) -> np.ndarray:
    """``sum_l d_il`` over neighbors, i.e. ``L p``."""
    return g.degrees[:, None] * spec.positions - g.adjacency.astype(float) @ spec.positions


def wmsr_trimmed_sum(contributions, F: int) -> tuple[np.ndarray, bool]:
    """Per coordinate, drop the ``F`` largest and ``F`` smallest values and sum the rest.

    Returns ``(sum, degenerate)``; ``degenerate`` is True when nothing is left
    (``len <= 2F``), in which case the sum is zero and the agent holds still.
    Ties are broken by lowest neighbor position, which never changes the sum.
    """
    c = np.asarray(contributions, dtype=float)
    k = c.shape[0]
    if k <= 2 * F:
        return np.zeros(c.shape[1:]), True
    order = np.argsort(c, axis=0, kind="stable")
    s = np.take_along_axis(c, order, axis=0)
    return s[F : k - F].sum(axis=0), False


def huber_weights(residuals, c: float) -> np.ndarray:
    """Weight 1 inside the threshold, ``c/||r||`` beyond it."""
    norms = np.linalg.norm(np.asarray(residuals, dtype=float), axis=-1)
    with np.errstate(divide="ignore"):
        return np.where(norms <= c, 1.0, c / np.where(norms > 0, norms, 1.0))


def huber_sum(residuals, c: float) -> np.ndarray:
    r = np.asarray(residuals, dtype=float)
    return (huber_weights(r, c)[..., None] * r).sum(axis=0)


@lru_cache(maxsize=64)
def _neighbor_table(g: Graph):
    deg = g.degrees
    if deg.size and np.all(deg == deg[0]) and deg[0] > 0:
        return np.array([g.neighbors(i) for i in range(g.n_nodes)])
    return None


def wmsr_aggregate(x, Y, g: Graph, spec: FormationSpec, F: int, agents=None):
    """Trimmed sums for every agent (or only those in ``agents``).

    Returns ``(aggregate, holding)`` where ``holding`` lists agents whose
    neighborhood was too small to trim and who therefore hold position.
    """
    N = g.n_nodes
    agents = range(N) if agents is None else agents
    out = np.zeros_like(x)
    holding = []
    table = _neighbor_table(g)
    if table is not None and agents == range(N):
        k = table.shape[1]
        contrib = x[:, None, :] - Y[table] - spec.displacements[np.arange(N)[:, None], table]
        if k <= 2 * F:
            return out, list(range(N))
        s = np.sort(contrib, axis=1)
        return s[:, F : k - F].sum(axis=1), holding
    for i in agents:
        nbrs = list(g.neighbors(i))
        if not nbrs:
            holding.append(i)
            continue
        contrib = x[i] - Y[nbrs] - spec.displacements[i, nbrs]
        out[i], degenerate = wmsr_trimmed_sum(contrib, F)
        if degenerate:
            holding.append(i)
    return out, holding


def huber_aggregate(x, Y, g: Graph, spec: FormationSpec, c: float) -> np.ndarray:
    r = x[:, None, :] - Y[None, :, :] - spec.displacements
    w = np.where(g.adjacency, huber_weights(r, c), 0.0)
    return (w[:, :, None] * r).sum(axis=1)
