"""Balancing penalties over representation batches.

Three strategies: pairwise MMD over all arm pairs, one-vs-all MMD against
pooled complements, and HSIC between representations and treatment
embeddings. An optional geodesic penalty ties embedding distances to
graph shortest-path distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    InsufficientDataError,
    KernelSpec,
    hsic_v,
    mmd2_v,
    resolved,
)
from .nn import ShapeError

STRATEGIES = ("pair", "ova", "agg")

# Square-rooted MMD^2 terms: derivative 1/(2 sqrt(v)) is floored to avoid
# blowup at exact balance.
_SQRT_FLOOR = 1e-8


class DegenerateBatchError(ValueError):
    """Raised when no arm pair has enough samples to evaluate a penalty."""


@dataclass(frozen=True)
class StrategySpec:
    kind: str = "agg"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    embed_kernel: KernelSpec = field(default_factory=KernelSpec)
    embedding_dim: int = 8
    geodesic_weight: float = 0.0
    min_arm_batch: int = 2

    def __post_init__(self) -> None:
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")
        if self.geodesic_weight < 0:
            raise ValueError("geodesic_weight must be >= 0")


@dataclass
class GeodesicGraph:
    """Treatment-topology graph with hop-count shortest-path distances."""

    n_nodes: int
    edges: list[tuple[int, int]]
    dist: np.ndarray

    @staticmethod
    def from_edges(n_nodes: int, edges: list[tuple[int, int]]) -> "GeodesicGraph":
        dist = np.full((n_nodes, n_nodes), np.inf)
        np.fill_diagonal(dist, 0.0)
        adj: list[list[int]] = [[] for _ in range(n_nodes)]
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        for src in range(n_nodes):
            frontier = [src]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in adj[u]:
                        if dist[src, v] == np.inf:
                            dist[src, v] = dist[src, u] + 1.0
                            nxt.append(v)
                frontier = nxt
        if not np.all(np.isfinite(dist)):
            raise ValueError("graph is disconnected")
        return GeodesicGraph(n_nodes, list(edges), dist)


@dataclass
class PenaltyValue:
    value: float
    grad_z: np.ndarray | None = None
    grad_table: np.ndarray | None = None
    terms_evaluated: int = 0
    terms_skipped: int = 0


def group_by_arm(z: np.ndarray, t: np.ndarray, n_treatments: int) -> list[np.ndarray]:
    """Row-index lists per arm; empty arms yield empty index arrays."""
    t = np.asarray(t)
    if t.ndim != 1 or t.shape[0] != z.shape[0]:
        raise ShapeError("treatment vector must match rows of z")
    if t.size and (t.min() < 0 or t.max() >= n_treatments):
        raise ValueError("treatment index out of range")
    return [np.flatnonzero(t == k) for k in range(n_treatments)]


def _sqrt_term(v: float) -> tuple[float, float]:
    """sqrt(max(v, 0)) and its derivative w.r.t. v."""
    if v <= 0.0:
        return 0.0, 0.0
    r = np.sqrt(v)
    return float(r), float(0.5 / max(r, _SQRT_FLOOR))


def r_pair(
    spec: StrategySpec, z: np.ndarray, t: np.ndarray, n_treatments: int,
    with_grad: bool = True,
) -> PenaltyValue:
    """Sum of MMDs over all arm pairs; short arms skipped and renormalized."""
    groups = group_by_arm(z, t, n_treatments)
    kern = resolved(spec.kernel, z)
    grad = np.zeros_like(z, dtype=np.float64) if with_grad else None
    total = n_treatments * (n_treatments - 1) // 2
    value, done = 0.0, 0
    for j in range(n_treatments):
        if groups[j].size < spec.min_arm_batch:
            continue
        for k in range(j + 1, n_treatments):
            if groups[k].size < spec.min_arm_batch:
                continue
            d = mmd2_v(kern, z[groups[j]], z[groups[k]], with_grad=with_grad)
            r, dr = _sqrt_term(d.value)
            value += r
            done += 1
            if with_grad and r > 0.0:
                grad[groups[j]] += dr * d.grad_a
                grad[groups[k]] += dr * d.grad_b
    if done == 0:
        raise DegenerateBatchError("every arm pair is below min_arm_batch")
    scale = total / done
    if grad is not None:
        grad *= scale
    return PenaltyValue(value * scale, grad, None, done, total - done)


def r_ova(
    spec: StrategySpec, z: np.ndarray, t: np.ndarray, n_treatments: int,
    with_grad: bool = True,
) -> PenaltyValue:
    """Sum over arms of MMD(arm, pooled complement)."""
    groups = group_by_arm(z, t, n_treatments)
    kern = resolved(spec.kernel, z)
    grad = np.zeros_like(z, dtype=np.float64) if with_grad else None
    value, done = 0.0, 0
    for k in range(n_treatments):
        if groups[k].size < spec.min_arm_batch:
            continue
        rest = np.concatenate([groups[j] for j in range(n_treatments) if j != k])
        if rest.size < spec.min_arm_batch:
            continue
        d = mmd2_v(kern, z[groups[k]], z[rest], with_grad=with_grad)
        r, dr = _sqrt_term(d.value)
        value += r
        done += 1
        if with_grad and r > 0.0:
            grad[groups[k]] += dr * d.grad_a
            grad[rest] += dr * d.grad_b
    if done == 0:
        raise DegenerateBatchError("every one-vs-all term is below min_arm_batch")
    scale = n_treatments / done
    if grad is not None:
        grad *= scale
    return PenaltyValue(value * scale, grad, None, done, n_treatments - done)


def r_agg(
    spec: StrategySpec, z: np.ndarray, t: np.ndarray, table: np.ndarray,
    with_grad: bool = True,
) -> PenaltyValue:
    """HSIC between representations and the selected embedding rows."""
    t = np.asarray(t)
    if z.shape[0] != t.shape[0]:
        raise ShapeError("z and t must have the same number of rows")
    if z.shape[0] < 3:
        raise InsufficientDataError("r_agg needs at least 3 samples")
    e = table[t]
    kz = resolved(spec.kernel, z)
    ke = resolved(spec.embed_kernel, e)
    d = hsic_v(kz, ke, z, e, with_grad=with_grad)
    if not with_grad:
        return PenaltyValue(d.value, None, None, 1, 0)
    grad_table = np.zeros_like(table, dtype=np.float64)
    np.add.at(grad_table, t, d.grad_b)
    return PenaltyValue(d.value, d.grad_a, grad_table, 1, 0)


def geodesic_penalty(
    table: np.ndarray, graph: GeodesicGraph, with_grad: bool = True
) -> PenaltyValue:
    """Mean over ordered pairs of (||e_i - e_j|| - d_M(i, j))^2."""
    k = table.shape[0]
    if k != graph.n_nodes:
        raise ShapeError("table rows must match graph nodes")
    if k < 2:
        raise DegenerateBatchError("geodesic penalty needs at least 2 treatments")
    diff = table[:, None, :] - table[None, :, :]  # (k, k, d_e)
    norms = np.sqrt(np.maximum(np.sum(diff * diff, axis=2), 0.0))
    dev = norms - graph.dist
    mask = ~np.eye(k, dtype=bool)
    n_pairs = k * (k - 1)
    value = float(np.sum(dev[mask] ** 2)) / n_pairs
    if not with_grad:
        return PenaltyValue(value, None, None, n_pairs, 0)
    safe = np.where(norms > 1e-12, norms, 1.0)
    coef = np.where(mask, 2.0 * dev / safe, 0.0) / n_pairs
    # d/d e_i gets contributions from ordered pairs (i, j) and (j, i).
    grad = 2.0 * np.einsum("ij,ijd->id", coef, diff)
    return PenaltyValue(value, None, grad, n_pairs, 0)


def strategy_penalty(
    spec: StrategySpec,
    z: np.ndarray,
    t: np.ndarray,
    n_treatments: int,
    table: np.ndarray | None = None,
    graph: GeodesicGraph | None = None,
    with_grad: bool = True,
) -> PenaltyValue:
    """Dispatch on strategy kind, plus the weighted geodesic term if configured."""
    if spec.kind == "pair":
        out = r_pair(spec, z, t, n_treatments, with_grad=with_grad)
    elif spec.kind == "ova":
        out = r_ova(spec, z, t, n_treatments, with_grad=with_grad)
    else:
        if table is None:
            raise ValueError("agg strategy requires an embedding table")
        out = r_agg(spec, z, t, table, with_grad=with_grad)
    if spec.geodesic_weight > 0.0:
        if graph is None:
            raise ValueError("geodesic_weight > 0 requires a graph")
        if table is None:
            raise ValueError("geodesic penalty requires an embedding table")
        geo = geodesic_penalty(table, graph, with_grad=with_grad)
        out.value += spec.geodesic_weight * geo.value
        if with_grad:
            if out.grad_table is None:
                out.grad_table = np.zeros_like(table, dtype=np.float64)
            out.grad_table += spec.geodesic_weight * geo.grad_table
    return out
