"""Kernels, Gram matrices, and MMD/HSIC discrepancy statistics with gradients.

Conventions: rbf kernel k(a,b) = exp(-||a-b||^2 / (2 gamma^2)); the V-statistic
forms are used inside training losses (non-negative, smooth), the unbiased
U-statistic for MMD is provided for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .nn import ShapeError

MEDIAN = "median_heuristic"


class InsufficientDataError(ValueError):
    """Raised when a statistic needs more samples than provided."""


@dataclass(frozen=True)
class KernelSpec:
    family: str = "rbf"  # "rbf" | "linear"
    bandwidth: float | str = MEDIAN

    def __post_init__(self) -> None:
        if self.family not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if isinstance(self.bandwidth, str) and self.bandwidth != MEDIAN:
            raise ValueError(f"unknown bandwidth policy {self.bandwidth!r}")
        if isinstance(self.bandwidth, (int, float)) and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


@dataclass
class DiscrepancyValue:
    value: float
    grad_a: np.ndarray | None = None
    grad_b: np.ndarray | None = None


def _as2d(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x


def resolve_bandwidth(spec: KernelSpec, samples: np.ndarray) -> float:
    """Median pairwise Euclidean distance; 1.0 fallback when the median is zero."""
    if isinstance(spec.bandwidth, (int, float)):
        return float(spec.bandwidth)
    z = _as2d(samples)
    n = z.shape[0]
    if n < 2:
        raise InsufficientDataError("median heuristic needs at least 2 samples")
    d2 = _sqdist(z, z)
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
    return med if med > 0.0 else 1.0


def resolved(spec: KernelSpec, samples: np.ndarray) -> KernelSpec:
    """Spec with any bandwidth policy replaced by a concrete value."""
    if isinstance(spec.bandwidth, str):
        return replace(spec, bandwidth=resolve_bandwidth(spec, samples))
    return spec


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


def gram(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Entry (i, j) = k(a_i, b_j)."""
    a, b = _as2d(a), _as2d(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    if spec.family == "linear":
        return a @ b.T
    gamma = spec.bandwidth
    if isinstance(gamma, str):
        raise ValueError("rbf bandwidth must be resolved before gram()")
    return np.exp(-_sqdist(a, b) / (2.0 * gamma * gamma))


def gram_grad(
    spec: KernelSpec,
    a: np.ndarray,
    b: np.ndarray,
    k: np.ndarray,
    w: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum_ij w_ij * k(a_i, b_j) w.r.t. a and b."""
    a, b = _as2d(a), _as2d(b)
    if spec.family == "linear":
        return w @ b, w.T @ a
    gamma = float(spec.bandwidth)
    wk = w * k
    row = wk.sum(axis=1)[:, None]
    col = wk.sum(axis=0)[:, None]
    ga = (wk @ b - row * a) / (gamma * gamma)
    gb = (wk.T @ a - col * b) / (gamma * gamma)
    return ga, gb


def mmd2_v(
    spec: KernelSpec, zp: np.ndarray, zq: np.ndarray, with_grad: bool = True
) -> DiscrepancyValue:
    """Biased (V-statistic) squared MMD; non-negative up to roundoff."""
    zp, zq = _as2d(zp), _as2d(zq)
    m, n = zp.shape[0], zq.shape[0]
    if m < 1 or n < 1:
        raise InsufficientDataError("mmd2_v needs at least 1 sample per side")
    kpp = gram(spec, zp, zp)
    kqq = gram(spec, zq, zq)
    kpq = gram(spec, zp, zq)
    value = float(kpp.mean() + kqq.mean() - 2.0 * kpq.mean())
    if not with_grad:
        return DiscrepancyValue(value)
    ga1, gb1 = gram_grad(spec, zp, zp, kpp, np.full((m, m), 1.0 / (m * m)))
    ga2, gb2 = gram_grad(spec, zq, zq, kqq, np.full((n, n), 1.0 / (n * n)))
    ga3, gb3 = gram_grad(spec, zp, zq, kpq, np.full((m, n), -2.0 / (m * n)))
    return DiscrepancyValue(value, ga1 + gb1 + ga3, ga2 + gb2 + gb3)


def mmd2_u(
    spec: KernelSpec, zp: np.ndarray, zq: np.ndarray, with_grad: bool = True
) -> DiscrepancyValue:
    """Unbiased (U-statistic) squared MMD; may be negative."""
    zp, zq = _as2d(zp), _as2d(zq)
    m, n = zp.shape[0], zq.shape[0]
    if m < 2 or n < 2:
        raise InsufficientDataError("mmd2_u needs at least 2 samples per side")
    kpp = gram(spec, zp, zp)
    kqq = gram(spec, zq, zq)
    kpq = gram(spec, zp, zq)
    wpp = np.full((m, m), 1.0 / (m * (m - 1)))
    np.fill_diagonal(wpp, 0.0)
    wqq = np.full((n, n), 1.0 / (n * (n - 1)))
    np.fill_diagonal(wqq, 0.0)
    wpq = np.full((m, n), -2.0 / (m * n))
    value = float((wpp * kpp).sum() + (wqq * kqq).sum() + (wpq * kpq).sum())
    if not with_grad:
        return DiscrepancyValue(value)
    ga1, gb1 = gram_grad(spec, zp, zp, kpp, wpp)
    ga2, gb2 = gram_grad(spec, zq, zq, kqq, wqq)
    ga3, gb3 = gram_grad(spec, zp, zq, kpq, wpq)
    return DiscrepancyValue(value, ga1 + gb1 + ga3, ga2 + gb2 + gb3)


def hsic_v(
    spec_z: KernelSpec,
    spec_e: KernelSpec,
    z: np.ndarray,
    e: np.ndarray,
    with_grad: bool = True,
) -> DiscrepancyValue:
    """Biased HSIC: trace(K H L H) / n^2 with H the centering matrix."""
    z, e = _as2d(z), _as2d(e)
    n = z.shape[0]
    if e.shape[0] != n:
        raise ShapeError("z and e must have the same number of rows")
    if n < 3:
        raise InsufficientDataError("hsic_v needs at least 3 samples")
    k = gram(spec_z, z, z)
    l = gram(spec_e, e, e)

    def center(mat: np.ndarray) -> np.ndarray:
        rm = mat.mean(axis=1, keepdims=True)
        cm = mat.mean(axis=0, keepdims=True)
        return mat - rm - cm + mat.mean()

    hlh = center(l)
    value = float(np.sum(k * hlh)) / (n * n)
    if not with_grad:
        return DiscrepancyValue(value)
    # d value / dK = HLH / n^2, and symmetrically for L.
    ga, gb = gram_grad(spec_z, z, z, k, hlh / (n * n))
    gz = ga + gb
    hkh = center(k)
    ga, gb = gram_grad(spec_e, e, e, l, hkh / (n * n))
    ge = ga + gb
    return DiscrepancyValue(value, gz, ge)
