"""Seeded synthetic generators with ground-truth potential-outcome means.

Includes the confounded "hard" setting with softmax treatment assignment,
a tabular dose-response generator, and tree/cycle treatment topologies with
their geodesic graphs. Noise "N(0, 0.1)" is read as variance 0.1 (std
sqrt(0.1)); the interpretation is recorded in provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .balancing import GeodesicGraph
from .nn import rng_stream


class OverlapError(ValueError):
    """Raised when a treatment arm has too few samples to proceed."""


@dataclass
class Dataset:
    x: np.ndarray  # (n, d)
    t: np.ndarray  # (n,) ints in [0, K)
    y: np.ndarray  # (n,)
    n_treatments: int
    truth: np.ndarray | None = None  # (n, K) true means, when synthetic
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.x.shape[0]
        if self.t.shape != (n,) or self.y.shape != (n,):
            raise ValueError("x/t/y row counts disagree")
        if self.truth is not None and self.truth.shape != (n, self.n_treatments):
            raise ValueError("truth shape must be (n, K)")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def arm_counts(self) -> np.ndarray:
        return np.bincount(self.t, minlength=self.n_treatments)


@dataclass
class GenHardParams:
    n: int = 1500
    d: int = 20
    n_treatments: int = 4
    kappa: float = 5.0
    noise_var: float = 0.1
    seed: int = 0


def softmax_propensity(w: np.ndarray, x: np.ndarray, kappa: float) -> np.ndarray:
    """Probabilities proportional to exp(kappa * w_k . x), max-subtracted."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    logits = kappa * (w @ x)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite propensity logits")
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


def true_means_hard(x: np.ndarray, beta: np.ndarray, n_treatments: int) -> np.ndarray:
    """mu_t = sin(2 x_1) + x_3^2 + 0.5 (t+1) (x_{1:5} . beta), noiseless."""
    if x.shape[0] < 5:
        raise ValueError("hard setting needs at least 5 covariates")
    base = np.sin(2.0 * x[0]) + x[2] ** 2
    slope = 0.5 * float(x[:5] @ beta)
    t = np.arange(n_treatments)
    return base + (t + 1) * slope


def _draw_assignments(
    probs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    u = rng.random(probs.shape[0])
    cum = np.cumsum(probs, axis=1)
    return np.minimum((u[:, None] > cum).sum(axis=1), probs.shape[1] - 1)


def gen_hard(params: GenHardParams) -> Dataset:
    """Confounded multi-treatment data; kappa=5 nearly violates overlap."""
    rng = rng_stream(params.seed, 1)
    n, d, k = params.n, params.d, params.n_treatments
    x = rng.standard_normal((n, d))
    w = rng.uniform(-1.0, 1.0, size=(k, d))
    beta = rng.standard_normal(5)
    probs = np.empty((n, k))
    for i in range(n):
        probs[i] = softmax_propensity(w, x[i], params.kappa)
    t = _draw_assignments(probs, rng)
    counts = np.bincount(t, minlength=k)
    if counts.min() == 0:
        t = _draw_assignments(probs, rng_stream(params.seed, 2))
        counts = np.bincount(t, minlength=k)
        if counts.min() == 0:
            raise OverlapError("an arm stayed empty after regeneration")
    truth = np.empty((n, k))
    for i in range(n):
        truth[i] = true_means_hard(x[i], beta, k)
    noise = np.sqrt(params.noise_var) * rng.standard_normal(n)
    y = truth[np.arange(n), t] + noise
    prov = {
        "generator": "hard",
        "seed": params.seed,
        "n": n,
        "d": d,
        "n_treatments": k,
        "kappa": params.kappa,
        "noise_var": params.noise_var,
        "noise_note": "N(0, 0.1) read as variance",
    }
    return Dataset(x, t, y, k, truth, prov)


def gen_dose(
    n: int = 1797, n_treatments: int = 10, noise_var: float = 0.1, seed: int = 0
) -> Dataset:
    """Dose-response analog: mu_t = f(x) + (t - 4)^2 with softmax assignment."""
    rng = rng_stream(seed, 1)
    d = 8
    x = rng.standard_normal((n, d))
    w = rng.uniform(-1.0, 1.0, size=(n_treatments, d))
    f = np.sin(2.0 * x[:, 0]) + 0.5 * x[:, 1] ** 2
    t_levels = np.arange(n_treatments)
    truth = f[:, None] + (t_levels[None, :] - 4) ** 2
    probs = np.empty((n, n_treatments))
    for i in range(n):
        probs[i] = softmax_propensity(w, x[i], 2.0)
    t = _draw_assignments(probs, rng)
    if np.bincount(t, minlength=n_treatments).min() == 0:
        t = _draw_assignments(probs, rng_stream(seed, 2))
        if np.bincount(t, minlength=n_treatments).min() == 0:
            raise OverlapError("an arm stayed empty after regeneration")
    noise = np.sqrt(noise_var) * rng.standard_normal(n)
    y = truth[np.arange(n), t] + noise
    prov = {
        "generator": "dose",
        "seed": seed,
        "n": n,
        "d": d,
        "n_treatments": n_treatments,
        "kappa": 2.0,
        "noise_var": noise_var,
    }
    return Dataset(x, t, y, n_treatments, truth, prov)


# Tree nodes in index order: root, L, R, LL, LR, RL, RR. The paper-style
# effects fix root/L/R/LL/RR; LR and RL interpolate monotonically.
TREE_EFFECTS = np.array([0.0, -2.0, 2.0, -3.0, -1.0, 1.0, 3.0])
TREE_EDGES = [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]
TREE_NODE_NAMES = ["root", "L", "R", "LL", "LR", "RL", "RR"]


def gen_topology(
    kind: str, n: int = 1400, noise_var: float = 0.1, seed: int = 0
) -> tuple[Dataset, GeodesicGraph]:
    """Tree (K=7) or cycle (K=8) treatment topology with uniform assignment."""
    if kind == "tree":
        k = 7
        effects = TREE_EFFECTS
        graph = GeodesicGraph.from_edges(k, TREE_EDGES)
    elif kind == "cycle":
        k = 8
        effects = np.cos(2.0 * np.pi * np.arange(k) / k)
        graph = GeodesicGraph.from_edges(k, [(i, (i + 1) % k) for i in range(k)])
    else:
        raise ValueError(f"unknown topology {kind!r}")
    rng = rng_stream(seed, 1)
    d = 4
    x = rng.standard_normal((n, d))
    f = 0.3 * np.sin(x[:, 0])
    truth = f[:, None] + effects[None, :]
    t = rng.integers(0, k, size=n)
    noise = np.sqrt(noise_var) * rng.standard_normal(n)
    y = truth[np.arange(n), t] + noise
    prov = {
        "generator": kind,
        "seed": seed,
        "n": n,
        "d": d,
        "n_treatments": k,
        "noise_var": noise_var,
    }
    return Dataset(x, t, y, k, truth, prov), graph


def validate_dataset(ds: Dataset) -> dict:
    """Per-arm counts and empirical treatment shares; flags thin arms."""
    counts = ds.arm_counts()
    return {
        "arm_counts": counts.tolist(),
        "min_arm_count": int(counts.min()),
        "underpopulated": bool(counts.min() < 2),
        "pi": (counts / ds.n).tolist(),
    }


# ---------------------------------------------------------------------------
# Serialization: CSV (17 significant digits) + JSON provenance sidecar.


def save_dataset(ds: Dataset, path: str | Path) -> list[Path]:
    path = Path(path)
    cols = [f"x{i}" for i in range(ds.d)] + ["t", "y"]
    mats: list[np.ndarray] = [ds.x, ds.t[:, None].astype(np.float64), ds.y[:, None]]
    if ds.truth is not None:
        cols += [f"mu{t}" for t in range(ds.n_treatments)]
        mats.append(ds.truth)
    data = np.hstack(mats)
    with open(path, "w") as fh:
        fh.write("# " + ",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = dict(ds.provenance)
    meta["n_treatments"] = ds.n_treatments
    meta["has_truth"] = ds.truth is not None
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [path, sidecar]


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().lstrip("# ").strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    sidecar = path.with_suffix(path.suffix + ".json")
    with open(sidecar) as fh:
        meta = json.load(fh)
    k = int(meta["n_treatments"])
    d = sum(1 for c in header if c.startswith("x"))
    x = data[:, :d]
    t = data[:, d].astype(np.int64)
    y = data[:, d + 1]
    truth = data[:, d + 2 : d + 2 + k] if meta.get("has_truth") else None
    prov = {kk: vv for kk, vv in meta.items() if kk not in ("has_truth",)}
    return Dataset(x, t, y, k, truth, prov)
