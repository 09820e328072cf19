"""Counterfactual evaluation and the statistical/timing experiments.

PEHE is reported both as the raw per-row sum over treatment pairs and as the
square root of the per-pair mean (the headline number comparable across K).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .balancing import StrategySpec, strategy_penalty
from .datagen import Dataset
from .kernels import KernelSpec, resolved
from .model import (
    ModelParams,
    TrainConfig,
    model_init,
    predict_means,
    represent,
    train,
)
from .nn import mlp_forward, mlp_init, rng_stream


@dataclass
class PeheReport:
    pehe: float  # mean over rows of the sum over pairs
    sqrt_pehe: float  # sqrt of the mean over rows and pairs
    per_pair: np.ndarray  # (K, K) upper triangle of per-pair mean squared errors

    @property
    def n_pairs(self) -> int:
        k = self.per_pair.shape[0]
        return k * (k - 1) // 2


def pehe(model: ModelParams, ds: Dataset) -> PeheReport:
    """Precision of heterogeneous-effect estimation over all treatment pairs."""
    if ds.truth is None:
        raise ValueError("dataset has no ground-truth means")
    preds = predict_means(model, ds.x)
    k = ds.n_treatments
    per_pair = np.zeros((k, k))
    for j in range(k):
        for m in range(j + 1, k):
            tau_hat = preds[:, j] - preds[:, m]
            tau = ds.truth[:, j] - ds.truth[:, m]
            per_pair[j, m] = float(np.mean((tau_hat - tau) ** 2))
    total = float(np.triu(per_pair, 1).sum())
    n_pairs = k * (k - 1) // 2
    return PeheReport(total, float(np.sqrt(total / n_pairs)), per_pair)


def adrf(model: ModelParams, ds: Dataset) -> np.ndarray:
    """Average dose-response: per-treatment mean of predicted outcome means."""
    return predict_means(model, ds.x).mean(axis=0)


def interpolate_effect(
    model: ModelParams, t_a: int, t_b: int, steps: int, ds: Dataset
) -> list[tuple[float, float]]:
    """Mean predicted outcome along the embedding segment from t_a to t_b."""
    if model.head_mode != "embed_conditioned":
        raise ValueError("interpolation requires the embedding-conditioned head")
    z, _ = represent(model, ds.x)
    e_a, e_b = model.table[t_a], model.table[t_b]
    out = []
    for lam in np.linspace(0.0, 1.0, steps):
        e = (1.0 - lam) * e_a + lam * e_b
        inp = np.hstack([z, np.broadcast_to(e, (z.shape[0], e.size))])
        pred, _ = mlp_forward(model.heads[0], inp)
        out.append((float(lam), float(pred[:, 0].mean())))
    return out


# ---------------------------------------------------------------------------
# Concentration of the imbalance estimators under a frozen representation.


def concentration_experiment(
    k_list: list[int],
    n: int,
    reps: int,
    strategies: list[str],
    seed: int = 0,
    d_x: int = 10,
    d_z: int = 8,
    d_e: int = 4,
) -> list[dict]:
    """Sd of each penalty over independent datasets through a fixed random map.

    The frozen map isolates estimator-level noise: no training is involved.
    Kernel bandwidths are resolved once per (strategy, K) cell and reused so
    replicate scatter reflects sampling only.
    """
    if reps < 20:
        raise ValueError("need at least 20 replicates")
    phi = mlp_init([d_x, 32, d_z], None, rng_stream(seed, 0))
    rows = []
    for k in k_list:
        table = rng_stream(seed, 5, k).standard_normal((k, d_e))
        for kind in strategies:
            spec = StrategySpec(kind, embedding_dim=d_e)
            # Resolve bandwidths on one calibration draw, then freeze.
            calib = rng_stream(seed, 6, k)
            z0, _ = mlp_forward(phi, calib.standard_normal((min(n, 256), d_x)))
            spec = StrategySpec(
                kind,
                kernel=resolved(spec.kernel, z0),
                embed_kernel=resolved(spec.embed_kernel, table),
                embedding_dim=d_e,
            )
            vals = np.empty(reps)
            for r in range(reps):
                rng = rng_stream(seed, 7, k, r)
                x = rng.standard_normal((n, d_x))
                t = rng.integers(0, k, size=n)
                z, _ = mlp_forward(phi, x)
                pen = strategy_penalty(spec, z, t, k, table, with_grad=False)
                vals[r] = pen.value
            rows.append(
                {
                    "strategy": kind,
                    "n_treatments": k,
                    "n": n,
                    "reps": reps,
                    "mean": float(vals.mean()),
                    "sd": float(vals.std(ddof=1)),
                }
            )
    return rows


# ---------------------------------------------------------------------------
# Timing benchmarks.


def _median_penalty_seconds(
    spec: StrategySpec,
    z: np.ndarray,
    t: np.ndarray,
    k: int,
    table: np.ndarray | None,
    evals: int,
) -> float:
    times = []
    for _ in range(evals):
        t0 = time.perf_counter()
        strategy_penalty(spec, z, t, k, table, with_grad=True)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def timing_benchmark(
    k_list: list[int],
    strategies: list[str],
    n: int = 1500,
    epochs: int = 5,
    seed: int = 0,
    evals: int = 7,
    d_x: int = 20,
    reference_arms: int = 4,
) -> list[dict]:
    """Per-epoch and per-penalty-evaluation wall time for each (strategy, K).

    Penalty evaluations are timed through a fixed random model. The pairwise
    penalty is timed with every arm resampled (with replacement) to a common
    per-arm size m = n // reference_arms, holding per-term statistical
    resolution fixed across K so the measured growth isolates the K(K-1)/2
    term count. One-vs-all and aggregate penalties are timed at the full n
    rows with balanced arms, since their cost is governed by total row count.
    """
    per_arm = max(2, n // reference_arms)
    rows = []
    for k in k_list:
        rng = rng_stream(seed, 20, k)
        x = rng.standard_normal((n, d_x))
        t_full = np.repeat(np.arange(k), n // k + 1)[:n]
        for kind in strategies:
            spec = StrategySpec(kind)
            cfg = TrainConfig(epochs=epochs, seed=seed)
            model = model_init(d_x, k, cfg, spec, rng_stream(seed, 21, k))
            z_full, _ = represent(model, x)
            spec_r = StrategySpec(
                kind,
                kernel=resolved(spec.kernel, z_full[:256]),
                embed_kernel=resolved(
                    spec.embed_kernel,
                    model.table if model.table is not None else z_full[:8, :8],
                ),
            )
            if kind == "pair":
                idx = np.concatenate(
                    [
                        rng.choice(np.flatnonzero(t_full == arm), size=per_arm)
                        for arm in range(k)
                    ]
                )
                z_t, t_t = z_full[idx], t_full[idx]
            else:
                z_t, t_t = z_full, t_full
            pen_sec = _median_penalty_seconds(
                spec_r, z_t, t_t, k, model.table, evals
            )
            # Short real training run for the per-epoch number.
            y = rng.standard_normal(n)
            ds = Dataset(x, t_full.copy(), y, k, provenance={"generator": "bench"})
            _, trace = train(ds, 1.0, spec, cfg)
            rows.append(
                {
                    "strategy": kind,
                    "n_treatments": k,
                    "n": n,
                    "per_arm": per_arm if kind == "pair" else n // k,
                    "penalty_seconds": pen_sec,
                    "epoch_seconds": float(np.median(trace.seconds)) if len(trace) else 0.0,
                }
            )
    return rows


def write_table_csv(path: str | Path, rows: list[dict]) -> Path:
    """CSV with a commented header naming every column."""
    path = Path(path)
    if not rows:
        raise ValueError("empty table")
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        fh.write("# " + ",".join(cols) + "\n")
        w = csv.writer(fh)
        for r in rows:
            w.writerow([r[c] for c in cols])
    return path
