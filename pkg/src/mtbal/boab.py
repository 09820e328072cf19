"""Bound-optimized selection of the balancing weight.

Trains one model per grid value of the balancing weight, scores each by the
empirical profile bound (factual risk + alpha * imbalance + complexity), and
returns the argmin. Also: envelope/profile scores, bootstrap uncertainty, and
closed-form stub profiles used to exercise the selector without training.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .balancing import GeodesicGraph, StrategySpec
from .datagen import Dataset, OverlapError
from .model import (
    ModelParams,
    TrainConfig,
    frozen_strategy,
    lipschitz_estimate,
    penalty_loss,
    per_sample_losses,
    train,
)
from .nn import rng_stream

COMPLEXITY_METHODS = ("lipschitz", "rademacher_mc", "constant")


@dataclass(frozen=True)
class ComplexitySpec:
    method: str = "lipschitz"
    scale: float = 1.0
    delta: float = 0.05
    mc_draws: int = 64

    def __post_init__(self) -> None:
        if self.method not in COMPLEXITY_METHODS:
            raise ValueError(f"unknown complexity method {self.method!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")


@dataclass
class ProfilePoint:
    alpha: float
    factual: float
    imbalance: float
    comp: float
    qhat: float
    lipschitz: float = 0.0
    seconds: float = 0.0


@dataclass
class BoabResult:
    alpha_hat: float
    model: ModelParams | None
    points: list[ProfilePoint]


@dataclass
class AlphaEstimate:
    alpha_hat: float
    se: float
    lo: float
    hi: float
    replicates: list[float] = field(default_factory=list)


def complexity_term(
    spec: ComplexitySpec,
    n: int,
    m_hat: float,
    lipschitz: float | None = None,
    losses: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Concentration remainder: method-specific surrogate plus M*sqrt(log(2/d)/2n)."""
    if n < 2:
        raise ValueError("complexity term needs n >= 2")
    if m_hat <= 0.0:
        raise ValueError("loss bound estimate must be positive")
    base = m_hat * np.sqrt(np.log(2.0 / spec.delta) / (2.0 * n))
    if spec.method == "constant":
        return float(base)
    if spec.method == "lipschitz":
        if lipschitz is None:
            raise ValueError("lipschitz method needs a Lipschitz estimate")
        return float(spec.scale * lipschitz / np.sqrt(n) + base)
    if losses is None or rng is None:
        raise ValueError("rademacher_mc needs per-sample losses and an rng")
    # Monte-Carlo lower bound on the class supremum: the trained model only.
    signs = rng.choice((-1.0, 1.0), size=(spec.mc_draws, losses.size))
    sup = float(np.max(signs @ losses) / losses.size)
    return float(2.0 * max(sup, 0.0) + base)


def profile_point(
    ds: Dataset,
    alpha: float,
    strategy: StrategySpec,
    cfg: TrainConfig,
    comp_spec: ComplexitySpec,
    graph: GeodesicGraph | None = None,
) -> tuple[ProfilePoint, ModelParams]:
    """Train at one grid value and evaluate the bound on the full dataset."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    t0 = time.perf_counter()
    model, _ = train(ds, alpha, strategy, cfg, graph)
    frozen = frozen_strategy(strategy, model, ds.x, cfg.balance_subsample,
                             rng_stream(cfg.seed, 98))
    losses = per_sample_losses(model, ds)
    factual = float(losses.mean())
    pen, _ = penalty_loss(model, ds.x, ds.t, frozen, graph, with_grad=False)
    m_hat = max(float(losses.max()), 1e-12)
    lip = lipschitz_estimate(model, ds.x, 200, rng_stream(cfg.seed, 101))
    comp = complexity_term(
        comp_spec, ds.n, m_hat, lipschitz=lip, losses=losses,
        rng=rng_stream(cfg.seed, 102),
    )
    qhat = factual + alpha * pen.value + comp
    pt = ProfilePoint(alpha, factual, pen.value, comp, qhat, lip,
                      time.perf_counter() - t0)
    return pt, model


def boab_search(
    ds: Dataset,
    grid: list[float],
    strategy: StrategySpec,
    cfg: TrainConfig,
    comp_spec: ComplexitySpec,
    graph: GeodesicGraph | None = None,
    point_fn=None,
) -> BoabResult:
    """Grid argmin of the profile bound; ties go to the smaller weight.

    `point_fn(ds, alpha) -> (ProfilePoint, model)` overrides the default
    train-and-evaluate step (used by the stub profiles and tests).
    """
    grid = [float(a) for a in grid]
    if not grid:
        raise ValueError("empty grid")
    if any(a < 0 for a in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be non-negative and strictly increasing")
    if point_fn is None:
        def point_fn(d, a):
            return profile_point(d, a, strategy, cfg, comp_spec, graph)
    points, models = [], []
    for a in grid:
        pt, model = point_fn(ds, a)
        points.append(pt)
        models.append(model)
    best = int(np.argmin([p.qhat for p in points]))  # first minimum = smallest alpha
    return BoabResult(grid[best], models[best], points)


def profile_score(points: list[ProfilePoint]) -> list[dict]:
    """Envelope score (imbalance + comp slope) vs central difference of the bound."""
    if len(points) < 3:
        raise ValueError("profile score needs at least 3 grid points")
    out = []
    for i in range(1, len(points) - 1):
        lo, mid, hi = points[i - 1], points[i], points[i + 1]
        da = hi.alpha - lo.alpha
        out.append(
            {
                "alpha": mid.alpha,
                "envelope": mid.imbalance + (hi.comp - lo.comp) / da,
                "central": (hi.qhat - lo.qhat) / da,
            }
        )
    return out


def _stratified_resample(ds: Dataset, rng: np.random.Generator) -> Dataset:
    """Row resample with replacement within each treatment arm."""
    picks = []
    for k in range(ds.n_treatments):
        idx = np.flatnonzero(ds.t == k)
        if idx.size:
            picks.append(rng.choice(idx, size=idx.size, replace=True))
    idx = np.concatenate(picks)
    rng.shuffle(idx)
    return Dataset(
        ds.x[idx], ds.t[idx], ds.y[idx], ds.n_treatments,
        None if ds.truth is None else ds.truth[idx],
        dict(ds.provenance, resampled=True),
    )


def bootstrap_alpha(
    ds: Dataset,
    n_replicates: int,
    grid: list[float],
    strategy: StrategySpec,
    cfg: TrainConfig,
    comp_spec: ComplexitySpec,
    graph: GeodesicGraph | None = None,
    point_fn=None,
    seed: int = 0,
) -> AlphaEstimate:
    """Percentile bootstrap for the selected weight; arm-stratified resampling."""
    if n_replicates < 20:
        raise ValueError("need at least 20 bootstrap replicates")
    base = boab_search(ds, grid, strategy, cfg, comp_spec, graph, point_fn)
    reps = []
    for r in range(n_replicates):
        rng = rng_stream(seed, 1000 + r)
        for attempt in range(10):
            boot = _stratified_resample(ds, rng)
            if boot.arm_counts().min() > 0:
                break
        else:
            raise OverlapError("bootstrap replicate kept an empty arm after 10 tries")
        res = boab_search(boot, grid, strategy, cfg, comp_spec, graph, point_fn)
        reps.append(res.alpha_hat)
    arr = np.asarray(reps)
    se = float(arr.std(ddof=1)) if len(reps) > 1 else 0.0
    lo, hi = (float(v) for v in np.percentile(arr, [2.5, 97.5]))
    return AlphaEstimate(base.alpha_hat, se, lo, hi, reps)


def write_profile_csv(path: str | Path, points: list[ProfilePoint]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("# alpha,factual,imbalance,comp,qhat,lipschitz,seconds\n")
        w = csv.writer(fh)
        for p in points:
            w.writerow(
                [p.alpha, p.factual, p.imbalance, p.comp, p.qhat, p.lipschitz,
                 p.seconds]
            )
    return path


# ---------------------------------------------------------------------------
# Closed-form stub profiles (no training). These exercise the selector against
# a known population criterion Q(alpha) = 0.5 * curvature * (alpha - center)^2
# + offset, with controllable bounded noise.


def quadratic_q(alpha: float, center: float, curvature: float,
                offset: float = 0.0) -> float:
    return 0.5 * curvature * (alpha - center) ** 2 + offset


def quadratic_stub_point_fn(
    center: float,
    curvature: float,
    offset: float = 0.0,
    value_noise: float = 0.0,
    score_noise: float = 0.0,
    seed: int = 0,
):
    """Point evaluator with Q + bounded value noise + linear-in-alpha score noise.

    Value noise is an independent uniform(-v, v) draw per grid point; score
    noise is one uniform(-r, r) slope per stub instance, shifting the argmin
    by at most r / curvature.
    """
    slope = float(rng_stream(seed, 1).uniform(-score_noise, score_noise)) \
        if score_noise > 0.0 else 0.0

    def point_fn(_ds, alpha: float):
        q = quadratic_q(alpha, center, curvature, offset) + slope * alpha
        if value_noise > 0.0:
            r = rng_stream(seed, 2, int(round(alpha * 1e9)))
            q += float(r.uniform(-value_noise, value_noise))
        return ProfilePoint(alpha, q, 0.0, 0.0, q), None

    return point_fn


def mean_profile_point_fn(curvature: float):
    """Stub whose optimum tracks the sample mean of the first covariate.

    Under row resampling the selected weight inherits the mean's
    root-n sampling variability, which the bootstrap should recover.
    """

    def point_fn(ds: Dataset, alpha: float):
        m = float(ds.x[:, 0].mean())
        q = 0.5 * curvature * (alpha - m) ** 2
        return ProfilePoint(alpha, q, 0.0, 0.0, q), None

    return point_fn


def constant_piece_point_fn(factual: float, imbalance: float, comp_slope: float):
    """Stub with constant factual/imbalance and linear complexity; the envelope
    score is exactly imbalance + comp_slope everywhere."""

    def point_fn(_ds, alpha: float):
        comp = comp_slope * alpha
        q = factual + alpha * imbalance + comp
        return ProfilePoint(alpha, factual, imbalance, comp, q), None

    return point_fn
