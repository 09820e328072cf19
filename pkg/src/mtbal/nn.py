"""Dense-matrix numerics: small MLPs with exact gradients, Adam, seeded RNG.

Everything is float64 numpy. Parameters live in plain arrays; a flat-vector
layout utility lets optimizers and gradient checks treat a whole model as a
single vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


class NumericError(ArithmeticError):
    """Raised when a computation produces non-finite values."""


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Counter-based generator; identical (seed, path) gives identical draws.

    Philox streams keyed by a spawn path are independent, so parallel grid
    points or bootstrap replicates can each take their own stream.
    """
    ss = np.random.SeedSequence(seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))


def _apply_act(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def _act_grad(kind: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - post * post
    if kind == "identity":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class Mlp:
    """Feedforward net: weights[i] is (fan_in, fan_out), one activation per layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("layer lists must have equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} vs bias {b.shape}")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i - 1}->{i} dims do not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


def mlp_init(
    dims: list[int], activations: list[str] | None, rng: np.random.Generator
) -> Mlp:
    """Symmetric-uniform init scaled by fan-in; identity output by default."""
    n_layers = len(dims) - 1
    if activations is None:
        activations = ["relu"] * (n_layers - 1) + ["identity"]
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return Mlp(weights, biases, activations)


def mlp_forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Returns (output, cache); cache carries per-layer inputs and pre-activations."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"input {x.shape} incompatible with in_dim {net.in_dim}")
    cache = []
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        pre = h @ w + b
        post = _apply_act(act, pre)
        cache.append((h, pre, post))
        h = post
    return h, cache


def mlp_backward(
    net: Mlp, cache: list, grad_out: np.ndarray
) -> tuple[Mlp, np.ndarray]:
    """Exact gradients for a scalar loss with the given output gradient.

    Returns (param gradients shaped like the net, gradient w.r.t. the input).
    """
    if len(cache) != len(net.weights):
        raise ShapeError("cache does not match network depth")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache[-1][2].shape:
        raise ShapeError(f"grad_out {g.shape} vs output {cache[-1][2].shape}")
    gw = [np.empty(0)] * len(net.weights)
    gb = [np.empty(0)] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        h_in, pre, post = cache[i]
        g = g * _act_grad(net.activations[i], pre, post)
        gw[i] = h_in.T @ g
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return Mlp(gw, gb, list(net.activations)), g


# ---------------------------------------------------------------------------
# Flat-vector parameter layout


class ParamLayout:
    """Maps a fixed list of arrays to one flat float64 vector and back."""

    def __init__(self, arrays: list[np.ndarray]):
        self.shapes = [a.shape for a in arrays]
        self.sizes = [a.size for a in arrays]
        self.total = int(sum(self.sizes))

    def pack(self, arrays: list[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])

    def unpack(self, vec: np.ndarray) -> list[np.ndarray]:
        if vec.size != self.total:
            raise ShapeError(f"vector size {vec.size} != layout size {self.total}")
        out, i = [], 0
        for shape, size in zip(self.shapes, self.sizes):
            out.append(vec[i : i + size].reshape(shape))
            i += size
        return out

    def write_into(self, vec: np.ndarray, arrays: list[np.ndarray]) -> None:
        for dst, src in zip(arrays, self.unpack(vec)):
            dst[...] = src


# ---------------------------------------------------------------------------
# Adam


@dataclass
class OptimState:
    """Adam accumulators over a flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def init(n_params: int, lr: float = 1e-3, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "OptimState":
        return OptimState(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: OptimState) -> np.ndarray:
    """One bias-corrected Adam update; mutates state, returns new parameters."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError("params/grads/state shapes disagree")
    state.step += 1
    t = state.step
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**t)
    v_hat = state.v / (1.0 - state.beta2**t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Finite-difference oracle


def finite_diff_check(loss, params: np.ndarray, analytic: np.ndarray,
                      eps: float = 1e-5) -> float:
    """Max relative error between an analytic gradient and central differences.

    `loss` maps a flat parameter vector to a scalar. Relative error uses
    |a - g| / (|a| + |g| + 1e-12) per coordinate.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError("eps outside [1e-7, 1e-3]")
    params = np.asarray(params, dtype=np.float64)
    numeric = np.empty_like(params)
    for i in range(params.size):
        bump = np.zeros_like(params)
        bump[i] = eps
        up = loss(params + bump)
        down = loss(params - bump)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError("non-finite loss during finite differences")
        numeric[i] = (up - down) / (2.0 * eps)
    denom = np.abs(analytic) + np.abs(numeric) + 1e-12
    return float(np.max(np.abs(analytic - numeric) / denom))
