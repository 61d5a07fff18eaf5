"""Dense feed-forward regressor: ReLU hidden layers and a tanh output.

Weights of layer ``l`` are stored as a ``(fan_in, fan_out)`` matrix so a batch
of row vectors propagates as ``x @ W + b``.  The L2 penalty covers weights
only, never biases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CKPT_MAGIC = "MLPCKPT"
CKPT_VERSION = "v1"


class CheckpointError(ValueError):
    pass


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("parameter count does not match layer_dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[l], self.layer_dims[l + 1]) or b.shape != (self.layer_dims[l + 1],):
                raise ValueError(f"layer {l} parameters do not chain with layer_dims")

    @property
    def activations(self) -> list[str]:
        return ["relu"] * (len(self.weights) - 1) + ["tanh"]

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_dims), [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class TrainHyper:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 64
    lam: float = 1e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class OptState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def init(layer_dims, seed: int) -> MlpModel:
    """He-normal for ReLU-fed layers, variance 1/fan_in for the output layer."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError("need at least an input and an output layer")
    if any(d < 1 for d in dims):
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(dims) - 1
    for l in range(n_layers):
        var = (1.0 if l == n_layers - 1 else 2.0) / dims[l]
        weights.append(rng.normal(0.0, np.sqrt(var), size=(dims[l], dims[l + 1])))
        biases.append(np.zeros(dims[l + 1]))
    return MlpModel(dims, weights, biases)


def _forward_cache(model: MlpModel, x: np.ndarray):
    acts = [x]
    a = x
    n_layers = len(model.weights)
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = np.tanh(z) if l == n_layers - 1 else np.maximum(z, 0.0)
        acts.append(a)
    return acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output for one input vector or a (batch, input) matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_dims[0]:
        raise ValueError(f"input width {x.shape[-1]} != {model.layer_dims[0]}")
    return _forward_cache(model, x)[-1]


def l2_penalty(model: MlpModel) -> float:
    return float(sum(np.sum(w * w) for w in model.weights))


def loss_and_grad(model: MlpModel, x, target, lam: float):
    """Batch MSE (summed over outputs, averaged over samples) plus lam * ||W||^2.

    Returns ``(loss, grads)`` with ``grads`` ordered like ``model.params()``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    acts = _forward_cache(model, x)
    resid = acts[-1] - target
    loss = float(np.sum(resid * resid) / n) + lam * l2_penalty(model)

    n_layers = len(model.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    delta = (2.0 / n) * resid * (1.0 - acts[-1] ** 2)
    for l in range(n_layers - 1, -1, -1):
        gw[l] = acts[l].T @ delta + 2.0 * lam * model.weights[l]
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ model.weights[l].T) * (acts[l] > 0)
    return loss, [*gw, *gb]


def step(model: MlpModel, grads, hyper: TrainHyper, state: OptState | None = None):
    """One optimizer update; returns a new model and the new state."""
    state = state or OptState()
    params = model.params()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match the model")
    t = state.step + 1
    if hyper.optimizer == "sgd":
        new = [p - hyper.learning_rate * g for p, g in zip(params, grads)]
        new_state = OptState(t)
    else:
        m_prev = state.m or [np.zeros_like(p) for p in params]
        v_prev = state.v or [np.zeros_like(p) for p in params]
        m = [hyper.beta1 * mp + (1 - hyper.beta1) * g for mp, g in zip(m_prev, grads)]
        v = [hyper.beta2 * vp + (1 - hyper.beta2) * g * g for vp, g in zip(v_prev, grads)]
        c1 = 1 - hyper.beta1 ** t
        c2 = 1 - hyper.beta2 ** t
        new = [p - hyper.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + hyper.eps)
               for p, mi, vi in zip(params, m, v)]
        new_state = OptState(t, m, v)
    k = len(model.weights)
    return MlpModel(list(model.layer_dims), new[:k], new[k:]), new_state


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Sample order for a given epoch; depends only on (seed, epoch)."""
    return np.random.default_rng([int(seed), int(epoch)]).permutation(n)


def train(model: MlpModel, x, y, hyper: TrainHyper, epochs: int | None = None,
          state: OptState | None = None, first_epoch: int = 0):
    """Minibatch training.

    Returns ``(model, state, curve)`` where ``curve[e]`` is the sample-weighted
    training MSE seen during epoch ``e``.  Passing ``state`` and
    ``first_epoch`` continues an earlier run exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    epochs = hyper.epochs if epochs is None else epochs
    curve = []
    n = x.shape[0]
    for e in range(first_epoch, first_epoch + epochs):
        order = epoch_order(n, hyper.seed, e)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss, grads = loss_and_grad(model, x[idx], y[idx], hyper.lam)
            total += (loss - hyper.lam * l2_penalty(model)) * idx.size
            model, state = step(model, grads, hyper, state)
        curve.append(total / n)
    return model, state, curve


def mse(model: MlpModel, x, y) -> float:
    resid = forward(model, x) - np.asarray(y, float)
    return float(np.sum(resid * resid) / resid.shape[0])


def average(models) -> MlpModel:
    """Parameter-wise arithmetic mean.

    Values are sorted across models before summing, which makes the result
    independent of model order and exact when all models agree.
    """
    models = list(models)
    if not models:
        raise ValueError("nothing to average")
    dims = models[0].layer_dims
    if any(m.layer_dims != dims for m in models):
        raise ValueError("cannot average models with different layer_dims")

    def mean(arrays):
        s = np.sort(np.stack(arrays), axis=0)
        return s[0] + np.sum(s - s[0], axis=0) / len(arrays)

    k = len(models[0].weights)
    weights = [mean([m.weights[l] for m in models]) for l in range(k)]
    biases = [mean([m.biases[l] for m in models]) for l in range(k)]
    return MlpModel(list(dims), weights, biases)


def serialize(model: MlpModel) -> bytes:
    lines = [f"{CKPT_MAGIC} {CKPT_VERSION}", " ".join(str(d) for d in model.layer_dims)]
    for w, b in zip(model.weights, model.biases):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise CheckpointError("refusing to serialize non-finite parameters")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append(" ".join(repr(float(v)) for v in b))
    return ("\n".join(lines) + "\n").encode()


def deserialize(data: bytes) -> MlpModel:
    lines = data.decode().splitlines()
    if not lines or lines[0].split() != [CKPT_MAGIC, CKPT_VERSION]:
        raise CheckpointError(f"expected header '{CKPT_MAGIC} {CKPT_VERSION}'")
    if len(lines) < 2:
        raise CheckpointError("truncated checkpoint")
    try:
        dims = [int(v) for v in lines[1].split()]
    except ValueError as exc:
        raise CheckpointError("malformed layer dimensions") from exc
    expected = 2 + sum(dims[l] + 1 for l in range(len(dims) - 1))
    if len(lines) != expected:
        raise CheckpointError(f"truncated checkpoint: {len(lines)} of {expected} lines")
    weights, biases = [], []
    pos = 2
    try:
        for l in range(len(dims) - 1):
            w = np.array([[float(v) for v in lines[pos + r].split()] for r in range(dims[l])])
            pos += dims[l]
            b = np.array([float(v) for v in lines[pos].split()])
            pos += 1
            if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise CheckpointError(f"layer {l} has the wrong shape")
            weights.append(w)
            biases.append(b)
    except ValueError as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError("malformed parameter value") from exc
    for a in weights + biases:
        if not np.all(np.isfinite(a)):
            raise CheckpointError("checkpoint contains non-finite values")
    return MlpModel(dims, weights, biases)
