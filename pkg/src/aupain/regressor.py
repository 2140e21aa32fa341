"""Engagement-weighted pain-intensity regressor.

A three-layer perceptron: the input layer fuses core-AU intensities with
their engagement weights by element-wise multiplication, a hidden layer of
size 3 applies a rectifier (with inverted dropout while training), and a
single linear output estimates pain intensity. Training is plain
mini-batch gradient descent with Adam and the smooth-L1 loss, implemented
directly on numpy arrays so every update is deterministic for a fixed
seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .core import AUIntensityVector, DataError, TrainingError
from .engagement import EngagementProfile, top_k

HIDDEN_SIZE = 3

Params = dict[str, np.ndarray]


@dataclass(frozen=True, eq=False)
class RegressorModel:
    core_aus: tuple[int, ...]
    engagement_weights: np.ndarray  # (k,)
    W1: np.ndarray  # (3, k)
    b1: np.ndarray  # (3,)
    W2: np.ndarray  # (1, 3)
    b2: np.ndarray  # (1,)
    dropout_rate: float
    seed: int

    def __post_init__(self) -> None:
        k = len(self.core_aus)
        w = np.asarray(self.engagement_weights, dtype=float)
        if w.shape != (k,):
            raise DataError(f"engagement weights shape {w.shape} does not match k={k}")
        if np.any(w <= 0.0) or np.any(w > 1.0):
            raise DataError("engagement weights must lie in (0, 1]")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DataError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")
        shapes = {"W1": (HIDDEN_SIZE, k), "b1": (HIDDEN_SIZE,), "W2": (1, HIDDEN_SIZE), "b2": (1,)}
        for name, want in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != want:
                raise DataError(f"{name} shape {arr.shape}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "engagement_weights", w)

    @property
    def params(self) -> Params:
        return {"W1": self.W1.copy(), "b1": self.b1.copy(), "W2": self.W2.copy(), "b2": self.b2.copy()}

    def with_params(self, params: Params) -> "RegressorModel":
        return RegressorModel(
            core_aus=self.core_aus,
            engagement_weights=self.engagement_weights,
            W1=params["W1"].copy(),
            b1=params["b1"].copy(),
            W2=params["W2"].copy(),
            b2=params["b2"].copy(),
            dropout_rate=self.dropout_rate,
            seed=self.seed,
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 8
    epochs: int = 100
    smooth_l1_beta: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # On a 3-unit hidden layer, dropout shrinks the learned mapping by
    # roughly its rate; heavier settings visibly bias the intensity scale.
    dropout_rate: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise TrainingError("learning rate and batch size must be positive, epochs >= 0")
        if self.smooth_l1_beta <= 0 or self.adam_eps <= 0:
            raise TrainingError("smooth_l1_beta and adam_eps must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise TrainingError("adam betas must lie in (0, 1)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise TrainingError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


@dataclass
class ForwardCache:
    model: RegressorModel
    x: np.ndarray  # (B, k) fused input
    z1: np.ndarray  # (B, 3) pre-activation
    h: np.ndarray  # (B, 3) post-relu, post-dropout
    mask: np.ndarray | None  # (B, 3) inverted-dropout mask, None when off


def init_model(
    core_aus: Sequence[int],
    engagement_weights: Sequence[float],
    dropout_rate: float = 0.05,
    seed: int = 0,
) -> RegressorModel:
    """Fresh model with uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] layer
    weights and zero biases, deterministic for a fixed seed."""
    k = len(core_aus)
    if k == 0:
        raise DataError("need at least one core AU")
    rng = np.random.default_rng(seed)
    bound1 = 1.0 / np.sqrt(k)
    bound2 = 1.0 / np.sqrt(HIDDEN_SIZE)
    return RegressorModel(
        core_aus=tuple(core_aus),
        engagement_weights=np.asarray(engagement_weights, dtype=float),
        W1=rng.uniform(-bound1, bound1, size=(HIDDEN_SIZE, k)),
        b1=np.zeros(HIDDEN_SIZE),
        W2=rng.uniform(-bound2, bound2, size=(1, HIDDEN_SIZE)),
        b2=np.zeros(1),
        dropout_rate=dropout_rate,
        seed=seed,
    )


def _forward_arrays(
    params: Params,
    eng_weights: np.ndarray,
    dropout_rate: float,
    batch: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]]:
    x = batch * eng_weights
    z1 = x @ params["W1"].T + params["b1"]
    h = np.maximum(z1, 0.0)
    mask = None
    if train_mode and dropout_rate > 0.0:
        if rng is None:
            raise TrainingError("train-mode forward with dropout needs an rng")
        keep = 1.0 - dropout_rate
        mask = (rng.random(h.shape) < keep) / keep
        h = h * mask
    y = h @ params["W2"].T + params["b2"]  # (B, 1)
    return y[:, 0], (x, z1, h, mask)


def _backward_arrays(
    params: Params,
    arrays: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None],
    dy: np.ndarray,
) -> Params:
    x, z1, h, mask = arrays
    dy = dy[:, None]  # (B, 1)
    dW2 = dy.T @ h
    db2 = dy.sum(axis=0)
    dh = dy @ params["W2"]
    if mask is not None:
        dh = dh * mask
    dz1 = dh * (z1 > 0.0)
    dW1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def forward(
    model: RegressorModel,
    au_values: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float | np.ndarray, ForwardCache]:
    """Run the network on one sample (k,) or a batch (B, k).

    Inputs are fused with the engagement weights element-wise, the hidden
    rectifier output is masked by inverted dropout in train mode, and the
    intensity estimate is returned (a (B,) array for batches).
    """
    values = np.asarray(au_values, dtype=float)
    single = values.ndim == 1
    batch = values[None, :] if single else values
    if batch.ndim != 2 or batch.shape[1] != len(model.core_aus):
        raise DataError(
            f"expected {len(model.core_aus)} AU values per sample, got shape {values.shape}"
        )
    params = {"W1": model.W1, "b1": model.b1, "W2": model.W2, "b2": model.b2}
    pred, (x, z1, h, mask) = _forward_arrays(
        params, model.engagement_weights, model.dropout_rate, batch, train_mode, rng
    )
    cache = ForwardCache(model=model, x=x, z1=z1, h=h, mask=mask)
    return (float(pred[0]) if single else pred), cache


def smooth_l1(
    pred: float | np.ndarray, target: float | np.ndarray, beta: float = 1.0
) -> tuple[float | np.ndarray, float | np.ndarray]:
    """Smooth-L1 loss and its gradient with respect to the prediction.

    Quadratic (0.5 d^2 / beta) inside |d| < beta, linear (|d| - beta/2)
    outside; the gradient is continuous at the joint.
    """
    if beta <= 0:
        raise TrainingError(f"beta must be positive, got {beta}")
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    quad = np.abs(d) < beta
    loss = np.where(quad, 0.5 * d * d / beta, np.abs(d) - 0.5 * beta)
    grad = np.where(quad, d / beta, np.sign(d))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def backward(model: RegressorModel, cache: ForwardCache, dloss_dpred: float | np.ndarray) -> Params:
    """Parameter gradients by the chain rule, summed over the batch.

    The dropout mask and rectifier gate recorded in the cache are replayed
    exactly; the cache must come from a forward call on this model.
    """
    if cache.model is not model:
        raise TrainingError("cache does not belong to this model")
    dy = np.atleast_1d(np.asarray(dloss_dpred, dtype=float))
    if dy.shape[0] != cache.x.shape[0]:
        raise TrainingError(
            f"upstream gradient batch {dy.shape[0]} != cache batch {cache.x.shape[0]}"
        )
    params = {"W1": model.W1, "b1": model.b1, "W2": model.W2, "b2": model.b2}
    return _backward_arrays(params, (cache.x, cache.z1, cache.h, cache.mask), dy)


@dataclass
class AdamState:
    step: int
    m: Params
    v: Params

    @classmethod
    def zeros(cls, params: Params) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: Params, grads: Params, state: AdamState, config: TrainConfig
) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    if set(params) != set(grads):
        raise TrainingError(f"param/grad keys differ: {sorted(params)} vs {sorted(grads)}")
    t = state.step + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise TrainingError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params[name] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=t, m=new_m, v=new_v)


def _as_arrays(
    samples: Sequence[tuple[AUIntensityVector, float]], core_aus: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([vec.subvector(core_aus) for vec, _ in samples], dtype=float)
    y = np.array([target for _, target in samples], dtype=float)
    return X, y


def _eval_loss(params: Params, model: RegressorModel, X: np.ndarray, y: np.ndarray, beta: float) -> float:
    pred, _ = _forward_arrays(params, model.engagement_weights, 0.0, X, False, None)
    loss, _ = smooth_l1(pred, y, beta)
    return float(np.mean(loss))


def train(
    train_set: Sequence[tuple[AUIntensityVector, float]],
    val_set: Sequence[tuple[AUIntensityVector, float]],
    engagement_profile: EngagementProfile,
    k: int,
    config: TrainConfig,
) -> tuple[RegressorModel, TrainHistory]:
    """Fit the regressor on (AU vector, target) pairs.

    Core AUs are the profile's top k; engagement weights are their
    max-normalized engagement values. Mini-batches are reshuffled each
    epoch with a seeded generator, mean losses are recorded per epoch, and
    the parameters from the epoch with the lowest validation loss are
    returned. An empty validation set falls back to the training loss for
    selection.
    """
    if not train_set:
        raise TrainingError("training set is empty")
    core = top_k(engagement_profile, k)
    weights = [engagement_profile.normalized[au] for au in core]
    model = init_model(core, weights, dropout_rate=config.dropout_rate, seed=config.seed)
    history = TrainHistory()
    if config.epochs == 0:
        return model, history

    X_train, y_train = _as_arrays(train_set, core)
    X_val, y_val = _as_arrays(val_set, core) if val_set else (None, None)
    n = len(train_set)
    rng = np.random.default_rng(config.seed)
    params = model.params
    state = AdamState.zeros(params)
    best_loss = np.inf
    best_params = params

    for _ in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            xb, yb = X_train[batch_idx], y_train[batch_idx]
            pred, arrays = _forward_arrays(
                params, model.engagement_weights, model.dropout_rate, xb, True, rng
            )
            losses, grads_pred = smooth_l1(pred, yb, config.smooth_l1_beta)
            loss_sum += float(np.sum(losses))
            grads = _backward_arrays(params, arrays, np.asarray(grads_pred) / len(batch_idx))
            params, state = adam_step(params, grads, state, config)
        history.train_loss.append(loss_sum / n)
        if X_val is not None:
            val_loss = _eval_loss(params, model, X_val, y_val, config.smooth_l1_beta)
        else:
            val_loss = _eval_loss(params, model, X_train, y_train, config.smooth_l1_beta)
        history.val_loss.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = {name: p.copy() for name, p in params.items()}
    if not np.isfinite(best_loss):
        raise TrainingError("training diverged: no epoch produced a finite validation loss")
    return model.with_params(best_params), history


def predict(model: RegressorModel, au_vector: AUIntensityVector) -> float:
    """Eval-mode prediction on the model's core-AU subvector."""
    pred, _ = forward(model, au_vector.subvector(model.core_aus), train_mode=False)
    return float(pred)


def write_model(model: RegressorModel, stream: IO[str]) -> None:
    """Plain-text serialization; floats use repr so reload is bit-exact."""
    stream.write("aupain-model 1\n")
    stream.write(f"k {len(model.core_aus)}\n")
    stream.write(f"core_aus {' '.join(str(au) for au in model.core_aus)}\n")
    stream.write(f"dropout_rate {float(model.dropout_rate)!r}\n")
    stream.write(f"seed {model.seed}\n")
    stream.write(f"engagement_weights {' '.join(repr(float(v)) for v in model.engagement_weights)}\n")
    for row in model.W1:
        stream.write(f"W1 {' '.join(repr(float(v)) for v in row)}\n")
    stream.write(f"b1 {' '.join(repr(float(v)) for v in model.b1)}\n")
    for row in model.W2:
        stream.write(f"W2 {' '.join(repr(float(v)) for v in row)}\n")
    stream.write(f"b2 {' '.join(repr(float(v)) for v in model.b2)}\n")


def read_model(stream: IO[str]) -> RegressorModel:
    lines = [line.rstrip("\n") for line in stream if line.strip()]
    if not lines or not lines[0].startswith("aupain-model"):
        raise DataError("not a model file (missing header)")
    fields: dict[str, list[list[str]]] = {}
    for line in lines[1:]:
        name, _, rest = line.partition(" ")
        fields.setdefault(name, []).append(rest.split())
    try:
        core = tuple(int(v) for v in fields["core_aus"][0])
        weights = np.array([float(v) for v in fields["engagement_weights"][0]])
        W1 = np.array([[float(v) for v in row] for row in fields["W1"]])
        b1 = np.array([float(v) for v in fields["b1"][0]])
        W2 = np.array([[float(v) for v in row] for row in fields["W2"]])
        b2 = np.array([float(v) for v in fields["b2"][0]])
        dropout = float(fields["dropout_rate"][0][0])
        seed = int(fields["seed"][0][0])
    except (KeyError, ValueError, IndexError) as exc:
        raise DataError(f"malformed model file: {exc!r}") from None
    return RegressorModel(
        core_aus=core,
        engagement_weights=weights,
        W1=W1,
        b1=b1,
        W2=W2,
        b2=b2,
        dropout_rate=dropout,
        seed=seed,
    )
