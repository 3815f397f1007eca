"""Dense feedforward network engine: forward pass, reverse-mode gradients,
Xavier initialization, ADAM, and mini-batch training with best-validation
snapshotting.

The forward pass computes every affine map in fixed blocks of 8 rows, so a
given input row produces bit-identical outputs no matter how it is batched.
That property is what lets sliding-window inference evaluate windows
one-by-one or all at once with bitwise-equal results. Training is
single-threaded and deterministic for a fixed seed; a trained model is
immutable and can be shared across threads for inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDivergedError

ROW_BLOCK = 8  # affine kernel row-block size; fixed so results are batch-invariant


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0.0).astype(z.dtype)


def _elu(z):
    # alpha = 1
    return np.where(z > 0.0, z, np.expm1(z))


def _elu_grad(z):
    return np.where(z > 0.0, z.dtype.type(1.0), np.exp(z))


def _tanh(z):
    return np.tanh(z)


def _tanh_grad(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _identity(z):
    return z


def _identity_grad(z):
    return np.ones_like(z)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "elu": (_elu, _elu_grad),
    "tanh": (_tanh, _tanh_grad),
    "identity": (_identity, _identity_grad),
}

DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass
class AffineScaling:
    """Per-entry affine map scaled = gain * raw + offset (and its inverse)."""

    gain: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        self.gain = np.asarray(self.gain, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)

    @classmethod
    def identity(cls, width):
        return cls(np.ones(width), np.zeros(width))

    def apply(self, raw):
        return raw * self.gain + self.offset

    def invert(self, scaled):
        return (scaled - self.offset) / self.gain


@dataclass
class MlpModel:
    """Dense feedforward network with affine output layer (no final activation)."""

    widths: tuple
    activations: tuple          # one name per hidden layer
    weights: list               # W[i] has shape (widths[i+1], widths[i])
    biases: list | None         # None when bias_free
    dtype: np.dtype = np.dtype(np.float32)
    in_scale: AffineScaling | None = None
    out_scale: AffineScaling | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.activations = tuple(self.activations)
        if len(self.activations) != len(self.widths) - 2:
            raise ConfigError("need one activation per hidden layer")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}")
        for i, w in enumerate(self.weights):
            expect = (self.widths[i + 1], self.widths[i])
            if w.shape != expect:
                raise ShapeError(f"weight {i} has shape {w.shape}, expected {expect}")

    @property
    def bias_free(self):
        return self.biases is None

    @property
    def input_width(self):
        return self.widths[0]

    @property
    def output_width(self):
        return self.widths[-1]

    @property
    def n_layers(self):
        return len(self.weights)

    def n_params(self):
        n = sum(w.size for w in self.weights)
        if self.biases is not None:
            n += sum(b.size for b in self.biases)
        return n

    def parameters(self):
        params = list(self.weights)
        if self.biases is not None:
            params += list(self.biases)
        return params

    def copy(self) -> "MlpModel":
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=None if self.biases is None else [b.copy() for b in self.biases],
            meta=dict(self.meta),
        )


def xavier_init(shape, seed) -> np.ndarray:
    """Uniform init in +/- sqrt(6 / (fan_in + fan_out)); shape is (fan_out, fan_in)."""
    fan_out, fan_in = int(shape[0]), int(shape[1])
    if fan_in <= 0 or fan_out <= 0:
        raise ConfigError(f"invalid layer shape {shape!r}")
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def build_mlp(widths, activation="relu", seed=0, bias_free=False,
              dtype=np.float32, in_scale=None, out_scale=None) -> MlpModel:
    """Construct a Xavier-initialized MLP.

    `activation` may be one name applied to every hidden layer or a
    sequence with one name per hidden layer.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise ConfigError("need at least input and output widths")
    n_hidden = len(widths) - 2
    if isinstance(activation, str):
        acts = (activation,) * n_hidden
    else:
        acts = tuple(activation)
    rng = np.random.default_rng(seed)
    dt = np.dtype(dtype)
    weights = []
    for i in range(len(widths) - 1):
        bound = math.sqrt(6.0 / (widths[i] + widths[i + 1]))
        weights.append(rng.uniform(-bound, bound,
                                   size=(widths[i + 1], widths[i])).astype(dt))
    biases = None if bias_free else [np.zeros(widths[i + 1], dtype=dt)
                                     for i in range(len(widths) - 1)]
    return MlpModel(widths=widths, activations=acts, weights=weights,
                    biases=biases, dtype=dt, in_scale=in_scale, out_scale=out_scale)


def _affine(x, weight, bias):
    """x @ W^T + b computed in fixed 8-row blocks (batch-size invariant bits)."""
    wt = weight.T
    n = x.shape[0]
    out = np.empty((n, weight.shape[0]), dtype=x.dtype)
    for start in range(0, n, ROW_BLOCK):
        stop = min(start + ROW_BLOCK, n)
        if stop - start == ROW_BLOCK:
            out[start:stop] = x[start:stop] @ wt
        else:
            padded = np.zeros((ROW_BLOCK, x.shape[1]), dtype=x.dtype)
            padded[: stop - start] = x[start:stop]
            out[start:stop] = (padded @ wt)[: stop - start]
    if bias is not None:
        out += bias
    return out


def _forward_full(model: MlpModel, x):
    """Forward pass keeping pre-activations and activations for backprop."""
    pre = []
    acts = [x]
    a = x
    last = model.n_layers - 1
    for i in range(model.n_layers):
        b = None if model.biases is None else model.biases[i]
        z = _affine(a, model.weights[i], b)
        pre.append(z)
        a = z if i == last else ACTIVATIONS[model.activations[i]][0](z)
        acts.append(a)
    return pre, acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output for a batch (rows) or a single input vector."""
    arr = np.asarray(x)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != model.input_width:
        raise ShapeError(
            f"input width {arr.shape[-1] if arr.ndim else 0} does not match "
            f"model input width {model.input_width}"
        )
    arr = np.ascontiguousarray(arr, dtype=model.dtype)
    _, acts = _forward_full(model, arr)
    out = acts[-1]
    return out[0] if single else out


def mse_loss(pred, target) -> float:
    """Mean of squared differences over every element."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("empty batch")
    diff = pred - target
    return float(np.mean(diff * diff))


def rmse(pred, target) -> float:
    return math.sqrt(mse_loss(pred, target))


def _backprop(model: MlpModel, pre, acts, target):
    grad_w = [None] * model.n_layers
    grad_b = None if model.biases is None else [None] * model.n_layers

    # d(loss)/d(z_last); loss averages over batch * output width
    dz = (2.0 / target.size) * (acts[-1] - target)
    for i in range(model.n_layers - 1, -1, -1):
        grad_w[i] = dz.T @ acts[i]
        if grad_b is not None:
            grad_b[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ model.weights[i]
            dz = da * ACTIVATIONS[model.activations[i - 1]][1](pre[i - 1])
    return grad_w, grad_b


def backward(model: MlpModel, x, target):
    """Gradients of the mean-squared-error loss for every weight and bias.

    Returns (grad_weights, grad_biases); grad_biases is None for bias-free
    models. Gradients are exact reverse-mode derivatives of
    mse_loss(forward(model, x), target).
    """
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x)), dtype=model.dtype)
    target = np.ascontiguousarray(np.atleast_2d(np.asarray(target)), dtype=model.dtype)
    if x.shape[1] != model.input_width:
        raise ShapeError("input width does not match model")
    if target.shape != (x.shape[0], model.output_width):
        raise ShapeError("target shape does not match model output")

    pre, acts = _forward_full(model, x)
    return _backprop(model, pre, acts, target)


@dataclass
class AdamState:
    """First/second moment accumulators and the shared timestep."""

    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr=1e-3,
              beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    """One bias-corrected ADAM update, in place on `params`."""
    state.t += 1
    corr1 = 1.0 - beta1 ** state.t
    corr2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


@dataclass
class TrainConfig:
    """Optimizer and loop settings; batch_size None means n_train // 8."""

    lr: float = 1e-3
    batch_size: int | None = None
    epochs: int = 100
    val_every: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.val_every < 1:
            raise ConfigError("val_every must be >= 1")


@dataclass
class TrainReport:
    """Per-epoch training losses, validation history, and the best snapshot."""

    epoch_loss: list
    validations: list           # (epoch, rmse) pairs
    best_epoch: int
    best_val_rmse: float
    iterations_per_epoch: int


def train(model: MlpModel, train_set, val_set, config: TrainConfig):
    """Mini-batch ADAM training with per-epoch shuffling.

    `train_set` and `val_set` are (inputs, targets) array pairs in scaled
    units. The dataset is reshuffled every epoch from the run seed; the
    final short batch is kept. Validation RMSE is recorded every
    `val_every` epochs and at the final epoch; the weights of the best
    validation are returned as a separate model.

    Returns (best_model, TrainReport).
    """
    x_train = np.ascontiguousarray(np.asarray(train_set[0]), dtype=model.dtype)
    y_train = np.ascontiguousarray(np.asarray(train_set[1]), dtype=model.dtype)
    x_val = np.ascontiguousarray(np.asarray(val_set[0]), dtype=model.dtype)
    y_val = np.ascontiguousarray(np.asarray(val_set[1]), dtype=model.dtype)
    n_d = x_train.shape[0]
    if n_d == 0 or x_val.shape[0] == 0:
        raise ConfigError("training and validation sets must be nonempty")
    if x_train.shape[1] != model.input_width or y_train.shape[1] != model.output_width:
        raise ShapeError("training set widths do not match the model")

    n_b = config.batch_size if config.batch_size is not None else max(1, n_d // 8)
    if n_b < 1 or n_b > n_d:
        raise ConfigError(f"batch size {n_b} must be in [1, {n_d}]")
    iters = (n_d + n_b - 1) // n_b

    work = model.copy()
    params = work.parameters()
    state = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)

    epoch_loss = []
    validations = []
    best_epoch = -1
    best_rmse = math.inf
    best_weights = None
    best_biases = None

    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n_d)
        total = 0.0
        for it in range(iters):
            sel = perm[it * n_b:(it + 1) * n_b]
            xb = np.ascontiguousarray(x_train[sel])
            yb = y_train[sel]
            pre, acts = _forward_full(work, xb)
            loss = mse_loss(acts[-1], yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, it)
            grad_w, grad_b = _backprop(work, pre, acts, yb)
            grads = list(grad_w) + (list(grad_b) if grad_b is not None else [])
            adam_step(params, grads, state, lr=config.lr,
                      beta1=config.beta1, beta2=config.beta2, eps=config.eps)
            total += loss * len(sel)
        epoch_loss.append(total / n_d)

        if epoch % config.val_every == 0 or epoch == config.epochs:
            val_rmse = rmse(forward(work, x_val), y_val)
            validations.append((epoch, val_rmse))
            if val_rmse < best_rmse:
                best_rmse = val_rmse
                best_epoch = epoch
                best_weights = [w.copy() for w in work.weights]
                best_biases = (None if work.biases is None
                               else [b.copy() for b in work.biases])

    best = work.copy()
    best.weights = best_weights
    best.biases = best_biases
    report = TrainReport(epoch_loss=epoch_loss, validations=validations,
                         best_epoch=best_epoch, best_val_rmse=best_rmse,
                         iterations_per_epoch=iters)
    return best, report


def save_model(model: MlpModel, path):
    """Write the binary model file (see `slide.formats`)."""
    from . import formats

    formats.save_model(model, path)


def load_model(path) -> MlpModel:
    """Read a binary model file (see `slide.formats`)."""
    from . import formats

    return formats.load_model(path)
