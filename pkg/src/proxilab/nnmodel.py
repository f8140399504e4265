"""Ordinal-regression discomfort model.

A small feedforward network maps the 14 scenario features to a softmax over
K discomfort classes. Targets are soft ordinal labels (softmax of negative
class distances), the loss is KL divergence, and the optimizer is SGD with
classical momentum and L2 weight decay. At prediction time the class
distribution can be smoothed with a Savitzky-Golay filter before the
expectation readout.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import NUM_FEATURES, FeatureVector
from .socnav import DatasetSplit, examples_to_arrays

MODEL_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Training diverged or was misconfigured."""


class ModelFormatError(ValueError):
    """A serialized model file is malformed or from an unknown version."""


@dataclass(frozen=True)
class SordConfig:
    """Soft ordinal label encoding: K classes spread evenly over [0, 100].

    The default grid steps by 0.1 score units. With the default 61-bin
    smoothing window this keeps the filter a gentle local denoiser; on a
    coarse grid (e.g. 101 classes) the same window spans most of the score
    range and drags every expectation readout toward 50.
    """

    num_classes: int = 1001
    distance_scale: float = 5.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.distance_scale <= 0:
            raise ValueError("distance_scale must be positive")

    @property
    def class_values(self) -> np.ndarray:
        return np.linspace(0.0, 100.0, self.num_classes)


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = NUM_FEATURES
    hidden_layers: int = 3
    hidden_width: int = 64

    def __post_init__(self):
        if min(self.input_dim, self.hidden_layers, self.hidden_width) < 1:
            raise ValueError("network dimensions must be positive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5e-3
    momentum: float = 0.6
    weight_decay: float = 1e-1
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass(frozen=True)
class SmoothingConfig:
    window: int = 61
    polyorder: int = 1

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")
        if self.polyorder < 0 or self.polyorder >= self.window:
            raise ValueError("polyorder must satisfy 0 <= polyorder < window")


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def soft_label(score: float, cfg: SordConfig) -> np.ndarray:
    """Encode a 0-100 score as a soft ordinal distribution over the classes."""
    if not 0.0 <= score <= 100.0:
        raise ValueError(f"score {score} outside [0, 100]")
    return softmax(-np.abs(score - cfg.class_values) / cfg.distance_scale)


def soft_label_matrix(scores: np.ndarray, cfg: SordConfig) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size and (scores.min() < 0.0 or scores.max() > 100.0):
        raise ValueError("scores outside [0, 100]")
    return softmax(-np.abs(scores[:, None] - cfg.class_values[None, :]) / cfg.distance_scale)


def kl_divergence(p: np.ndarray, q: np.ndarray, eps: float = 1e-12) -> float:
    """KL(p || q) with q clipped below by eps; 0 * log 0 terms contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"distribution length mismatch: {p.shape} vs {q.shape}")
    q = np.maximum(q, eps)
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


class ProxemicsNetwork:
    """Trained discomfort model: weights plus the stats and configs needed
    to reproduce its predictions exactly."""

    def __init__(self, net_cfg, sord_cfg, smoothing_cfg, norm_mean, norm_std, layers, meta=None):
        self.net_cfg = net_cfg
        self.sord_cfg = sord_cfg
        self.smoothing_cfg = smoothing_cfg
        self.norm_mean = np.asarray(norm_mean, dtype=np.float64)
        self.norm_std = np.asarray(norm_std, dtype=np.float64)
        self.layers = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)) for w, b in layers]
        self.meta = dict(meta or {})
        expected = layer_shapes(net_cfg, sord_cfg)
        got = [(w.shape, b.shape) for w, b in self.layers]
        if got != expected:
            raise ModelFormatError(f"layer shapes {got} do not match configuration {expected}")
        if self.norm_mean.shape != (net_cfg.input_dim,) or self.norm_std.shape != (net_cfg.input_dim,):
            raise ModelFormatError("normalization stats do not match input dimension")
        for w, b in self.layers:
            w.setflags(write=False)
            b.setflags(write=False)
        self.norm_mean.setflags(write=False)
        self.norm_std.setflags(write=False)

    def normalize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.norm_mean) / self.norm_std

    def copy(self) -> "ProxemicsNetwork":
        return ProxemicsNetwork(
            self.net_cfg,
            self.sord_cfg,
            self.smoothing_cfg,
            self.norm_mean.copy(),
            self.norm_std.copy(),
            [(w.copy(), b.copy()) for w, b in self.layers],
            copy.deepcopy(self.meta),
        )


def layer_shapes(net_cfg: NetworkConfig, sord_cfg: SordConfig):
    dims = [net_cfg.input_dim] + [net_cfg.hidden_width] * net_cfg.hidden_layers + [sord_cfg.num_classes]
    return [((dims[i], dims[i + 1]), (dims[i + 1],)) for i in range(len(dims) - 1)]


def init_layers(net_cfg: NetworkConfig, sord_cfg: SordConfig, rng: np.random.Generator):
    """He-style fan-in uniform initialization, zero biases."""
    layers = []
    for (w_shape, b_shape) in layer_shapes(net_cfg, sord_cfg):
        limit = np.sqrt(6.0 / w_shape[0])
        layers.append((rng.uniform(-limit, limit, size=w_shape), np.zeros(b_shape)))
    return layers


def _forward_pass(layers, Xn: np.ndarray):
    """Returns (activations per layer incl. input, pre-activations, softmax output)."""
    acts = [Xn]
    zs = []
    h = Xn
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        zs.append(z)
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(h)
    return acts, zs, softmax(zs[-1])


def forward_batch(net: ProxemicsNetwork, X: np.ndarray) -> np.ndarray:
    """Class distributions for a batch of raw (unnormalized) feature rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    _, _, q = _forward_pass(net.layers, net.normalize(X))
    return q


def forward(net: ProxemicsNetwork, f: FeatureVector) -> np.ndarray:
    """Class distribution for a single scenario."""
    return forward_batch(net, f.as_array())[0]


_SAVGOL_CACHE: dict = {}


class _SavgolOperator:
    """Banded linear operator applying the filter to length-n signals.

    Each output element depends on at most `window` inputs, so the filter is
    applied with a banded kernel instead of a dense n x n matmul (the dense
    product dominated heatmap latency at fine class grids).
    """

    def __init__(self, n: int, cfg: SmoothingConfig):
        half = cfg.window // 2
        self.weights = np.zeros((n, min(cfg.window, n)))
        self.starts = np.zeros(n, dtype=np.int64)
        self.widths = np.zeros(n, dtype=np.int64)
        for i in range(n):
            lo = max(0, i - half)
            hi = min(n, i + half + 1)
            x = np.arange(lo, hi, dtype=np.float64) - i
            order = min(cfg.polyorder, len(x) - 1)
            V = np.vander(x, order + 1, increasing=True)
            self.starts[i] = lo
            self.widths[i] = hi - lo
            self.weights[i, : hi - lo] = np.linalg.pinv(V)[0]
        for arr in (self.weights, self.starts, self.widths):
            arr.setflags(write=False)

    def apply(self, Q: np.ndarray) -> np.ndarray:
        return _kernels.banded_filter(Q, self.weights, self.starts, self.widths)


def _savgol_operator(n: int, cfg: SmoothingConfig) -> _SavgolOperator:
    key = (n, cfg.window, cfg.polyorder)
    cached = _SAVGOL_CACHE.get(key)
    if cached is None:
        cached = _SAVGOL_CACHE[key] = _SavgolOperator(n, cfg)
    return cached


def savitzky_golay(signal, cfg: SmoothingConfig) -> np.ndarray:
    """Least-squares polynomial smoothing; each value is the window's fitted
    polynomial evaluated at its center. Boundary values refit the polynomial
    over the truncated window instead of padding."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size < 1:
        raise ValueError("signal must be a nonempty 1-D array")
    return _savgol_operator(signal.size, cfg).apply(signal[None, :])[0]


def smooth_distributions(Q: np.ndarray, cfg: SmoothingConfig) -> np.ndarray:
    """Smooth class distributions along the class axis, clip negatives, renormalize."""
    Q = np.ascontiguousarray(np.atleast_2d(Q))
    out = np.maximum(_savgol_operator(Q.shape[-1], cfg).apply(Q), 0.0)
    sums = out.sum(axis=-1, keepdims=True)
    bad = sums[..., 0] <= 0.0
    if np.any(bad):
        out[bad] = Q[bad]
        sums = out.sum(axis=-1, keepdims=True)
    return out / sums


# rows are independent, so large batches are predicted in cache-friendly
# chunks; results are bitwise identical to a single pass
_PREDICT_CHUNK = 2048


def predict_batch(net: ProxemicsNetwork, X: np.ndarray, smooth: bool = True,
                  readout: str = "expectation") -> np.ndarray:
    """Predicted 0-100 discomfort scores for a batch of feature rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and X.shape[0] > _PREDICT_CHUNK:
        return np.concatenate([
            predict_batch(net, X[i : i + _PREDICT_CHUNK], smooth=smooth, readout=readout)
            for i in range(0, X.shape[0], _PREDICT_CHUNK)
        ])
    q = forward_batch(net, X)
    if smooth:
        q = smooth_distributions(q, net.smoothing_cfg)
    classes = net.sord_cfg.class_values
    if readout == "expectation":
        return q @ classes
    if readout == "argmax":
        return classes[np.argmax(q, axis=-1)]
    raise ValueError(f"unknown readout {readout!r}")


def predict_score(net: ProxemicsNetwork, f: FeatureVector, smooth: bool = True,
                  readout: str = "expectation") -> float:
    return float(predict_batch(net, f.as_array(), smooth=smooth, readout=readout)[0])


def evaluate_mae(net: ProxemicsNetwork, examples, smooth: bool = True) -> float:
    """Mean absolute error of predicted vs. labeled discomfort."""
    X, y = examples_to_arrays(examples)
    return float(np.mean(np.abs(predict_batch(net, X, smooth=smooth) - y)))


def _kl_loss(P: np.ndarray, Q: np.ndarray, eps: float = 1e-12) -> float:
    Q = np.maximum(Q, eps)
    return float(np.mean(np.sum(P * (np.log(np.maximum(P, eps)) - np.log(Q)), axis=1)))


class _SgdMomentum:
    """SGD with classical momentum; L2 decay is added to weight gradients only."""

    def __init__(self, lr, momentum, weight_decay):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.vel = None

    def step(self, layers, grads):
        if self.vel is None:
            self.vel = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
        new_layers = []
        new_vel = []
        for (w, b), (gw, gb), (vw, vb) in zip(layers, grads, self.vel):
            vw = self.momentum * vw + self.lr * (gw + self.weight_decay * w)
            vb = self.momentum * vb + self.lr * gb
            new_layers.append((w - vw, b - vb))
            new_vel.append((vw, vb))
        self.vel = new_vel
        return new_layers


def _backward_pass(layers, acts, zs, Q, P, scale: float):
    """Gradients of `scale * sum-over-batch KL` for every layer."""
    grads = [None] * len(layers)
    delta = (Q - P) * scale
    for i in range(len(layers) - 1, -1, -1):
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ layers[i][0].T) * (zs[i - 1] > 0.0)
    return grads


def grad_scale(sord_cfg: SordConfig) -> float:
    """Training gradient scale: batch-summed KL, normalized per unit score.

    The per-class gradient mass of a soft ordinal target thins out as the
    class grid is refined; multiplying by the grid density (classes per score
    unit) keeps the optimizer dynamics, and hence the published learning
    rates, independent of the grid resolution.
    """
    return (sord_cfg.num_classes - 1) / 100.0


def loss_and_grads(layers, Xn, P, reduction: str = "mean"):
    """Single forward/backward evaluation; used by training and gradient checks.

    With reduction="mean" the loss and gradients describe the per-example
    mean KL; with "sum" they describe the batch total.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    acts, zs, Q = _forward_pass(layers, Xn)
    loss = _kl_loss(P, Q)
    scale = 1.0 / Q.shape[0] if reduction == "mean" else 1.0
    if reduction == "sum":
        loss *= Q.shape[0]
    return loss, _backward_pass(layers, acts, zs, Q, P, scale)


def train(split: DatasetSplit, net_cfg: NetworkConfig | None = None,
          train_cfg: TrainConfig | None = None, sord_cfg: SordConfig | None = None,
          smoothing_cfg: SmoothingConfig | None = None):
    """Train a discomfort model with mini-batch SGD, returning the weights of
    the best validation epoch and the per-epoch loss history."""
    net_cfg = net_cfg or NetworkConfig()
    train_cfg = train_cfg or TrainConfig()
    sord_cfg = sord_cfg or SordConfig()
    smoothing_cfg = smoothing_cfg or SmoothingConfig()
    if not split.train:
        raise ValueError("training set is empty")

    X_train, y_train = examples_to_arrays(split.train)
    norm_mean = X_train.mean(axis=0)
    norm_std = np.maximum(X_train.std(axis=0), 1e-8)
    Xn = (X_train - norm_mean) / norm_std
    P = soft_label_matrix(y_train, sord_cfg)

    has_val = bool(split.validation)
    if has_val:
        X_val, y_val = examples_to_arrays(split.validation)
        Xn_val = (X_val - norm_mean) / norm_std
        P_val = soft_label_matrix(y_val, sord_cfg)

    rng = np.random.default_rng(train_cfg.seed)
    layers = init_layers(net_cfg, sord_cfg, rng)
    opt = _SgdMomentum(train_cfg.learning_rate, train_cfg.momentum, train_cfg.weight_decay)

    n = Xn.shape[0]
    scale = grad_scale(sord_cfg)
    history = {"train_loss": [], "val_loss": [], "best_epoch": 0}
    best_loss = np.inf
    best_layers = [(w.copy(), b.copy()) for w, b in layers]

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            acts, zs, Q = _forward_pass(layers, Xn[idx])
            epoch_loss += _kl_loss(P[idx], Q) * len(idx)
            grads = _backward_pass(layers, acts, zs, Q, P[idx], scale)
            layers = opt.step(layers, grads)
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        history["train_loss"].append(epoch_loss)
        monitor = epoch_loss
        if has_val:
            _, _, Q_val = _forward_pass(layers, Xn_val)
            val_loss = _kl_loss(P_val, Q_val)
            history["val_loss"].append(val_loss)
            monitor = val_loss
        if monitor < best_loss:
            best_loss = monitor
            history["best_epoch"] = epoch
            best_layers = [(w.copy(), b.copy()) for w, b in layers]

    net = ProxemicsNetwork(
        net_cfg, sord_cfg, smoothing_cfg, norm_mean, norm_std, best_layers,
        meta={
            "seed": train_cfg.seed,
            "epochs": train_cfg.epochs,
            "best_epoch": history["best_epoch"],
            "train_cfg": asdict(train_cfg),
        },
    )
    return net, history


def fine_tune(net: ProxemicsNetwork, user_data, epochs: int = 50, lr: float = 5e-5,
              momentum: float = 0.9, weight_decay: float = 0.0,
              batch_size: int = 32, seed: int = 0) -> ProxemicsNetwork:
    """Personalize a trained model on user-labeled examples.

    Only the output layer is updated; all hidden layers and the input
    normalization stay bit-identical to the input network, which is returned
    unchanged (a tuned copy is produced).
    """
    if not user_data:
        raise ValueError("user_data is empty")
    X, y = examples_to_arrays(user_data)
    Xn = net.normalize(X)
    P = soft_label_matrix(y, net.sord_cfg)

    hidden = net.layers[:-1]
    h = Xn
    for w, b in hidden:
        h = np.maximum(h @ w + b, 0.0)

    w_out = net.layers[-1][0].copy()
    b_out = net.layers[-1][1].copy()
    vw = np.zeros_like(w_out)
    vb = np.zeros_like(b_out)
    rng = np.random.default_rng(seed)
    n = h.shape[0]
    scale = grad_scale(net.sord_cfg)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            Q = softmax(h[idx] @ w_out + b_out)
            delta = (Q - P[idx]) * scale  # same gradient scale as train()
            gw = h[idx].T @ delta + weight_decay * w_out
            gb = delta.sum(axis=0)
            vw = momentum * vw + lr * gw
            vb = momentum * vb + lr * gb
            w_out = w_out - vw
            b_out = b_out - vb

    tuned = ProxemicsNetwork(
        net.net_cfg, net.sord_cfg, net.smoothing_cfg,
        net.norm_mean.copy(), net.norm_std.copy(),
        [(w.copy(), b.copy()) for w, b in hidden] + [(w_out, b_out)],
        meta={**net.meta, "fine_tuned": {"epochs": epochs, "lr": lr, "n_examples": n, "seed": seed}},
    )
    return tuned


def model_to_dict(net: ProxemicsNetwork) -> dict:
    """JSON-ready model document; float lists round-trip losslessly."""
    return {
        "version": MODEL_FORMAT_VERSION,
        "net_cfg": asdict(net.net_cfg),
        "sord_cfg": asdict(net.sord_cfg),
        "smoothing_cfg": asdict(net.smoothing_cfg),
        "norm_stats": {"mean": net.norm_mean.tolist(), "std": net.norm_std.tolist()},
        "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in net.layers],
        "meta": net.meta,
    }


def save_model(net: ProxemicsNetwork, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(net)))


def model_from_dict(doc: dict) -> ProxemicsNetwork:
    try:
        if doc["version"] != MODEL_FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model version {doc['version']!r}")
        return ProxemicsNetwork(
            NetworkConfig(**doc["net_cfg"]),
            SordConfig(**doc["sord_cfg"]),
            SmoothingConfig(**doc["smoothing_cfg"]),
            np.array(doc["norm_stats"]["mean"]),
            np.array(doc["norm_stats"]["std"]),
            [(np.array(layer["w"]), np.array(layer["b"])) for layer in doc["layers"]],
            doc.get("meta", {}),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def load_model(path) -> ProxemicsNetwork:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid model JSON: {exc}") from exc
    return model_from_dict(doc)
