"""Fully connected binary classifiers trained with Adam on binary cross-entropy.

All trainable tensors of a network live in one flat buffer (``params.flat``);
the named tensors are views into it. Gradients use the same layout, which
keeps the optimiser step to a handful of array operations.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .encoding import LAYOUT, encode_batch, encoded_length
from .errors import DimensionMismatch, EmptyDataset, FormatError, NonFiniteLoss, UnknownPreset

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")
BN_EPS = 1e-5
FORMAT_VERSION = 1

# hidden width and activation of the three-layer MLP presets
MLP_TABLE = {
    "MLP0": (106, "tanh"),
    "MLP1": (176, "relu"),
    "MLP3": (51, "relu"),
    "MLP6": (38, "relu"),
    "MLP9": (25, "tanh"),
    "MLP12": (160, "tanh"),
    "MLP16": (111, "tanh"),
}
PRESETS = tuple(MLP_TABLE) + ("NeRF", "NeRF_MLP", "NeRF_MLP_BN", "MLP2x32")


# --------------------------------------------------------------------------
# architecture description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str = "relu"
    batch_norm: bool = False

    def __post_init__(self):
        if int(self.width) < 1:
            raise ValueError("layer width must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Hidden layers in order, plus a single sigmoid output unit.

    ``skip_input_at`` is a 0-based hidden-layer index; that layer receives
    ``[previous activations, network input]``.
    """

    input_dim: int
    layers: tuple
    skip_input_at: int | None = None
    preset: str | None = None

    def __post_init__(self):
        layers = tuple(l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers)
        object.__setattr__(self, "layers", layers)
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not layers:
            raise ValueError("need at least one hidden layer")
        if self.skip_input_at is not None and not 1 <= self.skip_input_at < len(layers):
            raise ValueError(f"skip_input_at={self.skip_input_at} is not a valid hidden layer")

    def fan_in(self, k: int) -> int:
        base = self.input_dim if k == 0 else self.layers[k - 1].width
        return base + (self.input_dim if k == self.skip_input_at else 0)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "input_dim": self.input_dim,
            "layers": [asdict(l) for l in self.layers],
            "skip_input_at": self.skip_input_at,
        }


def mlp_spec(input_dim: int, widths, activation: str = "relu", preset=None) -> NetworkSpec:
    return NetworkSpec(input_dim, tuple(LayerSpec(w, activation) for w in widths), preset=preset)


def preset_spec(name: str, input_dim: int) -> NetworkSpec:
    """Named architectures.

    ``MLP<k>`` are three equal hidden layers; the NeRF family has eight
    (NeRF) or ten (NeRF_MLP, NeRF_MLP_BN) layers with the input re-injected
    at the sixth. ``MLP2x32`` is the small network used for the 2-D demo.
    """
    if name in MLP_TABLE:
        width, act = MLP_TABLE[name]
        return mlp_spec(input_dim, [width] * 3, act, preset=name)
    if name == "MLP2x32":
        return mlp_spec(input_dim, [32, 32], "relu", preset=name)
    if name == "NeRF":
        return NetworkSpec(input_dim, tuple(LayerSpec(256, "relu") for _ in range(8)), 5, preset=name)
    if name in ("NeRF_MLP", "NeRF_MLP_BN"):
        bn = name == "NeRF_MLP_BN"
        layers = []
        for k in range(10):
            act = {7: "linear", 9: "sigmoid"}.get(k, "relu")
            layers.append(LayerSpec(128 if k == 9 else 256, act, bn and act == "relu"))
        return NetworkSpec(input_dim, tuple(layers), 5, preset=name)
    raise UnknownPreset(f"unknown architecture {name!r}; choose from {', '.join(PRESETS)}")


def clamp_width(spec: NetworkSpec, max_width: int) -> NetworkSpec:
    """Same topology with every hidden width capped at ``max_width``."""
    return replace(spec, layers=tuple(replace(l, width=min(l.width, max_width)) for l in spec.layers))


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------

def tensor_layout(spec: NetworkSpec):
    """``[(name, shape, trainable)]`` in file / flat-buffer order."""
    out = []
    for k, layer in enumerate(spec.layers):
        out.append((f"hidden{k}.weight", (layer.width, spec.fan_in(k)), True))
        if layer.batch_norm:
            out.append((f"hidden{k}.bn_scale", (layer.width,), True))
            out.append((f"hidden{k}.bn_shift", (layer.width,), True))
            out.append((f"hidden{k}.running_mean", (layer.width,), False))
            out.append((f"hidden{k}.running_var", (layer.width,), False))
        else:
            out.append((f"hidden{k}.bias", (layer.width,), True))
    out.append(("output.weight", (1, spec.layers[-1].width), True))
    out.append(("output.bias", (1,), True))
    return out


def _views(flat, layout):
    views, pos = {}, 0
    for name, shape, trainable in layout:
        if trainable:
            size = int(np.prod(shape))
            views[name] = flat[pos:pos + size].reshape(shape)
            pos += size
    return views


class NetworkParams:
    """Weights of one network: a flat trainable buffer plus BN running stats."""

    def __init__(self, spec: NetworkSpec, flat: np.ndarray, buffers: dict):
        self.spec = spec
        self.layout = tensor_layout(spec)
        n = sum(int(np.prod(s)) for _, s, t in self.layout if t)
        if flat.shape != (n,):
            raise ValueError(f"flat buffer must have {n} entries, got {flat.shape}")
        self.flat = flat
        self.buffers = buffers
        self._views = _views(flat, self.layout)

    def __getitem__(self, name: str) -> np.ndarray:
        if name in self._views:
            return self._views[name]
        return self.buffers[name]

    def tensors(self) -> dict:
        return {name: self[name] for name, _, _ in self.layout}

    @property
    def dtype(self):
        return self.flat.dtype

    @property
    def n_trainable(self) -> int:
        return len(self.flat)

    def copy(self, dtype=None) -> NetworkParams:
        dtype = dtype or self.dtype
        return NetworkParams(
            self.spec,
            self.flat.astype(dtype, copy=True),
            {k: v.astype(dtype, copy=True) for k, v in self.buffers.items()},
        )

    def __repr__(self):
        return f"NetworkParams(preset={self.spec.preset!r}, n_trainable={self.n_trainable}, dtype={self.dtype})"


def _init_std(activation: str, fan_in: int, fan_out: int) -> float:
    if activation == "relu":
        return np.sqrt(2.0 / fan_in)
    return np.sqrt(2.0 / (fan_in + fan_out))


def init_params(spec: NetworkSpec, seed=0, dtype=np.float32) -> NetworkParams:
    """He-normal weights ahead of ReLU, Xavier-normal elsewhere; zero biases."""
    rng = np.random.default_rng(seed)
    layout = tensor_layout(spec)
    n = sum(int(np.prod(s)) for _, s, t in layout if t)
    flat = np.zeros(n, dtype=dtype)
    views = _views(flat, layout)
    buffers = {}
    acts = {f"hidden{k}": l.activation for k, l in enumerate(spec.layers)}
    acts["output"] = "sigmoid"
    for name, shape, trainable in layout:
        prefix, kind = name.split(".")
        if kind == "weight":
            views[name][...] = rng.normal(0.0, _init_std(acts[prefix], shape[1], shape[0]), size=shape)
        elif kind == "bn_scale":
            views[name][...] = 1.0
        elif kind == "running_var":
            buffers[name] = np.ones(shape, dtype=dtype)
        elif kind == "running_mean":
            buffers[name] = np.zeros(shape, dtype=dtype)
    return NetworkParams(spec, flat, buffers)


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------

def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return expit(z)
    return z


def _activation_grad(h, kind):
    if kind == "relu":
        return h > 0
    if kind == "tanh":
        return 1 - h * h
    if kind == "sigmoid":
        return h * (1 - h)
    return None


def _check_input(params: NetworkParams, X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != params.spec.input_dim:
        raise DimensionMismatch(
            f"network expects {params.spec.input_dim} input features, got shape {X.shape}"
        )
    return X.astype(params.dtype, copy=False)


def _forward(params: NetworkParams, X, train: bool):
    """Logits plus the per-layer cache needed by the backward pass."""
    spec = params.spec
    h = X
    cache = []
    for k, layer in enumerate(spec.layers):
        inp = np.concatenate([h, X], axis=1) if k == spec.skip_input_at else h
        z = inp @ params[f"hidden{k}.weight"].T
        entry = {"inp": inp}
        if layer.batch_norm:
            if train:
                mean = z.mean(axis=0)
                var = z.var(axis=0)
            else:
                mean = params[f"hidden{k}.running_mean"]
                var = params[f"hidden{k}.running_var"]
            inv_std = 1 / np.sqrt(var + BN_EPS)
            zhat = (z - mean) * inv_std
            z = zhat * params[f"hidden{k}.bn_scale"] + params[f"hidden{k}.bn_shift"]
            entry.update(zhat=zhat, inv_std=inv_std, mean=mean, var=var)
        else:
            z = z + params[f"hidden{k}.bias"]
        h = _activate(z, layer.activation)
        entry["z"] = z
        entry["h"] = h
        cache.append(entry)
    logits = (h @ params["output.weight"].T)[:, 0] + params["output.bias"][0]
    return logits, cache


def _bce_from_logits(z, y):
    return np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))


def _backward(params: NetworkParams, X, cache, dlogits, grad: dict):
    """Fill ``grad`` (views of a flat buffer) with dLoss/dparams."""
    spec = params.spec
    h_last = cache[-1]["h"]
    grad["output.weight"][...] = (dlogits @ h_last)[None, :]
    grad["output.bias"][...] = dlogits.sum()
    dh = dlogits[:, None] * params["output.weight"]
    for k in range(len(spec.layers) - 1, -1, -1):
        layer, entry = spec.layers[k], cache[k]
        d = _activation_grad(entry["h"], layer.activation)
        da = dh if d is None else dh * d
        if layer.batch_norm:
            zhat = entry["zhat"]
            grad[f"hidden{k}.bn_scale"][...] = (da * zhat).sum(axis=0)
            grad[f"hidden{k}.bn_shift"][...] = da.sum(axis=0)
            dzhat = da * params[f"hidden{k}.bn_scale"]
            m = len(dzhat)
            dz = (entry["inv_std"] / m) * (
                m * dzhat - dzhat.sum(axis=0) - zhat * (dzhat * zhat).sum(axis=0)
            )
        else:
            dz = da
            grad[f"hidden{k}.bias"][...] = dz.sum(axis=0)
        grad[f"hidden{k}.weight"][...] = dz.T @ entry["inp"]
        if k == 0:
            break
        dinp = dz @ params[f"hidden{k}.weight"]
        dh = dinp[:, : spec.layers[k - 1].width] if k == spec.skip_input_at else dinp


def _loss_and_grad(params: NetworkParams, X, y, grad_flat):
    logits, cache = _forward(params, X, train=True)
    loss = float(np.mean(_bce_from_logits(logits, y)))
    dlogits = (expit(logits) - y) / len(y)
    _backward(params, X, cache, dlogits.astype(params.dtype, copy=False), _views(grad_flat, params.layout))
    return loss, cache


def forward(params: NetworkParams, x, mode: str = "infer"):
    """Collision probability for one encoded vector or an (m, n) batch.

    ``mode="train"`` normalises with batch statistics; ``"infer"`` uses the
    running statistics. Neither mode mutates ``params``.
    """
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    x = np.asarray(x)
    single = x.ndim == 1
    X = _check_input(params, x[None] if single else x)
    logits, _ = _forward(params, X, train=mode == "train")
    p = expit(logits)
    return float(p[0]) if single else p


def loss(params: NetworkParams, X, y, mode: str = "train") -> float:
    """Mean binary cross-entropy."""
    X = _check_input(params, X)
    logits, _ = _forward(params, X, train=mode == "train")
    return float(np.mean(_bce_from_logits(logits, np.asarray(y, dtype=params.dtype))))


def gradient(params: NetworkParams, X, y) -> dict:
    """Gradients of the mean BCE (train-mode BN) keyed like the trainable tensors."""
    X = _check_input(params, X)
    y = np.asarray(y, dtype=params.dtype).reshape(-1)
    if len(X) == 0:
        raise EmptyDataset("gradient of an empty batch")
    if len(y) != len(X):
        raise DimensionMismatch("X and y lengths differ")
    g = np.zeros_like(params.flat)
    _loss_and_grad(params, X, y, g)
    return _views(g, params.layout)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    bn_momentum: float = 0.99
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class LossCurve:
    """Per-epoch mean training loss and validation accuracy (NaN without validation data)."""

    train_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    val_accuracy: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __eq__(self, other):
        return (
            isinstance(other, LossCurve)
            and np.array_equal(self.train_loss, other.train_loss)
            and np.array_equal(self.val_accuracy, other.val_accuracy, equal_nan=True)
        )


def accuracy(params: NetworkParams, X, y, mode: str = "infer") -> float:
    p = forward(params, X, mode=mode)
    return float(np.mean((p >= 0.5) == (np.asarray(y) == 1)))


def train(spec: NetworkSpec, X, y, cfg: TrainConfig = TrainConfig(), X_val=None, y_val=None,
          init: NetworkParams | None = None):
    """Mini-batch Adam on mean BCE for ``cfg.epochs`` epochs.

    Weight init and the shuffle order both derive from ``cfg.seed``.
    Returns ``(params, LossCurve)``.
    """
    dtype = np.dtype(cfg.dtype)
    X = np.asarray(X)
    y = np.asarray(y).reshape(-1)
    if len(X) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DimensionMismatch(f"network expects {spec.input_dim} features, got shape {X.shape}")
    if len(y) != len(X):
        raise DimensionMismatch("X and y lengths differ")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    X = X.astype(dtype)
    y = y.astype(dtype)

    params = init.copy(dtype) if init is not None else init_params(spec, cfg.seed, dtype)
    grad = np.zeros_like(params.flat)
    m1 = np.zeros_like(params.flat)
    m2 = np.zeros_like(params.flat)
    tmp = np.zeros_like(params.flat)
    bn_layers = [k for k, l in enumerate(spec.layers) if l.batch_norm]
    mom = dtype.type(cfg.bn_momentum)
    rng = np.random.default_rng([cfg.seed, 1])
    n = len(X)
    losses = np.zeros(cfg.epochs)
    val_acc = np.full(cfg.epochs, np.nan)
    step = 0
    # divergence is detected from the epoch loss below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                batch_loss, cache = _loss_and_grad(params, X[idx], y[idx], grad)
                total += batch_loss * len(idx)
                step += 1
                # Adam
                m1 *= cfg.beta1
                m1 += (1 - cfg.beta1) * grad
                m2 *= cfg.beta2
                np.multiply(grad, grad, out=tmp)
                tmp *= 1 - cfg.beta2
                m2 += tmp
                lr_t = cfg.learning_rate * np.sqrt(1 - cfg.beta2 ** step) / (1 - cfg.beta1 ** step)
                eps_t = cfg.eps * np.sqrt(1 - cfg.beta2 ** step)
                np.sqrt(m2, out=tmp)
                tmp += eps_t
                np.divide(m1, tmp, out=tmp)
                tmp *= lr_t
                params.flat -= tmp
                for k in bn_layers:
                    rm = params.buffers[f"hidden{k}.running_mean"]
                    rv = params.buffers[f"hidden{k}.running_var"]
                    rm *= mom
                    rm += (1 - mom) * cache[k]["mean"]
                    rv *= mom
                    rv += (1 - mom) * cache[k]["var"]
            losses[epoch] = total / n
            if not np.isfinite(losses[epoch]):
                raise NonFiniteLoss(f"training loss became non-finite at epoch {epoch + 1}")
            if X_val is not None and len(X_val):
                val_acc[epoch] = accuracy(params, X_val, y_val)
    return params, LossCurve(losses, val_acc)


# --------------------------------------------------------------------------
# model files
# --------------------------------------------------------------------------

@dataclass
class CollisionModel:
    """Trained network plus the encoding level its inputs need."""

    params: NetworkParams
    level: int = 0

    @property
    def raw_dim(self) -> int:
        return self.params.spec.input_dim // (1 + 2 * self.level)

    def predict_proba(self, q) -> np.ndarray:
        """Collision probability for raw (m, d) joint configurations."""
        q = np.asarray(q, dtype=np.float64)
        if q.ndim == 1:
            q = q[None]
        if q.shape[1] != self.raw_dim:
            raise DimensionMismatch(f"model expects {self.raw_dim} raw inputs, got {q.shape[1]}")
        return forward(self.params, encode_batch(q, self.level))


def save_model(path, model: CollisionModel) -> None:
    """Header line (JSON) followed by one base64 line per tensor.

    Tensors are little-endian float32, row-major, in layer order.
    """
    params = model.params
    spec = params.spec
    if spec.input_dim != encoded_length(model.raw_dim, model.level):
        raise DimensionMismatch("input_dim is inconsistent with the encoding level")
    header = {
        "format_version": FORMAT_VERSION,
        "preset": spec.preset,
        "input_dim": spec.input_dim,
        "L": model.level,
        "layout": LAYOUT,
        "layers": [asdict(l) for l in spec.layers],
        "skip_input_at": spec.skip_input_at,
        "tensors": [{"name": n, "shape": list(s)} for n, s, _ in params.layout],
    }
    lines = [json.dumps(header)]
    for name, _, _ in params.layout:
        data = np.ascontiguousarray(params[name], dtype="<f4").tobytes()
        lines.append(base64.b64encode(data).decode("ascii"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> CollisionModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read model {path}: {exc}") from exc
    lines = text.split("\n")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise FormatError(f"{path}: missing or corrupt header") from None
    if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {header.get('format_version') if isinstance(header, dict) else None!r}")
    if header.get("layout") != LAYOUT:
        raise FormatError(f"{path}: unknown input layout {header.get('layout')!r}")
    try:
        spec = NetworkSpec(
            int(header["input_dim"]),
            tuple(LayerSpec(**l) for l in header["layers"]),
            header["skip_input_at"],
            preset=header.get("preset"),
        )
        level = int(header["L"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad header ({exc})") from None
    layout = tensor_layout(spec)
    listed = [(t["name"], tuple(t["shape"])) for t in header.get("tensors", [])]
    if listed != [(n, s) for n, s, _ in layout]:
        raise FormatError(f"{path}: tensor list does not match the architecture")
    body = lines[1:]
    if len(body) < len(layout) or any(l.strip() for l in body[len(layout):]):
        raise FormatError(f"{path}: expected {len(layout)} tensor lines")
    params = init_params(spec, 0, np.float32)
    for (name, shape, _), line in zip(layout, body):
        try:
            raw = base64.b64decode(line.strip(), validate=True)
        except ValueError:
            raise FormatError(f"{path}: tensor {name} is not valid base64") from None
        size = int(np.prod(shape))
        if len(raw) != 4 * size:
            raise FormatError(f"{path}: tensor {name} has {len(raw)} bytes, expected {4 * size}")
        arr = np.frombuffer(raw, dtype="<f4")
        params[name][...] = arr.reshape(shape)
    try:
        model = CollisionModel(params, level)
        encoded_length(model.raw_dim, level)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if spec.input_dim != encoded_length(model.raw_dim, level):
        raise FormatError(f"{path}: input_dim {spec.input_dim} is not d*(1+2L) for L={level}")
    return model


# --------------------------------------------------------------------------
# scikit-learn wrapper
# --------------------------------------------------------------------------

class NeuralNetClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier over whatever features it is given.

    Parameters
    ----------
    arch : str or None, default="MLP3"
        Preset name. When None, ``hidden_layer_sizes`` and ``activation``
        describe a plain MLP.
    hidden_layer_sizes : tuple of int, default=(32, 32)
    activation : str, default="relu"
    epochs, batch_size, learning_rate, seed
        Passed to :class:`TrainConfig`.
    """

    def __init__(self, arch="MLP3", hidden_layer_sizes=(32, 32), activation="relu",
                 epochs=200, batch_size=256, learning_rate=1e-3, seed=0):
        self.arch = arch
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def _make_spec(self, input_dim):
        if self.arch is None:
            return mlp_spec(input_dim, self.hidden_layer_sizes, self.activation)
        return preset_spec(self.arch, input_dim)

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if not set(self.classes_.tolist()) <= {0, 1}:
            raise ValueError("labels must be 0/1")
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        cfg = TrainConfig(self.epochs, self.batch_size, self.learning_rate, seed=self.seed)
        self.params_, self.loss_curve_ = train(self._make_spec(X.shape[1]), X, y, cfg, X_val, y_val)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        p = forward(self.params_, X)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
