"""Small convolutional binary classifier written directly in numpy.

Stock stack: conv3x3(8) -> ReLU -> maxpool2x2 -> conv3x3(16) -> ReLU
-> [residual block: conv3x3 -> ReLU -> conv3x3, + skip, ReLU] -> global
average pool -> dense(2) -> softmax. Convolutions use zero "same" padding.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ChecksumError, DatasetFormatError, TrainingDivergedError, TruncatedFileError, VersionMismatchError

MODEL_MAGIC = b"WSCM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    height: int = 10
    width: int = 135
    conv1: int = 8
    conv2: int = 16
    residual: bool = True
    classes: int = 2

    def __post_init__(self):
        if min(self.height, self.width) < 2 or min(self.conv1, self.conv2, self.classes) < 1:
            raise ValueError(f"invalid architecture {self}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0 or self.eps <= 0:
            raise ValueError("epochs, batch_size, lr and eps must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")


def param_shapes(arch: ArchConfig) -> dict:
    shapes = {
        "conv1.w": (arch.conv1, 1, 3, 3),
        "conv1.b": (arch.conv1,),
        "conv2.w": (arch.conv2, arch.conv1, 3, 3),
        "conv2.b": (arch.conv2,),
    }
    if arch.residual:
        shapes.update({
            "res1.w": (arch.conv2, arch.conv2, 3, 3),
            "res1.b": (arch.conv2,),
            "res2.w": (arch.conv2, arch.conv2, 3, 3),
            "res2.b": (arch.conv2,),
        })
    shapes.update({"fc.w": (arch.conv2, arch.classes), "fc.b": (arch.classes,)})
    return shapes


@dataclass(eq=False)
class ClassifierModel:
    arch: ArchConfig
    params: dict
    init_seed: int = 0
    version: int = MODEL_VERSION

    @property
    def dtype(self):
        return self.params["fc.w"].dtype

    def copy(self, dtype=None) -> "ClassifierModel":
        dtype = dtype or self.dtype
        return ClassifierModel(self.arch, {k: v.astype(dtype, copy=True) for k, v in self.params.items()},
                               self.init_seed, self.version)

    def num_weights(self) -> int:
        return sum(v.size for v in self.params.values())

    def __eq__(self, other):
        return (
            isinstance(other, ClassifierModel)
            and self.arch == other.arch
            and self.params.keys() == other.params.keys()
            and all(np.array_equal(v, other.params[k]) for k, v in self.params.items())
        )


def init_model(arch: ArchConfig = ArchConfig(), seed: int = 0, zero: bool = False, dtype=np.float32) -> ClassifierModel:
    """Fan-in scaled uniform weights (limit sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(arch).items():
        if zero or name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            lim = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-lim, lim, size=shape).astype(dtype)
    return ClassifierModel(arch, params, init_seed=seed)


# ---- layers -------------------------------------------------------------

def _conv_forward(x, w, b):
    """3x3 same convolution. x: (B, C, H, W), w: (F, C, 3, 3)."""
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, C * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.reshape(B, H, W, -1).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, x_shape, w):
    B, C, H, W = x_shape
    F = w.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, F)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(F, -1)).reshape(B, H, W, C, 3, 3)
    dxp = np.zeros((B, C, H + 2, W + 2), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + H, j:j + W] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _pool_forward(x):
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    blocks = x[:, :, :2 * Ho, :2 * Wo].reshape(B, C, Ho, 2, Wo, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(B, C, Ho, Wo, 4)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def _pool_backward(dout, arg, x_shape):
    B, C, H, W = x_shape
    Ho, Wo = dout.shape[2:]
    dblocks = np.zeros((B, C, Ho, Wo, 4), dtype=dout.dtype)
    np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=-1)
    dblocks = dblocks.reshape(B, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * Ho, 2 * Wo)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, :2 * Ho, :2 * Wo] = dblocks
    return dx


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: ClassifierModel, x, keep_cache: bool = False):
    """Logits for a batch ``x`` of shape (B, H, W) or (B, 1, H, W)."""
    p = model.params
    x = np.asarray(x, dtype=model.dtype)
    if x.ndim == 3:
        x = x[:, None]
    if x.shape[1:] != (1, model.arch.height, model.arch.width):
        raise ValueError(f"input shape {x.shape[1:]} does not match model {(1, model.arch.height, model.arch.width)}")
    cache = {}
    h, cache["c1"] = _conv_forward(x, p["conv1.w"], p["conv1.b"])
    cache["x_shape"] = x.shape
    cache["a1"] = h = np.maximum(h, 0)
    h, cache["pool"] = _pool_forward(h)
    cache["p_out"] = h
    h, cache["c2"] = _conv_forward(h, p["conv2.w"], p["conv2.b"])
    cache["a2"] = h = np.maximum(h, 0)
    if model.arch.residual:
        r, cache["r1"] = _conv_forward(h, p["res1.w"], p["res1.b"])
        cache["ra"] = r = np.maximum(r, 0)
        r, cache["r2"] = _conv_forward(r, p["res2.w"], p["res2.b"])
        cache["a3"] = h = np.maximum(h + r, 0)
    cache["gap_shape"] = h.shape
    g = h.mean(axis=(2, 3))
    cache["g"] = g
    logits = g @ p["fc.w"] + p["fc.b"]
    return (logits, cache) if keep_cache else logits


def backward(model: ClassifierModel, cache, dlogits) -> dict:
    p = model.params
    grads = {}
    g = cache["g"]
    grads["fc.w"] = g.T @ dlogits
    grads["fc.b"] = dlogits.sum(axis=0)
    dg = dlogits @ p["fc.w"].T
    B, C, H, W = cache["gap_shape"]
    dh = np.broadcast_to(dg[:, :, None, None] / (H * W), (B, C, H, W)).copy()
    if model.arch.residual:
        dh = dh * (cache["a3"] > 0)
        dr, grads["res2.w"], grads["res2.b"] = _conv_backward(dh, cache["r2"], cache["ra"].shape, p["res2.w"])
        dr = dr * (cache["ra"] > 0)
        dr, grads["res1.w"], grads["res1.b"] = _conv_backward(dr, cache["r1"], cache["a2"].shape, p["res1.w"])
        dh = dh + dr
    dh = dh * (cache["a2"] > 0)
    dh, grads["conv2.w"], grads["conv2.b"] = _conv_backward(dh, cache["c2"], cache["p_out"].shape, p["conv2.w"])
    dh = _pool_backward(dh, cache["pool"], cache["a1"].shape)
    dh = dh * (cache["a1"] > 0)
    _, grads["conv1.w"], grads["conv1.b"] = _conv_backward(dh, cache["c1"], cache["x_shape"], p["conv1.w"])
    return grads


def loss_and_grads(model: ClassifierModel, x, y):
    """Mean cross-entropy over the batch and its gradients."""
    logits, cache = forward(model, x, keep_cache=True)
    y = np.asarray(y)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(y)
    loss = -float(np.mean(logp[np.arange(n), y]))
    d = np.exp(logp)
    d[np.arange(n), y] -= 1
    return loss, backward(model, cache, (d / n).astype(model.dtype))


def predict_proba(model: ClassifierModel, images) -> np.ndarray:
    return softmax(forward(model, images))


def predict(model: ClassifierModel, image) -> tuple[int, float]:
    """Label (0 = OTFS, 1 = OFDM) and its probability for a single image."""
    prob = predict_proba(model, np.asarray(image)[None])[0]
    k = int(np.argmax(prob))
    return k, float(prob[k])


def predict_labels(model: ClassifierModel, images, batch_size: int = 256) -> np.ndarray:
    images = np.asarray(images)
    out = [np.argmax(forward(model, images[i:i + batch_size]), axis=1) for i in range(0, len(images), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


# ---- training -----------------------------------------------------------

@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)


def _stack(samples):
    x = np.stack([s.image for s in samples]).astype(np.float32)
    y = np.array([s.label for s in samples], dtype=np.int64)
    return x, y


def train(model: ClassifierModel, samples, cfg: TrainConfig = TrainConfig(), verbose=None):
    """Mini-batch Adam on mean cross-entropy. Returns a new model and its history."""
    if len(samples) == 0:
        raise ValueError("empty training set")
    x, y = _stack(samples)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(x))
    n_val = int(round(cfg.validation_fraction * len(x)))
    val_idx, tr_idx = order[:n_val], order[n_val:]
    if len(tr_idx) == 0:
        raise ValueError("validation split leaves no training data")

    model = model.copy()
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0
    hist = TrainHistory()
    for epoch in range(cfg.epochs):
        perm = tr_idx[rng.permutation(len(tr_idx))]
        total, correct = 0.0, 0
        for i in range(0, len(perm), cfg.batch_size):
            idx = perm[i:i + cfg.batch_size]
            loss, grads = loss_and_grads(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, step {step}: {loss}")
            step += 1
            for k, gk in grads.items():
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * gk
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * gk * gk
                mhat = m[k] / (1 - cfg.beta1 ** step)
                vhat = v[k] / (1 - cfg.beta2 ** step)
                model.params[k] -= (cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)).astype(model.dtype)
            total += loss * len(idx)
        train_pred = predict_labels(model, x[tr_idx])
        correct = int(np.sum(train_pred == y[tr_idx]))
        hist.loss.append(total / len(tr_idx))
        hist.accuracy.append(correct / len(tr_idx))
        if n_val:
            hist.val_accuracy.append(float(np.mean(predict_labels(model, x[val_idx]) == y[val_idx])))
        if verbose:
            verbose(epoch, hist)
    return model, hist


def evaluate_accuracy(model_or_predictor, samples):
    """Accuracy and 2x2 confusion matrix (rows: true label, columns: predicted).

    Accepts a ClassifierModel or any callable mapping (N, H, W) images to labels.
    """
    if len(samples) == 0:
        raise ValueError("empty evaluation set")
    x, y = _stack(samples)
    if isinstance(model_or_predictor, ClassifierModel):
        pred = predict_labels(model_or_predictor, x)
    else:
        pred = np.asarray(model_or_predictor(x))
    conf = np.zeros((2, 2), dtype=int)
    np.add.at(conf, (y, pred), 1)
    return float(np.mean(pred == y)), conf


# ---- gradient check -----------------------------------------------------

@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    checked: int
    worst: tuple
    skipped_kinks: int = 0


def _rel_error(a: float, b: float) -> float:
    denom = max(abs(a), abs(b))
    if not (np.isfinite(a) and np.isfinite(b)):
        return np.inf
    return 0.0 if denom < 1e-9 else abs(a - b) / denom


def gradient_check(model: ClassifierModel, image, label: int, tolerance: float = 1e-3, n_weights: int = 60,
                   step: float = 1e-4, seed: int = 0, grad_fn=None) -> GradCheckReport:
    """Compare analytic gradients to central differences on random weights (float64).

    A weight whose forward and backward one-sided slopes disagree sits on a
    ReLU or max-pool kink within ``step``; it is skipped and another is drawn.
    """
    m64 = model.copy(np.float64)
    x = np.asarray(image, dtype=np.float64)[None]
    y = np.array([label])
    grad_fn = grad_fn or (lambda mod: loss_and_grads(mod, x, y)[1])
    grads = grad_fn(m64)
    l0 = loss_and_grads(m64, x, y)[0]
    names = list(m64.params)
    sizes = np.array([m64.params[k].size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    order = np.random.default_rng(seed).permutation(sizes.sum())
    worst, worst_at, checked, kinks = 0.0, None, 0, 0
    for fid in order:
        if checked == n_weights:
            break
        t = int(np.searchsorted(offsets, fid, side="right") - 1)
        name, j = names[t], int(fid - offsets[t])
        w = m64.params[name].reshape(-1)
        orig = w[j]
        w[j] = orig + step
        lp = loss_and_grads(m64, x, y)[0]
        w[j] = orig - step
        lm = loss_and_grads(m64, x, y)[0]
        w[j] = orig
        if _rel_error((lp - l0) / step, (l0 - lm) / step) > tolerance:
            kinks += 1
            continue
        num = (lp - lm) / (2 * step)
        ana = float(grads[name].reshape(-1)[j])
        rel = _rel_error(num, ana)
        checked += 1
        if rel > worst or worst_at is None:
            worst, worst_at = rel, (name, j, ana, num)
    return GradCheckReport(passed=bool(checked > 0 and worst < tolerance), max_rel_error=float(worst),
                           checked=checked, worst=worst_at, skipped_kinks=kinks)


# ---- feature baseline ---------------------------------------------------

def handcrafted_features(images) -> np.ndarray:
    """Doppler proxy, delay-spread proxy, SNR pixel, QAM pixel per image."""
    images = np.asarray(images, dtype=np.float64)
    mag = images[:, :-1, :]
    time_var = np.abs(np.diff(mag, axis=1)).mean(axis=(1, 2)) if mag.shape[1] > 1 else np.zeros(len(images))
    freq_var = np.abs(np.diff(mag, axis=2)).mean(axis=(1, 2))
    return np.column_stack([time_var, freq_var, images[:, -1, 0], images[:, -1, 1]])


@dataclass
class LogisticBaseline:
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray
    bias: float

    def decision(self, images) -> np.ndarray:
        f = (handcrafted_features(images) - self.mean) / self.scale
        return f @ self.weights + self.bias

    def __call__(self, images) -> np.ndarray:
        return (self.decision(images) > 0).astype(int)


def baseline_logistic(samples, steps: int = 2000, lr: float = 0.5, seed: int = 0) -> LogisticBaseline:
    """Full-batch gradient-descent logistic regression on handcrafted features."""
    if len(samples) == 0:
        raise ValueError("empty training set")
    x, y = _stack(samples)
    f = handcrafted_features(x)
    mean, scale = f.mean(axis=0), f.std(axis=0)
    scale[scale == 0] = 1.0
    f = (f - mean) / scale
    rng = np.random.default_rng(seed)
    w = rng.normal(0, 1e-3, f.shape[1])
    b = 0.0
    for _ in range(steps):
        z = f @ w + b
        pr = 1 / (1 + np.exp(-z))
        g = pr - y
        w -= lr * f.T @ g / len(y)
        b -= lr * float(np.mean(g))
    return LogisticBaseline(mean, scale, w, b)


# ---- model file ---------------------------------------------------------

_MODEL_HEADER = struct.Struct("<4sHI")


def save_model(model: ClassifierModel, path) -> None:
    """Header (magic, version, arch JSON) + little-endian f32 weights + CRC-32."""
    arch = json.dumps({"arch": asdict(model.arch), "init_seed": model.init_seed,
                       "order": list(param_shapes(model.arch))}, sort_keys=True).encode()
    blob = b"".join(np.asarray(model.params[k], dtype="<f4").tobytes() for k in param_shapes(model.arch))
    body = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(arch)) + arch + blob
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_model(path) -> ClassifierModel:
    buf = Path(path).read_bytes()
    if len(buf) < _MODEL_HEADER.size + 4:
        raise TruncatedFileError("model file too short")
    magic, version, alen = _MODEL_HEADER.unpack_from(buf)
    if magic != MODEL_MAGIC:
        raise DatasetFormatError(f"bad model magic {magic!r}")
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"model version {version} != {MODEL_VERSION}")
    meta = json.loads(buf[_MODEL_HEADER.size:_MODEL_HEADER.size + alen])
    arch = ArchConfig(**meta["arch"])
    shapes = param_shapes(arch)
    need = _MODEL_HEADER.size + alen + 4 * sum(int(np.prod(s)) for s in shapes.values()) + 4
    if len(buf) != need:
        raise TruncatedFileError(f"model file has {len(buf)} bytes, expected {need}")
    (crc,) = struct.unpack_from("<I", buf, need - 4)
    if zlib.crc32(buf[:need - 4]) != crc:
        raise ChecksumError("model CRC-32 mismatch")
    params, off = {}, _MODEL_HEADER.size + alen
    for k, s in shapes.items():
        n = int(np.prod(s))
        params[k] = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(s).astype(np.float32)
        off += 4 * n
    return ClassifierModel(arch, params, init_seed=meta["init_seed"])
