"""Per-sample scale predictor and its training loop over frozen embeddings.

The head is an MLP with ReLU hidden layers and a scalar output ``a(x)``;
a positivity activation maps ``a`` to the scale ``s(x)``.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .embeddings import CentroidMatrix, UnitEmbeddings, init_centroids
from .errors import FormatError, NumericError, ShapeError
from .gradnet import DenseNet, Layer, OptimizerState, adam_step, net_backward, net_forward
from .losses import margin_loss

FAMILIES = ("exp", "sigm", "shifted_sigm", "relu")
HEAD_MAGIC = b"SFH1"
_HEAD_HEADER = struct.Struct("<4sIIIIddd")


@dataclass(frozen=True)
class ScaleHeadConfig:
    n_hidden: int = 2
    width: int = 128
    activation: str = "sigm"
    c: float = 64.0
    lo: float = 32.0
    hi: float = 64.0

    def __post_init__(self):
        if self.n_hidden not in (1, 2, 3, 4):
            raise ShapeError("hidden layer count must be 1..4")
        if self.width < 1:
            raise ShapeError("hidden width must be positive")
        if self.activation not in FAMILIES:
            raise ShapeError(f"unknown activation family {self.activation!r}")
        if self.activation in ("sigm", "relu") and self.c <= 0:
            raise ShapeError("activation constant must be positive")
        if self.activation == "shifted_sigm" and not (self.hi > self.lo >= 0):
            raise ShapeError("shifted sigmoid needs hi > lo >= 0")

    @classmethod
    def from_name(cls, name: str, **kw) -> "ScaleHeadConfig":
        """Parse ``exp``, ``sigm_64``, ``shifted_sigm_32_64`` or ``relu_8``."""
        parts = name.split("_")
        try:
            if name == "exp":
                return cls(activation="exp", **kw)
            if name.startswith("shifted_sigm_"):
                return cls(activation="shifted_sigm", lo=float(parts[2]), hi=float(parts[3]), **kw)
            if parts[0] in ("sigm", "relu") and len(parts) == 2:
                return cls(activation=parts[0], c=float(parts[1]), **kw)
        except (IndexError, ValueError):
            pass
        raise ShapeError(f"cannot parse activation {name!r}")

    @property
    def name(self) -> str:
        if self.activation == "exp":
            return "exp"
        if self.activation == "shifted_sigm":
            return f"shifted_sigm_{self.lo:g}_{self.hi:g}"
        return f"{self.activation}_{self.c:g}"


def activate(config: ScaleHeadConfig, a):
    """Map pre-activations to scales; returns ``(scales, dscale/da)``."""
    if config.activation == "exp":
        with np.errstate(over="ignore"):  # overflow surfaces as a NumericError in the loss
            s = np.exp(a)
        return s, s
    if config.activation == "sigm":
        sg = expit(a)
        return config.c * sg, config.c * sg * (1.0 - sg)
    if config.activation == "shifted_sigm":
        sg = expit(a)
        span = config.hi - config.lo
        return config.lo + span * sg, span * sg * (1.0 - sg)
    return config.c * np.maximum(a, 0.0), np.where(a > 0.0, config.c, 0.0)


@dataclass
class ScaleHead:
    net: DenseNet
    config: ScaleHeadConfig

    @classmethod
    def init(cls, input_dim: int, config: ScaleHeadConfig, rng) -> "ScaleHead":
        sizes = [input_dim] + [config.width] * config.n_hidden + [1]
        acts = ["relu"] * config.n_hidden + ["identity"]
        return cls(DenseNet.init(sizes, acts, rng), config)

    def copy(self) -> "ScaleHead":
        return ScaleHead(self.net.copy(), self.config)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    freeze_centroids: bool = False
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ShapeError("epochs >= 0, batch_size >= 1 and lr > 0 required")


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    head: ScaleHead = None
    centroids: CentroidMatrix = None


def _unit_array(unit):
    return np.asarray(getattr(unit, "unit_vectors", unit), dtype=np.float64)


def preactivations(head: ScaleHead, unit_embeddings):
    out, _ = net_forward(head.net, _unit_array(unit_embeddings))
    return out[:, 0]


def head_forward(head: ScaleHead, unit_embeddings):
    """Predicted scale for every row."""
    return activate(head.config, preactivations(head, unit_embeddings))[0]


def predict_scales(head: ScaleHead, unit_embeddings):
    """Scales plus the confidence ranking (descending scale, ties by index)."""
    scales = head_forward(head, unit_embeddings)
    return scales, np.argsort(-scales, kind="stable")


def head_loss(head: ScaleHead, E, labels, W, margin, clamp_eps=1e-7):
    """ScaleFace loss of a batch and its gradients.

    Returns ``(LossResult, head_param_grads)``; the centroid gradient is in
    ``LossResult.grad_centroids``.
    """
    a, cache = net_forward(head.net, E)
    scales, dsda = activate(head.config, a[:, 0])
    res = margin_loss(E, W, labels, scales, margin, clamp_eps)
    da = (res.grad_scales * dsda)[:, None]
    grads, _ = net_backward(head.net, cache, da)
    return res, grads


def train_head(unit_embeddings, labels, head_config: ScaleHeadConfig, margin: float,
               train_config: TrainConfig, centroids: CentroidMatrix = None) -> TrainReport:
    """Minimize the ScaleFace loss over the head (and centroids unless frozen).

    Embeddings stay fixed. Centroids start at the renormalized class means
    and are renormalized after every optimizer step.
    """
    E = _unit_array(unit_embeddings)
    labels = np.asarray(labels, dtype=np.int64)
    dev = np.abs(np.linalg.norm(E, axis=1) - 1.0)
    if dev.size and dev.max() > 1e-6:
        raise ShapeError("training embeddings must be unit-norm")
    num_classes = int(getattr(unit_embeddings, "num_classes", labels.max() + 1))
    if centroids is None:
        unit = UnitEmbeddings(E, np.ones(E.shape[0]), labels, num_classes)
        centroids = init_centroids(unit)
    centroids = CentroidMatrix(centroids.centroids.copy(), centroids.frozen)
    freeze = train_config.freeze_centroids or centroids.frozen

    init_ss, order_ss = np.random.SeedSequence(train_config.seed).spawn(2)
    head = ScaleHead.init(E.shape[1], head_config, np.random.default_rng(init_ss))
    order_rng = np.random.default_rng(order_ss)

    head_params = head.net.params()
    head_opt = OptimizerState.for_params(head_params, lr=train_config.lr)
    cen_opt = OptimizerState.for_params([centroids.centroids], lr=train_config.lr)

    report = TrainReport(head=head, centroids=centroids)
    n = E.shape[0]
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        order = order_rng.permutation(n) if train_config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            try:
                res, grads = head_loss(head, E[idx], labels[idx], centroids.centroids, margin)
            except NumericError as exc:
                raise NumericError(f"training diverged in epoch {epoch + 1}: {exc}") from None
            total += res.loss * idx.size
            adam_step(head_params, grads, head_opt)
            if not freeze:
                adam_step([centroids.centroids], [res.grad_centroids], cen_opt)
                centroids.renormalize()
        mean = total / n
        if not np.isfinite(mean):
            raise NumericError(f"training diverged in epoch {epoch + 1}")
        report.losses.append(mean)
    return report


_ACT_CODES = {name: k for k, name in enumerate(FAMILIES)}


def save_head(path, head: ScaleHead):
    cfg = head.config
    with open(path, "wb") as fh:
        fh.write(_HEAD_HEADER.pack(HEAD_MAGIC, head.net.input_dim, cfg.n_hidden, cfg.width,
                                   _ACT_CODES[cfg.activation], cfg.c, cfg.lo, cfg.hi))
        for p in head.net.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_head(path) -> ScaleHead:
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, d, n_hidden, width, code, c, lo, hi = _HEAD_HEADER.unpack_from(raw)
    if magic != HEAD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if code >= len(FAMILIES):
        raise FormatError(f"{path}: unknown activation code {code}")
    try:
        cfg = ScaleHeadConfig(n_hidden, width, FAMILIES[code], c, lo, hi)
    except ShapeError as exc:
        raise FormatError(f"{path}: invalid head config ({exc})") from None
    sizes = [d] + [width] * n_hidden + [1]
    expected = _HEAD_HEADER.size + 8 * sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEAD_HEADER.size).astype(np.float64)
    layers, pos = [], 0
    for k, (i, o) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = flat[pos:pos + o * i].reshape(o, i)
        pos += o * i
        b = flat[pos:pos + o]
        pos += o
        act = "identity" if k == n_hidden else "relu"
        layers.append(Layer(w.copy(), b.copy(), act))
    return ScaleHead(DenseNet(layers), cfg)
