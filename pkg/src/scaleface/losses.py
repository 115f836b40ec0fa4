"""Softmax, ArcFace and ScaleFace losses with analytic gradients.

All three share one kernel: a softmax cross-entropy over per-sample scaled
logits, where the true-class cosine optionally gets an additive angular
margin, ``cos(theta + m)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import FormatError, NumericError, ShapeError

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.5
    scale: float | None = 64.0  # None selects per-sample scales
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if not (0.0 <= self.margin < math.pi / 2):
            raise ShapeError("margin must lie in [0, pi/2)")
        if self.scale is not None and self.scale <= 0:
            raise ShapeError("fixed scale must be positive")

    @property
    def per_sample(self) -> bool:
        return self.scale is None


@dataclass
class LossResult:
    loss: float
    grad_embeddings: np.ndarray
    grad_centroids: np.ndarray
    grad_scales: np.ndarray | None
    probs: np.ndarray
    per_sample: np.ndarray  # per-sample loss values
    cosines: np.ndarray


def _as_array(x, attr):
    return np.asarray(getattr(x, attr, x), dtype=np.float64)


def _check_inputs(E, W, labels):
    if E.ndim != 2 or W.ndim != 2 or E.shape[1] != W.shape[1]:
        raise ShapeError(f"embedding {E.shape} and centroid {W.shape} widths differ")
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.shape != (E.shape[0],):
        raise ShapeError("one label per embedding required")
    if labels.size and (labels.min() < 0 or labels.max() >= W.shape[0]):
        raise FormatError("label outside centroid range")
    return labels


def _check_unit(x, what):
    dev = np.abs(np.linalg.norm(x, axis=1) - 1.0)
    if dev.size and dev.max() > UNIT_TOL:
        raise ShapeError(f"{what} must be unit-norm (deviation {dev.max():.2e})")


def margin_loss(E, W, labels, scales, margin, clamp_eps=1e-7):
    """Core evaluation without input validation; used by training and gradchecks.

    ``scales`` may contain zeros here (ReLU heads). Returns a LossResult with
    the batch-mean loss and its gradients.
    """
    E = np.ascontiguousarray(E, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    scales = np.ascontiguousarray(scales, dtype=np.float64)
    cos = E @ W.T
    use_margin = margin != 0.0
    losses, dcos, dscale, probs = _core.margin_softmax(
        cos, labels, scales, math.cos(margin), math.sin(margin), clamp_eps, use_margin
    )
    n = E.shape[0]
    dcos /= n
    loss = float(losses.sum() / n)
    if not math.isfinite(loss):
        raise NumericError("non-finite loss")
    return LossResult(
        loss=loss,
        grad_embeddings=dcos @ W,
        grad_centroids=dcos.T @ E,
        grad_scales=dscale / n,
        probs=probs,
        per_sample=losses,
        cosines=cos,
    )


def softmax_loss(raw_embeddings, centroids, labels) -> LossResult:
    """Plain softmax cross-entropy with logits ``<e_i, w_j>`` (no normalization)."""
    E = _as_array(raw_embeddings, "vectors")
    W = _as_array(centroids, "centroids")
    labels = _check_inputs(E, W, labels)
    res = margin_loss(E, W, labels, np.ones(E.shape[0]), 0.0)
    res.grad_scales = None
    return res


def arcface_loss(unit_embeddings, centroids, labels, scale=64.0, margin=0.5,
                 clamp_eps=1e-7, validate=True) -> LossResult:
    """Additive angular margin loss with a fixed scale."""
    cfg = LossConfig(margin=margin, scale=scale, clamp_eps=clamp_eps)
    E = _as_array(unit_embeddings, "unit_vectors")
    W = _as_array(centroids, "centroids")
    labels = _check_inputs(E, W, labels)
    if validate:
        _check_unit(E, "embeddings")
        _check_unit(W, "centroids")
    res = margin_loss(E, W, labels, np.full(E.shape[0], cfg.scale), cfg.margin,
                      cfg.clamp_eps)
    res.grad_scales = None
    return res


def scaleface_loss(unit_embeddings, centroids, labels, scales, margin=0.5,
                   clamp_eps=1e-7, validate=True) -> LossResult:
    """Angular margin loss where every sample brings its own scale.

    ``grad_scales[i]`` is the derivative of the batch-mean loss with respect
    to ``scales[i]``.
    """
    cfg = LossConfig(margin=margin, scale=None, clamp_eps=clamp_eps)
    E = _as_array(unit_embeddings, "unit_vectors")
    W = _as_array(centroids, "centroids")
    labels = _check_inputs(E, W, labels)
    scales = np.asarray(scales, dtype=np.float64)
    if scales.shape != (E.shape[0],):
        raise ShapeError("one scale per embedding required")
    if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
        raise NumericError("scales must be finite and positive")
    if validate:
        _check_unit(E, "embeddings")
        _check_unit(W, "centroids")
    return margin_loss(E, W, labels, scales, cfg.margin, cfg.clamp_eps)
