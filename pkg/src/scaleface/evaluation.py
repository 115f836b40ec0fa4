"""Verification metrics, reject-verification curves, confidence baselines,
retrieval precision-recall and confidence histograms."""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import InfeasibleError, ShapeError

DEFAULT_GRID = tuple(round(0.02 * k, 2) for k in range(26))
PROVENANCES = ("scale", "norm", "random", "oracle")


@dataclass
class UncertaintyScores:
    values: np.ndarray
    provenance: str = "scale"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("uncertainties must be finite")
        if self.provenance not in PROVENANCES:
            raise ShapeError(f"unknown provenance {self.provenance!r}")


@dataclass
class RejectionCurve:
    grid: np.ndarray
    tar: np.ndarray
    far: float
    auc_raw: float
    auc_normalized: float
    normalization: str = "unit"
    provenance: str = ""

    def summary(self) -> dict:
        return {
            "far": self.far,
            "auc_raw": self.auc_raw,
            "auc_normalized": self.auc_normalized,
            "normalization": self.normalization,
            "grid": [float(r) for r in self.grid],
            "tar": [float(t) for t in self.tar],
            "provenance": self.provenance,
        }


@dataclass
class RetrievalEval:
    precision: np.ndarray
    recall: np.ndarray
    thresholds: np.ndarray
    auc: float
    top1: bool


@dataclass
class ConfidenceHistogram:
    counts: np.ndarray
    edges: np.ndarray
    normalized: np.ndarray
    degenerate: bool


def _split(scores, labels):
    scores = np.asarray(getattr(scores, "scores", scores), dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels must be aligned")
    pos = np.sort(scores[labels == 1])
    neg = np.sort(scores[labels == 0])
    if pos.size == 0 or neg.size == 0:
        raise InfeasibleError("TAR@FAR needs at least one positive and one negative pair")
    return pos, neg


def tar_at_far(scores, labels, far: float):
    """True acceptance rate at a false acceptance budget.

    Thresholds sit on negative scores (impostor quantiles), with three extra
    candidates: the lowest observed score, the lowest score above every
    negative, and +inf. The smallest candidate whose FAR is ``<= far`` is
    used; a pair is accepted when ``score >= tau``. Returns ``(tar, tau)``.
    """
    if not 0.0 <= far <= 1.0:
        raise ShapeError("far must lie in [0, 1]")
    pos, neg = _split(scores, labels)
    tar, tau = _core.tar_at_far_sorted(pos, neg, float(far))
    return float(tar), float(tau)


def pair_uncertainty(u_single, pairs) -> np.ndarray:
    u = np.asarray(u_single, dtype=np.float64)
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise ShapeError("per-image uncertainties must be finite and non-negative")
    pairs.check_range(u.shape[0])
    return np.sqrt(u[pairs.a]) * np.sqrt(u[pairs.b])


def scale_uncertainty(scales) -> np.ndarray:
    """Per-image uncertainty ``1/s``; higher scale means more confident."""
    scales = np.asarray(scales, dtype=np.float64)
    # zero scale (ReLU heads) stays finite: maximally, not infinitely, uncertain
    return 1.0 / np.maximum(scales, np.finfo(np.float64).tiny)


def _rejection_count(r: float, n: int) -> int:
    # tolerance keeps e.g. 0.02 * 10000 from rounding up to 201
    return min(n, math.ceil(r * n - 1e-9))


def _check_grid(grid):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ShapeError("rejection grid must be a non-empty 1-d sequence")
    if np.any(np.diff(grid) < 0):
        raise ShapeError("rejection grid must be sorted")
    if grid[0] < 0 or grid[-1] > 0.5:
        raise ShapeError("rejection rates must lie in [0, 0.5]")
    return grid


def curve_auc(curve, normalization: str = "unit", values=None) -> float:
    """Trapezoidal area under a rejection curve.

    ``unit`` divides by the grid width, i.e. the grid-weighted mean of the
    curve; a single-point curve returns its value.
    """
    if values is None:
        grid, values = curve.grid, curve.tar
    else:
        grid = curve
    grid = np.asarray(grid, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.diff(grid) < 0):
        raise ShapeError("grid must be sorted")
    if normalization not in ("unit", "none"):
        raise ShapeError(f"unknown normalization {normalization!r}")
    raw = float(np.sum(np.diff(grid) * (values[1:] + values[:-1]) * 0.5))
    if normalization == "none":
        return raw
    width = grid[-1] - grid[0]
    return float(values[0]) if width == 0 else float(raw / width)


def reject_verification(scores, labels, uncertainties, far: float, grid=DEFAULT_GRID,
                        normalization: str = "unit") -> RejectionCurve:
    """TAR@FAR after discarding the ``ceil(r*n)`` most uncertain pairs, per grid point.

    Ties in uncertainty are rejected in pair-index order.
    """
    scores = np.asarray(getattr(scores, "scores", scores), dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    provenance = getattr(uncertainties, "provenance", "")
    u = np.asarray(getattr(uncertainties, "values", uncertainties), dtype=np.float64)
    if not (scores.shape == labels.shape == u.shape):
        raise ShapeError("scores, labels and uncertainties must be aligned")
    grid = _check_grid(grid)
    n = scores.size
    order = np.lexsort((np.arange(n), -u))
    tars = np.empty(grid.size)
    for k, r in enumerate(grid):
        keep = order[_rejection_count(float(r), n):]
        try:
            tars[k] = tar_at_far(scores[keep], labels[keep], far)[0]
        except InfeasibleError:
            raise InfeasibleError(
                f"rejection rate {r} leaves no positive or no negative pairs"
            ) from None
    auc_raw = curve_auc(grid, "none", tars)
    auc_norm = auc_raw if normalization == "none" else curve_auc(grid, normalization, tars)
    return RejectionCurve(grid, tars, float(far), auc_raw, auc_norm, normalization, provenance)


def norm_confidence(unit) -> np.ndarray:
    """Pre-normalization embedding norm as a confidence score."""
    return np.asarray(unit.raw_norms, dtype=np.float64).copy()


def random_confidence(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).random(n)


def oracle_uncertainty(scores, labels, far: float) -> np.ndarray:
    """1 for pairs on the wrong side of the no-rejection threshold, else 0."""
    scores = np.asarray(getattr(scores, "scores", scores), dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _, tau = tar_at_far(scores, labels, far)
    wrong = ((labels == 1) & (scores < tau)) | ((labels == 0) & (scores >= tau))
    return wrong.astype(np.float64)


def _pr_points(scores, hits, n_queries, thresholds=None):
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(hits[order])
    if thresholds is None:
        # last index of every group of equal scores
        ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
        thr = s[ends]
        retrieved = ends + 1
        tps = tp[ends]
    else:
        thr = np.sort(np.asarray(thresholds, dtype=np.float64))[::-1]
        retrieved = np.searchsorted(-s, -thr, side="right")
        tps = np.where(retrieved > 0, tp[np.maximum(retrieved - 1, 0)], 0)
        keep = retrieved > 0
        thr, retrieved, tps = thr[keep], retrieved[keep], tps[keep]
    precision = tps / retrieved
    recall = tps / n_queries
    return precision, recall, thr


def pr_auc(precision, recall) -> float:
    """Trapezoid over recall, anchored at (0, first precision)."""
    if precision.size == 0:
        return 0.0
    r = np.r_[0.0, recall]
    p = np.r_[precision[0], precision]
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) * 0.5))


def precision_recall(scores, relevant, thresholds=None, top1: bool = False) -> RetrievalEval:
    """Threshold-swept precision/recall for retrieval with one relevant item per query.

    ``scores`` is [queries, gallery]; ``relevant[q]`` is the gallery index
    relevant to query ``q``. Every (query, item) with ``score >= threshold``
    is retrieved; with ``top1`` only each query's best item can be.
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevant = np.asarray(relevant, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[1] == 0:
        raise ShapeError("retrieval needs a non-empty [queries, gallery] score matrix")
    q = scores.shape[0]
    if relevant.shape != (q,) or relevant.min() < 0 or relevant.max() >= scores.shape[1]:
        raise ShapeError("need one relevant gallery index per query")
    if top1:
        best = np.argmax(scores, axis=1)
        flat = scores[np.arange(q), best]
        hits = (best == relevant).astype(np.int64)
    else:
        flat = scores.reshape(-1)
        hits = np.zeros_like(scores, dtype=np.int64)
        hits[np.arange(q), relevant] = 1
        hits = hits.reshape(-1)
    precision, recall, thr = _pr_points(flat, hits, q, thresholds)
    return RetrievalEval(precision, recall, thr, pr_auc(precision, recall), top1)


def boxcox(x, lam: float = 3.0):
    """``(x**lam - 1) / lam`` for positive ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise ShapeError("Box-Cox needs positive inputs")
    if lam == 0:
        raise ShapeError("lambda must be non-zero")
    return (x**lam - 1.0) / lam


def boxcox_confidence_histogram(scales, lam: float = 3.0, bins: int = 10) -> ConfidenceHistogram:
    """Box-Cox transform, min-max normalize to [0, 1], then equal-width bins."""
    x = np.asarray(scales, dtype=np.float64)
    y = boxcox(x, lam)
    lo, hi = y.min(), y.max()
    edges = np.linspace(0.0, 1.0, bins + 1)
    if hi == lo:
        counts = np.zeros(bins, dtype=np.int64)
        counts[0] = x.size
        return ConfidenceHistogram(counts, edges, np.zeros_like(y), True)
    z = (y - lo) / (hi - lo)
    idx = np.minimum((z * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return ConfidenceHistogram(counts, edges, z, False)


def write_curve(path, curve: RejectionCurve):
    with open(path, "w") as fh:
        fh.write("rejection_rate,tar\n")
        for r, t in zip(np.asarray(curve.grid).tolist(), np.asarray(curve.tar).tolist()):
            fh.write(f"{r!r},{t!r}\n")


def write_summary(path, curve: RejectionCurve):
    with open(path, "w") as fh:
        json.dump(curve.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
