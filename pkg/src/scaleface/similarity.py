"""Pair and template similarities, with optional scale weighting and a
class-separating shift ``mu``."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import NORM_FLOOR, PairSet
from .errors import DegenerateInputError, FormatError, InfeasibleError, NumericError, ShapeError

MODES = ("cosine", "scaled", "mu_scaled")


@dataclass(frozen=True)
class SimilarityConfig:
    mode: str = "cosine"
    mu: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ShapeError(f"unknown similarity mode {self.mode!r}")

    @property
    def shift(self) -> float:
        return self.mu if self.mode == "mu_scaled" else 0.0


@dataclass
class PairScores:
    scores: np.ndarray
    config: SimilarityConfig = field(default_factory=SimilarityConfig)

    def __len__(self):
        return self.scores.shape[0]


@dataclass
class TemplateSet:
    templates: np.ndarray  # [k, d] fused unit vectors
    counts: np.ndarray
    identities: np.ndarray


def _unit_array(unit):
    return np.asarray(getattr(unit, "unit_vectors", unit), dtype=np.float64)


def cosine_pairs(unit, pairs: PairSet) -> PairScores:
    E = _unit_array(unit)
    pairs.check_range(E.shape[0])
    scores = np.einsum("ij,ij->i", E[pairs.a], E[pairs.b])
    return PairScores(scores, SimilarityConfig("cosine"))


def _check_scales(*arrays):
    for s in arrays:
        s = np.asarray(s, dtype=np.float64)
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise NumericError("scales must be finite and positive")


def pair_scale(s1, s2):
    """Geometric mean of the two scales (elementwise)."""
    _check_scales(s1, s2)
    return np.sqrt(np.asarray(s1, dtype=np.float64) * np.asarray(s2, dtype=np.float64))


def modified_similarity(unit, pairs: PairSet, scales_a, scales_b, mu: float) -> PairScores:
    """``sqrt(s_a * s_b) * (cos - mu)`` for every pair.

    ``scales_a``/``scales_b`` are per-pair; they may come from two different
    heads (e.g. one per modality).
    """
    cos = cosine_pairs(unit, pairs).scores
    scales_a = np.asarray(scales_a, dtype=np.float64)
    scales_b = np.asarray(scales_b, dtype=np.float64)
    if scales_a.shape != cos.shape or scales_b.shape != cos.shape:
        raise ShapeError("need one scale per pair on each side")
    mode = "mu_scaled" if mu != 0 else "scaled"
    return PairScores(pair_scale(scales_a, scales_b) * (cos - mu), SimilarityConfig(mode, mu))


def shifted_scaled(cos, scales_a, scales_b, mu):
    """Array form of the modified similarity for precomputed cosines."""
    return pair_scale(scales_a, scales_b) * (np.asarray(cos, dtype=np.float64) - mu)


def template_similarity(query, scale: float, template, mu: float = 0.0) -> float:
    query = np.asarray(query, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    for v, what in ((query, "query"), (template, "template")):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ShapeError(f"{what} must be a unit vector")
    _check_scales(scale)
    return float(scale * (query @ template - mu))


def fuse_template(members) -> np.ndarray:
    """Normalized mean of the member unit vectors."""
    members = np.atleast_2d(np.asarray(members, dtype=np.float64))
    if members.shape[0] < 1:
        raise ShapeError("a template needs at least one member")
    mean = members.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < NORM_FLOOR:
        raise DegenerateInputError("template members cancel out (zero mean)")
    return mean / norm


def build_templates(unit, labels) -> TemplateSet:
    E = _unit_array(unit)
    labels = np.asarray(labels, dtype=np.int64)
    ids, counts = np.unique(labels, return_counts=True)
    fused = np.stack([fuse_template(E[labels == k]) for k in ids])
    return TemplateSet(fused, counts, ids)


def calibrate_mu(scores, labels) -> float:
    """Midpoint of the mean positive and mean negative cosine."""
    scores = np.asarray(getattr(scores, "scores", scores), dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos, neg = scores[labels == 1], scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise InfeasibleError("calibration needs at least one positive and one negative pair")
    return 0.5 * (pos.mean() + neg.mean())


def write_scores(path, pairs: PairSet, scores: PairScores):
    with open(path, "w") as fh:
        fh.write("index_a,index_b,label,score\n")
        rows = zip(pairs.a.tolist(), pairs.b.tolist(), pairs.label.tolist(),
                   np.asarray(scores.scores).tolist())
        for a, b, y, s in rows:
            fh.write(f"{a},{b},{y},{s!r}\n")


def read_scores(path):
    """Returns ``(PairSet, scores array)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "index_a,index_b,label,score":
        raise FormatError(f"{path}: missing scores header")
    a, b, y, s = [], [], [], []
    for lineno, line in enumerate(lines[1:], 2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 fields")
        try:
            a.append(int(parts[0]))
            b.append(int(parts[1]))
            y.append(int(parts[2]))
            s.append(float(parts[3]))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: malformed field") from None
    scores = np.array(s, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise FormatError(f"{path}: non-finite score")
    return PairSet(a, b, y), scores
