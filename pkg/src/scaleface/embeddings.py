"""Embedding containers, binary/text file formats, pair sampling and the
synthetic heteroscedastic generator (x = s * w_y + noise)."""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, FormatError, InfeasibleError, ShapeError

EMB_MAGIC = b"EMB1"
_EMB_HEADER = struct.Struct("<4sIIQ")
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class EmbeddingSet:
    """Raw (pre-normalization) vectors [n, d] with integer labels in [0, C)."""

    vectors: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 2:
            raise ShapeError(f"vectors must be [n>=1, d>=2], got {vectors.shape}")
        if labels.shape != (vectors.shape[0],):
            raise ShapeError("labels must have one entry per vector")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise FormatError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(vectors)):
            raise FormatError("non-finite embedding component")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def subset(self, idx) -> "EmbeddingSet":
        return EmbeddingSet(self.vectors[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True)
class UnitEmbeddings:
    unit_vectors: np.ndarray
    raw_norms: np.ndarray
    labels: np.ndarray
    num_classes: int

    @property
    def n(self) -> int:
        return self.unit_vectors.shape[0]

    @property
    def d(self) -> int:
        return self.unit_vectors.shape[1]


@dataclass
class CentroidMatrix:
    centroids: np.ndarray  # [C, d], unit rows
    frozen: bool = False

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        norms = np.linalg.norm(self.centroids, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-9):
            raise ShapeError("centroid rows must have unit norm")

    def renormalize(self):
        self.centroids /= np.linalg.norm(self.centroids, axis=1, keepdims=True)


@dataclass(frozen=True)
class PairSet:
    """Verification pairs; ``label`` 1 means same identity."""

    a: np.ndarray
    b: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.int64)
        b = np.asarray(self.b, dtype=np.int64)
        label = np.asarray(self.label, dtype=np.int64)
        if not (a.shape == b.shape == label.shape) or a.ndim != 1:
            raise ShapeError("pair columns must be aligned 1-d arrays")
        if np.any((label != 0) & (label != 1)):
            raise FormatError("pair labels must be 0 or 1")
        if np.any((a == b) & (label == 0)):
            raise FormatError("a sample cannot form a negative pair with itself")
        if a.size and (a.min() < 0 or b.min() < 0):
            raise FormatError("negative pair index")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "label", label)

    def __len__(self):
        return self.a.shape[0]

    def check_range(self, n: int):
        if len(self) and max(self.a.max(), self.b.max()) >= n:
            raise ShapeError(f"pair index out of range for {n} samples")


@dataclass(frozen=True)
class SyntheticSpec:
    d: int = 32
    num_classes: int = 10
    per_class: int = 200
    s_min: float = 1.0
    s_max: float = 10.0
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 2 or self.num_classes < 1 or self.per_class < 1:
            raise ShapeError("need d >= 2, at least one class and one sample per class")
        if not (0 < self.s_min <= self.s_max):
            raise ShapeError("need 0 < s_min <= s_max")
        if self.sigma < 0:
            raise ShapeError("sigma must be non-negative")


def normalize(emb: EmbeddingSet) -> UnitEmbeddings:
    norms = np.linalg.norm(emb.vectors, axis=1)
    bad = np.flatnonzero(norms <= NORM_FLOOR)
    if bad.size:
        raise DegenerateInputError(f"row {bad[0]} has near-zero norm")
    return UnitEmbeddings(emb.vectors / norms[:, None], norms, emb.labels, emb.num_classes)


def unit_rows(x):
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms <= NORM_FLOOR):
        raise DegenerateInputError("cannot normalize a near-zero vector")
    return x / norms


def init_centroids(unit: UnitEmbeddings) -> CentroidMatrix:
    """Class means of the unit embeddings, renormalized."""
    C = unit.num_classes
    counts = np.bincount(unit.labels, minlength=C)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DegenerateInputError(f"class {empty[0]} has no samples")
    sums = np.zeros((C, unit.d))
    np.add.at(sums, unit.labels, unit.unit_vectors)
    means = sums / counts[:, None]
    norms = np.linalg.norm(means, axis=1)
    zero = np.flatnonzero(norms <= NORM_FLOOR)
    if zero.size:
        raise DegenerateInputError(f"class {zero[0]} has a zero mean direction")
    return CentroidMatrix(means / norms[:, None])


def generate_synthetic(spec: SyntheticSpec, centroids=None):
    """Draw ``x_i = s_i * w_{y_i} + sigma * eps_i`` with s_i ~ U[s_min, s_max].

    Returns ``(EmbeddingSet, true_scales, generator_centroids)``. Labels are
    class-major (``per_class`` consecutive rows per class). Pass
    ``centroids`` to draw a further split around the same class directions.
    """
    rng = np.random.default_rng(spec.seed)
    C, d = spec.num_classes, spec.d
    if centroids is None:
        centroids = unit_rows(rng.standard_normal((C, d)))
    else:
        centroids = np.asarray(centroids, dtype=np.float64)
        if centroids.shape != (C, d):
            raise ShapeError(f"centroids must be [{C}, {d}]")
    labels = np.repeat(np.arange(C), spec.per_class)
    n = labels.size
    scales = rng.uniform(spec.s_min, spec.s_max, size=n)
    noise = rng.standard_normal((n, d))
    x = scales[:, None] * centroids[labels] + spec.sigma * noise
    return EmbeddingSet(x, labels, C), scales, centroids


def _n_choose_2(k):
    return k * (k - 1) // 2


def make_pairs(labels, n_pos: int, n_neg: int, seed: int) -> PairSet:
    """Sample distinct same-class and different-class index pairs.

    Output order is shuffled; each pair is stored with ``a < b``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    total_pos = int(sum(_n_choose_2(int(c)) for c in counts))
    total_neg = _n_choose_2(n) - total_pos
    if n_pos > total_pos:
        raise InfeasibleError(f"asked for {n_pos} positive pairs, only {total_pos} exist")
    if n_neg > total_neg:
        raise InfeasibleError(f"asked for {n_neg} negative pairs, only {total_neg} exist")

    members = {c: np.flatnonzero(labels == c) for c in classes}
    pos = set()
    if n_pos:
        if 2 * n_pos > total_pos:
            every = [
                (int(m[i]), int(m[j]))
                for c in classes
                for m in (members[c],)
                for i in range(m.size)
                for j in range(i + 1, m.size)
            ]
            pick = rng.choice(len(every), size=n_pos, replace=False)
            pos = [every[k] for k in sorted(pick)]
        else:
            weights = np.array([_n_choose_2(int(c)) for c in counts], dtype=np.float64)
            weights /= weights.sum()
            while len(pos) < n_pos:
                c = classes[rng.choice(classes.size, p=weights)]
                i, j = rng.choice(members[c], size=2, replace=False)
                pos.add((int(min(i, j)), int(max(i, j))))
            pos = sorted(pos)

    neg = set()
    if n_neg:
        if 2 * n_neg > total_neg:
            every = [
                (i, j)
                for i in range(n)
                for j in range(i + 1, n)
                if labels[i] != labels[j]
            ]
            pick = rng.choice(len(every), size=n_neg, replace=False)
            neg = [every[k] for k in sorted(pick)]
        else:
            while len(neg) < n_neg:
                i, j = rng.integers(0, n, size=2)
                if labels[i] != labels[j]:
                    neg.add((int(min(i, j)), int(max(i, j))))
            neg = sorted(neg)

    rows = [(i, j, 1) for i, j in pos] + [(i, j, 0) for i, j in neg]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    arr = arr[rng.permutation(arr.shape[0])]
    return PairSet(arr[:, 0], arr[:, 1], arr[:, 2])


def write_embeddings(path, emb: EmbeddingSet):
    rec = np.dtype([("label", "<u4"), ("vec", "<f4", (emb.d,))])
    data = np.empty(emb.n, dtype=rec)
    data["label"] = emb.labels
    data["vec"] = emb.vectors.astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(_EMB_HEADER.pack(EMB_MAGIC, emb.d, emb.num_classes, emb.n))
        fh.write(data.tobytes())


def read_embeddings(path) -> EmbeddingSet:
    raw = Path(path).read_bytes()
    if len(raw) < _EMB_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, d, C, n = _EMB_HEADER.unpack_from(raw)
    if magic != EMB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    rec = np.dtype([("label", "<u4"), ("vec", "<f4", (d,))])
    expected = _EMB_HEADER.size + n * rec.itemsize
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype=rec, offset=_EMB_HEADER.size, count=n)
    labels = data["label"].astype(np.int64)
    if n and labels.max() >= C:
        raise FormatError(f"{path}: label {labels.max()} >= class count {C}")
    vectors = data["vec"].astype(np.float64)
    if not np.all(np.isfinite(vectors)):
        raise FormatError(f"{path}: non-finite component")
    return EmbeddingSet(vectors, labels, C)


def write_pairs(path, pairs: PairSet):
    with open(path, "w") as fh:
        fh.write("# index_a,index_b,label\n")
        for a, b, y in zip(pairs.a.tolist(), pairs.b.tolist(), pairs.label.tolist()):
            fh.write(f"{a},{b},{y}\n")


def read_pairs(path) -> PairSet:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 fields")
        try:
            rows.append(tuple(int(p) for p in parts))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer field") from None
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return PairSet(arr[:, 0], arr[:, 1], arr[:, 2])
