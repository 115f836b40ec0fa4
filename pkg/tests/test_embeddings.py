import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scaleface.embeddings import (
    EmbeddingSet, PairSet, SyntheticSpec, UnitEmbeddings, generate_synthetic, init_centroids,
    make_pairs, normalize, read_embeddings, read_pairs, write_embeddings, write_pairs,
)
from scaleface.errors import DegenerateInputError, FormatError, InfeasibleError, ShapeError


def test_normalize_345():
    u = normalize(EmbeddingSet([[3.0, 4.0]], [0], 1))
    np.testing.assert_allclose(u.unit_vectors, [[0.6, 0.8]])
    assert u.raw_norms[0] == 5.0


def test_normalize_idempotent_on_unit_rows():
    u = normalize(EmbeddingSet([[1.0, 0.0], [0.0, -1.0]], [0, 0], 1))
    np.testing.assert_array_equal(u.unit_vectors, [[1.0, 0.0], [0.0, -1.0]])
    np.testing.assert_array_equal(u.raw_norms, [1.0, 1.0])


def test_normalize_zero_row_names_index():
    with pytest.raises(DegenerateInputError, match="row 1"):
        normalize(EmbeddingSet([[1.0, 0.0], [0.0, 0.0]], [0, 0], 1))


def test_embedding_set_validation():
    with pytest.raises(FormatError):
        EmbeddingSet([[1.0, 0.0]], [3], 2)
    with pytest.raises(FormatError):
        EmbeddingSet([[np.inf, 0.0]], [0], 1)
    with pytest.raises(ShapeError):
        EmbeddingSet([[1.0, 0.0]], [0, 0], 1)


def test_centroid_of_single_sample():
    u = normalize(EmbeddingSet([[3.0, 4.0], [0.0, 2.0]], [0, 1], 2))
    np.testing.assert_allclose(init_centroids(u).centroids, u.unit_vectors)


def test_centroid_antipodal_pair_fails():
    u = normalize(EmbeddingSet([[1.0, 0.0], [-1.0, 0.0]], [0, 0], 1))
    with pytest.raises(DegenerateInputError):
        init_centroids(u)


def test_centroid_empty_class():
    u = normalize(EmbeddingSet([[1.0, 0.0]], [0], 2))
    with pytest.raises(DegenerateInputError, match="class 1"):
        init_centroids(u)


def test_noiseless_generator_recovers_directions():
    emb, scales, W = generate_synthetic(SyntheticSpec(d=8, num_classes=4, per_class=5, sigma=0.0, seed=3))
    u = normalize(emb)
    np.testing.assert_allclose(u.unit_vectors, W[emb.labels], atol=1e-15)
    np.testing.assert_allclose(init_centroids(u).centroids, W, atol=1e-9)
    assert np.all((scales >= 1.0) & (scales <= 10.0))


def test_generator_deterministic_and_shared_centroids():
    spec = SyntheticSpec(d=6, num_classes=3, per_class=4, seed=11)
    a, sa, Wa = generate_synthetic(spec)
    b, sb, Wb = generate_synthetic(spec)
    np.testing.assert_array_equal(a.vectors, b.vectors)
    np.testing.assert_array_equal(sa, sb)
    c, _, Wc = generate_synthetic(SyntheticSpec(d=6, num_classes=3, per_class=4, seed=12), Wa)
    np.testing.assert_array_equal(Wc, Wa)
    assert not np.array_equal(c.vectors, a.vectors)
    assert a.labels.tolist() == [0] * 4 + [1] * 4 + [2] * 4


def test_synthetic_spec_validation():
    with pytest.raises(ShapeError):
        SyntheticSpec(s_min=0.0)
    with pytest.raises(ShapeError):
        SyntheticSpec(s_min=5.0, s_max=1.0)
    with pytest.raises(ShapeError):
        SyntheticSpec(sigma=-1.0)


def test_pairs_forced_single_positive():
    p = make_pairs([0, 0], 1, 0, seed=0)
    assert (p.a.tolist(), p.b.tolist(), p.label.tolist()) == ([0], [1], [1])


def test_pairs_infeasible():
    with pytest.raises(InfeasibleError):
        make_pairs([0, 0, 0], 0, 1, seed=0)
    with pytest.raises(InfeasibleError):
        make_pairs([0, 1, 2], 1, 0, seed=0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=30), st.integers(0, 1000), st.data())
def test_pairs_properties(labels, seed, data):
    labels = np.array(labels)
    _, counts = np.unique(labels, return_counts=True)
    total_pos = int(sum(c * (c - 1) // 2 for c in counts))
    total_neg = labels.size * (labels.size - 1) // 2 - total_pos
    n_pos = data.draw(st.integers(0, total_pos))
    n_neg = data.draw(st.integers(0, total_neg))
    p = make_pairs(labels, n_pos, n_neg, seed)
    assert len(p) == n_pos + n_neg
    assert np.all(p.a < p.b)
    assert len(set(zip(p.a.tolist(), p.b.tolist()))) == len(p)
    np.testing.assert_array_equal(p.label, (labels[p.a] == labels[p.b]).astype(int))
    q = make_pairs(labels, n_pos, n_neg, seed)
    np.testing.assert_array_equal(p.a, q.a)


def test_pairset_validation():
    with pytest.raises(FormatError):
        PairSet([0], [0], [0])
    with pytest.raises(FormatError):
        PairSet([0], [1], [2])
    with pytest.raises(ShapeError):
        PairSet([0], [1, 2], [0])
    with pytest.raises(ShapeError):
        PairSet([0], [5], [0]).check_range(3)


def test_embedding_round_trip(tmp_path, rng):
    emb = EmbeddingSet(rng.normal(size=(7, 5)).astype(np.float32), rng.integers(0, 3, 7), 3)
    path = tmp_path / "x.emb"
    write_embeddings(path, emb)
    back = read_embeddings(path)
    np.testing.assert_array_equal(back.vectors, emb.vectors)
    np.testing.assert_array_equal(back.labels, emb.labels)
    assert back.num_classes == 3
    write_embeddings(tmp_path / "y.emb", back)
    assert (tmp_path / "y.emb").read_bytes() == path.read_bytes()


def test_hand_built_file(tmp_path):
    raw = b"EMB1" + struct.pack("<IIQ", 2, 2, 2)
    raw += struct.pack("<I2f", 1, 0.5, -2.0) + struct.pack("<I2f", 0, 3.0, 4.0)
    path = tmp_path / "hand.emb"
    path.write_bytes(raw)
    emb = read_embeddings(path)
    assert emb.labels.tolist() == [1, 0]
    assert emb.vectors.tolist() == [[0.5, -2.0], [3.0, 4.0]]


@pytest.mark.parametrize("mutate, match", [
    (lambda b: b"EMB2" + b[4:], "magic"),
    (lambda b: b[:-1], "bytes"),
    (lambda b: b[:10], "truncated"),
    (lambda b: b[:20] + struct.pack("<I", 9) + b[24:], "label"),
    (lambda b: b[:24] + struct.pack("<f", float("nan")) + b[28:], "non-finite"),
])
def test_corrupt_files(tmp_path, mutate, match):
    path = tmp_path / "x.emb"
    write_embeddings(path, EmbeddingSet([[1.0, 2.0], [3.0, 4.0]], [0, 1], 2))
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(FormatError, match=match):
        read_embeddings(path)


def test_pairs_file_round_trip(tmp_path):
    p = make_pairs([0, 0, 1, 1, 1], 3, 4, seed=2)
    write_pairs(tmp_path / "p.csv", p)
    q = read_pairs(tmp_path / "p.csv")
    for name in ("a", "b", "label"):
        np.testing.assert_array_equal(getattr(p, name), getattr(q, name))


def test_pairs_file_errors(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("0,1\n")
    with pytest.raises(FormatError, match=":1:"):
        read_pairs(path)
    path.write_text("# c\n0,x,1\n")
    with pytest.raises(FormatError, match=":2:"):
        read_pairs(path)


def test_unit_embeddings_props():
    u = UnitEmbeddings(np.eye(3), np.ones(3), np.arange(3), 3)
    assert (u.n, u.d) == (3, 3)
