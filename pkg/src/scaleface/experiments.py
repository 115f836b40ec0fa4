"""End-to-end scenarios on synthetic heteroscedastic data, plus the
gradient-check suite used by ``scaleface gradcheck``."""

import functools
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .embeddings import SyntheticSpec, generate_synthetic, make_pairs, normalize, unit_rows
from .evaluation import (
    UncertaintyScores, norm_confidence, oracle_uncertainty, pair_uncertainty,
    precision_recall, random_confidence, reject_verification, scale_uncertainty, tar_at_far,
)
from .gradnet import finite_diff_check
from .losses import margin_loss
from .scale_head import ScaleHead, ScaleHeadConfig, TrainConfig, head_forward, head_loss, train_head
from .similarity import calibrate_mu, cosine_pairs, shifted_scaled

# offsets that turn one seed into independent val/test draws
VAL_OFFSET = 1_000_000
TEST_OFFSET = 2_000_000


@dataclass
class ExperimentReport:
    name: str
    seed: int
    metrics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "seed": self.seed, "metrics": self.metrics,
                "config": self.config, "seconds": self.seconds}

    def to_text(self) -> str:
        lines = [f"scenario = {self.name}", f"seed = {self.seed}"]
        lines += [f"{k} = {v!r}" for k, v in sorted(self.metrics.items())]
        lines.append(f"seconds = {self.seconds:.2f}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class HeteroConfig:
    d: int = 32
    num_classes: int = 10
    per_class: int = 200
    sigma: float = 1.0
    s_min: float = 1.0
    s_max: float = 10.0
    activation: str = "sigm_64"
    margin: float = 0.5
    epochs: int = 20
    n_pos: int = 5000
    n_neg: int = 5000


@dataclass
class _Hetero:
    config: HeteroConfig
    unit_test: object
    true_test: np.ndarray
    pred_test: np.ndarray
    pairs: object
    cos: np.ndarray
    mu: float
    train_seconds: float


@functools.lru_cache(maxsize=16)
def _hetero(seed: int, config: HeteroConfig = HeteroConfig()) -> _Hetero:
    """Train a head on one seed's train split and score its test pairs.

    Val and test splits reuse the generator's class directions (closed-set
    identities, fresh samples and scales).
    """
    t0 = time.perf_counter()

    def split(s, centroids=None):
        spec = SyntheticSpec(config.d, config.num_classes, config.per_class, config.s_min,
                             config.s_max, config.sigma, s)
        return generate_synthetic(spec, centroids)

    train, _, W = split(seed)
    val, _, _ = split(seed + VAL_OFFSET, W)
    test, s_test, _ = split(seed + TEST_OFFSET, W)
    u_train, u_val, u_test = normalize(train), normalize(val), normalize(test)

    report = train_head(u_train, train.labels, ScaleHeadConfig.from_name(config.activation),
                        config.margin, TrainConfig(epochs=config.epochs, seed=seed))
    val_pairs = make_pairs(val.labels, config.n_pos, config.n_neg, seed + VAL_OFFSET)
    mu = calibrate_mu(cosine_pairs(u_val, val_pairs), val_pairs.label)
    pairs = make_pairs(test.labels, config.n_pos, config.n_neg, seed + TEST_OFFSET)
    cos = cosine_pairs(u_test, pairs).scores
    pred = head_forward(report.head, u_test)
    return _Hetero(config, u_test, s_test, pred, pairs, cos, float(mu), time.perf_counter() - t0)


def exp_heteroscedastic_verification(seed: int, fars=(0.01, 0.05)) -> ExperimentReport:
    """Rejection AUCs for scale, norm, random and oracle uncertainties."""
    t0 = time.perf_counter()
    h = _hetero(seed)
    y = h.pairs.label
    unc = {
        "scale": UncertaintyScores(pair_uncertainty(scale_uncertainty(h.pred_test), h.pairs), "scale"),
        "norm": UncertaintyScores(
            pair_uncertainty(scale_uncertainty(norm_confidence(h.unit_test)), h.pairs), "norm"),
        "random": UncertaintyScores(random_confidence(len(h.pairs), seed), "random"),
    }
    metrics = {
        "spearman": float(spearmanr(h.pred_test, h.true_test).statistic),
        "mu": h.mu,
    }
    for far in fars:
        metrics[f"tar_r0@{far}"] = tar_at_far(h.cos, y, far)[0]
        curves = dict(unc)
        curves["oracle"] = UncertaintyScores(oracle_uncertainty(h.cos, y, far), "oracle")
        for name, u in curves.items():
            curve = reject_verification(h.cos, y, u, far)
            metrics[f"auc_{name}@{far}"] = curve.auc_normalized
    return ExperimentReport("heteroscedastic", seed, metrics, vars(h.config).copy(),
                            h.train_seconds + time.perf_counter() - t0)


def exp_mu_improvement(seed: int, far: float = 0.05) -> ExperimentReport:
    """TAR@FAR of the shifted scaled similarity against plain cosine."""
    t0 = time.perf_counter()
    h = _hetero(seed)
    y = h.pairs.label
    p = h.pred_test
    sa, sb = p[h.pairs.a], p[h.pairs.b]
    metrics = {
        "mu": h.mu,
        "tar_cosine": tar_at_far(h.cos, y, far)[0],
        "tar_mu_scaled": tar_at_far(shifted_scaled(h.cos, sa, sb, h.mu), y, far)[0],
        "tar_scaled": tar_at_far(shifted_scaled(h.cos, sa, sb, 0.0), y, far)[0],
    }
    metrics["delta"] = metrics["tar_mu_scaled"] - metrics["tar_cosine"]
    return ExperimentReport("mu_improvement", seed, metrics, {"far": far, **vars(h.config)},
                            h.train_seconds + time.perf_counter() - t0)


@dataclass(frozen=True)
class CrossViewConfig:
    d: int = 32
    num_classes: int = 20
    train_per_class: int = 100
    queries_per_class: int = 20
    sigma: float = 1.0
    s_min: float = 1.0
    s_max: float = 10.0
    activation: str = "sigm_64"
    margin: float = 0.5
    epochs: int = 20


def crossview_data(seed: int, config: CrossViewConfig = CrossViewConfig()):
    """Two views sharing class directions, independent per-sample scales.

    Returns ``(train_a, train_b, queries, gallery, true_query_scales,
    true_gallery_scales)``; the gallery holds one view-B item per class,
    so gallery index equals class label.
    """
    streams = np.random.SeedSequence(seed).spawn(5)
    W = unit_rows(np.random.default_rng(streams[0]).standard_normal((config.num_classes, config.d)))

    def draw(per_class, stream):
        spec = SyntheticSpec(config.d, config.num_classes, per_class, config.s_min, config.s_max,
                             config.sigma, int(stream.generate_state(1)[0]))
        emb, scales, _ = generate_synthetic(spec, W)
        return emb, scales

    train_a, _ = draw(config.train_per_class, streams[1])
    train_b, _ = draw(config.train_per_class, streams[2])
    queries, s_q = draw(config.queries_per_class, streams[3])
    gallery, s_g = draw(1, streams[4])
    return train_a, train_b, queries, gallery, s_q, s_g


def exp_crossview_retrieval(seed: int, config: CrossViewConfig = CrossViewConfig()) -> ExperimentReport:
    """Pr-Re AUC and AUC@1 of cosine vs two-head shifted scaled scoring."""
    t0 = time.perf_counter()
    train_a, train_b, queries, gallery, _, _ = crossview_data(seed, config)
    ua, ub, uq, ug = map(normalize, (train_a, train_b, queries, gallery))
    head_cfg = ScaleHeadConfig.from_name(config.activation)
    head_a = train_head(ua, train_a.labels, head_cfg, config.margin,
                        TrainConfig(epochs=config.epochs, seed=seed)).head
    head_b = train_head(ub, train_b.labels, head_cfg, config.margin,
                        TrainConfig(epochs=config.epochs, seed=seed + 1)).head

    # mu: midpoint of same- and different-class cross-view training cosines
    cross = ua.unit_vectors @ ub.unit_vectors.T
    same = train_a.labels[:, None] == train_b.labels[None, :]
    mu = 0.5 * (cross[same].mean() + cross[~same].mean())

    cos = uq.unit_vectors @ ug.unit_vectors.T
    sq, sg = head_forward(head_a, uq), head_forward(head_b, ug)
    mod = np.sqrt(sq)[:, None] * np.sqrt(sg)[None, :] * (cos - mu)
    relevant = queries.labels
    metrics = {"mu": float(mu)}
    for name, scores in (("cosine", cos), ("mu_scaled", mod)):
        metrics[f"prauc_{name}"] = precision_recall(scores, relevant).auc
        metrics[f"prauc1_{name}"] = precision_recall(scores, relevant, top1=True).auc
    metrics["delta"] = metrics["prauc_mu_scaled"] - metrics["prauc_cosine"]
    return ExperimentReport("crossview", seed, metrics, vars(config).copy(),
                            time.perf_counter() - t0)


SCENARIOS = {
    "heteroscedastic": exp_heteroscedastic_verification,
    "mu": exp_mu_improvement,
    "crossview": exp_crossview_retrieval,
}


# --- gradient checks -------------------------------------------------------

GRADCHECK_ACTIVATIONS = ("exp", "sigm_8", "shifted_sigm_2_6", "relu_1")


def _loss_case(rng, n, d, C, margin, kind):
    E = unit_rows(rng.standard_normal((n, d)))
    W = unit_rows(rng.standard_normal((C, d)))
    labels = rng.integers(0, C, size=n)
    if kind == "softmax":
        E = rng.standard_normal((n, d))
        scales, margin = np.ones(n), 0.0
    elif kind == "arcface":
        scales = np.full(n, rng.uniform(1.0, 8.0))
    else:
        scales = rng.uniform(0.5, 8.0, size=n)
    params = [E, W, scales]

    def evaluate(ps):
        res = margin_loss(ps[0], ps[1], labels, ps[2], margin)
        return res.loss, [res.grad_embeddings, res.grad_centroids, res.grad_scales]

    return params, evaluate


def _head_case(rng, n, d, C, margin, activation, depth):
    cfg = ScaleHeadConfig.from_name(activation, n_hidden=depth, width=8)
    head = ScaleHead.init(d, cfg, rng)
    E = unit_rows(rng.standard_normal((n, d)))
    W = unit_rows(rng.standard_normal((C, d)))
    labels = rng.integers(0, C, size=n)
    # zero biases put dead-input units exactly on the ReLU kink
    for layer in head.net.layers:
        layer.bias[:] = rng.uniform(0.1, 0.5, size=layer.bias.shape)
    params = head.net.params()

    def evaluate(ps):
        res, grads = head_loss(head, E, labels, W, margin)
        return res.loss, grads

    return params, evaluate


def gradcheck_suite(n_configs: int = 24, seed: int = 0, tolerance: float = 1e-4, step: float = 1e-4):
    """Seeded loss and head configurations; returns ``[(label, GradCheckReport)]``."""
    rng = np.random.default_rng(seed)
    results = []
    for k in range(n_configs):
        n, d, C = int(rng.integers(2, 7)), int(rng.integers(3, 7)), int(rng.integers(2, 6))
        margin = float(rng.choice([0.0, 0.2, 0.5]))
        if k % 2 == 0:
            kind = ("softmax", "arcface", "scaleface")[(k // 2) % 3]
            params, evaluate = _loss_case(rng, n, d, C, margin, kind)
            label = f"{kind}(n={n},d={d},C={C},m={margin})"
        else:
            act = GRADCHECK_ACTIVATIONS[(k // 2) % len(GRADCHECK_ACTIVATIONS)]
            depth = 1 + (k // 2) % 4
            params, evaluate = _head_case(rng, n, d, C, margin, act, depth)
            label = f"head[{act},depth={depth}](n={n},d={d},C={C},m={margin})"
        results.append((label, finite_diff_check(evaluate, params, tolerance, step)))
    return results
