"""Per-sample scale prediction as an uncertainty signal for embedding models.

Losses (softmax, ArcFace, ScaleFace), a small numpy MLP trained as a scale
head, scale-aware similarities, reject-verification and retrieval metrics,
and a Gaussian error-probability model.
"""

__version__ = "0.1.0"

from ._core import BACKEND
from .embeddings import (
    CentroidMatrix, EmbeddingSet, PairSet, SyntheticSpec, UnitEmbeddings, generate_synthetic,
    init_centroids, make_pairs, normalize, read_embeddings, read_pairs, write_embeddings,
    write_pairs,
)
from .errors import (
    DegenerateInputError, FormatError, InfeasibleError, NumericError, ScaleFaceError, ShapeError,
)
from .evaluation import (
    RejectionCurve, UncertaintyScores, curve_auc, precision_recall, reject_verification,
    tar_at_far,
)
from .gaussian_oracle import GaussianModelSpec, analytic_error_prob, simulate_error_prob
from .losses import LossConfig, LossResult, arcface_loss, scaleface_loss, softmax_loss
from .scale_head import ScaleHead, ScaleHeadConfig, TrainConfig, predict_scales, train_head
from .similarity import calibrate_mu, cosine_pairs, modified_similarity

__all__ = [
    "__version__",
    "BACKEND",
    "CentroidMatrix",
    "EmbeddingSet",
    "PairSet",
    "SyntheticSpec",
    "UnitEmbeddings",
    "generate_synthetic",
    "init_centroids",
    "make_pairs",
    "normalize",
    "read_embeddings",
    "read_pairs",
    "write_embeddings",
    "write_pairs",
    "DegenerateInputError",
    "FormatError",
    "InfeasibleError",
    "NumericError",
    "ScaleFaceError",
    "ShapeError",
    "RejectionCurve",
    "UncertaintyScores",
    "curve_auc",
    "precision_recall",
    "reject_verification",
    "tar_at_far",
    "GaussianModelSpec",
    "analytic_error_prob",
    "simulate_error_prob",
    "LossConfig",
    "LossResult",
    "arcface_loss",
    "scaleface_loss",
    "softmax_loss",
    "ScaleHead",
    "ScaleHeadConfig",
    "TrainConfig",
    "predict_scales",
    "train_head",
    "calibrate_mu",
    "cosine_pairs",
    "modified_similarity",
]
