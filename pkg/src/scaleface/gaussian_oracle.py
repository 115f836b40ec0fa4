"""Error probability of a single-class Gaussian model, closed form and by
Monte-Carlo.

Model: ``x = s*w + sigma*eps`` with ``eps ~ N(0, I_d)``; an error is a
normalized cosine ``t = <w, x/||x||>`` below the threshold ``a``. The
closed form linearizes ``t`` and gives ``2 * (1 - Phi(s*(1-a)/sigma))``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import ShapeError

CHUNK = 1 << 16  # samples per seeded substream


@dataclass(frozen=True)
class GaussianModelSpec:
    d: int = 128
    s: float = 10.0
    sigma: float = 1.0
    a: float = 0.9
    w: np.ndarray = None
    seed: int = 0  # only used to draw w when it is not given

    def __post_init__(self):
        if self.d < 2:
            raise ShapeError("dimension must be at least 2")
        if self.s <= 0 or self.sigma < 0:
            raise ShapeError("need s > 0 and sigma >= 0")
        if not -1.0 <= self.a < 1.0:
            raise ShapeError("threshold a must lie in [-1, 1)")
        if self.w is None:
            w = np.random.default_rng(self.seed).standard_normal(self.d)
            w /= np.linalg.norm(w)
        else:
            w = np.asarray(self.w, dtype=np.float64)
            if w.shape != (self.d,):
                raise ShapeError(f"w must have shape ({self.d},)")
            if abs(np.linalg.norm(w) - 1.0) > 1e-12:
                raise ShapeError("w must be a unit vector")
        object.__setattr__(self, "w", w)


def analytic_error_prob(s: float, sigma: float, a: float) -> float:
    """``2 * (1 - Phi(z))`` with ``z = s*(1-a)/sigma``, i.e. ``erfc(z/sqrt 2)``.

    ``sigma == 0`` is the noiseless limit and returns exactly 0.
    """
    if s <= 0 or sigma < 0 or a > 1:
        raise ShapeError("need s > 0, sigma >= 0 and a <= 1")
    if sigma == 0:
        return 0.0
    z = s * (1.0 - a) / sigma
    # erfc avoids the cancellation in 1 - Phi for large z
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def _chunk_errors(spec: GaussianModelSpec, size: int, seed_seq) -> int:
    rng = np.random.default_rng(seed_seq)
    noise = rng.standard_normal((size, spec.d))
    t = _core.cosine_stat(noise, spec.w, float(spec.s), float(spec.sigma))
    return int(np.count_nonzero(t < spec.a))


def simulate_error_prob(spec: GaussianModelSpec, n_samples: int, seed: int, threads: int = 1):
    """Fraction of draws with ``t < a``; returns ``(estimate, standard_error)``.

    Samples come in fixed-size chunks, each from its own spawned substream,
    so the result depends only on ``seed`` and not on ``threads``.
    """
    if n_samples < 1:
        raise ShapeError("n_samples must be positive")
    sizes = [CHUNK] * (n_samples // CHUNK)
    if n_samples % CHUNK:
        sizes.append(n_samples % CHUNK)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, streams))
    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            counts = list(pool.map(lambda job: _chunk_errors(spec, *job), jobs))
    else:
        counts = [_chunk_errors(spec, *job) for job in jobs]
    p = sum(counts) / n_samples
    return p, math.sqrt(p * (1.0 - p) / n_samples)


def error_prob_sweep(s_grid, sigma: float, a: float):
    grid = [float(s) for s in s_grid]
    if any(b < a_ for a_, b in zip(grid, grid[1:])):
        raise ShapeError("scale grid must be sorted ascending")
    return [analytic_error_prob(s, sigma, a) for s in grid]
