"""Pure-Python (numpy) versions of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and semantics. ``scaleface._core`` picks one implementation at import time.
"""

import numpy as np


def margin_softmax(cos, labels, scales, cos_m, sin_m, eps, use_margin):
    """Per-sample margin softmax cross-entropy with gradients.

    Returns ``(losses, dcos, dscale, probs)`` where ``dcos`` and ``dscale``
    are derivatives of the *per-sample* loss (no batch averaging).
    """
    n, C = cos.shape
    rows = np.arange(n)
    base = cos.copy()
    ct = cos[rows, labels]
    if use_margin:
        c = np.clip(ct, -1.0 + eps, 1.0 - eps)
        sin_t = np.sqrt(1.0 - c * c)
        base[rows, labels] = c * cos_m - sin_t * sin_m
        inside = (ct > -1.0 + eps) & (ct < 1.0 - eps)
        dphi = np.where(inside, cos_m + c / sin_t * sin_m, 0.0)
    else:
        dphi = np.ones(n)

    z = scales[:, None] * base
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    tot = ez.sum(axis=1, keepdims=True)
    probs = ez / tot
    lse = zmax[:, 0] + np.log(tot[:, 0])
    losses = lse - z[rows, labels]

    dz = probs.copy()
    dz[rows, labels] -= 1.0
    dscale = (dz * base).sum(axis=1)
    dcos = dz * scales[:, None]
    dcos[rows, labels] *= dphi
    return losses, dcos, dscale, probs


def tar_at_far_sorted(pos, neg, far):
    """Threshold selection on ascending-sorted positive/negative scores.

    Candidates are the negative scores, the lowest observed score, the
    lowest score above every negative, and +inf. The smallest candidate
    whose false-acceptance fraction is ``<= far`` wins; acceptance is
    ``score >= tau``.
    """
    P = pos.shape[0]
    N = neg.shape[0]
    if 1.0 <= far:
        tau = min(pos[0], neg[0])
    else:
        first = np.searchsorted(neg, neg, side="left")
        ok = (N - first) / N <= far
        idx = np.flatnonzero(ok)
        if idx.size:
            tau = neg[idx[0]]
        else:
            j = np.searchsorted(pos, neg[N - 1], side="right")
            tau = pos[j] if j < P else np.inf
    accepted = P - np.searchsorted(pos, tau, side="left")
    return accepted / P, float(tau)


def cosine_stat(noise, w, s, sigma):
    """t_i = <w, x_i> / ||x_i|| for x_i = s*w + sigma*noise_i (in place on noise)."""
    noise *= sigma
    noise += s * w
    proj = noise @ w
    norms = np.sqrt(np.einsum("ij,ij->i", noise, noise))
    return proj / norms
