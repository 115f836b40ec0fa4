"""Brute-force reference implementations used by the tests."""

import math


def tar_far_scan(pos, neg, far):
    """Exhaustive scan of the impostor-quantile threshold rule.

    Candidates: every negative score, the lowest observed score, the lowest
    score above every negative, and +inf. Returns ``(tar, tau)``.
    """
    scores = list(pos) + list(neg)
    above = [s for s in scores if s > max(neg)]
    cands = set(neg) | {min(scores), math.inf}
    if above:
        cands.add(min(above))
    best = None
    for t in sorted(cands):
        fa = sum(1 for s in neg if s >= t) / len(neg)
        if fa <= far:
            best = t
            break
    tar = sum(1 for s in pos if s >= best) / len(pos)
    return tar, best


def pr_bruteforce(scores, relevant, top1=False):
    """Precision/recall at every distinct threshold, highest first, and the AUC."""
    q, g = len(scores), len(scores[0])
    items = []
    for i in range(q):
        if top1:
            j = max(range(g), key=lambda k: (scores[i][k], -k))
            items.append((scores[i][j], j == relevant[i]))
        else:
            items.extend((scores[i][j], j == relevant[i]) for j in range(g))
    precision, recall = [], []
    for t in sorted({s for s, _ in items}, reverse=True):
        got = [hit for s, hit in items if s >= t]
        tp = sum(got)
        precision.append(tp / len(got))
        recall.append(tp / q)
    auc = 0.0
    prev_r, prev_p = 0.0, precision[0]
    for p, r in zip(precision, recall):
        auc += (r - prev_r) * (p + prev_p) / 2
        prev_r, prev_p = r, p
    return precision, recall, auc


def exact_error_prob(d, s, sigma, a):
    """P(<w, x/|x|> < a) for x = s*w + sigma*eps, by 1-d quadrature.

    With u = s + sigma*z along w and q ~ chi2(d-1) for the orthogonal part,
    t < a  <=>  u < a*sqrt(u^2 + sigma^2 q).
    """
    from scipy import integrate, stats

    chi = stats.chi2(d - 1)
    k = (1.0 - a * a) / (a * a * sigma * sigma) if a != 0 else None

    def integrand(z):
        u = s + sigma * z
        if a == 0:
            p = float(u < 0)
        elif a > 0:
            p = 1.0 if u < 0 else chi.sf(u * u * k)
        else:
            p = 0.0 if u >= 0 else chi.cdf(u * u * k)
        return stats.norm.pdf(z) * p

    zero = -s / sigma  # integrand kink where u changes sign
    lo, hi = min(zero, -12.0), max(zero, 12.0)
    parts = [integrate.quad(integrand, lo, zero, limit=200, epsabs=1e-14)[0],
             integrate.quad(integrand, zero, hi, limit=200, epsabs=1e-14)[0]]
    return min(1.0, max(0.0, sum(parts)))
