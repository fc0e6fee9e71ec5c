"""Decision rules and derived probabilities for augmented PU prediction.

Scalar functions validate their inputs and raise :class:`DomainError`;
the ``*_batch`` variants work on arrays of plug-in estimates, where
``s_hat > y_hat`` can occur and is clamped (the decision is unaffected:
``y > (1 + s) / 2`` is impossible once ``s >= y``).
"""
import math

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError


def _check_unit(name, v):
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {v}")


def tilde_y(y, s):
    """Posterior of ``Y=1`` on the unlabeled stratum, ``(y - s) / (1 - s)``."""
    _check_unit("y", y)
    _check_unit("s", s)
    if s > y:
        raise DomainError(f"requires s <= y, got s={s} > y={y}")
    if s >= 1.0:
        raise DomainError("requires s < 1 (the unlabeled stratum is empty at s = 1)")
    return min(1.0, max(0.0, (y - s) / (1.0 - s)))


def decide_db(y):
    """Feature-only Bayes rule: 1 iff ``y > 1/2``."""
    _check_unit("y", y)
    return 1 if y > 0.5 else 0


def decide_db_pu(y, s_prob, s_label):
    """Augmented Bayes rule.

    Labeled records are positive; an unlabeled record is positive iff
    ``y > (1 + s_prob) / 2``.
    """
    if s_label == 1:
        return 1
    if s_label != 0:
        raise DomainError(f"s_label must be 0 or 1, got {s_label}")
    tilde_y(y, s_prob)  # validates 0 <= s <= y, s < 1
    return 1 if y > (1.0 + s_prob) / 2.0 else 0


def scar_threshold(c):
    """Threshold on ``y`` equivalent to the augmented rule when ``e(x) = c``."""
    _check_unit("c", c)
    return 1.0 / (2.0 - c)


def generalized_threshold(phi_inv_at_1, s_prob):
    """Unlabeled-stratum threshold on ``y`` for a strictly proper composite loss.

    ``phi_inv_at_1`` is the inverse link evaluated at 1; the logistic loss has
    ``phi_inv_at_1 = 1``, which gives ``(1 + s) / 2``.
    """
    if not phi_inv_at_1 > 0:
        raise DomainError(f"phi_inv_at_1 must be positive, got {phi_inv_at_1}")
    _check_unit("s_prob", s_prob)
    return (phi_inv_at_1 + s_prob) / (1.0 + phi_inv_at_1)


def odds_ratio(e):
    """Odds of ``Y=1`` among unlabeled over odds in the population: ``1 - e``."""
    _check_unit("e", e)
    return 1.0 - e


def odds_ratio_from(y, s):
    """Same odds ratio computed from the posteriors, ``(y - s) / y``."""
    if y == 0:
        raise DomainError("odds ratio undefined at y = 0")
    _check_unit("y", y)
    _check_unit("s", s)
    return (y - s) / y


def likely_positive_score(y, s):
    """Score ``(y - s) / (1 - y)``; exceeds 1 exactly when the augmented rule says positive.

    ``y = 1`` maps to ``math.inf`` so sure positives rank first.
    """
    _check_unit("y", y)
    _check_unit("s", s)
    if s > y:
        raise DomainError(f"requires s <= y, got s={s} > y={y}")
    if y == 1.0:
        return math.inf
    return (y - s) / (1.0 - y)


def rank_top_k(pairs, k):
    """Ids of the ``k`` highest-scoring ``(id, y, s)`` triples; ties by ascending id."""
    pairs = list(pairs)
    if k < 0 or k > len(pairs):
        raise DomainError(f"k must lie in [0, {len(pairs)}], got {k}")
    scored = [(-likely_positive_score(y, s), i) for i, y, s in pairs]
    scored.sort()
    return [i for _, i in scored[:k]]


def example2_tilde_y(alpha, beta, x):
    """Unlabeled-stratum posterior when ``y = sigmoid(alpha x)`` and ``e = sigmoid(beta x)``."""
    return float(math.exp(-logsumexp([0.0, -(alpha - beta) * x, -alpha * x])))


# ---------------------------------------------------------------------------
# vectorised forms for plug-in estimates


def decide_db_batch(y_hat):
    return (np.asarray(y_hat) > 0.5).astype(np.int8)


def decide_db_pu_batch(y_hat, s_hat, s_label):
    y_hat = np.asarray(y_hat, dtype=float)
    s_hat = np.minimum(np.clip(np.asarray(s_hat, dtype=float), 0.0, 1.0), y_hat)
    s_label = np.asarray(s_label)
    unlabeled_pos = y_hat > (1.0 + s_hat) / 2.0
    return np.where(s_label == 1, 1, unlabeled_pos).astype(np.int8)


def decide_naive_batch(y_hat, s_label):
    """Labeled records positive, feature-only rule elsewhere."""
    return np.where(np.asarray(s_label) == 1, 1, decide_db_batch(y_hat)).astype(np.int8)


def likely_positive_scores(y_hat, s_hat):
    y_hat = np.asarray(y_hat, dtype=float)
    s_hat = np.minimum(np.asarray(s_hat, dtype=float), y_hat)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (y_hat - s_hat) / (1.0 - y_hat)
    return np.where(y_hat >= 1.0, np.inf, score)
