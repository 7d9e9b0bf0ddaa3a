import numpy as np
from scipy import stats
from scipy.special import xlogy


def heuristic_h(alpha, beta):
    """
    Two-state KL divergence between Bernoulli(alpha) and Bernoulli(beta), natural log.

    Used as the greedy selection score: alpha is the probability of a pattern under the current model and beta
    its empirical frequency.

    Args:
        alpha (float or np.ndarray): strictly inside (0, 1)
        beta (float or np.ndarray): strictly inside (0, 1)

    Raises:
        ValueError: any input on or outside the boundary

    Returns:
        float or np.ndarray: h(alpha, beta) >= 0, zero iff alpha == beta
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    for name, x in (('alpha', alpha), ('beta', beta)):
        if np.any((x <= 0) | (x >= 1) | np.isnan(x)):
            raise ValueError(f'{name} must be strictly inside (0, 1), got {x}')
    return _as_scalar(two_state_kl(alpha, beta))


def two_state_kl(alpha, beta):
    # no domain check; alpha may touch 0 or 1 (xlogy handles 0 log 0)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    kl = xlogy(alpha, alpha / beta) + xlogy(1. - alpha, (1. - alpha) / (1. - beta))
    return np.maximum(kl, 0.)  # rounding can give -1e-17


def entropy(p: np.ndarray) -> float:
    # Shannon entropy in nats of an enumerated distribution
    return float(stats.entropy(np.asarray(p, dtype=float)))


def binomial_sigma(p, n):
    return np.sqrt(np.asarray(p) * (1. - np.asarray(p)) / n)


def within_binomial_sigmas(observed, expected, n, n_sigma=4.):
    return np.abs(np.asarray(observed) - np.asarray(expected)) <= n_sigma * binomial_sigma(expected, n)


def chi_square_test(observed_counts: np.ndarray, expected_probs: np.ndarray, min_expected=5.):
    """
    Pearson goodness-of-fit of observed tuple counts vs enumerated probabilities.
    Cells with zero expected probability must have zero count and are dropped. Cells expecting fewer than
    ``min_expected`` counts are pooled into one, or into the smallest other cell if the pool is still sparse.

    Returns:
        scipy result with .statistic and .pvalue
    """
    observed_counts = np.asarray(observed_counts, dtype=float)
    expected_probs = np.asarray(expected_probs, dtype=float)
    support = expected_probs > 0
    assert observed_counts[~support].sum() == 0, 'observed a tuple with zero probability'
    observed = observed_counts[support]
    expected = expected_probs[support] / expected_probs[support].sum() * observed_counts.sum()
    sparse = expected < min_expected
    if sparse.any() and not sparse.all():
        pooled_observed, pooled_expected = observed[sparse].sum(), expected[sparse].sum()
        observed, expected = observed[~sparse], expected[~sparse]
        if pooled_expected < min_expected:
            smallest = np.argmin(expected)
            observed[smallest] += pooled_observed
            expected[smallest] += pooled_expected
        else:
            observed = np.append(observed, pooled_observed)
            expected = np.append(expected, pooled_expected)
    return stats.chisquare(observed, expected)


def _as_scalar(x):
    return float(x) if np.ndim(x) == 0 else x
