"""Input validation helpers used across the package."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import InputError

MARGINAL_TOL = 1e-9


def check_matrix(a, name="array", ensure_square=False, ensure_min_samples=1):
    """Return ``a`` as a finite float64 2-D array."""
    try:
        a = check_array(a, dtype=np.float64, ensure_min_samples=ensure_min_samples,
                        ensure_min_features=1, input_name=name)
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from exc
    if ensure_square and a.shape[0] != a.shape[1]:
        raise InputError(f"{name} must be square, got shape {a.shape}")
    return a


def check_weights(w, n, name="weights", tol=MARGINAL_TOL):
    """Validate a probability vector of length ``n``.

    ``None`` yields the uniform vector.
    """
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != n:
        raise InputError(f"{name} has length {w.shape[0]}, expected {n}")
    if not np.all(np.isfinite(w)):
        raise InputError(f"{name} contains non-finite values")
    if np.any(w < 0):
        raise InputError(f"{name} contains negative entries")
    if abs(w.sum() - 1.0) > tol:
        raise InputError(f"{name} sums to {w.sum():.17g}, expected 1 within {tol:g}")
    return w


def check_marginals(cost, mu, nu):
    """Validate a cost matrix against its two marginals and return all three."""
    cost = check_matrix(cost, "cost")
    n, m = cost.shape
    mu = check_weights(mu, n, "mu")
    nu = check_weights(nu, m, "nu")
    return cost, mu, nu


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
