"""Finite metric measure spaces.

A metric measure space here is a finite point set with a probability
vector of strictly positive weights and either Euclidean coordinates or a
precomputed distance matrix.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import check_matrix
from .exceptions import ConfigurationError, DegenerateInputError, InputError

__all__ = [
    "MmSpace",
    "Moments",
    "distance_matrix",
    "moments",
    "l2_normalize",
    "lower_bound_constant",
    "upper_bound_constant",
]

WEIGHT_TOL = 1e-12
SYMMETRY_TOL = 1e-12
TRIANGLE_TOL = 1e-9
_MAX_TRIPLES = 200_000


@dataclass(frozen=True)
class Moments:
    """First and second moments of a measure around the ambient origin."""

    m1: float
    m2: float


class MmSpace:
    """Finite metric measure space.

    Parameters
    ----------
    points : array-like of shape (n, D), optional
        Ambient coordinates. Required for ``metric="euclidean"``.
    weights : array-like of shape (n,), optional
        Probability weights, strictly positive. Uniform when omitted.
    metric : {"euclidean", "precomputed"}
    dist : array-like of shape (n, n), optional
        Distance matrix, required for ``metric="precomputed"``.

    Notes
    -----
    Instances are read-only once built; the distance matrix is computed
    lazily and cached.
    """

    def __init__(self, points=None, weights=None, metric="euclidean", dist=None):
        if metric not in ("euclidean", "precomputed"):
            raise ConfigurationError(f"unknown metric {metric!r}")
        if points is not None:
            points = check_matrix(points, "points")
            points.setflags(write=False)
        if dist is not None:
            dist = check_matrix(dist, "dist", ensure_square=True)
            _check_metric_matrix(dist)
            dist.setflags(write=False)
        if metric == "euclidean" and points is None:
            raise ConfigurationError("euclidean metric requires points")
        if metric == "precomputed" and dist is None:
            raise ConfigurationError("precomputed metric selected but no distance matrix given")
        n = points.shape[0] if points is not None else dist.shape[0]
        if points is not None and dist is not None and dist.shape[0] != n:
            raise InputError(f"dist has {dist.shape[0]} rows but points has {n}")

        if weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(weights, dtype=np.float64).ravel().copy()
            if weights.shape[0] != n:
                raise InputError(f"weights has length {weights.shape[0]}, expected {n}")
            if not np.all(np.isfinite(weights)):
                raise InputError("weights contain non-finite values")
            if np.any(weights <= 0):
                raise InputError("weights must be strictly positive (full support)")
            if abs(weights.sum() - 1.0) > WEIGHT_TOL:
                raise InputError(f"weights sum to {weights.sum():.17g}, expected 1")
        weights.setflags(write=False)

        self._points = points
        self._weights = weights
        self._metric = metric
        self._dist = dist

    @property
    def points(self):
        return self._points

    @property
    def weights(self):
        return self._weights

    @property
    def metric(self):
        return self._metric

    @property
    def n(self):
        return self._weights.shape[0]

    @property
    def dim(self):
        """Ambient dimension, or ``None`` for precomputed spaces without points."""
        return None if self._points is None else self._points.shape[1]

    @cached_property
    def dist(self):
        return distance_matrix(self)

    def with_weights(self, weights):
        return MmSpace(self._points, weights, self._metric, self._dist)

    def subset(self, idx):
        """Restrict to ``idx`` with renormalised weights."""
        idx = np.asarray(idx)
        w = self._weights[idx]
        pts = None if self._points is None else self._points[idx]
        d = None
        if self._metric == "precomputed":
            d = self._dist[np.ix_(idx, idx)]
        return MmSpace(pts, w / w.sum(), self._metric, d)

    def __repr__(self):
        return f"MmSpace(n={self.n}, dim={self.dim}, metric={self._metric!r})"


def _check_metric_matrix(d):
    n = d.shape[0]
    if np.any(d < 0):
        raise InputError("distance matrix has negative entries")
    if np.any(np.diag(d) != 0):
        raise InputError("distance matrix must have a zero diagonal")
    if np.max(np.abs(d - d.T), initial=0.0) > SYMMETRY_TOL:
        raise InputError("distance matrix is not symmetric")
    if n < 3:
        return
    scale = max(1.0, float(d.max()))
    if n ** 3 <= _MAX_TRIPLES:
        # d[i,k] <= d[i,j] + d[j,k] for all (i, j, k)
        viol = d[:, None, :] - d[:, :, None] - d[None, :, :]
        worst = viol.max()
    else:
        rng = np.random.default_rng(0)
        i, j, k = rng.integers(0, n, size=(3, _MAX_TRIPLES))
        worst = np.max(d[i, k] - d[i, j] - d[j, k])
    if worst > TRIANGLE_TOL * scale:
        raise InputError(f"distance matrix violates the triangle inequality by {worst:.3g}")


def distance_matrix(space):
    """Pairwise distance matrix of ``space``.

    Euclidean spaces use the 2-norm of coordinate differences; precomputed
    spaces return their stored matrix.
    """
    if space.metric == "precomputed":
        if space._dist is None:
            raise ConfigurationError("precomputed metric selected but no distance matrix given")
        return space._dist
    if space._dist is not None:
        return space._dist
    d = cdist(space.points, space.points)
    np.fill_diagonal(d, 0.0)
    d.setflags(write=False)
    return d


def _require_coordinates(space, what):
    if space.metric != "euclidean":
        raise ConfigurationError(f"{what} needs Euclidean coordinates; space is {space.metric}")


def moments(space):
    """First and second moments of distances to the ambient origin."""
    _require_coordinates(space, "moments")
    norms = np.linalg.norm(space.points, axis=1)
    w = space.weights
    return Moments(m1=float(w @ norms), m2=float(w @ norms ** 2))


def l2_normalize(space):
    """Scale every point to unit Euclidean norm, keeping the weights."""
    _require_coordinates(space, "l2_normalize")
    norms = np.linalg.norm(space.points, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateInputError(f"cannot normalise zero-norm rows {zero.tolist()}")
    return MmSpace(space.points / norms[:, None], space.weights)


def lower_bound_constant(mu, nu):
    """Additive constant of the GW lower bound, ``2 (M1(mu) + M1(nu))``."""
    return 2.0 * (mu.m1 + nu.m1)


def upper_bound_constant(mu, nu):
    """Additive constant of the SERW upper bound.

    ``(sqrt M2(mu) + sqrt M1(mu)) (sqrt M2(nu) + sqrt M1(nu)) + M2(mu) + M2(nu)``
    """
    a = np.sqrt(mu.m2) + np.sqrt(mu.m1)
    b = np.sqrt(nu.m2) + np.sqrt(nu.m1)
    return float(a * b + mu.m2 + nu.m2)
