"""Embeddings of finite metric spaces into a common Euclidean space.

Base embeddings (classical MDS, locally linear embedding), distortion
estimates of an embedding, the gated distortion penalty used while
training, and the residual network ``x -> x + g(x)`` that refines a base
embedding. Gradients of the residual network are written out by hand.
"""

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_random_state
from .exceptions import DegenerateInputError, InputError
from .mmspace import MmSpace

__all__ = [
    "DistortionEstimate",
    "target_dimension",
    "mds_embed",
    "lle_embed",
    "lle_weights",
    "estimate_distortion",
    "distortion_threshold",
    "distortion_loss",
    "distortion_loss_grad",
    "ResidualEmbedding",
    "Adam",
    "ClassicalMDS",
    "LocallyLinearEmbedding",
]

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01
# ratios within this relative margin of the gate count as equal to it
GATE_RTOL = 1e-9


# ---------------------------------------------------------------------------
# Dimension and distortion
# ---------------------------------------------------------------------------


def target_dimension(n, m, c=1.0):
    """Embedding dimension ``ceil(c * ln(max(n, m))**2)``."""
    if min(n, m) < 2:
        raise InputError("target_dimension needs n, m >= 2")
    return int(math.ceil(c * math.log(max(n, m)) ** 2))


@dataclass(frozen=True)
class DistortionEstimate:
    """Empirical distortion of an embedding.

    ``kappa * d(x, x') <= ||phi(x) - phi(x')|| <= tau * kappa * d(x, x')``
    holds on every sampled pair with ``kappa = ratio_min`` and
    ``tau = ratio_max / ratio_min``.
    """

    kappa: float
    tau: float
    ratio_min: float
    ratio_max: float


def _offdiag(mat):
    mat = np.asarray(mat, dtype=np.float64)
    mask = ~np.eye(mat.shape[0], dtype=bool)
    return mat[mask]


def estimate_distortion(cx, c_emb):
    """Distortion of an embedding from its pairwise distance matrices.

    Parameters
    ----------
    cx : array-like of shape (n, n)
        Distances in the original space; off-diagonal entries must be > 0.
    c_emb : array-like of shape (n, n)
        Distances between the embedded points.
    """
    cx = np.asarray(cx, dtype=np.float64)
    c_emb = np.asarray(c_emb, dtype=np.float64)
    if cx.shape != c_emb.shape or cx.ndim != 2:
        raise InputError(f"shape mismatch: {cx.shape} vs {c_emb.shape}")
    if cx.shape[0] < 2:
        return DistortionEstimate(1.0, 1.0, 1.0, 1.0)
    orig = _offdiag(cx)
    if np.any(orig <= 0):
        raise DegenerateInputError("duplicate points: zero off-diagonal distance")
    ratios = _offdiag(c_emb) / orig
    lo, hi = float(ratios.min()), float(ratios.max())
    if lo <= 0:
        raise DegenerateInputError("embedding collapses two distinct points")
    return DistortionEstimate(kappa=lo, tau=hi / lo, ratio_min=lo, ratio_max=hi)


def distortion_threshold(ratios):
    """Gate level ``max(0.9 * max(ratios), min(ratios))``."""
    ratios = np.asarray(ratios, dtype=np.float64)
    return float(max(0.9 * ratios.max(), ratios.min()))


def distortion_loss(cx, c_emb, threshold=None):
    """Sum of the distance ratios that exceed the gate.

    ``cx`` and ``c_emb`` hold matching pair distances (any shape). When
    ``threshold`` is omitted it is recomputed from the current ratios.
    """
    ratios = np.asarray(c_emb, dtype=np.float64) / np.asarray(cx, dtype=np.float64)
    if threshold is None:
        threshold = distortion_threshold(ratios)
    return float(ratios[ratios > threshold * (1.0 + GATE_RTOL)].sum())


def distortion_loss_grad(emb, cx, threshold=None, squared=False):
    """Gated distortion loss over ordered pairs and its gradient.

    Parameters
    ----------
    emb : ndarray of shape (k, d)
        Embedded points.
    cx : ndarray of shape (k, k)
        Original distances between the same points.
    threshold : float, optional
        Gate level; recomputed from the current ratios when omitted.
    squared : bool
        Compare squared embedded distances to the original distances
        instead of plain distances. The plain ratio is scale free, which
        is what lets the gate single out the most stretched pairs.

    Returns
    -------
    loss : float
    grad : ndarray of shape (k, d)
        Gradient with respect to ``emb``; the gate is held fixed.
    threshold : float
    """
    k = emb.shape[0]
    diff = emb[:, None, :] - emb[None, :, :]
    sq = np.sum(diff ** 2, axis=-1)
    off = ~np.eye(k, dtype=bool)
    if np.any(cx[off] <= 0):
        raise DegenerateInputError("duplicate points: zero off-diagonal distance")
    safe_cx = np.where(off, cx, 1.0)
    if squared:
        c_emb = sq
    else:
        c_emb = np.sqrt(sq)
    ratios = np.where(off, c_emb / safe_cx, 0.0)
    if threshold is None:
        threshold = distortion_threshold(ratios[off])
    gate = off & (ratios > threshold * (1.0 + GATE_RTOL))
    loss = float(ratios[gate].sum())
    if squared:
        coef = np.where(gate, 2.0 / safe_cx, 0.0)
    else:
        dist = np.where(off, np.sqrt(sq), 1.0)
        coef = np.where(gate, 1.0 / (safe_cx * np.maximum(dist, 1e-300)), 0.0)
    # pair (i, i') contributes coef * diff to row i and -coef * diff to row i'
    sym = coef + coef.T
    grad = np.einsum("ij,ijk->ik", sym, diff)
    return loss, grad, threshold


# ---------------------------------------------------------------------------
# Base embeddings
# ---------------------------------------------------------------------------


@dataclass
class MdsInfo:
    eigenvalues: np.ndarray
    padded: bool
    origin_enforced: bool


def _origin_index(space):
    if space.metric != "euclidean":
        return None
    hit = np.flatnonzero(~space.points.any(axis=1))
    return int(hit[0]) if hit.size else None


def mds_embed(space, d, return_info=False):
    """Classical multidimensional scaling of ``space`` into ``R^d``.

    The double-centred Gram matrix of squared distances is diagonalised
    and the top ``d`` eigenpairs are kept. The result is centred at the
    origin; if the ambient origin is one of the points, its image is moved
    to the origin instead. Missing positive eigenvalues are padded with
    zero columns (``info.padded``).
    """
    n = space.n
    if d < 1 or d > max(n - 1, 1):
        raise InputError(f"d must be in [1, {max(n - 1, 1)}], got {d}")
    dist = space.dist
    h = np.eye(n) - 1.0 / n
    gram = -0.5 * h @ (dist ** 2) @ h
    evals, evecs = np.linalg.eigh((gram + gram.T) / 2)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    keep = evals[:d]
    positive = keep > 1e-12 * max(evals[0], 1e-300)
    coords = np.zeros((n, d))
    coords[:, positive] = evecs[:, :d][:, positive] * np.sqrt(keep[positive])
    padded = bool(not positive.all())
    if padded:
        warnings.warn(f"MDS: only {positive.sum()} positive eigenvalues for d={d}; "
                      "padding with zero columns", RuntimeWarning, stacklevel=2)
    coords -= coords.mean(axis=0)
    origin = _origin_index(space)
    if origin is not None:
        coords -= coords[origin]
    if return_info:
        return coords, MdsInfo(evals, padded, origin is not None)
    return coords


def _knn(dist, k):
    order = np.argsort(dist, axis=1, kind="stable")
    nbrs = []
    for i in range(dist.shape[0]):
        row = order[i][order[i] != i]
        nbrs.append(row[:k])
    return np.array(nbrs)


def lle_weights(dist, k_neighbors, reg=None):
    """Barycentric reconstruction weights of each point from its neighbours.

    The local Gram matrix is built from distances only,
    ``G_jl = (d_ij^2 + d_il^2 - d_jl^2) / 2``, so precomputed metrics work
    too. Rows of the returned ``(n, n)`` matrix sum to one.
    """
    n = dist.shape[0]
    nbrs = _knn(dist, k_neighbors)
    w = np.zeros((n, n))
    ones = np.ones(k_neighbors)
    for i in range(n):
        idx = nbrs[i]
        di = dist[i, idx]
        djl = dist[np.ix_(idx, idx)]
        gram = 0.5 * (di[:, None] ** 2 + di[None, :] ** 2 - djl ** 2)
        tr = np.trace(gram)
        r = reg if reg is not None else 1e-3 * (tr if tr > 0 else 1.0) / k_neighbors
        gram[np.diag_indices_from(gram)] += r
        coef = np.linalg.solve(gram, ones)
        w[i, idx] = coef / coef.sum()
    return w, nbrs


def lle_embed(space, d, k_neighbors=None, reg=None):
    """Locally linear embedding of ``space`` into ``R^d``.

    Parameters
    ----------
    space : MmSpace
    d : int
    k_neighbors : int, optional
        Default ``min(10, n - 1)``.
    reg : float, optional
        Tikhonov term added to each local Gram matrix; default
        ``1e-3 * trace(G) / k``.

    Returns
    -------
    ndarray of shape (n, d)
        Columns are centred and orthonormal for the ``1/n`` inner product.
    """
    n = space.n
    if k_neighbors is None:
        k_neighbors = min(10, n - 1)
    if not 1 <= k_neighbors < n:
        raise InputError(f"k_neighbors must be in [1, {n - 1}], got {k_neighbors}")
    if reg is not None and reg <= 0:
        raise InputError("reg must be positive")
    if d >= n:
        raise InputError(f"d must be < n = {n}")
    w, nbrs = lle_weights(space.dist, k_neighbors, reg)

    rows = np.repeat(np.arange(n), k_neighbors)
    graph = csr_matrix((np.ones(rows.size), (rows, nbrs.ravel())), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    if ncomp > 1:
        groups = [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]
        raise DegenerateInputError(f"k-NN graph is disconnected into {ncomp} components: {groups}")

    iw = np.eye(n) - w
    evals, evecs = np.linalg.eigh(iw.T @ iw)
    # the bottom eigenvector is the constant one
    return evecs[:, 1:d + 1] * np.sqrt(n)


# ---------------------------------------------------------------------------
# Residual network
# ---------------------------------------------------------------------------


def _leaky(z):
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _leaky_grad(z):
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


@dataclass
class ResidualEmbedding:
    """Refinement ``phi(x) = x + g(x)`` of a frozen base embedding.

    ``g`` is a bias-free fully connected network with leaky-ReLU hidden
    activations and a linear output layer, so ``g(0) = 0``.
    ``weights[k]`` has shape ``(out_k, in_k)``.
    """

    base: np.ndarray
    weights: list = field(default_factory=list)

    @classmethod
    def init(cls, base, hidden=None, seed=None, zero_output=True):
        """Random hidden layers, zero output layer (so ``g`` starts at 0).

        ``hidden`` lists the hidden widths; default ``[2 d]``.
        """
        base = np.asarray(base, dtype=np.float64)
        d = base.shape[1]
        hidden = [2 * d] if hidden is None else list(hidden)
        rng = check_random_state(seed)
        widths = [d] + hidden + [d]
        weights = []
        for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            if zero_output and k == len(widths) - 2:
                weights.append(np.zeros((fan_out, fan_in)))
            else:
                weights.append(rng.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in))
        return cls(base, weights)

    @property
    def dim(self):
        return self.base.shape[1]

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights[0].shape[1]:
            raise InputError(f"input of shape {x.shape} does not match first layer "
                             f"{self.weights[0].shape}")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise InputError(f"layer shapes {a.shape} and {b.shape} do not chain")
        if self.weights[-1].shape[0] != x.shape[1]:
            raise InputError("output layer width must equal input dimension")
        return x

    def forward(self, base_batch, cache=False):
        x = self._check(base_batch)
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for k, w in enumerate(self.weights):
            z = h @ w.T
            pre.append(z)
            h = z if k == last else _leaky(z)
            acts.append(h)
        out = x + h
        if cache:
            return out, (acts, pre)
        return out

    def backward(self, base_batch, upstream_grad, cache=None):
        """Gradients of a scalar loss w.r.t. every weight matrix.

        ``upstream_grad`` is d(loss)/d(output) for ``forward(base_batch)``.
        """
        if cache is None:
            _, cache = self.forward(base_batch, cache=True)
        acts, pre = cache
        delta = np.asarray(upstream_grad, dtype=np.float64)
        if delta.shape != acts[0].shape:
            raise InputError(f"upstream gradient shape {delta.shape} != {acts[0].shape}")
        grads = [None] * len(self.weights)
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            if k != last:
                delta = delta * _leaky_grad(pre[k])
            grads[k] = delta.T @ acts[k]
            delta = delta @ self.weights[k]
        return grads

    def transform(self):
        """Embedding of the full base point set."""
        return self.forward(self.base)

    def to_dict(self):
        return {"base": self.base.tolist(), "weights": [w.tolist() for w in self.weights]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj):
        return cls(np.asarray(obj["base"], dtype=np.float64),
                   [np.asarray(w, dtype=np.float64) for w in obj["weights"]])

    @classmethod
    def identity(cls, base):
        """Network with no effect: a single zero layer."""
        base = np.asarray(base, dtype=np.float64)
        d = base.shape[1]
        return cls(base, [np.zeros((d, d))])


class Adam:
    """Adam optimiser over a list of arrays, updated in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads, maximize=False):
        self.t += 1
        sign = 1.0 if maximize else -1.0
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p += sign * self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


class _TransductiveEmbedding(TransformerMixin, BaseEstimator):
    """Base for embeddings that only exist for the data they were fit on."""

    def _space(self, X):
        if isinstance(X, MmSpace):
            return X
        if self.metric == "precomputed":
            return MmSpace(metric="precomputed", dist=X)
        return MmSpace(check_matrix(X, "X"))

    def transform(self, X):
        check_is_fitted(self, "embedding_")
        X_arr = X.points if isinstance(X, MmSpace) and X.points is not None else X
        if isinstance(X, MmSpace) and X.points is None:
            X_arr = X.dist
        if np.shape(X_arr) != self._fit_shape or not np.array_equal(np.asarray(X_arr), self._fit_X):
            raise NotImplementedError("out-of-sample extension is not supported; "
                                      "call fit_transform on the full dataset")
        return self.embedding_

    def _remember(self, X, space):
        arr = space.points if space.points is not None else space.dist
        self._fit_X = np.asarray(arr)
        self._fit_shape = self._fit_X.shape


class ClassicalMDS(_TransductiveEmbedding):
    """Classical MDS as a scikit-learn transformer.

    Parameters
    ----------
    n_components : int
    metric : {"euclidean", "precomputed"}
    """

    def __init__(self, n_components=2, metric="euclidean"):
        self.n_components = n_components
        self.metric = metric

    def fit(self, X, y=None):
        space = self._space(X)
        self.embedding_, info = mds_embed(space, self.n_components, return_info=True)
        self.eigenvalues_ = info.eigenvalues
        self.padded_ = info.padded
        self.origin_enforced_ = info.origin_enforced
        self._remember(X, space)
        return self


class LocallyLinearEmbedding(_TransductiveEmbedding):
    """Standard LLE as a scikit-learn transformer."""

    def __init__(self, n_components=2, n_neighbors=None, reg=None, metric="euclidean"):
        self.n_components = n_components
        self.n_neighbors = n_neighbors
        self.reg = reg
        self.metric = metric

    def fit(self, X, y=None):
        space = self._space(X)
        self.embedding_ = lle_embed(space, self.n_components, self.n_neighbors, self.reg)
        self._remember(X, space)
        return self
