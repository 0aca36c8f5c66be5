"""Orthogonal Procrustes and invariant optimal transport.

Invariant OT jointly minimises, over couplings ``pi`` and orthogonal
matrices ``R``,

    J(R, pi) = sum_ij pi[i, j] * ||x_i - R y_j||^2

by alternating an exact transport step and a Procrustes step. Both steps
are exact minimisations of ``J`` in one block, so the cost never goes up.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix, check_random_state, check_weights
from .exceptions import InputError, SolverError
from .ot import Coupling, exact_ot, squared_euclidean_cost

__all__ = ["Rotation", "procrustes", "procrustes_from_cross", "invariant_ot", "InvariantOtResult",
           "random_orthogonal"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Rotation:
    """Orthogonal ``d x d`` matrix; reflections are allowed."""

    matrix: np.ndarray

    @property
    def dim(self):
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d))

    def apply(self, points):
        """Rotate the rows of ``points``: returns ``points @ R.T``."""
        return np.asarray(points) @ self.matrix.T

    def orthogonality_error(self):
        r = self.matrix
        return float(np.linalg.norm(r.T @ r - np.eye(self.dim)))

    @property
    def T(self):
        return Rotation(self.matrix.T)


def random_orthogonal(d, seed=None):
    """Haar-distributed orthogonal matrix from the QR decomposition of a Gaussian."""
    rng = check_random_state(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def procrustes_from_cross(cross):
    """Orthogonal ``R`` maximising ``trace(R^T cross)``."""
    try:
        u, _, vt = np.linalg.svd(cross)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"SVD did not converge: {exc}") from exc
    return u @ vt


def procrustes(source, target, row_weights=None):
    """Orthogonal map that best carries ``source`` rows onto ``target`` rows.

    Returns the ``Rotation`` minimising ``sum_i w_i ||R source_i - target_i||^2``,
    i.e. ``R = U V^T`` with ``U S V^T`` the SVD of ``target^T diag(w) source``.
    When the cross-covariance is rank deficient the minimiser is not
    unique and any one of them is returned.
    """
    source = check_matrix(source, "source")
    target = check_matrix(target, "target")
    if source.shape != target.shape:
        raise InputError(f"shape mismatch: {source.shape} vs {target.shape}")
    w = check_weights(row_weights, source.shape[0], "row_weights", tol=np.inf)
    cross = target.T @ (w[:, None] * source)
    return Rotation(procrustes_from_cross(cross))


@dataclass
class InvariantOtResult:
    rotation: Rotation
    coupling: Coupling
    cost: float
    rounds: int
    cost_history: list

    def __iter__(self):
        # allows ``rotation, coupling, cost = invariant_ot(...)``
        return iter((self.rotation, self.coupling, self.cost))


def _alternate(x, y, mu, nu, rot, plan, max_rounds, tol):
    history = []
    best = None
    for rounds in range(1, max_rounds + 1):
        sol = exact_ot(squared_euclidean_cost(x, y @ rot.T), mu, nu)
        plan = sol.plan
        rot = procrustes_from_cross(x.T @ plan @ y)
        cost = 0.5 * float(np.sum(plan * squared_euclidean_cost(x, y @ rot.T)))
        if history and cost > history[-1]:
            # an exact block minimisation cannot increase J; guard rounding
            cost = history[-1]
            rot, plan = best
            history.append(cost)
            break
        history.append(cost)
        best = (rot, plan)
        if len(history) > 1:
            prev = history[-2]
            if prev - cost <= tol * max(prev, 1e-300):
                break
    return best[0], best[1], history, rounds


def invariant_ot(x_emb, y_emb, mu=None, nu=None, max_rounds=50, tol=1e-9, init="eccentricity",
                 n_init=0, seed=0):
    """Joint minimisation over a coupling and an orthogonal alignment.

    Parameters
    ----------
    x_emb : array-like of shape (n, d)
    y_emb : array-like of shape (m, d)
    mu, nu : array-like, optional
        Marginals (uniform by default).
    max_rounds : int
        Alternation rounds per start.
    tol : float
        Stop a start when the relative cost decrease drops below ``tol``.
    init : {"eccentricity", "identity", "both"}
        ``"eccentricity"`` starts from the Procrustes fit of the coupling
        that matches distances to the weighted centroid. That start turns
        with ``y_emb``, so the result does not depend on the orientation
        of either cloud. ``"identity"`` starts from ``R = I`` and
        ``"both"`` keeps the better of the two (neither is orientation
        free).
    n_init : int
        Additional starts ``Q_k R_0`` with seeded random orthogonal ``Q_k``
        and ``R_0`` the eccentricity start (or ``I`` for ``"identity"``).
    seed : int

    Returns
    -------
    InvariantOtResult
        Unpacks as ``(rotation, coupling, cost)`` where ``cost = J / 2``.
        ``cost_history`` of the winning start is non-increasing.
    """
    x = check_matrix(x_emb, "x_emb")
    y = check_matrix(y_emb, "y_emb")
    if x.shape[1] != y.shape[1]:
        raise InputError(f"embedding dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    n, d = x.shape
    m = y.shape[0]
    mu = check_weights(mu, n, "mu")
    nu = check_weights(nu, m, "nu")

    if init not in ("identity", "eccentricity", "both"):
        raise InputError(f"unknown init {init!r}")
    rotations = []
    if init in ("identity", "both"):
        rotations.append(np.eye(d))
    if init in ("eccentricity", "both"):
        rotations.append(_eccentricity_rotation(x, y, mu, nu))
    anchor = rotations[-1]
    rng = check_random_state(seed)
    rotations.extend(random_orthogonal(d, rng) @ anchor for _ in range(n_init))

    best = None
    for k, rot in enumerate(rotations):
        r, plan, history, rounds = _alternate(x, y, mu, nu, rot, None, max_rounds, tol)
        logger.debug("invariant_ot start %d: cost %.6g after %d rounds", k, history[-1], rounds)
        if best is None or history[-1] < best[2][-1]:
            best = (r, plan, history, rounds)
    r, plan, history, rounds = best
    return InvariantOtResult(Rotation(r), Coupling.from_plan(plan, mu, nu), history[-1], rounds,
                             history)


def _eccentricity_rotation(x, y, mu, nu):
    # distances to the weighted centroid are invariant under rotation of y
    ex = np.linalg.norm(x - mu @ x, axis=1)
    ey = np.linalg.norm(y - nu @ y, axis=1)
    plan = exact_ot((ex[:, None] - ey[None, :]) ** 2, mu, nu).plan
    xc = x - mu @ x
    yc = y - nu @ y
    return procrustes_from_cross(xc.T @ plan @ yc)
