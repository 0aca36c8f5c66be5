"""Gromov-Wasserstein distance between finite metric measure spaces.

The squared GW value follows the half-normalised convention

    gw2 = 1/2 * sum_{i,j,k,l} (cx[i,k] - cy[j,l])**2 * pi[i,j] * pi[k,l]

and is minimised over couplings by conditional gradient (Frank-Wolfe).
The problem is a non-convex quadratic program, so the returned value is
the best stationary point over several restarts: an upper bound on the
true minimum.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_random_state
from .mmspace import MmSpace
from .ot import Coupling, exact_ot, sinkhorn

__all__ = ["GwSolution", "gw_objective", "gw_gradient", "gw_solve", "flb", "eccentricity",
           "GromovWasserstein"]

logger = logging.getLogger(__name__)

REL_DECREASE_TOL = 1e-10
FW_GAP_TOL = 1e-9


@dataclass
class GwSolution:
    coupling: Coupling
    gw_squared: float
    restarts_used: int
    objective_history: list = field(default_factory=list)
    restart_values: list = field(default_factory=list)

    @property
    def plan(self):
        return self.coupling.plan


def _as_plan(pi):
    return pi.plan if isinstance(pi, Coupling) else np.asarray(pi, dtype=np.float64)


def gw_objective(cx, cy, pi):
    """Half GW loss of a coupling, via the quadratic expansion.

    Uses ``sum (a - b)^2 = sum a^2 + sum b^2 - 2 sum a b`` which reduces the
    quartic sum to three matrix products; valid for any nonnegative
    ``pi`` (marginals are read off the plan itself).
    """
    pi = _as_plan(pi)
    cx = np.asarray(cx, dtype=np.float64)
    cy = np.asarray(cy, dtype=np.float64)
    p = pi.sum(axis=1)
    q = pi.sum(axis=0)
    const = p @ (cx ** 2) @ p + q @ (cy ** 2) @ q
    cross = np.sum((cx @ pi @ cy.T) * pi)
    return 0.5 * (const - 2.0 * cross)


def gw_gradient(cx, cy, pi):
    """Gradient of :func:`gw_objective` with respect to the plan entries."""
    pi = _as_plan(pi)
    p = pi.sum(axis=1)
    q = pi.sum(axis=0)
    # d/dpi of 1/2 * (p^T A p + q^T B q - 2 <cx pi cy^T, pi>) with symmetric cx, cy
    rows = (cx ** 2) @ p
    cols = (cy ** 2) @ q
    return rows[:, None] + cols[None, :] - 2.0 * cx @ pi @ cy.T


def _line_search(cx, cy, grad, delta):
    """Exact minimiser over [0, 1] of t -> f(pi + t * delta).

    ``delta`` has zero marginals, so only the cross term is curved:
    f(pi + t delta) = f(pi) + t <grad, delta> - t^2 <cx delta cy, delta>.
    """
    b = np.sum(grad * delta)
    a = -np.sum((cx @ delta @ cy.T) * delta)
    if a > 0:
        return float(np.clip(-b / (2.0 * a), 0.0, 1.0)), a, b
    return (1.0 if a + b < 0 else 0.0), a, b


def _frank_wolfe(cx, cy, mu, nu, plan, max_iter, inner):
    f = gw_objective(cx, cy, plan)
    history = [f]
    for _ in range(max_iter):
        grad = gw_gradient(cx, cy, plan)
        if inner == "exact":
            target = exact_ot(grad, mu, nu).plan
        else:
            target = sinkhorn(grad, mu, nu, epsilon=inner * max(np.abs(grad).max(), 1e-300)).plan
        delta = target - plan
        gap = -np.sum(grad * delta)
        if gap < FW_GAP_TOL:
            break
        t, a, b = _line_search(cx, cy, grad, delta)
        if t == 0.0:
            break
        new_plan = plan + t * delta
        new_f = gw_objective(cx, cy, new_plan)
        if new_f > f:
            # rounding only; the step is exact on a quadratic
            break
        plan = new_plan
        decrease = f - new_f
        f = new_f
        history.append(f)
        if decrease <= REL_DECREASE_TOL * max(abs(f), 1e-300):
            break
    return plan, f, history


def _best_swap(cx, cy, plan, grad):
    """Most improving 2-exchange of mass between two support cells.

    Moving ``t`` units from cells (i, j), (k, l) to (i, l), (k, j) changes
    the objective by ``t * b - 4 t^2 cx[i, k] cy[j, l]``; the curvature is
    non-positive so the full step ``t = min(pi[i, j], pi[k, l])`` is optimal.
    """
    rows, cols = np.nonzero(plan > 1e-15)
    mass = plan[rows, cols]
    t = np.minimum(mass[:, None], mass[None, :])
    b = (grad[rows[:, None], cols[None, :]] + grad[rows[None, :], cols[:, None]]
         - grad[rows, cols][:, None] - grad[rows, cols][None, :])
    curv = 4.0 * cx[rows[:, None], rows[None, :]] * cy[cols[:, None], cols[None, :]]
    change = t * b - t * t * curv
    valid = (rows[:, None] != rows[None, :]) & (cols[:, None] != cols[None, :])
    change[~valid] = np.inf
    k = int(np.argmin(change))
    alpha, beta = divmod(k, len(rows))
    return change.flat[k], (rows[alpha], cols[alpha]), (rows[beta], cols[beta]), t.flat[k]


def _descend(cx, cy, mu, nu, plan, max_iter, inner, polish, max_swaps=1000):
    plan, f, history = _frank_wolfe(cx, cy, mu, nu, plan, max_iter, inner)
    if not polish or inner != "exact":
        return plan, f, history
    for _ in range(max_swaps):
        grad = gw_gradient(cx, cy, plan)
        change, (i, j), (k, l), t = _best_swap(cx, cy, plan, grad)
        if not change < -REL_DECREASE_TOL * max(abs(f), 1e-12):
            break
        trial = plan.copy()
        trial[i, j] -= t
        trial[k, l] -= t
        trial[i, l] += t
        trial[k, j] += t
        trial = np.maximum(trial, 0.0)
        trial_f = gw_objective(cx, cy, trial)
        if trial_f >= f:
            break
        history.append(trial_f)
        plan, f, more = _frank_wolfe(cx, cy, mu, nu, trial, max_iter, inner)
        history.extend(more[1:])
    return plan, f, history


def _canonical_order(space):
    """Labelling-independent ordering: by eccentricity, then sorted distance row."""
    d = space.dist
    keys = np.sort(d, axis=1)[:, ::-1].T
    ecc = eccentricity(space)
    return np.lexsort(tuple(keys) + (space.weights, np.round(ecc, 12)))


def eccentricity(space):
    """Root-mean-square distance of every point to the rest of its space."""
    d = space.dist
    return np.sqrt((d ** 2) @ space.weights)


def _flb_solution(a, b):
    sx = eccentricity(a)
    sy = eccentricity(b)
    cost = (sx[:, None] - sy[None, :]) ** 2
    return exact_ot(cost, a.weights, b.weights)


def flb(a, b):
    """First lower bound on the squared GW distance.

    Transports the eccentricity profiles of the two spaces onto each other
    and halves the optimal cost, matching the GW normalisation.
    """
    return 0.5 * _flb_solution(a, b).cost


def _random_vertex(mu, nu, rng):
    return exact_ot(rng.random((len(mu), len(nu))), mu, nu).plan


def gw_solve(a, b, restarts=5, seed=0, max_iter=500, init="flb", inner="exact", polish=True,
             n_jobs=1):
    """Squared Gromov-Wasserstein distance by multi-start Frank-Wolfe.

    Parameters
    ----------
    a, b : MmSpace
    restarts : int
        Number of descents. The first starts from the product coupling,
        the second (when ``init="flb"``) from the optimal eccentricity
        coupling, the rest from seeded random vertices of the transport
        polytope.
    seed : int
    max_iter : int
        Frank-Wolfe iterations per descent.
    init : {"flb", "product"}
    inner : "exact" or float
        Linear minimisation oracle. A float switches to entropic
        projections (Sinkhorn with ``epsilon = inner * max|grad|``).
    polish : bool
        After each Frank-Wolfe run, apply improving 2-exchanges of mass
        between support cells and resume the descent (exact oracle only).
    n_jobs : int
        Restarts run on a thread pool of this size.

    Returns
    -------
    GwSolution
        Best restart, ties broken by restart index.

    Notes
    -----
    Points are relabelled in a canonical order computed from the distance
    matrices before solving, so the result does not depend on how the
    input points are listed.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    oa = _canonical_order(a)
    ob = _canonical_order(b)
    cx = a.dist[np.ix_(oa, oa)]
    cy = b.dist[np.ix_(ob, ob)]
    mu, nu = a.weights[oa], b.weights[ob]
    rng = check_random_state(seed)

    starts = [np.outer(mu, nu)]
    if init == "flb" and restarts > 1:
        sx = np.sqrt((cx ** 2) @ mu)
        sy = np.sqrt((cy ** 2) @ nu)
        starts.append(exact_ot((sx[:, None] - sy[None, :]) ** 2, mu, nu).plan)
    while len(starts) < restarts:
        starts.append(_random_vertex(mu, nu, rng))

    def run(plan):
        return _descend(cx, cy, mu, nu, plan, max_iter, inner, polish)

    if n_jobs > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(p) for p in starts]

    values = [r[1] for r in results]
    best = int(np.argmin(values))
    plan_c, value, history = results[best]
    plan = np.empty_like(plan_c)
    plan[np.ix_(oa, ob)] = plan_c
    logger.debug("gw_solve: restart values %s, best %d", values, best)
    return GwSolution(Coupling.from_plan(plan, a.weights, b.weights), max(float(value), 0.0),
                      len(starts), history, [float(v) for v in values])


class GromovWasserstein(BaseEstimator):
    """Estimator wrapper around :func:`gw_solve`.

    ``fit(X, Y)`` accepts point matrices (Euclidean) or, with
    ``metric="precomputed"``, square distance matrices.
    """

    def __init__(self, restarts=5, seed=0, max_iter=500, polish=True, metric="euclidean",
                 n_jobs=1):
        self.restarts = restarts
        self.seed = seed
        self.max_iter = max_iter
        self.polish = polish
        self.metric = metric
        self.n_jobs = n_jobs

    def _space(self, X, w):
        if isinstance(X, MmSpace):
            return X
        if self.metric == "precomputed":
            return MmSpace(weights=w, metric="precomputed", dist=X)
        return MmSpace(X, w)

    def fit(self, X, Y, sample_weight_x=None, sample_weight_y=None):
        a = self._space(X, sample_weight_x)
        b = self._space(Y, sample_weight_y)
        sol = gw_solve(a, b, restarts=self.restarts, seed=self.seed, max_iter=self.max_iter,
                       polish=self.polish, n_jobs=self.n_jobs)
        self.solution_ = sol
        self.coupling_ = sol.plan
        self.gw_squared_ = sol.gw_squared
        return self

    def score(self, X, Y):
        """Negative squared GW distance (higher is closer)."""
        return -self.fit(X, Y).gw_squared_
