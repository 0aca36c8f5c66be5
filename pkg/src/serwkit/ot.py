"""Optimal transport between discrete measures.

``exact_ot`` solves the transportation linear program with a network
simplex on the bipartite row/column graph; ``sinkhorn`` is the
log-domain entropic approximation.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import MARGINAL_TOL, check_marginals
from .exceptions import InputError, SolverError

__all__ = ["Coupling", "OtSolution", "exact_ot", "sinkhorn", "w2_squared", "squared_euclidean_cost"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Coupling:
    """Transport plan together with the marginals it was solved for."""

    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    @classmethod
    def from_plan(cls, plan, mu=None, nu=None):
        plan = np.maximum(np.asarray(plan, dtype=np.float64), 0.0)
        mu = plan.sum(axis=1) if mu is None else np.asarray(mu, dtype=np.float64)
        nu = plan.sum(axis=0) if nu is None else np.asarray(nu, dtype=np.float64)
        return cls(plan, mu, nu)

    @classmethod
    def product(cls, mu, nu):
        return cls(np.outer(mu, nu), np.asarray(mu), np.asarray(nu))

    @property
    def shape(self):
        return self.plan.shape

    def marginal_error(self):
        """Largest absolute deviation of the plan's sums from its marginals."""
        return max(np.abs(self.plan.sum(axis=1) - self.row_marginal).max(),
                   np.abs(self.plan.sum(axis=0) - self.col_marginal).max())


@dataclass
class OtSolution:
    coupling: Coupling
    cost: float
    iterations: int
    converged: bool
    potentials: tuple = field(default=None, repr=False)

    @property
    def plan(self):
        return self.coupling.plan

    def duality_gap(self):
        """``cost - (<mu, u> + <nu, v>)`` from the recovered potentials."""
        if self.potentials is None:
            return None
        u, v = self.potentials
        return self.cost - (self.coupling.row_marginal @ u + self.coupling.col_marginal @ v)


def squared_euclidean_cost(x, y):
    """Matrix of ``||x_i - y_j||^2``.

    Computed from coordinate differences, so coincident points cost
    exactly zero (the expanded ``|x|^2 + |y|^2 - 2 x.y`` form does not).
    """
    return cdist(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), "sqeuclidean")


# ---------------------------------------------------------------------------
# Network simplex
# ---------------------------------------------------------------------------


def _northwest_corner(mu, nu):
    """Initial basic feasible solution with exactly n + m - 1 basic cells."""
    n, m = len(mu), len(nu)
    a, b = mu.copy(), nu.copy()
    flow = np.zeros((n, m))
    basis = []
    i = j = 0
    while True:
        x = min(a[i], b[j])
        flow[i, j] = x
        basis.append((i, j))
        a[i] -= x
        b[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and a[i] <= b[j]):
            i += 1
        else:
            j += 1
    return flow, basis


class _Tree:
    """Spanning tree on row nodes ``0..n-1`` and column nodes ``n..n+m-1``."""

    def __init__(self, n, m, basis):
        self.n, self.m = n, m
        self.adj = [set() for _ in range(n + m)]
        for i, j in basis:
            self.add(i, j)

    def add(self, i, j):
        self.adj[i].add(self.n + j)
        self.adj[self.n + j].add(i)

    def remove(self, i, j):
        self.adj[i].discard(self.n + j)
        self.adj[self.n + j].discard(i)

    def potentials(self, cost):
        n = self.n
        u = np.zeros(n)
        v = np.zeros(self.m)
        seen = np.zeros(n + self.m, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for nb in self.adj[node]:
                if seen[nb]:
                    continue
                seen[nb] = True
                if node < n:
                    v[nb - n] = cost[node, nb - n] - u[node]
                else:
                    u[nb] = cost[nb, node - n] - v[node - n]
                queue.append(nb)
        return u, v

    def path(self, i, j):
        """Basic cells on the tree path from row ``i`` to column ``j``."""
        n = self.n
        start, goal = i, n + j
        parent = {start: None}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for nb in self.adj[node]:
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        nodes = []
        node = goal
        while node is not None:
            nodes.append(node)
            node = parent[node]
        nodes.reverse()
        cells = []
        for a, b in zip(nodes[:-1], nodes[1:]):
            cells.append((a, b - n) if a < n else (b, a - n))
        return cells


def exact_ot(cost, mu=None, nu=None, max_pivots=None, bland_after=None):
    """Exact optimal transport by the transportation network simplex.

    Parameters
    ----------
    cost : array-like of shape (n, m)
    mu, nu : array-like, optional
        Marginals summing to one; uniform when omitted.
    max_pivots : int, optional
        Hard cap on simplex pivots (default ``50 * n * m + 1000``).
    bland_after : int, optional
        Number of consecutive degenerate pivots after which pricing
        switches from Dantzig's most-negative rule to Bland's rule, which
        cannot cycle. Defaults to ``n + m``.

    Returns
    -------
    OtSolution
        Vertex solution (at most ``n + m - 1`` nonzeros) with the dual
        potentials ``(u, v)`` attached.
    """
    cost, mu, nu = check_marginals(cost, mu, nu)
    if abs(mu.sum() - nu.sum()) > MARGINAL_TOL:
        raise InputError("marginals have different total mass")
    n, m = cost.shape
    if max_pivots is None:
        max_pivots = 50 * n * m + 1000
    if bland_after is None:
        bland_after = n + m

    flow, basis = _northwest_corner(mu, nu)
    tree = _Tree(n, m, basis)
    in_basis = np.zeros((n, m), dtype=bool)
    for i, j in basis:
        in_basis[i, j] = True

    tol = 1e-12 * max(1.0, float(np.abs(cost).max()))
    degenerate_run = 0
    use_bland = False
    pivots = 0
    while True:
        u, v = tree.potentials(cost)
        reduced = cost - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        if use_bland:
            candidates = np.flatnonzero(reduced < -tol)
            if candidates.size == 0:
                break
            ei, ej = divmod(int(candidates[0]), m)
        else:
            k = int(np.argmin(reduced))
            if reduced.flat[k] >= -tol:
                break
            ei, ej = divmod(k, m)
        if pivots >= max_pivots:
            raise SolverError(f"network simplex did not terminate after {pivots} pivots",
                              iterations=pivots)

        cells = tree.path(ei, ej)
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        ties = [c for c in minus if flow[c] <= theta]
        leave = min(ties) if use_bland else ties[0]

        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ei, ej] = theta
        flow[leave] = 0.0

        tree.remove(*leave)
        in_basis[leave] = False
        tree.add(ei, ej)
        in_basis[ei, ej] = True
        pivots += 1

        if theta == 0.0:
            degenerate_run += 1
            if not use_bland and degenerate_run > bland_after:
                logger.debug("network simplex: switching to Bland's rule after %d pivots", pivots)
                use_bland = True
        else:
            degenerate_run = 0

    plan = np.maximum(flow, 0.0)
    value = float(np.sum(cost * plan))
    return OtSolution(Coupling(plan, mu, nu), value, pivots, True, potentials=(u, v))


# ---------------------------------------------------------------------------
# Sinkhorn
# ---------------------------------------------------------------------------


def _lse_rows(a):
    amax = a.max(axis=1, keepdims=True)
    return (amax + np.log(np.exp(a - amax).sum(axis=1, keepdims=True)))[:, 0]


def sinkhorn(cost, mu=None, nu=None, epsilon=None, max_iter=10000, tol=1e-9,
             eps_scaling=True, scaling_factor=0.5):
    """Entropic optimal transport, log-domain Sinkhorn iterations.

    Parameters
    ----------
    cost : array-like of shape (n, m)
    mu, nu : array-like, optional
        Marginals; uniform when omitted.
    epsilon : float, optional
        Regularisation strength, default ``1e-2 * max(cost)``.
    max_iter : int
        Total budget of Sinkhorn sweeps, across all annealing stages.
    tol : float
        Stop when the larger of the two L1 marginal residuals drops below it.
    eps_scaling : bool
        Anneal the regularisation geometrically from ``max(cost)`` down to
        ``epsilon``, warm-starting the dual potentials at each stage.

    Returns
    -------
    OtSolution
        ``cost`` is the transport term only (entropy excluded).
        Non-convergence is reported through ``converged=False``.
    """
    cost, mu, nu = check_marginals(cost, mu, nu)
    cmax = float(cost.max())
    if epsilon is None:
        epsilon = 1e-2 * max(cmax, np.finfo(float).tiny)
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    log_mu = np.log(mu)
    log_nu = np.log(nu)
    cost_t = np.ascontiguousarray(cost.T)

    schedule = [epsilon]
    if eps_scaling:
        eps = max(cmax, epsilon)
        schedule = []
        while eps > epsilon:
            schedule.append(eps)
            eps *= scaling_factor
        schedule.append(epsilon)

    f = np.zeros_like(mu)
    g = np.zeros_like(nu)
    it = 0
    err = np.inf
    converged = False
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        stage_tol = tol if last else max(tol, 1e-3)
        while it < max_iter:
            it += 1
            f = eps * (log_mu - _lse_rows((g[None, :] - cost) / eps))
            g = eps * (log_nu - _lse_rows((f[None, :] - cost_t) / eps))
            # columns are exact after the g-update; only rows carry residual
            row = np.exp((f[:, None] + g[None, :] - cost) / eps).sum(axis=1)
            err = np.abs(row - mu).sum()
            if err < stage_tol:
                break
        if it >= max_iter and err >= stage_tol:
            break
    converged = err < tol

    plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
    value = float(np.sum(cost * plan))
    if not converged:
        logger.info("sinkhorn: no convergence after %d iterations (residual %.3g)", it, err)
    return OtSolution(Coupling(plan, mu, nu), value, it, converged, potentials=(f, g))


def w2_squared(a, b, solver="exact", return_solution=False, **solver_params):
    """Squared 2-Wasserstein distance between two Euclidean spaces.

    Parameters
    ----------
    a, b : MmSpace
        Euclidean spaces with the same ambient dimension.
    solver : {"exact", "sinkhorn"}
    **solver_params
        Forwarded to :func:`sinkhorn` (``epsilon``, ``max_iter``, ``tol``).
    """
    if a.metric != "euclidean" or b.metric != "euclidean":
        raise InputError("w2_squared needs Euclidean coordinates")
    if a.dim != b.dim:
        raise InputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    cost = squared_euclidean_cost(a.points, b.points)
    if solver == "exact":
        sol = exact_ot(cost, a.weights, b.weights)
    elif solver == "sinkhorn":
        sol = sinkhorn(cost, a.weights, b.weights, **solver_params)
    else:
        raise InputError(f"unknown solver {solver!r}")
    return (sol.cost, sol) if return_solution else sol.cost
