"""Sub-embedding robust Wasserstein (SERW) distances.

Two spaces are embedded into a common ``R^d``; the distance is half the
optimal transport cost between the embedded measures after the best
orthogonal alignment of one cloud onto the other.

* :func:`fserw` uses a fixed pair of embeddings.
* :func:`serw_train` refines MDS/LLE base embeddings with residual
  networks trained to *increase* the aligned transport cost while a gated
  penalty keeps their distortion in check (alternating max-min over
  mini-batches).
* :func:`check_bounds` evaluates the two-sided cost relation with the
  Gromov-Wasserstein distance for the distortions actually measured.

The value computed by :func:`serw_train` optimises over a restricted,
parametric family of embeddings, so it under-estimates the supremum over
all low-distortion embeddings.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator

from ._validation import check_matrix, check_random_state
from .align import Rotation, invariant_ot
from .embed import (
    Adam,
    DistortionEstimate,
    ResidualEmbedding,
    distortion_loss_grad,
    estimate_distortion,
    lle_embed,
    mds_embed,
    target_dimension,
)
from .exceptions import DegenerateInputError, InputError, SolverError
from .mmspace import MmSpace, lower_bound_constant, moments, upper_bound_constant
from .ot import Coupling

__all__ = [
    "SerwConfig",
    "SerwResult",
    "BoundsReport",
    "alignment_cost",
    "fserw",
    "base_embedding",
    "resolve_dimension",
    "serw_train",
    "check_bounds",
    "SERW",
    "FixedSERW",
]

logger = logging.getLogger(__name__)

UPPER_SLACK = 1e-7


@dataclass
class SerwConfig:
    """Parameters of a training run.

    ``dim=None`` picks ``target_dimension(n, m)`` capped at
    ``min(n, m) - 1``. ``distortion_weight`` multiplies both distortion
    penalties in the ascent objective.
    """

    epochs: int = 10
    batches: int = 5
    batch_size: int = 64
    seed: int = 0
    lr: float = 1e-3
    hidden: tuple = None
    embed: str = "mds"
    dim: int = None
    k_neighbors: int = None
    distortion_weight: float = 1.0
    max_rounds: int = 50
    tol: float = 1e-9
    n_init: int = 0

    def __post_init__(self):
        for name in ("epochs", "batches", "batch_size"):
            value = getattr(self, name)
            if int(value) != value or value < (0 if name == "epochs" else 1):
                raise InputError(f"{name} must be a positive integer, got {value!r}")
        if self.embed not in ("mds", "lle"):
            raise InputError(f"embed must be 'mds' or 'lle', got {self.embed!r}")
        if self.lr <= 0:
            raise InputError("lr must be positive")


@dataclass
class SerwResult:
    value: float
    rotation: Rotation
    coupling: Coupling
    phi: ResidualEmbedding
    psi: ResidualEmbedding
    distortions: tuple
    objective_trace: list = field(default_factory=list)

    @property
    def x_emb(self):
        return self.phi.transform()

    @property
    def y_emb(self):
        return self.psi.transform()

    def to_dict(self, include_coupling=True):
        out = {
            "value": float(self.value),
            "rotation": self.rotation.matrix.tolist(),
            "coupling": self.coupling.plan.tolist() if include_coupling else None,
            "phi": {"weights": [w.tolist() for w in self.phi.weights]},
            "psi": {"weights": [w.tolist() for w in self.psi.weights]},
            "distortions": [None if d is None else asdict(d) for d in self.distortions],
            "objective_trace": self.objective_trace,
        }
        if not include_coupling:
            del out["coupling"]
        return out


@dataclass
class BoundsReport:
    gw_squared: float
    serw_squared: float
    alpha: float
    beta: float
    m_bar: float
    m_underbar: float
    lower_holds: bool
    upper_holds: bool
    slack_lower: float
    slack_upper: float

    def to_dict(self):
        return asdict(self)


def alignment_cost(x_emb, y_emb, rotation, coupling):
    """``sum_ij pi[i, j] ||x_i - R y_j||^2`` (not halved)."""
    r = rotation.matrix if isinstance(rotation, Rotation) else np.asarray(rotation)
    plan = coupling.plan if isinstance(coupling, Coupling) else np.asarray(coupling)
    x = np.asarray(x_emb, dtype=np.float64)
    y = np.asarray(y_emb, dtype=np.float64) @ r.T
    sq = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T
    return float(np.sum(plan * np.maximum(sq, 0.0)))


def _safe_distortion(cx, emb):
    try:
        return estimate_distortion(cx, cdist(emb, emb))
    except DegenerateInputError as exc:
        logger.info("distortion not estimated: %s", exc)
        return None


def fserw(a, b, phi_emb, psi_emb, max_rounds=50, tol=1e-9, n_init=0, seed=0):
    """Fixed sub-embedding robust Wasserstein distance.

    Parameters
    ----------
    a, b : MmSpace
        The original spaces (weights and distances are used).
    phi_emb : array-like of shape (n, d)
        Image of ``a``'s points.
    psi_emb : array-like of shape (m, d)
        Image of ``b``'s points.

    Returns
    -------
    SerwResult
        ``value`` is half the aligned transport cost. The residual maps in
        the result are identity placeholders around the given embeddings.
    """
    x = check_matrix(phi_emb, "phi_emb")
    y = check_matrix(psi_emb, "psi_emb")
    if x.shape[0] != a.n or y.shape[0] != b.n:
        raise InputError("embedding row counts must match the spaces")
    if x.shape[1] != y.shape[1]:
        raise InputError(f"embedding dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    inv = invariant_ot(x, y, a.weights, b.weights, max_rounds=max_rounds, tol=tol,
                       n_init=n_init, seed=seed)
    return SerwResult(
        value=inv.cost,
        rotation=inv.rotation,
        coupling=inv.coupling,
        phi=ResidualEmbedding.identity(x),
        psi=ResidualEmbedding.identity(y),
        distortions=(_safe_distortion(a.dist, x), _safe_distortion(b.dist, y)),
        objective_trace=[],
    )


def base_embedding(space, d, method="mds", k_neighbors=None):
    if method == "mds":
        return mds_embed(space, d)
    if method == "lle":
        return lle_embed(space, d, k_neighbors=k_neighbors)
    raise InputError(f"unknown embedding {method!r}")


def resolve_dimension(a, b, dim=None):
    """Embedding dimension for a pair of spaces.

    ``dim=None`` gives ``target_dimension(n, m)`` capped at ``min(n, m) - 1``;
    an explicit ``dim`` is checked against the same cap.
    """
    cap = min(a.n, b.n) - 1
    if dim is not None:
        if int(dim) != dim or not 1 <= dim <= cap:
            raise InputError(f"dim must be an integer in [1, {cap}], got {dim!r}")
        return int(dim)
    return max(1, min(target_dimension(a.n, b.n), cap))


def _transport_grads(x, y, r, plan):
    """Gradients of ``1/2 sum pi_ij ||x_i - R y_j||^2`` w.r.t. x and y rows."""
    p = plan.sum(axis=1)
    q = plan.sum(axis=0)
    gx = p[:, None] * x - plan @ (y @ r.T)
    gy = q[:, None] * y - (plan.T @ x) @ r
    return gx, gy


def serw_train(a, b, config=None, **overrides):
    """Alternating max-min estimate of the SERW distance.

    For every epoch and mini-batch: embed a batch from each space, solve
    the invariant OT problem for ``(R, pi)`` with uniform batch weights,
    then take one Adam ascent step on

        1/2 sum_ij pi_ij ||phi(x_i) - R psi(y_j)||^2
            - w * (D_X(phi) + D_Y(psi))

    over the residual network weights. Afterwards the invariant OT problem
    is solved once on the full embedded sets with the true weights.

    With ``epochs=0`` the result equals :func:`fserw` on the base
    embeddings, because the residual networks start at ``g = 0``.
    """
    if config is None:
        config = SerwConfig(**overrides)
    elif overrides:
        config = SerwConfig(**{**asdict(config), **overrides})
    rng = check_random_state(config.seed)
    d = resolve_dimension(a, b, config.dim)
    base_x = base_embedding(a, d, config.embed, config.k_neighbors)
    base_y = base_embedding(b, d, config.embed, config.k_neighbors)
    phi = ResidualEmbedding.init(base_x, config.hidden, seed=rng)
    psi = ResidualEmbedding.init(base_y, config.hidden, seed=rng)
    opt_phi = Adam(phi.weights, lr=config.lr)
    opt_psi = Adam(psi.weights, lr=config.lr)
    cx, cy = a.dist, b.dist
    bx = min(config.batch_size, a.n)
    by = min(config.batch_size, b.n)
    trace = []

    for epoch in range(config.epochs):
        for batch in range(config.batches):
            ix = np.sort(rng.choice(a.n, bx, replace=False))
            iy = np.sort(rng.choice(b.n, by, replace=False))
            xb, cache_x = phi.forward(base_x[ix], cache=True)
            yb, cache_y = psi.forward(base_y[iy], cache=True)
            try:
                inv = invariant_ot(xb, yb, max_rounds=config.max_rounds, tol=config.tol,
                                   n_init=config.n_init, seed=int(rng.integers(2**31)))
            except SolverError as exc:
                raise SolverError(f"inner invariant OT failed at epoch {epoch}, batch {batch}: "
                                  f"{exc}; trace so far: {trace}", exc.iterations) from exc
            r = inv.rotation.matrix
            plan = inv.coupling.plan
            gx, gy = _transport_grads(xb, yb, r, plan)
            dx, gdx, tau_x = distortion_loss_grad(xb, cx[np.ix_(ix, ix)])
            dy, gdy, tau_y = distortion_loss_grad(yb, cy[np.ix_(iy, iy)])
            w = config.distortion_weight
            opt_phi.step(phi.backward(base_x[ix], gx - w * gdx, cache_x), maximize=True)
            opt_psi.step(psi.backward(base_y[iy], gy - w * gdy, cache_y), maximize=True)
            trace.append({
                "epoch": epoch,
                "batch": batch,
                "transport": inv.cost,
                "distortion_x": dx,
                "distortion_y": dy,
                "threshold_x": tau_x,
                "threshold_y": tau_y,
                "objective": inv.cost - w * (dx + dy),
            })
            logger.debug("epoch %d batch %d: transport %.6g, D_X %.6g, D_Y %.6g",
                         epoch, batch, inv.cost, dx, dy)

    x_emb = phi.transform()
    y_emb = psi.transform()
    inv = invariant_ot(x_emb, y_emb, a.weights, b.weights, max_rounds=config.max_rounds,
                       tol=config.tol, n_init=config.n_init, seed=config.seed)
    return SerwResult(
        value=inv.cost,
        rotation=inv.rotation,
        coupling=inv.coupling,
        phi=phi,
        psi=psi,
        distortions=(_safe_distortion(cx, x_emb), _safe_distortion(cy, y_emb)),
        objective_trace=trace,
    )


def check_bounds(a, b, serw, gw):
    """Evaluate both cost relations between SERW and GW.

    The constants use the measured distortions of the embeddings in
    ``serw``: ``alpha = 2 (tau_phi tau_psi - 1)`` and
    ``beta = 2 (tau_phi^2 + tau_psi^2)``. Checked inequalities::

        1/2 GW^2 <= S^2 + alpha * M_bar            (lower)
        S^2 <= beta * GW^2 + 4 beta * M_underbar   (upper)

    Parameters
    ----------
    a, b : MmSpace
        Euclidean spaces (moments need coordinates).
    serw : SerwResult or float
    gw : GwSolution or float
    """
    tau_phi, tau_psi = _taus(serw)
    serw_sq = float(serw.value if isinstance(serw, SerwResult) else serw)
    gw_sq = float(gw.gw_squared if hasattr(gw, "gw_squared") else gw)
    mu, nu = moments(a), moments(b)
    m_bar = lower_bound_constant(mu, nu)
    m_under = upper_bound_constant(mu, nu)
    alpha = 2.0 * (tau_phi * tau_psi - 1.0)
    beta = 2.0 * (tau_phi ** 2 + tau_psi ** 2)
    slack_lower = serw_sq + alpha * m_bar - 0.5 * gw_sq
    slack_upper = beta * gw_sq + 4.0 * beta * m_under - serw_sq
    return BoundsReport(
        gw_squared=gw_sq,
        serw_squared=serw_sq,
        alpha=alpha,
        beta=beta,
        m_bar=m_bar,
        m_underbar=m_under,
        lower_holds=bool(slack_lower >= -UPPER_SLACK),
        upper_holds=bool(slack_upper >= -UPPER_SLACK),
        slack_lower=slack_lower,
        slack_upper=slack_upper,
    )


def _taus(serw):
    if isinstance(serw, SerwResult):
        dists = serw.distortions
        if any(dd is None for dd in dists):
            raise DegenerateInputError("distortions unavailable (duplicate or collapsed points)")
        return dists[0].tau, dists[1].tau
    return 1.0, 1.0


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def _as_space(X, w=None, metric="euclidean"):
    if isinstance(X, MmSpace):
        return X
    if metric == "precomputed":
        return MmSpace(weights=w, metric="precomputed", dist=X)
    return MmSpace(X, w)


class SERW(BaseEstimator):
    """SERW distance between two point clouds, scikit-learn style.

    ``fit(X, Y)`` trains the residual embeddings and stores ``value_``,
    ``rotation_``, ``coupling_``, ``embedding_x_`` and ``embedding_y_``.
    """

    def __init__(self, epochs=10, batches=5, batch_size=64, seed=0, lr=1e-3, hidden=None,
                 embed="mds", dim=None, k_neighbors=None, distortion_weight=1.0, max_rounds=50,
                 tol=1e-9, n_init=0, metric="euclidean"):
        self.epochs = epochs
        self.batches = batches
        self.batch_size = batch_size
        self.seed = seed
        self.lr = lr
        self.hidden = hidden
        self.embed = embed
        self.dim = dim
        self.k_neighbors = k_neighbors
        self.distortion_weight = distortion_weight
        self.max_rounds = max_rounds
        self.tol = tol
        self.n_init = n_init
        self.metric = metric

    def fit(self, X, Y, sample_weight_x=None, sample_weight_y=None):
        params = self.get_params()
        metric = params.pop("metric")
        a = _as_space(X, sample_weight_x, metric)
        b = _as_space(Y, sample_weight_y, metric)
        self.result_ = serw_train(a, b, SerwConfig(**params))
        self.value_ = self.result_.value
        self.rotation_ = self.result_.rotation.matrix
        self.coupling_ = self.result_.coupling.plan
        self.embedding_x_ = self.result_.x_emb
        self.embedding_y_ = self.result_.y_emb
        return self

    def score(self, X, Y):
        return -self.fit(X, Y).value_


class FixedSERW(BaseEstimator):
    """FSERW between two already embedded point sets of equal dimension."""

    def __init__(self, max_rounds=50, tol=1e-9, n_init=0, seed=0):
        self.max_rounds = max_rounds
        self.tol = tol
        self.n_init = n_init
        self.seed = seed

    def fit(self, X_emb, Y_emb, sample_weight_x=None, sample_weight_y=None):
        X_emb = check_matrix(X_emb, "X_emb")
        Y_emb = check_matrix(Y_emb, "Y_emb")
        a = MmSpace(X_emb, sample_weight_x)
        b = MmSpace(Y_emb, sample_weight_y)
        self.result_ = fserw(a, b, X_emb, Y_emb, **self.get_params())
        self.value_ = self.result_.value
        self.rotation_ = self.result_.rotation.matrix
        self.coupling_ = self.result_.coupling.plan
        return self
