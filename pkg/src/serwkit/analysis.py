"""Diagnostics built on the distances: DTW between curves, distance-to-first-frame
curves over sequences of spaces, embedding-dimension sweeps and proximity
ratios between three spaces.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_random_state
from .align import random_orthogonal
from .embed import target_dimension
from .exceptions import DegenerateInputError, InputError, SerwError
from .gromov import gw_solve
from .mmspace import MmSpace
from .ot import w2_squared
from .serw import base_embedding, check_bounds, fserw

__all__ = [
    "DtwResult",
    "CurveReport",
    "ProximityReport",
    "dtw",
    "normalize_curve",
    "sequence_curve",
    "cyclic_sequence",
    "dimension_sweep",
    "proximity_ratios",
]

logger = logging.getLogger(__name__)


@dataclass
class DtwResult:
    distance: float
    path: list


def dtw(a, b, squared=False):
    """Dynamic time warping between two real sequences.

    Local cost is ``|a_i - b_j|`` (``(a_i - b_j)^2`` with ``squared=True``);
    steps are (1, 0), (0, 1) and (1, 1). Among optimal predecessors the
    traceback prefers the diagonal, then (i - 1, j), then (i, j - 1).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise InputError("dtw needs two nonempty sequences")
    cost = np.abs(a[:, None] - b[None, :])
    if squared:
        cost = cost ** 2
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])

    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        options = ((acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j),
                   (acc[i, j - 1], i, j - 1))
        best = min(o[0] for o in options)
        _, i, j = next(o for o in options if o[0] == best)
        path.append((i - 1, j - 1))
    path.reverse()
    return DtwResult(float(acc[n, m]), path)


def normalize_curve(values):
    """Subtract the mean, then divide by the largest absolute value."""
    v = np.asarray(values, dtype=np.float64)
    # prescaling leaves the result unchanged and keeps tiny curves from underflowing
    peak = np.abs(v).max()
    if peak > 0:
        v = v / peak
    v = v - v.mean()
    scale = np.abs(v).max()
    return v / scale if scale > 0 else v


def _frame_distance(first, frame, metric, dim, embed, restarts, seed, emb_first):
    if metric == "gw":
        return gw_solve(first, frame, restarts=restarts, seed=seed).gw_squared
    if metric == "w2":
        return w2_squared(first, frame)
    if metric == "fserw":
        emb = base_embedding(frame, dim, embed)
        return fserw(first, frame, emb_first, emb).value
    raise InputError(f"unknown metric {metric!r}")


def sequence_curve(frames, metric="gw", dim=None, embed="mds", restarts=5, seed=0,
                   normalize=True, n_jobs=1):
    """Distance from the first frame to every frame.

    Parameters
    ----------
    frames : list of MmSpace
    metric : {"gw", "fserw", "w2"}
    dim : int, optional
        Embedding dimension for ``"fserw"``; defaults to the smallest
        ambient dimension among the frames.
    normalize : bool
        Return the centred, max-normalised curve.

    Returns
    -------
    ndarray
        Distances (square roots of the squared values), one per frame.
    """
    if len(frames) < 2:
        raise InputError("sequence_curve needs at least two frames")
    first = frames[0]
    emb_first = None
    if metric == "fserw":
        if dim is None:
            dims = [f.dim for f in frames if f.dim is not None]
            dim = min(dims) if dims else min(f.n for f in frames) - 1
        emb_first = base_embedding(first, dim, embed)

    def one(frame):
        value = _frame_distance(first, frame, metric, dim, embed, restarts, seed, emb_first)
        return np.sqrt(max(value, 0.0))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            values = list(pool.map(one, frames))
    else:
        values = [one(f) for f in frames]
    values = np.array(values)
    return normalize_curve(values) if normalize else values


def cyclic_sequence(n_frames=40, n_points=30, period=20, dim=3, amplitude=0.6, noise=0.0,
                    rigid=True, seed=0):
    """Point cloud deformed periodically, seen under a fresh rigid motion each frame.

    Frame ``t`` stretches a fixed cloud anisotropically by
    ``1 + amplitude * sin(pi t / period)^2`` along one axis and bends it,
    so the shape repeats every ``period`` frames while the coordinates do not.
    """
    rng = check_random_state(seed)
    base = rng.standard_normal((n_points, dim))
    frames = []
    for t in range(n_frames):
        s = np.sin(np.pi * t / period) ** 2
        pts = base.copy()
        pts[:, 0] *= 1.0 + amplitude * s
        pts[:, 1] += 0.5 * amplitude * s * pts[:, 0] ** 2 / (1.0 + np.abs(pts[:, 0]))
        if noise:
            pts = pts + noise * rng.standard_normal(pts.shape)
        if rigid:
            pts = pts @ random_orthogonal(dim, rng).T + rng.standard_normal(dim)
        frames.append(MmSpace(pts))
    return frames


@dataclass
class CurveReport:
    dims: list
    distortion_rates: list
    upper_bounds: list
    serw_ratios: list
    gw_ratios: list
    serw_values: list = field(default_factory=list)
    upper_holds: list = field(default_factory=list)
    lower_holds: list = field(default_factory=list)
    rates_nonincreasing: bool = None

    def to_dict(self):
        return asdict(self)

    def rows(self):
        """One flat row per dimension, for CSV export."""
        out = []
        for k, d in enumerate(self.dims):
            rates = self.distortion_rates[k] or [None, None]
            sr = self.serw_ratios[k] or []
            gr = self.gw_ratios[k] or []
            out.append([d, *rates, self.upper_bounds[k], self.serw_values[k],
                        self.upper_holds[k], self.lower_holds[k], *sr, *gr])
        return out


def _gw(a, b, restarts, seed):
    return gw_solve(a, b, restarts=restarts, seed=seed).gw_squared


def dimension_sweep(a, b, dims, embed="mds", seed=0, c=None, restarts=5):
    """Embed both spaces at each dimension and record distortion, FSERW and bounds.

    Without a third space ``c`` the ratio entries are ``[S_d(a, b) / GW(a, b)]``
    and ``[1.0]``; with ``c`` they hold the two proximity ratios of each
    family (see :func:`proximity_ratios`). A dimension that fails leaves
    ``None`` entries and the sweep moves on.
    """
    gw_ab = _gw(a, b, restarts, seed)
    gw_pair = None
    if c is not None:
        gw_bc = _gw(b, c, restarts, seed)
        gw_ac = _gw(a, c, restarts, seed)
        gw_pair = _ratios(np.sqrt(gw_ab), np.sqrt(gw_ac), np.sqrt(gw_bc))
    report = CurveReport([], [], [], [], [])
    for d in dims:
        report.dims.append(int(d))
        try:
            ea = base_embedding(a, d, embed)
            eb = base_embedding(b, d, embed)
            res = fserw(a, b, ea, eb, seed=seed)
            bounds = check_bounds(a, b, res, gw_ab)
            rates = [res.distortions[0].tau, res.distortions[1].tau]
            if c is not None:
                ec = base_embedding(c, d, embed)
                s_bc = np.sqrt(fserw(b, c, eb, ec, seed=seed).value)
                s_ac = np.sqrt(fserw(a, c, ea, ec, seed=seed).value)
                serw_ratio = _ratios(np.sqrt(res.value), s_ac, s_bc)
                gw_ratio = gw_pair
            else:
                serw_ratio = [np.sqrt(res.value) / np.sqrt(gw_ab)] if gw_ab > 0 else [None]
                gw_ratio = [1.0]
        except (SerwError, np.linalg.LinAlgError) as exc:
            logger.warning("dimension_sweep: d=%s failed: %s", d, exc)
            for lst in (report.distortion_rates, report.upper_bounds, report.serw_ratios,
                        report.gw_ratios, report.serw_values, report.upper_holds,
                        report.lower_holds):
                lst.append(None)
            continue
        report.distortion_rates.append(rates)
        report.upper_bounds.append(bounds.beta * gw_ab + 4.0 * bounds.beta * bounds.m_underbar)
        report.serw_ratios.append(serw_ratio)
        report.gw_ratios.append(gw_ratio)
        report.serw_values.append(res.value)
        report.upper_holds.append(bounds.upper_holds)
        report.lower_holds.append(bounds.lower_holds)
    worst = [max(r) for r in report.distortion_rates if r is not None]
    report.rates_nonincreasing = bool(np.all(np.diff(worst) <= 1e-9)) if worst else None
    return report


def _ratios(d_xy, d_xz, d_yz):
    if d_yz <= 0:
        raise DegenerateInputError("zero denominator: the second and third spaces are at distance 0")
    return [float(d_xy / d_yz), float(d_xz / d_yz)]


@dataclass
class ProximityReport:
    gw_ratios: list
    serw_ratios: list
    order_preserved: bool
    dim: int

    def to_dict(self):
        return asdict(self)


def proximity_ratios(x, y, z, dim=None, embed="mds", restarts=5, seed=0):
    """Compare the ordering of GW and FSERW distances among three spaces.

    Returns the ratios ``(D(X, Y) / D(Y, Z), D(X, Z) / D(Y, Z))`` for both
    distances and whether the two families order them the same way.
    """
    if dim is None:
        n = min(x.n, y.n, z.n)
        dim = max(1, min(target_dimension(n, n) if n >= 2 else 1, n - 1))
    gw = [np.sqrt(_gw(p, q, restarts, seed)) for p, q in ((x, y), (x, z), (y, z))]
    ex, ey, ez = (base_embedding(s, dim, embed) for s in (x, y, z))
    sw = [np.sqrt(fserw(p, q, ep, eq, seed=seed).value)
          for (p, ep), (q, eq) in (((x, ex), (y, ey)), ((x, ex), (z, ez)), ((y, ey), (z, ez)))]
    gw_r = _ratios(*gw)
    sw_r = _ratios(*sw)
    preserved = bool(np.sign(gw_r[0] - gw_r[1]) == np.sign(sw_r[0] - sw_r[1]))
    return ProximityReport(gw_r, sw_r, preserved, int(dim))
