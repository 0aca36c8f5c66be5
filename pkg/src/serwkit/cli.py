"""Command-line interface.

Usage::

    serwkit <command> [options]

Commands and the keys of the JSON report each one writes to ``--out``
(no other keys are emitted):

========  ==================================================================
w2        command, solver, epsilon, n, m, value, iterations, converged,
          coupling
gw        command, restarts, seed, n, m, value, flb, restarts_used,
          restart_values, coupling
fserw     command, embed, dim, seed, value, rotation, distortions, coupling
serw      command, config, value, rotation, coupling, phi, psi,
          distortions, objective_trace
bounds    command, gw_squared, serw_squared, alpha, beta, m_bar,
          m_underbar, lower_holds, upper_holds, slack_lower, slack_upper
embed     command, embed, dim, n, distortion, embedding
dtw       command, distance, path
curve     command, metric, curve, raw, table
sweep     command, dims, distortion_rates, upper_bounds, serw_ratios,
          gw_ratios, serw_values, upper_holds, lower_holds,
          rates_nonincreasing, table
ratios    command, gw_ratios, serw_ratios, order_preserved, dim
========  ==================================================================

Matrices that can be large (couplings, embeddings, curve and sweep tables)
go to CSV files next to the report, named after it; the report stores the
file name. Without ``--out`` only the summary line is printed and those
keys are ``null``.

Input CSV files hold one point per row, comma-separated decimals and no
header. A weights file holds one decimal per line. ``--config file.json``
supplies defaults for any option (keys are the option names with
underscores); flags on the command line take precedence.

Exit status: 0 on success, 1 on bad input, 2 when a solver fails.
The ``SERW_LOG`` environment variable (error, info or debug) sets the log
level.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from . import __version__
from .analysis import (
    cyclic_sequence,
    dimension_sweep,
    dtw,
    normalize_curve,
    proximity_ratios,
    sequence_curve,
)
from .embed import estimate_distortion
from .exceptions import InputError, SerwError, SolverError
from .gromov import flb, gw_solve
from .mmspace import MmSpace
from .ot import w2_squared
from .serw import SerwConfig, base_embedding, check_bounds, fserw, resolve_dimension, serw_train

__all__ = ["main", "run", "load_matrix", "load_weights", "load_space", "emit_report",
           "write_matrix", "PipelineConfig", "REPORT_FIELDS"]

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-6

REPORT_FIELDS = {
    "w2": ["command", "solver", "epsilon", "n", "m", "value", "iterations", "converged",
           "coupling"],
    "gw": ["command", "restarts", "seed", "n", "m", "value", "flb", "restarts_used",
           "restart_values", "coupling"],
    "fserw": ["command", "embed", "dim", "seed", "value", "rotation", "distortions", "coupling"],
    "serw": ["command", "config", "value", "rotation", "coupling", "phi", "psi", "distortions",
             "objective_trace"],
    "bounds": ["command", "gw_squared", "serw_squared", "alpha", "beta", "m_bar", "m_underbar",
               "lower_holds", "upper_holds", "slack_lower", "slack_upper"],
    "embed": ["command", "embed", "dim", "n", "distortion", "embedding"],
    "dtw": ["command", "distance", "path"],
    "curve": ["command", "metric", "curve", "raw", "table"],
    "sweep": ["command", "dims", "distortion_rates", "upper_bounds", "serw_ratios", "gw_ratios",
              "serw_values", "upper_holds", "lower_holds", "rates_nonincreasing", "table"],
    "ratios": ["command", "gw_ratios", "serw_ratios", "order_preserved", "dim"],
}


# ---------------------------------------------------------------------------
# Input and output
# ---------------------------------------------------------------------------


def load_matrix(path):
    """Read a headerless numeric CSV into a 2-D float array.

    Raises ``InputError`` naming the line (and column) of the first
    ragged or non-numeric row, and for missing or empty files.
    """
    path = Path(path)
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot open ({exc.strerror})") from exc
    rows = []
    width = None
    with handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise InputError(f"{path}: line {lineno} has {len(row)} columns, expected {width}")
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise InputError(f"{path}: line {lineno}, column {col}: "
                                     f"not a number: {cell.strip()!r}") from None
                if not math.isfinite(values[-1]):
                    raise InputError(f"{path}: line {lineno}, column {col}: non-finite value")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data")
    return np.array(rows, dtype=np.float64)


def load_weights(path, n):
    """Read one weight per line; renormalise with a warning if the sum is off."""
    w = load_matrix(path)
    if w.shape[1] != 1:
        raise InputError(f"{path}: weights file must have one value per line")
    w = w[:, 0]
    if w.shape[0] != n:
        raise InputError(f"{path}: {w.shape[0]} weights for {n} points")
    if np.any(w < 0):
        raise InputError(f"{path}: negative weight on line {int(np.argmax(w < 0)) + 1}")
    total = w.sum()
    if total <= 0:
        raise InputError(f"{path}: weights sum to zero")
    # rounded so a decimal sum such as 0.999999 counts as off by the full tolerance
    if round(abs(total - 1.0), 12) >= WEIGHT_TOL:
        warnings.warn(f"{path}: weights sum to {total!r}; renormalising", stacklevel=2)
    return w / total


def load_space(path, weights_path=None):
    points = load_matrix(path)
    weights = None if weights_path is None else load_weights(weights_path, points.shape[0])
    return MmSpace(points, weights)


def _format_float(x):
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _encode(obj, indent=0):
    pad = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v) for v in obj) + "]"
        return ("[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n"
                + "  " * indent + "]")
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(report):
    """JSON text with floats at 17 significant digits, keys in insertion order."""
    return _encode(report) + "\n"


def emit_report(report, path):
    Path(path).write_text(dumps(report), encoding="utf-8")


def write_matrix(path, matrix):
    """Dense CSV, one row per line, 17 significant digits."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in matrix:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (format(v, ".17g") if isinstance(v, float) else v)
                             for v in row])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Validated options of one invocation."""

    command: str
    out: str = None
    params: dict = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, ns):
        params = {k: v for k, v in vars(ns).items() if k not in ("command", "out", "config")}
        for name in ("epochs", "restarts", "threads"):
            if name in params and params[name] is not None and params[name] < 0:
                raise InputError(f"--{name} must be nonnegative")
        if params.get("restarts") == 0:
            raise InputError("--restarts must be at least 1")
        if params.get("threads") == 0:
            raise InputError("--threads must be at least 1")
        if params.get("epsilon") is not None and params["epsilon"] <= 0:
            raise InputError("--epsilon must be positive")
        return cls(ns.command, ns.out, params)

    def serw_config(self):
        p = self.params
        return SerwConfig(epochs=p["epochs"], batches=p["batches"], batch_size=p["batch_size"],
                          seed=p["seed"], lr=p["lr"], embed=p["embed"], dim=p["dim"],
                          k_neighbors=p["k_neighbors"])


def _add_common(p, spaces="ab"):
    for s in spaces:
        p.add_argument(f"--{s}", required=True, metavar="CSV", help=f"points of space {s}")
        p.add_argument(f"--weights-{s}", dest=f"weights_{s}", metavar="TXT", default=None,
                       help=f"weights of space {s}, one per line (default: uniform)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for parallel stages (default: %(default)s)")
    p.add_argument("--out", default=None, metavar="JSON", help="report path")
    p.add_argument("--config", default=None, metavar="JSON",
                   help="JSON file of option defaults; command-line flags win")


def _add_embed(p):
    p.add_argument("--embed", choices=("mds", "lle"), default="mds",
                   help="base embedding (default: %(default)s)")
    p.add_argument("--dim", type=int, default=None,
                   help="embedding dimension (default: target dimension, capped at min(n, m) - 1)")
    p.add_argument("--k-neighbors", dest="k_neighbors", type=int, default=None,
                   help="LLE neighbourhood size (default: min(10, n - 1))")


def _add_train(p):
    d = SerwConfig()
    p.add_argument("--epochs", type=int, default=d.epochs, help="training epochs (default: %(default)s)")
    p.add_argument("--batches", type=int, default=d.batches,
                   help="mini-batches per epoch (default: %(default)s)")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=d.batch_size,
                   help="points per mini-batch (default: %(default)s)")
    p.add_argument("--lr", type=float, default=d.lr, help="Adam step size (default: %(default)s)")


def _add_restarts(p):
    p.add_argument("--restarts", type=int, default=5,
                   help="Gromov-Wasserstein restarts (default: %(default)s)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="serwkit",
        description="Optimal transport, Gromov-Wasserstein and SERW distances between point clouds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("w2", help="squared 2-Wasserstein distance")
    _add_common(p)
    p.add_argument("--solver", choices=("exact", "sinkhorn"), default="exact",
                   help="transport solver (default: %(default)s)")
    p.add_argument("--epsilon", type=float, default=None,
                   help="Sinkhorn regularisation (default: 1e-2 times the largest cost)")

    p = sub.add_parser("gw", help="squared Gromov-Wasserstein distance")
    _add_common(p)
    _add_restarts(p)

    p = sub.add_parser("fserw", help="SERW with the fixed base embeddings")
    _add_common(p)
    _add_embed(p)

    p = sub.add_parser("serw", help="SERW with trained residual embeddings")
    _add_common(p)
    _add_embed(p)
    _add_train(p)

    p = sub.add_parser("bounds", help="check the SERW / GW cost relations")
    _add_common(p)
    _add_embed(p)
    _add_train(p)
    _add_restarts(p)

    p = sub.add_parser("embed", help="base embedding of one space")
    _add_common(p, spaces="a")
    _add_embed(p)

    p = sub.add_parser("dtw", help="dynamic time warping between two sequences")
    p.add_argument("--a", required=True, metavar="CSV", help="first sequence, one value per line")
    p.add_argument("--b", required=True, metavar="CSV", help="second sequence")
    p.add_argument("--squared", action="store_true", help="squared local cost")
    p.add_argument("--out", default=None, metavar="JSON", help="report path")
    p.add_argument("--config", default=None, metavar="JSON", help="JSON file of option defaults")

    p = sub.add_parser("curve", help="distance from the first frame of a sequence")
    p.add_argument("--frames", nargs="+", metavar="CSV", default=None, help="frame point files")
    p.add_argument("--synthetic", type=int, default=None, metavar="N",
                   help="use N frames of the built-in cyclic sequence instead of files")
    p.add_argument("--period", type=int, default=20, help="synthetic period (default: %(default)s)")
    p.add_argument("--points", type=int, default=20,
                   help="synthetic points per frame (default: %(default)s)")
    p.add_argument("--noise", type=float, default=0.0, help="synthetic noise (default: %(default)s)")
    p.add_argument("--metric", choices=("gw", "fserw", "w2"), default="gw",
                   help="frame distance (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default: %(default)s)")
    p.add_argument("--out", default=None, metavar="JSON", help="report path")
    p.add_argument("--config", default=None, metavar="JSON", help="JSON file of option defaults")
    _add_embed(p)
    _add_restarts(p)

    p = sub.add_parser("sweep", help="distortion and bounds across embedding dimensions")
    _add_common(p)
    p.add_argument("--c", default=None, metavar="CSV", help="optional third space for ratios")
    p.add_argument("--weights-c", dest="weights_c", default=None, metavar="TXT")
    p.add_argument("--dims", required=True, help="comma-separated dimensions, e.g. 1,2,3")
    p.add_argument("--embed", choices=("mds", "lle"), default="mds",
                   help="base embedding (default: %(default)s)")
    _add_restarts(p)

    p = sub.add_parser("ratios", help="proximity ratios between three spaces")
    _add_common(p, spaces="abc")
    _add_embed(p)
    _add_restarts(p)
    return parser


def _parse(parser, argv):
    ns = parser.parse_args(argv)
    if getattr(ns, "config", None) is None:
        return ns
    try:
        cfg = json.loads(Path(ns.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"{ns.config}: cannot open ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{ns.config}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise InputError(f"{ns.config}: expected a JSON object")
    known = set(vars(ns)) - {"command", "config"}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise InputError(f"{ns.config}: unknown keys {unknown} for '{ns.command}'")
    subparser = parser._subparsers._group_actions[0].choices[ns.command]
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _side_path(out, suffix):
    if out is None:
        return None, None
    out = Path(out)
    side = out.with_name(f"{out.stem}.{suffix}.csv")
    return side, side.name


def _coupling_ref(out, plan):
    path, name = _side_path(out, "coupling")
    if path is not None:
        write_matrix(path, plan)
    return name


def _spaces(cfg, names="ab"):
    p = cfg.params
    return [load_space(p[s], p.get(f"weights_{s}")) for s in names]


def _distortion_dict(d):
    return None if d is None else {"kappa": d.kappa, "tau": d.tau, "ratio_min": d.ratio_min,
                                   "ratio_max": d.ratio_max}


def cmd_w2(cfg):
    a, b = _spaces(cfg)
    p = cfg.params
    params = {} if p["epsilon"] is None else {"epsilon": p["epsilon"]}
    _, sol = w2_squared(a, b, solver=p["solver"], return_solution=True, **params)
    report = {"command": "w2", "solver": p["solver"], "epsilon": p["epsilon"], "n": a.n, "m": b.n,
              "value": sol.cost, "iterations": sol.iterations, "converged": sol.converged,
              "coupling": _coupling_ref(cfg.out, sol.plan)}
    return report, f"w2: squared distance {sol.cost:.10g} ({p['solver']}, {sol.iterations} iterations)"


def cmd_gw(cfg):
    a, b = _spaces(cfg)
    p = cfg.params
    sol = gw_solve(a, b, restarts=p["restarts"], seed=p["seed"], n_jobs=p["threads"])
    lower = flb(a, b)
    report = {"command": "gw", "restarts": p["restarts"], "seed": p["seed"], "n": a.n, "m": b.n,
              "value": sol.gw_squared, "flb": lower, "restarts_used": sol.restarts_used,
              "restart_values": sol.restart_values, "coupling": _coupling_ref(cfg.out, sol.plan)}
    return report, f"gw: squared distance {sol.gw_squared:.10g} (lower bound {lower:.10g})"


def _fixed(cfg, a, b):
    p = cfg.params
    d = resolve_dimension(a, b, p["dim"])
    ea = base_embedding(a, d, p["embed"], p["k_neighbors"])
    eb = base_embedding(b, d, p["embed"], p["k_neighbors"])
    return d, fserw(a, b, ea, eb, seed=p["seed"])


def cmd_fserw(cfg):
    a, b = _spaces(cfg)
    p = cfg.params
    d, res = _fixed(cfg, a, b)
    report = {"command": "fserw", "embed": p["embed"], "dim": d, "seed": p["seed"],
              "value": res.value, "rotation": res.rotation.matrix,
              "distortions": [_distortion_dict(x) for x in res.distortions],
              "coupling": _coupling_ref(cfg.out, res.coupling.plan)}
    return report, f"fserw: value {res.value:.10g} (d = {d}, {p['embed']})"


def cmd_serw(cfg):
    a, b = _spaces(cfg)
    config = cfg.serw_config()
    res = serw_train(a, b, config)
    d = res.phi.base.shape[1]
    body = res.to_dict(include_coupling=False)
    report = {"command": "serw",
              "config": {"epochs": config.epochs, "batches": config.batches,
                         "batch_size": config.batch_size, "seed": config.seed, "lr": config.lr,
                         "embed": config.embed, "dim": d, "k_neighbors": config.k_neighbors},
              "value": body["value"], "rotation": body["rotation"],
              "coupling": _coupling_ref(cfg.out, res.coupling.plan),
              "phi": body["phi"], "psi": body["psi"],
              "distortions": [_distortion_dict(x) for x in res.distortions],
              "objective_trace": body["objective_trace"]}
    return report, f"serw: value {res.value:.10g} (d = {d}, {config.epochs} epochs)"


def cmd_bounds(cfg):
    a, b = _spaces(cfg)
    p = cfg.params
    res = serw_train(a, b, cfg.serw_config())
    gw = gw_solve(a, b, restarts=p["restarts"], seed=p["seed"], n_jobs=p["threads"])
    rep = check_bounds(a, b, res, gw)
    report = {"command": "bounds", **rep.to_dict()}
    return report, (f"bounds: S^2 = {rep.serw_squared:.6g}, GW^2 = {rep.gw_squared:.6g}, "
                    f"lower {'holds' if rep.lower_holds else 'fails'}, "
                    f"upper {'holds' if rep.upper_holds else 'fails'}")


def cmd_embed(cfg):
    (a,) = _spaces(cfg, "a")
    p = cfg.params
    d = p["dim"] if p["dim"] is not None else min(a.dim, a.n - 1)
    emb = base_embedding(a, d, p["embed"], p["k_neighbors"])
    try:
        dist = _distortion_dict(estimate_distortion(a.dist, cdist(emb, emb)))
    except SerwError:
        dist = None
    path, name = _side_path(cfg.out, "embedding")
    if path is not None:
        write_matrix(path, emb)
    report = {"command": "embed", "embed": p["embed"], "dim": d, "n": a.n, "distortion": dist,
              "embedding": name}
    tau = "n/a" if dist is None else f"{dist['tau']:.6g}"
    return report, f"embed: {a.n} points into R^{d} ({p['embed']}), distortion {tau}"


def _sequence(path):
    m = load_matrix(path)
    if min(m.shape) != 1:
        raise InputError(f"{path}: a sequence must be a single row or column")
    return m.ravel()


def cmd_dtw(cfg):
    p = cfg.params
    res = dtw(_sequence(p["a"]), _sequence(p["b"]), squared=p["squared"])
    report = {"command": "dtw", "distance": res.distance, "path": [list(ij) for ij in res.path]}
    return report, f"dtw: distance {res.distance:.10g}, path length {len(res.path)}"


def cmd_curve(cfg):
    p = cfg.params
    if (p["frames"] is None) == (p["synthetic"] is None):
        raise InputError("give exactly one of --frames and --synthetic")
    if p["frames"] is not None:
        frames = [load_space(f) for f in p["frames"]]
    else:
        frames = cyclic_sequence(n_frames=p["synthetic"], n_points=p["points"], period=p["period"],
                                 noise=p["noise"], seed=p["seed"])
    raw = sequence_curve(frames, p["metric"], dim=p["dim"], embed=p["embed"],
                         restarts=p["restarts"], seed=p["seed"], normalize=False,
                         n_jobs=p["threads"])
    curve = normalize_curve(raw)
    path, name = _side_path(cfg.out, "curve")
    if path is not None:
        _write_rows(path, ["frame", "distance", "normalized"],
                    [[t, float(r), float(c)] for t, (r, c) in enumerate(zip(raw, curve))])
    report = {"command": "curve", "metric": p["metric"], "curve": curve, "raw": raw, "table": name}
    return report, f"curve: {len(frames)} frames, {p['metric']}, max raw distance {raw.max():.6g}"


def _parse_dims(text):
    try:
        dims = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"--dims: expected comma-separated integers, got {text!r}") from None
    if not dims or min(dims) < 1:
        raise InputError("--dims: need at least one positive dimension")
    return dims


def cmd_sweep(cfg):
    p = cfg.params
    a, b = _spaces(cfg)
    c = load_space(p["c"], p["weights_c"]) if p["c"] is not None else None
    rep = dimension_sweep(a, b, _parse_dims(p["dims"]), embed=p["embed"], seed=p["seed"], c=c,
                          restarts=p["restarts"])
    path, name = _side_path(cfg.out, "sweep")
    if path is not None:
        width = 2 if c is not None else 1
        header = (["dim", "tau_a", "tau_b", "upper_bound", "serw_value", "upper_holds",
                   "lower_holds"] + [f"serw_ratio_{k}" for k in range(width)]
                  + [f"gw_ratio_{k}" for k in range(width)])
        _write_rows(path, header, rep.rows())
    report = {"command": "sweep", **rep.to_dict(), "table": name}
    ok = sum(1 for h in rep.upper_holds if h)
    return report, f"sweep: {len(rep.dims)} dimensions, upper bound holds on {ok}"


def cmd_ratios(cfg):
    p = cfg.params
    x, y, z = _spaces(cfg, "abc")
    rep = proximity_ratios(x, y, z, dim=p["dim"], embed=p["embed"], restarts=p["restarts"],
                           seed=p["seed"])
    report = {"command": "ratios", **rep.to_dict()}
    return report, (f"ratios: GW {rep.gw_ratios}, SERW {rep.serw_ratios}, "
                    f"order {'preserved' if rep.order_preserved else 'not preserved'}")


COMMANDS = {"w2": cmd_w2, "gw": cmd_gw, "fserw": cmd_fserw, "serw": cmd_serw,
            "bounds": cmd_bounds, "embed": cmd_embed, "dtw": cmd_dtw, "curve": cmd_curve,
            "sweep": cmd_sweep, "ratios": cmd_ratios}


def _setup_logging():
    level = os.environ.get("SERW_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        print(f"serwkit: ignoring SERW_LOG={level!r} (use error, info or debug)", file=sys.stderr)
        level = "error"
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    logging.getLogger("serwkit").setLevel(levels[level])


def run(argv=None):
    """Run one command and return its exit status."""
    parser = build_parser()
    try:
        try:
            ns = _parse(parser, argv)
        except SystemExit as exc:
            # argparse exits 2 on usage errors; those are bad input here
            return 0 if exc.code in (0, None) else 1
        cfg = PipelineConfig.from_namespace(ns)
        report, summary = COMMANDS[cfg.command](cfg)
        if list(report) != REPORT_FIELDS[cfg.command]:
            raise RuntimeError(f"report keys drifted: {list(report)}")
        if cfg.out is not None:
            emit_report(report, cfg.out)
    except SolverError as exc:
        print(f"serwkit: solver failure: {exc}", file=sys.stderr)
        return 2
    except (InputError, ValueError, OSError) as exc:
        print(f"serwkit: error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


def main(argv=None):
    _setup_logging()
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
