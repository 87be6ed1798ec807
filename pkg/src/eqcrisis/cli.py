"""Command-line front end.

    python -m eqcrisis --command fiber --input economy.json --out results/

Exit status is 0 on success, 1 for bad input and 2 for a numerical
failure, whose error is written to ``error.json`` in the output directory.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .degree import degree_of_natural_projection, degree
from .economy import Economy, cubic_market, fold_market
from .envelope import discriminant, discriminant_csv, family_from_dict
from .errors import EqCrisisError, InputError
from .intrinsic import CERTIFY_REL, RANK_TOL, Verdict, certify_crisis
from .lifting import EconomyPath, lift_path
from .manifold import enumerate_fiber, locate_critical_equilibrium

COMMANDS = ("analyze", "fiber", "sweep", "envelope", "degree", "lift")
OUTPUT_NAMES = {
    "analyze": "certificates.json",
    "fiber": "fiber.csv",
    "sweep": "sweep.csv",
    "envelope": "discriminant.csv",
    "degree": "degree.json",
    "lift": "lift.csv",
}
SWEEP_FIBER_GRID = 60


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser():
    ap = _Parser(prog="eqcrisis", description=__doc__.splitlines()[0])
    ap.add_argument("--command", required=True, choices=COMMANDS)
    ap.add_argument("--input", required=True, help="economy, family or lift JSON file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--grid", type=int, default=None,
                    help="starts per price axis; cells per axis for sweep")
    ap.add_argument("--box", default=None,
                    help="comma-separated bounds: price box, sweep range or x0,x1,y0,y1,z0,z1")
    ap.add_argument("--tol-rank", type=float, default=RANK_TOL)
    ap.add_argument("--tol-certify", type=float, default=CERTIFY_REL)
    ap.add_argument("--coordinate", type=int, default=None,
                    help="endowment coordinate moved when locating critical economies")
    ap.add_argument("--sweep-coords", default=None,
                    help="two flat endowment indices for sweep, e.g. 1,2")
    return ap


def _header(args):
    return [f"eqcrisis {__version__}", f"command={args.command} seed={args.seed}",
            f"tol_rank={args.tol_rank:g} tol_certify={args.tol_certify:g}"]


def _floats(text, what):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise InputError(f"--box for {what} must be comma-separated numbers") from exc
    return vals


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc


def market_from_dict(d):
    if not isinstance(d, dict):
        raise InputError("economy definition must be a JSON object")
    kind = d.get("kind")
    if kind == "cubic":
        return cubic_market(float(d.get("omega2", 1.0)), float(d.get("omega1", 1.0)))
    if kind == "fold":
        return fold_market(float(d.get("omega", 0.0)))
    return Economy.from_dict(d)


def _price_box(args, market):
    if args.box is None:
        return None
    b = _floats(args.box, "prices")
    if len(b) != 2:
        raise InputError("--box for prices must be lo,hi")
    return tuple(b)


def _write_json(path, payload, args):
    payload = {"_header": _header(args), **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def cmd_analyze(args, out):
    market = market_from_dict(_load_json(args.input))
    fib = enumerate_fiber(market, box=_price_box(args, market), grid=args.grid)
    certs = []
    for eq in fib.equilibria:
        c = certify_crisis(eq, rank_tol=args.tol_rank, certify_rel=args.tol_certify, seed=args.seed)
        certs.append({"p": eq.p.tolist(), **c.to_dict()})
    # critical economies reachable by moving one endowment coordinate, seeded
    # between consecutive equilibria and at each equilibrium
    seeds = _critical_seeds(fib) + [eq.p for eq in fib.equilibria]
    found = []
    for s in seeds:
        try:
            ce = locate_critical_equilibrium(market, s, coordinate=args.coordinate)
        except (EqCrisisError, np.linalg.LinAlgError):
            continue
        if any(np.allclose(ce.p, f[0].p, rtol=1e-6) and np.allclose(ce.market.omega, f[0].market.omega, rtol=1e-6)
               for f in found):
            continue
        c = certify_crisis(ce, rank_tol=args.tol_rank, certify_rel=args.tol_certify, seed=args.seed)
        found.append((ce, c))
    critical = [{"p": ce.p.tolist(), "omega": ce.market.omega.tolist(), **c.to_dict()}
                for ce, c in found]
    _write_json(out / OUTPUT_NAMES["analyze"],
                {"omega": market.omega.tolist(), "equilibria": certs, "critical": critical}, args)


def cmd_fiber(args, out):
    market = market_from_dict(_load_json(args.input))
    fib = enumerate_fiber(market, box=_price_box(args, market), grid=args.grid)
    with open(out / OUTPUT_NAMES["fiber"], "w") as fh:
        fib.to_csv(fh, _header(args))


def _critical_seeds(fib):
    """Starting prices for critical-point searches: between neighbouring
    equilibria for one free price, at the equilibria otherwise."""
    P = [eq.p for eq in fib.equilibria]
    if fib.economy.n_free == 1 and len(P) > 1:
        return [0.5 * (a + b) for a, b in zip(P[:-1], P[1:])]
    return P


def _sweep_cell(a, b, lo, hi, corners, rank_tol, certify_rel, seed):
    """Certified crisis economy inside the cell spanned by the corner fibres, or None."""
    richest = max(corners.values(), key=len)
    for s in _critical_seeds(richest):
        for coord in (b, a):
            try:
                ce = locate_critical_equilibrium(richest.economy, s, coordinate=coord)
            except (EqCrisisError, np.linalg.LinAlgError):
                continue
            w = ce.market.omega[[a, b]]
            if np.all(w >= lo - 1e-12) and np.all(w <= hi + 1e-12):
                c = certify_crisis(ce, rank_tol=rank_tol, certify_rel=certify_rel, seed=seed)
                if c.verdict == Verdict.UNAVOIDABLE:
                    return ce
    return None


def cmd_sweep(args, out):
    market = market_from_dict(_load_json(args.input))
    n_om = market.omega.size
    if args.sweep_coords is not None:
        try:
            a, b = (int(x) for x in args.sweep_coords.split(","))
        except ValueError as exc:
            raise InputError("--sweep-coords must be two integers") from exc
    elif isinstance(market, Economy):
        a, b = market.l - 1, (market.m - 1) * market.l
    else:
        a, b = 0, min(1, n_om - 1)
    if not (0 <= a < n_om and 0 <= b < n_om and a != b):
        raise InputError("sweep coordinates out of range")
    lo, hi = (0.6, 0.9) if args.box is None else _floats(args.box, "sweep")[:2]
    if not 0 < lo < hi:
        raise InputError("sweep range must satisfy 0 < lo < hi")
    g = 50 if args.grid is None else args.grid
    nodes = np.linspace(lo, hi, g + 1)
    fibers = {}
    for i, wa in enumerate(nodes):
        for j, wb in enumerate(nodes):
            om = market.omega.copy()
            om[a], om[b] = wa, wb
            fibers[i, j] = enumerate_fiber(market.with_omega(om), grid=SWEEP_FIBER_GRID)
    rows = []
    for i in range(g):
        for j in range(g):
            corners = {(ca, cb): fibers[i + ca, j + cb] for ca in (0, 1) for cb in (0, 1)}
            counts = [len(f) for f in corners.values()]
            crisis = 0
            if len(set(counts)) > 1:
                cell_lo = np.array([nodes[i], nodes[j]])
                cell_hi = np.array([nodes[i + 1], nodes[j + 1]])
                ce = _sweep_cell(a, b, cell_lo, cell_hi, corners,
                                 args.tol_rank, args.tol_certify, args.seed)
                crisis = int(ce is not None)
            rows.append((nodes[i], nodes[i + 1], nodes[j], nodes[j + 1], counts[0], crisis))
    with open(out / OUTPUT_NAMES["sweep"], "w") as fh:
        for line in _header(args) + [f"coordinates={a},{b}"]:
            fh.write(f"# {line}\n")
        fh.write("omega_a_lo,omega_a_hi,omega_b_lo,omega_b_hi,n_equilibria,crisis\n")
        for r in rows:
            fh.write(f"{r[0]:.10g},{r[1]:.10g},{r[2]:.10g},{r[3]:.10g},{r[4]},{r[5]}\n")


def cmd_envelope(args, out):
    d = _load_json(args.input)
    fam = family_from_dict(d)
    if args.box is not None:
        box = np.array(_floats(args.box, "envelope")).reshape(-1, 2)
    elif "box" in d:
        box = np.asarray(d["box"], dtype=float)
    else:
        raise InputError("envelope needs a box: --box x0,x1,y0,y1,z0,z1 or 'box' in the JSON")
    if box.shape != (3, 2):
        raise InputError("envelope box needs six numbers")
    pts = discriminant(fam, box, grid=12 if args.grid is None else args.grid)
    with open(out / OUTPUT_NAMES["envelope"], "w") as fh:
        discriminant_csv(pts, fh, _header(args))


def cmd_degree(args, out):
    market = market_from_dict(_load_json(args.input))
    box = _price_box(args, market)
    if box is None:
        box = market.default_box
    B = np.tile(np.asarray(box, dtype=float), (market.n_free, 1))
    res = degree(lambda P: -market.reduced_batch(P), B,
                 jac=lambda P: -market.jacobian_batch(P), grid=args.grid, seed=args.seed)
    payload = res.to_dict()
    try:
        payload["natural_projection"] = degree_of_natural_projection(market, box=box, grid=args.grid)
    except EqCrisisError as exc:
        payload["natural_projection"] = None
        payload["natural_projection_error"] = f"{type(exc).__name__}: {exc}"
    _write_json(out / OUTPUT_NAMES["degree"], payload, args)


def cmd_lift(args, out):
    d = _load_json(args.input)
    try:
        start = market_from_dict(d["start"])
        end = market_from_dict(d["end"])
        p_start = d["p_start"]
        p_target = d.get("p_target")
        samples = int(d.get("samples", 100))
        via = tuple(np.asarray(w, dtype=float) for w in d.get("via", ()))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed lift definition: {exc}") from exc
    res = lift_path(EconomyPath(start, end, samples, via), p_start, p_target)
    extra = [f"completed={res.completed} crisis_hit={res.crisis_hit} "
             f"endpoint_distance={res.endpoint_distance}"]
    with open(out / OUTPUT_NAMES["lift"], "w") as fh:
        res.to_csv(fh, _header(args) + extra)


HANDLERS = {
    "analyze": cmd_analyze,
    "fiber": cmd_fiber,
    "sweep": cmd_sweep,
    "envelope": cmd_envelope,
    "degree": cmd_degree,
    "lift": cmd_lift,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc.strerror}", file=sys.stderr)
        return 1
    try:
        with np.errstate(all="ignore"):
            HANDLERS[args.command](args, out)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except EqCrisisError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        (out / "error.json").write_text(json.dumps(err) + "\n")
        print(f"numerical failure: {err['error']}: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())
