"""Command-line front end.

Exit status 0 on success, 1 on a domain error (an error JSON document is
emitted), 2 on malformed input or usage errors. Set ``NCOT_LOG`` to a
logging level name (``DEBUG``, ``INFO``, ...) for progress messages on stderr.
"""
import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import demos
from .duality import (
    DualityError,
    certificate_accepted,
    certificate_report,
    dual_ascent,
    potentials_from_lp,
)
from .dynamics import EndpointError, FlowField, straight_line_flow, write_snapshots_csv
from .lp import FEAS_TOL, LpError
from .maps import MapError, extract_map_from_plan
from .market import (
    MarketError,
    consistent_prices,
    detect_arbitrage,
    is_consistent,
    optimal_rebalance,
)
from .serialization import (
    SchemaError,
    dumps,
    instance_from_dict,
    market_from_dict,
    vector_field,
)
from .solver import NcotError, feasible_mass_interval, solve_ncot, sweep_mass_scales
from .transport import DegenerateMassError

log = logging.getLogger("ncot")

COMMANDS = ("check-arbitrage", "prices", "rebalance", "ot-solve", "ot-dual",
            "ot-maps", "ot-dynamics", "ot-sweep")
DOMAIN_ERRORS = (NcotError, MarketError, DualityError, MapError, EndpointError, LpError,
                 DegenerateMassError)


class UsageError(Exception):
    """Bad flags or missing inputs (exit status 2)."""


def _configure_logging():
    level = os.environ.get("NCOT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _read_docs(paths):
    docs = []
    for p in paths:
        try:
            with open(p, encoding="utf-8") as fh:
                docs.append(json.load(fh))
        except OSError as exc:
            raise UsageError(f"cannot read {p}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{p}: invalid JSON ({exc})") from exc
    return docs


def _merged(args, needed=1):
    if not args.input or len(args.input) < needed:
        raise UsageError(f"{args.command} needs at least {needed} --input file(s)")
    out = {}
    for d in _read_docs(args.input):
        if not isinstance(d, dict):
            raise SchemaError("input documents must be JSON objects")
        out.update(d)
    return out


def _market(doc):
    return market_from_dict(doc.get("market", doc))


def _z_grid(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


# --------------------------------------------------------------------------
# commands


def cmd_check_arbitrage(args):
    market = _market(_merged(args))
    res = detect_arbitrage(market)
    log.info("arbitrage: %s", bool(res))
    return res.to_dict()


def cmd_prices(args):
    market = _market(_merged(args))
    q = consistent_prices(market)
    return {"prices": q, "consistent": bool(is_consistent(market, q))}


def cmd_rebalance(args):
    doc = _merged(args)
    market = _market(doc)
    x = vector_field(doc, "units")
    nu = vector_field(doc, "nu")
    if x.size != market.n or nu.size != market.n:
        raise SchemaError(f"'units' and 'nu' need {market.n} entries")
    q = vector_field(doc, "prices") if "prices" in doc else consistent_prices(market)
    res = optimal_rebalance(market, x, nu, q, tol=max(args.tol_feas, 1e-8))
    out = res.to_dict(market)
    out["prices"] = q
    out["certificate_accepted"] = bool(certificate_accepted(res.gap, res.ncot_value, args.tol_gap))
    return out


def _instance(args):
    inst = instance_from_dict(_merged(args))
    return inst, (inst.mu, inst.nu, inst.cost, inst.mass_change)


def cmd_ot_solve(args):
    _, (mu, nu, c, m) = _instance(args)
    sol = solve_ncot(mu, nu, c, m, tol=args.tol_feas)
    pot = potentials_from_lp(sol, c, m, nu)
    out = sol.to_dict()
    cert = certificate_report(sol, pot, mu, c, m, nu)
    cert["accepted"] = bool(certificate_accepted(cert["gap"], sol.optimal_value, args.tol_gap))
    out["certificate"] = cert
    return out


def cmd_ot_dual(args):
    _, (mu, nu, c, m) = _instance(args)
    sol = solve_ncot(mu, nu, c, m, tol=args.tol_feas)
    lp_pot = potentials_from_lp(sol, c, m, nu)
    asc = dual_ascent(c, m, nu, mu)
    cert = certificate_report(sol, lp_pot, mu, c, m, nu)
    cert["accepted"] = bool(certificate_accepted(cert["gap"], sol.optimal_value, args.tol_gap))
    return {
        "value": sol.optimal_value,
        "lp_potentials": lp_pot.to_dict(),
        "certificate": cert,
        "dual_ascent": {
            "potentials": asc.potentials.to_dict(),
            "dual_value": asc.potentials.value(mu),
            "gap": sol.optimal_value - asc.potentials.value(mu),
            "converged": asc.converged,
            "iterations": len(asc.history),
            "escapes": asc.escapes,
        },
    }


def cmd_ot_maps(args):
    ks = args.k if args.k else [0.1, 0.05, 0.01]
    reports = [demos.leaky_map_report(k, args.grid_size) for k in ks]
    return {"grid_size": args.grid_size, "reports": reports}


def cmd_ot_dynamics(args):
    k = args.k[0] if args.k else 0.5
    n = args.grid_size
    rep = demos.dynamics_report(seed=args.seed, n=n, k=k)
    rep.update(seed=args.seed, k=k, n=n)
    if args.snapshots and rep.get("is_map"):
        x, mu, y, nu, c, m, mass_fn = demos.dynamics_instance(args.seed, n, k)
        tmap = extract_map_from_plan(solve_ncot(mu, nu, c, m).plan)
        flow = FlowField.from_map(tmap, x, y)
        write_snapshots_csv(straight_line_flow(flow, mu, mass_fn), args.snapshots)
        rep["snapshots"] = args.snapshots
    return rep


def cmd_ot_sweep(args):
    _, (mu, nu, c, m) = _instance(args)
    lo, hi = feasible_mass_interval(mu, c, m)
    grid = args.z_grid if args.z_grid else list(np.linspace(lo, hi, 101))
    grid = [z for z in grid if z > 0] or grid
    sweep = sweep_mass_scales(mu, nu, c, m, grid)
    out = sweep.to_dict()
    out["feasible_interval"] = [lo, hi]
    try:
        out["ncot_value"] = solve_ncot(mu, nu, c, m, tol=args.tol_feas).optimal_value
    except NcotError as exc:
        out["ncot_value"] = None
        log.info("NCOT solve failed: %s", exc)
    return out


HANDLERS = {
    "check-arbitrage": cmd_check_arbitrage,
    "prices": cmd_prices,
    "rebalance": cmd_rebalance,
    "ot-solve": cmd_ot_solve,
    "ot-dual": cmd_ot_dual,
    "ot-maps": cmd_ot_maps,
    "ot-dynamics": cmd_ot_dynamics,
    "ot-sweep": cmd_ot_sweep,
}


# --------------------------------------------------------------------------
# rendering


def _pretty(obj, indent=0):
    pad = "  " * indent
    lines = []
    if isinstance(obj, dict):
        for key, val in obj.items():
            if isinstance(val, (dict, list)) and val and not _is_flat(val):
                lines.append(f"{pad}{key}:")
                lines.append(_pretty(val, indent + 1))
            else:
                lines.append(f"{pad}{key:<28} {_cell(val)}")
    elif isinstance(obj, list):
        for row in obj:
            lines.append(pad + (_cell(row) if _is_flat(row) else "-\n" + _pretty(row, indent + 1)))
    else:
        lines.append(pad + _cell(obj))
    return "\n".join(lines)


def _is_flat(v):
    if isinstance(v, np.ndarray):
        return v.ndim <= 1
    if isinstance(v, list):
        return all(not isinstance(e, (list, dict, np.ndarray)) for e in v)
    return not isinstance(v, dict)


def _cell(v):
    if isinstance(v, (list, np.ndarray)):
        return "  ".join(_cell(e) for e in v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _emit(payload, args, stream):
    text = _pretty(payload) if args.pretty else dumps(payload)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(dumps(payload) + "\n")
        if args.pretty:
            stream.write(text + "\n")
    else:
        stream.write(text + "\n")


def _error_doc(exc, code):
    doc = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    cyc = getattr(exc, "cycle", None)
    if cyc is not None and hasattr(cyc, "to_dict"):
        doc["error"]["cycle"] = cyc.to_dict()
    return doc


# --------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="ncot", description="Non-conservative transport toolkit.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", "-i", action="append", default=[],
                   help="input JSON (repeatable; documents are merged left to right)")
    p.add_argument("--output", "-o", help="write the JSON report here instead of stdout")
    p.add_argument("--tol-feas", type=float, default=FEAS_TOL, help="LP feasibility tolerance")
    p.add_argument("--tol-gap", type=float, default=1e-6,
                   help="relative duality gap accepted by certificates")
    p.add_argument("--seed", type=int, default=3, help="seed for generated demo instances")
    p.add_argument("--pretty", action="store_true", help="human-readable table on stdout")
    p.add_argument("--z-grid", type=_z_grid, help="comma-separated retained-mass grid (ot-sweep)")
    p.add_argument("--k", type=float, action="append",
                   help="leaky parameter (repeatable for ot-maps)")
    p.add_argument("--grid-size", type=int, default=None,
                   help="cells for ot-maps (default 64), particles for ot-dynamics (default 8)")
    p.add_argument("--snapshots", help="CSV path for ot-dynamics particle snapshots")
    return p


def main(argv=None, stdout=None, stderr=None):
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.grid_size is None:
        args.grid_size = 8 if args.command == "ot-dynamics" else 64
    if args.grid_size < 2 or args.tol_feas <= 0 or args.tol_gap <= 0:
        stderr.write(dumps(_error_doc(UsageError("grid size and tolerances must be positive"), 2)) + "\n")
        return 2
    log.debug("running %s on %s", args.command, args.input)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            payload = HANDLERS[args.command](args)
    except (SchemaError, UsageError) as exc:
        stderr.write(dumps(_error_doc(exc, 2)) + "\n")
        return 2
    except DOMAIN_ERRORS as exc:
        _emit(_error_doc(exc, 1), args, stdout)
        return 1
    except ValueError as exc:
        # remaining value errors come from validating input documents
        stderr.write(dumps(_error_doc(exc, 2)) + "\n")
        return 2
    _emit(payload, args, stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
