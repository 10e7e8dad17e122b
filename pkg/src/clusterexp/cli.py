"""Command-line front end.

Every subcommand accepts --config FILE (INI-style ``key = value`` lines under a
[defaults] section and/or a section named after the subcommand). Command-line
flags override file values. Outputs start with a header carrying the tool
version, a hash of the resolved configuration and the seed.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import sys
import warnings

import numpy as np

from . import __version__
from .graphs import (CapExceeded, enumerate_biconnected, enumerate_connected,
                     enumerate_trees)
from .potential import BoxSpec, PairPotential, load_potential

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT, EXIT_CONVERGENCE = 0, 1, 2, 3


class ConvergenceFailure(RuntimeError):
    pass


def _floats(text):
    return [float(x) for x in str(text).replace(",", " ").split()]


def _add_potential(p):
    p.add_argument("--potential", help="potential definition file (TOML)")
    p.add_argument("--kind", default="hard-core", choices=["hard-core", "square-well", "ideal"])
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--B", type=float, default=None, help="stability constant (square well)")
    p.add_argument("--depth", type=float, default=0.0)
    p.add_argument("--core", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)


def _add_mc(p, samples=10**6):
    p.add_argument("--samples", type=int, default=samples)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="number of independent random streams")


def _add_out(p):
    p.add_argument("--out", help="output file (default: stdout)")


def _potential(args) -> PairPotential:
    if args.potential:
        return load_potential(args.potential)
    if args.kind == "square-well":
        return PairPotential.square_well(args.R, args.depth, args.B, args.core)
    return PairPotential(args.kind, args.R, args.B or 0.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clusterexp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"clusterexp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graphs", help="count (and optionally dump) labeled graphs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--class", dest="graph_class", default="connected",
                   choices=["connected", "biconnected", "trees"])
    p.add_argument("--dump", help="write graphs as 'n:<n> edges:<i-j,...>' lines")

    p = sub.add_parser("beta", help="irreducible coefficient beta_n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--method", default="auto", choices=["auto", "exact", "mc"])
    _add_potential(p)
    _add_mc(p)
    _add_out(p)

    p = sub.add_parser("omega", help="polymer activity of cardinality n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--bc", default="periodic", choices=["periodic", "zero"])
    p.add_argument("--root-color", type=int, choices=[0, 1])
    p.add_argument("--method", default="auto", choices=["auto", "exact", "mc"])
    _add_potential(p)
    _add_mc(p)
    _add_out(p)

    p = sub.add_parser("kp-report", help="convergence condition report")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--d", type=int, default=1)
    _add_potential(p)
    _add_out(p)

    p = sub.add_parser("series", help="finite-volume series terms F_n as CSV")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n-max", type=int, default=3)
    _add_potential(p)
    _add_mc(p)
    _add_out(p)

    p = sub.add_parser("boundary", help="boundary / interior split bounds as JSON")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--n-max", type=int, default=3)
    _add_potential(p)
    _add_mc(p)
    _add_out(p)

    p = sub.add_parser("free-energy-scan", help="finite-volume free energy against the series")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--ells", default="100 200 400 800")
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--bcs", default="periodic zero")
    _add_potential(p)
    _add_mc(p, samples=10**5)
    _add_out(p)

    p = sub.add_parser("correlations", help="Metropolis histogram estimators as CSV")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--bc", default="periodic", choices=["periodic", "zero"])
    p.add_argument("--estimator", default="truncated-labelled",
                   choices=["one-point", "two-point", "truncated-labelled"])
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--sweeps", type=int, default=100_000)
    p.add_argument("--burn-in", type=int, default=1_000)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--width", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="number of independent chains")
    _add_potential(p)
    _add_out(p)

    p = sub.add_parser("psi", help="multilinear coefficients of Psi as JSON")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--bc", default="periodic", choices=["periodic", "zero"])
    p.add_argument("--centers", required=True, help="one or two source centers (1D)")
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--method", default="auto", choices=["auto", "quadrature", "monte-carlo"])
    _add_potential(p)
    _add_mc(p)
    _add_out(p)

    p = sub.add_parser("decay", help="decay table of the truncated labelled function")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--bc", default="periodic", choices=["periodic", "zero"])
    p.add_argument("--separations", default=None, help="default: 2R, 3R, ..., 10R")
    p.add_argument("--sweeps", type=int, default=200_000)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--bin-width", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="number of independent chains")
    _add_potential(p)
    _add_out(p)
    return ap


def _config_defaults(path, command, parser):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    values = {}
    for section in ("defaults", command):
        if cp.has_section(section):
            values.update({k.replace("-", "_"): v for k, v in cp.items(section)})
    sub = parser._subparsers._group_actions[0].choices[command]
    known = {a.dest: a for a in sub._actions}
    out = {}
    for k, v in values.items():
        if k not in known:
            raise ValueError(f"unknown config key {k!r} for {command}")
        act = known[k]
        out[k] = act.type(v) if act.type is not None else v
        act.required = False
    return out


def parse(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        cmd = next((a for a in rest if not a.startswith("-")), None)
        if cmd is None:
            raise ValueError("a subcommand is required")
        sub = parser._subparsers._group_actions[0].choices[cmd]
        sub.set_defaults(**_config_defaults(known.config, cmd, parser))
    args = parser.parse_args(rest)
    args.config_file = known.config
    return args


def _resolved(args) -> dict:
    skip = {"out", "config_file", "dump"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _meta(args) -> dict:
    cfg = _resolved(args)
    if getattr(args, "potential", None):
        with open(args.potential, "rb") as fh:
            cfg["potential_sha256"] = hashlib.sha256(fh.read()).hexdigest()
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return {"tool": f"clusterexp {__version__}", "config_hash": hashlib.sha256(blob).hexdigest()[:16],
            "seed": getattr(args, "seed", None), "config": cfg}


def _csv_header(args) -> str:
    m = _meta(args)
    return f"# {m['tool']} config_hash={m['config_hash']} seed={m['seed']}\n"


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _finite(x):
    # JSON has no inf/nan literals; spell them as strings
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def _emit_json(args, payload: dict):
    payload = dict(payload)
    payload["meta"] = _meta(args)
    text = json.dumps(_finite(payload), sort_keys=True, indent=2, default=_jsonable, allow_nan=False)
    _emit(args, text + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------


def cmd_graphs(args):
    fn = {"connected": enumerate_connected, "biconnected": enumerate_biconnected,
          "trees": enumerate_trees}[args.graph_class]
    graphs = fn(args.n)
    if args.dump:
        with open(args.dump, "w") as fh:
            fh.write(_csv_header(args))
            fh.writelines(g.dump() + "\n" for g in graphs)
    print(len(graphs))


def cmd_beta(args):
    from .weights import beta_n
    m = beta_n(args.n, _potential(args), args.beta, args.d, samples=args.samples,
               seed=args.seed, workers=args.workers, method=args.method)
    rec = m.record("beta_n", {"n": args.n, "d": args.d, "beta": args.beta})
    _emit_json(args, rec)


def cmd_omega(args):
    from .weights import WeightRequest, omega
    box = BoxSpec(args.ell, args.d, args.bc)
    req = WeightRequest(args.n, _potential(args), args.beta, box, args.root_color)
    m = omega(req, samples=args.samples, seed=args.seed, workers=args.workers, method=args.method)
    _emit_json(args, m.record("omega", {"n": args.n, "ell": args.ell, "d": args.d, "bc": args.bc,
                                        "root_color": args.root_color}))


def cmd_kp_report(args):
    from dataclasses import asdict
    from .expansion import kp_check
    rep = kp_check(_potential(args), args.beta, args.rho, a=args.a, c=args.c, d=args.d)
    _emit_json(args, {"op": "kp_check", "report": asdict(rep)})
    if not rep.condition_met:
        raise ConvergenceFailure("convergence condition not met")


def cmd_series(args):
    from .expansion import finite_volume_terms
    rep = finite_volume_terms(args.N, BoxSpec(args.ell, args.d, "periodic"), args.beta,
                              _potential(args), args.n_max, samples=args.samples, seed=args.seed,
                              workers=args.workers)
    _emit(args, _csv_header(args) + rep.to_csv())


def cmd_boundary(args):
    from dataclasses import asdict
    from .expansion import boundary_split_bound
    rep = boundary_split_bound(args.N, BoxSpec(args.ell, args.d, "periodic"), args.beta,
                               _potential(args), a=args.a, n_max=args.n_max,
                               samples=args.samples, seed=args.seed)
    _emit_json(args, {"op": "boundary_split_bound", "report": asdict(rep)})
    if not rep.converged:
        raise ConvergenceFailure("boundary series does not converge at this density")


def cmd_free_energy_scan(args):
    from .expansion import free_energy_series, log_ideal
    from .oracle import z_bruteforce, z_exact_hard_rods
    pot = _potential(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        series = free_energy_series(args.rho, args.beta, pot, args.n_max, samples=args.samples,
                                    seed=args.seed, workers=args.workers)
    minus_bf = -series.value
    rows, notes = [], []
    for bc in args.bcs.replace(",", " ").split():
        for ell in _floats(args.ells):
            N = round(args.rho * ell)
            if not math.isclose(N, args.rho * ell, rel_tol=1e-9):
                notes.append(f"ell={ell!r}: rho*ell is not an integer")
                continue
            box = BoxSpec(ell, 1, bc)
            try:
                if pot.kind == "ideal":
                    logz = log_ideal(N, ell)
                elif pot.kind == "hard-core":
                    logz = z_exact_hard_rods(N, ell, pot.R, bc).logZ
                elif N <= 10:
                    logz = z_bruteforce(N, box, pot, args.beta, method="mc", budget=args.samples,
                                        seed=args.seed, workers=args.workers).logZ
                else:
                    notes.append(f"ell={ell!r} bc={bc}: N={N} too large for the Monte Carlo path")
                    continue
            except ValueError as e:
                notes.append(f"ell={ell!r} bc={bc}: {e}, row omitted")
                continue
            if not math.isfinite(logz):
                notes.append(f"ell={ell!r} bc={bc}: jammed, row omitted")
                continue
            per_vol = logz / box.volume
            err = abs(per_vol - minus_bf)
            rows.append([bc, repr(ell), N, repr(per_vol), repr(minus_bf), repr(err),
                         repr(err * box.volume), repr(err * box.volume / box.surface)])
    text = _csv_header(args) + "".join(f"# note: {n}\n" for n in notes)
    text += _rows_to_csv(["bc", "ell", "N", "logZ_per_volume", "series", "error",
                          "error_times_volume", "error_times_volume_over_surface"], rows)
    _emit(args, text)


def cmd_correlations(args):
    from .oracle import GibbsChainConfig, correlation_estimate
    cfg = GibbsChainConfig(args.N, BoxSpec(args.ell, args.d, args.bc), _potential(args), args.beta,
                           sweeps=args.sweeps, burn_in=args.burn_in, seed=args.seed,
                           width=args.width, stride=args.stride, chains=args.workers)
    est = correlation_estimate(cfg, args.estimator, bins=args.bins)
    _emit(args, _csv_header(args) + _rows_to_csv(["r_lo", "r_hi", "value", "stderr"], est.rows()))


def cmd_psi(args):
    from .correlations import PsiRequest, SourceFunction, psi_coefficients
    centers = _floats(args.centers)
    srcs = tuple(SourceFunction((c,), args.eta) for c in centers)
    req = PsiRequest(args.N, BoxSpec(args.ell, 1, args.bc), _potential(args), args.beta, srcs)
    pc = psi_coefficients(req, method=args.method, budget=args.samples, seed=args.seed,
                          workers=args.workers)
    _emit_json(args, dict(pc.as_dict(), stderr=pc.stderr, method=pc.method))


def cmd_decay(args):
    from .correlations import decay_profile
    pot = _potential(args)
    seps = _floats(args.separations) if args.separations else [k * pot.R for k in range(2, 11)]
    prof = decay_profile(args.N, BoxSpec(args.ell, 1, args.bc), pot, args.beta, seps,
                         sweeps=args.sweeps, seed=args.seed, bin_width=args.bin_width,
                         stride=args.stride, chains=args.workers)
    head = _csv_header(args)
    head += (f"# C={prof.C!r} C2={prof.C2!r} C3={prof.C3!r} plateau={prof.plateau!r} "
             f"rate={prof.rate!r} rate_stderr={prof.rate_stderr!r} rate_points={prof.rate_points}\n")
    _emit(args, head + prof.to_csv())


COMMANDS = {"graphs": cmd_graphs, "beta": cmd_beta, "omega": cmd_omega, "kp-report": cmd_kp_report,
            "series": cmd_series, "boundary": cmd_boundary, "free-energy-scan": cmd_free_energy_scan,
            "correlations": cmd_correlations, "psi": cmd_psi, "decay": cmd_decay}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    except (ValueError, FileNotFoundError, configparser.Error) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        COMMANDS[args.command](args)
    except ConvergenceFailure as e:
        print(f"convergence failure: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (CapExceeded, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001 - report anything else as a runtime failure
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
