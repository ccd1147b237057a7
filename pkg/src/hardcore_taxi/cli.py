"""Command-line front end: count, bounds, classify, simulate, conductance, peierls.

Every run writes one manifest (command, parameters, seeds, version, wall
time, output digests) to ``<out>.manifest.json``, or to stderr when the
result goes to stdout.  Exit codes: 0 ok, 2 usage, 3 resource cap, 4 data format.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .errors import ContractError, DataFormatError, ResourceCapError

EXIT_OK, EXIT_USAGE, EXIT_CAP, EXIT_DATA = 0, 2, 3, 4
DESK_MAX_N = 40
EXTENDED_MAX_N = 60


class UsageError(Exception):
    pass


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _emit(args, text: str, params: dict, t0: float, seeds=()) -> None:
    data = text.encode()
    manifest = {
        "command": args.command,
        "parameters": params,
        "seeds": list(seeds),
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - t0, 6),
        "outputs": {},
    }
    if args.out:
        out = Path(args.out)
        man = Path(str(out) + ".manifest.json")
        for p in (out, man):
            if p.exists() and not args.force:
                raise UsageError(f"{p} exists; pass --force to overwrite")
        out.write_bytes(data)
        manifest["outputs"][str(out)] = _digest(data)
        man.write_text(json.dumps(manifest, indent=2) + "\n")
    else:
        sys.stdout.write(text)
        manifest["outputs"]["<stdout>"] = _digest(data)
        sys.stderr.write(json.dumps(manifest) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_count(args) -> None:
    from .walks import MAX_LENGTH, enumerate_table

    t0 = time.perf_counter()
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    cap = EXTENDED_MAX_N if args.extended else DESK_MAX_N
    if args.n > min(cap, MAX_LENGTH):
        raise UsageError(f"--n {args.n} exceeds {cap}; lengths above {DESK_MAX_N} need --extended")
    table = enumerate_table(args.n, workers=args.workers, checkpoint_path=args.checkpoint)
    text = table.to_csv()
    if not args.bridges:
        text = "\n".join(",".join(line.split(",")[:2]) for line in text.strip().splitlines()) + "\n"
    _emit(args, text, {"n": args.n, "bridges": args.bridges, "workers": args.workers,
                       "checkpoint": args.checkpoint, "extended": args.extended}, t0)


def _load_table(path: str | None, n: int, extended: bool):
    from .walks import WalkTable, enumerate_table

    if path:
        return WalkTable.load(path)
    cap = EXTENDED_MAX_N if extended else DESK_MAX_N
    if n > cap:
        raise UsageError(f"counting to n = {n} needs --table or --extended")
    return enumerate_table(n)


def cmd_bounds(args) -> None:
    from .bounds import bounds_report, lambda_box, lambda_torus

    t0 = time.perf_counter()
    params = {"fekete": args.fekete, "alm": args.alm, "lambda": args.thresholds, "m": args.m, "n": args.n,
              "mu": args.mu, "table": args.table, "tol": args.tol}
    if args.thresholds:
        if args.mu is None:
            raise UsageError("--lambda needs --mu")
        out = {"mu": args.mu, "lambda_torus": lambda_torus(args.mu), "lambda_box": lambda_box(args.mu)}
        _emit(args, json.dumps(out, indent=2) + "\n", params, t0)
        return
    if args.alm == args.fekete:
        raise UsageError("choose exactly one of --fekete, --alm, --lambda")
    if args.n is None:
        raise UsageError("--n is required")
    if args.alm:
        if args.m is None:
            raise UsageError("--alm needs --m")
        table = _load_table(args.table, min(args.n, DESK_MAX_N), args.extended)
        rep = bounds_report(table, args.n, args.m, "alm", args.tol)
    else:
        table = _load_table(args.table, args.n, args.extended)
        if table.n_max < args.n:
            raise DataFormatError(f"table only reaches n = {table.n_max}")
        rep = bounds_report(table, args.n, method="fekete")
    _emit(args, rep.to_json() + "\n", params, t0)


def cmd_classify(args) -> None:
    from .hardcore import Boundary, Configuration, is_independent
    from .topology import classify

    t0 = time.perf_counter()
    text = sys.stdin.read() if args.config_file == "-" else Path(args.config_file).read_text()
    c = Configuration.from_text(text, Boundary.TORUS if args.torus else Boundary.FREE)
    if not is_independent(c):
        raise DataFormatError("input is not an independent set (two occupied neighbours)")
    result = classify(c)
    out = result.witness.to_json()
    out["region"] = str(c.region)
    _emit(args, json.dumps(out) + "\n", {"config_file": args.config_file, "torus": args.torus}, t0)


def _start_config(region, name):
    from .hardcore import Configuration, checkerboard

    if name == "even":
        return checkerboard(region, 0)
    if name == "odd":
        return checkerboard(region, 1)
    if name == "empty":
        return Configuration(region)
    raise UsageError(f"unknown start {name!r}")


def cmd_simulate(args) -> None:
    from .dynamics import simulate
    from .hardcore import Region

    t0 = time.perf_counter()
    region = Region.parse(args.region)
    if args.steps < 0 or args.record_every < 1:
        raise UsageError("--steps must be >= 0 and --record-every >= 1")
    trace = simulate(region, args.lam, args.steps, args.seed, args.record_every, _start_config(region, args.start))
    params = {"region": args.region, "lambda": args.lam, "steps": args.steps, "record_every": args.record_every,
              "start": args.start, "rng": "numpy Philox, 2 uniforms per step"}
    _emit(args, trace.to_csv(), params, t0, seeds=[args.seed])


def cmd_conductance(args) -> None:
    from fractions import Fraction

    from .dynamics import class_weights, spectral_gap_and_conductance
    from .hardcore import Region

    t0 = time.perf_counter()
    region = Region.parse(args.region)
    lam = Fraction(args.lam).limit_denominator(10**9)
    if args.weights_only:
        w = class_weights(region, lam)
        out = {"region": str(region), "lambda": float(lam), **{k: float(v) for k, v in w.items()},
               "ratio_fault_to_even": float(w["FaultLine"] / w["EvenCross"]) if w["EvenCross"] else None}
    else:
        out = spectral_gap_and_conductance(region, lam, cap=args.cap).to_json()
    _emit(args, json.dumps(out, indent=2) + "\n",
          {"region": args.region, "lambda": args.lam, "cap": args.cap, "weights_only": args.weights_only}, t0)


def cmd_peierls(args) -> None:
    from .bounds import peierls_cutoff, peierls_sum

    t0 = time.perf_counter()
    m = peierls_cutoff(args.lam, args.mu, args.start)
    out = {"lambda": args.lam, "mu": args.mu, "start": args.start, "cutoff_m": m,
           "sum_at_cutoff": peierls_sum(m, args.lam, args.mu, args.start)}
    _emit(args, json.dumps(out, indent=2) + "\n", {"lambda": args.lam, "mu": args.mu, "start": args.start}, t0)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hardcore-taxi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: stdout, manifest to stderr)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--config", help="JSON file with default values for any flag")
    common.add_argument("--extended", action="store_true", help="allow runs beyond desk scale")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", parents=[common], help="exact taxi walk and bridge counts")
    p.add_argument("--n", type=int, default=DESK_MAX_N)
    p.add_argument("--bridges", action="store_true", help="include the b_n column")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--checkpoint", help="resumable checkpoint file")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("bounds", parents=[common], help="connective constant bounds and thresholds")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fekete", action="store_true")
    g.add_argument("--alm", action="store_true")
    g.add_argument("--lambda", dest="thresholds", action="store_true", help="thresholds for a given --mu")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--table", help="counts CSV from 'count --bridges'")
    p.add_argument("--tol", type=float, default=1e-11)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("classify", parents=[common], help="fault line / cross witness for a configuration")
    p.add_argument("config_file", help="rows of '.' and 'o', top row first; '-' for stdin")
    p.add_argument("--torus", action="store_true", help="read the grid as a torus")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", parents=[common], help="Glauber dynamics trace")
    p.add_argument("--region", default="torus:8")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-every", type=int, default=1000)
    p.add_argument("--start", default="even", choices=["even", "odd", "empty"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("conductance", parents=[common], help="exact gap, conductance and class weights")
    p.add_argument("--region", default="grid:3x3")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--cap", type=int, default=20_000)
    p.add_argument("--weights-only", action="store_true", help="only the class weights (larger regions)")
    p.set_defaults(func=cmd_conductance)

    p = sub.add_parser("peierls", parents=[common], help="first admissible contour-length cutoff")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu", type=float, default=1.5884)
    p.add_argument("--start", default="m", choices=["m", "m/4"])
    p.set_defaults(func=cmd_peierls)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = ap.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise DataFormatError("config must be a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    cfg = {("lam" if k == "lambda" else k): v for k, v in cfg.items()}
    known = vars(args)
    unknown = set(cfg) - set(known)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    # command-line flags win over config values
    subparsers = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    subparsers.choices[args.command].set_defaults(**cfg)
    return ap.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(ap, argv)
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except DataFormatError as exc:
        print(f"data format: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
