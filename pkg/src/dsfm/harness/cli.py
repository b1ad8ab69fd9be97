"""Command-line entry point: ``dsfm solve|ingest|bench|diagnose|validate``.

Errors print a one-line JSON object ``{"error": <category>, "message": ...}``
to stderr and exit with a category-specific nonzero code.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..core import DSFMError, InputError, check_base_membership, check_submodular, greedy_vertex
from ..diagnostics import DiagnosticsContext, check_ell, estimate_kappa
from ..flow import FLOW_EPS, solve_flow_ekd, solve_flow_ibfs
from ..gradient import GRADIENT_EPS, solve_acdm, solve_ap, solve_rcdm
from ..level0 import Level0, OraclePolicy
from .bench import SOLVERS, BenchmarkConfig, run_benchmark
from .imaging import ImageParams, image_to_instance, read_image
from .instance_io import load_instance, write_instance

EXIT_CODES = {
    "input": 2,
    "parse": 2,
    "submodularity": 3,
    "capability": 4,
    "oracle-exactness": 5,
    "certificate": 5,
    "solver": 6,
    "transport": 6,
    "validation": 7,
}

log = logging.getLogger("dsfm")


def default_threads() -> int:
    """Worker count from ``DSFM_THREADS`` (default: CPU count)."""
    raw = os.environ.get("DSFM_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise InputError(f"DSFM_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise InputError("DSFM_THREADS must be a positive integer")
    return value


def _level0(inst, args, eps):
    per_kind = {}
    for item in args.oracle_kind or []:
        kind, _, spec = item.partition("=")
        if not spec:
            raise InputError(f"--oracle-kind expects KIND=POLICY, got {item!r}")
        per_kind[kind] = OraclePolicy.parse(spec)
    return Level0(inst, OraclePolicy.parse(args.oracle), per_kind, eps=eps)


def _emit(record: dict, path: str | None):
    if path:
        Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    if args.solver in ("ibfs", "ekd"):
        solver = solve_flow_ibfs if args.solver == "ibfs" else solve_flow_ekd
        rep = solver(inst, level0=_level0(inst, args, FLOW_EPS), strict=args.strict)
    else:
        iterations = args.iterations if args.iterations is not None else args.budget * inst.r
        level0 = _level0(inst, args, GRADIENT_EPS)
        if args.solver == "ap":
            rep = solve_ap(inst, max(1, iterations // inst.r), level0=level0, tol=args.tol)
        else:
            fn = solve_rcdm if args.solver == "rcdm" else solve_acdm
            rep = fn(inst, iterations, seed=args.seed, level0=level0, tol=args.tol)
    print(f"solver     {rep.solver}")
    print(f"n, r       {inst.n}, {inst.r}")
    print(f"value      {rep.value:.12g}")
    print(f"gap        {rep.gap:.3g}")
    print(f"certified  {'yes' if rep.certified else 'no'}")
    print(f"iterations {rep.iterations}")
    print(f"oracle     {int(rep.oracle_calls.sum())} calls, {rep.oracle_time.sum():.4f} s")
    print(f"time       {rep.wall_time:.4f} s")
    if args.show_set:
        print(f"minimizer  {sorted(rep.minimizer)}")
    for w in rep.warnings:
        print(f"warning    {w}")
    record = rep.to_record()
    record["schema"] = "dsfm-solve/1"
    _emit(record, args.json)
    return 0


def _colour(text):
    if text is None:
        return None
    parts = [float(t) for t in text.split(",")]
    return tuple(p / 255.0 for p in parts)


def cmd_ingest(args) -> int:
    img = read_image(args.image)
    params = ImageParams(lambda_pair=args.lambda_pair, lambda_square=args.lambda_square,
                         unary_scale=args.unary_scale, regions=args.regions,
                         region_size=(args.region_min, args.region_max),
                         foreground=_colour(args.fg), background=_colour(args.bg), seed=args.seed)
    inst = image_to_instance(img, params)
    write_instance(inst, args.output)
    print(f"wrote {args.output}: n = {inst.n}, r = {inst.r}")
    return 0


def cmd_bench(args) -> int:
    cfg = BenchmarkConfig.from_file(args.config)
    if args.trials is not None:
        cfg.trials = args.trials
    path = args.instance or cfg.instance
    if path is None:
        raise InputError("no instance given (config key 'instance' or --instance)")
    inst = load_instance(path)
    result = run_benchmark(cfg, inst)
    print(result.table())
    _emit(result.to_record(), args.json)
    return 0


def cmd_diagnose(args) -> int:
    inst = load_instance(args.instance)
    ctx = DiagnosticsContext.build(inst, precision=args.precision, seed=args.seed)
    kappa = estimate_kappa(ctx, args.samples, args.seed)
    ell = check_ell(ctx, args.samples, args.seed)
    rec = {"schema": "dsfm-diagnose/1", "n": inst.n, "r": inst.r,
           "kappa": kappa.to_record(), "ell": ell.to_record()}
    print(f"certified ratio max {kappa.max:.6g} (bound {kappa.bound:.6g}), violations {kappa.violations}")
    print(f"ell surrogate violations {ell.violations} of {len(ell.lhs)}")
    _emit(rec, args.json)
    return 0 if kappa.violations == 0 and ell.violations == 0 else EXIT_CODES["validation"]


def _validate_one(pot):
    problems = []
    if pot.size <= 12:
        witness = check_submodular(pot)
        if witness is not None:
            X, Y = witness
            problems.append(f"not submodular: X={sorted(X)}, Y={sorted(Y)}")
            return problems
        rng = np.random.default_rng(pot.size)
        for _ in range(3):
            x = greedy_vertex(pot, rng.normal(size=pot.size))
            if not check_base_membership(pot, x, 1e-8):
                problems.append("greedy vertex outside the base polytope")
                break
    return problems


def cmd_validate(args) -> int:
    inst = load_instance(args.instance, check=False)
    with ThreadPoolExecutor(max_workers=args.threads or default_threads()) as pool:
        results = list(pool.map(_validate_one, inst.potentials))
    bad = [(i, p) for i, p in enumerate(results) if p]
    skipped = sum(p.size > 12 for p in inst.potentials)
    for i, problems in bad:
        for msg in problems:
            print(f"potential {i} ({inst.potentials[i].kind}): {msg}")
    print(f"checked {inst.r - skipped} of {inst.r} potentials; {len(bad)} invalid")
    if bad:
        sys.stderr.write(json.dumps({"error": "submodularity", "message": f"{len(bad)} invalid potentials"}) + "\n")
        return EXIT_CODES["submodularity"]
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsfm", description="Decomposable submodular minimization toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="minimize an instance file")
    p.add_argument("instance")
    p.add_argument("--solver", choices=SOLVERS, default="ibfs")
    p.add_argument("--oracle", default="specific", help="specific | brute | wolfe[:MAJOR[:warm]]")
    p.add_argument("--oracle-kind", action="append", metavar="KIND=POLICY")
    p.add_argument("--budget", type=int, default=1000, help="iterations in multiples of r (default 1000)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--tol", type=float, help="stop once the certificate gap is below this")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true", help="reject flow solvers with inexact oracles")
    p.add_argument("--show-set", action="store_true")
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("ingest", help="image -> instance file")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--lambda-pair", type=float, default=1.0)
    p.add_argument("--lambda-square", type=float, default=0.0)
    p.add_argument("--unary-scale", type=float, default=1.0)
    p.add_argument("--regions", type=int, default=0)
    p.add_argument("--region-min", type=int, default=50)
    p.add_argument("--region-max", type=int, default=300)
    p.add_argument("--fg", help="foreground colour R,G,B (0-255)")
    p.add_argument("--bg", help="background colour R,G,B (0-255)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("config")
    p.add_argument("--instance")
    p.add_argument("--trials", type=int)
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diagnose", help="certified condition-number statistics")
    p.add_argument("instance")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", type=float, default=1e-12)
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("validate", help="submodularity and base-polytope checks")
    p.add_argument("instance")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_validate)
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DSFMError as err:
        sys.stderr.write(json.dumps({"error": err.category, "message": str(err)}) + "\n")
        return EXIT_CODES.get(err.category, 1)


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
