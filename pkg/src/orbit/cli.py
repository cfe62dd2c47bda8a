"""Command line: ``orbit calibrate | run | compare | audit``.

Every ``run`` flag can also come from a JSON config file (``--config``) using
the flag name with dashes turned into underscores; explicit flags win. The
output root resolves as ``--out`` > ``$ORBIT_OUT`` > config file > ``orbit_out``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import TransportError, ValidationError
from .search import SearchSettings

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
DEFAULT_OUT = "orbit_out"

RUN_DEFAULTS = {
    "variant": "flip",
    "reps": 10,
    "pop": 12,
    "gens": 20,
    "mut_prob": 0.3,
    "cross_prob": 0.7,
    "t_similarity": None,
    "noise_var": 0.1,
    "mcd_passes": 5,
    "sky_threshold": 0.7,
    "transform": "identity",
    "model": "builtin",
    "seed": 0,
    "out": None,
    "calibration_n": 1000,
    "no_archive": False,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _variant_list(text: str) -> list[str]:
    out = []
    for v in text.split(","):
        v = v.strip().replace("-", "_")
        if v not in ("flip", "noise", "sa", "mcd", "ground_truth", "random"):
            raise argparse.ArgumentTypeError(f"unknown variant {v!r}")
        out.append(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orbit", description="Ground-truth-free search for failure-inducing terrain images")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("calibrate", help="estimate the similarity threshold T")
    c.add_argument("--n", type=int, default=1000, help="random scenes to sample")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--transform", choices=("identity", "style-perturb"), default="identity")
    c.add_argument("--out", help="write the result as JSON here")

    # run flags default to None so that config-file values are only overridden when given
    r = sub.add_parser("run", help="run repeated searches and write archives and tables")
    r.add_argument("--config", help="JSON file with any of the flags below")
    r.add_argument("--variant", type=_variant_list, help="flip|noise|sa|mcd|ground-truth|random, comma separated")
    r.add_argument("--reps", type=int)
    r.add_argument("--pop", type=int)
    r.add_argument("--gens", type=int)
    r.add_argument("--mut-prob", type=float)
    r.add_argument("--cross-prob", type=float)
    r.add_argument("--t-similarity", type=float, help="archive threshold T (calibrated when omitted)")
    r.add_argument("--noise-var", type=float)
    r.add_argument("--mcd-passes", type=int)
    r.add_argument("--sky-threshold", type=float)
    r.add_argument("--transform", choices=("identity", "style-perturb"))
    r.add_argument("--model", help="builtin, builtin:<mode> or adapter:<command>")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--calibration-n", type=int, help="scenes used to calibrate T")
    r.add_argument("--no-archive", action="store_const", const=True, default=None,
                   help="random baseline keeps every relevant image")

    m = sub.add_parser("compare", help="compare one column of two metric tables")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.add_argument("--column", default="ground_truth_miou")
    m.add_argument("--paired", action="store_true")

    a = sub.add_parser("audit", help="re-derive persisted runs from their logs and archives")
    a.add_argument("root")
    a.add_argument("--transform", choices=("identity", "style-perturb"), default="identity")
    return p


def resolve_run_options(args: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    opts = dict(RUN_DEFAULTS)
    file_opts = {}
    if args.config:
        try:
            file_opts = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_opts, dict):
            raise UsageError("config file must hold a JSON object")
        file_opts = {k.replace("-", "_"): v for k, v in file_opts.items()}
        unknown = sorted(set(file_opts) - set(RUN_DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        if isinstance(file_opts.get("variant"), str):
            file_opts["variant"] = _variant_list(file_opts["variant"])
        elif "variant" in file_opts:
            file_opts["variant"] = _variant_list(",".join(file_opts["variant"]))
        opts.update(file_opts)
    for key in RUN_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if args.out is None and environ.get("ORBIT_OUT"):
        opts["out"] = environ["ORBIT_OUT"]
    if opts["out"] is None:
        opts["out"] = DEFAULT_OUT
    if isinstance(opts["variant"], str):
        opts["variant"] = _variant_list(opts["variant"])
    return opts


def plan_from_options(opts: dict):
    from .harness import ExperimentPlan

    settings = SearchSettings(
        population_size=opts["pop"],
        generations=opts["gens"],
        mutation_probability=opts["mut_prob"],
        crossover_probability=opts["cross_prob"],
    )
    return ExperimentPlan(
        variants=tuple(opts["variant"]),
        repetitions=opts["reps"],
        settings=settings,
        out_dir=str(opts["out"]),
        master_seed=opts["seed"],
        model=opts["model"],
        transform=opts["transform"],
        t_similarity=opts["t_similarity"],
        sky_threshold=opts["sky_threshold"],
        noise_variance=opts["noise_var"],
        mcd_passes=opts["mcd_passes"],
        calibration_images=opts["calibration_n"],
        random_archive=not opts["no_archive"],
    )


def _cmd_calibrate(args) -> int:
    from .fitness import calibrate_threshold

    t = calibrate_threshold(args.n, args.seed, args.transform)
    doc = {"threshold": t, "n": args.n, "seed": args.seed, "transform": args.transform}
    text = json.dumps(doc, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_run(args) -> int:
    from .harness import ensure_writable, run_experiment

    plan = plan_from_options(resolve_run_options(args))
    ensure_writable(plan.out_dir)
    results = run_experiment(plan)
    for (variant, rep), art in sorted(results.items()):
        print(f"{variant} rep {rep}: {len(art.rows)} archived images -> {art.run_dir}")
    print(f"tables: {Path(plan.out_dir) / 'metrics.csv'}, report: {Path(plan.out_dir) / 'report.json'}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .harness import compare_runs

    res = compare_runs(args.a, args.b, args.column, args.paired)
    print(json.dumps(res.to_dict(), sort_keys=True))
    return EXIT_OK


def _cmd_audit(args) -> int:
    from .harness import audit_run_dir, iter_run_dirs

    dirs = list(iter_run_dirs(args.root))
    if not dirs:
        raise ValidationError(f"no runs found under {args.root}")
    bad = 0
    for d in dirs:
        problems = audit_run_dir(d, transform=args.transform)
        print(f"{d}: {'ok' if not problems else '; '.join(problems)}")
        bad += bool(problems)
    return EXIT_OK if not bad else EXIT_RUNTIME


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        handler = {"calibrate": _cmd_calibrate, "run": _cmd_run, "compare": _cmd_compare,
                   "audit": _cmd_audit}[args.command]
        return handler(args)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"orbit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, TransportError, OSError, RuntimeError) as exc:
        print(f"orbit: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
