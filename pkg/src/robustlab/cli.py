"""Command-line entry point.

Subcommands: gen-data, train, attack-eval, distort, analyze, report,
repro-all. Exit codes: 0 success, 2 config schema violation, 3 missing
input artifact, 4 acceptance-check failure in repro-all, 1 other errors.

``ROBUSTLAB_THREADS`` caps BLAS worker threads; it must be set before numpy
is first imported, which this module arranges when used as the entry point.
"""

import os

if "ROBUSTLAB_THREADS" in os.environ:
    _n = os.environ["ROBUSTLAB_THREADS"]
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _n)

import argparse
import json
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_ACCEPTANCE = 4


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="robustlab",
        description="Train small CNNs under standard/adversarial/"
                    "texture-randomized regimes on a synthetic shape-vs-"
                    "texture dataset and reproduce the analysis battery.")
    parser.add_argument("--config", metavar="FILE",
                        help="JSON experiment config (defaults used if omitted)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the run directory")
    parser.add_argument("--arch", help="override the architecture")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate and persist all dataset shards")

    p = sub.add_parser("train", help="train one regime")
    p.add_argument("--regime", required=True,
                   choices=["standard", "adversarial", "texture-randomized"])

    sub.add_parser("attack-eval",
                   help="clean and PGD accuracy for all trained models")

    p = sub.add_parser("distort", help="emit a distorted copy of the val shard")
    p.add_argument("--kind", required=True,
                   choices=["scramble", "gauss_noise", "gauss_blur",
                            "contrast", "bw", "silhouette"])
    p.add_argument("--level", type=int, default=1, choices=[1, 2, 3])
    p.add_argument("--p", type=int, default=2, choices=[1, 2, 4, 8],
                   help="scramble grid")
    p.add_argument("--png", action="store_true", help="also export PNGs")

    p = sub.add_parser("analyze", help="run one analysis over trained models")
    p.add_argument("kind", choices=["bias", "tv", "match", "noise-tv",
                                    "dissect", "ablate"])

    sub.add_parser("report", help="render the HTML/SVG report from artifacts")
    sub.add_parser("repro-all",
                   help="full study: all seeds, regimes, analyses, report")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    from .config import ConfigError, load_config, validate_config
    from .errors import RobustLabError

    try:
        cfg = load_config(args.config) if args.config else validate_config({})
    except ConfigError as e:
        print(f"config error at {e.pointer}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg["seeds"] = [args.seed]
    if args.out:
        cfg["out"] = args.out
    if args.arch:
        cfg["arch"] = args.arch

    from . import runner
    from .report import render_report

    ctx = runner.RunContext(cfg["out"], cfg)
    seed = cfg["seed"]

    try:
        if args.command == "gen-data":
            for path in runner.gen_data(ctx, seed):
                print(path)
        elif args.command == "train":
            print(runner.train_regime(ctx, seed, args.regime))
        elif args.command == "attack-eval":
            print(runner.attack_eval(ctx, seed))
        elif args.command == "distort":
            path = _distort(ctx, seed, args)
            print(path)
        elif args.command == "analyze":
            print(runner.analyze(ctx, seed, args.kind))
        elif args.command == "report":
            print(render_report(ctx.run_dir))
        elif args.command == "repro-all":
            ok = runner.repro_all(ctx)
            if not ok:
                failing = [c.check_id for c in runner.acceptance_checks(ctx)
                           if not c.passed]
                print("failing criteria: " + ", ".join(failing), file=sys.stderr)
                return EXIT_ACCEPTANCE
    except ConfigError as e:
        print(f"config error at {e.pointer}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except runner.MissingArtifact as e:
        print(str(e), file=sys.stderr)
        return EXIT_MISSING
    except RobustLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return EXIT_OK


def _distort(ctx, seed: int, args) -> str:
    import time

    from .distortions import DistortionConfig, distort_shard
    from .shardio import export_png, read_shard, write_shard

    t0 = time.perf_counter()
    src = ctx.need(ctx.shard_path(seed, "val"))
    shard = read_shard(src)
    kwargs = {"kind": args.kind, "seed": seed}
    if args.kind == "scramble":
        kwargs["p"] = args.p
    dcfg = DistortionConfig(**kwargs)
    out = distort_shard(shard, dcfg, args.level)
    tag = f"val_{args.kind}" + (f"_p{args.p}" if args.kind == "scramble" else
                                f"_l{args.level}" if args.kind in
                                ("gauss_noise", "gauss_blur", "contrast") else "")
    path = ctx.shard_path(seed, tag)
    write_shard(out, path)
    outputs = [path]
    if args.png:
        png_dir = os.path.join(ctx.seed_dir(seed), "png", tag)
        export_png(out, png_dir)
        outputs.append(os.path.join(png_dir, "meta.jsonl"))
    ctx.record(f"distort-{tag}[s{seed}]", [src], outputs,
               time.perf_counter() - t0)
    return path


if __name__ == "__main__":
    sys.exit(main())
