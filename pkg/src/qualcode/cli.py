"""Command-line entry point: ``qualcode <stage> [options]``.

Exit status is 0 on success, 1 on validation errors (bad input, missing
files or credentials) and 2 when the coder backend fails.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import AuthError, BackendError, QualcodeError
from .pipeline import ALL_KINDS, STAGES, RunConfig, run_pipeline

EXIT_OK, EXIT_INVALID, EXIT_BACKEND = 0, 1, 2

# flag dest -> config key
_FLAGS = ("corpus", "scheme", "defs", "n", "N", "seed", "backend", "epsilon",
          "max_items", "out", "workers", "templates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qualcode",
                                     description="Deductive coding reliability harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(STAGES) + ["pipeline"]:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--corpus")
        p.add_argument("--scheme")
        p.add_argument("--defs")
        p.add_argument("--templates")
        p.add_argument("--kinds", help=f"comma-separated subset of {','.join(ALL_KINDS)}")
        p.add_argument("--n", type=int, help="sample size (omit to search for one)")
        p.add_argument("--N", type=int, help="number of samples")
        p.add_argument("--seed", type=int)
        p.add_argument("--backend", choices=["http", "replay", "noisy"])
        p.add_argument("--epsilon", type=float)
        p.add_argument("--max-items", dest="max_items", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out")
        p.add_argument("--endpoint", help="chat-completion URL for the http backend")
        p.add_argument("--model", help="model name for the http backend")
        for col in ("id", "summary", "major", "sub"):
            p.add_argument(f"--col-{col}", dest=f"col_{col}", help=f"CSV column for {col}")
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {k: getattr(args, k) for k in _FLAGS}
    if args.kinds:
        overrides["kinds"] = [k.strip() for k in args.kinds.split(",") if k.strip()]
    cols = {c: getattr(args, f"col_{c}") for c in ("id", "summary", "major", "sub")}
    if args.config:
        cfg = RunConfig.load(args.config, overrides)
    else:
        d = {k: v for k, v in overrides.items() if v is not None}
        if "seed" not in d:
            raise QualcodeError("--seed is required (or set it in --config)")
        if "corpus" not in d:
            raise QualcodeError("--corpus is required (or set it in --config)")
        cfg = RunConfig.from_dict(d)
    if any(cols.values()):
        cfg.columns = {**cfg.columns, **{k: v for k, v in cols.items() if v}}
    if args.endpoint or args.model:
        cfg.http = {**cfg.http, **{k: v for k, v in
                                   (("endpoint", args.endpoint), ("model", args.model)) if v}}
    if cfg.backend == "http" and not {"endpoint", "model"} <= set(cfg.http):
        raise QualcodeError("the http backend needs an endpoint and a model")
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "pipeline":
            run_pipeline(cfg)
        else:
            STAGES[args.command](cfg)
    except AuthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (QualcodeError, FileNotFoundError, ValueError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{args.command}: ok ({cfg.out})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
