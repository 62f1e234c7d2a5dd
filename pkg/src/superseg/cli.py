"""Command-line entry point: ``superseg <command> ...``.

Exit codes: 0 success, 1 other failures (I/O, malformed files), 2 config
errors, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import codec, store
from .errors import BadChannel, ConfigError, InfeasibleSpec, LayoutMismatch, NumericalDivergence, SuperSegError
from .harness import (
    ExperimentConfig,
    emit_results,
    evaluate_cases,
    grid_sweep,
    load_cases,
    load_config,
    run_experiment,
)
from .metrics import aggregate, format_mean_std
from .synthgen import PhantomSpec, write_dataset
from .tinynet.checkpoint import load_checkpoint
from .volume import GridLayout, SuperImage

log = logging.getLogger("superseg")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3
# bad command-line parameters rather than bad files
USAGE_ERRORS = (ConfigError, LayoutMismatch, InfeasibleSpec, BadChannel)


def _triple(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.replace("x", ",").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected H,W,D, got {text!r}")
    return tuple(parts)


def _pair(text: str) -> tuple[float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return tuple(parts)


def _add_layout_flags(p, required=True):
    p.add_argument("--sh", type=int, required=required, help="tile rows")
    p.add_argument("--sw", type=int, required=required, help="tile columns")


def _add_experiment_flags(p):
    p.add_argument("--config", help="JSON file whose keys mirror ExperimentConfig fields")
    p.add_argument("--dataset", help="manifest.json (default: built-in synthetic task)")
    p.add_argument("--mode", choices=["si2d", "vol3d"])
    p.add_argument("--folds", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int, dest="batch_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="threads for validation scoring")
    p.add_argument("--timing", action="store_true", help="write wall-clock timings (breaks byte-identical output)")
    p.add_argument("--out", dest="out_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="superseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a phantom dataset and its manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=_triple, default=PhantomSpec.shape, help="H,W,D")
    p.add_argument("--radius", type=_pair, default=PhantomSpec.radius, help="blob semi-axis range LO,HI")
    p.add_argument("--noise", type=float, default=PhantomSpec.noise_sigma)

    p = sub.add_parser("encode", help="volume file -> super image file")
    p.add_argument("input")
    p.add_argument("output")
    _add_layout_flags(p)

    p = sub.add_parser("decode", help="super image file -> volume file")
    p.add_argument("input")
    p.add_argument("output")
    _add_layout_flags(p)

    p = sub.add_parser("export", help="super image (or volume with --sh/--sw) -> PGM")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--channel", type=int, default=0)
    _add_layout_flags(p, required=False)

    p = sub.add_parser("train", help="k-fold training and evaluation of one configuration")
    _add_experiment_flags(p)
    p.add_argument("--grid", help="SHxSW (si2d)")

    p = sub.add_parser("sweep", help="si2d runs over several grid layouts")
    _add_experiment_flags(p)
    p.add_argument("--layouts", default="all", help="'all' or comma-separated SHxSW list")

    p = sub.add_parser("eval", help="score a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="write per-case scores as JSON")
    return parser


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        k: getattr(args, k)
        for k in ("dataset", "mode", "folds", "epochs", "batch_size", "seed", "workers", "out_dir", "grid")
        if getattr(args, k, None) is not None
    }
    if args.timing:
        overrides["record_timing"] = True
    cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    return cfg


def cmd_gen(args):
    spec = PhantomSpec(shape=args.shape, radius=args.radius, noise_sigma=args.noise, seed=args.seed)
    spec.validate()
    print(write_dataset(spec, args.n, args.out))


def cmd_encode(args):
    v = store.read_volume(args.input)
    si = codec.to_super_image(v, GridLayout(args.sh, args.sw))
    store.write_volume(store.super_image_as_volume(si), args.output)


def _read_super_image(path, g: GridLayout):
    v = store.read_volume(path)
    if v.depth != 1:
        raise ConfigError(f"{path} has depth {v.depth}; super image files have depth 1")
    if v.height % g.sh or v.width % g.sw:
        raise ConfigError(f"{v.height}x{v.width} image does not split into a {g} grid")
    return SuperImage(v.data[:, 0], v.height // g.sh, v.width // g.sw, g, v.spacing)


def cmd_decode(args):
    g = GridLayout(args.sh, args.sw)
    si = _read_super_image(args.input, g)
    store.write_volume(codec.from_super_image(si, g, si.slice_height, si.slice_width), args.output)


def cmd_export(args):
    if (args.sh is None) != (args.sw is None):
        raise ConfigError("--sh and --sw must be given together")
    v = store.read_volume(args.input)
    if args.sh is not None:
        si = codec.to_super_image(v, GridLayout(args.sh, args.sw))
    elif v.depth == 1:
        si = _read_super_image(args.input, GridLayout(1, 1))
    else:
        raise ConfigError(f"{args.input} is a volume of depth {v.depth}; pass --sh/--sw")
    store.export_pgm(si, args.channel, args.output)


def cmd_train(args):
    cfg = _experiment_config(args)
    record = run_experiment(cfg)
    print(record.summary())
    if cfg.out_dir:
        for path in emit_results(record, cfg.out_dir, include_timing=cfg.record_timing).values():
            log.info("wrote %s", path)


def cmd_sweep(args):
    layouts = None if args.layouts == "all" else [GridLayout.parse(s) for s in args.layouts.split(",")]
    cfg = dataclasses.replace(_experiment_config(args), mode="si2d")
    for record in grid_sweep(cfg, layouts):
        print(record.summary())


def cmd_eval(args):
    model, meta = load_checkpoint(args.checkpoint)
    cfg = ExperimentConfig(
        dataset=args.manifest,
        mode=meta["mode"],
        grid=meta.get("grid") or "1x1",
        normalize=meta.get("normalize", True),
        clip_depth=meta.get("clip_depth"),
    )
    cases = load_cases(cfg)
    scores = evaluate_cases(cfg, model, cases)
    for (case_id, _, _), s in zip(cases, scores):
        print(f"{case_id}\tDSC {s.dsc:.3f}\tprecision {s.precision:.3f}\trecall {s.recall:.3f}")
    summary = {m: aggregate([getattr(s, m) for s in scores]) for m in ("dsc", "precision", "recall")}
    print("  ".join(f"{m} {format_mean_std(*v)}" for m, v in summary.items()))
    if args.out:
        doc = {
            "checkpoint": str(args.checkpoint),
            "meta": meta,
            "cases": [{"id": c[0], **s.to_dict()} for c, s in zip(cases, scores)],
            "aggregate": {m: {"mean": v[0], "std": v[1]} for m, v in summary.items()},
        }
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


COMMANDS = {
    "gen": cmd_gen,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "export": cmd_export,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except USAGE_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDivergence as e:
        print(f"numerical divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SuperSegError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
