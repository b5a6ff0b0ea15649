"""Command line interface: ``volterrom <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline
from .identification import KernelSet, reconstruct
from .signals import read_signal_csv, signal_to_csv
from .synthaero import ParameterPoint

log = logging.getLogger("volterrom")


def _floats(text: str) -> list:
    """``"0.5,0.7"`` or ``"start:stop:count"`` (inclusive linspace)."""
    if text.count(":") == 2:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n)).tolist()
    return [float(v) for v in text.split(",") if v.strip()]


def load_config(args) -> pipeline.RunConfig:
    if args.config:
        cfg = pipeline.RunConfig.load(args.config)
    elif args.out and (Path(args.out) / "config.json").exists() and args.command != "gen" \
            and args.command != "run-all":
        cfg = pipeline.RunConfig.load(Path(args.out) / "config.json")
    else:
        cfg = pipeline.RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    for key in ("interpolator", "search_trials", "n_jobs"):
        v = getattr(args, key, None)
        if v is not None:
            changes[key] = v
    return replace(cfg, **changes) if changes else cfg


def cmd_gen(cfg, args):
    plan = pipeline.generate(cfg)
    print(f"wrote {len(plan.points)} points to {cfg.out}")


def cmd_identify(cfg, args):
    kernels = pipeline.identify(cfg)
    print(f"identified kernels for {len(kernels)} points")


def cmd_train(cfg, args):
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    pipeline._write(Path(cfg.out) / "config.json", cfg.dumps())
    preds = pipeline.train(cfg)
    print(f"trained: {', '.join(preds) or 'nothing'}")


def cmd_predict(cfg, args):
    if args.mach is None and args.alpha0 is None:
        result = pipeline.predict_validation(cfg)
        for kind, preds in result.items():
            print(f"{kind}: predicted kernels for {len(preds)} validation points")
        return
    if args.mach is None or args.alpha0 is None:
        raise pipeline.StageError("predict", "--mach and --alpha0 must be given together")
    kind = args.interpolator or "gpr"
    models = Path(cfg.out) / "models"
    steady = pipeline.gpr.GprModel.from_dict(json.loads((models / "steady_gpr.json").read_text()))
    cl0 = float(pipeline.gpr.predict(steady, [args.mach, args.alpha0])[0][0])
    point = ParameterPoint(args.mach, args.alpha0, cl0)
    ks = pipeline.KernelPredictor.load(kind, models).predict(pipeline.features(point, cfg))
    d = ks.to_dict()
    d["point"] = {"mach": args.mach, "alpha0": args.alpha0, "steady_cl": cl0}
    text = json.dumps(d, indent=1, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_reconstruct(cfg, args):
    if args.kernels:
        if not args.input:
            raise pipeline.StageError("reconstruct", "--kernels requires --input")
        ks = KernelSet.from_json(Path(args.kernels).read_text())
        y = reconstruct(ks, read_signal_csv(args.input))
        text = signal_to_csv(y)
        if args.output:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
        return
    rep = pipeline.report(cfg)
    _print_summary(rep)


def _print_summary(rep):
    for kind, s in rep.summary().items():
        print(f"{kind}: {s['n_points']} validation points, "
              f"median small-sinusoid error {s['median_sin_small_rel']:.3%}, "
              f"median large-sinusoid error vs identified kernels "
              f"{s.get('median_sin_large_ref_rel', float('nan')):.3%}")


def cmd_sweep(cfg, args):
    spec = pipeline.InputSpec(args.input, args.amplitude, args.k)
    cases = pipeline.sweep(cfg, _floats(args.machs), _floats(args.alpha0s), spec,
                           args.interpolator or "gpr", args.sweep_out)
    flagged = sum(c["extrapolation"] for c in cases)
    print(f"wrote {len(cases)} sweep cases ({flagged} extrapolated)")


def cmd_run_all(cfg, args):
    rep = pipeline.run_algorithm1(cfg)
    _print_summary(rep)


def cmd_ingest(cfg, args):
    dataset = pipeline.ingest_external(args.dataset)
    for err in dataset.errors:
        print(f"volterrom: [ingest] {err}", file=sys.stderr)
    if not dataset.records:
        raise pipeline.StageError("ingest", "no valid records")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    kernels = pipeline.identify_dataset(dataset, cfg, cfg.out)
    print(f"ingested {len(dataset.records)} records, identified {len(kernels)} points")


COMMANDS = {
    "gen": (cmd_gen, "sample the parameter box and simulate step responses"),
    "identify": (cmd_identify, "identify kernels from generated signals"),
    "train": (cmd_train, "fit the kernel interpolators"),
    "predict": (cmd_predict, "predict kernels for validation points or one query point"),
    "reconstruct": (cmd_reconstruct, "validation report, or reconstruct one input signal"),
    "sweep": (cmd_sweep, "reconstruct responses over a Mach x incidence grid"),
    "run-all": (cmd_run_all, "run every stage end to end"),
    "ingest": (cmd_ingest, "load an external dataset and identify its kernels"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volterrom",
                                description="Volterra-kernel reduced-order models")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name, help=help_) for name, (_, help_) in COMMANDS.items()}
    for name in ("train", "run-all"):
        parsers[name].add_argument("--interpolator", choices=("gpr", "fcnn", "both", "none"))
        parsers[name].add_argument("--search-trials", dest="search_trials", type=int)
    for name in ("gen", "identify", "train", "run-all"):
        parsers[name].add_argument("--jobs", dest="n_jobs", type=int)

    pr = parsers["predict"]
    pr.add_argument("--mach", type=float)
    pr.add_argument("--alpha0", type=float)
    pr.add_argument("--interpolator", choices=("gpr", "fcnn"))
    pr.add_argument("--output", help="write kernel JSON here instead of stdout")

    rc = parsers["reconstruct"]
    rc.add_argument("--kernels", help="kernel JSON; reconstruct --input instead of reporting")
    rc.add_argument("--input", help="input signal CSV (tau,value)")
    rc.add_argument("--output", help="output CSV (default stdout)")

    sw = parsers["sweep"]
    sw.add_argument("--machs", required=True, help="comma list or start:stop:count")
    sw.add_argument("--alpha0s", required=True, help="comma list or start:stop:count")
    sw.add_argument("--input", choices=("step", "harmonic"), default="step")
    sw.add_argument("--amplitude", type=float, default=1.0)
    sw.add_argument("--k", type=float, default=0.3, help="reduced frequency")
    sw.add_argument("--interpolator", choices=("gpr", "fcnn"))
    sw.add_argument("--sweep-out", dest="sweep_out", help="directory (default OUT/sweep)")

    parsers["ingest"].add_argument("dataset", help="directory containing manifest.json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = load_config(args)
        COMMANDS[args.command][0](cfg, args)
    except pipeline.StageError as exc:
        print(f"volterrom: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"volterrom: [{args.command}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
