"""Command line entry point: ``sdg-gan <gen-data|train|eval|sweep-width|repro-table1>``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .nn import read_params, write_params
from .quantile import bimodal_mixture, build_continuous_quantile, sweep_width
from .synthetic import PRESETS, SynthSpec, default_path, generate, read_dataset, write_dataset
from .trainer import (
    MODELS,
    NonFiniteLossError,
    TrainConfig,
    evaluate_model,
    format_table,
    run_benchmark,
    train_gan,
    write_metrics,
)

log = logging.getLogger("sdg_gan")


def _int_list(text: str) -> list[int]:
    """``"4,16,64"`` -> [4, 16, 64]; used with nargs so spaces work too."""
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _flatten(groups) -> list[int]:
    return [v for g in groups for v in g]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value file with TrainConfig fields")
    group = p.add_argument_group("config overrides")
    for f in dataclasses.fields(TrainConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar=f.name.upper())


def _build_config(args) -> TrainConfig:
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    changes = {}
    for f in dataclasses.fields(TrainConfig):
        text = getattr(args, "cfg_" + f.name)
        if text is not None:
            changes[f.name] = TrainConfig.parse_value(f.name, text)
    if "generator" in changes and changes["generator"] in MODELS:
        changes["generator"] = MODELS[changes["generator"]]
    return config.replace(**changes)


def cmd_gen_data(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.kind:
        for seed in _flatten(args.seed):
            dataset = generate(SynthSpec.preset(name, seed=seed, n=args.n))
            path = default_path(out, name, seed)
            write_dataset(dataset, path)
            print(path)
    return 0


def cmd_train(args) -> int:
    config = _build_config(args)
    dataset = read_dataset(args.data)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = args.name or f"{Path(args.data).stem}_seed{config.seed}"
    try:
        result = train_gan(config, dataset)
    except NonFiniteLossError as exc:
        write_metrics(exc.records, out / f"metrics_{run}.csv")
        raise
    write_metrics(result.records, out / f"metrics_{run}.csv")
    write_params(result.generator, out / f"generator_{run}.bin")
    if result.records:
        print(f"final js {result.records[-1].js:.6f}")
    print(out / f"generator_{run}.bin")
    return 0


def cmd_eval(args) -> int:
    generator = read_params(args.params)
    dataset = read_dataset(args.data)
    js = evaluate_model(generator, dataset, args.n_samples, args.seed, args.scatter)
    print(f"{js:.6f}")
    return 0


def cmd_sweep_width(args) -> int:
    qmap = build_continuous_quantile(bimodal_mixture())
    widths, seeds = _flatten(args.widths), _flatten(args.seeds)
    rows = sweep_width(qmap, widths, seeds, steps=args.steps)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep_width.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["width", "seed", "mse", "js"])
        for r in rows:
            w.writerow([r["width"], r["seed"], repr(r["mse"]), repr(r["js"])])
    for width in widths:
        js = [r["js"] for r in rows if r["width"] == width]
        print(f"width {width:5d}  median js {np.median(js):.5f}")
    return 0


def cmd_repro_table1(args) -> int:
    base = _build_config(args)
    results = run_benchmark(
        args.out_dir,
        iters=args.iters,
        seeds=range(args.first_seed, args.first_seed + args.seeds),
        final_samples=args.final_samples,
        datasets=args.datasets,
        base=base,
    )
    print(format_table(results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdg-gan", description="Stochastic deep generator experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic datasets")
    p.add_argument("--kind", nargs="+", default=sorted(PRESETS), choices=sorted(PRESETS))
    p.add_argument("--seed", nargs="+", type=_int_list, default=[[0]], help="one or more seeds")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--out-dir", default="data")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one generator on a dataset file")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--name", help="run name used in output file names")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved generator against a dataset's ground truth")
    p.add_argument("--params", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scatter", type=Path, help="write projected scatter CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-width", help="fit tanh networks of several widths to a bimodal quantile map")
    p.add_argument("--widths", nargs="+", type=_int_list, default=[[4, 16, 64, 256]])
    p.add_argument("--seeds", nargs="+", type=_int_list, default=[[0, 1, 2]])
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--out-dir", default="runs")
    p.set_defaults(func=cmd_sweep_width)

    p = sub.add_parser("repro-table1", help="train all models on all synthetic datasets")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds")
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--datasets", nargs="+", default=sorted(PRESETS), choices=sorted(PRESETS))
    p.add_argument("--final-samples", type=int, default=100_000)
    p.add_argument("--out-dir", default="runs/table1")
    _add_config_flags(p)
    p.set_defaults(func=cmd_repro_table1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "repro-table1":
        # --iters is a config override; repro-table1 passes it explicitly
        args.iters = int(args.cfg_iters) if args.cfg_iters is not None else 5000
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, NonFiniteLossError) as exc:
        print(f"sdg-gan: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
