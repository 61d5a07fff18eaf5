"""Command-line entry point.

Stages share state through the ``--out`` directory::

    config.txt            resolved run configuration (key = value)
    train.npz, test.npz   realizations, plus labels once ``label`` has run
    datasets/             encoded dataset files per feature kind and split
    models/               checkpoints and normalizations per approach
    results/              summary.csv, rates.csv, cdf.csv, loss_curves.csv, manifest.txt

``run-setup`` performs every stage in one process.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import harness
from .harness import APPROACHES, LEARNED, Experiment, RunConfig
from .learning import KINDS, load_policy, save_policy, write_dataset

log = logging.getLogger("risphase")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not out or any(v < 1 for v in out):
        raise argparse.ArgumentTypeError("layer widths must be positive")
    return out


def _approaches(text: str) -> tuple[str, ...]:
    names = tuple(a.strip() for a in text.split(",") if a.strip())
    if "all" in names:
        return APPROACHES
    bad = set(names) - set(APPROACHES)
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown approach(es) {sorted(bad)}; choose from {', '.join(APPROACHES)}")
    return names


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("runs/default"), help="run directory")
    common.add_argument("--setup", type=int, choices=(1, 2, 3), help="reference scenario")
    common.add_argument("--config", type=Path, help="flat key = value file; unknown keys are errors")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--n-train", type=int, dest="n_train")
    common.add_argument("--n-test", type=int, dest="n_test")
    common.add_argument("--approach", type=_approaches, help="comma-separated approaches or 'all'")
    common.add_argument("--nn-dims", type=_int_list, dest="nn_dims",
                        help="hidden layer widths used by every network, e.g. 256,128")
    common.add_argument("--oracle-budget", type=int, dest="oracle_budget")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="risphase", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="draw train/test realizations")
    sub.add_parser("label", parents=[common], help="exhaustive labels and dataset files")
    sub.add_parser("train", parents=[common], help="train the learned approaches")
    sub.add_parser("eval", parents=[common], help="evaluate approaches and write result files")
    sub.add_parser("run-setup", parents=[common], help="all stages in one go")
    rep = sub.add_parser("report", parents=[common], help="print summaries found under --out")
    rep.add_argument("--format", choices=("table", "csv"), default="table")
    return p


def resolve_config(args) -> RunConfig:
    """Saved run config (if any), then --setup, then --config, then flags."""
    saved = args.out / "config.txt"
    cfg = harness.load_config(saved) if saved.exists() else RunConfig()
    if args.setup is not None:
        cfg = harness.config_for_setup(args.setup, cfg)
    if args.config is not None:
        cfg = harness.load_config(args.config, cfg)
    flags = {k: getattr(args, k) for k in ("seed", "n_train", "n_test", "oracle_budget")}
    cfg = dataclasses.replace(cfg, **{k: v for k, v in flags.items() if v is not None})
    if args.approach is not None:
        cfg = dataclasses.replace(cfg, approaches=args.approach)
    if args.nn_dims is not None:
        cfg = dataclasses.replace(cfg, cen_hidden=args.nn_dims, ind_hidden=args.nn_dims)
    return cfg


def _write_config(cfg: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(harness.dump_config(cfg))


def _need(path: Path, stage: str):
    if not path.exists():
        raise SystemExit(f"error: {path} not found; run '{stage}' first")


def _load(exp: Experiment, out: Path, labelled: bool):
    _need(out / "train.npz", "gen-data")
    exp.train_samples, exp.train_labels = harness.load_split(out / "train.npz", exp.scene)
    exp.test_samples, exp.test_labels = harness.load_split(out / "test.npz", exp.scene)
    if labelled and exp.train_labels is None:
        raise SystemExit(f"error: {out / 'train.npz'} has no labels; run 'label' first")


def cmd_gen_data(cfg, out):
    exp = Experiment(cfg)
    exp.draw()
    harness.save_split(out / "train.npz", exp.train_samples)
    harness.save_split(out / "test.npz", exp.test_samples)
    print(f"wrote {len(exp.train_samples)} train and {len(exp.test_samples)} test realizations to {out}")


def cmd_label(cfg, out):
    exp = Experiment(cfg)
    _load(exp, out, labelled=False)
    exp.label()
    harness.save_split(out / "train.npz", exp.train_samples, exp.train_labels)
    harness.save_split(out / "test.npz", exp.test_samples, exp.test_labels)
    ddir = out / "datasets"
    ddir.mkdir(exist_ok=True)
    for kind in KINDS:
        for split in ("train", "test"):
            for ds in exp.datasets(kind, split):
                suffix = "" if ds.m is None else f"_{ds.m}"
                write_dataset(ds, ddir / f"{kind}{suffix}_{split}.txt")
    print(f"labelled {len(exp.train_samples)} + {len(exp.test_samples)} samples; datasets in {ddir}")


def _kind(approach: str) -> str:
    return approach.replace("_fl", "_ind")


def cmd_train(cfg, out):
    exp = Experiment(cfg)
    _load(exp, out, labelled=True)
    for a in cfg.approaches:
        if a in LEARNED:
            save_policy(exp.train(a), out / "models", a)
            print(f"trained {a}")


def cmd_eval(cfg, out):
    exp = Experiment(cfg)
    _load(exp, out, labelled=True)
    for a in cfg.approaches:
        if a in LEARNED:
            _need(out / "models", "train")
            exp.policies[a] = load_policy(out / "models", a, _kind(a), cfg.setup.num_ris)
    metrics = exp.evaluate()
    harness.emit_results(metrics, out / "results", cfg)
    _print_summary(harness.read_summary(out / "results"), out / "results")


def cmd_run_setup(cfg, out):
    metrics, exp = harness.run_experiment(cfg)
    harness.save_split(out / "train.npz", exp.train_samples, exp.train_labels)
    harness.save_split(out / "test.npz", exp.test_samples, exp.test_labels)
    for a, pol in exp.policies.items():
        save_policy(pol, out / "models", a)
    harness.emit_results(metrics, out / "results", cfg)
    _print_summary(harness.read_summary(out / "results"), out / "results")


def _print_summary(rows, where, fmt="table"):
    if fmt == "csv":
        print((Path(where) / "summary.csv").read_text(), end="")
        return
    print(f"== {where}")
    print(f"{'approach':<12}{'mean rate':>12}{'normalized':>12}{'5% outage':>12}")
    for a, r in rows.items():
        print(f"{a:<12}{r['mean_rate']:>12.4f}{r['normalized_rate']:>12.4f}{r['outage_rate_5pct']:>12.4f}")


def cmd_report(args):
    found = sorted(args.out.rglob("summary.csv"))
    if not found:
        raise SystemExit(f"error: no summary.csv under {args.out}")
    for path in found:
        _print_summary(harness.read_summary(path.parent), path.parent, args.format)


COMMANDS = {"gen-data": cmd_gen_data, "label": cmd_label, "train": cmd_train,
            "eval": cmd_eval, "run-setup": cmd_run_setup}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        cmd_report(args)
        return 0
    try:
        cfg = resolve_config(args)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_config(cfg, args.out)
    COMMANDS[args.command](cfg, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
