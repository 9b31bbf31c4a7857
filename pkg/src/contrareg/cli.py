"""Command-line entry point.

Subcommands:
  generate-data  write train.csv / test.csv / manifest.json from a data spec
  run            train one experiment config and write its artifacts
  compare        run several configs over several seeds, emit comparison.csv
  eval           score a predictions CSV against a labels CSV
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, evaluate
from ._kernels import active_backend
from .datagen import SyntheticSpec, generate, load_csv, save_csv, write_manifest
from .errors import ContraregError, CsvFormatError
from .experiment import compare_methods, parse_config, run_experiment

EPOCH_NOTE = "epochs.csv columns: epoch,train_loss,val_loss,expected_penalty"


def _read_text(path):
    return Path(path).read_text()


def _load_label_column(path):
    """Read a label vector: either a one-column 'y' CSV or a dataset CSV."""
    first = Path(path).read_text().splitlines()
    if not first:
        raise CsvFormatError(f"{path}: empty file")
    if first[0].strip() == "y":
        values = []
        for lineno, line in enumerate(first[1:], start=2):
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
        if not values:
            raise CsvFormatError(f"{path}: no data rows")
        return values
    return load_csv(path).y


def cmd_generate_data(args):
    cfg = parse_config(_read_text(args.spec))
    if not isinstance(cfg.data, SyntheticSpec):
        raise CsvFormatError("generate-data needs a synthetic data spec")
    spec = cfg.data if args.seed is None else replace(cfg.data, seed=args.seed)
    train, test = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(out / "train.csv", train)
    save_csv(out / "test.csv", test)
    write_manifest(
        out / "manifest.json", spec, {"train": "train.csv", "test": "test.csv"}
    )
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")


def cmd_run(args):
    cfg = parse_config(_read_text(args.config))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    result = run_experiment(cfg, pairs_debug=args.pairs_debug)
    payload = result.metrics_json_dict()
    if cfg.output_dir is None:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    else:
        all_metrics = result.metrics.shots["all"]
        print(
            f"method={cfg.method} seed={cfg.seed} "
            f"mae_all={all_metrics.mae:.4f} wall={result.wall_clock:.1f}s "
            f"-> {cfg.output_dir} ({EPOCH_NOTE})"
        )


def cmd_compare(args):
    configs = [parse_config(_read_text(p)) for p in args.configs]
    seeds = [int(s) for s in args.seeds.split(",") if s]
    table = compare_methods(configs, seeds, output_dir=args.out)
    print(f"wrote {Path(args.out) / 'comparison.csv'} ({len(table.rows)} rows)")


def cmd_eval(args):
    preds = _load_label_column(args.preds)
    labels = _load_label_column(args.labels)
    if args.train_labels is not None:
        partition = evaluate.assign_shots(
            _load_label_column(args.train_labels), args.bin_width
        )
        report = evaluate.metrics(preds, labels, partition)
    else:
        report = evaluate.overall_metrics(preds, labels)
    payload = report.to_json_dict()
    if args.out is not None:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()


def build_parser():
    parser = argparse.ArgumentParser(
        prog="contrareg",
        description="Imbalanced-regression training with a contrastive feature regularizer.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"contrareg {__version__} (kernels: {active_backend()})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="emit CSVs from a synthetic data spec")
    p.add_argument("--spec", required=True, help="config file with a data.* section")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override data.seed")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("run", help="train one experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override output_dir")
    p.add_argument("--seed", type=int, default=None, help="override seed")
    p.add_argument(
        "--pairs-debug",
        action="store_true",
        help="also write pairs_debug.json (first batch's pair adjacency)",
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run configs x seeds, emit comparison.csv")
    p.add_argument("--configs", required=True, nargs="+")
    p.add_argument("--seeds", required=True, help="comma-separated, e.g. 1,2,3")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="score predictions against labels")
    p.add_argument("--preds", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--train-labels", default=None, help="enables shot partitioning")
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ContraregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
