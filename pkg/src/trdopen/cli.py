"""Command line entry point: ``trdopen <subcommand>``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import rdp
from .config import ConfigError, experiment_from_config, read_config, recipe_from_config
from .harness.crossval import (CrossValReport, FoldResult, build_model, run_cross_validation,
                               write_report)
from .harness.cubefile import write_cube
from .harness.manifest import DatasetManifest, ManifestRecord, read_manifest, write_manifest
from .harness.training import evaluate, load_inputs, train
from .model import load_model, save_model, tiny_baseline_gradcheck, tiny_open3d_gradcheck
from .nn.gradcheck import run_layer_suite
from .radar_sim import RawSignal, generate_dataset, plan_records

log = logging.getLogger("trdopen")


def _common(p: argparse.ArgumentParser, config_help: str):
    p.add_argument("--config", type=Path, help=config_help)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--seed", type=int, help="master seed")


def _experiment(args):
    overrides = list(args.overrides)
    if getattr(args, "manifest", None):
        overrides.append(f"experiment.manifest={Path(args.manifest).resolve()}")
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    cp = read_config(args.config, overrides)
    base = args.config.parent if args.config else Path(".")
    return experiment_from_config(cp, base)


def cmd_simulate(args) -> int:
    overrides = list(args.overrides)
    if args.preset:
        overrides.append(f"dataset.preset={args.preset}")
    if args.seed is not None:
        overrides.append(f"dataset.seed={args.seed}")
    recipe = recipe_from_config(read_config(args.config, overrides))
    if args.dry_run:
        print(f"{len(plan_records(recipe))} records")
        return 0
    manifest = generate_dataset(recipe, args.out)
    print(f"wrote {len(manifest)} records to {args.out}")
    return 0


def cmd_process(args) -> int:
    """Raw ``.npy`` complex recordings listed in an index TSV -> cube dataset."""
    recipe = recipe_from_config(read_config(args.config, args.overrides))
    p = recipe.params
    out = Path(args.out)
    (out / "cubes").mkdir(parents=True, exist_ok=True)
    index_dir = args.index.parent
    records = []
    with open(args.index, newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            samples = np.load(index_dir / row["path"]).astype(np.complex128).reshape(-1)
            raw = RawSignal(samples, p, int(row["antenna_id"]))
            cube = rdp.range_doppler_process(raw, recipe.rdp_options)
            for crop, start in enumerate(rdp.crop_offsets(p.frames, recipe.crop_len,
                                                          recipe.crop_count)):
                rid = recipe.record_id(int(row["test_id"]), raw.antenna_id, crop)
                write_cube(out / "cubes" / f"{rid}.trdc", cube[start:start + recipe.crop_len])
                records.append(ManifestRecord(rid, int(row["test_id"]), raw.antenna_id,
                                              int(row["class_label"]), crop, f"cubes/{rid}.trdc"))
    write_manifest(DatasetManifest(records), out / "manifest.tsv")
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_train(args) -> int:
    exp = _experiment(args)
    manifest = read_manifest(exp.manifest_path)
    if args.held_out is not None:
        manifest = manifest.subset(r for r in manifest if r.antenna_id != args.held_out)
    inputs = load_inputs(manifest, exp.model_kind)
    model = build_model(exp.model_kind, [x.shape[1:] for x in inputs], manifest.num_classes,
                        exp.branch_spec, exp.hidden, exp.seed)
    model, history = train(model, manifest, exp.train, inputs)
    save_model(model, args.model_out)
    for h in history:
        print(f"epoch {h.epoch}\tloss {h.loss:.6f}\ttrain_acc {h.train_accuracy:.4f}\tlr {h.lr:.3g}")
    print(f"saved model to {args.model_out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    manifest = read_manifest(args.manifest)
    if args.antenna is not None:
        manifest = manifest.subset(r for r in manifest if r.antenna_id == args.antenna)
    metrics = evaluate(model, manifest)
    print(f"accuracy\t{metrics.accuracy:.6f}")
    print("confusion (rows = true class):")
    for row in metrics.confusion:
        print("\t".join(str(int(v)) for v in row))
    if args.out:
        fold = FoldResult(args.antenna if args.antenna is not None else -1, metrics, [], 0,
                          len(manifest))
        write_report(CrossValReport([fold], model.num_classes), args.out)
    return 0


def cmd_crossval(args) -> int:
    exp = _experiment(args)
    if args.out is not None:
        exp = replace(exp, output_dir=args.out)
    report = run_cross_validation(exp)
    for f in report.folds:
        print(f"held-out antenna {f.held_out}: accuracy {f.metrics.accuracy:.4f}")
    print(f"mean accuracy {report.mean_accuracy:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    ok = True
    for name, seed, err, tol in run_layer_suite(range(args.seeds)):
        passed = err < tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}\t{name}\tseed={seed}\terr={err:.3e}\ttol={tol:.0e}")
    for name, fn in (("open3d_end_to_end", tiny_open3d_gradcheck),
                     ("baseline2d_end_to_end", tiny_baseline_gradcheck)):
        for seed in range(args.seeds):
            err = fn(seed)
            passed = err < 1e-4
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'}\t{name}\tseed={seed}\terr={err:.3e}\ttol=1e-04")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trdopen", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cube dataset")
    _common(p, "dataset recipe file")
    p.add_argument("--preset", choices=["smoke", "default", "range", "paper"])
    p.add_argument("--out", type=Path, default=Path("dataset"))
    p.add_argument("--dry-run", action="store_true", help="only count the records")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("process", help="turn raw .npy recordings into cubes")
    _common(p, "recipe file giving radar parameters and crop policy")
    p.add_argument("index", type=Path,
                   help="TSV with columns path, test_id, antenna_id, class_label")
    p.add_argument("--out", type=Path, default=Path("dataset"))
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("train", help="train one model on a manifest")
    _common(p, "experiment config file")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--held-out", type=int, help="exclude this antenna from training")
    p.add_argument("--model-out", type=Path, default=Path("model.open"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--antenna", type=int, help="only records from this antenna")
    p.add_argument("--out", type=Path, help="write report.tsv / confusion.tsv here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="leave-one-antenna-out cross-validation")
    _common(p, "experiment config file")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--out", type=Path, help="report directory (overrides config)")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
