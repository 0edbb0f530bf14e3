"""Leave-one-antenna-out cross-validation and report files."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..model import DEFAULT_BRANCH, DEFAULT_HIDDEN, BranchSpec, MultiBranchNet, \
    build_baseline_2d, build_open3d
from .manifest import DatasetManifest, read_manifest
from .training import EpochStats, Metrics, TrainConfig, evaluate, load_inputs, train

log = logging.getLogger(__name__)


def split_leave_one_antenna_out(manifest: DatasetManifest, held_out: int):
    """``(train, test)`` sub-manifests; test holds exactly antenna ``held_out``."""
    if held_out not in manifest.antenna_ids:
        raise ValueError(f"antenna {held_out} not present (have {manifest.antenna_ids})")
    train_recs = [r for r in manifest if r.antenna_id != held_out]
    test_recs = [r for r in manifest if r.antenna_id == held_out]
    return manifest.subset(train_recs), manifest.subset(test_recs)


@dataclass(frozen=True)
class ExperimentConfig:
    manifest_path: Path
    model_kind: str = "open3d"
    branch_spec: BranchSpec = DEFAULT_BRANCH
    hidden: int = DEFAULT_HIDDEN
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    output_dir: Path | None = None


def fold_seed(master_seed: int, held_out: int, stream: int = 0) -> int:
    """Seed for one fold; stream 0 initializes the model, stream 1 drives shuffling."""
    return int(np.random.SeedSequence([master_seed, held_out, stream]).generate_state(1)[0])


def build_model(kind: str, input_dims, num_classes: int, branch_spec: BranchSpec, hidden: int,
                seed: int) -> MultiBranchNet:
    """``input_dims`` is the per-record input stack shape minus the batch axis."""
    if kind == "open3d":
        (m, n), (t, _), _ = input_dims
        return build_open3d((t, m, n), num_classes, branch_spec, hidden, seed)
    if kind == "baseline2d":
        return build_baseline_2d(input_dims[0], num_classes, branch_spec, hidden, seed)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class FoldResult:
    held_out: int
    metrics: Metrics
    history: list[EpochStats]
    n_train: int
    n_test: int


@dataclass
class CrossValReport:
    folds: list[FoldResult]
    num_classes: int

    @property
    def per_fold(self) -> list[float]:
        return [f.metrics.accuracy for f in self.folds]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.per_fold))

    @property
    def confusion(self) -> np.ndarray:
        return sum((f.metrics.confusion for f in self.folds),
                   np.zeros((self.num_classes, self.num_classes), dtype=np.int64))

    def metrics(self) -> Metrics:
        conf = self.confusion
        return Metrics(float(np.trace(conf) / conf.sum()), conf, self.per_fold)


def run_cross_validation(config: ExperimentConfig, manifest: DatasetManifest | None = None,
                         ) -> CrossValReport:
    """Train and test one fresh model per held-out antenna."""
    if manifest is None:
        manifest = read_manifest(config.manifest_path)
    antennas = manifest.antenna_ids
    if len(antennas) < 2:
        raise ValueError("cross-validation needs records from at least two antennas")
    num_classes = manifest.num_classes
    inputs = load_inputs(manifest, config.model_kind)
    input_dims = [p.shape[1:] for p in inputs]
    antenna_of = np.array([r.antenna_id for r in manifest])

    folds = []
    for held_out in antennas:
        try:
            train_set, test_set = split_leave_one_antenna_out(manifest, held_out)
            tr, te = antenna_of != held_out, antenna_of == held_out
            model = build_model(config.model_kind, input_dims, num_classes, config.branch_spec,
                                config.hidden, fold_seed(config.seed, held_out))
            tcfg = replace(config.train,
                           rng_seed=fold_seed(config.seed + config.train.rng_seed, held_out, 1))
            model, history = train(model, train_set, tcfg, [p[tr] for p in inputs])
            metrics = evaluate(model, test_set, [p[te] for p in inputs])
        except Exception as exc:
            raise RuntimeError(f"fold with held-out antenna {held_out} failed: {exc}") from exc
        log.info("held-out antenna %d: accuracy %.4f", held_out, metrics.accuracy)
        folds.append(FoldResult(held_out, metrics, history, len(train_set), len(test_set)))

    report = CrossValReport(folds, num_classes)
    if config.output_dir is not None:
        write_report(report, config.output_dir)
    return report


def write_report(report: CrossValReport, out_dir) -> None:
    """``report.tsv``, ``confusion.tsv`` and one ``history_<fold>.tsv`` per fold."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["fold\theld_out_antenna\tn_train\tn_test\taccuracy"]
    for i, f in enumerate(report.folds):
        lines.append(f"{i}\t{f.held_out}\t{f.n_train}\t{f.n_test}\t{f.metrics.accuracy!r}")
    lines.append(f"mean\t\t\t\t{report.mean_accuracy!r}")
    (out_dir / "report.tsv").write_text("\n".join(lines) + "\n")

    conf = report.confusion
    rows = ["true\\pred\t" + "\t".join(str(c) for c in range(report.num_classes))]
    rows += [f"{c}\t" + "\t".join(str(int(v)) for v in conf[c]) for c in range(report.num_classes)]
    (out_dir / "confusion.tsv").write_text("\n".join(rows) + "\n")

    for i, f in enumerate(report.folds):
        hist = ["epoch\tloss\ttrain_accuracy\tlr"]
        hist += [f"{h.epoch}\t{h.loss!r}\t{h.train_accuracy!r}\t{h.lr!r}" for h in f.history]
        (out_dir / f"history_{i}.tsv").write_text("\n".join(hist) + "\n")
