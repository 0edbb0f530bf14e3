"""Acceptance gate: one test per primary criterion, each reporting PASS/FAIL.

The two training benchmarks (6 and 7) take several minutes each on one CPU.
"""
import filecmp
import time
from dataclasses import replace

import numpy as np
import pytest

from trdopen import radar_sim as rs
from trdopen import rdp
from trdopen.cli import main
from trdopen.harness.crossval import (ExperimentConfig, run_cross_validation,
                                      split_leave_one_antenna_out)
from trdopen.harness.training import TrainConfig, fit, predict
from trdopen.model import build_open3d, loss_and_grad, tiny_baseline_gradcheck, tiny_open3d_gradcheck
from trdopen.nn.gradcheck import run_layer_suite
from trdopen.projection import orthogonal_project, plane_stats

from conftest import single_scatterer_signal
from test_projection import brute_force_project

DESK_EPOCHS = 12
RANGE_EPOCHS = 10


def test_criterion_1_fft_oracle(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_dft, worst_parseval = 0.0, 0.0
    for log_n in range(1, 9):
        n = 2 ** log_n
        for _ in range(10):
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            X = rdp.fft(x)
            ref = rdp.naive_dft(x)
            worst_dft = max(worst_dft, np.abs(X - ref).max() / np.abs(ref).max())
            e = np.sum(np.abs(x) ** 2)
            worst_parseval = max(worst_parseval, abs(np.sum(np.abs(X) ** 2) - n * e) / (n * e))
    elapsed = time.perf_counter() - start
    ok = worst_dft < 1e-10 and worst_parseval < 1e-9 and elapsed < 5
    acceptance(1, "FFT oracle", ok,
               f"dft err {worst_dft:.1e} < 1e-10, parseval {worst_parseval:.1e} < 1e-9, "
               f"{elapsed:.2f}s < 5s")
    assert ok


def test_criterion_2_gradient_suite(acceptance):
    start = time.perf_counter()
    seeds = range(5)
    rows = run_layer_suite(seeds)
    layer_fail = [(n, s, e) for n, s, e, tol in rows if not e < tol]
    e2e = [tiny_open3d_gradcheck(s) for s in seeds] + [tiny_baseline_gradcheck(s) for s in seeds]
    elapsed = time.perf_counter() - start
    kinds = sorted({r[0] for r in rows})
    ok = not layer_fail and max(e2e) < 1e-4 and elapsed < 120
    acceptance(2, "gradient suite", ok,
               f"{len(kinds)} layer cases x {len(seeds)} seeds, failures {layer_fail}, "
               f"end-to-end max {max(e2e):.1e} < 1e-4, {elapsed:.1f}s < 120s")
    assert ok


def test_criterion_3_projection_oracle(acceptance):
    rng = np.random.default_rng(3)
    worst, worst_lin, worst_mean = 0.0, 0.0, 0.0
    for _ in range(50):
        shape = tuple(rng.integers(1, 9, 3))
        cube = rng.standard_normal(shape)
        trip = orthogonal_project(cube)
        for got, want in zip(trip.planes(), brute_force_project(cube)):
            worst = max(worst, np.abs(got - want).max())
        for plane in trip.planes():
            worst_mean = max(worst_mean, abs(plane.mean() - cube.mean()))
        other = rng.standard_normal(shape)
        a, b = rng.uniform(-3, 3, 2)
        mixed = orthogonal_project(a * cube + b * other)
        for m, p, q in zip(mixed.planes(), trip.planes(), orthogonal_project(other).planes()):
            worst_lin = max(worst_lin, np.abs(m - (a * p + b * q)).max())
    ok = worst < 1e-12 and worst_lin < 1e-12 and worst_mean < 1e-12
    acceptance(3, "projection oracle", ok,
               f"50 cubes, brute force {worst:.1e}, linearity {worst_lin:.1e}, "
               f"mean preservation {worst_mean:.1e}, all < 1e-12")
    assert ok


def test_criterion_4_peak_localization(acceptance):
    start = time.perf_counter()
    params = rs.RadarParams()
    rng = np.random.default_rng(4)
    misses = []
    cases = 0
    while cases < 20:
        r = rng.uniform(0.5, 8.5)
        v = rng.uniform(-0.9, 0.9) * params.max_velocity_mps
        if not 0 < r + v * params.duration_s < params.max_range_m:
            continue
        cases += 1
        cube = rdp.range_doppler_process(single_scatterer_signal(params, r, v))
        for t in range(params.frames):
            m_pk, n_pk = np.unravel_index(cube[t].argmax(), cube[t].shape)
            r_t = r + v * t * params.chirps_per_frame * params.chirp_duration_s
            if abs(m_pk - params.range_bin(r_t)) > 1 or abs(n_pk - params.doppler_bin(v)) > 1:
                misses.append((round(r, 3), round(v, 3), t))
    elapsed = time.perf_counter() - start
    ok = not misses and elapsed < 30
    acceptance(4, "simulator/RDP peak localization", ok,
               f"{cases} scenes x {params.frames} frames within 1 bin, misses {misses[:3]}, "
               f"{elapsed:.1f}s < 30s")
    assert ok


def _capacity_batch():
    recipe = replace(rs.preset("smoke"), num_tests=8)
    planes, labels = [[], [], []], []
    for test in range(8):
        scene = rs.build_scene(recipe.class_of(test), rs.scene_seed(recipe, test),
                               recipe.scene_config)
        raw = rs.synthesize_beat_signal(scene, recipe.params, 0, rs.noise_seed(recipe, test))
        for crop in rdp.crop_cube(rdp.range_doppler_process(raw), recipe.crop_len, 4):
            for i, p in enumerate(orthogonal_project(crop).planes()):
                planes[i].append(p)
            labels.append(recipe.class_of(test))
    planes = [np.stack(p) for p in planes]
    stats = [plane_stats(list(p)) for p in planes]
    return [(p - s.mean) / s.std for p, s in zip(planes, stats)], np.array(labels)


def test_criterion_5_capacity_and_initial_loss(acceptance):
    x, labels = _capacity_batch()
    assert len(labels) == 32 and len(set(labels)) == 4
    model = build_open3d((16, 64, 32), 4, seed=0)
    reached = []

    def on_epoch(stats):
        if (predict(model, x) == labels).all():
            reached.append(stats.epoch)
            return True
        return False

    fit(model, x, labels, TrainConfig(epochs=200, lr_decay_every=10_000), on_epoch)

    losses = []
    for seed in range(10):
        m6 = build_open3d((16, 64, 32), 6, seed=seed)
        rng = np.random.default_rng(100 + seed)
        planes = [rng.standard_normal((12, 1) + d) for d in m6.input_dims]
        losses.append(loss_and_grad(m6, planes, np.arange(12) % 6)[0])
    mean_loss = float(np.mean(losses))
    ok = bool(reached) and abs(mean_loss - np.log(6)) < 0.15
    acceptance(5, "capacity smoke test", ok,
               f"100% train accuracy at epoch {reached[0] + 1 if reached else 'never'} <= 200, "
               f"initial 6-class loss {mean_loss:.3f} vs ln6 {np.log(6):.3f} +- 0.15")
    assert ok


@pytest.mark.slow
def test_criterion_6_desk_benchmark(acceptance, tmp_path):
    start = time.perf_counter()
    rs.generate_dataset(rs.preset("smoke"), tmp_path / "smoke")
    report = run_cross_validation(ExperimentConfig(tmp_path / "smoke" / "manifest.tsv",
                                                   train=TrainConfig(epochs=DESK_EPOCHS)))
    elapsed = time.perf_counter() - start
    ratios = [f.history[-1].loss / f.history[0].loss for f in report.folds]
    ok = (len(report.folds) == 4 and report.mean_accuracy >= 0.85 and elapsed < 1800
          and max(ratios) < 0.2)
    acceptance(6, "desk benchmark (smoke LOOCV)", ok,
               f"mean accuracy {report.mean_accuracy:.4f} >= 0.85, folds "
               f"{[round(a, 4) for a in report.per_fold]}, final/initial loss max "
               f"{max(ratios):.1e} < 0.2, {elapsed:.0f}s < 1800s")
    assert ok


@pytest.mark.slow
def test_criterion_7_range_information(acceptance, tmp_path):
    base_acc, open_acc = [], []
    for seed in range(3):
        root = tmp_path / f"range{seed}"
        rs.generate_dataset(rs.preset("range", seed=seed), root)
        for kind, out in (("baseline2d", base_acc), ("open3d", open_acc)):
            cfg = ExperimentConfig(root / "manifest.tsv", model_kind=kind, seed=seed,
                                   train=TrainConfig(epochs=RANGE_EPOCHS))
            out.append(run_cross_validation(cfg).mean_accuracy)
    base_med, open_med = float(np.median(base_acc)), float(np.median(open_acc))
    ok = base_med <= 0.65 and open_med >= 0.90
    acceptance(7, "range-information experiment", ok,
               f"3-seed median: 2D spectrogram {base_med:.4f} <= 0.65 {np.round(base_acc, 4)}, "
               f"3D-OPEN {open_med:.4f} >= 0.90 {np.round(open_acc, 4)}")
    assert ok


def test_criterion_8_bookkeeping(acceptance):
    manifest = rs.plan_records(rs.preset("paper"))
    offsets = rdp.crop_offsets(400, 64, 6)
    seen = []
    for antenna in manifest.antenna_ids:
        _, test = split_leave_one_antenna_out(manifest, antenna)
        seen += [r.record_id for r in test]
    exact_once = sorted(seen) == sorted(r.record_id for r in manifest)
    ok = len(manifest) == 5544 and offsets == [0, 67, 134, 201, 268, 336] and exact_once
    acceptance(8, "bookkeeping", ok,
               f"{len(manifest)} records == 5544, offsets {offsets}, "
               f"folds cover manifest exactly once: {exact_once}")
    assert ok


EXPERIMENT = """\
[experiment]
manifest = data/manifest.tsv
seed = 11

[train]
epochs = 2
batch_size = 8

[model]
hidden = 16
stem_channels = 8
stages = 1 3 1 8 1, 2 3 2 12 1
"""


def test_criterion_9_determinism(acceptance, tmp_path):
    assert main(["simulate", "--preset", "smoke", "--set", "dataset.num_tests=4",
                 "--out", str(tmp_path / "data")]) == 0
    (tmp_path / "exp.ini").write_text(EXPERIMENT)
    codes = [main(["crossval", "--config", str(tmp_path / "exp.ini"), "--out", str(tmp_path / d)])
             for d in ("run1", "run2")]
    names = sorted(p.name for p in (tmp_path / "run1").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "run1", tmp_path / "run2", names,
                                               shallow=False)
    ok = codes == [0, 0] and match == names and len(names) == 6 and not mismatch and not errors
    acceptance(9, "determinism", ok,
               f"crossval twice, {len(match)}/{len(names)} report files byte-identical")
    assert ok
