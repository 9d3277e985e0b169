"""Acceptance gate for the imaging toolkit.

One test per build criterion, each printing a live PASS/FAIL line so a
run of this file reads as a checklist. Thresholds are stated inline.
The criteria cover: forward-model fidelity against a naive reference,
core physics invariants, beamforming gain, shadow-channel behaviour,
inversion quality and pipeline runtime, metric identities, and the
fused-reconstruction quality target on a 200-sample synthetic dataset.
"""

import json
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from duoris.cli import EXIT_OK, main
from duoris.config import make_config
from duoris.dataset import evaluate_run, gen_dataset, load_sample_measurement
from duoris.emcore import FrequencyGrid, flat_spectrum, greens
from duoris.forward import (NoiseModel, capture_measurement, empty_baseline,
                            simulate_reflection, simulate_transmission,
                            transmission_flags)
from duoris.illumination import RisPattern, field_at, scene_focus_points
from duoris.inversion import (build_reflection_matrix, cgls_solve,
                              matched_filter, mean_column_power,
                              reconstruct_batch, reflection_delta)
from duoris.metrics import DEFAULT_METRICS, ImagePair, iou, ssim
from duoris.scene import (Box, Ellipsoid, Phantom, SOI_ORIGIN, SOI_SIZE,
                          element_positions, rasterize_phantom,
                          sample_random_humanoid)
from duoris.tensorio import read_tensor, write_tensor, write_tensor_atomic

import test_forward as oracle

BAND_CENTER_OMEGA = 2 * np.pi * 5.8e9


def verdict(capsys, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {detail}")


@pytest.fixture(scope="module")
def desk():
    config = make_config({})
    return config, config.layout(), config.schedule(), config.waveform()


@pytest.fixture(scope="module")
def desk_baseline(desk):
    _, layout, schedule, waveform = desk
    return empty_baseline(layout, schedule, waveform)


@pytest.fixture(scope="module")
def desk_matrix(desk):
    _, layout, schedule, waveform = desk
    return build_reflection_matrix(layout, schedule, waveform)


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


def test_forward_oracle(capsys):
    """Vectorized simulation matches the naive triple-loop reference."""
    layout = oracle.micro_layout()
    waveform = flat_spectrum(FrequencyGrid(n_bins=8))
    rng = np.random.default_rng(0)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(20):
        scene = oracle.random_scene(layout, rng)
        entry = oracle.random_entry(layout, rng)
        want_y1, want_a, want_b = oracle.naive_spectra(layout, scene, entry,
                                                       waveform)
        got_y1 = simulate_reflection(layout, scene, entry.forward, waveform)
        got_t, got_a, got_b = simulate_transmission(layout, scene, entry,
                                                    waveform,
                                                    split_terms=True)
        worst = max(worst,
                    oracle.rel_err(got_y1, want_y1),
                    oracle.rel_err(got_a, want_a),
                    oracle.rel_err(got_b, want_b),
                    oracle.rel_err(got_t, want_a + want_b))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 5.0
    verdict(capsys, ok, "forward oracle: 20 micro-scenes, worst relative "
            f"error {worst:.2e} (limit 1e-10), {elapsed:.2f} s (limit 5 s)")
    assert worst < 1e-10
    assert elapsed < 5.0


def test_physics_invariants(capsys):
    """Reciprocity, bit-flip antisymmetry, contrast linearity, occlusion
    monotonicity, and the exact empty-scene direct path."""
    layout = oracle.micro_layout()
    waveform = flat_spectrum(FrequencyGrid(n_bins=8))
    rng = np.random.default_rng(1)

    # Green's function reciprocity
    recip = 0.0
    for _ in range(200):
        a, b = rng.uniform(-3, 6, 3), rng.uniform(-3, 6, 3)
        ga, gb = greens(a, b, BAND_CENTER_OMEGA), greens(b, a, BAND_CENTER_OMEGA)
        recip = max(recip, abs(ga - gb) / abs(gb))

    # flipping every bit negates the two-hop field
    flip = 0.0
    panel = layout.forward
    for _ in range(20):
        bits = rng.integers(0, 2, panel.n_elements).astype(np.uint8)
        pat = RisPattern(bits=bits, element_area=panel.element_area)
        neg = RisPattern(bits=bits ^ 1, element_area=panel.element_area)
        target = rng.uniform(1.0, 2.0, 3)
        fa = field_at(panel, pat, layout.tx, target, BAND_CENTER_OMEGA)
        fb = field_at(panel, neg, layout.tx, target, BAND_CENTER_OMEGA)
        flip = max(flip, abs(fa + fb) / max(abs(fa), 1e-300))

    # scattered terms are linear in the contrast
    scene = oracle.random_scene(layout, rng)
    entry = oracle.random_entry(layout, rng)
    empty = layout.soi.empty_like()
    direct = simulate_reflection(layout, empty, entry.forward, waveform)
    y1 = simulate_reflection(layout, scene, entry.forward, waveform)
    y1_scaled = simulate_reflection(layout, scene.with_values(scene.values * 3.5),
                                    entry.forward, waveform)
    lin = rel_err(y1_scaled - direct, 3.5 * (y1 - direct))
    _, _, term_b = simulate_transmission(layout, scene, entry, waveform,
                                         split_terms=True)
    _, _, term_b_scaled = simulate_transmission(
        layout, scene.with_values(scene.values * 3.5), entry, waveform,
        split_terms=True)
    lin = max(lin, rel_err(term_b_scaled, 3.5 * term_b))

    # occlusion flags can only switch off as the blocker grows
    small = rasterize_phantom(
        Phantom(parts=(Box(np.array([1.3, -0.3, 0.6]),
                           np.array([1.7, 0.3, 1.4])),)), layout.soi)
    grown = rasterize_phantom(
        Phantom(parts=(Box(np.array([1.1, -0.7, 0.2]),
                           np.array([1.9, 0.7, 1.8])),)), layout.soi)
    fpos = element_positions(layout.forward)
    bpos = element_positions(layout.backward)
    starts = np.repeat(fpos, len(bpos), axis=0)
    ends = np.tile(bpos, (len(fpos), 1))
    mu_small = transmission_flags(small, starts, ends)
    mu_grown = transmission_flags(grown, starts, ends)
    monotone = bool(np.all(mu_grown <= mu_small))

    # with nothing in the volume the reflection chain sees only tx -> rx1
    want_direct = waveform.values * greens(layout.tx, layout.rx1,
                                           waveform.grid.omegas())
    exact_direct = bool(np.array_equal(direct, want_direct))

    ok = (recip < 1e-12 and flip < 1e-12 and lin < 1e-10
          and monotone and exact_direct)
    verdict(capsys, ok, "physics invariants: reciprocity "
            f"{recip:.1e} (1e-12), bit-flip {flip:.1e} (1e-12), linearity "
            f"{lin:.1e} (1e-10), occlusion monotone {monotone}, "
            f"empty-scene direct exact {exact_direct}")
    assert recip < 1e-12
    assert flip < 1e-12
    assert lin < 1e-10
    assert monotone
    assert exact_direct


def test_beamforming_gain_and_schedule(desk, capsys):
    """Focused entries beat random patterns by 10x; 70 = 35 + 25 + 10."""
    _, layout, schedule, _ = desk
    tags = [e.tag for e in schedule.entries]
    counts = (len(tags), tags.count("I"), tags.count("II"), tags.count("III"))
    points = scene_focus_points(layout)
    rng = np.random.default_rng(12345)
    ratios = []
    for entry, focus in zip(schedule.entries[:35], points):
        sched = abs(field_at(layout.forward, entry.forward, layout.tx, focus,
                             BAND_CENTER_OMEGA)) ** 2
        rand = []
        for _ in range(100):
            bits = rng.integers(0, 2, layout.forward.n_elements)
            pattern = RisPattern(bits=bits.astype(np.uint8),
                                 element_area=entry.forward.element_area,
                                 gamma=entry.forward.gamma)
            rand.append(abs(field_at(layout.forward, pattern, layout.tx,
                                     focus, BAND_CENTER_OMEGA)) ** 2)
        ratios.append(sched / np.mean(rand))
    worst = min(ratios)
    ok = worst >= 10.0 and counts == (70, 35, 25, 10)
    verdict(capsys, ok, "beamforming: min focus gain over 35 entries "
            f"{worst:.1f}x (limit 10x), schedule {counts[0]} = "
            f"{counts[1]}+{counts[2]}+{counts[3]}")
    assert counts == (70, 35, 25, 10)
    assert worst >= 10.0


def test_shadowing(desk, desk_baseline, capsys):
    """A volume-filling blocker zeroes the pair channel; a centered
    humanoid attenuates it on at least 90% of focused entries."""
    _, layout, schedule, waveform = desk

    blocker = Box(SOI_ORIGIN - 0.01, SOI_ORIGIN + SOI_SIZE + 0.01)
    filled = rasterize_phantom(Phantom(parts=(blocker,)), layout.soi)
    meas_filled = capture_measurement(layout, filled, schedule, waveform, None)
    max_a = float(np.abs(meas_filled.shadow).max())

    body = sample_random_humanoid(7, "stand")
    lo, hi = body.bounds()
    center = SOI_ORIGIN + SOI_SIZE / 2
    shift = np.array([center[0] - (lo[0] + hi[0]) / 2,
                      center[1] - (lo[1] + hi[1]) / 2, 0.0])
    centered = Phantom(parts=tuple(
        Ellipsoid(p.center + shift, p.semi_axes, p.rotation)
        for p in body.parts), pose_family=body.pose_family)
    scene = rasterize_phantom(centered, layout.soi)
    meas = capture_measurement(layout, scene, schedule, waveform, None)
    e_base = np.sum(np.abs(desk_baseline.shadow[:35]) ** 2, axis=1)
    e_body = np.sum(np.abs(meas.shadow[:35]) ** 2, axis=1)
    frac = float(np.mean(e_body < e_base))

    ok = max_a == 0.0 and frac >= 0.9
    verdict(capsys, ok, f"shadowing: filled-volume pair term {max_a:.1e} "
            f"(exact 0), humanoid attenuates {frac:.0%} of focused entries "
            "(limit 90%)")
    assert max_a == 0.0
    assert frac >= 0.9


def test_inversion_quality_and_runtime(desk, desk_baseline, desk_matrix,
                                       tmp_path, capsys):
    """Matched-filter localization, CGLS multi-target recovery, and the
    end-to-end 16-sample pipeline budget."""
    _, layout, schedule, waveform = desk
    h = desk_matrix

    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        cell = int(rng.integers(layout.soi.n_cells))
        values = np.zeros(layout.soi.counts)
        values.ravel()[cell] = 1.0
        scene = layout.soi.with_values(values)
        meas = capture_measurement(layout, scene, schedule, waveform,
                                   NoiseModel(snr_db=40.0, seed=seed))
        volume = matched_filter(h, reflection_delta(meas, desk_baseline))
        hits += int(np.argmax(volume) == cell)

    targets, columns = [], []
    for seed in range(20):
        rng = np.random.default_rng(2000 + seed)
        cells = rng.choice(layout.soi.n_cells, size=3, replace=False)
        values = np.zeros(layout.soi.counts)
        values.ravel()[cells] = 1.0
        scene = layout.soi.with_values(values)
        meas = capture_measurement(layout, scene, schedule, waveform,
                                   NoiseModel(snr_db=40.0, seed=seed))
        columns.append(reflection_delta(meas, desk_baseline))
        targets.append({int(c) for c in cells})
    solved = cgls_solve(h, np.stack(columns, axis=1),
                        lam=1e-2 * mean_column_power(h), max_iters=15)
    contained = sum(
        int(truth <= set(np.argsort(solved.volume[:, k])[-5:].tolist()))
        for k, truth in enumerate(targets))

    config_path = tmp_path / "pipeline.json"
    config_path.write_text(json.dumps(
        {"noise": {"enabled": True, "snr_db": 30.0}}))
    data_dir, pred_dir = tmp_path / "ds", tmp_path / "preds"
    t0 = time.perf_counter()
    assert main(["gen-dataset", "--config", str(config_path),
                 "--out", str(data_dir), "--n", "16", "--seed", "100",
                 "--quiet"]) == EXIT_OK
    assert main(["invert", "--manifest", str(data_dir), "--method", "fused",
                 "--split", "all", "--out", str(pred_dir)]) == EXIT_OK
    assert main(["eval", "--manifest", str(data_dir), "--pred",
                 str(pred_dir), "--split", "all"]) == EXIT_OK
    pipeline_s = time.perf_counter() - t0

    ok = hits >= 48 and contained >= 18 and pipeline_s < 600.0
    verdict(capsys, ok, f"inversion: single-target argmax {hits}/50 "
            f"(limit 48), 3-target top-5 containment {contained}/20 "
            f"(limit 18), 16-sample pipeline {pipeline_s:.0f} s "
            "(limit 600 s)")
    assert hits >= 48, "matched-filter argmax recovery below 95%"
    assert contained >= 18, "3-scatterer top-5 containment below 90%"
    assert pipeline_s < 600.0


def test_metric_identities_and_container(tmp_path, capsys):
    """Closed-form SSIM value, IoU set oracle, bit-exact tensor files."""
    c1 = DEFAULT_METRICS.c1
    gap = abs(ssim(ImagePair(np.zeros((16, 16)), np.ones((16, 16))))
              - c1 / (1 + c1))

    rng = np.random.default_rng(99)
    iou_gap = 0.0
    for _ in range(100):
        pred = (rng.random((12, 9)) > 0.5).astype(float)
        gt = (rng.random((12, 9)) > 0.5).astype(float)
        a, b = set(map(tuple, np.argwhere(pred))), set(
            map(tuple, np.argwhere(gt)))
        want = len(a & b) / len(a | b) if (a | b) else 1.0
        iou_gap = max(iou_gap, abs(iou(ImagePair(pred, gt)) - want))

    exact = True
    for shape in ((7,), (5, 4), (2, 3, 4)):
        data = rng.standard_normal(shape).astype(np.float32)
        data.ravel()[0] = np.inf
        data.ravel()[-1] = -0.0
        path = tmp_path / f"t{len(shape)}.drm"
        write_tensor(path, data)
        back = read_tensor(path)
        exact = exact and back.tobytes() == data.tobytes() \
            and back.shape == data.shape

    ok = gap < 1e-9 and iou_gap < 1e-12 and exact
    verdict(capsys, ok, f"metrics: SSIM(0,1) gap {gap:.1e} (1e-9), "
            f"IoU oracle gap {iou_gap:.1e} over 100 masks, "
            f"container round-trip bit-exact {exact}")
    assert gap < 1e-9
    assert iou_gap < 1e-12
    assert exact


@pytest.fixture(scope="module")
def fused_study(tmp_path_factory):
    """200-sample desk dataset at 30 dB, reconstructed per method."""
    config = make_config({"noise": {"enabled": True, "snr_db": 30.0}})
    root = tmp_path_factory.mktemp("study")
    data_dir = os.path.join(root, "ds")
    manifest = gen_dataset(config, n_samples=200, out_dir=data_dir,
                           base_seed=0)
    layout, schedule, waveform = (config.layout(), config.schedule(),
                                  config.waveform())
    baseline = empty_baseline(layout, schedule, waveform)
    samples = manifest.split("all")
    measurements = [load_sample_measurement(data_dir, s) for s in samples]
    means = {}
    for method in ("cgls", "art", "fused"):
        images = reconstruct_batch(layout, schedule, waveform, measurements,
                                   baseline, method=method,
                                   width=config.image_width,
                                   height=config.image_height)
        pred_dir = os.path.join(root, f"pred_{method}")
        os.makedirs(pred_dir, exist_ok=True)
        for sample, image in zip(samples, images):
            write_tensor_atomic(
                os.path.join(pred_dir, f"{sample['id']}.pred.drm"),
                image.image)
        report = evaluate_run(manifest, data_dir, pred_dir, split="all")
        means[method] = report["mean"]["iou"]
    return means


def test_fusion_beats_single_modes(fused_study, capsys):
    """Mode complementarity: the fused estimate scores at least as high a
    mean IoU as either single-channel reconstruction."""
    fused = fused_study["fused"]
    best_single = max(fused_study["cgls"], fused_study["art"])
    ok = fused >= best_single
    verdict(capsys, ok, "mode complementarity on 200 samples: fused mean "
            f"IoU {fused:.4f} >= max(reflection {fused_study['cgls']:.4f}, "
            f"shadow {fused_study['art']:.4f})")
    assert fused >= best_single


def test_fused_mean_iou_target(fused_study, capsys):
    """Absolute quality target for the fused reconstruction.

    The 0.3 mean soft-IoU target is not reachable with this measurement
    geometry at the 10 cm desk voxel pitch: even a noiseless, fully
    converged least-squares solve with the exact sensing model tops out
    near 0.19, and projecting a perfect occupancy volume through the
    same pipeline caps soft-IoU near 0.6. The test states the target
    faithfully and is expected to fail; see the decisions ledger for the
    supporting measurements.
    """
    fused = fused_study["fused"]
    ok = fused >= 0.3
    verdict(capsys, ok, f"fused quality target: mean soft-IoU {fused:.4f} "
            "(target 0.30; known shortfall, see decisions ledger)")
    assert fused >= 0.3, (
        f"fused mean soft-IoU {fused:.4f} < 0.3: resolution-limited; "
        "documented in the decisions ledger")
