"""Acceptance suite: one test per exit criterion, each printing a
PASS/FAIL line with its measured figure of merit.

Every check runs on committed synthetic fixtures; tolerances and time
budgets are asserted, not advisory.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from aupain.cli import run
from aupain.core import AU_IDS, ActivationMap, AUIntensityVector, DataError, FaceLandmarks, LabelScheme
from aupain.engagement import EngagementProfile, aggregate_engagement
from aupain.evaluation import confusion, metrics
from aupain.geometry import REGION_AREA, au_center, au_region
from aupain.ingestion import bin_label, subject_folds
from aupain.pspi import EyeMode, pspi
from aupain.regressor import TrainConfig, backward, forward, predict, smooth_l1, train

from synth import (
    make_face,
    mirror_landmarks,
    painted_map,
    write_manifest_file,
    write_regression_dataset,
)
from test_engagement import oracle_aggregate
from test_regressor import finite_difference_grads, hand_model


def check(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def test_c01_pspi_oracle_equivalence():
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    exact = True
    for _ in range(1000):
        values = {au: float(v) for au, v in zip(AU_IDS, rng.uniform(0, 5, size=12))}
        v = AUIntensityVector(values)
        eye_b = 1.0 if values[43] >= 1.0 else 0.0
        expect_b = values[4] + max(values[6], values[7]) + max(values[9], values[10]) + eye_b
        expect_i = values[4] + max(values[6], values[7]) + max(values[9], values[10]) + values[43]
        exact &= pspi(v, EyeMode.BINARY_EYE).value == expect_b
        exact &= pspi(v, EyeMode.INTENSITY_EYE).value == expect_i
    elapsed = time.perf_counter() - start
    check("C1 pspi-oracle-equivalence", exact and elapsed < 1.0, f"1000 vectors exact, {elapsed:.2f}s")


def test_c02_engagement_brute_force_equivalence():
    rng = np.random.default_rng(2002)
    frames = [
        (rng.uniform(0, 1, size=(224, 224)), make_face(jitter=3.0, rng=rng)) for _ in range(10)
    ]
    start = time.perf_counter()
    profile = aggregate_engagement([(ActivationMap(c), lm) for c, lm in frames])
    expect = oracle_aggregate(frames)
    worst = max(abs(profile.raw[au] - expect[au]) for au in AU_IDS)
    elapsed = time.perf_counter() - start
    check(
        "C2 engagement-brute-force-equivalence",
        worst < 1e-9 and elapsed < 5.0,
        f"max |diff| {worst:.2e}, {elapsed:.2f}s",
    )


def lit_region_map(lm: FaceLandmarks, au: int, sides: slice = slice(None)) -> np.ndarray:
    spans = []
    for pt in au_center(lm, au).points[sides]:
        r = au_region(pt, (224, 224))
        spans.append((r.x_left, r.x_right, r.y_top, r.y_bottom))
    return painted_map(spans)


def test_c03_engagement_localization():
    mouth_face = make_face(mouth_open=True)
    mouth = aggregate_engagement([(ActivationMap(lit_region_map(mouth_face, 27)), mouth_face)])
    face = make_face()
    nose = aggregate_engagement([(ActivationMap(lit_region_map(face, 9)), face)])
    both = aggregate_engagement([(ActivationMap(lit_region_map(face, 9)), face)])
    one_side = aggregate_engagement(
        [(ActivationMap(lit_region_map(face, 9, slice(0, 1))), face)]
    )
    half_err = abs(one_side.raw[9] - both.raw[9] / 2.0)
    ok = mouth.ranking[0] == 27 and nose.ranking[0] == 9 and half_err < 1e-9
    check(
        "C3 engagement-localization",
        ok,
        f"mouth head AU{mouth.ranking[0]}, nose head AU{nose.ranking[0]}, half err {half_err:.1e}",
    )


def test_c04_geometry_symmetry_suite():
    rng = np.random.default_rng(4004)
    worst = 0.0
    for _ in range(100):
        lm = make_face(jitter=3.0, rng=rng)
        mirrored = mirror_landmarks(lm)
        dx, dy = rng.uniform(-12, 12, size=2)
        shifted = FaceLandmarks(lm.points + np.array([dx, dy]), 224, 224)
        k = rng.uniform(0.6, 1.8)
        scaled = FaceLandmarks(lm.points * k, 224, 224)
        for au in AU_IDS:
            base = np.asarray(au_center(lm, au).points)
            mir = np.asarray(au_center(mirrored, au).points)
            expect = np.array([(224.0 - x, y) for (x, y) in reversed(base)])
            worst = max(worst, float(np.max(np.abs(mir - expect))))
            tr = np.asarray(au_center(shifted, au).points)
            worst = max(worst, float(np.max(np.abs(tr - (base + np.array([dx, dy]))))))
            sc = np.asarray(au_center(scaled, au).points)
            worst = max(worst, float(np.max(np.abs(sc - base * k))))
    regions_ok = True
    for center in [(0, 0), (223, 223), (0, 223), (223, 0)] + [
        tuple(rng.uniform(-10, 234, size=2)) for _ in range(200)
    ]:
        r = au_region(center, (224, 224))
        regions_ok &= r.area == REGION_AREA
        regions_ok &= 0 <= r.x_left < r.x_right <= 224 and 0 <= r.y_top < r.y_bottom <= 224
    check(
        "C4 geometry-symmetry-suite",
        worst < 1e-6 and regions_ok,
        f"max center deviation {worst:.1e}, regions area-100 in-bounds",
    )


def test_c05_gradient_check():
    rng = np.random.default_rng(5005)
    start = time.perf_counter()
    worst = 0.0
    checked = 0
    while checked < 20:
        k = int(rng.integers(1, 8))
        model = hand_model(
            weights=rng.uniform(0.2, 1.0, size=k),
            W1=rng.uniform(-0.5, 0.5, size=(3, k)),
            b1=rng.uniform(-0.2, 0.2, size=3),
            W2=rng.uniform(-0.5, 0.5, size=(1, 3)),
            b2=rng.uniform(-0.2, 0.2, size=1),
        )
        x = rng.uniform(0, 5, size=k)
        target = float(rng.uniform(0, 10))
        pred, cache = forward(model, x)
        if np.any(np.abs(cache.z1) < 1e-3) or abs(abs(pred - target) - 1.0) < 1e-3:
            continue
        _, dpred = smooth_l1(pred, target, 1.0)
        analytic = backward(model, cache, dpred)
        numeric = finite_difference_grads(model, x, target, beta=1.0, h=1e-5)
        for name in analytic:
            denom = np.maximum(np.abs(analytic[name]) + np.abs(numeric[name]), 1e-8)
            worst = max(worst, float(np.max(np.abs(analytic[name] - numeric[name]) / denom)))
        checked += 1
    elapsed = time.perf_counter() - start
    check(
        "C5 gradient-check",
        worst < 1e-4 and elapsed < 5.0,
        f"20 configs, max rel err {worst:.2e}, {elapsed:.2f}s",
    )


PLANTED = (27, 25, 10)


def confounded_dataset(rng: np.random.Generator, n_subjects: int, frames_per_subject: int):
    """2,000-frame recovery set: planted AUs drive the target; distractor
    AUs carry subject-constant offsets so they hurt under subject-disjoint
    validation."""
    frames, subjects = [], []
    for s in range(n_subjects):
        offsets = {au: float(rng.uniform(0, 3)) for au in AU_IDS if au not in PLANTED}
        for _ in range(frames_per_subject):
            v = {
                au: (float(rng.uniform(0, 5)) if au in PLANTED else offsets[au] + float(rng.uniform(0, 2)))
                for au in AU_IDS
            }
            target = float(np.clip(0.8 * v[27] + 0.6 * v[25] + 0.4 * v[10] + rng.normal(0, 0.1), 0, 10))
            frames.append((AUIntensityVector(v), target))
            subjects.append(s)
    return frames, np.asarray(subjects)


def test_c06_synthetic_recovery():
    rng = np.random.default_rng(3005)
    frames, subjects = confounded_dataset(rng, n_subjects=20, frames_per_subject=100)
    assert len(frames) == 2000
    raw = {au: 0.4 for au in AU_IDS}
    raw[27], raw[25], raw[10] = 0.9, 0.8, 0.7
    profile = EngagementProfile.from_raw(raw, frame_count=1)
    config = TrainConfig(learning_rate=0.01, batch_size=8, epochs=100, dropout_rate=0.0, seed=5)

    start = time.perf_counter()
    train_set = [f for f, s in zip(frames, subjects) if s < 16]
    held_out = [f for f, s in zip(frames, subjects) if s >= 16]
    model, _ = train(train_set, held_out, profile, k=3, config=config)
    mae = float(np.mean([abs(predict(model, v) - t) for v, t in held_out]))

    halves = [
        [f for f, s in zip(frames, subjects) if s < 10],
        [f for f, s in zip(frames, subjects) if s >= 10],
    ]
    losses = {}
    for k in range(1, 9):
        total = 0.0
        for i in (0, 1):
            _, history = train(halves[1 - i], halves[i], profile, k, config)
            total += min(history.val_loss)
        losses[k] = total / 2
    best_k = min(losses, key=lambda k: (losses[k], k))
    elapsed = time.perf_counter() - start
    check(
        "C6 synthetic-recovery",
        mae < 0.5 and best_k <= 5 and elapsed < 60.0,
        f"held-out MAE {mae:.3f}, ablation best_k {best_k}, {elapsed:.1f}s",
    )


def test_c07_metrics_oracle():
    rng = np.random.default_rng(7007)
    exact = True
    for _ in range(100):
        L = int(rng.integers(2, 5))
        n = int(rng.integers(4, 80))
        preds = list(rng.integers(0, L, size=n))
        labels = list(rng.integers(0, L, size=n))
        from aupain.core import PainLevel

        cm = confusion(
            [PainLevel(p, str(p)) for p in preds], [PainLevel(t, str(t)) for t in labels], L
        )
        report = metrics(cm)
        correct = sum(1 for p, t in zip(preds, labels) if p == t)
        exact &= report.weighted_accuracy == correct / n
        recalls = []
        wp = wr = wf = 0.0
        for c in range(L):
            tp = sum(1 for p, t in zip(preds, labels) if p == c and t == c)
            fp = sum(1 for p, t in zip(preds, labels) if p == c and t != c)
            fn = sum(1 for p, t in zip(preds, labels) if p != c and t == c)
            support = tp + fn
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / support if support else 0.0
            f1 = 2 * tp / (2 * tp + fn + fp) if 2 * tp + fn + fp else 0.0
            if support:
                recalls.append(recall)
            wp += precision * support
            wr += recall * support
            wf += f1 * support
            got = report.per_class[c]
            exact &= (got.precision, got.recall, got.f1, got.support) == (precision, recall, f1, support)
        exact &= report.unweighted_accuracy == sum(recalls) / len(recalls)
        exact &= report.weighted_precision == wp / n
        exact &= report.weighted_recall == wr / n
        exact &= report.weighted_f1 == wf / n
    from aupain.core import PainLevel

    binary = metrics(
        confusion(
            [PainLevel(1, "p")] * 5 + [PainLevel(0, "n")] * 15,
            [PainLevel(1, "p")] * 10 + [PainLevel(0, "n")] * 10,
            2,
        )
    )
    f1_ok = binary.per_class[1].f1 == pytest.approx(2 / 3)
    check("C7 metrics-oracle", exact and f1_ok, "100 random sets exact, binary F1 = 2/3")


def test_c08_fold_protocol(tmp_path):
    from aupain.ingestion import load_manifest

    from synth import write_au_csv, write_landmark_csv

    write_au_csv(tmp_path / "au.csv", {"f0": {au: 0.0 for au in AU_IDS}})
    write_landmark_csv(tmp_path / "landmarks.csv", {"f0": make_face()})
    rows = [
        (f"f{i}", f"subject{i:02d}", "0.0", "FLACC4", "au.csv", "landmarks.csv", "", "")
        for i in range(76)
    ]
    rows[0] = ("f0", "subject00", "0.0", "FLACC4", "au.csv", "landmarks.csv", "", "")
    write_manifest_file(tmp_path / "m.txt", rows)
    manifest = load_manifest(tmp_path / "m.txt")
    spec = subject_folds(manifest, [16, 16, 16, 16, 12], seed=7)
    sizes = [len(f) for f in spec.folds]
    union = set().union(*spec.folds)
    disjoint = sum(sizes) == len(union) == 76
    check(
        "C8 fold-protocol",
        sizes == [16, 16, 16, 16, 12] and disjoint and union == set(manifest.subjects),
        f"sizes {sizes}, disjoint cover of 76 subjects",
    )


def test_c09_binning_boundaries():
    ok = (
        bin_label(2.4, LabelScheme.FLACC4).index == 0
        and bin_label(2.5, LabelScheme.FLACC4).index == 1
        and bin_label(7.5, LabelScheme.FLACC4).index == 3
    )
    rejected = 0
    for score in (1.0, 2.0, 3.0):
        try:
            bin_label(score, LabelScheme.NFCS2)
        except DataError:
            rejected += 1
    check("C9 binning-boundaries", ok and rejected == 3, "FLACC edges per table, NFCS 1-3 rejected")


def test_c10_determinism(tmp_path):
    rng = np.random.default_rng(1010)
    manifest = write_regression_dataset(tmp_path, rng, n_subjects=6, frames_per_subject=10)
    raw = {au: 0.4 for au in AU_IDS}
    raw[27], raw[25], raw[10] = 0.9, 0.8, 0.7
    from aupain.engagement import write_profile

    with open(tmp_path / "profile.txt", "w") as fh:
        write_profile(EngagementProfile.from_raw(raw, frame_count=1), fh)
    folds = tmp_path / "folds.txt"
    assert run(["split", "--manifest", str(manifest), "--sizes", "3,3", "--seed", "4",
                "--out", str(folds), "--quiet"]).exit_code == 0

    outputs = []
    for tag in ("run1", "run2"):
        d = tmp_path / tag
        d.mkdir()
        r1 = run(["train", "--manifest", str(manifest), "--k", "3", "--profile",
                  str(tmp_path / "profile.txt"), "--epochs", "12", "--seed", "9",
                  "--out", str(d / "model.txt"), "--quiet"])
        r2 = run(["eval", "--manifest", str(manifest), "--folds", str(folds), "--method",
                  "aue-weighted", "--k", "3", "--profile", str(tmp_path / "profile.txt"),
                  "--epochs", "12", "--seed", "9", "--out", str(d / "report.txt"), "--quiet"])
        assert r1.exit_code == 0 and r2.exit_code == 0
        outputs.append(sorted(p for p in d.iterdir()))
    identical = True
    compared = 0
    for p1, p2 in zip(*outputs):
        identical &= p1.name == p2.name and p1.read_bytes() == p2.read_bytes()
        compared += 1
    check("C10 determinism", identical and compared >= 6, f"{compared} artifacts byte-identical")
