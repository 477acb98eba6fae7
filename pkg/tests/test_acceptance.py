"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line
(also collected into the terminal summary) before asserting."""

import hashlib
import json
import math
import time
from decimal import Decimal

import numpy as np

from acceptance_log import record
from boost_oracle import exhaustive_best_split
from detector_harness import score_detector
from feature_oracles import ORACLES, agree, random_params, random_series
from gradcheck import check_layer, check_model
from nets import layer_cases, spike_model, tiny_cnn, tiny_resnet
from report_fixtures import B4_ROWS, VOCAB_2017, b4_sets
from test_hrv import GOLDEN_PGM_SHA256, golden_series

from ecgbench import evalkit
from ecgbench.boost import BoostConfig, fit_ovr, fit_tree, predict_labels
from ecgbench.cli import MANIFEST_NAME, run
from ecgbench.evalkit import TimingReport, classification_report, f1_score, render
from ecgbench.hrv import NNSeries, poincare_points, rasterize_poincare
from ecgbench.neural import (
    Dense,
    TrainConfig,
    accuracy,
    build_resnet1d,
    deserialize_model,
    gradcam1d,
    serialize_model,
    train,
)
from ecgbench.synth import burst_dataset, synthetic_record
from ecgbench.tsfeat import FeatureMatrix, FeatureSpec, compute_feature
from ecgbench.wfdb_io import load_record, parse_header, read_record, save_record, write_record


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def mean(values):
    return math.fsum(values) / len(values)


# -- 1


def test_c01_metric_format_fidelity():
    with Clock() as clock:
        b4 = {"N": (0.88, 0.94, 0.91, 1044), "A": (0.80, 0.87, 0.83, 140),
              "O": (0.83, 0.69, 0.75, 473), "~": (0.51, 0.51, 0.51, 49)}
        b3_f1 = (0.91, 0.77, 0.72, 0.51)
        total = sum(row[3] for row in b4.values())
        checks = {
            "B4 N f1": (render(f1_score(0.88, 0.94)), "0.91"),
            "B4 A f1": (render(f1_score(0.80, 0.87)), "0.83"),
            "B4 O f1": (render(f1_score(0.83, 0.69)), "0.75"),
            "B4 weighted f1": (render(math.fsum(r[2] * r[3] for r in b4.values()) / total), "0.85"),
            "B4 macro f1": (render(mean([r[2] for r in b4.values()])), "0.75"),
            "B3 micro f1": (render(f1_score(0.86, 0.83)), "0.84"),
            "B3 macro f1": (render(mean(b3_f1)), "0.73"),
        }
        true_sets, pred_sets = b4_sets()
        rows = classification_report(true_sets, pred_sets, VOCAB_2017).to_latex_rows()
        bad = [k for k, (got, want) in checks.items() if got != want]
        golden = rows == B4_ROWS
    ok = not bad and golden
    record(1, "metric format", ok, clock.elapsed, 1,
           f"{len(checks) - len(bad)}/{len(checks)} arithmetic checks, B4 golden rows {'match' if golden else 'differ'}")
    assert ok, (bad, rows)


# -- 2


def test_c02_feature_oracles():
    failures = []
    with Clock() as clock:
        for group, oracle in ORACLES.items():
            rng = np.random.default_rng(sum(map(ord, group)))
            for i in range(100):
                n = int(rng.integers(16, 513))
                x = np.full(n, 1.5) if i % 25 == 0 else random_series(rng, n)
                params = random_params(group, rng, n)
                got = compute_feature(FeatureSpec.make(group, **params), x)
                want = oracle([float(v) for v in x], **params)
                if not agree(group, params, got, want, x, rel=1e-9):
                    failures.append((group, params, n))
    ok = not failures and len(ORACLES) == 22
    record(2, "feature oracles", ok, clock.elapsed, 60,
           f"{len(ORACLES)} groups x 100 series, {len(failures)} disagreements")
    assert ok, failures[:5]


# -- 3


def test_c03_gradient_checks():
    worst = 0.0
    with Clock() as clock:
        for trial in range(20):
            rng = np.random.default_rng(trial)
            x, cases = layer_cases(rng)
            for layer, train_mode in cases:
                worst = max(worst, *check_layer(layer, x.copy(), train_mode, seed=trial).values())
            dense = Dense(int(rng.integers(1, 6)), int(rng.integers(1, 4)), rng=rng)
            worst = max(worst, *check_layer(dense, rng.normal(size=(3, dense.in_features)), seed=trial).values())
        rng = np.random.default_rng(5)
        x, y = rng.normal(size=(3, 1, 64)), np.eye(2)[[0, 1, 1]]
        for builder in (tiny_cnn, tiny_resnet):
            for train_mode in (True, False):
                errs = check_model(builder(), x, y, train=train_mode, limit=None if builder is tiny_cnn else 40)
                worst = max(worst, *errs.values())
    ok = worst <= 1e-4
    record(3, "gradient checks", ok, clock.elapsed, 120,
           f"11 layer kinds x 20 draws + 2 architectures x 2 modes, worst relative error {worst:.1e}")
    assert ok


# -- 4


def test_c04_detector_accuracy():
    with Clock() as clock:
        score = score_detector(n_records=200, snr_db=10.0, tol_s=0.05)
    ok = score.sensitivity >= 0.99 and score.false_rate <= 0.01
    record(4, "R-peak detector", ok, clock.elapsed, 60,
           f"sensitivity {score.sensitivity:.4f}, false detections {score.false_rate:.4f} "
           f"over {score.true_peaks} beats")
    assert ok


# -- 5


def test_c05_poincare():
    with Clock() as clock:
        flat = poincare_points(NNSeries(np.full(80, 0.92)))
        diagonal = bool(np.all(flat[:, 0] == flat[:, 1])) and len(flat) == 79
        series = golden_series()
        pts = poincare_points(NNSeries(series))
        count = len(pts) == len(series) - 1
        digest = hashlib.sha256(rasterize_poincare(pts).to_pgm()).hexdigest()
    ok = diagonal and count and digest == GOLDEN_PGM_SHA256
    record(5, "Poincare", ok, clock.elapsed, 5,
           f"diagonal {diagonal}, n-1 points {count}, golden hash {digest[:12]}")
    assert ok


# -- 6


def test_c06_overfit_sanity():
    X, Y = burst_dataset(32, 1800, seed=0)
    X = (X - X.mean(axis=-1, keepdims=True)) / X.std(axis=-1, keepdims=True)
    model = build_resnet1d(2, 1, seed=0)
    reached = []

    def check(epoch, m):
        m.recalibrate_batchnorm(X)
        acc = accuracy(m, X, Y)
        reached.append(acc)
        return acc >= 0.95

    with Clock() as clock:
        train(model, X, Y, TrainConfig(epochs=200, batch_size=8, learning_rate=0.01, seed=0), on_epoch_end=check)
    ok = bool(reached) and reached[-1] >= 0.95
    record(6, "overfit sanity", ok, clock.elapsed, 600,
           f"train accuracy {reached[-1]:.3f} after {len(reached)} epochs")
    assert ok


# -- 7

SPIKE_AMPLITUDE = 15.0
SPIKE_KERNEL = 9


def test_c07_gradcam_localisation():
    rng = np.random.default_rng(7)
    model = spike_model(SPIKE_KERNEL)
    hits, contract = 0, True
    with Clock() as clock:
        for _ in range(100):
            n = int(rng.integers(64, 513))
            pos = int(rng.integers(SPIKE_KERNEL, n - SPIKE_KERNEL))
            x = rng.normal(size=n)
            x[pos] += SPIKE_AMPLITUDE
            h = gradcam1d(model, x[None], 1)
            contract &= h.shape == (n,) and h.min() >= 0 and h.max() <= 1
            hits += abs(int(np.argmax(h)) - pos) <= SPIKE_KERNEL
    ok = hits >= 95 and contract
    record(7, "GradCAM", ok, clock.elapsed, 60,
           f"{hits}/100 argmax within {SPIKE_KERNEL} samples, contract held {contract}")
    assert ok


# -- 8


def oracle_tree(X, g, h, cfg, depth=0):
    G, H = math.fsum(g), math.fsum(h)
    t = math.copysign(max(abs(G) - cfg.reg_alpha, 0.0), G)
    leaf = ("leaf", -t / (H + cfg.reg_lambda))
    if depth >= cfg.max_depth:
        return leaf
    best = exhaustive_best_split(X, g, h, cfg.reg_lambda, cfg.gamma, cfg.reg_alpha)
    if best is None:
        return leaf
    _, f, thr = best
    left = [i for i in range(len(X)) if X[i][f] < thr]
    right = [i for i in range(len(X)) if X[i][f] >= thr]

    def sub(idx):
        return oracle_tree([X[i] for i in idx], [g[i] for i in idx], [h[i] for i in idx], cfg, depth + 1)

    return ("split", f, thr, sub(left), sub(right))


def same_tree(node, want):
    if want[0] == "leaf":
        return node.is_leaf and math.isclose(node.weight, want[1], rel_tol=1e-9, abs_tol=1e-12)
    return (not node.is_leaf and (node.feature, node.threshold) == want[1:3]
            and same_tree(node.left, want[3]) and same_tree(node.right, want[4]))


def test_c08_boosted_tree_oracle():
    mismatches = 0
    with Clock() as clock:
        for trial in range(50):
            rng = np.random.default_rng(1000 + trial)
            n, F = int(rng.integers(2, 201)), int(rng.integers(1, 21))
            X = rng.normal(size=(n, F))
            if trial % 3 == 0:
                X = np.round(X * 2) / 2
            y = (rng.random(n) < 0.4).astype(float)
            p = rng.uniform(0.05, 0.95, size=n)
            g, h = p - y, p * (1 - p)
            cfg = BoostConfig(max_depth=3, reg_lambda=float(rng.choice([0.01, 1.0, 10.0])),
                              reg_alpha=float(rng.choice([0.0, 0.05])))
            mismatches += not same_tree(fit_tree(g, h, X, cfg), oracle_tree(X.tolist(), g.tolist(), h.tolist(), cfg))
        rng = np.random.default_rng(0)
        Xs = rng.uniform(-1, 1, size=(60, 2))
        labels = [("A",) if r[0] + 0.5 * r[1] > 0 else ("B",) for r in Xs]
        m = FeatureMatrix(tuple(f"r{i}" for i in range(60)), ("f0", "f1"), Xs)
        pred = predict_labels(fit_ovr(m, labels, ["A", "B"], BoostConfig(rounds=50)), m)
        train_acc = mean([set(a) == set(b) for a, b in zip(pred, labels)])
    ok = mismatches == 0 and train_acc == 1.0
    record(8, "boosted trees", ok, clock.elapsed, 60,
           f"{50 - mismatches}/50 depth-3 trees equal the exhaustive oracle, separable accuracy {train_acc:.2f}")
    assert ok


# -- 9

TABLE2_WH_G = [(127, 69), (148, 81), (77, 42), (44, 24), (92, 51), (42, 23),
               (630, 344), (740, 404), (396, 216), (223, 122), (497, 271), (286, 156)]


def test_c09_energy_arithmetic():
    with Clock() as clock:
        diffs = [abs(round(evalkit.co2_from_energy(wh, 0.545)) - g) for wh, g in TABLE2_WH_G]
    ok = len(diffs) == 12 and max(diffs) <= 1
    record(9, "energy", ok, clock.elapsed, 1, f"12 pairs, worst deviation {max(diffs)} g at 0.545 g/Wh")
    assert ok


# -- 10

TABLE6 = {"ResNet50": (33.7, 37.9, "71.6"), "1D CNN": (13.5, 27.5, "41.0"), "XGBoost": (1717.6, 0.2, "1717.8")}


def test_c10_timing_contract():
    with Clock() as clock:
        rows_ok = all(TimingReport(p, q).rendered()[2] == total for p, q, total in TABLE6.values())
        rng = np.random.default_rng(10)
        sums_ok = True
        for _ in range(1000):
            a, b = rng.uniform(0, 2000, size=2)
            p, q, t = TimingReport(float(a), float(b)).rendered()
            sums_ok &= Decimal(p) + Decimal(q) == Decimal(t)
        report = evalkit.time_pipeline(lambda r: time.sleep(0.030), lambda r: time.sleep(0.040), [0, 1], repetitions=3)
        drift = max(abs(report.processing_ms - 30), abs(report.prediction_ms - 40))
    ok = rows_ok and sums_ok and drift <= 5
    record(10, "timing", ok, clock.elapsed, 30,
           f"3 consistent reference rows {rows_ok}, 1000 random rows add up {sums_ok}, "
           f"sleep harness off by {drift:.2f} ms")
    assert ok


# -- 11


def _pipeline(root, out):
    data = str(root / "data")
    labels = str(root / "labels.csv")
    codes = [
        run(["features", data, "--out-dir", str(out / "f")]),
        run(["train", data, "--labels", labels, "--window", "600", "--epochs", "2", "--seed", "4",
             "--vocab", "N,O", "--out-dir", str(out / "t")]),
        run(["boost-train", "--features", str(out / "f" / "features.csv"), "--labels", labels,
             "--vocab", "N,O", "--rounds", "5", "--out-dir", str(out / "b")]),
    ]
    return codes, [json.loads((out / s / MANIFEST_NAME).read_text())["artifacts"] for s in ("f", "t", "b")]


def test_c11_round_trips(tmp_path):
    with Clock() as clock:
        rec = synthetic_record("A00077", duration_s=6, leads=("I", "II"), seed=5, comments=("Dx: 164889003",))
        text, payload = write_record(rec)
        back = read_record(parse_header(text), payload)
        save_record(back, tmp_path / "disk")
        again = load_record(tmp_path / "disk" / "A00077.hea")
        wfdb_ok = np.array_equal(back.samples, again.samples) and write_record(again) == (text, payload)

        model = tiny_resnet()
        x = np.random.default_rng(3).normal(size=(8, 1, 64))
        train(model, x, np.eye(2)[np.arange(8) % 2], TrainConfig(epochs=1, batch_size=4))
        blob = serialize_model(model)
        clone = deserialize_model(blob)
        model_ok = serialize_model(clone) == blob and np.array_equal(clone.forward(x), model.forward(x))

        root = tmp_path / "ds"
        rows = []
        for i in range(4):
            lab = "N" if i % 2 == 0 else "O"
            save_record(synthetic_record(f"A{i:05d}", duration_s=8, bpm=60 if lab == "N" else 115, seed=i), root / "data")
            rows.append(f"A{i:05d},{lab}")
        (root / "labels.csv").write_text("\n".join(rows) + "\n")
        codes_a, runs_a = _pipeline(root, tmp_path / "a")
        codes_b, runs_b = _pipeline(root, tmp_path / "b")
        runs_ok = codes_a == codes_b == [0, 0, 0] and runs_a == runs_b and all(runs_a)
    ok = wfdb_ok and model_ok and runs_ok
    record(11, "round trips", ok, clock.elapsed, 30,
           f"WFDB {wfdb_ok}, model bytes {model_ok}, same-seed features/train/boost artifact digests {runs_ok}")
    assert ok
