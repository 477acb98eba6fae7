"""Command-line entry point: ``ecgbench <command> [options]``.

Every option can also come from a TOML file given with ``--config``; top-level
keys apply to every command and a ``[command]`` table overrides them for one
command. Flags beat the file, the file beats built-in defaults, and the run
manifest records which source won for each setting.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import boost, evalkit, hrv
from .dsp import DEFAULT_RATE, Signal, bandpass_filter, prepare_model_input
from .errors import ConfigError, DataError, EcgBenchError, LabelError
from .rng import substream
from .wfdb_io import (
    CINC2017_CLASSES,
    CINC2020_CLASSES,
    load_record,
    read_reference_csv,
    scan_directory,
    source_of,
    split_dataset,
)

MANIFEST_NAME = "run_manifest.json"
VOCABULARIES = {"cinc2017": CINC2017_CLASSES, "cinc2020": CINC2020_CLASSES}


@dataclass(frozen=True)
class Option:
    name: str
    type: Callable
    default: Any
    help: str
    nargs: str | None = None
    path: bool = False  # must exist when given


COMMON = (
    Option("seed", int, 0, "run seed; every random stream derives from it"),
    Option("out_dir", str, "out", "directory for artifacts and the run manifest"),
    Option("jobs", int, None, "worker processes (default: $ECGBENCH_JOBS or 1)"),
)
DSP = (
    Option("low_hz", float, 3.0, "band-pass lower edge"),
    Option("high_hz", float, 45.0, "band-pass upper edge"),
    Option("target_hz", int, DEFAULT_RATE, "resampling target"),
    Option("window", int, 18000, "model input length in samples"),
)
RECORDS = Option("records", str, None, ".hea files or directories searched recursively", nargs="+")
VOCAB = Option("vocab", str, "cinc2017", "cinc2017, cinc2020 or a comma-separated class list")

COMMANDS: dict[str, tuple[str, tuple[Option, ...]]] = {
    "ingest": ("scan a dataset directory and write a split manifest", (
        Option("data_dir", str, None, "directory holding .hea records", path=True),
        Option("reference", str, None, "REFERENCE.csv for single-label datasets", path=True),
        VOCAB,
        Option("ratios", float, [0.6, 0.2, 0.2], "train/val/test fractions", nargs=3),
    )),
    "detect": ("R-peak detection, one CSV per record", (RECORDS,) + DSP[:2]),
    "poincare": ("Poincare images (PGM and PNG) per record", (RECORDS,) + DSP[:2]),
    "features": ("time-series feature matrix", (
        RECORDS,
        Option("feature_config", str, None, "feature grid TOML (default: packaged grid)", path=True),
        Option("out", str, "features.csv", "matrix CSV path (relative to --out-dir)"),
    ) + DSP[:3]),
    "train": ("train a 1D network", (
        RECORDS,
        Option("labels", str, None, "labels CSV (record_id,labels)", path=True),
        VOCAB,
        Option("arch", str, "resnet1d", "cnn1d or resnet1d"),
        Option("epochs", int, 30, "training epochs"),
        Option("batch_size", int, 32, "mini-batch size"),
        Option("lr", float, 1e-3, "SGD learning rate"),
        Option("momentum", float, 0.9, "SGD momentum"),
        Option("out", str, "model.ecgn", "model file (relative to --out-dir)"),
    ) + DSP[2:]),
    "infer": ("predict with a trained network", (
        RECORDS,
        Option("model", str, None, "model file", path=True),
        Option("threshold", float, 0.5, "probability threshold"),
        Option("out", str, "predictions.csv", "predictions CSV (relative to --out-dir)"),
    ) + DSP[2:]),
    "gradcam": ("GradCAM heatmap CSV and SVG overlay", (
        RECORDS,
        Option("model", str, None, "model file", path=True),
        Option("cls", str, None, "class symbol to explain"),
    ) + DSP[2:]),
    "boost-train": ("train one-vs-rest boosted trees", (
        Option("features", str, None, "feature matrix CSV", path=True),
        Option("labels", str, None, "labels CSV (record_id,labels)", path=True),
        VOCAB,
        Option("rounds", int, 200, "maximum boosting rounds"),
        Option("max_depth", int, 6, "tree depth limit"),
        Option("eta", float, 0.3, "learning rate"),
        Option("gamma", float, 0.0, "split penalty"),
        Option("reg_lambda", float, 1.0, "L2 leaf penalty"),
        Option("reg_alpha", float, 0.0, "L1 leaf penalty"),
        Option("scale_pos_weight", float, 1.0, "positive-class weight"),
        Option("patience", int, 20, "early-stopping patience"),
        Option("search", int, 0, "random-search trials on a seeded hold-out (0 = off)"),
        Option("out", str, "boost.json", "model file (relative to --out-dir)"),
    )),
    "boost-predict": ("predict with boosted trees", (
        Option("model", str, None, "boosted model JSON", path=True),
        Option("features", str, None, "feature matrix CSV", path=True),
        Option("threshold", float, 0.5, "probability threshold"),
        Option("out", str, "predictions.csv", "predictions CSV (relative to --out-dir)"),
    )),
    "report": ("classification report from labels and predictions", (
        Option("labels", str, None, "labels CSV", path=True),
        Option("predictions", str, None, "predictions CSV", path=True),
        VOCAB,
        Option("by_source", bool, False, "add micro-F1 per record source"),
    )),
    "bench": ("per-record inference timing and energy estimate", (
        RECORDS,
        Option("model", str, None, "network (.ecgn) or boosted model (.json)", path=True),
        Option("feature_config", str, None, "feature grid for boosted models", path=True),
        Option("reps", int, 3, "repetitions, the first is discarded"),
        Option("factor", float, evalkit.DEFAULT_FACTOR, "emission factor g/Wh"),
        Option("watts", float, [65.0], "device power draws", nargs="+"),
        Option("utilization", float, [1.0], "device utilizations", nargs="+"),
    ) + DSP),
}

REQUIRED = {
    "ingest": ("data_dir",),
    "detect": ("records",),
    "poincare": ("records",),
    "features": ("records",),
    "train": ("records", "labels"),
    "infer": ("records", "model"),
    "gradcam": ("records", "model", "cls"),
    "boost-train": ("features", "labels"),
    "boost-predict": ("model", "features"),
    "report": ("labels", "predictions"),
    "bench": ("records", "model"),
}


def _options(command: str) -> tuple[Option, ...]:
    return COMMON + COMMANDS[command][1]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecgbench", description="ECG classification benchmark pipelines")
    parser.add_argument("--config", help="TOML run configuration")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (help_text, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="TOML run configuration")
        for opt in _options(name):
            flag = "--class" if opt.name == "cls" else "--" + opt.name.replace("_", "-")
            kwargs: dict = {"dest": opt.name, "help": opt.help}
            if opt.type is bool:
                kwargs["action"] = "store_true"
            else:
                kwargs["type"] = opt.type
                if opt.nargs:
                    kwargs["nargs"] = opt.nargs
            if opt.name == "records":
                p.add_argument("records", nargs="*", help=opt.help, default=argparse.SUPPRESS)
            else:
                p.add_argument(flag, **kwargs)
    return parser


# ------------------------------------------------------------------ config


def _load_toml(path: str) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def _coerce(opt: Option, value, errors: list[str]):
    try:
        if opt.nargs:
            values = value if isinstance(value, list) else [value]
            return [opt.type(v) for v in values]
        if opt.type is bool:
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
            return value
        return opt.type(value)
    except (TypeError, ValueError) as exc:
        errors.append(f"{opt.name}: {exc}")
        return opt.default


def resolve_settings(command: str, flags: dict, config: dict | None) -> tuple[dict, dict]:
    """Merge defaults, config file and flags; returns ``(settings, origin)``."""
    opts = {o.name: o for o in _options(command)}
    settings = {name: o.default for name, o in opts.items()}
    origin = {name: "default" for name in opts}
    env_jobs = os.environ.get("ECGBENCH_JOBS")
    errors: list[str] = []
    if env_jobs is not None:
        try:
            settings["jobs"] = int(env_jobs)
            origin["jobs"] = "env"
        except ValueError:
            errors.append(f"ECGBENCH_JOBS: not an integer: {env_jobs!r}")

    if config:
        layers = [{k: v for k, v in config.items() if not isinstance(v, dict)}, config.get(command, {})]
        for key in config:
            if isinstance(config[key], dict) and key not in COMMANDS:
                errors.append(f"unknown config table [{key}]")
        for layer in layers:
            for key, value in layer.items():
                name = key.replace("-", "_")
                if name == "class":
                    name = "cls"
                if name not in opts:
                    if layer is layers[1] or not any(name in {o.name for o in _options(c)} for c in COMMANDS):
                        errors.append(f"unknown setting {key!r}")
                    continue
                settings[name] = _coerce(opts[name], value, errors)
                origin[name] = "config"

    for name, value in flags.items():
        if name in opts:
            settings[name] = value
            origin[name] = "flag"

    if settings["jobs"] is None:
        settings["jobs"] = 1
    errors += validate(command, settings)
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return settings, origin


def validate(command: str, s: dict) -> list[str]:
    errors = []
    for name in REQUIRED[command]:
        if s.get(name) in (None, []):
            errors.append(f"{name} is required")
    for opt in _options(command):
        if opt.path and s.get(opt.name) is not None and not Path(s[opt.name]).exists():
            errors.append(f"{opt.name}: path {s[opt.name]} does not exist")
    for p in s.get("records") or []:
        if not Path(p).exists():
            errors.append(f"records: path {p} does not exist")
    if s["jobs"] < 1:
        errors.append("jobs must be >= 1")
    if "arch" in s and s["arch"] not in ("cnn1d", "resnet1d"):
        errors.append(f"arch must be cnn1d or resnet1d, got {s['arch']!r}")
    if "low_hz" in s and "high_hz" in s and not 0 < s["low_hz"] < s["high_hz"]:
        errors.append("band edges must satisfy 0 < low_hz < high_hz")
    for name in ("window", "target_hz", "epochs", "batch_size", "rounds"):
        if name in s and s[name] < 1:
            errors.append(f"{name} must be >= 1")
    if "reps" in s and s["reps"] < 3:
        errors.append("reps must be >= 3")
    if "watts" in s and len(s["watts"]) != len(s["utilization"]):
        errors.append("watts and utilization need the same number of values")
    if "vocab" in s:
        try:
            vocabulary(s["vocab"])
        except ConfigError as exc:
            errors.append(str(exc))
    return errors


def vocabulary(spec: str) -> tuple[str, ...]:
    if spec in VOCABULARIES:
        return VOCABULARIES[spec]
    classes = tuple(c.strip() for c in spec.split(",") if c.strip())
    if not classes:
        raise ConfigError(f"vocab: empty class list {spec!r}")
    return classes


# ------------------------------------------------------------------ helpers


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def record_paths(items: Sequence[str]) -> list[Path]:
    """Header paths sorted by record id; directories are searched recursively."""
    found: dict[str, Path] = {}
    for item in items:
        p = Path(item)
        for hea in sorted(p.rglob("*.hea")) if p.is_dir() else [p]:
            if hea.suffix != ".hea":
                raise DataError(f"{hea} is not a .hea header")
            rid = hea.stem
            if rid in found and found[rid] != hea:
                raise DataError(f"record id {rid} appears twice ({found[rid]}, {hea})")
            found[rid] = hea
    if not found:
        raise DataError("no records found")
    return [found[k] for k in sorted(found)]


def read_labels(path: str | Path) -> dict[str, tuple[str, ...]]:
    """``record_id,labels`` rows with ``;``-separated labels; a header row is optional."""
    text = Path(path).read_text(encoding="utf-8")
    out: dict[str, tuple[str, ...]] = {}
    for i, row in enumerate(csv.reader(io.StringIO(text))):
        if not row or not "".join(row).strip():
            continue
        if i == 0 and row[0].strip() == "record_id":
            continue
        if len(row) < 2:
            raise LabelError(f"{path}: row {i + 1} needs a record id and labels")
        rid = row[0].strip()
        if rid in out:
            raise LabelError(f"{path}: duplicate record {rid}")
        out[rid] = tuple(sorted(x.strip() for x in row[1].split(";") if x.strip()))
    return out


def write_predictions(path: Path, ids, classes, probs, threshold):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "labels"] + [f"p_{c}" for c in classes])
        for rid, row in zip(ids, probs):
            labs = ";".join(c for c, v in zip(classes, row) if v >= threshold)
            w.writerow([rid, labs] + [repr(float(v)) for v in row])


def _pool_map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _model_input(path, target_hz, window) -> np.ndarray:
    rec = load_record(path)
    return prepare_model_input(Signal(rec.samples, rec.header.sampling_rate_hz), target_hz, window)


def _load_inputs(paths, s) -> np.ndarray:
    return np.stack([_model_input(p, s["target_hz"], s["window"]) for p in paths])


# ------------------------------------------------------------------ commands


def cmd_ingest(s, out: Path) -> list[Path]:
    vocab = vocabulary(s["vocab"])
    reference = None
    if s["reference"]:
        reference = read_reference_csv(Path(s["reference"]).read_text(encoding="utf-8"), vocab)
    entries = scan_directory(s["data_dir"], vocab, reference)
    manifest = split_dataset(entries, s["ratios"], seed=s["seed"])
    path = out / "dataset.json"
    path.write_text(manifest.to_json(), encoding="utf-8")
    return [path]


def _detect_job(args):
    path, low, high = args
    return hrv.record_peaks(load_record(path), low, high).indices


def cmd_detect(s, out: Path) -> list[Path]:
    paths = record_paths(s["records"])
    results = _pool_map(_detect_job, [(p, s["low_hz"], s["high_hz"]) for p in paths], s["jobs"])
    written = []
    for p, idx in zip(paths, results):
        target = out / f"{p.stem}.peaks.csv"
        target.write_text("sample\n" + "".join(f"{int(i)}\n" for i in idx), encoding="utf-8")
        written.append(target)
    return written


def _poincare_job(args):
    path, low, high = args
    _, _, image = hrv.poincare_from_record(load_record(path), low, high)
    return image.to_pgm(), image.to_png()


def cmd_poincare(s, out: Path) -> list[Path]:
    paths = record_paths(s["records"])
    results = _pool_map(_poincare_job, [(p, s["low_hz"], s["high_hz"]) for p in paths], s["jobs"])
    written = []
    for p, (pgm, png) in zip(paths, results):
        for ext, blob in (("pgm", pgm), ("png", png)):
            target = out / f"{p.stem}.{ext}"
            target.write_bytes(blob)
            written.append(target)
    return written


def _feature_input(path, s):
    rec = load_record(path)
    sig = bandpass_filter(Signal(rec.samples, rec.header.sampling_rate_hz), s["low_hz"], s["high_hz"])
    return rec.header.lead_names, prepare_model_input(sig, s["target_hz"], window=None)


def _feature_specs(path):
    from .tsfeat import load_config

    return load_config(path)


def _feature_rows(paths, s, specs):
    from .tsfeat import build_feature_matrix

    inputs = [_feature_input(p, s) for p in paths]
    lead_names = inputs[0][0]
    if any(names != lead_names for names, _ in inputs):
        raise DataError("records do not share one lead layout")
    return build_feature_matrix([(p.stem, x) for p, (_, x) in zip(paths, inputs)], specs, lead_names, s["jobs"])


def cmd_features(s, out: Path) -> list[Path]:
    paths = record_paths(s["records"])
    matrix = _feature_rows(paths, s, _feature_specs(s["feature_config"]))
    target = out / s["out"]
    matrix.save(target)
    return [target]


def cmd_train(s, out: Path) -> list[Path]:
    from .neural import TrainConfig, build_cnn1d, build_resnet1d, save_model, train

    vocab = vocabulary(s["vocab"])
    labels = read_labels(s["labels"])
    paths = record_paths(s["records"])
    missing = [p.stem for p in paths if p.stem not in labels]
    if missing:
        raise LabelError(f"no labels for records {missing[:5]}")
    X = _load_inputs(paths, s)
    Y = boost.label_matrix([labels[p.stem] for p in paths], vocab)
    seed = int(substream(s["seed"], "init").integers(2**31))
    if s["arch"] == "cnn1d":
        model = build_cnn1d(len(vocab), in_leads=X.shape[1], seed=seed, input_length=s["window"])
    else:
        model = build_resnet1d(len(vocab), in_leads=X.shape[1], seed=seed)
    model.classes = tuple(vocab)
    cfg = TrainConfig(
        epochs=s["epochs"], batch_size=s["batch_size"], learning_rate=s["lr"],
        momentum=s["momentum"], seed=s["seed"],
    )
    log = train(model, X, Y, cfg)
    model.recalibrate_batchnorm(X)
    target = out / s["out"]
    save_model(model, target)
    log_path = out / "train_log.json"
    log_path.write_text(json.dumps({"losses": log.losses, "stopped_early": log.stopped_early}, indent=2))
    return [target, log_path]


def cmd_infer(s, out: Path) -> list[Path]:
    from .neural import load_model

    model = load_model(s["model"])
    paths = record_paths(s["records"])
    probs = model.predict_proba(_load_inputs(paths, s))
    target = out / s["out"]
    write_predictions(target, [p.stem for p in paths], model.classes, probs, s["threshold"])
    return [target]


def heatmap_svg(signal: np.ndarray, heat: np.ndarray, width: int = 1000, height: int = 200, strips: int = 500) -> str:
    """Signal trace over red strips whose opacity follows the heatmap."""
    n = len(signal)
    edges = np.linspace(0, n, min(strips, n) + 1).astype(int)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for a, b in zip(edges[:-1], edges[1:]):
        level = float(heat[a:b].mean())
        if level > 0:
            x0, x1 = a * width / n, b * width / n
            parts.append(
                f'<rect x="{x0:.2f}" y="0" width="{x1 - x0:.2f}" height="{height}" '
                f'fill="red" fill-opacity="{level:.3f}"/>'
            )
    lo, hi = float(signal.min()), float(signal.max())
    span = hi - lo or 1.0
    step = max(1, n // (4 * width))
    pts = " ".join(
        f"{i * width / max(n - 1, 1):.2f},{height - 4 - (float(signal[i]) - lo) / span * (height - 8):.2f}"
        for i in range(0, n, step)
    )
    parts.append(f'<polyline fill="none" stroke="black" stroke-width="1" points="{pts}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_gradcam(s, out: Path) -> list[Path]:
    from .neural import gradcam1d, load_model

    model = load_model(s["model"])
    if s["cls"] not in model.classes:
        raise LabelError(f"class {s['cls']!r} not in model classes {list(model.classes)}")
    k = model.classes.index(s["cls"])
    written = []
    for p in record_paths(s["records"]):
        x = _model_input(p, s["target_hz"], s["window"])
        heat = gradcam1d(model, x, k)
        csv_path = out / f"{p.stem}.gradcam.csv"
        csv_path.write_text("sample,value\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(map(float, heat))))
        svg_path = out / f"{p.stem}.gradcam.svg"
        svg_path.write_text(heatmap_svg(x[0], heat), encoding="utf-8")
        written += [csv_path, svg_path]
    return written


def _labels_for(matrix, labels: dict, what: str):
    missing = [r for r in matrix.record_ids if r not in labels]
    if missing:
        raise LabelError(f"no labels for {what} rows {missing[:5]}")
    return [labels[r] for r in matrix.record_ids]


def cmd_boost_train(s, out: Path) -> list[Path]:
    from .tsfeat import FeatureMatrix, aggregate_importance, impute_and_prune, render_importance_table

    vocab = vocabulary(s["vocab"])
    matrix = impute_and_prune(FeatureMatrix.load(s["features"]))
    labels = _labels_for(matrix, read_labels(s["labels"]), "feature")
    config = boost.BoostConfig(
        max_depth=s["max_depth"], eta=s["eta"], gamma=s["gamma"], reg_lambda=s["reg_lambda"],
        reg_alpha=s["reg_alpha"], scale_pos_weight=s["scale_pos_weight"], rounds=s["rounds"],
        patience=s["patience"],
    )
    written = []
    if s["search"] > 0:
        order = substream(s["seed"], "search").permutation(len(labels))
        cut = max(1, int(round(0.8 * len(order))))
        tr, va = np.sort(order[:cut]), np.sort(order[cut:])
        if not len(va):
            raise DataError("too few rows for a search hold-out")
        sub = lambda idx: FeatureMatrix(tuple(matrix.record_ids[i] for i in idx), matrix.columns, matrix.values[idx])
        best, trials = boost.random_search(
            (sub(tr), [labels[i] for i in tr]), (sub(va), [labels[i] for i in va]), vocab,
            trials=s["search"], seed=s["seed"], rounds=s["rounds"],
        )
        config = best
        trials_path = out / "search.json"
        trials_path.write_text(json.dumps([{"config": asdict(c), "score": v} for c, v in trials], indent=2))
        written.append(trials_path)
    model = boost.fit_ovr(matrix, labels, vocab, config)
    target = out / s["out"]
    model.save(target)
    imp_path = out / "importance.txt"
    scores = boost.importance(model)
    imp_path.write_text((render_importance_table(aggregate_importance(scores)) if scores else "no splits") + "\n")
    return [target, imp_path] + written


def cmd_boost_predict(s, out: Path) -> list[Path]:
    from .tsfeat import FeatureMatrix

    model = boost.BoostedModel.load(s["model"])
    matrix = FeatureMatrix.load(s["features"])
    probs = boost.predict_proba(model, matrix)
    target = out / s["out"]
    write_predictions(target, matrix.record_ids, model.classes, probs, s["threshold"])
    return [target]


def cmd_report(s, out: Path) -> list[Path]:
    vocab = vocabulary(s["vocab"])
    truth = read_labels(s["labels"])
    preds = read_labels(s["predictions"])
    if len(truth) != len(preds) or set(truth) != set(preds):
        raise DataError(
            f"{len(truth)} labelled records but {len(preds)} predictions "
            f"({len(set(truth) ^ set(preds))} ids unmatched)"
        )
    ids = sorted(truth)
    t, p = [truth[i] for i in ids], [preds[i] for i in ids]
    report = evalkit.classification_report(t, p, vocab)
    txt, js = out / "report.txt", out / "report.json"
    txt.write_text(report.to_text(), encoding="utf-8")
    doc = json.loads(report.to_json())
    if s["by_source"]:
        rows = evalkit.f1_by_group(t, p, [source_of(i) for i in ids], vocab)
        doc["by_source"] = {r.source: {"records": r.records, "f1": r.f1} for r in rows}
        with open(txt, "a", encoding="utf-8") as fh:
            fh.write("\n" + evalkit.render_group_table({"model": rows}))
    js.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return [txt, js]


def cmd_bench(s, out: Path) -> list[Path]:
    paths = record_paths(s["records"])
    model_path = Path(s["model"])
    if model_path.suffix == ".json":
        from .tsfeat import FeatureMatrix, extract_all

        model = boost.BoostedModel.load(model_path)
        specs = _feature_specs(s["feature_config"])

        def process(p):
            names, x = _feature_input(p, s)
            vec = extract_all(x, specs, names)
            return FeatureMatrix((p.stem,), vec.names, vec.values[None, :])

        def predict(m):
            return boost.predict_proba(model, m)
    else:
        from .neural import load_model

        model = load_model(model_path)

        def process(p):
            return _model_input(p, s["target_hz"], s["window"])[None]

        def predict(x):
            return model.predict_proba(x)

    timing = evalkit.time_pipeline(process, predict, paths, s["reps"])
    hours = timing.total_ms * len(paths) * s["reps"] / 3.6e6
    energy = evalkit.estimate_energy(hours, list(zip(s["watts"], s["utilization"])), s["factor"])
    target = out / "bench.json"
    target.write_text(json.dumps({"timing": timing.as_dict(), "energy": energy.as_dict()}, indent=2))
    table = out / "bench.txt"
    table.write_text(evalkit.render_timing_table({model_path.stem: timing}))
    return [target, table]


HANDLERS = {
    "ingest": cmd_ingest,
    "detect": cmd_detect,
    "poincare": cmd_poincare,
    "features": cmd_features,
    "train": cmd_train,
    "infer": cmd_infer,
    "gradcam": cmd_gradcam,
    "boost-train": cmd_boost_train,
    "boost-predict": cmd_boost_predict,
    "report": cmd_report,
    "bench": cmd_bench,
}


def write_manifest(out: Path, command: str, settings: dict, origin: dict, artifacts: list[Path]) -> Path:
    doc = {
        "command": command,
        "seed": settings["seed"],
        "config": settings,
        "origin": origin,
        "artifacts": {str(p.relative_to(out)) if p.is_relative_to(out) else str(p): sha256_file(p) for p in artifacts},
    }
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    command = args.pop("command")
    config_path = args.pop("config", None)
    try:
        config = _load_toml(config_path) if config_path else None
        settings, origin = resolve_settings(command, args, config)
        out = Path(settings["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        artifacts = HANDLERS[command](settings, out)
        write_manifest(out, command, settings, origin, artifacts)
    except EcgBenchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
