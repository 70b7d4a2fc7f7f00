"""Config-driven end-to-end run with content-hash stage caching.

Config grammar (INI, read with :mod:`configparser`)::

    [data]            synth = yes|no, users, months, seed   (synthetic)
                      logs, transactions, members            (file paths)
                      reference_year                         (age cleaning)
    [period.<name>]   start, end, anchor, cutoff             (yyyymmdd) for train, cv, test
    [features]        catalog = <file>, inject_truth = yes|no
    [selection]       enabled, epsilon, correlation_threshold, n_trees
    [model.a]         any GbdtParams field (first ensemble member)
    [model.b]         any GbdtParams field (second ensemble member)
    [ensemble]        weights = 0.88, 0.12
    [run]             seed, out

Relative paths resolve against the config file's directory. Every stage
reads its inputs from the run directory and writes its outputs there, so any
stage can be rerun alone. ``manifest.jsonl`` records one line per stage with
the hashes of what it consumed and produced; a stage whose key (config
section plus input hashes) is unchanged and whose outputs are intact is
skipped on the next run.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ingest, labeling
from .errors import ChurnboostError, ConfigError, DataError
from .evaluate import DEFAULT_WEIGHTS, EnsembleSpec, EvalReport, blend, log_loss, read_predictions, write_predictions
from .features import FeatureMatrix, builtin_catalog, build_features, load_catalog, save_catalog
from .gbdt import GbdtModel, GbdtParams, feature_importance, predict, train
from .labeling import LabelSet
from .selection import DEFAULT_CORRELATION, DEFAULT_EPSILON, greedy_select, prune_correlated
from .synth import generate_synthetic
from .temporal import PERIOD_NAMES, TimePeriod, absolute_ordinal, default_periods, parse_ordinal

log = logging.getLogger(__name__)

TRUTH_FEATURE = "gt_churn_logit"
MODEL_NAMES = ("a", "b")
DEFAULT_MODELS = {
    "a": dict(growth="depth_wise", n_trees=150, learning_rate=0.05, max_depth=4, max_leaves=16,
              lambda_l2=5.0, min_child_hessian=5.0),
    "b": dict(growth="leaf_wise", n_trees=150, learning_rate=0.05, max_depth=0, max_leaves=8,
              lambda_l2=5.0, min_child_hessian=5.0),
}


class StageError(ChurnboostError):
    def __init__(self, stage: str, cause: Exception):
        self.stage, self.cause = stage, cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class PipelineConfig:
    out: Path
    seed: int = 1
    synth: bool = False
    synth_users: int = 5000
    synth_months: int = 6
    synth_seed: int = 1
    data_paths: dict[str, Path] = field(default_factory=dict)
    reference_year: int = 2017
    periods: dict[str, TimePeriod] = field(default_factory=default_periods)
    catalog_path: Path | None = None
    inject_truth: bool = False
    select: bool = True
    epsilon: float = DEFAULT_EPSILON
    correlation_threshold: float = DEFAULT_CORRELATION
    selection_trees: int | None = None
    models: dict[str, GbdtParams] = field(default_factory=dict)
    weights: tuple[float, ...] = DEFAULT_WEIGHTS

    def section(self, stage: str) -> dict:
        """The part of the config a stage's output depends on."""
        periods = {k: [absolute_ordinal(p.start), absolute_ordinal(p.end), absolute_ordinal(p.anchor),
                       absolute_ordinal(p.cutoff)] for k, p in self.periods.items()}
        if stage == "ingest":
            return {"synth": self.synth, "users": self.synth_users, "months": self.synth_months,
                    "seed": self.synth_seed, "paths": sorted(str(p) for p in self.data_paths.values()),
                    "reference_year": self.reference_year}
        if stage == "label":
            return {"periods": periods}
        if stage == "featurize":
            return {"periods": periods, "inject_truth": self.inject_truth}
        if stage == "select":
            return {"select": self.select, "epsilon": self.epsilon, "threshold": self.correlation_threshold,
                    "n_trees": self.selection_trees, "params": self.models["a"].to_dict()}
        if stage == "train":
            return {k: m.to_dict() for k, m in self.models.items()}
        if stage == "ensemble":
            return {"weights": list(self.weights)}
        return {}


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_config(text: str, base_dir=".", overrides: dict | None = None) -> PipelineConfig:
    """Normalise config text, collecting every problem before raising ConfigError."""
    overrides = overrides or {}
    base_dir = Path(base_dir)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    problems: list[str] = []

    def get(section, key, conv, default):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            problems.append(f"[{section}] {key}: {exc}")
            return default

    def path(section, key):
        if not cp.has_option(section, key):
            return None
        return (base_dir / cp.get(section, key).strip()).resolve()

    known = {"data", "features", "selection", "ensemble", "run"} | {f"period.{n}" for n in PERIOD_NAMES} \
        | {f"model.{n}" for n in MODEL_NAMES}
    for section in cp.sections():
        if section not in known:
            problems.append(f"unknown section [{section}]")

    seed = overrides.get("seed")
    if seed is None:
        seed = get("run", "seed", int, 1)
    out = overrides.get("out") or path("run", "out") or (base_dir / "run").resolve()
    cfg = PipelineConfig(out=Path(out), seed=seed)

    paths = {k: path("data", k) for k in ("logs", "transactions", "members")}
    given = {k: v for k, v in paths.items() if v is not None}
    cfg.synth = get("data", "synth", _bool, not given)
    cfg.synth_users = get("data", "users", int, cfg.synth_users)
    cfg.synth_months = get("data", "months", int, cfg.synth_months)
    cfg.synth_seed = get("data", "seed", int, seed)
    cfg.reference_year = get("data", "reference_year", int, cfg.reference_year)
    if cfg.synth:
        if given:
            problems.append("[data] give either synth = yes or source paths, not both")
        if cfg.synth_users < 1 or cfg.synth_months < 1:
            problems.append("[data] users and months must be positive")
    else:
        for kind, p in paths.items():
            if p is None:
                problems.append(f"[data] missing path for {kind}")
            elif not p.is_file():
                problems.append(f"[data] {kind} file does not exist: {p}")
        cfg.data_paths = given

    periods = default_periods()
    for name in PERIOD_NAMES:
        sec = f"period.{name}"
        d = periods[name]
        start = get(sec, "start", parse_ordinal, d.start)
        end = get(sec, "end", parse_ordinal, d.end)
        anchor = get(sec, "anchor", parse_ordinal, end)
        cutoff = get(sec, "cutoff", parse_ordinal, None)
        try:
            periods[name] = TimePeriod(start, end, anchor, cutoff)
        except ValueError as exc:
            problems.append(f"[{sec}] {exc}")
    cfg.periods = periods
    ordered = [periods[n] for n in PERIOD_NAMES]
    for a, b, na, nb in zip(ordered, ordered[1:], PERIOD_NAMES, PERIOD_NAMES[1:]):
        if not a.end < b.start:
            problems.append(f"periods must be disjoint and ordered: {na} must end before {nb} starts")

    cfg.catalog_path = path("features", "catalog")
    if cfg.catalog_path is not None and not cfg.catalog_path.is_file():
        problems.append(f"[features] catalog file does not exist: {cfg.catalog_path}")
    cfg.inject_truth = get("features", "inject_truth", _bool, False)
    if cfg.inject_truth and not cfg.synth:
        problems.append("[features] inject_truth needs synthetic data")

    cfg.select = get("selection", "enabled", _bool, True)
    cfg.epsilon = get("selection", "epsilon", float, DEFAULT_EPSILON)
    cfg.correlation_threshold = get("selection", "correlation_threshold", float, DEFAULT_CORRELATION)
    cfg.selection_trees = get("selection", "n_trees", int, None)
    if cfg.epsilon < 0:
        problems.append("[selection] epsilon must be >= 0")
    if not 0 < cfg.correlation_threshold <= 1:
        problems.append("[selection] correlation_threshold must be in (0, 1]")
    if cfg.selection_trees is not None and cfg.selection_trees < 1:
        problems.append("[selection] n_trees must be positive")

    for name in MODEL_NAMES:
        sec = f"model.{name}"
        values = {"seed": seed, **DEFAULT_MODELS[name]}
        if cp.has_section(sec):
            values.update(dict(cp.items(sec)))
        try:
            cfg.models[name] = GbdtParams.from_dict(values)
        except (ValueError, TypeError) as exc:
            problems.append(f"[{sec}] {exc}")

    weights = get("ensemble", "weights", lambda s: tuple(float(w) for w in s.split(",")), DEFAULT_WEIGHTS)
    if len(weights) != len(MODEL_NAMES):
        problems.append(f"[ensemble] need {len(MODEL_NAMES)} weights, got {len(weights)}")
    elif any(w < 0 for w in weights):
        problems.append("[ensemble] weights must be non-negative")
    elif abs(sum(weights) - 1.0) > 1e-9:
        problems.append(f"[ensemble] weights must sum to 1 (got {sum(weights):.6g})")
    cfg.weights = weights

    if problems:
        raise ConfigError(problems)
    return cfg


def validate_config(path, overrides: dict | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent, overrides)


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---- stages -----------------------------------------------------------------

DATA_FILES = ["data/members.csv", "data/logs.csv", "data/transactions.csv"]


def _stage_ingest(cfg: PipelineConfig, out: Path) -> list[str]:
    if cfg.synth:
        raw = generate_synthetic(cfg.synth_users, cfg.synth_months, cfg.synth_seed)
    else:
        frames = {k: ingest.load_source(p, k) for k, p in cfg.data_paths.items()}
        raw = ingest.Dataset(frames["members"], frames["logs"], frames["transactions"])
    ingest.save_dataset(ingest.clean(raw, cfg.reference_year), out / "data")
    return DATA_FILES + (["data/truth.csv"] if cfg.synth else [])


def _stage_label(cfg, out) -> list[str]:
    dataset = ingest.load_dataset(out / "data")
    (out / "labels").mkdir(exist_ok=True)
    for name, ls in labeling.relabel_all(dataset, cfg.periods).items():
        ls.to_csv(out / "labels" / f"{name}.csv")
    return [f"labels/{n}.csv" for n in PERIOD_NAMES]


def _catalog(cfg):
    return load_catalog(cfg.catalog_path) if cfg.catalog_path else builtin_catalog()


def _labels(cfg, out, name) -> LabelSet:
    return LabelSet.from_csv(out / "labels" / f"{name}.csv", cfg.periods[name])


def _stage_featurize(cfg, out) -> list[str]:
    dataset = ingest.load_dataset(out / "data")
    catalog = _catalog(cfg)
    save_catalog(catalog, out / "catalog.txt")
    (out / "matrices").mkdir(exist_ok=True)
    for name in PERIOD_NAMES:
        matrix = build_features(dataset, catalog, cfg.periods[name], _labels(cfg, out, name).user_ids)
        if cfg.inject_truth:
            truth = dataset.truth.set_index("user_id")["churn_logit"]
            matrix = matrix.with_column(TRUTH_FEATURE, truth.reindex(matrix.user_ids).to_numpy())
        matrix.save(out / "matrices" / f"{name}.bin")
    return ["catalog.txt"] + [f"matrices/{n}.bin" for n in PERIOD_NAMES]


def _matrix(out, name) -> FeatureMatrix:
    return FeatureMatrix.load(out / "matrices" / f"{name}.bin")


def _stage_select(cfg, out) -> list[str]:
    xt, xc = _matrix(out, "train"), _matrix(out, "cv")
    (out / "selection").mkdir(exist_ok=True)
    if cfg.select:
        params = cfg.models["a"]
        if cfg.selection_trees:
            params = params.replace(n_trees=cfg.selection_trees)
        report = greedy_select(xt.feature_names, (xt, _labels(cfg, out, "train")), (xc, _labels(cfg, out, "cv")),
                               params, cfg.epsilon)
        report.dropped = prune_correlated(xt, report.accepted, cfg.correlation_threshold)
        report.to_csv(out / "selection" / "report.csv")
        selected = report.selected
    else:
        selected = list(xt.feature_names)
        (out / "selection" / "report.csv").write_text("feature_name,cv_logloss_before,cv_logloss_after,accepted\n")
    (out / "selection" / "selected.txt").write_text("".join(f"{n}\n" for n in selected))
    return ["selection/report.csv", "selection/selected.txt"]


def _selected(out) -> list[str]:
    return (out / "selection" / "selected.txt").read_text().split()


def _stage_train(cfg, out) -> list[str]:
    selected = _selected(out)
    if not selected:
        raise DataError("feature selection accepted no features")
    xt = _matrix(out, "train").select(selected)
    yt = _labels(cfg, out, "train")
    (out / "models").mkdir(exist_ok=True)
    for name, params in cfg.models.items():
        train(xt, yt, params).save(out / "models" / f"{name}.json")
    return [f"models/{n}.json" for n in cfg.models]


def _stage_ensemble(cfg, out) -> list[str]:
    xs = _matrix(out, "test")
    (out / "predictions").mkdir(exist_ok=True)
    members = [(GbdtModel.load(out / "models" / f"{n}.json"), w) for n, w in zip(MODEL_NAMES, cfg.weights)]
    spec = EnsembleSpec(members)
    preds = []
    for name, (model, _) in zip(MODEL_NAMES, spec.members):
        p = predict(model, xs)
        write_predictions(out / "predictions" / f"test_{name}.csv", xs.user_ids, p)
        preds.append(p)
    write_predictions(out / "predictions" / "test_ensemble.csv", xs.user_ids, blend(preds, spec.weights))
    return [f"predictions/test_{n}.csv" for n in MODEL_NAMES] + ["predictions/test_ensemble.csv"]


def _read_probs(path, user_ids) -> np.ndarray:
    frame = read_predictions(path).set_index("user_id")
    return frame["is_churn_probability"].reindex(user_ids).to_numpy(dtype=np.float64)


def _stage_evaluate(cfg, out) -> list[str]:
    ytrain = _labels(cfg, out, "train")
    ytest = _labels(cfg, out, "test")
    y = ytest.labels.astype(np.float64)
    prior = np.full(len(y), ytrain.base_rate())
    scores = {"prior": log_loss(y, prior)}
    for name in MODEL_NAMES:
        scores[f"model_{name}"] = log_loss(y, _read_probs(out / "predictions" / f"test_{name}.csv", ytest.user_ids))
    scores["ensemble"] = log_loss(y, _read_probs(out / "predictions" / "test_ensemble.csv", ytest.user_ids))
    importance = feature_importance(GbdtModel.load(out / "models" / "a.json"))
    report = EvalReport("test", len(y), ytest.base_rate(), scores["ensemble"], scores, importance)
    (out / "report.txt").write_text(report.to_text())
    (out / "report.csv").write_text(report.to_csv())
    return ["report.txt", "report.csv"]


STAGES = [
    ("ingest", _stage_ingest, []),
    ("label", _stage_label, DATA_FILES),
    ("featurize", _stage_featurize, DATA_FILES + [f"labels/{n}.csv" for n in PERIOD_NAMES]),
    ("select", _stage_select, [f"labels/{n}.csv" for n in ("train", "cv")] + ["matrices/train.bin", "matrices/cv.bin"]),
    ("train", _stage_train, ["selection/selected.txt", "labels/train.csv", "matrices/train.bin"]),
    ("ensemble", _stage_ensemble, ["models/a.json", "models/b.json", "matrices/test.bin"]),
    ("evaluate", _stage_evaluate, ["labels/train.csv", "labels/test.csv", "models/a.json"]
     + [f"predictions/test_{n}.csv" for n in ("a", "b", "ensemble")]),
]
STAGE_NAMES = [s[0] for s in STAGES]


def _read_manifest(path: Path) -> dict[str, dict]:
    if not path.is_file():
        return {}
    entries = {}
    for line in path.read_text().splitlines():
        if line.strip():
            entry = json.loads(line)
            entries[entry["stage"]] = entry
    return entries


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> list[dict]:
    """Execute every stage in order; returns the manifest entries of this run."""
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"
    previous = _read_manifest(manifest_path)
    entries = []
    for stage, fn, inputs in STAGES:
        extra = []
        if stage == "featurize" and cfg.catalog_path:
            extra = [str(cfg.catalog_path)]
        if stage == "ingest":
            extra = [str(p) for _, p in sorted(cfg.data_paths.items())]
        try:
            input_hashes = {name: file_hash(out / name) for name in inputs}
            input_hashes.update({name: file_hash(name) for name in extra})
        except OSError as exc:
            raise StageError(stage, exc) from exc
        key = hashlib.sha256(json.dumps([stage, cfg.section(stage), input_hashes], sort_keys=True).encode()).hexdigest()
        prev = previous.get(stage)
        if not force and prev and prev.get("key") == key and all(
            (out / name).is_file() and file_hash(out / name) == h for name, h in prev["outputs"].items()
        ):
            entry = {**prev, "status": "cached", "seconds": 0.0}
            log.info("stage %-10s cached", stage)
        else:
            t0 = time.perf_counter()
            try:
                outputs = fn(cfg, out)
            except ChurnboostError as exc:
                exc.stage = stage
                raise
            except Exception as exc:
                raise StageError(stage, exc) from exc
            seconds = time.perf_counter() - t0
            entry = {"stage": stage, "key": key, "inputs": input_hashes,
                     "outputs": {name: file_hash(out / name) for name in outputs},
                     "seconds": round(seconds, 3), "status": "ran"}
            log.info("stage %-10s ran in %.2fs", stage, seconds)
        entries.append(entry)
        manifest_path.write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in entries)
                                 + "".join(json.dumps(previous[s], sort_keys=True) + "\n"
                                           for s in STAGE_NAMES[len(entries):] if s in previous))
    return entries
