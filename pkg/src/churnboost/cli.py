"""Command-line entry point: per-stage subcommands plus ``run`` for the whole pipeline.

Exit codes: 0 success, 2 config error, 3 data error, 4 stage failure.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from . import ingest
from .errors import ConfigError, DataError, LeakageError
from .evaluate import EnsembleSpec, EvalReport, ensemble_predict, log_loss, read_predictions, write_predictions
from .features import FeatureMatrix, build_features, builtin_catalog, load_catalog
from .gbdt import GbdtModel, GbdtParams, feature_importance, predict, train
from .labeling import LabelSet, label_churn
from .pipeline import StageError, parse_config, run_pipeline, validate_config
from .selection import DEFAULT_EPSILON, greedy_select
from .synth import generate_synthetic
from .temporal import TimePeriod, parse_ordinal

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_STAGE = 0, 2, 3, 4

log = logging.getLogger("churnboost")


def _read_params(path, seed=None) -> GbdtParams:
    if path is None:
        values = {}
    else:
        text = Path(path).read_text(encoding="utf-8")
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text if text.lstrip().startswith("[") else "[params]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        values = dict(cp.items(cp.sections()[0])) if cp.sections() else {}
    if seed is not None:
        values.setdefault("seed", seed)
    try:
        return GbdtParams.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"booster params: {exc}") from None


def _config(args):
    overrides = {"seed": args.seed, "out": Path(args.out).resolve() if args.out else None}
    if args.config:
        return validate_config(args.config, overrides)
    return parse_config("", ".", overrides)


def _pair(text):
    try:
        matrix, labels = text.split(",")
    except ValueError:
        raise ConfigError(f"expected <matrix>,<labels>, got {text!r}") from None
    m = FeatureMatrix.load(matrix)
    return m, LabelSet.from_csv(labels, None)


def cmd_synth(args):
    dataset = generate_synthetic(args.users, args.months, args.seed if args.seed is not None else 1)
    ingest.save_dataset(dataset, args.out)


def cmd_ingest(args):
    frames = {k: ingest.load_source(getattr(args, k), k) for k in ("logs", "transactions", "members")}
    dataset = ingest.clean(ingest.Dataset(frames["members"], frames["logs"], frames["transactions"]))
    ingest.save_dataset(dataset, args.out)


def cmd_label(args):
    end = parse_ordinal(args.period_end)
    period = TimePeriod(parse_ordinal(args.period_start), end, end)
    tx = ingest.load_source(args.transactions, "transactions")
    label_churn(tx, period).to_csv(args.label_out)


def cmd_featurize(args):
    cfg = _config(args)
    if args.period not in cfg.periods:
        raise ConfigError(f"unknown period {args.period!r}")
    period = cfg.periods[args.period]
    dataset = ingest.load_dataset(args.data)
    catalog = load_catalog(args.catalog) if args.catalog else builtin_catalog()
    labels = LabelSet.from_csv(args.labels, period)
    build_features(dataset, catalog, period, labels.user_ids).save(args.matrix_out)


def cmd_select(args):
    train_set, cv_set = _pair(args.train), _pair(args.cv)
    candidates = [s.name for s in load_catalog(args.catalog)] if args.catalog else train_set[0].feature_names
    report = greedy_select(candidates, train_set, cv_set, _read_params(args.params, args.seed), args.epsilon)
    report.to_csv(args.report_out)
    print(f"baseline {report.baseline:.6f}  final {report.final_loss:.6f}  accepted {len(report.accepted)}")


def cmd_train(args):
    matrix = FeatureMatrix.load(args.matrix)
    labels = LabelSet.from_csv(args.labels, None)
    train(matrix, labels, _read_params(args.params, args.seed)).save(args.model_out)


def cmd_predict(args):
    matrix = FeatureMatrix.load(args.matrix)
    write_predictions(args.preds_out, matrix.user_ids, predict(GbdtModel.load(args.model), matrix))


def cmd_ensemble(args):
    members = []
    for item in args.models.split(","):
        path, sep, weight = item.rpartition(":")
        if not sep:
            raise ConfigError(f"expected <model>:<weight>, got {item!r}")
        members.append((GbdtModel.load(path), float(weight)))
    try:
        spec = EnsembleSpec(members)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    matrix = FeatureMatrix.load(args.matrix)
    write_predictions(args.preds_out, matrix.user_ids, ensemble_predict(spec, matrix))


def cmd_evaluate(args):
    labels = LabelSet.from_csv(args.labels, None)
    preds = read_predictions(args.preds).set_index("user_id")["is_churn_probability"]
    missing = ~np.isin(labels.user_ids, preds.index.to_numpy())
    if missing.any():
        raise DataError(f"{int(missing.sum())} labeled users have no prediction")
    p = preds.reindex(labels.user_ids).to_numpy(dtype=np.float64)
    loss = log_loss(labels.labels, p)
    scores = {"predictions": loss}
    report = EvalReport(args.period_name, len(labels), labels.base_rate(), loss, scores,
                        feature_importance(GbdtModel.load(args.model)) if args.model else {})
    sys.stdout.write(report.to_text())
    if args.report_out:
        Path(args.report_out).write_text(report.to_csv())


def cmd_run(args):
    cfg = _config(args)
    entries = run_pipeline(cfg, force=args.force)
    for e in entries:
        print(f"{e['stage']:<10} {e['status']:<7} {e['seconds']:8.2f}s")
    print((cfg.out / "report.txt").read_text(), end="")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file (INI)")
    common.add_argument("--seed", type=int, default=None, help="global seed")
    common.add_argument("--force", action="store_true", help="rerun cached stages")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="churnboost", parents=[common], description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic dataset directory")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--months", type=int, required=True)

    p = add("ingest", cmd_ingest, "load, validate and clean the three sources")
    for k in ("logs", "transactions", "members"):
        p.add_argument(f"--{k}", required=True)

    p = add("label", cmd_label, "churn labels for one period")
    p.add_argument("--transactions", required=True)
    p.add_argument("--period-start", type=int, required=True)
    p.add_argument("--period-end", type=int, required=True)

    p = add("featurize", cmd_featurize, "feature matrix for one period")
    p.add_argument("--data", required=True)
    p.add_argument("--catalog")
    p.add_argument("--period", required=True)
    p.add_argument("--labels", required=True)

    p = add("select", cmd_select, "greedy forward feature selection")
    p.add_argument("--train", required=True, help="<matrix>,<labels>")
    p.add_argument("--cv", required=True, help="<matrix>,<labels>")
    p.add_argument("--catalog")
    p.add_argument("--params")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)

    p = add("train", cmd_train, "train one booster")
    p.add_argument("--matrix", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--params")

    p = add("predict", cmd_predict, "churn probabilities from one model")
    p.add_argument("--model", required=True)
    p.add_argument("--matrix", required=True)

    p = add("ensemble", cmd_ensemble, "weighted-average predictions of several models")
    p.add_argument("--models", required=True, help="m1.bin:0.88,m2.bin:0.12")
    p.add_argument("--matrix", required=True)

    p = add("evaluate", cmd_evaluate, "log loss of a predictions file")
    p.add_argument("--labels", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--model", help="also report this model's feature importance")
    p.add_argument("--period-name", default="test")

    add("run", cmd_run, "run the whole pipeline from --config")
    return parser


DEFAULT_OUT = {"label": "labels.csv", "featurize": "matrix.bin", "select": "report.csv", "train": "model.bin",
               "predict": "preds.csv", "ensemble": "preds.csv"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("synth", "ingest") and not args.out:
        parser.error(f"{args.command} needs --out <dir>")
    out = args.out or DEFAULT_OUT.get(args.command)
    for attr in ("label_out", "matrix_out", "report_out", "model_out", "preds_out"):
        setattr(args, attr, out)
    if args.command == "evaluate":
        args.report_out = args.out
    try:
        args.fn(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, LeakageError) as exc:
        stage = getattr(exc, "stage", args.command)
        print(f"data error in {stage}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageError as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
