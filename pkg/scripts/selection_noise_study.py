"""How often greedy selection accepts a pure-noise column on the synthetic benchmark.

For each seed, noise and a copy of the generator's churn log-odds are offered
in two orders: noise first (scored against the class prior) and noise after
the ground-truth copy. Run for a few boosting-round settings.

    python scripts/selection_noise_study.py [--seeds 5] [--trees 40 150]
"""
import argparse
from pathlib import Path

import numpy as np

from churnboost import ingest
from churnboost.features import FeatureMatrix
from churnboost.labeling import relabel_all
from churnboost.pipeline import validate_config
from churnboost.selection import greedy_select
from churnboost.synth import generate_synthetic

ROOT = Path(__file__).resolve().parents[1]


def offered(seed, periods):
    d = ingest.clean(generate_synthetic(5000, 6, seed))
    labels = relabel_all(d, periods)
    truth = d.truth.set_index("user_id")["churn_logit"]
    rng = np.random.default_rng(seed)
    sets = {}
    for name in ("train", "cv"):
        ids = labels[name].user_ids
        cols = np.column_stack([rng.normal(size=len(ids)), truth.reindex(ids).to_numpy()])
        sets[name] = (FeatureMatrix(ids, ["noise", "gt_copy"], cols), labels[name])
    return sets


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--trees", type=int, nargs="+", default=[40, 150])
    args = parser.parse_args()
    cfg = validate_config(ROOT / "configs" / "synth.ini", {"out": Path("unused")})
    data = {seed: offered(seed, cfg.periods) for seed in range(1, args.seeds + 1)}
    print(f"{'trees':>5}  {'order':<16}{'gt kept':>8}{'noise out':>10}  noise delta per seed")
    for trees in args.trees:
        params = cfg.models["a"].replace(n_trees=trees)
        for order in (["noise", "gt_copy"], ["gt_copy", "noise"]):
            kept = rejected = 0
            deltas = []
            for sets in data.values():
                report = greedy_select(order, sets["train"], sets["cv"], params)
                trial = next(t for t in report.trials if t.feature_name == "noise")
                deltas.append(trial.cv_logloss_after - trial.cv_logloss_before)
                kept += "gt_copy" in report.accepted
                rejected += "noise" not in report.accepted
            print(f"{trees:>5}  {'+'.join(order):<16}{kept:>8}{rejected:>10}  " + " ".join(f"{x:+.5f}" for x in deltas))


if __name__ == "__main__":
    main()
