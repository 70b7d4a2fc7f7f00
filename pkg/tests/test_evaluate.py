import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from churnboost.errors import DataError
from churnboost.evaluate import (
    EnsembleSpec, EvalReport, binary_entropy, blend, ensemble_predict, log_loss, read_predictions, write_predictions,
)
from churnboost.features import FeatureMatrix
from churnboost.gbdt import GbdtParams, predict, train

from oracles import direct_log_loss

probs = st.floats(0.0, 1.0)


def test_log_loss_examples():
    assert log_loss([1], [1.0]) == pytest.approx(-math.log(1 - 1e-15), abs=0)
    assert log_loss([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), rel=1e-15)
    assert log_loss([1], [0.9]) == pytest.approx(-math.log(0.9), rel=1e-15)
    assert math.isfinite(log_loss([1, 0], [0.0, 1.0]))


def test_log_loss_matches_direct_formula():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        y = rng.integers(0, 2, n)
        p = rng.random(n)
        assert math.isclose(log_loss(y, p), direct_log_loss(y.tolist(), p.tolist()), rel_tol=1e-12)


@pytest.mark.parametrize("y,p", [([], []), ([1, 0], [0.5]), ([1], [1.2]), ([1], [np.nan])])
def test_log_loss_errors(y, p):
    with pytest.raises(ValueError):
        log_loss(y, p)


@given(st.floats(1e-6, 1 - 1e-6), st.integers(1, 400))
def test_prior_equals_binary_entropy(p_bar, n):
    k = max(1, min(n - 1, round(p_bar * n))) if n > 1 else 1
    y = np.zeros(n)
    y[:k] = 1
    p = k / n
    if p in (0.0, 1.0):
        return
    assert abs(log_loss(y, np.full(n, p)) - binary_entropy(p)) <= 1e-12


def test_ensemble_weight_example():
    assert blend([[1.0], [0.0]], [0.88, 0.12]).tolist() == [0.88]


@given(st.lists(st.tuples(probs, probs), min_size=1, max_size=30), st.floats(0, 1))
def test_convexity(rows, w):
    p1, p2 = map(np.array, zip(*rows))
    out = blend([p1, p2], [w, 1 - w])
    assert np.all(out >= np.minimum(p1, p2)) and np.all(out <= np.maximum(p1, p2))


@given(st.lists(probs, min_size=1, max_size=30), st.floats(0, 1))
def test_identical_members_exact(p, w):
    p = np.array(p)
    assert np.array_equal(blend([p, p], [w, 1 - w]), p)


def test_ensemble_spec_validation():
    with pytest.raises(ValueError, match="weights must sum to 1"):
        EnsembleSpec([(None, 0.5), (None, 0.6)])
    with pytest.raises(ValueError):
        EnsembleSpec([])
    EnsembleSpec([(None, 0.3), (None, 0.7 + 1e-10)])


def test_ensemble_predict_single_member_identity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 2))
    m = FeatureMatrix([f"r{i}" for i in range(200)], ["a", "b"], x)
    y = (x[:, 0] + rng.normal(size=200) > 0).astype(float)
    model = train(m, y, GbdtParams(n_trees=5))
    assert ensemble_predict(EnsembleSpec([(model, 1.0)]), m).tobytes() == predict(model, m).tobytes()


def test_predictions_round_trip(tmp_path):
    p = np.random.default_rng(2).random(100)
    ids = [f"u{i}" for i in range(100)]
    write_predictions(tmp_path / "p.csv", ids, p)
    back = read_predictions(tmp_path / "p.csv")
    assert back.columns.tolist() == ["user_id", "is_churn_probability"]
    assert back["is_churn_probability"].to_numpy().tobytes() == p.tobytes()
    with pytest.raises(DataError):
        read_predictions(tmp_path / "missing.csv")


def test_report():
    r = EvalReport("test", 10, 0.1, 0.2, {"prior": 0.3, "ensemble": 0.2}, {"a": 0.75, "b": 0.25})
    text = r.to_text()
    assert "0.20000" in text and "75.00%" in text
    assert r.to_csv().splitlines()[0] == "section,name,value"
    with pytest.raises(ValueError):
        EvalReport("test", 1, 0.0, -0.1)
