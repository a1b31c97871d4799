import numpy as np
import pytest

from app.errors import StateError
from app.models.essay_models import Dataset, EssayRecord
from app.utils.corpus import synthesize_corpus
from app.utils.scaling import FeatureScaler, fit_scaler, transform


def record(record_id, **demographics):
    personality = demographics.pop("personality", {})
    return EssayRecord(record_id=record_id, essay="text", demographics=demographics, personality=personality)


def dataset(*records):
    return Dataset(records=list(records), provenance="mem")


def test_z_score_example():
    scaler = fit_scaler(dataset(record("a", age=20.0), record("b", age=40.0)), ["age"], [])
    assert transform(scaler, record("c", age=40.0))[0] == pytest.approx(1.0)
    assert transform(scaler, record("d", age=30.0))[0] == pytest.approx(0.0)


def test_training_columns_are_standardized():
    train = synthesize_corpus(60, seed=4, task="track1")
    scaler = fit_scaler(train)
    features = scaler.transform_many(train.records)
    numeric = features[:, : len(scaler.numeric_columns)]
    assert np.allclose(numeric.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(numeric.std(axis=0), 1.0, atol=1e-9)
    assert features.shape == (60, scaler.dim)


def test_layout_numerics_then_one_hot_blocks():
    train = dataset(record("a", age=30.0, gender="f", personality={"openness": 3.0}),
                    record("b", age=50.0, gender="m", personality={"openness": 5.0}))
    scaler = fit_scaler(train, ["age"], ["gender"])
    assert scaler.column_names() == ["age", "personality.openness", "gender=f", "gender=m", "gender=<unseen>"]
    assert transform(scaler, record("c", age=50.0, gender="m", personality={"openness": 3.0})).tolist() == \
        pytest.approx([1.0, -1.0, 0.0, 1.0, 0.0])


def test_personality_columns_follow_configured_order():
    first = record("a", age=30.0, personality={"stability": 2.0, "grit": 4.0, "openness": 3.0})
    second = record("b", age=50.0, personality={"agreeableness": 5.0, "openness": 6.0})
    expected = ["age", "personality.openness", "personality.agreeableness", "personality.stability",
                "personality.grit"]
    assert fit_scaler(dataset(first, second), ["age"], []).column_names() == expected
    assert fit_scaler(dataset(second, first), ["age"], []).column_names() == expected
    custom = fit_scaler(dataset(first, second), ["age"], [], personality_traits=["stability", "openness"])
    assert custom.column_names() == ["age", "personality.stability", "personality.openness",
                                     "personality.agreeableness", "personality.grit"]


def test_unseen_and_missing_values():
    train = dataset(record("a", age=30.0, gender="f"), record("b", age=50.0, gender="m"))
    scaler = fit_scaler(train, ["age"], ["gender"])
    assert transform(scaler, record("c", gender="x")).tolist() == [0.0, 0.0, 0.0, 1.0]
    assert transform(scaler, record("d")).tolist() == [0.0, 0.0, 0.0, 0.0]


def test_zero_variance_column_maps_to_zero():
    scaler = fit_scaler(dataset(record("a", age=30.0), record("b", age=30.0)), ["age"], [])
    assert transform(scaler, record("c", age=99.0))[0] == 0.0


def test_unfitted_scaler():
    with pytest.raises(StateError):
        FeatureScaler().transform(record("a", age=1.0))


def test_dict_round_trip():
    train = synthesize_corpus(30, seed=8, task="track1")
    scaler = fit_scaler(train)
    restored = FeatureScaler.from_dict(scaler.to_dict())
    assert restored.column_names() == scaler.column_names()
    assert np.array_equal(restored.transform_many(train.records), scaler.transform_many(train.records))
