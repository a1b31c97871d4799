import numpy as np
import pytest

from app.errors import ConfigurationError, DataError
from app.models.config_models import EncoderDims, RegressorHyper, RegressorKind, Track1Hyper, TrainHyper
from app.models.essay_models import Target
from app.services.metrics import rmse
from app.services.nncore import grad_check, init_params
from app.services.textenc import EncoderModel, build_vocab, stack_batch, tokenize
from app.services.track1 import (
    evaluate_pipeline,
    finetune_encoder,
    load_pipeline,
    read_submission,
    regression_loss,
    regression_specs,
    save_pipeline,
    train_pipeline,
    train_pipelines,
    write_submission,
)
from app.utils.corpus import synthesize_corpus

OUTSIDE_RECORD = synthesize_corpus(3, seed=99, task="track1").records[0]


def test_regression_head_gradients(score_corpus, tiny_dims):
    texts = score_corpus.texts()[:2]
    vocab = build_vocab(texts)
    encoder = EncoderModel(vocab, init_params(regression_specs(tiny_dims, vocab.size), seed=2), tiny_dims)
    ids, mask = stack_batch([tokenize(text, vocab, tiny_dims.max_len) for text in texts])
    targets = np.array([0.7, -1.2])
    worst = grad_check(lambda store: regression_loss(encoder, ids, mask, targets), encoder.params, eps=1e-4)
    assert worst < 1e-4


def test_finetuning_overfits_a_few_records(small_dims, make_train_hyper):
    train = synthesize_corpus(8, seed=1, task="track1")
    finetuned = finetune_encoder(train, Target.EMPATHY, make_train_hyper(small_dims, epochs=300, lr=5e-3))
    predicted = finetuned.predict_scores(train.texts())
    assert len(finetuned.train_log) == 300
    assert rmse([r.empathy for r in train.records], predicted) < 0.05
    assert finetuned.train_log[-1] < finetuned.train_log[0]


def test_finetuning_is_deterministic(score_corpus, tiny_train):
    first = finetune_encoder(score_corpus, "distress", tiny_train)
    second = finetune_encoder(score_corpus, "distress", tiny_train)
    for name in first.encoder.params:
        assert np.array_equal(first.encoder.params.value(name), second.encoder.params.value(name))
    assert first.train_log == second.train_log


def test_missing_score_is_a_data_error(score_corpus, tiny_track1):
    records = list(score_corpus.records)
    records[3] = records[3].model_copy(update={"distress": None})
    broken = score_corpus.model_copy(update={"records": records})
    with pytest.raises(DataError):
        train_pipeline(broken, "gbt", tiny_track1)


def test_degenerate_regressor_fails_before_training(score_corpus, tiny_track1):
    hyper = tiny_track1.model_copy(deep=True)
    hyper.regressor.adaboost.rounds = 0
    with pytest.raises(ConfigurationError):
        train_pipeline(score_corpus, RegressorKind.ADABOOST, hyper)


def test_joint_mlp_requires_mlp(score_corpus, tiny_track1):
    hyper = tiny_track1.model_copy(update={"joint_mlp": True})
    with pytest.raises(ConfigurationError):
        train_pipeline(score_corpus, "svr", hyper)


@pytest.fixture
def pipeline(score_corpus, tiny_track1):
    return train_pipeline(score_corpus, "mlp", tiny_track1)


class TestFeatures:
    def test_layout(self, pipeline, tiny_dims):
        layout = pipeline.layout
        assert (layout.d_emp, layout.d_dis) == (tiny_dims.model_dim, tiny_dims.model_dim)
        assert layout.n_feat == pipeline.scaler.dim
        vector = pipeline.build_features(OUTSIDE_RECORD)
        assert vector.values.shape == (layout.total,)
        emp, dis, feat = vector.segments()
        assert (len(emp), len(dis), len(feat)) == (layout.d_emp, layout.d_dis, layout.n_feat)

    def test_empty_essay_changes_only_pooled_segments(self, pipeline):
        record = OUTSIDE_RECORD
        blank = record.model_copy(update={"essay": ""})
        full = pipeline.build_features(record).segments()
        empty = pipeline.build_features(blank).segments()
        assert np.array_equal(full[2], empty[2])
        assert not np.array_equal(full[0], empty[0])

    def test_matrix_matches_single_records(self, pipeline, score_corpus):
        matrix = pipeline.feature_matrix(score_corpus.records[:5])
        single = np.stack([pipeline.build_features(r).values for r in score_corpus.records[:5]])
        assert np.allclose(matrix, single, atol=1e-10)

    def test_every_kind_sees_the_same_features(self, score_corpus, tiny_track1):
        matrices = [train_pipeline(score_corpus, kind, tiny_track1).feature_matrix(score_corpus.records)
                    for kind in RegressorKind]
        shared = train_pipelines(score_corpus, list(RegressorKind), tiny_track1)
        assert list(shared) == list(RegressorKind)
        matrices += [p.feature_matrix(score_corpus.records) for p in shared.values()]
        for matrix in matrices[1:]:
            assert np.array_equal(matrix, matrices[0])

    def test_empathy_only_features(self, score_corpus, tiny_track1):
        hyper = tiny_track1.model_copy(update={"feature_set": "empathy_only"})
        pipeline = train_pipeline(score_corpus, "gbt", hyper)
        assert pipeline.layout.d_dis == 0
        assert pipeline.feature_matrix(score_corpus.records).shape[1] == pipeline.layout.total


class TestPrediction:
    def test_predictions_stay_in_range(self, score_corpus, tiny_track1):
        hyper = tiny_track1.model_copy(update={"score_min": 3.0, "score_max": 4.0})
        pipeline = train_pipeline(score_corpus, "svr", hyper)
        predicted = pipeline.predict_many(synthesize_corpus(15, seed=7, task="track1").records)
        assert predicted.shape == (15, 2)
        assert np.all((predicted >= 3.0) & (predicted <= 4.0))

    def test_single_and_batch_agree(self, pipeline, score_corpus):
        record = score_corpus.records[0]
        empathy, distress = pipeline.predict(record)
        batch = pipeline.predict_many([record])[0]
        assert (empathy, distress) == pytest.approx(tuple(batch), abs=1e-9)

    def test_shared_regressor_hyperparameters(self, pipeline):
        empathy = pipeline.regressors["empathy"].to_dict()
        distress = pipeline.regressors["distress"].to_dict()
        assert empathy["kind"] == distress["kind"] == "mlp"
        assert empathy["hyper"] == distress["hyper"]

    def test_joint_mlp(self, score_corpus, tiny_track1):
        pipeline = train_pipeline(score_corpus, "mlp", tiny_track1.model_copy(update={"joint_mlp": True}))
        assert list(pipeline.regressors) == ["joint"]
        assert pipeline.predict_many(score_corpus.records).shape == (len(score_corpus), 2)

    def test_evaluate(self, pipeline, score_corpus):
        report = evaluate_pipeline(pipeline, score_corpus)
        assert report.n == len(score_corpus)
        assert report.r_avg == pytest.approx((report.r_empathy + report.r_distress) / 2)


def test_bundle_round_trip(pipeline, score_corpus, tmp_path):
    save_pipeline(pipeline, tmp_path / "model")
    restored = load_pipeline(tmp_path / "model")
    assert restored.kind == pipeline.kind
    assert restored.layout == pipeline.layout
    assert np.array_equal(restored.predict_many(score_corpus.records), pipeline.predict_many(score_corpus.records))


def test_submission_round_trip(tmp_path):
    predictions = np.array([[4.5, 3.25], [1.0, 7.0]])
    write_submission(predictions, tmp_path / "pred.tsv")
    assert (tmp_path / "pred.tsv").read_text(encoding="utf-8") == "4.500000\t3.250000\n1.000000\t7.000000\n"
    assert np.array_equal(read_submission(tmp_path / "pred.tsv"), predictions)


def test_malformed_submission(tmp_path):
    (tmp_path / "pred.tsv").write_text("4.5\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_submission(tmp_path / "pred.tsv")


DESK_SEEDS = range(21, 31)


def desk_scale_hyper(seed: int, feature_set: str = "dual") -> Track1Hyper:
    dims = EncoderDims(layers=1, model_dim=32, heads=4, ff_dim=64, max_len=64)
    encoder = TrainHyper(dims=dims, lr=1e-3, epochs=60, batch_size=8, seed=seed)
    return Track1Hyper(encoder=encoder, regressor=RegressorHyper(), feature_set=feature_set)


@pytest.fixture(scope="module")
def desk_scale_reports():
    """Per seed: held-out reports of every kind on dual features, and of the MLP on empathy-only features"""
    reports = {}
    for seed in DESK_SEEDS:
        data = synthesize_corpus(100, seed=seed, task="track1")
        train, heldout = data.subset(list(range(70))), data.subset(list(range(70, 100)))
        dual = train_pipelines(train, list(RegressorKind), desk_scale_hyper(seed))
        single = train_pipeline(train, "mlp", desk_scale_hyper(seed, "empathy_only"))
        reports[seed] = ({kind: evaluate_pipeline(p, heldout) for kind, p in dual.items()},
                         evaluate_pipeline(single, heldout))
    return reports


@pytest.mark.slow
def test_desk_scale_regressors_generalize(desk_scale_reports):
    for seed, (by_kind, _) in desk_scale_reports.items():
        for kind, report in by_kind.items():
            assert report.r_avg >= 0.7, (seed, kind, report.r_avg)
        assert by_kind[RegressorKind.MLP].r_avg >= 0.9, (seed, by_kind[RegressorKind.MLP].r_avg)


@pytest.mark.slow
def test_desk_scale_distress_features_help(desk_scale_reports):
    wins = sum(by_kind[RegressorKind.MLP].r_avg >= single.r_avg for by_kind, single in desk_scale_reports.values())
    assert wins >= 8
