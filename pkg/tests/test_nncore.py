import math

import numpy as np
import pytest

from app.errors import ArgumentError, ConfigurationError, TrainingError
from app.services.nncore import (
    AdamState,
    LayerKind,
    LayerSpec,
    ParameterStore,
    adam_step,
    clip_grad_norm,
    grad_check,
    init_params,
    log_softmax,
    nll_loss,
    softmax,
)
from app.utils.serialization import load_store, save_store


def scalar_store(value: float = 0.0) -> ParameterStore:
    store = ParameterStore()
    store.add("w", (1,), np.array([value]))
    return store


def linear_spec(name: str = "lin", in_dim: int = 4, out_dim: int = 4) -> LayerSpec:
    return LayerSpec(name=name, kind=LayerKind.LINEAR, dims={"in_dim": in_dim, "out_dim": out_dim})


class TestInitParams:
    def test_same_seed_is_bit_identical(self):
        specs = [linear_spec(in_dim=2, out_dim=2)]
        a = init_params(specs, seed=7)
        b = init_params(specs, seed=7)
        for name in a:
            assert np.array_equal(a.value(name), b.value(name))

    def test_different_seed_differs(self):
        specs = [linear_spec()]
        assert not np.array_equal(init_params(specs, 1).value("lin.weight"), init_params(specs, 2).value("lin.weight"))

    def test_glorot_limit_and_zero_bias(self):
        store = init_params([linear_spec()], seed=0)
        assert np.all(np.abs(store.value("lin.weight")) < math.sqrt(6 / 8))
        assert np.all(store.value("lin.bias") == 0.0)

    def test_layer_norm_starts_as_identity_affine(self):
        spec = LayerSpec(name="ln", kind=LayerKind.LAYER_NORM, dims={"dim": 5})
        store = init_params([spec], seed=0)
        assert np.all(store.value("ln.gain") == 1.0)
        assert np.all(store.value("ln.shift") == 0.0)

    def test_heads_must_divide_model_dim(self):
        spec = LayerSpec(name="attn", kind=LayerKind.MULTI_HEAD_ATTENTION, dims={"model_dim": 10, "heads": 3})
        with pytest.raises(ConfigurationError, match="model_dim not divisible by heads"):
            init_params([spec], seed=0)

    def test_missing_dim_is_rejected(self):
        spec = LayerSpec(name="lin", kind=LayerKind.LINEAR, dims={"in_dim": 3})
        with pytest.raises(ConfigurationError, match="out_dim"):
            init_params([spec], seed=0)

    def test_empty_spec_list(self):
        with pytest.raises(ConfigurationError):
            init_params([], seed=0)

    def test_duplicate_parameter_names(self):
        with pytest.raises(ConfigurationError, match="duplicate"):
            init_params([linear_spec(), linear_spec()], seed=0)


class TestAdam:
    def test_zero_gradient_leaves_values(self):
        store = init_params([linear_spec()], seed=0)
        before = store.snapshot()
        store, state = adam_step(store, AdamState(lr=0.1))
        assert state.t == 1
        for name, values in before.items():
            assert np.array_equal(store.value(name).reshape(-1), values)

    def test_first_step_moves_by_lr(self):
        store = scalar_store()
        store.accumulate("w", np.array([1.0]))
        store, state = adam_step(store, AdamState(lr=0.1))
        assert store.value("w")[0] == pytest.approx(-0.1, abs=1e-6)

        store.accumulate("w", np.array([1.0]))
        first = store.value("w")[0]
        adam_step(store, state)
        assert store.value("w")[0] < first

    def test_gradients_are_zeroed(self):
        store = scalar_store()
        store.accumulate("w", np.array([0.5]))
        adam_step(store, AdamState(lr=0.01))
        assert store.grad("w")[0] == 0.0
        assert store.step_count == 1

    def test_non_finite_gradient_names_parameter(self):
        store = scalar_store()
        store.accumulate("w", np.array([np.nan]))
        with pytest.raises(TrainingError) as info:
            adam_step(store, AdamState(lr=0.01))
        assert info.value.parameter == "w"

    def test_frozen_prefix_is_not_updated(self):
        store = init_params([linear_spec("enc"), linear_spec("head")], seed=0)
        before = store.snapshot()
        for name in store:
            store.accumulate(name, np.ones_like(store.value(name)))
        adam_step(store, AdamState(lr=0.01, frozen=("enc",)))
        assert np.array_equal(store.value("enc.weight").reshape(-1), before["enc.weight"])
        assert not np.array_equal(store.value("head.weight").reshape(-1), before["head.weight"])

    def test_bad_hyperparameters(self):
        with pytest.raises(ConfigurationError):
            AdamState(lr=0.0)
        with pytest.raises(ConfigurationError):
            AdamState(beta1=1.0)

    def test_clip_grad_norm(self):
        store = ParameterStore()
        store.add("w", (2,), np.zeros(2))
        store.accumulate("w", np.array([3.0, 4.0]))
        assert clip_grad_norm(store, 1.0) == pytest.approx(5.0)
        assert np.linalg.norm(store.grad("w")) == pytest.approx(1.0)


class TestSoftmax:
    def test_examples(self):
        assert np.allclose(softmax([0.0, 0.0]), [0.5, 0.5])
        assert np.allclose(softmax([1000.0, 0.0]), [1.0, 0.0])
        assert np.allclose(softmax(np.log([1.0, 2.0, 3.0])), [1 / 6, 2 / 6, 3 / 6], atol=1e-12)

    def test_shift_invariance_and_normalization(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(5, 9)) * 20
        probs = softmax(logits)
        assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
        assert np.allclose(softmax(logits + 123.0), probs, atol=1e-12)
        assert np.allclose(np.exp(log_softmax(logits)), probs, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ArgumentError):
            softmax([])


class TestNllLoss:
    def test_examples(self):
        assert nll_loss([math.log(1 / 7), 0.0]) == pytest.approx(math.log(7))
        assert nll_loss([0.0, 0.0]) == 0.0
        assert nll_loss([[math.log(0.5)], [math.log(0.25)]]) == pytest.approx(math.log(8))

    def test_additive(self):
        a, b = [math.log(0.3), math.log(0.9)], [math.log(0.6)]
        assert nll_loss(a + b) == pytest.approx(nll_loss(a) + nll_loss(b))

    def test_positive_log_probability(self):
        with pytest.raises(ArgumentError):
            nll_loss([0.1])


class TestGradCheck:
    @staticmethod
    def square_loss(factor: float):
        def loss_fn(store):
            w = store.value("w")
            store.accumulate("w", factor * w)
            return float(w[0] ** 2)
        return loss_fn

    def test_correct_gradient(self):
        assert grad_check(self.square_loss(2.0), scalar_store(3.0), eps=1e-4) < 1e-6

    def test_corrupted_gradient_is_detected(self):
        assert grad_check(self.square_loss(4.0), scalar_store(3.0), eps=1e-4) == pytest.approx(0.5, abs=1e-6)

    def test_eps_range(self):
        with pytest.raises(ArgumentError):
            grad_check(self.square_loss(2.0), scalar_store(3.0), eps=0.1)


def test_store_round_trip(tmp_path):
    store = init_params([linear_spec(), LayerSpec(name="ln", kind=LayerKind.LAYER_NORM, dims={"dim": 4})], seed=9)
    store.step_count = 17
    save_store(store, tmp_path / "params.npz")
    loaded = load_store(tmp_path / "params.npz")
    assert loaded.names() == store.names()
    assert loaded.step_count == 17
    assert loaded.rng_seed == 9
    for name in store:
        assert loaded.value(name).shape == store.value(name).shape
        assert np.array_equal(loaded.value(name), store.value(name))
