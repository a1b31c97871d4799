"""
Regression backends over fixed feature vectors.

All four kinds follow the scikit-learn estimator contract (``fit`` returns
self, fitted state lives in trailing-underscore attributes) and round-trip
through plain dicts so a pipeline bundle can store them as JSON.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Tuple, Type

import numpy as np
from pydantic import BaseModel
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_X_y, check_array

from ..errors import ArgumentError, ConfigurationError, StateError
from ..models.config_models import (
    AdaBoostHyper,
    GBTHyper,
    MLPHyper,
    RegressorHyper,
    RegressorKind,
    SVRHyper,
)
from . import layers
from .nncore import AdamState, LayerKind, LayerSpec, ParameterStore, init_params
from .training import run_training

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class Stump(BaseModel):
    """Depth-one split: x[feature] <= threshold goes left"""
    feature: int
    threshold: float
    left_value: float
    right_value: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] <= self.threshold, self.left_value, self.right_value)


class TreeNode(BaseModel):
    """Leaf when feature is None"""
    value: float
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.feature is None:
            return np.full(X.shape[0], self.value)
        goes_left = X[:, self.feature] <= self.threshold
        out = np.empty(X.shape[0])
        out[goes_left] = self.left.predict(X[goes_left])
        out[~goes_left] = self.right.predict(X[~goes_left])
        return out


TreeNode.model_rebuild()


def _best_split(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                min_leaf: int = 1) -> Optional[Tuple[float, int, float, float, float]]:
    """
    Exact greedy weighted least-squares split.

    Returns (sse, feature, threshold, left_value, right_value) or None when no
    feature has two distinct values. Thresholds are midpoints between
    consecutive distinct sorted values; ties go to the lowest feature index,
    then the lowest threshold.
    """
    n, d = X.shape
    best = None
    positions = np.arange(1, n)
    size_ok = (positions >= min_leaf) & (n - positions >= min_leaf)
    for feature in range(d):
        order = np.argsort(X[:, feature], kind="stable")
        xs, ys, ws = X[order, feature], y[order], w[order]
        valid = (xs[:-1] < xs[1:]) & size_ok
        if not valid.any():
            continue
        cw = np.cumsum(ws)
        cwy = np.cumsum(ws * ys)
        cwyy = np.cumsum(ws * ys * ys)
        left_w, left_s, left_ss = cw[:-1], cwy[:-1], cwyy[:-1]
        right_w, right_s, right_ss = cw[-1] - left_w, cwy[-1] - left_s, cwyy[-1] - left_ss
        with np.errstate(divide="ignore", invalid="ignore"):
            sse = (left_ss - left_s ** 2 / left_w) + (right_ss - right_s ** 2 / right_w)
        sse = np.where(valid & (left_w > 0) & (right_w > 0), sse, np.inf)
        i = int(np.argmin(sse))
        if not np.isfinite(sse[i]):
            continue
        if best is None or sse[i] < best[0]:
            best = (float(sse[i]), feature, float((xs[i] + xs[i + 1]) / 2.0),
                    float(left_s[i] / left_w[i]), float(right_s[i] / right_w[i]))
    return best


def fit_stump(X: np.ndarray, y: np.ndarray, w: Optional[np.ndarray] = None) -> Stump:
    w = np.ones(len(y)) if w is None else w
    split = _best_split(X, y, w)
    if split is None:
        mean = float(np.sum(w * y) / np.sum(w))
        return Stump(feature=0, threshold=0.0, left_value=mean, right_value=mean)
    _, feature, threshold, left_value, right_value = split
    return Stump(feature=feature, threshold=threshold, left_value=left_value, right_value=right_value)


def fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_samples_leaf: int = 1) -> TreeNode:
    """Depth-limited regression tree; leaves hold the mean target of their samples"""
    value = float(y.mean())
    if max_depth <= 0 or np.ptp(y) == 0 or len(y) < 2 * min_samples_leaf:
        return TreeNode(value=value)
    split = _best_split(X, y, np.ones(len(y)), min_samples_leaf)
    if split is None:
        return TreeNode(value=value)
    _, feature, threshold, _, _ = split
    goes_left = X[:, feature] <= threshold
    return TreeNode(
        value=value,
        feature=feature,
        threshold=threshold,
        left=fit_tree(X[goes_left], y[goes_left], max_depth - 1, min_samples_leaf),
        right=fit_tree(X[~goes_left], y[~goes_left], max_depth - 1, min_samples_leaf),
    )


class RegressorModel(BaseEstimator, RegressorMixin):
    """Common fit/predict contract; subclasses set `kind` and `hyper_class`"""
    kind: RegressorKind
    hyper_class: Type[BaseModel]

    def __init__(self, hyper=None):
        self.hyper = hyper

    @property
    def settings(self):
        return self.hyper if self.hyper is not None else self.hyper_class()

    def check_hyper(self) -> None:
        """Raise ConfigurationError for degenerate hyperparameters"""

    def _validate_fit(self, X, y, multi_output: bool = False):
        try:
            X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True, multi_output=multi_output)
        except ValueError as exc:
            raise ArgumentError(str(exc)) from exc
        if len(y) < 2:
            raise ArgumentError(f"need at least 2 training rows, got {len(y)}")
        self.n_features_in_ = X.shape[1]
        return X, y

    def _validate_predict(self, X) -> np.ndarray:
        if not hasattr(self, "n_features_in_"):
            raise StateError(f"{self.kind.value} regressor used before fit")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_in_:
            raise ArgumentError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        try:
            return check_array(X, dtype=np.float64)
        except ValueError as exc:
            raise ArgumentError(str(exc)) from exc

    def predict_one(self, x) -> float:
        return float(np.asarray(self.predict(np.asarray(x).reshape(1, -1))).reshape(-1)[0])

    # ---------------------------------------------------------------- persistence

    def fitted_state(self) -> Dict[str, Any]:
        raise NotImplementedError

    def load_fitted_state(self, state: Dict[str, Any]) -> None:
        raise NotImplementedError

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind.value,
            "hyper": self.settings.model_dump(mode="json"),
            "n_features": int(self.n_features_in_),
            "fitted": self.fitted_state(),
        }


class MLPRegressorModel(RegressorModel):
    """ReLU multilayer perceptron trained by Adam on standardized squared error"""
    kind = RegressorKind.MLP
    hyper_class = MLPHyper

    def check_hyper(self) -> None:
        h = self.settings
        if any(size <= 0 for size in h.hidden):
            raise ConfigurationError(f"MLP hidden sizes must be positive, got {h.hidden}")
        if not h.lr > 0:
            raise ConfigurationError(f"MLP learning rate must be positive, got {h.lr}")
        if h.epochs <= 0 or h.batch_size <= 0:
            raise ConfigurationError("MLP epochs and batch_size must be positive")

    def _forward(self, X: np.ndarray):
        caches = []
        out = X
        for i in range(self.n_layers_):
            out, linear_cache = layers.linear_forward(self.params_, f"mlp.{i}", out)
            relu_cache = None
            if i < self.n_layers_ - 1:
                out, relu_cache = layers.relu_forward(out)
            caches.append((linear_cache, relu_cache))
        return out, caches

    def _backward(self, d_out: np.ndarray, caches) -> None:
        for i in reversed(range(self.n_layers_)):
            linear_cache, relu_cache = caches[i]
            if relu_cache is not None:
                d_out = layers.relu_backward(d_out, relu_cache)
            d_out = layers.linear_backward(self.params_, f"mlp.{i}", d_out, linear_cache)

    def fit(self, X, y):
        self.check_hyper()
        h = self.settings
        X, y = self._validate_fit(X, y, multi_output=True)
        Y = y.reshape(len(y), -1)
        self.n_outputs_ = Y.shape[1]
        self.y_mean_ = Y.mean(axis=0)
        std = Y.std(axis=0)
        std[std == 0] = 1.0
        self.y_std_ = std
        Z = (Y - self.y_mean_) / self.y_std_

        self.layer_sizes_ = [X.shape[1]] + list(h.hidden) + [self.n_outputs_]
        self.n_layers_ = len(self.layer_sizes_) - 1
        specs = [LayerSpec(name=f"mlp.{i}", kind=LayerKind.LINEAR, dims={"in_dim": a, "out_dim": b})
                 for i, (a, b) in enumerate(zip(self.layer_sizes_[:-1], self.layer_sizes_[1:]))]
        self.params_ = init_params(specs, h.seed)

        def batch_loss(indices: np.ndarray) -> float:
            out, caches = self._forward(X[indices])
            diff = out - Z[indices]
            self._backward(2.0 * diff / len(indices), caches)
            return float((diff ** 2).sum())

        self.loss_curve_ = run_training(
            self.params_, len(Z), batch_loss, epochs=h.epochs, batch_size=h.batch_size, seed=h.seed,
            state=AdamState(lr=h.lr), name="mlp",
            epoch_metric=lambda value: math.sqrt(value / self.n_outputs_),
        )
        return self

    def predict(self, X) -> np.ndarray:
        X = self._validate_predict(X)
        out, _ = self._forward(X)
        out = out * self.y_std_ + self.y_mean_
        return out[:, 0] if self.n_outputs_ == 1 else out

    def fitted_state(self) -> Dict[str, Any]:
        return {
            "layer_sizes": self.layer_sizes_,
            "y_mean": self.y_mean_.tolist(),
            "y_std": self.y_std_.tolist(),
            "weights": {name: self.params_.value(name).tolist() for name in self.params_.names()},
        }

    def load_fitted_state(self, state: Dict[str, Any]) -> None:
        self.layer_sizes_ = list(state["layer_sizes"])
        self.n_layers_ = len(self.layer_sizes_) - 1
        self.n_outputs_ = self.layer_sizes_[-1]
        self.y_mean_ = np.asarray(state["y_mean"], dtype=np.float64)
        self.y_std_ = np.asarray(state["y_std"], dtype=np.float64)
        self.params_ = ParameterStore()
        for name, values in state["weights"].items():
            array = np.asarray(values, dtype=np.float64)
            self.params_.add(name, array.shape, array)


class LinearSVRModel(RegressorModel):
    """
    Linear epsilon-insensitive SVR by subgradient descent on
    C * sum(max(0, |w.x + b - y| - epsilon)) + 0.5 * ||w||^2.

    The nominal step is lr / (1 + decay * t). A step that does not lower the
    objective is halved until it does, up to `MAX_HALVINGS` times; if none
    does, the iterate stays put. `objective_trace_` records the objective of
    every iterate, so it is nonincreasing.
    """
    kind = RegressorKind.SVR
    hyper_class = SVRHyper
    MAX_HALVINGS = 30

    def check_hyper(self) -> None:
        h = self.settings
        if h.epsilon < 0:
            raise ConfigurationError(f"SVR epsilon must be >= 0, got {h.epsilon}")
        if not h.c > 0 or not h.lr > 0:
            raise ConfigurationError("SVR c and lr must be positive")
        if h.steps <= 0 or h.decay < 0:
            raise ConfigurationError("SVR steps must be positive and decay non-negative")

    def objective(self, X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> float:
        h = self.settings
        slack = np.maximum(0.0, np.abs(X @ w + b - y) - h.epsilon)
        return float(h.c * slack.sum() + 0.5 * w @ w)

    def fit(self, X, y):
        self.check_hyper()
        h = self.settings
        X, y = self._validate_fit(X, y)
        w = np.zeros(X.shape[1])
        b = 0.0
        current = self.objective(X, y, w, b)
        trace = [current]
        rejected = 0
        for t in range(h.steps):
            residual = X @ w + b - y
            active = np.where(np.abs(residual) > h.epsilon, np.sign(residual), 0.0)
            grad_w = w + h.c * (active @ X)
            grad_b = h.c * active.sum()
            step = h.lr / (1.0 + h.decay * t)
            for _ in range(self.MAX_HALVINGS + 1):
                cand_w, cand_b = w - step * grad_w, b - step * grad_b
                value = self.objective(X, y, cand_w, cand_b)
                if value < current:
                    w, b, current = cand_w, cand_b, value
                    break
                step *= 0.5
            else:
                rejected += 1
            trace.append(current)
        self.coef_ = w
        self.intercept_ = float(b)
        self.objective_trace_ = trace
        logger.debug("svr: objective %.6f after %d steps (%d rejected)", current, h.steps, rejected)
        return self

    def predict(self, X) -> np.ndarray:
        X = self._validate_predict(X)
        return X @ self.coef_ + self.intercept_

    def fitted_state(self) -> Dict[str, Any]:
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_}

    def load_fitted_state(self, state: Dict[str, Any]) -> None:
        self.coef_ = np.asarray(state["coef"], dtype=np.float64)
        self.intercept_ = float(state["intercept"])


class AdaBoostR2Model(RegressorModel):
    """
    Drucker's AdaBoost.R2 with weighted least-squares stumps and the linear
    loss. Prediction is the weighted median of stump outputs with weights
    log(1/beta).
    """
    kind = RegressorKind.ADABOOST
    hyper_class = AdaBoostHyper

    def check_hyper(self) -> None:
        if self.settings.rounds <= 0:
            raise ConfigurationError(f"AdaBoost rounds must be positive, got {self.settings.rounds}")

    def fit(self, X, y):
        self.check_hyper()
        X, y = self._validate_fit(X, y)
        n = len(y)
        sample_weight = np.full(n, 1.0 / n)
        self.stumps_: List[Stump] = []
        self.learner_weights_: List[float] = []
        self.weight_history_ = [sample_weight.copy()]

        for round_index in range(self.settings.rounds):
            stump = fit_stump(X, y, sample_weight)
            error = np.abs(stump.predict(X) - y)
            max_error = error.max()
            if max_error == 0:
                self.stumps_.append(stump)
                self.learner_weights_.append(1.0)
                self.weight_history_.append(sample_weight.copy())
                logger.info("adaboost: round %d fits the training set exactly, stopping", round_index)
                break

            loss = error / max_error
            average_loss = float(sample_weight @ loss)
            if average_loss >= 0.5:
                logger.info("adaboost: round %d average loss %.3f >= 0.5, rejected; stopping",
                            round_index, average_loss)
                break

            beta = average_loss / (1.0 - average_loss)
            self.stumps_.append(stump)
            self.learner_weights_.append(float(math.log(1.0 / beta)))
            sample_weight = sample_weight * beta ** (1.0 - loss)
            sample_weight /= sample_weight.sum()
            self.weight_history_.append(sample_weight.copy())

        if not self.stumps_:
            # every learner rejected: constant training-mean predictor
            mean = float(y.mean())
            self.stumps_.append(Stump(feature=0, threshold=0.0, left_value=mean, right_value=mean))
            self.learner_weights_.append(1.0)
            logger.warning("adaboost: no learner reached average loss below 0.5; predicting the training mean")
        return self

    def predict(self, X) -> np.ndarray:
        X = self._validate_predict(X)
        predictions = np.stack([stump.predict(X) for stump in self.stumps_], axis=1)
        weights = np.asarray(self.learner_weights_)
        order = np.argsort(predictions, axis=1, kind="stable")
        sorted_weights = weights[order]
        cumulative = np.cumsum(sorted_weights, axis=1)
        median_pos = np.argmax(cumulative >= 0.5 * cumulative[:, -1:], axis=1)
        rows = np.arange(X.shape[0])
        return predictions[rows, order[rows, median_pos]]

    def fitted_state(self) -> Dict[str, Any]:
        return {"stumps": [stump.model_dump() for stump in self.stumps_], "weights": self.learner_weights_}

    def load_fitted_state(self, state: Dict[str, Any]) -> None:
        self.stumps_ = [Stump(**stump) for stump in state["stumps"]]
        self.learner_weights_ = [float(weight) for weight in state["weights"]]


class GBTModel(RegressorModel):
    """Squared-error gradient boosting of depth-limited exact-split trees with shrinkage"""
    kind = RegressorKind.GBT
    hyper_class = GBTHyper

    def check_hyper(self) -> None:
        h = self.settings
        if h.trees < 0:
            raise ConfigurationError(f"GBT tree count must be >= 0, got {h.trees}")
        if h.max_depth <= 0:
            raise ConfigurationError(f"GBT max_depth must be positive, got {h.max_depth}")
        if not 0 < h.shrinkage <= 1:
            raise ConfigurationError(f"GBT shrinkage must lie in (0, 1], got {h.shrinkage}")
        if h.min_samples_leaf <= 0:
            raise ConfigurationError("GBT min_samples_leaf must be positive")

    def fit(self, X, y):
        self.check_hyper()
        h = self.settings
        X, y = self._validate_fit(X, y)
        self.init_ = float(y.mean())
        current = np.full(len(y), self.init_)
        self.trees_: List[TreeNode] = []
        self.train_sse_ = [float(np.sum((y - current) ** 2))]
        for _ in range(h.trees):
            tree = fit_tree(X, y - current, h.max_depth, h.min_samples_leaf)
            current = current + h.shrinkage * tree.predict(X)
            self.trees_.append(tree)
            self.train_sse_.append(float(np.sum((y - current) ** 2)))
        return self

    def predict(self, X) -> np.ndarray:
        X = self._validate_predict(X)
        out = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            out = out + self.settings.shrinkage * tree.predict(X)
        return out

    def fitted_state(self) -> Dict[str, Any]:
        return {"init": self.init_, "trees": [tree.model_dump() for tree in self.trees_]}

    def load_fitted_state(self, state: Dict[str, Any]) -> None:
        self.init_ = float(state["init"])
        self.trees_ = [TreeNode.model_validate(tree) for tree in state["trees"]]


REGRESSOR_CLASSES: Dict[RegressorKind, Type[RegressorModel]] = {
    RegressorKind.MLP: MLPRegressorModel,
    RegressorKind.SVR: LinearSVRModel,
    RegressorKind.ADABOOST: AdaBoostR2Model,
    RegressorKind.GBT: GBTModel,
}


def make_regressor(kind, hyper: Optional[RegressorHyper] = None) -> RegressorModel:
    """Unfitted regressor of `kind` configured from the matching block of `hyper`"""
    kind = RegressorKind(kind)
    hyper = hyper or RegressorHyper()
    model = REGRESSOR_CLASSES[kind](getattr(hyper, kind.value))
    model.check_hyper()
    return model


def fit_regressor(kind, X, y, hyper: Optional[RegressorHyper] = None) -> RegressorModel:
    return make_regressor(kind, hyper).fit(X, y)


def regressor_from_dict(payload: Dict[str, Any]) -> RegressorModel:
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported regressor format version {version!r}")
    kind = RegressorKind(payload["kind"])
    cls = REGRESSOR_CLASSES[kind]
    model = cls(cls.hyper_class(**payload["hyper"]))
    model.n_features_in_ = int(payload["n_features"])
    model.load_fitted_state(payload["fitted"])
    return model
