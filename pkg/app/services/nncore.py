import logging
import math
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..errors import ArgumentError, ConfigurationError, TrainingError

logger = logging.getLogger(__name__)


class LayerKind(str, Enum):
    """Layer families the numeric core knows how to initialize and differentiate"""
    EMBEDDING = "embedding"
    LINEAR = "linear"
    LAYER_NORM = "layer_norm"
    MULTI_HEAD_ATTENTION = "multi_head_attention"
    FEED_FORWARD_GELU = "feed_forward_gelu"
    SOFTMAX_HEAD = "softmax_head"


_REQUIRED_DIMS: Dict[LayerKind, Tuple[str, ...]] = {
    LayerKind.EMBEDDING: ("vocab_size", "model_dim"),
    LayerKind.LINEAR: ("in_dim", "out_dim"),
    LayerKind.LAYER_NORM: ("dim",),
    LayerKind.MULTI_HEAD_ATTENTION: ("model_dim", "heads"),
    LayerKind.FEED_FORWARD_GELU: ("model_dim", "ff_dim"),
    LayerKind.SOFTMAX_HEAD: ("model_dim", "vocab_size"),
}


class LayerSpec(BaseModel):
    """A named layer and its kind-specific integer dimensions"""
    model_config = ConfigDict(frozen=True)

    name: str
    kind: LayerKind
    dims: Dict[str, int]

    def check(self) -> None:
        """Raise ConfigurationError if the dims are missing, non-positive or inconsistent"""
        for key in _REQUIRED_DIMS[self.kind]:
            if key not in self.dims:
                raise ConfigurationError(f"layer {self.name!r} ({self.kind.value}) is missing dim {key!r}")
            if self.dims[key] <= 0:
                raise ConfigurationError(f"layer {self.name!r} ({self.kind.value}) has non-positive {key}={self.dims[key]}")
        if self.kind == LayerKind.MULTI_HEAD_ATTENTION and self.dims["model_dim"] % self.dims["heads"] != 0:
            raise ConfigurationError(
                f"layer {self.name!r}: model_dim not divisible by heads "
                f"({self.dims['model_dim']} % {self.dims['heads']} != 0)"
            )

    def parameter_shapes(self) -> List[Tuple[str, Tuple[int, ...], str]]:
        """(parameter name, shape, role) in creation order; role is weight, bias, gain or shift"""
        d = self.dims
        n = self.name
        if self.kind == LayerKind.EMBEDDING:
            return [(f"{n}.weight", (d["vocab_size"], d["model_dim"]), "weight")]
        if self.kind == LayerKind.LINEAR:
            return [(f"{n}.weight", (d["out_dim"], d["in_dim"]), "weight"),
                    (f"{n}.bias", (d["out_dim"],), "bias")]
        if self.kind == LayerKind.SOFTMAX_HEAD:
            return [(f"{n}.weight", (d["vocab_size"], d["model_dim"]), "weight"),
                    (f"{n}.bias", (d["vocab_size"],), "bias")]
        if self.kind == LayerKind.LAYER_NORM:
            return [(f"{n}.gain", (d["dim"],), "gain"),
                    (f"{n}.shift", (d["dim"],), "shift")]
        if self.kind == LayerKind.MULTI_HEAD_ATTENTION:
            # keys carry no bias
            m = d["model_dim"]
            shapes = []
            for proj in ("q", "k", "v", "o"):
                shapes.append((f"{n}.w{proj}", (m, m), "weight"))
                if proj != "k":
                    shapes.append((f"{n}.b{proj}", (m,), "bias"))
            return shapes
        m, f = d["model_dim"], d["ff_dim"]
        return [(f"{n}.w1", (f, m), "weight"), (f"{n}.b1", (f,), "bias"),
                (f"{n}.w2", (m, f), "weight"), (f"{n}.b2", (m,), "bias")]


class ParameterEntry:
    """Flat value and gradient buffers of one named parameter"""
    __slots__ = ("shape", "values", "grads")

    def __init__(self, shape: Tuple[int, ...], values: np.ndarray):
        self.shape = tuple(int(s) for s in shape)
        self.values = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
        if self.values.size != math.prod(self.shape):
            raise ConfigurationError(f"value count {self.values.size} does not match shape {self.shape}")
        self.grads = np.zeros_like(self.values)


class ParameterStore:
    """Named, shaped, seeded collection of trainable arrays with paired gradient slots"""

    def __init__(self, specs: Sequence[LayerSpec] = (), rng_seed: int = 0, step_count: int = 0):
        self.specs: List[LayerSpec] = list(specs)
        self.rng_seed = int(rng_seed)
        self.step_count = int(step_count)
        self.entries: Dict[str, ParameterEntry] = {}

    def add(self, name: str, shape: Tuple[int, ...], values: np.ndarray) -> None:
        if name in self.entries:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        self.entries[name] = ParameterEntry(shape, values)

    def value(self, name: str) -> np.ndarray:
        """Shaped view of the parameter values; writes go through to the store"""
        entry = self.entries[name]
        return entry.values.reshape(entry.shape)

    def grad(self, name: str) -> np.ndarray:
        entry = self.entries[name]
        return entry.grads.reshape(entry.shape)

    def accumulate(self, name: str, delta: np.ndarray) -> None:
        entry = self.entries[name]
        entry.grads += np.asarray(delta, dtype=np.float64).reshape(-1)

    def zero_grads(self) -> None:
        for entry in self.entries.values():
            entry.grads.fill(0.0)

    def names(self) -> List[str]:
        return list(self.entries)

    def num_parameters(self) -> int:
        return sum(entry.values.size for entry in self.entries.values())

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: entry.values.copy() for name, entry in self.entries.items()}

    def restore(self, snapshot: Dict[str, np.ndarray]) -> None:
        for name, values in snapshot.items():
            self.entries[name].values[:] = values

    def copy(self) -> "ParameterStore":
        clone = ParameterStore(self.specs, self.rng_seed, self.step_count)
        for name, entry in self.entries.items():
            clone.add(name, entry.shape, entry.values.copy())
        return clone

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def init_params(specs: Sequence[LayerSpec], seed: int) -> ParameterStore:
    """Glorot-uniform weights, zero biases/shifts, unit gains; bit-identical for equal (specs, seed)"""
    if not specs:
        raise ConfigurationError("at least one layer spec is required")
    for spec in specs:
        spec.check()

    rng = np.random.default_rng(seed)
    store = ParameterStore(specs, rng_seed=seed)
    for spec in specs:
        for name, shape, role in spec.parameter_shapes():
            size = math.prod(shape)
            if role == "weight":
                limit = math.sqrt(6.0 / (shape[0] + shape[1]))
                values = rng.uniform(-limit, limit, size=size)
            elif role == "gain":
                values = np.ones(size)
            else:
                values = np.zeros(size)
            store.add(name, shape, values)
    logger.debug("initialized %d parameters in %d entries (seed=%d)", store.num_parameters(), len(store), seed)
    return store


class AdamState:
    """Bias-corrected Adam moments plus global-norm clipping settings"""

    def __init__(self, lr: float = 2e-5, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: Optional[float] = 1.0, frozen: Sequence[str] = ()):
        if not lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        if not 0 < beta1 < 1 or not 0 < beta2 < 1:
            raise ConfigurationError(f"betas must lie in (0, 1), got {beta1}, {beta2}")
        if not eps > 0:
            raise ConfigurationError(f"eps must be positive, got {eps}")
        if clip_norm is not None and not clip_norm > 0:
            raise ConfigurationError(f"clip_norm must be positive, got {clip_norm}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.frozen = tuple(frozen)
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def is_frozen(self, name: str) -> bool:
        return any(name.startswith(prefix) for prefix in self.frozen)


def clip_grad_norm(store: ParameterStore, max_norm: float) -> float:
    """Rescale all gradients so their global L2 norm is at most max_norm; returns the norm before clipping"""
    total = math.sqrt(sum(float(entry.grads @ entry.grads) for entry in store.entries.values()))
    if total > max_norm:
        scale = max_norm / total
        for entry in store.entries.values():
            entry.grads *= scale
    return total


def adam_step(store: ParameterStore, state: AdamState) -> Tuple[ParameterStore, AdamState]:
    """One Adam update in entry order; gradients are zeroed afterwards"""
    for name, entry in store.entries.items():
        if not np.all(np.isfinite(entry.grads)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}", parameter=name)

    if state.clip_norm is not None:
        clip_grad_norm(store, state.clip_norm)

    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t
    for name, entry in store.entries.items():
        if state.is_frozen(name):
            continue
        g = entry.grads
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(entry.values)
            state.v[name] = np.zeros_like(entry.values)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        entry.values -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        if not np.all(np.isfinite(entry.values)):
            raise TrainingError(f"non-finite values in parameter {name!r} after step {state.t}", parameter=name)

    store.step_count += 1
    store.zero_grads()
    return store, state


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along `axis`"""
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0:
        raise ArgumentError("softmax of an empty array")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0:
        raise ArgumentError("log_softmax of an empty array")
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def nll_loss(log_probs) -> float:
    """-sum(log p) over every given log-probability; nested (per-step) inputs are flattened"""
    values = np.asarray(log_probs, dtype=np.float64).reshape(-1)
    if np.any(values > 0):
        raise ArgumentError(f"log-probabilities must be <= 0, got max {values.max()}")
    return float(-values.sum())


def grad_check(loss_fn: Callable[[ParameterStore], float], store: ParameterStore,
               eps: float = 1e-5, sample: int = 50, seed: int = 0) -> float:
    """
    Compare analytic gradients with central differences on a deterministic
    sample of coordinates; returns the worst relative error.

    `loss_fn(store)` must return the loss and accumulate its gradient into the
    store's gradient slots.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ArgumentError(f"eps must lie in [1e-6, 1e-3], got {eps}")

    store.zero_grads()
    loss_fn(store)
    analytic = {name: entry.grads.copy() for name, entry in store.entries.items()}
    store.zero_grads()

    coordinates = [(name, index) for name, entry in store.entries.items() for index in range(entry.values.size)]
    rng = np.random.default_rng(seed)
    if sample < len(coordinates):
        picked = np.sort(rng.choice(len(coordinates), size=sample, replace=False))
        coordinates = [coordinates[i] for i in picked]

    worst = 0.0
    for name, index in coordinates:
        entry = store.entries[name]
        original = entry.values[index]
        entry.values[index] = original + eps
        loss_plus = loss_fn(store)
        entry.values[index] = original - eps
        loss_minus = loss_fn(store)
        entry.values[index] = original
        store.zero_grads()

        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        exact = analytic[name][index]
        error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
        if error > worst:
            worst = error
            logger.debug("grad_check worst so far: %s[%d] analytic=%.6g numeric=%.6g", name, index, exact, numeric)
    return worst
