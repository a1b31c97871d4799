"""
Forward and backward passes for the fixed layer set.

Every forward returns (output, cache); the matching backward takes the
upstream gradient and the cache, accumulates parameter gradients into the
store and returns the gradient with respect to the layer input. Inputs are
batched as (..., features); attention works on (batch, time, model_dim).
"""

import math
from typing import Tuple

import numpy as np

from .nncore import ParameterStore

LAYER_NORM_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


def _rows(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1])


# ---------------------------------------------------------------- embedding

def embedding_forward(store: ParameterStore, name: str, ids: np.ndarray) -> np.ndarray:
    return store.value(f"{name}.weight")[ids]


def embedding_backward(store: ParameterStore, name: str, ids: np.ndarray, d_out: np.ndarray) -> None:
    table = store.value(f"{name}.weight")
    grad = np.zeros_like(table)
    np.add.at(grad, ids.reshape(-1), _rows(d_out))
    store.accumulate(f"{name}.weight", grad)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos position table of shape (length, dim)"""
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2, dtype=np.float64) / dim))
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: dim // 2])
    return table


# ---------------------------------------------------------------- linear

def linear_forward(store: ParameterStore, name: str, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    weight = store.value(f"{name}.weight")
    bias = store.value(f"{name}.bias")
    return x @ weight.T + bias, x


def linear_backward(store: ParameterStore, name: str, d_out: np.ndarray, cache: np.ndarray) -> np.ndarray:
    x = cache
    store.accumulate(f"{name}.weight", _rows(d_out).T @ _rows(x))
    store.accumulate(f"{name}.bias", _rows(d_out).sum(axis=0))
    return d_out @ store.value(f"{name}.weight")


# ---------------------------------------------------------------- activations

def relu_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.maximum(x, 0.0), x


def relu_backward(d_out: np.ndarray, cache: np.ndarray) -> np.ndarray:
    return d_out * (cache > 0)


def gelu(x: np.ndarray) -> np.ndarray:
    """tanh approximation"""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)


# ---------------------------------------------------------------- layer norm

def layer_norm_forward(store: ParameterStore, name: str, x: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    x_hat = (x - mean) * inv_std
    out = x_hat * store.value(f"{name}.gain") + store.value(f"{name}.shift")
    return out, (x_hat, inv_std)


def layer_norm_backward(store: ParameterStore, name: str, d_out: np.ndarray, cache) -> np.ndarray:
    x_hat, inv_std = cache
    store.accumulate(f"{name}.gain", _rows(d_out * x_hat).sum(axis=0))
    store.accumulate(f"{name}.shift", _rows(d_out).sum(axis=0))
    d_hat = d_out * store.value(f"{name}.gain")
    return inv_std * (
        d_hat
        - d_hat.mean(axis=-1, keepdims=True)
        - x_hat * (d_hat * x_hat).mean(axis=-1, keepdims=True)
    )


# ---------------------------------------------------------------- feed forward

def feed_forward_forward(store: ParameterStore, name: str, x: np.ndarray):
    hidden = x @ store.value(f"{name}.w1").T + store.value(f"{name}.b1")
    active = gelu(hidden)
    out = active @ store.value(f"{name}.w2").T + store.value(f"{name}.b2")
    return out, (x, hidden, active)


def feed_forward_backward(store: ParameterStore, name: str, d_out: np.ndarray, cache) -> np.ndarray:
    x, hidden, active = cache
    store.accumulate(f"{name}.w2", _rows(d_out).T @ _rows(active))
    store.accumulate(f"{name}.b2", _rows(d_out).sum(axis=0))
    d_hidden = (d_out @ store.value(f"{name}.w2")) * gelu_grad(hidden)
    store.accumulate(f"{name}.w1", _rows(d_hidden).T @ _rows(x))
    store.accumulate(f"{name}.b1", _rows(d_hidden).sum(axis=0))
    return d_hidden @ store.value(f"{name}.w1")


# ---------------------------------------------------------------- attention

def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    batch, length, dim = x.shape
    return x.reshape(batch, length, heads, dim // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    batch, heads, length, head_dim = x.shape
    return x.transpose(0, 2, 1, 3).reshape(batch, length, heads * head_dim)


def attention_forward(store: ParameterStore, name: str, x_q: np.ndarray, x_kv: np.ndarray,
                      key_mask: np.ndarray, heads: int, causal: bool = False):
    """
    Multi-head scaled dot-product attention.

    key_mask is (batch, keys) and true on real tokens; masked keys get exactly
    zero weight, so their contents never reach the output.
    """
    q = _split_heads(x_q @ store.value(f"{name}.wq").T + store.value(f"{name}.bq"), heads)
    k = _split_heads(x_kv @ store.value(f"{name}.wk").T, heads)
    v = _split_heads(x_kv @ store.value(f"{name}.wv").T + store.value(f"{name}.bv"), heads)
    scale = 1.0 / math.sqrt(q.shape[-1])

    allowed = key_mask[:, None, None, :].astype(bool)
    if causal:
        allowed = allowed & np.tril(np.ones((x_q.shape[1], x_kv.shape[1]), dtype=bool))[None, None]
    scores = np.where(allowed, (q @ k.transpose(0, 1, 3, 2)) * scale, -np.inf)
    weights = np.exp(scores - scores.max(axis=-1, keepdims=True))
    weights /= weights.sum(axis=-1, keepdims=True)

    context = _merge_heads(weights @ v)
    out = context @ store.value(f"{name}.wo").T + store.value(f"{name}.bo")
    return out, (x_q, x_kv, q, k, v, weights, context, scale, heads)


def attention_backward(store: ParameterStore, name: str, d_out: np.ndarray, cache) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (d_x_q, d_x_kv); callers using self-attention add the two"""
    x_q, x_kv, q, k, v, weights, context, scale, heads = cache
    store.accumulate(f"{name}.wo", _rows(d_out).T @ _rows(context))
    store.accumulate(f"{name}.bo", _rows(d_out).sum(axis=0))

    d_context = _split_heads(d_out @ store.value(f"{name}.wo"), heads)
    d_weights = d_context @ v.transpose(0, 1, 3, 2)
    d_v = weights.transpose(0, 1, 3, 2) @ d_context
    d_scores = weights * (d_weights - (d_weights * weights).sum(axis=-1, keepdims=True)) * scale
    d_q = _merge_heads(d_scores @ k)
    d_k = _merge_heads(d_scores.transpose(0, 1, 3, 2) @ q)
    d_v = _merge_heads(d_v)

    store.accumulate(f"{name}.wq", _rows(d_q).T @ _rows(x_q))
    store.accumulate(f"{name}.bq", _rows(d_q).sum(axis=0))
    store.accumulate(f"{name}.wk", _rows(d_k).T @ _rows(x_kv))
    store.accumulate(f"{name}.wv", _rows(d_v).T @ _rows(x_kv))
    store.accumulate(f"{name}.bv", _rows(d_v).sum(axis=0))

    d_x_q = d_q @ store.value(f"{name}.wq")
    d_x_kv = d_k @ store.value(f"{name}.wk") + d_v @ store.value(f"{name}.wv")
    return d_x_q, d_x_kv
