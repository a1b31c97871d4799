"""
Shared mini-batch loop for every gradient-trained stage.

Progress goes to the ``app.training`` logger as ``epoch<TAB>loss`` lines so
runs can be scraped; a ``# <stage>`` line marks the start of each stage.
"""

import logging
from typing import Callable, List, Optional

import numpy as np

from ..errors import ConfigurationError
from .nncore import AdamState, ParameterStore, adam_step

logger = logging.getLogger(__name__)
progress = logging.getLogger("app.training")

BatchLoss = Callable[[np.ndarray], float]


def run_training(store: ParameterStore, n: int, batch_loss: BatchLoss, *, epochs: int, batch_size: int,
                 seed: int, state: AdamState, max_steps: Optional[int] = None, name: str = "train",
                 epoch_metric: Optional[Callable[[float], float]] = None,
                 on_epoch_end: Optional[Callable[[int, float], bool]] = None) -> List[float]:
    """
    Shuffle indices with a seeded generator each epoch and take one Adam step
    per mini-batch.

    `batch_loss(indices)` returns the summed loss of the batch and accumulates
    the gradient of the batch mean. The per-epoch value is the mean loss over
    the examples seen, optionally mapped through `epoch_metric`.
    `on_epoch_end(epoch, value)` may return True to stop early.
    """
    if n <= 0:
        raise ConfigurationError("cannot train on an empty dataset")
    if epochs < 0 or batch_size <= 0:
        raise ConfigurationError(f"epochs must be >= 0 and batch_size > 0, got {epochs}, {batch_size}")

    rng = np.random.default_rng(seed)
    history: List[float] = []
    steps = 0
    progress.info("# %s", name)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, batch_size):
            if max_steps is not None and steps >= max_steps:
                break
            indices = order[start:start + batch_size]
            store.zero_grads()
            total += batch_loss(indices)
            seen += len(indices)
            adam_step(store, state)
            steps += 1
        if seen == 0:
            break
        value = total / seen
        if epoch_metric is not None:
            value = epoch_metric(value)
        history.append(value)
        progress.info("%d\t%.6f", epoch, value)
        if on_epoch_end is not None and on_epoch_end(epoch, value):
            logger.info("%s: stopping after epoch %d", name, epoch)
            break
        if max_steps is not None and steps >= max_steps:
            break
    logger.debug("%s: %d optimizer steps", name, steps)
    return history


def adam_for(hyper, frozen=None) -> AdamState:
    """Fresh optimizer state from a TrainHyper block"""
    return AdamState(lr=hyper.lr, beta1=hyper.beta1, beta2=hyper.beta2, eps=hyper.eps,
                     clip_norm=hyper.clip_norm, frozen=hyper.frozen if frozen is None else frozen)
