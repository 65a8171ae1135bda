#
# Copyright (c) 2020, NVIDIA CORPORATION.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
import logging

import fsspec
import numpy as np
from nvtx import annotate

from .loader import PatchLoader, PatchSet
from .network import backward, forward, loss_residual
from .ops import Mode, ShapeMismatchError, as_tensor
from .optim import AdamState, TrainConfig, adam_step, lr_at_epoch

LOG = logging.getLogger("mcdenoise")


class Callback:
    """Hooks called by :func:`train`. Subclasses override what they need."""

    def on_train_begin(self, model, config):
        pass

    def on_batch_end(self, step, loss):
        pass

    def on_epoch_end(self, epoch, lr, mean_loss):
        pass

    def on_train_end(self, model, history):
        pass


class LossLogger(Callback):
    """Writes the per-epoch loss log as CSV with columns ``epoch,lr,mean_loss``."""

    HEADER = "epoch,lr,mean_loss"

    def __init__(self, path):
        self.path = str(path)
        self._file = None

    def on_train_begin(self, model, config):
        self._file = fsspec.open(self.path, "w").open()
        self._file.write(self.HEADER + "\n")

    def on_epoch_end(self, epoch, lr, mean_loss):
        self._file.write(f"{epoch},{lr!r},{mean_loss!r}\n")
        self._file.flush()

    def on_train_end(self, model, history):
        if self._file is not None:
            self._file.close()
            self._file = None


def _as_patch_set(dataset):
    if isinstance(dataset, PatchSet):
        return dataset
    return PatchSet.from_samples(dataset)


def train_step(model, stacks, noisy_center, clean_center, state, lr, config):
    """One forward/loss/backward/Adam step on a batch; returns the batch loss."""
    prediction, cache = forward(model, as_tensor(stacks), Mode.TRAIN)
    loss = loss_residual(prediction, as_tensor(noisy_center), as_tensor(clean_center))
    grads = backward(model, cache, loss.gradient_wrt_prediction)
    adam_step(model.parameters(), grads, state, lr, config)
    return loss.value


@annotate("process_epoch", color="purple", domain="mcd_python")
def process_epoch(model, loader, state, lr, config, callbacks=()):
    """Run one pass over ``loader``; returns the sample-weighted mean batch loss."""
    total, count = 0.0, 0
    for stacks, noisy_center, clean_center in loader:
        value = train_step(model, stacks, noisy_center, clean_center, state, lr, config)
        total += value * len(stacks)
        count += len(stacks)
        LOG.debug("step %d: loss %.6g", state.t, value)
        for cb in callbacks:
            cb.on_batch_end(state.t, value)
    return total / count


def train(model, dataset, config=None, callbacks=None, init_state=None):
    """
    Train ``model`` on ``dataset`` with Adam under the per-epoch learning-rate
    schedule of ``config``.

    Each epoch visits the samples in a fresh order drawn from a generator
    seeded with ``config.seed``; the loss history is reproducible for a
    fixed seed.

    Parameters
    -----------
    model : Model
        Updated in place.
    dataset : PatchSet or sequence of PatchSample
    config : TrainConfig, optional
    callbacks : list of Callback, optional
    init_state : AdamState, optional
        Optimizer state to continue from; updated in place.

    Returns
    -------
    (model, history)
        ``history`` holds the mean loss of every epoch.
    """
    config = config or TrainConfig()
    callbacks = list(callbacks or [])
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    patches = _as_patch_set(dataset)
    if patches.stack_depth != model.in_channels:
        raise ShapeMismatchError(
            "patch stack depth vs model.in_channels", (model.in_channels,), (patches.stack_depth,)
        )
    state = init_state if init_state is not None else AdamState.initial(model.parameters())
    loader = PatchLoader(
        patches, config.batch_size, shuffle=True, seed=config.seed, prefetch=config.prefetch
    )
    LOG.info(
        "training on %d patches, %d batches per epoch, %d epochs",
        len(patches),
        len(loader),
        config.epochs,
    )

    history = []
    for cb in callbacks:
        cb.on_train_begin(model, config)
    try:
        for epoch in range(config.epochs):
            lr = lr_at_epoch(config, epoch)
            mean_loss = process_epoch(model, loader, state, lr, config, callbacks)
            if not np.isfinite(mean_loss):
                raise FloatingPointError(f"loss diverged to {mean_loss} in epoch {epoch}")
            history.append(mean_loss)
            LOG.info(
                "epoch %d/%d: lr %.3g, mean loss %.6g", epoch + 1, config.epochs, lr, mean_loss
            )
            for cb in callbacks:
                cb.on_epoch_end(epoch, lr, mean_loss)
    finally:
        loader.stop()
        for cb in callbacks:
            cb.on_train_end(model, history)
    return model, history
