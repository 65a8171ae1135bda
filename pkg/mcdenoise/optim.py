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
from collections import OrderedDict

import numpy as np
from nvtx import annotate

from .ops import ShapeMismatchError
from .utils import Config


class TrainConfig(Config):
    """
    Training recipe.

    Parameters
    -----------
    batch_size : int, default 64
    epochs : int, default 50
    lr_start, lr_end : float, default 1e-1, 1e-4
        Learning rate of the first and of the last epoch; epochs in between
        interpolate geometrically.
    beta1, beta2, adam_eps : float
        Adam moment decay rates and denominator offset.
    seed : int
        Seeds model initialization, patch sampling and batch shuffling.
    prefetch : int, default 2
        Batches gathered ahead of the training step by a background thread;
        0 gathers them inline.
    """

    _defaults = {
        "batch_size": 64,
        "epochs": 50,
        "lr_start": 1e-1,
        "lr_end": 1e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "adam_eps": 1e-8,
        "seed": 0,
        "prefetch": 2,
    }

    def validate(self):
        for name in ("batch_size", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
            setattr(self, name, int(getattr(self, name)))
        for name in ("lr_start", "lr_end", "beta1", "beta2", "adam_eps"):
            setattr(self, name, float(getattr(self, name)))
        if not 0 < self.lr_end <= self.lr_start:
            raise ValueError(f"need 0 < lr_end <= lr_start, got {self.lr_end}, {self.lr_start}")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be positive")
        self.seed = int(self.seed)
        self.prefetch = max(int(self.prefetch), 0)


def lr_at_epoch(config, epoch):
    """``lr_start * (lr_end / lr_start) ** (epoch / (epochs - 1))``, exact at both ends."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} out of range for {config.epochs} epochs")
    if epoch == 0 or config.epochs == 1:
        return config.lr_start
    if epoch == config.epochs - 1:
        return config.lr_end
    ratio = config.lr_end / config.lr_start
    return config.lr_start * ratio ** (epoch / (config.epochs - 1))


class AdamState:
    """First and second moment estimates per parameter plus the step count."""

    def __init__(self, m, v, t=0):
        self.m = m
        self.v = v
        self.t = t

    @classmethod
    def initial(cls, params):
        return cls(
            OrderedDict((k, np.zeros_like(p)) for k, p in params.items()),
            OrderedDict((k, np.zeros_like(p)) for k, p in params.items()),
        )

    def __repr__(self):
        return f"AdamState(t={self.t}, params={len(self.m)})"


@annotate("adam_step", color="purple", domain="mcd_python")
def adam_step(params, grads, state, lr, config):
    """Apply one bias-corrected Adam update to ``params`` in place.

    Returns ``(params, state)``; both are the objects passed in.
    """
    if set(grads) != set(params) or set(state.m) != set(params):
        raise ValueError("params, grads and optimizer state must share the same keys")
    for name, p in params.items():
        for what, other in (("grad", grads[name]), ("m", state.m[name]), ("v", state.v[name])):
            if other.shape != p.shape:
                raise ShapeMismatchError(f"{what} of {name}", p.shape, other.shape)

    state.t += 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        m_hat = m / correction1
        v_hat = v / correction2
        p -= (lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)).astype(p.dtype, copy=False)
    return params, state
