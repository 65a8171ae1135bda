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
import enum
from collections import OrderedDict

import numpy as np

FLOAT32 = np.float32


class ShapeMismatchError(ValueError):
    """Raised when tensors handed to a primitive disagree on their shapes."""

    def __init__(self, what, expected, got):
        self.what = what
        self.expected = tuple(expected) if expected is not None else None
        self.got = tuple(got)
        super().__init__(f"shape mismatch for {what}: expected {self.expected}, got {self.got}")


class DegenerateBatchError(ValueError):
    """Raised when batch statistics are undefined (one element per channel)."""


class Mode(enum.Enum):
    TRAIN = "train"
    INFER = "infer"


def _check_mode_arg(mode):
    if isinstance(mode, Mode):
        return mode
    if isinstance(mode, str):
        try:
            return Mode(mode.lower())
        except ValueError:
            pass
    raise ValueError(f"`mode={mode}` not recognized, expected 'train' or 'infer'.")


def as_tensor(data, dtype=FLOAT32):
    """Return ``data`` as a C-contiguous array of ``dtype`` (float32 by default)."""
    return np.ascontiguousarray(data, dtype=dtype)


def _compute_dtype(*arrays):
    # float64 inputs keep float64 (gradient check mode), everything else runs in float32
    if any(a.dtype == np.float64 for a in arrays):
        return np.float64
    return FLOAT32


def check_shape(what, array, expected):
    if array.shape != tuple(expected):
        raise ShapeMismatchError(what, expected, array.shape)


def check_nhwc(what, array):
    if array.ndim != 4:
        raise ShapeMismatchError(what + " (expected rank 4 [N,H,W,C])", None, array.shape)
    if min(array.shape) < 1:
        raise ShapeMismatchError(what + " (empty extent)", None, array.shape)


class Operator:
    """
    Base class for all differentiable layer operators.

    An operator owns its parameters (and possibly non-trainable buffers) and
    exposes a ``forward`` that returns ``(output, cache)`` and a ``backward``
    that consumes that cache. Parameter-free operators return empty dicts.
    """

    def __init__(self):
        self.params = OrderedDict()
        self.buffers = OrderedDict()

    def describe(self):
        raise NotImplementedError("All operators must have a description.")

    def forward(self, inputs, mode=Mode.TRAIN):
        raise NotImplementedError("""Must return a tuple of (output, cache).""")

    def backward(self, cache, grad_out):
        raise NotImplementedError(
            """Must return a tuple of (grad_input, OrderedDict of parameter gradients)."""
        )

    def state(self):
        """Parameters followed by buffers, in serialization order."""
        state = OrderedDict(self.params)
        state.update(self.buffers)
        return state
