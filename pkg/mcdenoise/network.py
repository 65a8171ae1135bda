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
from collections import OrderedDict

import numpy as np
from nvtx import annotate

from .loader.patches import make_stack
from .ops import BatchNorm, Conv2d, Mode, ReLU, ShapeMismatchError, as_tensor, check_shape
from .ops.operator import _check_mode_arg, check_nhwc

LOG = logging.getLogger("mcdenoise")


class Block:
    """One stage of the layer stack: conv, optionally followed by BN and ReLU."""

    def __init__(self, conv, bn=None, relu=True):
        self.conv = conv
        self.bn = bn
        self.relu = ReLU() if relu else None

    @property
    def operators(self):
        ops = [("conv", self.conv)]
        if self.bn is not None:
            ops.append(("bn", self.bn))
        if self.relu is not None:
            ops.append(("relu", self.relu))
        return ops


class Model:
    """
    The residual denoiser: an input block (conv+ReLU), ``depth - 2`` middle
    blocks (conv+BN+ReLU) and an output conv without activation.

    The network sees ``batch / input_scale`` and its output is multiplied by
    ``input_scale``, so the predicted residual is in the same intensity units as
    the input while activations stay of order one.

    Parameters
    -----------
    blocks : list of Block
    in_channels : int
        Number of stacked slices fed as channels.
    out_channels : int
    width : int
        Kernels per hidden layer.
    input_scale : float, default 255.0
    """

    def __init__(self, blocks, in_channels, out_channels, width, input_scale=255.0):
        self.blocks = blocks
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.width = width
        self.input_scale = float(input_scale)

    @property
    def depth(self):
        return len(self.blocks)

    @property
    def center_channel(self):
        return self.in_channels // 2

    @property
    def bn_eps(self):
        return self.blocks[1].bn.eps

    @property
    def bn_momentum(self):
        return self.blocks[1].bn.momentum

    def named_operators(self):
        for idx, block in enumerate(self.blocks, start=1):
            for name, op in block.operators:
                yield f"block{idx:02d}.{name}", op

    def parameters(self):
        """Trainable arrays keyed by ``blockNN.op.param``, in a fixed order."""
        params = OrderedDict()
        for prefix, op in self.named_operators():
            for name, value in op.params.items():
                params[f"{prefix}.{name}"] = value
        return params

    def state_dict(self):
        """Parameters and running statistics, in serialization order."""
        state = OrderedDict()
        for prefix, op in self.named_operators():
            for name, value in op.state().items():
                state[f"{prefix}.{name}"] = value
        return state

    def astype(self, dtype):
        """Convert every parameter and buffer to ``dtype`` in place; returns the model."""
        for _, op in self.named_operators():
            for store in (op.params, op.buffers):
                for name in store:
                    store[name] = store[name].astype(dtype)
        return self

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters().values()))

    def describe(self):
        lines = [
            f"Model(in={self.in_channels}, width={self.width}, depth={self.depth}, "
            f"out={self.out_channels}, params={self.num_parameters()})"
        ]
        for idx, block in enumerate(self.blocks, start=1):
            parts = [block.conv.describe()]
            if block.bn is not None:
                parts.append(block.bn.describe())
            if block.relu is not None:
                parts.append("relu")
            lines.append(f"  {idx:2d}: " + " + ".join(parts))
        return "\n".join(lines)


def build_model(
    in_channels=5,
    width=64,
    depth=10,
    out_channels=1,
    seed=0,
    input_scale=255.0,
    bn_eps=1e-5,
    bn_momentum=0.1,
):
    """Build a freshly initialized model, deterministic given ``seed``.

    Kernels are drawn from a zero-mean normal with std ``sqrt(2 / (9 * Cin))``,
    biases are zero, BN gamma is one and beta zero.
    """
    if depth < 3:
        raise ValueError(f"depth must be at least 3 (input, middle and output layers), got {depth}")
    if width < 1 or in_channels < 1 or out_channels < 1:
        raise ValueError("width, in_channels and out_channels must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    blocks = [Block(Conv2d(in_channels, width, rng=rng))]
    for _ in range(depth - 2):
        blocks.append(
            Block(
                Conv2d(width, width, rng=rng),
                bn=BatchNorm(width, eps=bn_eps, momentum=bn_momentum),
            )
        )
    blocks.append(Block(Conv2d(width, out_channels, rng=rng), relu=False))
    return Model(blocks, in_channels, out_channels, width, input_scale=input_scale)


class ForwardCache:
    def __init__(self, mode, entries):
        self.mode = mode
        self.entries = entries


@annotate("model_forward", color="blue", domain="mcd_python")
def forward(model, batch, mode=Mode.TRAIN):
    """Predict the residual (noise map) of the center slice of each stack.

    Parameters
    -----------
    model : Model
    batch : ndarray [N,H,W,Cin]
    mode : Mode or str
        ``train`` uses batch statistics in BN (and updates the running ones);
        ``infer`` uses running statistics and leaves the model untouched.

    Returns
    -------
    (prediction [N,H,W,Cout], ForwardCache)
    """
    mode = _check_mode_arg(mode)
    check_nhwc("batch", batch)
    if batch.shape[3] != model.in_channels:
        raise ShapeMismatchError(
            "batch channels vs model.in_channels",
            batch.shape[:3] + (model.in_channels,),
            batch.shape,
        )
    x = batch if model.input_scale == 1.0 else batch / batch.dtype.type(model.input_scale)
    entries = []
    for name, op in model.named_operators():
        x, cache = op.forward(x, mode)
        entries.append((name, op, cache))
    if model.input_scale != 1.0:
        x = x * x.dtype.type(model.input_scale)
    return x, ForwardCache(mode, entries)


class LossValue:
    """Value of the residual loss and its gradient with respect to the prediction."""

    def __init__(self, value, gradient_wrt_prediction):
        self.value = value
        self.gradient_wrt_prediction = gradient_wrt_prediction

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"LossValue({self.value!r})"


def loss_residual(prediction, noisy_center, clean_center):
    """``1/(2N) * sum_i ||prediction_i - (noisy_i - clean_i)||^2`` over a batch of N."""
    check_shape("noisy_center", noisy_center, prediction.shape)
    check_shape("clean_center", clean_center, prediction.shape)
    n = prediction.shape[0]
    diff = prediction - (noisy_center - clean_center)
    value = float(np.sum(np.square(diff, dtype=np.float64)) / (2.0 * n))
    return LossValue(value, (diff / diff.dtype.type(n)).astype(prediction.dtype, copy=False))


@annotate("model_backward", color="blue", domain="mcd_python")
def backward(model, cache, loss_gradient):
    """Backpropagate ``loss_gradient`` (d loss / d prediction) through the model.

    Returns an OrderedDict with the same keys and shapes as ``model.parameters()``.
    """
    if cache.mode != Mode.TRAIN:
        raise ValueError("backward needs the cache of a train-mode forward call")
    grad = loss_gradient
    if model.input_scale != 1.0:
        grad = grad * grad.dtype.type(model.input_scale)
    grads = {}
    for name, op, op_cache in reversed(cache.entries):
        grad, param_grads = op.backward(op_cache, grad)
        for pname, value in param_grads.items():
            grads[f"{name}.{pname}"] = value
    return OrderedDict((key, grads[key]) for key in model.parameters())


def denoise_stack(model, stack):
    """Clean estimate of the center slice: ``center - forward(model, stack, infer)``."""
    check_nhwc("stack", stack)
    if stack.shape[1] < 3 or stack.shape[2] < 3:
        raise ShapeMismatchError("stack spatial extent (H, W >= 3)", None, stack.shape)
    prediction, _ = forward(model, stack, Mode.INFER)
    c = model.center_channel
    center = stack[..., c : c + 1]
    return center - prediction


@annotate("denoise_volume", color="blue", domain="mcd_python")
def denoise_volume(model, volume, batch_slices=8):
    """Estimate the noise map of every slice of ``volume`` from its slice stack.

    Returns an array shaped like ``volume.data``; the clean estimate is
    ``volume.data - residual``.
    """
    if model.out_channels != 1:
        raise ValueError("denoise_volume needs a single-channel (center slice) model")
    data = volume.data
    num_slices = data.shape[2]
    residual = np.empty(data.shape, dtype=np.float32)
    for start in range(0, num_slices, batch_slices):
        indices = range(start, min(start + batch_slices, num_slices))
        batch = as_tensor(np.stack([make_stack(volume, s, model.in_channels) for s in indices]))
        prediction, _ = forward(model, batch, Mode.INFER)
        residual[:, :, indices.start : indices.stop] = np.moveaxis(prediction[..., 0], 0, -1)
        LOG.debug("denoised slices %d-%d of %d", indices.start, indices.stop - 1, num_slices)
    return residual


def denoise(model, volume, batch_slices=8):
    """The clean estimate ``volume - residual`` as a Volume on the same intensity axis."""
    residual = denoise_volume(model, volume, batch_slices=batch_slices)
    return volume.with_data(volume.data - residual)
