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

from .operator import (
    FLOAT32,
    Operator,
    ShapeMismatchError,
    _compute_dtype,
    check_nhwc,
    check_shape,
)

KERNEL_SIZE = 3


class ConvParams:
    """
    Kernels and bias of one multi-channel 3x3 convolution.

    Parameters
    -----------
    kernels : ndarray of shape [K, 3, 3, Cin]
        K output channels over a 3x3 spatial support of Cin input channels.
    bias : ndarray of shape [K]
    """

    def __init__(self, kernels, bias=None):
        kernels = np.asarray(kernels)
        if kernels.ndim != 4 or kernels.shape[1:3] != (KERNEL_SIZE, KERNEL_SIZE):
            raise ShapeMismatchError("kernels [K,3,3,Cin]", None, kernels.shape)
        if bias is None:
            bias = np.zeros(kernels.shape[0], dtype=kernels.dtype)
        bias = np.asarray(bias)
        check_shape("bias", bias, (kernels.shape[0],))
        self.kernels = kernels
        self.bias = bias

    @property
    def out_channels(self):
        return self.kernels.shape[0]

    @property
    def in_channels(self):
        return self.kernels.shape[3]


def _pad(inputs):
    # zero padding of width 1 on both spatial borders keeps H and W unchanged
    return np.pad(inputs, ((0, 0), (1, 1), (1, 1), (0, 0)))


def _check_conv_inputs(inputs, params):
    check_nhwc("input", inputs)
    if inputs.shape[3] != params.in_channels:
        raise ShapeMismatchError(
            "input channels vs kernel channels",
            inputs.shape[:3] + (params.in_channels,),
            inputs.shape,
        )


@annotate("conv2d_mc_forward", color="green", domain="mcd_python")
def conv2d_mc_forward(inputs, params):
    """Cross-correlate an [N,H,W,Cin] tensor with 3x3xCin kernels, zero padded.

    Returns an [N,H,W,K] tensor: bias plus the sum over each 3x3xCin receptive field.
    """
    _check_conv_inputs(inputs, params)
    dtype = _compute_dtype(inputs, params.kernels, params.bias)
    n, h, w, cin = inputs.shape
    kernels = params.kernels.astype(dtype, copy=False)
    padded = _pad(inputs.astype(dtype, copy=False))

    out = np.empty((n * h * w, params.out_channels), dtype=dtype)
    out[...] = params.bias.astype(dtype, copy=False)
    for dy in range(KERNEL_SIZE):
        for dx in range(KERNEL_SIZE):
            window = padded[:, dy : dy + h, dx : dx + w, :].reshape(-1, cin)
            out += window @ kernels[:, dy, dx, :].T
    return out.reshape(n, h, w, params.out_channels)


@annotate("conv2d_mc_backward", color="green", domain="mcd_python")
def conv2d_mc_backward(inputs, params, grad_out):
    """Analytic gradients of :func:`conv2d_mc_forward`.

    Returns
    -------
    grad_input : [N,H,W,Cin]
    grad_kernels : [K,3,3,Cin]
    grad_bias : [K], the sum of ``grad_out`` over batch and spatial positions
    """
    _check_conv_inputs(inputs, params)
    n, h, w, cin = inputs.shape
    check_shape("grad_out", grad_out, (n, h, w, params.out_channels))
    dtype = _compute_dtype(inputs, params.kernels, grad_out)
    kernels = params.kernels.astype(dtype, copy=False)
    padded = _pad(inputs.astype(dtype, copy=False))
    grad = grad_out.astype(dtype, copy=False).reshape(-1, params.out_channels)

    grad_kernels = np.empty(params.kernels.shape, dtype=dtype)
    grad_padded = np.zeros(padded.shape, dtype=dtype)
    for dy in range(KERNEL_SIZE):
        for dx in range(KERNEL_SIZE):
            window = padded[:, dy : dy + h, dx : dx + w, :].reshape(-1, cin)
            grad_kernels[:, dy, dx, :] = grad.T @ window
            grad_padded[:, dy : dy + h, dx : dx + w, :] += (grad @ kernels[:, dy, dx, :]).reshape(
                n, h, w, cin
            )
    grad_bias = grad.sum(axis=0)
    grad_input = np.ascontiguousarray(grad_padded[:, 1:-1, 1:-1, :])
    return grad_input, grad_kernels, grad_bias


class Conv2d(Operator):
    """
    Multi-channel 3x3 convolution layer with zero padding of one voxel.

    Parameters
    -----------
    in_channels : int
    out_channels : int
    rng : numpy.random.Generator, default None
        Source of the fan-in scaled normal initialization. ``None`` leaves the
        kernels at zero.
    dtype : numpy dtype, default float32
    """

    def __init__(self, in_channels, out_channels, rng=None, dtype=FLOAT32):
        super().__init__()
        shape = (out_channels, KERNEL_SIZE, KERNEL_SIZE, in_channels)
        if rng is None:
            kernels = np.zeros(shape, dtype=dtype)
        else:
            # fan-in scaling for ReLU networks: std = sqrt(2 / (3*3*Cin))
            std = np.sqrt(2.0 / (KERNEL_SIZE * KERNEL_SIZE * in_channels))
            kernels = (rng.standard_normal(shape) * std).astype(dtype)
        self.params["kernels"] = kernels
        self.params["bias"] = np.zeros(out_channels, dtype=dtype)

    @property
    def conv_params(self):
        return ConvParams(self.params["kernels"], self.params["bias"])

    @property
    def in_channels(self):
        return self.params["kernels"].shape[3]

    @property
    def out_channels(self):
        return self.params["kernels"].shape[0]

    def describe(self):
        return f"conv({self.out_channels} kernels, 3x3x{self.in_channels})"

    def forward(self, inputs, mode=None):
        return conv2d_mc_forward(inputs, self.conv_params), inputs

    def backward(self, cache, grad_out):
        grad_input, grad_kernels, grad_bias = conv2d_mc_backward(cache, self.conv_params, grad_out)
        return grad_input, OrderedDict([("kernels", grad_kernels), ("bias", grad_bias)])
