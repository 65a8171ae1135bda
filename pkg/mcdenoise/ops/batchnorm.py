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
    DegenerateBatchError,
    Mode,
    Operator,
    ShapeMismatchError,
    _check_mode_arg,
    _compute_dtype,
    check_nhwc,
    check_shape,
)


class BatchNormParams:
    """
    Per-channel batch normalization state.

    Parameters
    -----------
    gamma : ndarray [C]
        Scale, learned.
    beta : ndarray [C]
        Shift, learned.
    running_mean : ndarray [C]
    running_var : ndarray [C]
        Exponential moving averages used in infer mode. Updated in place by
        train-mode forward calls.
    eps : float, default 1e-5
    momentum : float, default 0.1
        ``running <- (1 - momentum) * running + momentum * batch``
    """

    def __init__(self, gamma, beta, running_mean, running_var, eps=1e-5, momentum=0.1):
        gamma = np.asarray(gamma)
        channels = gamma.shape
        for name, value in (("beta", beta), ("running_mean", running_mean)):
            check_shape(name, np.asarray(value), channels)
        check_shape("running_var", np.asarray(running_var), channels)
        if not eps > 0:
            raise ValueError(f"eps must be positive, got {eps}")
        if not 0 < momentum < 1:
            raise ValueError(f"momentum must lie in (0, 1), got {momentum}")
        if np.any(np.asarray(running_var) < 0):
            raise ValueError("running_var entries must be nonnegative")
        self.gamma = gamma
        self.beta = np.asarray(beta)
        self.running_mean = np.asarray(running_mean)
        self.running_var = np.asarray(running_var)
        self.eps = float(eps)
        self.momentum = float(momentum)

    @classmethod
    def initial(cls, channels, eps=1e-5, momentum=0.1, dtype=FLOAT32):
        return cls(
            np.ones(channels, dtype=dtype),
            np.zeros(channels, dtype=dtype),
            np.zeros(channels, dtype=dtype),
            np.ones(channels, dtype=dtype),
            eps=eps,
            momentum=momentum,
        )

    @property
    def channels(self):
        return self.gamma.shape[0]


class BatchNormCache:
    """What a train-mode forward call leaves behind for the backward pass."""

    def __init__(self, mode, shape, x_hat=None, inv_std=None, gamma=None):
        self.mode = mode
        self.shape = shape
        self.x_hat = x_hat
        self.inv_std = inv_std
        self.gamma = gamma


@annotate("batchnorm_forward", color="purple", domain="mcd_python")
def batchnorm_forward(inputs, params, mode=Mode.TRAIN):
    """Normalize each channel of an [N,H,W,C] tensor.

    In train mode the batch statistics over (N,H,W) are used and the running
    statistics of ``params`` are updated in place; in infer mode the running
    statistics are used and nothing is mutated.
    """
    mode = _check_mode_arg(mode)
    check_nhwc("input", inputs)
    channels = inputs.shape[3]
    if channels != params.channels:
        raise ShapeMismatchError(
            "input channels vs batchnorm channels",
            inputs.shape[:3] + (params.channels,),
            inputs.shape,
        )
    dtype = _compute_dtype(inputs, params.gamma)
    x = inputs.astype(dtype, copy=False).reshape(-1, channels)
    gamma = params.gamma.astype(dtype, copy=False)
    beta = params.beta.astype(dtype, copy=False)

    if mode == Mode.INFER:
        inv_std = 1.0 / np.sqrt(params.running_var.astype(dtype) + dtype(params.eps))
        out = (x - params.running_mean.astype(dtype)) * inv_std * gamma + beta
        return out.reshape(inputs.shape), BatchNormCache(mode, inputs.shape)

    count = x.shape[0]
    if count < 2:
        raise DegenerateBatchError(
            f"train-mode batch normalization needs at least 2 values per channel, got {count}"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    var = np.mean(centered * centered, axis=0)
    inv_std = 1.0 / np.sqrt(var + dtype(params.eps))
    x_hat = centered * inv_std
    out = x_hat * gamma + beta

    momentum = params.momentum
    params.running_mean[...] = (1.0 - momentum) * params.running_mean + momentum * mean
    params.running_var[...] = (1.0 - momentum) * params.running_var + momentum * var

    return out.reshape(inputs.shape), BatchNormCache(mode, inputs.shape, x_hat, inv_std, gamma)


@annotate("batchnorm_backward", color="purple", domain="mcd_python")
def batchnorm_backward(cache, grad_out):
    """Gradients of a train-mode :func:`batchnorm_forward`, including the
    dependence of the batch mean and variance on the input.

    Returns ``(grad_input, grad_gamma, grad_beta)``.
    """
    if cache is None or cache.mode != Mode.TRAIN:
        raise ValueError("batchnorm_backward needs the cache of a train-mode forward call")
    check_shape("grad_out", grad_out, cache.shape)
    channels = cache.shape[3]
    dtype = cache.x_hat.dtype
    grad = grad_out.astype(dtype, copy=False).reshape(-1, channels)
    x_hat = cache.x_hat
    count = x_hat.shape[0]

    grad_beta = grad.sum(axis=0)
    grad_gamma = np.sum(grad * x_hat, axis=0)
    grad_x_hat = grad * cache.gamma
    grad_input = (cache.inv_std / count) * (
        count * grad_x_hat
        - grad_x_hat.sum(axis=0)
        - x_hat * np.sum(grad_x_hat * x_hat, axis=0)
    )
    return grad_input.reshape(cache.shape), grad_gamma, grad_beta


class BatchNorm(Operator):
    """
    Batch normalization layer over the channel axis of [N,H,W,C] tensors.

    Parameters
    -----------
    channels : int
    eps : float, default 1e-5
    momentum : float, default 0.1
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=FLOAT32):
        super().__init__()
        initial = BatchNormParams.initial(channels, eps=eps, momentum=momentum, dtype=dtype)
        self.eps = initial.eps
        self.momentum = initial.momentum
        self.params["gamma"] = initial.gamma
        self.params["beta"] = initial.beta
        self.buffers["running_mean"] = initial.running_mean
        self.buffers["running_var"] = initial.running_var

    @property
    def bn_params(self):
        return BatchNormParams(
            self.params["gamma"],
            self.params["beta"],
            self.buffers["running_mean"],
            self.buffers["running_var"],
            eps=self.eps,
            momentum=self.momentum,
        )

    @property
    def channels(self):
        return self.params["gamma"].shape[0]

    def describe(self):
        return f"bn({self.channels})"

    def forward(self, inputs, mode=Mode.TRAIN):
        return batchnorm_forward(inputs, self.bn_params, mode)

    def backward(self, cache, grad_out):
        grad_input, grad_gamma, grad_beta = batchnorm_backward(cache, grad_out)
        return grad_input, OrderedDict([("gamma", grad_gamma), ("beta", grad_beta)])
