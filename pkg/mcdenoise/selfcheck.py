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
"""Built-in verification: finite-difference checks of every backward pass and
closed-form or brute-force oracles for the quality metrics."""
import logging
import math
from collections import namedtuple

import numpy as np

from .gradient_check import GradientCheckError, check_gradients
from .metrics import SSIM_C1, SSIM_C2, psnr, ssim_global, ssim_local
from .network import backward, build_model, forward, loss_residual
from .ops import (
    BatchNormParams,
    ConvParams,
    Mode,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_mc_backward,
    conv2d_mc_forward,
    relu_backward,
    relu_forward,
)
from .utils import seeded_rng

LOG = logging.getLogger("mcdenoise")

PRIMITIVES = ("conv", "batchnorm", "relu", "model")
# scale applied to the analytic gradient of the primitive named by ``corrupt``
CORRUPTION_FACTOR = 1.5

CheckResult = namedtuple("CheckResult", ["name", "passed", "detail"])


def _corrupted(grads, enabled):
    if not enabled:
        return list(grads)
    return [np.asarray(g) * CORRUPTION_FACTOR for g in grads]


def _check_conv(rng, corrupt, rtol):
    x = rng.standard_normal((2, 4, 5, 3)).astype(np.float32)
    kernels = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
    bias = rng.standard_normal(2).astype(np.float32)
    grad_out = rng.standard_normal((2, 4, 5, 2)).astype(np.float32)
    analytic = conv2d_mc_backward(x, ConvParams(kernels, bias), grad_out)
    return check_gradients(
        lambda: conv2d_mc_forward(x, ConvParams(kernels, bias)),
        [x, kernels, bias],
        _corrupted(analytic, corrupt),
        names=["conv input", "conv kernels", "conv bias"],
        grad_outputs=grad_out,
        eps=1e-1,
        rtol=rtol,
    )


def _check_batchnorm(rng, corrupt, rtol):
    x = (rng.standard_normal((2, 3, 3, 2)) * 2.0 + 1.0).astype(np.float32)
    gamma = rng.uniform(0.5, 1.5, 2).astype(np.float32)
    beta = rng.standard_normal(2).astype(np.float32)
    grad_out = rng.standard_normal(x.shape).astype(np.float32)

    def run():
        params = BatchNormParams(gamma, beta, np.zeros(2, np.float32), np.ones(2, np.float32))
        return batchnorm_forward(x, params, Mode.TRAIN)

    _, cache = run()
    analytic = batchnorm_backward(cache, grad_out)
    return check_gradients(
        lambda: run()[0],
        [x, gamma, beta],
        _corrupted(analytic, corrupt),
        names=["batchnorm input", "batchnorm gamma", "batchnorm beta"],
        grad_outputs=grad_out,
        eps=5e-2,
        rtol=rtol,
    )


def _check_relu(rng, corrupt, rtol):
    # keep inputs away from the kink at zero
    magnitude = rng.uniform(0.1, 1.0, (2, 3, 3, 2))
    x = (np.where(rng.random(magnitude.shape) < 0.5, -1.0, 1.0) * magnitude).astype(np.float32)
    grad_out = rng.standard_normal(x.shape).astype(np.float32)
    analytic = [relu_backward(x, grad_out)]
    return check_gradients(
        lambda: relu_forward(x),
        [x],
        _corrupted(analytic, corrupt),
        names=["relu input"],
        grad_outputs=grad_out,
        eps=1e-2,
        rtol=rtol,
    )


def _check_model(rng, corrupt, rtol):
    """Loss gradient of a depth-3, width-2 model on one 6x6x5 stack, in float64."""
    seed = int(rng.integers(2 ** 31))
    model = build_model(in_channels=5, width=2, depth=3, seed=seed, input_scale=1.0)
    model.astype(np.float64)
    batch = rng.standard_normal((1, 6, 6, 5))
    noisy = batch[..., 2:3].copy()
    clean = noisy - 0.1 * rng.standard_normal(noisy.shape)

    def loss():
        prediction, _ = forward(model, batch, Mode.TRAIN)
        return loss_residual(prediction, noisy, clean).value

    prediction, cache = forward(model, batch, Mode.TRAIN)
    grads = backward(model, cache, loss_residual(prediction, noisy, clean).gradient_wrt_prediction)
    params = model.parameters()
    return check_gradients(
        loss,
        list(params.values()),
        _corrupted(grads.values(), corrupt),
        names=[f"model {name}" for name in params],
        eps=1e-6,
        rtol=rtol,
    )


GRADIENT_CHECKS = {
    "conv": _check_conv,
    "batchnorm": _check_batchnorm,
    "relu": _check_relu,
    "model": _check_model,
}


def _brute_force_ssim(x, y, c1, c2):
    values = []
    nx, ny, nz = x.shape
    for i in range(nx - 2):
        for j in range(ny - 2):
            for k in range(nz - 2):
                window = (slice(i, i + 3), slice(j, j + 3), slice(k, k + 3))
                values.append(ssim_local(x[window], y[window], c1, c2))
    return math.fsum(values) / len(values)


def metric_oracles(rng):
    """``(name, passed, detail)`` for each metric oracle."""
    results = []
    zeros = np.zeros((3, 3, 3))
    value = psnr(zeros, np.full((3, 3, 3), 2.55))
    results.append(CheckResult("psnr rmse 2.55", abs(value - 40.0) <= 1e-9, f"{value!r} dB"))
    value = psnr(zeros, np.full((3, 3, 3), 255.0))
    results.append(CheckResult("psnr rmse 255", abs(value) <= 1e-9, f"{value!r} dB"))
    value = psnr(zeros, zeros)
    results.append(CheckResult("psnr identical", value == math.inf, repr(value)))

    x = rng.uniform(0, 255, (5, 5, 5))
    y = rng.uniform(0, 255, (5, 5, 5))
    value = ssim_global(x, x)
    results.append(CheckResult("ssim identical", abs(value - 1.0) <= 1e-9, repr(value)))
    value, oracle = ssim_global(x, y), _brute_force_ssim(x, y, SSIM_C1, SSIM_C2)
    results.append(
        CheckResult("ssim brute force", abs(value - oracle) <= 1e-9, f"{value!r} vs {oracle!r}")
    )
    a, b = 40.0, 90.0
    value = ssim_local(np.full(27, a), np.full(27, b))
    expected = (2 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1)
    results.append(
        CheckResult("ssim constant windows", abs(value - expected) <= 1e-12, repr(value))
    )
    return results


def run_selfcheck(seed=0, cases=20, corrupt=None, rtol=1e-2):
    """
    Run ``cases`` random gradient checks per primitive plus the metric oracles.

    Parameters
    -----------
    seed : int
    cases : int
        Random cases per primitive.
    corrupt : str, optional
        Name of a primitive (one of ``PRIMITIVES``) whose analytic gradient is
        scaled by ``CORRUPTION_FACTOR`` before comparison; its check must fail.
    rtol : float

    Returns
    -------
    list of CheckResult
    """
    if corrupt is not None and corrupt not in PRIMITIVES:
        raise ValueError(f"unknown primitive {corrupt!r}, expected one of {PRIMITIVES}")
    rng = seeded_rng(seed)
    results = []
    for name, check in GRADIENT_CHECKS.items():
        worst, failure = 0.0, None
        for _ in range(cases):
            try:
                errors = check(rng, corrupt == name, rtol)
                worst = max([worst] + errors)
            except GradientCheckError as e:
                failure = e
                break
        if failure is None:
            results.append(CheckResult(f"{name} gradient", True, f"max rel error {worst:.2e}"))
        else:
            results.append(CheckResult(f"{name} gradient", False, str(failure)))
    results.extend(metric_oracles(rng))
    for result in results:
        log = LOG.info if result.passed else LOG.error
        log("%s %s: %s", "ok  " if result.passed else "FAIL", result.name, result.detail)
    return results
