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
"""Finite-difference verification of the hand-written backward passes."""
import numpy as np


class GradientCheckError(AssertionError):
    def __init__(self, name, error, tolerance):
        self.name = name
        self.error = error
        self.tolerance = tolerance
        super().__init__(
            f"gradient of {name} deviates from finite differences: "
            f"relative error {error:.3e} > {tolerance:.1e}"
        )


def numerical_grad(f, inputs, grad_outputs=None, eps=1e-3):
    """Computes numerical gradients by central finite differences.

    Parameters
    -----------
    f : callable
        Function with no arguments that runs the forward computation on the
        arrays in ``inputs`` and returns an array (or scalar).
    inputs : list of ndarray
        Arrays that are perturbed in place, one entry at a time, and restored.
    grad_outputs : ndarray, default None
        Weights contracted with the output, i.e. the gradient of a scalar
        objective with respect to the output. ``None`` means ones.
    eps : float, default 1e-3

    Returns
    -------
    list of float64 arrays shaped like ``inputs``
    """
    assert eps > 0
    for x in inputs:
        if x.dtype.kind != "f":
            raise RuntimeError("The dtype of input arrays must be kind of float")

    def _objective():
        out = np.asarray(f(), dtype=np.float64)
        if grad_outputs is None:
            return out.sum()
        return np.sum(out * np.asarray(grad_outputs, dtype=np.float64))

    grads = []
    for x in inputs:
        grad = np.zeros(x.shape, dtype=np.float64)
        flat = x.reshape(-1)
        if not np.shares_memory(flat, x):
            raise RuntimeError("inputs must be contiguous so they can be perturbed in place")
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = _objective()
            flat[i] = orig - eps
            minus = _objective()
            flat[i] = orig
            # the perturbation actually applied may differ from eps after rounding
            step = float(x.dtype.type(orig + eps)) - float(x.dtype.type(orig - eps))
            grad.reshape(-1)[i] = (plus - minus) / step
        grads.append(grad)
    return grads


def relative_error(analytic, numeric, atol=None):
    """Largest entrywise ``|a - n| / max(|a|, |n|, atol)``.

    ``atol`` defaults to 1e-3 of the largest numeric gradient magnitude, so
    entries that are tiny compared to the rest are judged in absolute terms.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise ValueError(f"shape mismatch: {analytic.shape} vs {numeric.shape}")
    if analytic.size == 0:
        return 0.0
    if atol is None:
        atol = max(1e-3 * float(np.max(np.abs(numeric))), 1e-8)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), atol)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(f, inputs, analytic, names=None, grad_outputs=None, eps=1e-3, rtol=1e-2):
    """Compare analytic gradients against :func:`numerical_grad`.

    Raises :class:`GradientCheckError` naming the first failing input;
    returns the list of relative errors otherwise.
    """
    names = names or [f"input{i}" for i in range(len(inputs))]
    numeric = numerical_grad(f, inputs, grad_outputs=grad_outputs, eps=eps)
    errors = []
    for name, a, n in zip(names, analytic, numeric):
        error = relative_error(a, n)
        if not error <= rtol:
            raise GradientCheckError(name, error, rtol)
        errors.append(error)
    return errors
