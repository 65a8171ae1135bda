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

from .operator import Operator, check_shape


@annotate("relu_forward", color="orange", domain="mcd_python")
def relu_forward(inputs):
    return np.maximum(inputs, 0).astype(inputs.dtype, copy=False)


@annotate("relu_backward", color="orange", domain="mcd_python")
def relu_backward(inputs, grad_out):
    # the subgradient at exactly 0 is taken as 0
    check_shape("grad_out", grad_out, inputs.shape)
    return np.where(inputs > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


class ReLU(Operator):
    """Elementwise ``max(0, x)``."""

    def describe(self):
        return "relu"

    def forward(self, inputs, mode=None):
        return relu_forward(inputs), inputs

    def backward(self, cache, grad_out):
        return relu_backward(cache, grad_out), OrderedDict()
