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

# flake8: noqa
from .batchnorm import (
    BatchNorm,
    BatchNormCache,
    BatchNormParams,
    batchnorm_backward,
    batchnorm_forward,
)
from .conv import Conv2d, ConvParams, conv2d_mc_backward, conv2d_mc_forward
from .operator import (
    DegenerateBatchError,
    Mode,
    Operator,
    ShapeMismatchError,
    as_tensor,
    check_shape,
)
from .relu import ReLU, relu_backward, relu_forward
