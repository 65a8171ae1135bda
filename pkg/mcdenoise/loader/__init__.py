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
from .backend import PatchLoader
from .cache import load_patch_cache, patch_cache_matches, save_patch_cache
from .patches import (
    PatchConfig,
    PatchSample,
    PatchSet,
    extract_patches,
    gather_patches,
    grid_shape,
    grid_size,
    make_stack,
)
from .regime import Regime, build_training_set
