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
import os

import numpy as np
import pytest

from mcdenoise.io import Volume
from mcdenoise.network import build_model
from mcdenoise.phantom import make_phantom, make_phantoms

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def coordinate_volume(dims):
    """Voxel value encodes its own position: ``x + 100 * y + 10000 * z`` (exact in float32)."""
    x, y, z = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    return Volume(x + 100 * y + 10000 * z)


def decode_coordinates(values):
    values = np.asarray(values).astype(np.int64)
    return values % 100, (values // 100) % 100, values // 10000


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture(scope="session")
def datadir():
    return DATA_DIR


@pytest.fixture(scope="session")
def phantom():
    return make_phantom((32, 32, 8), seed=0)


@pytest.fixture(scope="session")
def training_phantoms():
    return make_phantoms(3, (64, 64, 12), seed=1)


@pytest.fixture(scope="session")
def heldout_phantom():
    return make_phantom((64, 64, 12), seed=99)


@pytest.fixture
def tiny_model():
    return build_model(in_channels=5, width=2, depth=3, seed=0, input_scale=1.0)
