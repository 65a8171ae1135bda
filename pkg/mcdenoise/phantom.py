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
"""Synthetic head-like phantoms: nested ellipsoids at graded intensities on the
0-255 scale, used as noise-free ground truth when no scanner data is at hand."""
import numpy as np

from .io.volume import PEAK_INTENSITY, Volume
from .utils import derive_seed, seeded_rng

# (relative semi-axis scale, intensity) of the fixed outer shells
SHELLS = [(0.92, 70.0), (0.78, 150.0), (0.55, 110.0)]
INCLUSION_LEVELS = [PEAK_INTENSITY, 200.0, 40.0, 180.0, 90.0]


def _ellipsoid_mask(grid, center, axes):
    dist = sum(((g - c) / a) ** 2 for g, c, a in zip(grid, center, axes))
    return dist <= 1.0


def make_phantom(shape=(64, 64, 16), seed=0, inclusions=4):
    """One phantom volume of ``shape``; shell jitter and inclusions follow ``seed``.

    The background is 0 and the first inclusion is at the 255 peak, so the
    volume spans the full 0-255 range.
    """
    if len(shape) != 3 or min(shape) < 1:
        raise ValueError(f"phantom shape needs three positive extents, got {shape}")
    rng = seeded_rng(seed)
    ticks = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in shape]
    grid = np.meshgrid(*ticks, indexing="ij")
    data = np.zeros(shape, dtype=np.float64)
    center = rng.uniform(-0.04, 0.04, size=3)
    for scale, value in SHELLS:
        axes = scale * rng.uniform(0.93, 1.0, size=3)
        data[_ellipsoid_mask(grid, center, axes)] = value
    for i in range(inclusions):
        at = center + rng.uniform(-0.3, 0.3, size=3)
        axes = rng.uniform(0.08, 0.22, size=3)
        axes[2] = max(axes[2], 2.0 / max(shape[2] - 1, 1))
        data[_ellipsoid_mask(grid, at, axes)] = INCLUSION_LEVELS[i % len(INCLUSION_LEVELS)]
    if data.max() < PEAK_INTENSITY:
        data[tuple(n // 2 for n in shape)] = PEAK_INTENSITY
    return Volume(data, intensity_scale=(0.0, PEAK_INTENSITY))


def make_phantoms(count, shape=(64, 64, 16), seed=0):
    return [make_phantom(shape, seed=derive_seed(seed, i)) for i in range(count)]
