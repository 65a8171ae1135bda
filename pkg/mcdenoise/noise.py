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
import numpy as np
from nvtx import annotate

from .io.volume import PEAK_INTENSITY, Volume


def noise_sweep_levels():
    """Noise levels (percent) of the evaluation sweep: 1% to 15% in steps of 2%."""
    return list(range(1, 16, 2))


class NoiseLevel:
    """
    A Rician noise level.

    Parameters
    -----------
    percent : float in (0, 100]
    sigma : float > 0
        Standard deviation of each of the two Gaussian components, i.e.
        ``percent / 100 * reference_intensity``.
    """

    def __init__(self, percent, sigma):
        if not 0 < percent <= 100:
            raise ValueError(f"noise level must lie in (0, 100] percent, got {percent}")
        if not sigma > 0:
            raise ValueError(f"noise sigma must be positive, got {sigma}")
        self.percent = float(percent)
        self.sigma = float(sigma)

    @classmethod
    def from_volume(cls, percent, volume, reference_intensity=None):
        """``reference_intensity`` defaults to the maximum of the noise-free ``volume``."""
        if reference_intensity is None:
            reference_intensity = float(volume.data.max())
        if not reference_intensity > 0:
            raise ValueError("reference intensity must be positive (is the volume all zeros?)")
        return cls(percent, percent / 100.0 * reference_intensity)

    @classmethod
    def from_sigma(cls, sigma, reference_intensity=PEAK_INTENSITY):
        return cls(100.0 * sigma / reference_intensity, sigma)

    def __repr__(self):
        return f"NoiseLevel(percent={self.percent:g}, sigma={self.sigma:g})"


@annotate("add_rician", color="red", domain="mcd_python")
def add_rician(volume, level, seed):
    """Corrupt ``volume`` with Rician noise.

    Each voxel becomes ``sqrt((x + n1)^2 + n2^2)`` with ``n1, n2`` independent
    zero-mean Gaussians of standard deviation ``level.sigma``. The Gaussians
    come from a Box-Muller transform of two uniforms per voxel drawn from a
    PCG64 generator seeded with ``seed``, consumed in x-fastest voxel order,
    so the result is fixed bit-exactly by the seed.
    """
    if not level.sigma > 0:
        raise ValueError(f"noise sigma must be positive, got {level.sigma}")
    x = volume.voxels.astype(np.float64)
    if np.any(x < 0):
        raise ValueError("Rician corruption expects nonnegative intensities")

    rng = np.random.Generator(np.random.PCG64(seed))
    uniforms = rng.random((x.size, 2))
    radius = level.sigma * np.sqrt(-2.0 * np.log1p(-uniforms[:, 0]))
    angle = 2.0 * np.pi * uniforms[:, 1]
    noisy = np.hypot(x + radius * np.cos(angle), radius * np.sin(angle))
    return Volume.from_voxels(
        noisy, volume.dims, intensity_scale=volume.intensity_scale, affine=volume.affine
    )
