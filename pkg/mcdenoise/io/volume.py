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

PEAK_INTENSITY = 255.0


class Volume:
    """
    A 3D scalar field.

    ``data`` is a read-only float32 array of shape ``(X, Y, Z)``; slices are
    taken along the last axis. On disk voxels are stored x-fastest, which is
    the Fortran order of ``data`` (see :attr:`voxels`).

    Parameters
    -----------
    data : array-like of shape (X, Y, Z)
    intensity_scale : tuple of (original_min, original_max), default None
        Set by :func:`normalize` so that :func:`denormalize` can undo it.
    affine : ndarray (4, 4), default None
        Voxel-to-world transform as read from the file; carried along but not
        used for computation.
    """

    def __init__(self, data, intensity_scale=None, affine=None):
        data = np.array(data, dtype=np.float32, order="C")
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"a volume needs three positive extents, got shape {data.shape}")
        data.flags.writeable = False
        self.data = data
        self.intensity_scale = (
            None if intensity_scale is None else tuple(float(v) for v in intensity_scale)
        )
        self.affine = np.eye(4) if affine is None else np.asarray(affine, dtype=np.float64)

    @classmethod
    def from_voxels(cls, voxels, dims, intensity_scale=None, affine=None):
        voxels = np.asarray(voxels, dtype=np.float32)
        dims = tuple(int(d) for d in dims)
        if voxels.size != int(np.prod(dims)):
            raise ValueError(f"{voxels.size} voxels do not fill dims {dims}")
        return cls(voxels.reshape(dims, order="F"), intensity_scale=intensity_scale, affine=affine)

    @property
    def dims(self):
        return tuple(self.data.shape)

    @property
    def voxels(self):
        """Flat x-fastest voxel array."""
        return self.data.ravel(order="F")

    @property
    def num_slices(self):
        return self.data.shape[2]

    def with_data(self, data):
        """A new volume with the same scale and affine but different voxels."""
        return Volume(data, intensity_scale=self.intensity_scale, affine=self.affine)

    def __repr__(self):
        return f"Volume(dims={self.dims}, intensity_scale={self.intensity_scale})"


def normalize(volume, scale=None):
    """Map intensities affinely from ``[min, max]`` onto ``[0, 255]``.

    ``scale`` fixes ``(min, max)`` instead of taking it from ``volume``, which
    puts a second volume on the same axis as a reference one.
    """
    data = volume.data.astype(np.float64)
    if scale is None:
        lo, hi = float(data.min()), float(data.max())
    else:
        lo, hi = (float(v) for v in scale)
    if not hi > lo:
        raise ValueError(f"cannot normalize a volume with constant intensity {lo}")
    out = (data - lo) * (PEAK_INTENSITY / (hi - lo))
    return Volume(out, intensity_scale=(lo, hi), affine=volume.affine)


def denormalize(volume):
    """Invert :func:`normalize` using ``volume.intensity_scale``."""
    if volume.intensity_scale is None:
        raise ValueError("volume carries no intensity_scale to undo")
    lo, hi = volume.intensity_scale
    out = volume.data.astype(np.float64) * ((hi - lo) / PEAK_INTENSITY) + lo
    return Volume(out, intensity_scale=None, affine=volume.affine)


def to_intensity_units(values, intensity_scale):
    """Rescale a difference map (e.g. a residual) from the 0-255 axis back to
    original intensity units. Offsets cancel in differences, only the slope applies."""
    if intensity_scale is None:
        return np.asarray(values, dtype=np.float32)
    lo, hi = intensity_scale
    return (np.asarray(values, dtype=np.float64) * ((hi - lo) / PEAK_INTENSITY)).astype(np.float32)
