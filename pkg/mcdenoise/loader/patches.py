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

from ..io.volume import Volume
from ..ops import ShapeMismatchError
from ..utils import Config, seeded_rng


class PatchConfig(Config):
    """
    How training patches are cut from volumes.

    Parameters
    -----------
    patch_size : int
        Edge length of the square in-plane window.
    stride : int
        Step of the sliding window along both in-plane axes.
    target_count : int
        Number of samples kept after uniform subsampling of the window grid.
    stack_depth : int
        Odd number of neighbouring slices stacked as channels.
    reference_intensity : float, optional
        Intensity that "p percent noise" refers to. ``None`` uses each clean
        volume's maximum.
    """

    _defaults = {
        "patch_size": 60,
        "stride": 20,
        "target_count": 150000,
        "stack_depth": 5,
        "reference_intensity": None,
    }

    def validate(self):
        for name in ("patch_size", "stride", "target_count", "stack_depth"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive count, got {getattr(self, name)}")
            setattr(self, name, int(getattr(self, name)))
        if self.stack_depth % 2 == 0:
            raise ValueError(f"stack_depth must be odd, got {self.stack_depth}")
        if self.reference_intensity is not None:
            self.reference_intensity = float(self.reference_intensity)
            if not self.reference_intensity > 0:
                raise ValueError("reference_intensity must be positive")


def make_stack(volume, s, depth=5):
    """Slices ``s - depth//2 .. s + depth//2`` of ``volume`` as an ``[H, W, depth]``
    array. Indices outside the volume clamp to the nearest valid slice."""
    if depth < 1 or depth % 2 == 0:
        raise ValueError(f"stack depth must be a positive odd count, got {depth}")
    num_slices = volume.num_slices
    if not 0 <= s < num_slices:
        raise IndexError(f"slice {s} out of range for a volume of {num_slices} slices")
    half = depth // 2
    indices = np.clip(np.arange(s - half, s + half + 1), 0, num_slices - 1)
    return np.ascontiguousarray(volume.data[:, :, indices])


def grid_positions(extent, patch, stride):
    """Window origins along one axis: ``floor((extent - patch) / stride) + 1`` of them."""
    if patch > extent:
        raise ValueError(f"patch size {patch} is larger than the slice extent {extent}")
    return range(0, extent - patch + 1, stride)


def grid_shape(dims, patch, stride):
    """``(slices, rows, cols)`` of the sliding-window grid over a volume."""
    x, y, z = dims
    return z, len(grid_positions(x, patch, stride)), len(grid_positions(y, patch, stride))


def grid_size(dims, patch, stride):
    return int(np.prod(grid_shape(dims, patch, stride)))


def subsample(total, target_count, seed):
    """Sorted flat grid indices: all of them, or ``target_count`` drawn uniformly
    without replacement when the grid holds more."""
    if target_count is None or total <= target_count:
        return np.arange(total)
    rng = seeded_rng(seed)
    return np.sort(rng.choice(total, size=target_count, replace=False))


class PatchSample:
    """One training unit: a noisy slice stack and the clean center slice under it."""

    def __init__(self, noisy_stack, clean_center, level_percent):
        self.noisy_stack = noisy_stack
        self.clean_center = clean_center
        self.level_percent = float(level_percent)

    @property
    def noisy_center(self):
        return self.noisy_stack[..., self.noisy_stack.shape[-1] // 2]

    @property
    def residual(self):
        return self.noisy_center - self.clean_center

    def __repr__(self):
        return f"PatchSample(shape={self.noisy_stack.shape}, level_percent={self.level_percent:g})"


class PatchSet:
    """
    Array-backed sequence of :class:`PatchSample`.

    Parameters
    -----------
    noisy : ndarray [N, P, P, D]
    clean : ndarray [N, P, P]
    levels : ndarray [N]
        Noise level (percent) each sample was corrupted at.
    """

    def __init__(self, noisy, clean, levels):
        noisy = np.asarray(noisy, dtype=np.float32)
        clean = np.asarray(clean, dtype=np.float32)
        levels = np.asarray(levels, dtype=np.float32)
        if noisy.ndim != 4:
            raise ShapeMismatchError("noisy stacks (rank 4 [N, P, P, D])", None, noisy.shape)
        if clean.shape != noisy.shape[:3]:
            raise ShapeMismatchError("clean centers", noisy.shape[:3], clean.shape)
        if levels.shape != noisy.shape[:1]:
            raise ShapeMismatchError("levels", noisy.shape[:1], levels.shape)
        self.noisy = noisy
        self.clean = clean
        self.levels = levels

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        if not samples:
            raise ValueError("cannot build a PatchSet from no samples")
        return cls(
            np.stack([s.noisy_stack for s in samples]),
            np.stack([s.clean_center for s in samples]),
            np.array([s.level_percent for s in samples]),
        )

    @classmethod
    def concat(cls, patch_sets):
        patch_sets = list(patch_sets)
        if not patch_sets:
            raise ValueError("cannot concatenate an empty list of PatchSets")
        return cls(
            np.concatenate([p.noisy for p in patch_sets]),
            np.concatenate([p.clean for p in patch_sets]),
            np.concatenate([p.levels for p in patch_sets]),
        )

    @property
    def patch_size(self):
        return self.noisy.shape[1]

    @property
    def stack_depth(self):
        return self.noisy.shape[3]

    def __len__(self):
        return self.noisy.shape[0]

    def __getitem__(self, index):
        if isinstance(index, slice):
            return PatchSet(self.noisy[index], self.clean[index], self.levels[index])
        return PatchSample(self.noisy[index], self.clean[index], self.levels[index])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def batch(self, indices):
        """``(stacks [B,P,P,D], noisy_center [B,P,P,1], clean_center [B,P,P,1])``."""
        indices = np.asarray(indices)
        stacks = self.noisy[indices]
        c = self.stack_depth // 2
        return stacks, stacks[..., c : c + 1].copy(), self.clean[indices][..., None]

    def __repr__(self):
        return f"PatchSet(len={len(self)}, patch_size={self.patch_size}, depth={self.stack_depth})"


def gather_patches(noisy, clean, indices, patch, stride, depth=5, level_percent=np.nan):
    """Cut the windows named by flat grid ``indices`` out of ``noisy`` and ``clean``.

    A flat index enumerates ``(slice, row, col)`` of :func:`grid_shape` in C
    order. Each slice stack is built once however many windows it feeds.
    """
    if noisy.dims != clean.dims:
        raise ShapeMismatchError("noisy/clean volume dims", clean.dims, noisy.dims)
    shape = grid_shape(noisy.dims, patch, stride)
    indices = np.asarray(indices, dtype=np.int64)
    slices, rows, cols = np.unravel_index(indices, shape)

    out_noisy = np.empty((len(indices), patch, patch, depth), dtype=np.float32)
    out_clean = np.empty((len(indices), patch, patch), dtype=np.float32)
    current, stack, clean_slice = None, None, None
    for i in np.argsort(slices, kind="stable"):
        s = int(slices[i])
        if s != current:
            stack = make_stack(noisy, s, depth)
            clean_slice = clean.data[:, :, s]
            current = s
        r0, c0 = int(rows[i]) * stride, int(cols[i]) * stride
        out_noisy[i] = stack[r0 : r0 + patch, c0 : c0 + patch]
        out_clean[i] = clean_slice[r0 : r0 + patch, c0 : c0 + patch]
    levels = np.full(len(indices), level_percent, dtype=np.float32)
    return PatchSet(out_noisy, out_clean, levels)


@annotate("extract_patches", color="green", domain="mcd_python")
def extract_patches(
    noisy,
    clean,
    patch=60,
    target_count=None,
    stride=20,
    seed=0,
    depth=5,
    level_percent=np.nan,
):
    """
    Slide a ``patch x patch`` window with step ``stride`` over every slice
    stack of ``noisy`` and the matching slice of ``clean``.

    When the grid holds more than ``target_count`` windows, exactly
    ``target_count`` of them are kept, drawn uniformly with ``seed``.

    Returns
    -------
    PatchSet
    """
    if not isinstance(noisy, Volume) or not isinstance(clean, Volume):
        raise TypeError("extract_patches expects two Volume objects")
    if noisy.dims != clean.dims:
        raise ShapeMismatchError("noisy/clean volume dims", clean.dims, noisy.dims)
    total = grid_size(noisy.dims, patch, stride)
    indices = subsample(total, target_count, seed)
    return gather_patches(noisy, clean, indices, patch, stride, depth, level_percent)
