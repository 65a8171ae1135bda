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
import logging
import warnings

import dask
import numpy as np

from ..noise import NoiseLevel, add_rician, noise_sweep_levels
from ..utils import derive_seed, seeded_rng
from .patches import PatchConfig, PatchSet, gather_patches, grid_size

LOG = logging.getLogger("mcdenoise")


class Regime:
    """
    Which noise levels a training set is corrupted at.

    ``specific`` trains a model for one level; ``general`` pools every level
    of a list (the evaluation sweep by default) so that the model needs no
    noise estimate at inference time.
    """

    SPECIFIC = "specific"
    GENERAL = "general"

    def __init__(self, kind, levels):
        if kind not in (self.SPECIFIC, self.GENERAL):
            raise ValueError(f"unknown regime kind {kind!r}")
        levels = [float(p) for p in levels]
        if not levels:
            raise ValueError("a regime needs at least one noise level")
        for p in levels:
            if not 0 < p <= 100:
                raise ValueError(f"noise level must lie in (0, 100] percent, got {p}")
        if kind == self.SPECIFIC and len(levels) != 1:
            raise ValueError("a specific regime has exactly one noise level")
        self.kind = kind
        self.levels = levels

    @classmethod
    def specific(cls, percent):
        return cls(cls.SPECIFIC, [percent])

    @classmethod
    def general(cls, levels=None):
        return cls(cls.GENERAL, noise_sweep_levels() if levels is None else levels)

    @classmethod
    def parse(cls, text):
        """Parse ``specific:<p>``, ``general`` or ``general:<p>,<p>,...``."""
        kind, _, rest = text.strip().partition(":")
        kind = kind.strip().lower()
        try:
            values = [float(v) for v in rest.split(",") if v.strip()]
        except ValueError as e:
            raise ValueError(f"bad noise levels in regime {text!r}") from e
        if kind == cls.SPECIFIC:
            if len(values) != 1:
                raise ValueError(f"expected 'specific:<percent>', got {text!r}")
            return cls.specific(values[0])
        if kind == cls.GENERAL:
            return cls.general(values or None)
        raise ValueError(f"regime must be 'specific:<p>' or 'general[:p,...]', got {text!r}")

    def __str__(self):
        levels = ",".join(f"{p:g}" for p in self.levels)
        if self.kind == self.SPECIFIC:
            return f"specific:{levels}"
        return f"general:{levels}"

    def __eq__(self, other):
        return isinstance(other, Regime) and (self.kind, self.levels) == (other.kind, other.levels)

    def __repr__(self):
        return f"Regime({str(self)!r})"


def _noisy_patches(clean, percent, indices, config, noise_seed):
    level = NoiseLevel.from_volume(percent, clean, config.reference_intensity)
    noisy = add_rician(clean, level, noise_seed)
    return gather_patches(
        noisy,
        clean,
        indices,
        config.patch_size,
        config.stride,
        config.stack_depth,
        level_percent=percent,
    )


def build_training_set(clean_volumes, regime, config=None, seed=0, scheduler=None):
    """
    Noise every clean volume once per level of ``regime``, pool the
    sliding-window grids of all (volume, level) copies and keep
    ``config.target_count`` windows drawn uniformly with ``seed``.

    Only the kept windows are cut. Each (volume, level) copy is noised and
    gathered by its own ``dask.delayed`` task with a seed derived from
    ``(seed, volume, level)``, so the result does not depend on the
    scheduler.

    Parameters
    -----------
    clean_volumes : list of Volume
    regime : Regime
    config : PatchConfig, optional
    seed : int
    scheduler : str, optional
        Dask scheduler used to run the per-copy tasks.

    Returns
    -------
    PatchSet
        Ordered by volume, then level, then grid position.
    """
    clean_volumes = list(clean_volumes)
    if not clean_volumes:
        raise ValueError("build_training_set needs at least one clean volume")
    config = config or PatchConfig()

    groups = []
    for v, volume in enumerate(clean_volumes):
        size = grid_size(volume.dims, config.patch_size, config.stride)
        for k, percent in enumerate(regime.levels):
            groups.append((v, k, percent, size))
    sizes = np.array([g[3] for g in groups], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    if total < config.target_count:
        warnings.warn(
            f"the patch grid holds only {total} windows, fewer than the "
            f"target of {config.target_count}; keeping all of them"
        )
        chosen = np.arange(total)
    else:
        chosen = np.sort(seeded_rng(seed).choice(total, size=config.target_count, replace=False))

    owner = np.searchsorted(offsets, chosen, side="right") - 1
    tasks = []
    for g, (v, k, percent, _) in enumerate(groups):
        local = chosen[owner == g] - offsets[g]
        if len(local) == 0:
            continue
        task = dask.delayed(_noisy_patches)(
            clean_volumes[v], percent, local, config, derive_seed(seed, v, k)
        )
        tasks.append(task)

    parts = dask.compute(*tasks, scheduler=scheduler)
    patches = PatchSet.concat(parts)
    LOG.info(
        "built %d %s-regime patches from %d volumes at levels %s",
        len(patches),
        regime.kind,
        len(clean_volumes),
        ",".join(f"{p:g}" for p in regime.levels),
    )
    return patches
