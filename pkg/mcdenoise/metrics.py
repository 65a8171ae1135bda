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
import math
from collections import namedtuple

import dask
import numpy as np
from nvtx import annotate

from .io.volume import PEAK_INTENSITY, Volume
from .noise import NoiseLevel, add_rician, noise_sweep_levels
from .ops import ShapeMismatchError
from .utils import derive_seed

SSIM_C1 = (0.01 * PEAK_INTENSITY) ** 2
SSIM_C2 = (0.03 * PEAK_INTENSITY) ** 2
SSIM_WINDOW = 3

# planes of axis 0 handled per pass in ssim_global
_SLAB = 2

SweepRow = namedtuple("SweepRow", ["volume", "level_percent", "method", "psnr_db", "ssim_global"])


def _as_array(volume):
    if isinstance(volume, Volume):
        return volume.data.astype(np.float64)
    return np.asarray(volume, dtype=np.float64)


def _pair(reference, test):
    x, y = _as_array(reference), _as_array(test)
    if x.shape != y.shape:
        raise ShapeMismatchError("test volume", x.shape, y.shape)
    return x, y


def rmse(reference, test):
    x, y = _pair(reference, test)
    return math.sqrt(np.mean(np.square(x - y)))


def _psnr_from_rmse(error):
    if error == 0:
        return math.inf
    return 20.0 * math.log10(PEAK_INTENSITY / error)


@annotate("psnr", color="orange", domain="mcd_python")
def psnr(reference, test):
    """``20 log10(255 / RMSE)`` in dB; ``math.inf`` when the volumes are identical."""
    return _psnr_from_rmse(rmse(reference, test))


def _ssim_formula(mx, my, vx, vy, cxy, c1, c2):
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim_local(x_window, y_window, c1=SSIM_C1, c2=SSIM_C2):
    """SSIM of two complete windows, with population (divide by count) statistics."""
    x = np.asarray(x_window, dtype=np.float64).ravel()
    y = np.asarray(y_window, dtype=np.float64).ravel()
    if x.size != SSIM_WINDOW ** 3 or y.size != x.size:
        raise ShapeMismatchError("SSIM windows", (SSIM_WINDOW ** 3,), (x.size, y.size))
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy, cxy = np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy)
    return float(_ssim_formula(mx, my, vx, vy, cxy, c1, c2))


def _ssim_map(x, y, c1, c2):
    """Local SSIM at every fully interior window position of two equal blocks."""
    shape = (SSIM_WINDOW,) * 3
    axes = (-3, -2, -1)
    wx = np.lib.stride_tricks.sliding_window_view(x, shape)
    wy = np.lib.stride_tricks.sliding_window_view(y, shape)
    mx = wx.mean(axis=axes)
    my = wy.mean(axis=axes)
    dx = wx - mx[..., None, None, None]
    dy = wy - my[..., None, None, None]
    vx = np.mean(dx * dx, axis=axes)
    vy = np.mean(dy * dy, axis=axes)
    cxy = np.mean(dx * dy, axis=axes)
    return _ssim_formula(mx, my, vx, vy, cxy, c1, c2)


@annotate("ssim_global", color="orange", domain="mcd_python")
def ssim_global(reference, test, c1=SSIM_C1, c2=SSIM_C2):
    """Mean local SSIM over all 3x3x3 windows lying fully inside the volumes (stride 1)."""
    x, y = _pair(reference, test)
    if x.ndim != 3 or min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs every dimension >= {SSIM_WINDOW}, got {x.shape}")
    positions = x.shape[0] - SSIM_WINDOW + 1
    partial = []
    for start in range(0, positions, _SLAB):
        stop = min(start + _SLAB, positions) + SSIM_WINDOW - 1
        partial.append(float(np.sum(_ssim_map(x[start:stop], y[start:stop], c1, c2))))
    count = np.prod([n - SSIM_WINDOW + 1 for n in x.shape])
    return math.fsum(partial) / float(count)


class MetricReport:
    """PSNR (dB), global SSIM and RMSE of a test volume against its reference."""

    def __init__(self, psnr_db, ssim_global, rmse):
        self.psnr_db = psnr_db
        self.ssim_global = ssim_global
        self.rmse = rmse

    def to_dict(self):
        return {"psnr_db": self.psnr_db, "ssim_global": self.ssim_global, "rmse": self.rmse}

    def __repr__(self):
        return (
            f"MetricReport(psnr_db={self.psnr_db:.4f}, ssim_global={self.ssim_global:.6f}, "
            f"rmse={self.rmse:.6g})"
        )


def evaluate(reference, test, c1=SSIM_C1, c2=SSIM_C2):
    error = rmse(reference, test)
    return MetricReport(_psnr_from_rmse(error), ssim_global(reference, test, c1, c2), error)


def _score_level(index, clean, percent, denoisers, noise_seed, reference_intensity, c1, c2):
    level = NoiseLevel.from_volume(percent, clean, reference_intensity)
    noisy = add_rician(clean, level, noise_seed)
    candidates = [("noisy", noisy)]
    candidates += [(name, fn(noisy)) for name, fn in denoisers.items()]
    rows = []
    for method, volume in candidates:
        report = evaluate(clean, volume, c1, c2)
        rows.append(SweepRow(index, percent, method, report.psnr_db, report.ssim_global))
    return rows


def noise_sweep(
    clean_volumes,
    denoisers,
    levels=None,
    seed=0,
    reference_intensity=None,
    c1=SSIM_C1,
    c2=SSIM_C2,
    scheduler=None,
):
    """
    Score the noisy input and every denoiser over a range of noise levels.

    Each clean volume is corrupted once per level, with a seed derived from
    ``(seed, volume, level)``, and each (volume, level) pair is scored by its
    own ``dask.delayed`` task.

    Parameters
    -----------
    clean_volumes : list of Volume
        Noise-free references on the 0-255 scale.
    denoisers : dict of str to callable
        Maps a method name to a function from a noisy Volume to its estimate.
    levels : list of float, optional
        Noise levels in percent; the standard sweep by default.

    Returns
    -------
    list of SweepRow
        Ordered by volume, level, then method (``noisy`` first).
    """
    levels = noise_sweep_levels() if levels is None else list(levels)
    tasks = []
    for v, clean in enumerate(clean_volumes):
        for k, percent in enumerate(levels):
            tasks.append(
                dask.delayed(_score_level)(
                    v,
                    clean,
                    percent,
                    dict(denoisers),
                    derive_seed(seed, v, k),
                    reference_intensity,
                    c1,
                    c2,
                )
            )
    results = dask.compute(*tasks, scheduler=scheduler)
    return [row for rows in results for row in rows]


def psnr_pivot(rows):
    """Mean PSNR per ``(method, level_percent)`` over volumes, as nested dicts."""
    sums = {}
    for row in rows:
        key = (row.method, row.level_percent)
        total, count = sums.get(key, (0.0, 0))
        sums[key] = (total + row.psnr_db, count + 1)
    table = {}
    for (method, level), (total, count) in sums.items():
        table.setdefault(method, {})[level] = total / count
    return table
