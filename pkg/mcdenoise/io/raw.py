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
"""Raw volume format.

A ``.raw`` file holds the voxels as little-endian float32, x-fastest, with no
header. A JSON sidecar at ``<path>.json`` describes them::

    {
      "format": "mcdenoise-raw",
      "version": 1,
      "dims": [X, Y, Z],
      "dtype": "<f4",
      "order": "x-fastest",
      "intensity_scale": [min, max] or null
    }
"""
import json

import fsspec
import numpy as np

from .volume import Volume

RAW_FORMAT = "mcdenoise-raw"
RAW_VERSION = 1


def sidecar_path(path):
    return str(path) + ".json"


def write_raw(volume, path):
    meta = {
        "format": RAW_FORMAT,
        "version": RAW_VERSION,
        "dims": list(volume.dims),
        "dtype": "<f4",
        "order": "x-fastest",
        "intensity_scale": None
        if volume.intensity_scale is None
        else list(volume.intensity_scale),
    }
    with fsspec.open(str(path), "wb") as f:
        f.write(volume.voxels.astype("<f4").tobytes())
    with fsspec.open(sidecar_path(path), "w") as f:
        json.dump(meta, f, indent=2)


def read_raw(path):
    with fsspec.open(sidecar_path(path), "r") as f:
        meta = json.load(f)
    if meta.get("format") != RAW_FORMAT or meta.get("version") != RAW_VERSION:
        raise ValueError(f"{sidecar_path(path)} is not a version {RAW_VERSION} raw sidecar")
    if meta.get("dtype") != "<f4" or meta.get("order") != "x-fastest":
        raise ValueError(f"unsupported raw layout {meta.get('dtype')}/{meta.get('order')}")
    dims = tuple(int(d) for d in meta["dims"])
    with fsspec.open(str(path), "rb") as f:
        buf = f.read()
    count = int(np.prod(dims))
    if len(buf) != 4 * count:
        raise ValueError(f"{path} holds {len(buf)} bytes, dims {dims} need {4 * count}")
    voxels = np.frombuffer(buf, dtype="<f4", count=count)
    return Volume.from_voxels(voxels, dims, intensity_scale=meta.get("intensity_scale"))
