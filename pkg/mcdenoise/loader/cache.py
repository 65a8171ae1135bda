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
"""On-disk patch cache.

Building a training set noises and cuts every volume; the cache stores the
result so later runs can skip that. The binary file is a flat sequence of
fixed-size little-endian float32 records, one per sample::

    noisy_stack   [P, P, D]
    clean_center  [P, P]
    level_percent scalar

and a JSON sidecar at ``<path>.json`` gives the record layout::

    {
      "format": "mcdenoise-patches",
      "version": 1,
      "count": N,
      "patch_size": P,
      "stack_depth": D,
      "fields": [["noisy_stack", [P, P, D]], ["clean_center", [P, P]], ["level_percent", []]],
      "provenance": {...} or null
    }

``provenance`` records how the set was built (regime, patch settings, seed,
source volumes); :func:`patch_cache_matches` compares it with a new request.
"""
import json
import logging

import fsspec
import numpy as np
from fsspec.core import get_fs_token_paths

from ..io.raw import sidecar_path
from .patches import PatchSet

LOG = logging.getLogger("mcdenoise")

CACHE_FORMAT = "mcdenoise-patches"
CACHE_VERSION = 1


def _record_dtype(patch_size, stack_depth):
    return np.dtype(
        [
            ("noisy_stack", "<f4", (patch_size, patch_size, stack_depth)),
            ("clean_center", "<f4", (patch_size, patch_size)),
            ("level_percent", "<f4"),
        ]
    )


def _as_json(value):
    return None if value is None else json.loads(json.dumps(value))


def save_patch_cache(patches, path, provenance=None):
    dtype = _record_dtype(patches.patch_size, patches.stack_depth)
    records = np.empty(len(patches), dtype=dtype)
    records["noisy_stack"] = patches.noisy
    records["clean_center"] = patches.clean
    records["level_percent"] = patches.levels
    meta = {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "count": len(patches),
        "patch_size": patches.patch_size,
        "stack_depth": patches.stack_depth,
        "fields": [[name, list(dtype[name].shape)] for name in dtype.names],
        "provenance": _as_json(provenance),
    }
    with fsspec.open(str(path), "wb") as f:
        f.write(records.tobytes())
    with fsspec.open(sidecar_path(path), "w") as f:
        json.dump(meta, f, indent=2)
    LOG.info("wrote %d patches to %s", len(patches), path)


def load_patch_cache(path):
    with fsspec.open(sidecar_path(path), "r") as f:
        meta = json.load(f)
    if meta.get("format") != CACHE_FORMAT or meta.get("version") != CACHE_VERSION:
        raise ValueError(f"{sidecar_path(path)} is not a version {CACHE_VERSION} patch cache")
    dtype = _record_dtype(int(meta["patch_size"]), int(meta["stack_depth"]))
    fields = [[name, list(dtype[name].shape)] for name in dtype.names]
    if meta.get("fields") != fields:
        raise ValueError(f"unexpected patch cache fields {meta.get('fields')}")
    count = int(meta["count"])
    with fsspec.open(str(path), "rb") as f:
        buf = f.read()
    if len(buf) != count * dtype.itemsize:
        raise ValueError(
            f"{path} holds {len(buf)} bytes, {count} records need {count * dtype.itemsize}"
        )
    records = np.frombuffer(buf, dtype=dtype, count=count)
    return PatchSet(records["noisy_stack"], records["clean_center"], records["level_percent"])


def patch_cache_matches(path, provenance):
    """True when a cache exists at ``path`` and was built with ``provenance``."""
    fs = get_fs_token_paths(str(path))[0]
    if not fs.exists(str(path)) or not fs.exists(sidecar_path(path)):
        return False
    with fsspec.open(sidecar_path(path), "r") as f:
        meta = json.load(f)
    stored = meta.get("provenance")
    if stored != _as_json(provenance):
        LOG.warning("patch cache %s was built with %s, not %s", path, stored, provenance)
        return False
    return True
