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
"""Binary model file.

Layout, all little-endian::

    offset  size  field
    0       4     magic "MCDN"
    4       4     format version (u32)
    8       4     depth (u32)
    12      4     width (u32)
    16      4     in_channels (u32)
    20      4     out_channels (u32)
    24      8     input_scale (f64)
    32      8     batch-norm eps (f64)
    40      8     batch-norm momentum (f64)
    48      ...   parameter blobs, float32

Blobs follow the block order of the model; each block contributes its conv
kernels [K,3,3,Cin] and bias [K], then (middle blocks only) gamma, beta,
running_mean and running_var, each [width].
"""
import logging

import fsspec
import numpy as np

LOG = logging.getLogger("mcdenoise")

MAGIC = b"MCDN"
FORMAT_VERSION = 1

METADATA_DTYPE = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("depth", "<u4"),
        ("width", "<u4"),
        ("in_channels", "<u4"),
        ("out_channels", "<u4"),
        ("input_scale", "<f8"),
        ("bn_eps", "<f8"),
        ("bn_momentum", "<f8"),
    ]
)


class ModelFormatError(ValueError):
    """A model file failed validation at byte ``offset``."""

    def __init__(self, offset, message):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")


def blob_count(depth, width, in_channels, out_channels):
    """Number of float32 values stored after the metadata block for a model of this shape."""
    first = width * 9 * in_channels + width
    middle = (depth - 2) * (width * 9 * width + width + 4 * width)
    last = out_channels * 9 * width + out_channels
    return first + middle + last


def save_model(model, path):
    meta = np.zeros((), dtype=METADATA_DTYPE)
    meta["magic"] = MAGIC
    meta["version"] = FORMAT_VERSION
    meta["depth"] = model.depth
    meta["width"] = model.width
    meta["in_channels"] = model.in_channels
    meta["out_channels"] = model.out_channels
    meta["input_scale"] = model.input_scale
    meta["bn_eps"] = model.bn_eps
    meta["bn_momentum"] = model.bn_momentum
    with fsspec.open(str(path), "wb") as f:
        f.write(meta.tobytes())
        for value in model.state_dict().values():
            f.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    LOG.info("saved model (%d parameters) to %s", model.num_parameters(), path)


def load_model(path):
    """Read a model written by :func:`save_model`.

    Raises :class:`ModelFormatError` on a bad magic, unknown version,
    truncation or trailing bytes; no partially filled model is returned. The
    file size is checked against the header's layer layout before anything
    is allocated.
    """
    from ..network import build_model

    with fsspec.open(str(path), "rb") as f:
        buf = f.read()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise ModelFormatError(0, f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    if len(buf) < METADATA_DTYPE.itemsize:
        raise ModelFormatError(len(buf), "truncated metadata block")
    meta = np.frombuffer(buf, dtype=METADATA_DTYPE, count=1)[0]
    if int(meta["version"]) != FORMAT_VERSION:
        raise ModelFormatError(4, f"unsupported format version {int(meta['version'])}")

    depth, width = int(meta["depth"]), int(meta["width"])
    in_channels, out_channels = int(meta["in_channels"]), int(meta["out_channels"])
    if depth < 3 or min(width, in_channels, out_channels) < 1:
        raise ModelFormatError(8, f"invalid layer layout depth={depth} width={width}")
    expected = METADATA_DTYPE.itemsize + 4 * blob_count(depth, width, in_channels, out_channels)
    if len(buf) != expected:
        raise ModelFormatError(
            METADATA_DTYPE.itemsize,
            f"file holds {len(buf)} bytes, a depth-{depth} width-{width} model needs {expected}",
        )

    try:
        model = build_model(
            in_channels=in_channels,
            width=width,
            depth=depth,
            out_channels=out_channels,
            input_scale=float(meta["input_scale"]),
            bn_eps=float(meta["bn_eps"]),
            bn_momentum=float(meta["bn_momentum"]),
        )
    except ValueError as e:
        raise ModelFormatError(8, f"invalid metadata: {e}") from e

    offset = METADATA_DTYPE.itemsize
    for target in model.state_dict().values():
        blob = np.frombuffer(buf, dtype="<f4", count=target.size, offset=offset)
        target[...] = blob.reshape(target.shape)
        offset += target.size * 4
    return model
