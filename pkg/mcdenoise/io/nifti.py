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
"""Minimal single-file NIfTI-1 (.nii) reader and writer."""
import logging

import fsspec
import numpy as np

from .volume import Volume

LOG = logging.getLogger("mcdenoise")

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

# datatype code -> numpy type code (without byte order)
SUPPORTED_DATATYPES = {2: "u1", 4: "i2", 16: "f4"}

HEADER_FIELDS = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]


def header_dtype(endianness="<"):
    fields = []
    for field in HEADER_FIELDS:
        name, code = field[0], field[1]
        if not code.startswith("S") and code not in ("u1",):
            code = endianness + code
        fields.append((name, code) + field[2:])
    dtype = np.dtype(fields)
    assert dtype.itemsize == HEADER_SIZE
    return dtype


class NiftiFormatError(ValueError):
    """A NIfTI-1 file failed validation; ``field`` names the offending header field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def _parse_header(buf):
    if len(buf) < HEADER_SIZE:
        raise NiftiFormatError("sizeof_hdr", f"file holds {len(buf)} bytes, header needs 348")
    # byte order is whichever makes dim[0] a plausible rank
    for endianness in ("<", ">"):
        header = np.frombuffer(buf, dtype=header_dtype(endianness), count=1)[0]
        if 1 <= int(header["dim"][0]) <= 7:
            return header, endianness
    raise NiftiFormatError("dim", "dim[0] is not a rank in 1..7 in either byte order")


def _affine(header):
    if int(header["sform_code"]) > 0:
        affine = np.eye(4)
        affine[0] = header["srow_x"]
        affine[1] = header["srow_y"]
        affine[2] = header["srow_z"]
        return affine
    return np.diag([float(v) or 1.0 for v in header["pixdim"][1:4]] + [1.0])


def read_nifti(path):
    """Read a single-file, uncompressed NIfTI-1 volume.

    Supported datatypes are 2 (uint8), 4 (int16) and 16 (float32). Voxels are
    converted to float32 after applying ``scl_slope``/``scl_inter`` when the
    slope is nonzero.
    """
    with fsspec.open(str(path), "rb") as f:
        buf = f.read()
    header, endianness = _parse_header(buf)

    if int(header["sizeof_hdr"]) != HEADER_SIZE:
        raise NiftiFormatError("sizeof_hdr", f"expected 348, got {int(header['sizeof_hdr'])}")
    if bytes(header["magic"]).ljust(4, b"\x00") != MAGIC:
        raise NiftiFormatError("magic", f"expected {MAGIC!r}, got {bytes(header['magic'])!r}")
    datatype = int(header["datatype"])
    if datatype not in SUPPORTED_DATATYPES:
        raise NiftiFormatError("datatype", f"unsupported datatype {datatype}")

    dim = [int(d) for d in header["dim"]]
    if dim[0] == 4 and dim[4] == 1:
        LOG.debug("reading 4D NIfTI with a single frame as 3D")
    elif dim[0] != 3:
        raise NiftiFormatError("dim", f"only 3D volumes (or 4D with one frame), got dim={dim}")
    dims = tuple(dim[1:4])
    if min(dims) < 1:
        raise NiftiFormatError("dim", f"nonpositive extent in {dims}")

    dtype = np.dtype(endianness + SUPPORTED_DATATYPES[datatype])
    count = int(np.prod(dims))
    offset = int(header["vox_offset"])
    if offset < HEADER_SIZE:
        raise NiftiFormatError("vox_offset", f"{offset} points inside the header")
    needed = offset + count * dtype.itemsize
    if len(buf) < needed:
        raise NiftiFormatError(
            "data", f"truncated data section: need {needed} bytes, file holds {len(buf)}"
        )
    voxels = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)

    slope = float(header["scl_slope"])
    if slope != 0 and np.isfinite(slope):
        voxels = voxels.astype(np.float64) * slope + float(header["scl_inter"])
    return Volume.from_voxels(voxels, dims, affine=_affine(header))


def write_nifti(volume, path):
    """Write ``volume`` as little-endian float32 NIfTI-1 with ``vox_offset`` 352."""
    header = np.zeros((), dtype=header_dtype("<"))
    header["sizeof_hdr"] = HEADER_SIZE
    header["dim"] = [3] + list(volume.dims) + [1, 1, 1, 1]
    header["datatype"] = 16
    header["bitpix"] = 32
    header["pixdim"] = [1.0] * 8
    header["vox_offset"] = VOX_OFFSET
    header["xyzt_units"] = 2
    header["sform_code"] = 1
    header["srow_x"] = volume.affine[0]
    header["srow_y"] = volume.affine[1]
    header["srow_z"] = volume.affine[2]
    header["magic"] = MAGIC
    with fsspec.open(str(path), "wb") as f:
        f.write(header.tobytes())
        f.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
        f.write(volume.voxels.astype("<f4").tobytes())
    LOG.debug("wrote NIfTI volume %s to %s", volume.dims, path)
