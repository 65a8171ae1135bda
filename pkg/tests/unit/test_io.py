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
import os

import numpy as np
import pytest

from mcdenoise.io import (
    ModelFormatError,
    NiftiFormatError,
    Volume,
    denormalize,
    load_model,
    normalize,
    read_nifti,
    read_raw,
    read_volume,
    save_model,
    to_intensity_units,
    write_nifti,
    write_volume,
)
from mcdenoise.io.model_file import METADATA_DTYPE, blob_count
from mcdenoise.io.nifti import VOX_OFFSET, header_dtype
from mcdenoise.network import build_model


def _nifti_bytes(voxels, dims, datatype, code, slope=0.0, inter=0.0, endianness="<"):
    header = np.zeros((), dtype=header_dtype(endianness))
    header["sizeof_hdr"] = 348
    header["dim"] = [3] + list(dims) + [1, 1, 1, 1]
    header["datatype"] = datatype
    header["pixdim"] = [1.0, 2.0, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0]
    header["vox_offset"] = VOX_OFFSET
    header["scl_slope"] = slope
    header["scl_inter"] = inter
    header["magic"] = b"n+1\x00"
    data = np.asarray(voxels, dtype=endianness + code).tobytes()
    return header.tobytes() + b"\x00" * 4 + data


def _write_bytes(path, data):
    with open(path, "wb") as f:
        f.write(data)
    return path


@pytest.mark.parametrize("dims", [(1, 1, 1), (60, 60, 5), (7, 3, 2)])
def test_nifti_roundtrip(tmpdir, rng, dims):
    volume = Volume(rng.uniform(-10, 300, dims))
    path = str(tmpdir.join("v.nii"))
    write_nifti(volume, path)
    assert os.path.getsize(path) == VOX_OFFSET + 4 * int(np.prod(dims))
    loaded = read_nifti(path)
    assert loaded.dims == dims
    np.testing.assert_array_equal(loaded.data, volume.data)


@pytest.mark.parametrize("seed", range(10))
def test_nifti_roundtrip_random(tmpdir, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    dims = tuple(int(d) for d in rng.integers(1, 17, 3))
    volume = Volume(rng.normal(100, 50, dims), affine=np.diag([*rng.uniform(0.5, 3, 3), 1.0]))
    path = str(tmpdir.join(f"v{seed}.nii"))
    write_nifti(volume, path)
    loaded = read_nifti(path)
    assert loaded.dims == dims
    np.testing.assert_array_equal(loaded.data, volume.data)
    np.testing.assert_allclose(loaded.affine, volume.affine, rtol=1e-6)


def test_nifti_voxel_order(tmpdir):
    data = np.arange(24, dtype=np.float32)
    path = _write_bytes(str(tmpdir.join("v.nii")), _nifti_bytes(data, (2, 3, 4), 16, "f4"))
    volume = read_nifti(path)
    assert volume.data[1, 0, 0] == 1
    assert volume.data[0, 1, 0] == 2
    assert volume.data[0, 0, 1] == 6
    np.testing.assert_array_equal(volume.voxels, data)
    np.testing.assert_allclose(np.diag(volume.affine), [2.0, 2.0, 3.0, 1.0])


def test_nifti_integer_types_and_scaling(tmpdir):
    path = _write_bytes(
        str(tmpdir.join("u8.nii")), _nifti_bytes([0, 1, 2, 255], (2, 2, 1), 2, "u1")
    )
    np.testing.assert_array_equal(read_nifti(path).voxels, [0, 1, 2, 255])
    path = _write_bytes(
        str(tmpdir.join("i16.nii")),
        _nifti_bytes([-3, 0, 10, 1000], (2, 2, 1), 4, "i2", slope=0.5, inter=2.0),
    )
    np.testing.assert_allclose(read_nifti(path).voxels, [0.5, 2.0, 7.0, 502.0])


def test_nifti_big_endian(tmpdir):
    data = np.arange(8, dtype=np.float32)
    path = _write_bytes(
        str(tmpdir.join("be.nii")), _nifti_bytes(data, (2, 2, 2), 16, "f4", endianness=">")
    )
    np.testing.assert_array_equal(read_nifti(path).voxels, data)


def test_nifti_unsupported_datatype(tmpdir):
    path = _write_bytes(
        str(tmpdir.join("f64.nii")), _nifti_bytes(np.zeros(8), (2, 2, 2), 64, "f8")
    )
    with pytest.raises(NiftiFormatError) as excinfo:
        read_nifti(path)
    assert excinfo.value.field == "datatype"


@pytest.mark.parametrize(
    "field,offset,value",
    [("sizeof_hdr", 0, b"\x00\x01\x00\x00"), ("magic", 344, b"ni1\x00")],
)
def test_nifti_bad_header(tmpdir, field, offset, value):
    data = bytearray(_nifti_bytes(np.zeros(8), (2, 2, 2), 16, "f4"))
    data[offset : offset + 4] = value
    path = _write_bytes(str(tmpdir.join("bad.nii")), bytes(data))
    with pytest.raises(NiftiFormatError) as excinfo:
        read_nifti(path)
    assert excinfo.value.field == field


def test_nifti_truncated(tmpdir):
    data = _nifti_bytes(np.zeros(8), (2, 2, 2), 16, "f4")
    path = _write_bytes(str(tmpdir.join("short.nii")), data[:-1])
    with pytest.raises(NiftiFormatError):
        read_nifti(path)
    path = _write_bytes(str(tmpdir.join("header.nii")), data[:100])
    with pytest.raises(NiftiFormatError):
        read_nifti(path)


def test_raw_golden(datadir):
    volume = read_raw(os.path.join(datadir, "ramp_2x2x2.raw"))
    assert volume.dims == (2, 2, 2)
    x, y, z = np.meshgrid(np.arange(2), np.arange(2), np.arange(2), indexing="ij")
    np.testing.assert_array_equal(volume.data, x + 2 * y + 4 * z)
    assert volume.intensity_scale is None


def test_raw_roundtrip(tmpdir, rng):
    volume = normalize(Volume(rng.uniform(100, 4000, (5, 4, 3))))
    path = str(tmpdir.join("v.raw"))
    write_volume(volume, path)
    assert os.path.getsize(path) == 4 * 60
    loaded = read_volume(path)
    np.testing.assert_array_equal(loaded.data, volume.data)
    assert loaded.intensity_scale == volume.intensity_scale


def test_raw_size_mismatch(tmpdir, datadir):
    with open(os.path.join(datadir, "ramp_2x2x2.raw.json")) as f:
        sidecar = f.read()
    path = str(tmpdir.join("v.raw"))
    _write_bytes(path, b"\x00" * 28)
    with open(path + ".json", "w") as f:
        f.write(sidecar)
    with pytest.raises(ValueError):
        read_raw(path)


def test_unknown_suffix(tmpdir):
    with pytest.raises(ValueError):
        read_volume(str(tmpdir.join("v.mha")))
    with pytest.raises(ValueError):
        write_volume(Volume(np.zeros((1, 1, 1))), str(tmpdir.join("v.nii.gz")))


def test_model_roundtrip(tmpdir, rng):
    model = build_model(in_channels=5, width=4, depth=5, seed=3)
    for value in model.state_dict().values():
        value[...] = rng.uniform(0.1, 2.0, value.shape)
    path = str(tmpdir.join("m.mcdn"))
    save_model(model, path)
    expected_size = METADATA_DTYPE.itemsize + 4 * sum(
        v.size for v in model.state_dict().values()
    )
    assert os.path.getsize(path) == expected_size

    loaded = load_model(path)
    assert (loaded.depth, loaded.width, loaded.in_channels) == (5, 4, 5)
    assert loaded.input_scale == model.input_scale
    original, restored = model.state_dict(), loaded.state_dict()
    assert list(original) == list(restored)
    for name in original:
        np.testing.assert_array_equal(original[name], restored[name])
    assert original["block02.bn.running_var"].shape == (4,)


def test_model_file_errors(tmpdir):
    path = str(tmpdir.join("m.mcdn"))
    save_model(build_model(width=2, depth=3), path)
    with open(path, "rb") as f:
        data = f.read()

    _write_bytes(path, b"XXXX" + data[4:])
    with pytest.raises(ModelFormatError) as excinfo:
        load_model(path)
    assert excinfo.value.offset == 0

    _write_bytes(path, data[:-2])
    with pytest.raises(ModelFormatError):
        load_model(path)

    _write_bytes(path, data[:20])
    with pytest.raises(ModelFormatError):
        load_model(path)

    _write_bytes(path, data + b"\x00\x00\x00\x00")
    with pytest.raises(ModelFormatError) as excinfo:
        load_model(path)
    assert excinfo.value.offset == METADATA_DTYPE.itemsize

    bad_version = bytearray(data)
    bad_version[4] = 9
    _write_bytes(path, bytes(bad_version))
    with pytest.raises(ModelFormatError) as excinfo:
        load_model(path)
    assert excinfo.value.offset == 4


@pytest.mark.parametrize(
    "field,value,offset",
    [
        ("width", 1000000, METADATA_DTYPE.itemsize),
        ("depth", 50000, METADATA_DTYPE.itemsize),
        ("depth", 2, 8),
    ],
)
def test_model_header_layout_checked_before_allocation(tmpdir, field, value, offset):
    path = str(tmpdir.join("m.mcdn"))
    save_model(build_model(width=2, depth=3), path)
    with open(path, "rb") as f:
        data = f.read()
    meta = np.frombuffer(data, dtype=METADATA_DTYPE, count=1).copy()
    meta[field] = value
    _write_bytes(path, meta.tobytes() + data[METADATA_DTYPE.itemsize :])
    with pytest.raises(ModelFormatError) as excinfo:
        load_model(path)
    assert excinfo.value.offset == offset


def test_blob_count_matches_state():
    for kwargs in [dict(width=2, depth=3), dict(in_channels=1, width=5, depth=7, out_channels=2)]:
        model = build_model(**kwargs)
        expected = sum(v.size for v in model.state_dict().values())
        shape = (model.depth, model.width, model.in_channels, model.out_channels)
        assert blob_count(*shape) == expected


def test_normalize():
    volume = Volume(np.array([100.0, 600.0, 1100.0]).reshape(3, 1, 1))
    normalized = normalize(volume)
    np.testing.assert_allclose(normalized.data.ravel(), [0.0, 127.5, 255.0])
    assert normalized.intensity_scale == (100.0, 1100.0)
    np.testing.assert_allclose(denormalize(normalized).data, volume.data)
    assert denormalize(normalized).intensity_scale is None
    other = normalize(Volume(np.full((1, 1, 1), 1100.0)), scale=normalized.intensity_scale)
    assert other.data[0, 0, 0] == pytest.approx(255.0)
    np.testing.assert_allclose(to_intensity_units([51.0], (100.0, 1100.0)), [200.0])
    np.testing.assert_array_equal(to_intensity_units([51.0], None), [51.0])


def test_normalize_reference_example():
    volume = Volume(np.array([0.0, 500.0, 1000.0]).reshape(1, 1, 3))
    np.testing.assert_allclose(normalize(volume).data.ravel(), [0.0, 127.5, 255.0], atol=1e-4)


def test_normalize_preserves_order(rng):
    volume = Volume(rng.uniform(-300, 4000, (6, 5, 4)))
    normalized = normalize(volume)
    assert normalized.data.min() == 0.0
    assert normalized.data.max() == pytest.approx(255.0, abs=1e-4)
    assert np.argmax(normalized.data) == np.argmax(volume.data)
    assert np.argmin(normalized.data) == np.argmin(volume.data)
    np.testing.assert_array_equal(
        np.argsort(normalized.voxels, kind="stable"), np.argsort(volume.voxels, kind="stable")
    )


def test_normalize_is_idempotent_through_denormalize(rng):
    volume = Volume(rng.uniform(20, 900, (5, 5, 5)))
    once = normalize(volume)
    again = normalize(denormalize(once))
    np.testing.assert_allclose(again.data, once.data, atol=1e-4)
    assert again.intensity_scale == pytest.approx(once.intensity_scale, rel=1e-6)


def test_normalize_full_range_unchanged(rng):
    data = rng.uniform(0, 255, (4, 4, 4))
    data.flat[0], data.flat[1] = 0.0, 255.0
    volume = Volume(data)
    np.testing.assert_allclose(normalize(volume).data, volume.data, atol=1e-4)


def test_normalize_errors():
    with pytest.raises(ValueError):
        normalize(Volume(np.full((2, 2, 2), 5.0)))
    with pytest.raises(ValueError):
        denormalize(Volume(np.zeros((2, 2, 2))))


def test_volume_validation():
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 0, 2)))
    with pytest.raises(ValueError):
        Volume.from_voxels(np.zeros(7), (2, 2, 2))
    volume = Volume(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        volume.data[0, 0, 0] = 1
