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
import json

import numpy as np
import pytest

from mcdenoise.io import Volume
from mcdenoise.loader import (
    PatchConfig,
    PatchLoader,
    PatchSample,
    PatchSet,
    Regime,
    build_training_set,
    extract_patches,
    grid_shape,
    grid_size,
    load_patch_cache,
    make_stack,
    patch_cache_matches,
    save_patch_cache,
)
from mcdenoise.loader.backend import BatchQueue
from mcdenoise.loader.patches import grid_positions, subsample
from tests.conftest import coordinate_volume, decode_coordinates


def test_make_stack_interior_and_clamped():
    volume = coordinate_volume((4, 3, 6))
    _, _, z = decode_coordinates(make_stack(volume, 3)[0, 0])
    assert z.tolist() == [1, 2, 3, 4, 5]
    _, _, z = decode_coordinates(make_stack(volume, 0)[0, 0])
    assert z.tolist() == [0, 0, 0, 1, 2]
    _, _, z = decode_coordinates(make_stack(volume, 5)[0, 0])
    assert z.tolist() == [3, 4, 5, 5, 5]
    assert make_stack(volume, 2).shape == (4, 3, 5)
    _, _, z = decode_coordinates(make_stack(volume, 2, depth=3)[0, 0])
    assert z.tolist() == [1, 2, 3]


def test_make_stack_single_slice():
    volume = Volume(np.arange(6).reshape(3, 2, 1))
    stack = make_stack(volume, 0)
    for c in range(5):
        np.testing.assert_array_equal(stack[..., c], volume.data[..., 0])


def test_make_stack_errors():
    volume = coordinate_volume((3, 3, 4))
    for s in (-1, 4):
        with pytest.raises(IndexError):
            make_stack(volume, s)
    with pytest.raises(ValueError):
        make_stack(volume, 1, depth=4)


@pytest.mark.parametrize(
    "extent,patch,stride,count",
    [(60, 60, 7, 1), (120, 60, 30, 3), (130, 60, 20, 4), (61, 60, 1, 2)],
)
def test_grid_positions(extent, patch, stride, count):
    assert len(grid_positions(extent, patch, stride)) == count == (extent - patch) // stride + 1


def test_grid_shape():
    assert grid_shape((120, 120, 4), 60, 30) == (4, 3, 3)
    assert grid_size((120, 120, 4), 60, 30) == 36
    with pytest.raises(ValueError):
        grid_shape((50, 120, 4), 60, 30)


def test_single_window_volume():
    volume = Volume(np.ones((60, 60, 1)))
    patches = extract_patches(volume, volume, patch=60, stride=13)
    assert len(patches) == 1
    assert patches[0].noisy_stack.shape == (60, 60, 5)


def test_nine_positions_per_slice():
    volume = Volume(np.ones((120, 120, 2)))
    assert len(extract_patches(volume, volume, patch=60, stride=30)) == 18


def test_subsample_to_target():
    total = 20 * grid_size((256, 256, 150), 60, 20)
    chosen = subsample(total, 150000, seed=0)
    assert len(chosen) == 150000
    assert len(np.unique(chosen)) == 150000
    assert np.all(np.diff(chosen) > 0)
    assert len(subsample(10, 150000, seed=0)) == 10


def test_patch_too_large():
    volume = Volume(np.ones((40, 80, 3)))
    with pytest.raises(ValueError):
        extract_patches(volume, volume, patch=60)
    with pytest.raises(ValueError):
        extract_patches(volume, Volume(np.ones((40, 80, 4))), patch=20)


def test_crops_share_coordinates():
    clean = coordinate_volume((20, 18, 6))
    noisy = clean.with_data(clean.data + 1000000)
    patches = extract_patches(noisy, clean, patch=6, stride=4, target_count=30, seed=3, depth=5)
    assert len(patches) == 30
    seen = set()
    for sample in patches:
        np.testing.assert_array_equal(sample.noisy_center - sample.clean_center, 1000000)
        x, y, z = decode_coordinates(sample.clean_center)
        assert x[0, 0] % 4 == 0 and y[0, 0] % 4 == 0
        np.testing.assert_array_equal(x, x[0, 0] + np.arange(6)[:, None] + 0 * y)
        np.testing.assert_array_equal(y, y[0, 0] + np.arange(6)[None, :] + 0 * x)
        assert np.all(z == z[0, 0])
        _, _, zs = decode_coordinates(sample.noisy_stack[0, 0] - 1000000)
        expected = np.clip(np.arange(z[0, 0] - 2, z[0, 0] + 3), 0, 5)
        np.testing.assert_array_equal(zs, expected)
        seen.add((x[0, 0], y[0, 0], z[0, 0]))
    assert len(seen) == 30


def test_subsampling_is_seeded():
    volume = coordinate_volume((20, 20, 6))
    a = extract_patches(volume, volume, patch=6, stride=2, target_count=25, seed=1)
    b = extract_patches(volume, volume, patch=6, stride=2, target_count=25, seed=1)
    c = extract_patches(volume, volume, patch=6, stride=2, target_count=25, seed=2)
    np.testing.assert_array_equal(a.noisy, b.noisy)
    assert not np.array_equal(a.noisy, c.noisy)


def test_patch_set_access():
    volume = coordinate_volume((10, 10, 3))
    patches = extract_patches(volume, volume, patch=4, stride=3, level_percent=7)
    sample = patches[2]
    assert isinstance(sample, PatchSample)
    assert sample.level_percent == 7
    np.testing.assert_array_equal(sample.noisy_center, sample.noisy_stack[..., 2])
    assert not np.any(sample.residual)
    stacks, noisy_center, clean_center = patches.batch([0, 2])
    assert stacks.shape == (2, 4, 4, 5)
    np.testing.assert_array_equal(noisy_center[1, ..., 0], sample.noisy_center)
    np.testing.assert_array_equal(clean_center[1, ..., 0], sample.clean_center)
    rebuilt = PatchSet.from_samples(list(patches))
    np.testing.assert_array_equal(rebuilt.noisy, patches.noisy)
    assert len(patches[1:4]) == 3
    with pytest.raises(ValueError):
        PatchSet.from_samples([])


def test_patch_config(tmpdir):
    config = PatchConfig()
    assert config.to_dict() == {
        "patch_size": 60,
        "stride": 20,
        "target_count": 150000,
        "stack_depth": 5,
        "reference_intensity": None,
    }
    path = str(tmpdir.join("patches.yaml"))
    PatchConfig(patch_size=32, reference_intensity=255).save(path)
    loaded = PatchConfig.load(path)
    assert loaded.patch_size == 32
    assert loaded.reference_intensity == 255.0
    with pytest.raises(ValueError):
        PatchConfig(stack_depth=4)
    with pytest.raises(ValueError):
        PatchConfig(stride=0)


@pytest.mark.parametrize(
    "text,kind,levels",
    [
        ("specific:9", "specific", [9.0]),
        ("general", "general", [1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0]),
        ("general:1,5,9", "general", [1.0, 5.0, 9.0]),
        (" Specific:2.5 ", "specific", [2.5]),
    ],
)
def test_regime_parse(text, kind, levels):
    regime = Regime.parse(text)
    assert (regime.kind, regime.levels) == (kind, levels)
    assert Regime.parse(str(regime)) == regime


@pytest.mark.parametrize(
    "text", ["specific", "specific:1,2", "general:0", "uniform:3", "general:x"]
)
def test_regime_parse_errors(text):
    with pytest.raises(ValueError):
        Regime.parse(text)


def test_specific_training_set(training_phantoms):
    config = PatchConfig(patch_size=16, stride=8, target_count=500)
    patches = build_training_set(training_phantoms, Regime.specific(9), config, seed=0)
    assert len(patches) == 500
    assert np.all(patches.levels == 9)
    assert patches.noisy.shape == (500, 16, 16, 5)
    assert np.any(patches[0].residual)


def test_general_training_set_covers_levels(training_phantoms):
    config = PatchConfig(patch_size=8, stride=4, target_count=8000)
    regime = Regime.general()
    patches = build_training_set(training_phantoms, regime, config, seed=4)
    assert len(patches) == 8000
    expected = 8000 / len(regime.levels)
    for level in regime.levels:
        share = np.sum(patches.levels == level)
        assert expected / 3 <= share <= expected * 3


def test_training_set_is_deterministic(training_phantoms):
    config = PatchConfig(patch_size=16, stride=8, target_count=300)
    regime = Regime.general([3, 9])
    a = build_training_set(training_phantoms, regime, config, seed=2, scheduler="synchronous")
    b = build_training_set(training_phantoms, regime, config, seed=2, scheduler="threads")
    np.testing.assert_array_equal(a.noisy, b.noisy)
    np.testing.assert_array_equal(a.clean, b.clean)
    np.testing.assert_array_equal(a.levels, b.levels)


def test_training_set_errors(phantom):
    with pytest.raises(ValueError):
        build_training_set([], Regime.specific(9))
    config = PatchConfig(patch_size=16, stride=16, target_count=10000)
    with pytest.warns(UserWarning):
        patches = build_training_set([phantom], Regime.specific(5), config)
    assert len(patches) == grid_size(phantom.dims, 16, 16)


def test_patch_cache(tmpdir, phantom):
    patches = extract_patches(phantom, phantom, patch=8, stride=8, target_count=12, level_percent=3)
    path = str(tmpdir.join("patches.bin"))
    save_patch_cache(patches, path)
    with open(path + ".json") as f:
        meta = json.load(f)
    assert meta["count"] == 12
    assert meta["fields"] == [
        ["noisy_stack", [8, 8, 5]],
        ["clean_center", [8, 8]],
        ["level_percent", []],
    ]
    loaded = load_patch_cache(path)
    np.testing.assert_array_equal(loaded.noisy, patches.noisy)
    np.testing.assert_array_equal(loaded.clean, patches.clean)
    np.testing.assert_array_equal(loaded.levels, patches.levels)

    with open(path, "rb") as f:
        data = f.read()
    with open(path, "wb") as f:
        f.write(data[:-4])
    with pytest.raises(ValueError):
        load_patch_cache(path)


def test_patch_cache_matches(tmpdir, phantom):
    patches = extract_patches(phantom, phantom, patch=8, stride=8, target_count=4, level_percent=3)
    path = str(tmpdir.join("patches.bin"))
    provenance = {
        "regime": "specific:3",
        "patches": PatchConfig(patch_size=8, stride=8, target_count=4).to_dict(),
        "seed": 0,
        "volumes": ["a.nii", "b.nii"],
    }
    assert not patch_cache_matches(path, provenance)

    save_patch_cache(patches, path, provenance)
    assert patch_cache_matches(path, provenance)
    assert patch_cache_matches(path, json.loads(json.dumps(provenance)))
    assert not patch_cache_matches(path, dict(provenance, regime="general:1,15"))
    assert not patch_cache_matches(path, dict(provenance, seed=1))
    assert not patch_cache_matches(path, dict(provenance, volumes=["a.nii"]))
    other = PatchConfig(patch_size=8, stride=4, target_count=4).to_dict()
    assert not patch_cache_matches(path, dict(provenance, patches=other))

    save_patch_cache(patches, path)
    assert not patch_cache_matches(path, provenance)


def test_batch_queue_forwards_batches_then_done(phantom):
    patches = extract_patches(phantom, phantom, patch=8, stride=8, target_count=6, level_percent=3)
    loader = PatchLoader(patches, batch_size=4, shuffle=False)
    buffer = BatchQueue(qsize=4)
    assert not hasattr(buffer, "empty")

    buffer.load_batches(loader, np.arange(len(patches)))
    first, second = buffer.get(), buffer.get()
    assert len(first[0]) == 4 and len(second[0]) == 2
    assert buffer.get() is BatchQueue._DONE

    buffer.stop()
    assert buffer.stopped
    assert buffer.put("batch") is True
    buffer.start()
    assert not buffer.stopped
