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
import pytest

from mcdenoise.loader import PatchLoader, PatchSet, extract_patches
from mcdenoise.network import build_model
from mcdenoise.noise import NoiseLevel, add_rician
from mcdenoise.optim import AdamState, TrainConfig
from mcdenoise.trainer import Callback, LossLogger, train


@pytest.fixture(scope="module")
def noisy_patches(phantom):
    noisy = add_rician(phantom, NoiseLevel.from_volume(9, phantom), seed=1)
    return extract_patches(noisy, phantom, patch=8, stride=8, target_count=40, seed=0)


def _config(**overrides):
    values = {"batch_size": 8, "epochs": 3, "lr_start": 1e-2, "lr_end": 1e-3, "seed": 5}
    values.update(overrides)
    return TrainConfig(**values)


def _model():
    return build_model(width=4, depth=3, seed=2)


def test_history_length_and_determinism(noisy_patches):
    _, first = train(_model(), noisy_patches, _config(prefetch=0))
    _, second = train(_model(), noisy_patches, _config(prefetch=0))
    _, prefetched = train(_model(), noisy_patches, _config(prefetch=3))
    assert len(first) == 3
    assert first == second
    assert first == prefetched


def test_seed_changes_batch_order(noisy_patches):
    _, first = train(_model(), noisy_patches, _config(prefetch=0))
    _, other = train(_model(), noisy_patches, _config(prefetch=0, seed=6))
    assert first[0] != other[0] or first[-1] != other[-1]


def test_zero_residual_targets(phantom):
    patches = extract_patches(phantom, phantom, patch=8, stride=8, target_count=32, seed=0)
    _, history = train(_model(), patches, _config(epochs=6))
    assert history[-1] < history[0]


def test_empty_dataset():
    with pytest.raises(ValueError):
        train(_model(), [], _config())


def test_stack_depth_must_match_model(noisy_patches):
    model = build_model(in_channels=3, width=2, depth=3)
    with pytest.raises(ValueError):
        train(model, noisy_patches, _config())


def test_accepts_sequence_of_samples(noisy_patches):
    samples = [noisy_patches[i] for i in range(10)]
    _, history = train(_model(), samples, _config(epochs=1))
    assert len(history) == 1


def test_loss_logger(tmpdir, noisy_patches):
    path = str(tmpdir.join("loss.csv"))
    _, history = train(_model(), noisy_patches, _config(), callbacks=[LossLogger(path)])
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[0] == "epoch,lr,mean_loss"
    assert len(lines) == 4
    epoch, lr, loss = lines[1].split(",")
    assert (int(epoch), float(lr), float(loss)) == (0, 1e-2, history[0])
    assert float(lines[-1].split(",")[1]) == 1e-3


def test_callbacks_and_init_state(noisy_patches):
    class Recorder(Callback):
        def __init__(self):
            self.steps = []
            self.epochs = []

        def on_batch_end(self, step, loss):
            self.steps.append(step)

        def on_epoch_end(self, epoch, lr, mean_loss):
            self.epochs.append(epoch)

    model = _model()
    state = AdamState.initial(model.parameters())
    recorder = Recorder()
    train(model, noisy_patches, _config(epochs=2), callbacks=[recorder], init_state=state)
    assert recorder.epochs == [0, 1]
    assert recorder.steps == list(range(1, 11))
    assert state.t == 10
    train(model, noisy_patches, _config(epochs=1), init_state=state)
    assert state.t == 15


def test_patch_loader_batches(noisy_patches):
    loader = PatchLoader(noisy_patches, batch_size=16, shuffle=False)
    batches = list(loader)
    assert len(loader) == len(batches) == 3
    stacks, noisy_center, clean_center = batches[-1]
    assert stacks.shape == (8, 8, 8, 5)
    assert noisy_center.shape == clean_center.shape == (8, 8, 8, 1)
    np.testing.assert_array_equal(noisy_center[..., 0], stacks[..., 2])
    np.testing.assert_array_equal(batches[0][0], noisy_patches.noisy[:16])


def test_patch_loader_prefetch_keeps_order(noisy_patches):
    plain = PatchLoader(noisy_patches, batch_size=7, seed=3)
    prefetched = PatchLoader(noisy_patches, batch_size=7, seed=3, prefetch=2)
    for _ in range(2):
        for a, b in zip(plain, prefetched):
            for x, y in zip(a, b):
                np.testing.assert_array_equal(x, y)


def test_patch_loader_epochs_differ(noisy_patches):
    loader = PatchLoader(noisy_patches, batch_size=40, seed=0)
    first = next(iter(loader))[0]
    second = next(iter(loader))[0]
    assert not np.array_equal(first, second)
    assert sorted(first.sum(axis=(1, 2, 3))) == pytest.approx(sorted(second.sum(axis=(1, 2, 3))))


def test_patch_loader_forwards_errors(noisy_patches):
    class Broken(PatchSet):
        def batch(self, indices):
            raise RuntimeError("gather failed")

    broken = Broken(noisy_patches.noisy, noisy_patches.clean, noisy_patches.levels)
    loader = PatchLoader(broken, batch_size=8, prefetch=2)
    with pytest.raises(RuntimeError, match="gather failed"):
        list(loader)
    with pytest.raises(ValueError):
        PatchLoader(noisy_patches[:0], batch_size=8)
