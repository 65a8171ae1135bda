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

from mcdenoise.loader import PatchConfig, Regime, build_training_set
from mcdenoise.metrics import evaluate
from mcdenoise.network import build_model, denoise
from mcdenoise.noise import NoiseLevel, add_rician
from mcdenoise.optim import AdamState, TrainConfig
from mcdenoise.trainer import train, train_step

pytestmark = pytest.mark.slow

LEVEL = 9
PATCHES = PatchConfig(patch_size=20, stride=4, target_count=2000)
TRAIN = TrainConfig(batch_size=32, epochs=10, lr_start=1e-3, lr_end=1e-4, seed=0)


def _train(training_phantoms, regime):
    patches = build_training_set(training_phantoms, regime, PATCHES, seed=0)
    model = build_model(in_channels=5, width=16, depth=10, seed=0)
    model, history = train(model, patches, TRAIN)
    return model, history


@pytest.fixture(scope="module")
def specific_model(training_phantoms):
    return _train(training_phantoms, Regime.specific(LEVEL))


@pytest.fixture(scope="module")
def general_model(training_phantoms):
    return _train(training_phantoms, Regime.general())


@pytest.fixture(scope="module")
def heldout_noisy(heldout_phantom):
    level = NoiseLevel.from_volume(LEVEL, heldout_phantom)
    return add_rician(heldout_phantom, level, seed=1234)


def test_overfits_small_batch(phantom):
    config = PatchConfig(patch_size=16, stride=8, target_count=8)
    patches = build_training_set([phantom], Regime.specific(LEVEL), config, seed=0)
    assert len(patches) == 8
    model = build_model(in_channels=5, width=16, depth=10, seed=0)
    train_config = TrainConfig(lr_start=1e-3, lr_end=1e-3)
    state = AdamState.initial(model.parameters())
    batch = patches.batch(np.arange(8))
    losses = [train_step(model, *batch, state, 1e-3, train_config) for _ in range(200)]
    assert losses[-1] <= 0.1 * losses[0]


def test_training_loss_decreases(specific_model):
    _, history = specific_model
    assert len(history) == TRAIN.epochs
    assert history[-1] < history[0]


def test_denoising_improves_heldout(specific_model, heldout_phantom, heldout_noisy):
    model, _ = specific_model
    before = evaluate(heldout_phantom, heldout_noisy)
    after = evaluate(heldout_phantom, denoise(model, heldout_noisy))
    assert after.psnr_db >= before.psnr_db + 3.0
    assert after.ssim_global > before.ssim_global


def test_specific_regime_at_its_level(
    specific_model, general_model, heldout_phantom, heldout_noisy
):
    specific = evaluate(heldout_phantom, denoise(specific_model[0], heldout_noisy))
    general = evaluate(heldout_phantom, denoise(general_model[0], heldout_noisy))
    assert specific.psnr_db >= general.psnr_db - 0.1
