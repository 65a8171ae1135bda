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
# flake8: noqa
from .model_file import ModelFormatError, load_model, save_model
from .nifti import NiftiFormatError, read_nifti, write_nifti
from .raw import read_raw, write_raw
from .volume import PEAK_INTENSITY, Volume, denormalize, normalize, to_intensity_units

VOLUME_SUFFIXES = (".nii", ".raw")


def read_volume(path):
    """Read a ``.nii`` (NIfTI-1) or ``.raw`` (with JSON sidecar) volume."""
    path = str(path)
    if path.endswith(".nii"):
        return read_nifti(path)
    if path.endswith(".raw"):
        return read_raw(path)
    raise ValueError(f"unrecognized volume suffix for {path}, expected one of {VOLUME_SUFFIXES}")


def write_volume(volume, path):
    path = str(path)
    if path.endswith(".nii"):
        return write_nifti(volume, path)
    if path.endswith(".raw"):
        return write_raw(volume, path)
    raise ValueError(f"unrecognized volume suffix for {path}, expected one of {VOLUME_SUFFIXES}")
