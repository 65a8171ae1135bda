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
import fsspec
import numpy as np
import yaml


def seeded_rng(seed):
    """All randomness goes through PCG64 so runs reproduce across platforms."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed, *keys):
    """An independent, reproducible 32-bit seed for the sub-task named by ``keys``."""
    return int(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]).generate_state(1)[0])


class Config:
    """
    Base class for keyword configurations that round-trip through YAML.

    Subclasses list their fields with defaults in ``_defaults`` and check
    invariants in ``validate``.
    """

    _defaults = {}

    def __init__(self, **kwargs):
        unknown = set(kwargs) - set(self._defaults)
        if unknown:
            raise TypeError(f"{self.__class__.__name__} got unknown fields {sorted(unknown)}")
        for name, default in self._defaults.items():
            setattr(self, name, kwargs.get(name, default))
        self.validate()

    def validate(self):
        pass

    def to_dict(self):
        return {name: getattr(self, name) for name in self._defaults}

    @classmethod
    def from_dict(cls, values):
        return cls(**(values or {}))

    def replace(self, **overrides):
        """A copy with every non-``None`` override applied."""
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return self.__class__(**values)

    @classmethod
    def load(cls, path):
        with fsspec.open(str(path), "r") as infile:
            return cls.from_dict(yaml.safe_load(infile))

    def save(self, path):
        with fsspec.open(str(path), "w") as outfile:
            yaml.safe_dump(self.to_dict(), outfile, default_flow_style=False)

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __repr__(self):
        fields = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items())
        return f"{self.__class__.__name__}({fields})"
