# Copyright 2026 The selinf Authors.
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

"""Selective inference after model selection in additive and mixed models."""

from __future__ import annotations

import json

from ._selinf import (
    ConfigError,
    DimensionError,
    LowCongruencyError,
    NumericalError,
    SelinfError,
    fit,
    infer,
    ks_uniform,
    oracle_suite,
    select,
    simulate,
    truncated_chi_survival,
    truncated_normal_survival,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "LowCongruencyError",
    "NumericalError",
    "SelinfError",
    "fit",
    "infer",
    "infer_bundle",
    "ks_uniform",
    "oracle_suite",
    "select",
    "simulate",
    "truncated_chi_survival",
    "truncated_normal_survival",
]


def infer_bundle(config: str, **kwargs) -> dict:
    """Like infer, but returns the parsed result bundle."""
    bundle, _table = infer(config, **kwargs)
    return json.loads(bundle)
