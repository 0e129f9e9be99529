# Copyright 2026 The bidirnmt Authors. All Rights Reserved.
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

"""Bidirectional Transformer machine translation."""

from ._core import (
    EOS,
    PAD,
    SOS_L2R,
    SOS_R2L,
    UNK,
    BpeModel,
    ConfigError,
    DataError,
    Error,
    Model,
    ModelError,
    NumericError,
    UsageError,
    Vocab,
    big_config,
    bleu,
    direction_share,
    length_penalty,
    position_accuracy,
    run_cli,
    small_config,
    tokenize_13a,
)

__all__ = [
    "EOS",
    "PAD",
    "SOS_L2R",
    "SOS_R2L",
    "UNK",
    "BpeModel",
    "ConfigError",
    "DataError",
    "Error",
    "Model",
    "ModelError",
    "NumericError",
    "UsageError",
    "Vocab",
    "big_config",
    "bleu",
    "direction_share",
    "length_penalty",
    "position_accuracy",
    "run_cli",
    "small_config",
    "tokenize_13a",
]
