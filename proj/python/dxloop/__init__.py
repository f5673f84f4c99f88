# SPDX-License-Identifier: Apache-2.0
"""Synthetic clinical decision loop: environment, agents, training and metrics."""

from ._dxloop import (
    ConfigError,
    calibration_reward,
    classes,
    evaluate_oracle,
    expected_calibration_error,
    f1_scores,
    generate_dataset,
    level_to_confidence,
    parse_decision,
    parse_hypothesis,
    tests,
    train,
)

__all__ = [
    "ConfigError",
    "calibration_reward",
    "classes",
    "evaluate_oracle",
    "expected_calibration_error",
    "f1_scores",
    "generate_dataset",
    "level_to_confidence",
    "parse_decision",
    "parse_hypothesis",
    "tests",
    "train",
]
