"""Snippet-based multi-person 3D pose tracking and forecasting."""

from ._core import (
    Model,
    SnipperError,
    ablate,
    evaluate,
    hungarian,
    lift_to_3d,
    project_to_2p5d,
    samples_per_head,
    synth,
    track,
    train,
)

__all__ = [
    "Model",
    "SnipperError",
    "ablate",
    "evaluate",
    "hungarian",
    "lift_to_3d",
    "project_to_2p5d",
    "samples_per_head",
    "synth",
    "track",
    "train",
]
