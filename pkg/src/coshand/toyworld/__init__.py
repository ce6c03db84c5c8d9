from .dataset import build_pair, make_dataset, plan_sample, replay_pair
from .render import capsule_footprint, color_centroid, object_footprint, render, render_mask
from .world import (
    ACTION_KINDS,
    BACKGROUND_PALETTE,
    GENERATOR_VERSION,
    HAND_COLOR,
    OBJECT_PALETTE,
    HandPose,
    ToyAction,
    ToyObject,
    ToyScene,
    apply_action,
    check_scene,
    gen_scene,
)

__all__ = [
    "ACTION_KINDS",
    "BACKGROUND_PALETTE",
    "GENERATOR_VERSION",
    "HAND_COLOR",
    "OBJECT_PALETTE",
    "HandPose",
    "ToyAction",
    "ToyObject",
    "ToyScene",
    "apply_action",
    "build_pair",
    "capsule_footprint",
    "check_scene",
    "color_centroid",
    "gen_scene",
    "make_dataset",
    "object_footprint",
    "plan_sample",
    "render",
    "render_mask",
    "replay_pair",
]
