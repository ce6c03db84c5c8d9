"""Supervised frame-pair generation from toy scenes.

Each sample plans an action kind first (uniform over the six kinds), then
rejection-samples a scene compatible with that kind, places the hand so the
pre/post masks make the action legible, applies the analytic dynamics, and
renders both frames. The full pre-action scene and action are stored in
meta.json so any sample can be replayed bit-exactly.
"""

import dataclasses
import math

import numpy as np

from ..data.samples import (
    DatasetManifest,
    FramePairSample,
    write_manifest,
    write_sample,
)
from ..errors import GenerationFailureError
from .render import render, render_mask
from .world import (
    ACTION_KINDS,
    GENERATOR_VERSION,
    MAX_REJECTIONS,
    MIN_HAND_MASK_AREA,
    HandPose,
    ToyAction,
    ToyScene,
    _generate_scene,
    _unit,
    action_from_dict,
    action_to_dict,
    apply_action,
)

SPLITS = ("train", "val", "test")
# Seed ranges per split are disjoint by construction: sample_seed = seed + offset + index.
SPLIT_SEED_STRIDE = 10_000_000


def choose_kind(rng) -> str:
    """First decision of every sample plan; uniform over the action kinds."""
    return ACTION_KINDS[int(rng.integers(len(ACTION_KINDS)))]


def _place_hand_for_action(rng, scene, target_idx, kind, direction, size):
    obj = scene.objects[target_idx]
    span = float(rng.uniform(10.0, 18.0) * (size / 64.0))
    probe = HandPose(anchor=(0.0, 0.0), orientation=0.0, span=span, contact_object=target_idx)
    r = probe.radius
    cx, cy = obj.center

    if kind in ("push", "insert_behind"):
        d = direction
        tip = (cx - d[0] * (obj.support(d) + r + 1.0), cy - d[1] * (obj.support(d) + r + 1.0))
        anchor = (tip[0] - d[0] * span, tip[1] - d[1] * span)
        orient = math.atan2(d[1], d[0])
    elif kind in ("squeeze", "stretch"):
        side = 1.0 if rng.integers(2) else -1.0
        a = (direction[0] * side, direction[1] * side)
        tip = (cx + a[0] * (obj.support(a) + r + 1.0), cy + a[1] * (obj.support(a) + r + 1.0))
        anchor = (tip[0] + a[0] * span, tip[1] + a[1] * span)
        orient = math.atan2(-a[1], -a[0])
    elif kind == "rotate":
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        d = (math.cos(angle), math.sin(angle))
        tip = (cx + d[0] * (obj.support(d) + r + 1.0), cy + d[1] * (obj.support(d) + r + 1.0))
        anchor = (tip[0] + d[0] * span, tip[1] + d[1] * span)
        orient = math.atan2(-d[1], -d[0])
    else:  # lift_remove: hand over the object, pointing along the carry direction
        d = direction
        anchor = (cx - d[0] * span * 0.5, cy - d[1] * span * 0.5)
        orient = math.atan2(d[1], d[0])

    return dataclasses.replace(
        probe, anchor=(float(anchor[0]), float(anchor[1])), orientation=float(orient)
    )


def _plan_action(rng, scene, kind, size):
    """Pick a target and action parameters; returns (target_idx, ToyAction)."""
    scale = size / 64.0
    if kind in ("squeeze", "stretch"):
        candidates = [i for i, o in enumerate(scene.objects) if o.deformable]
        target = candidates[int(rng.integers(len(candidates)))]
    else:
        target = int(rng.integers(len(scene.objects)))
    obj = scene.objects[target]

    if kind == "push":
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        direction = (math.cos(angle), math.sin(angle))
        magnitude = float(rng.uniform(5.0, 10.0) * scale)
    elif kind == "squeeze":
        axis = obj.axes()[int(rng.integers(2))]
        direction = axis
        magnitude = float(rng.uniform(0.55, 0.8))
    elif kind == "stretch":
        axis = obj.axes()[int(rng.integers(2))]
        direction = axis
        magnitude = float(rng.uniform(1.25, 1.7))
    elif kind == "rotate":
        sign = 1.0 if rng.integers(2) else -1.0
        direction = (1.0, 0.0)
        magnitude = float(rng.uniform(0.35, 1.2) * sign)
    elif kind == "lift_remove":
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        direction = (math.cos(angle), math.sin(angle))
        magnitude = float(rng.uniform(8.0, 14.0) * scale)
    else:  # insert_behind
        others = [i for i in range(len(scene.objects)) if i != target]
        dists = [math.dist(scene.objects[i].center, obj.center) for i in others]
        neighbor = scene.objects[others[int(np.argmin(dists))]]
        direction = _unit((neighbor.center[0] - obj.center[0], neighbor.center[1] - obj.center[1]))
        magnitude = float(math.dist(neighbor.center, obj.center) * rng.uniform(0.55, 0.85))

    return target, ToyAction(kind=kind, target=target, magnitude=magnitude, direction=direction)


def plan_sample(sample_seed: int, canvas_size: int = 64):
    """Deterministically plan one supervised pair: (scene_before, action, scene_after)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(sample_seed)))
    min_area = MIN_HAND_MASK_AREA * (canvas_size / 64.0) ** 2
    kind = choose_kind(rng)
    for _ in range(MAX_REJECTIONS):
        scene = _generate_scene(
            rng,
            canvas_size=canvas_size,
            min_objects=2 if kind == "insert_behind" else 1,
            require_deformable=kind in ("squeeze", "stretch"),
        )
        target, action = _plan_action(rng, scene, kind, canvas_size)
        hand = _place_hand_for_action(rng, scene, target, kind, action.direction, canvas_size)
        before = dataclasses.replace(scene, hand=hand)
        try:
            after = apply_action(before, action)
        except GenerationFailureError:
            raise
        except Exception:
            continue
        if render_mask(before.hand, canvas_size).sum() < min_area:
            continue
        if render_mask(after.hand, canvas_size).sum() < min_area:
            continue
        return before, action, after
    raise GenerationFailureError(f"no valid sample for seed {sample_seed} after {MAX_REJECTIONS} tries")


def build_pair(sample_seed: int, canvas_size: int = 64) -> FramePairSample:
    before, action, after = plan_sample(sample_seed, canvas_size)
    x_t, h_t = render(before)
    x_t1, h_t1 = render(after)
    meta = {
        "source": "toyworld",
        "generator_version": GENERATOR_VERSION,
        "seed": int(sample_seed),
        "frame_t": 0,
        "frame_t1": 1,
        "fps": None,
        "mask_provenance": "synthetic",
        "canvas_size": int(canvas_size),
        "action": action_to_dict(action),
        "scene": before.to_dict(),
    }
    return FramePairSample(x_t=x_t, h_t=h_t, h_t1=h_t1, x_t1=x_t1, meta=meta)


def replay_pair(meta: dict):
    """Re-run the stored (scene, action) record; returns (x_t1, h_t1) arrays."""
    scene = ToyScene.from_dict(meta["scene"])
    action = action_from_dict(meta["action"])
    after = apply_action(scene, action)
    return render(after)


def sample_seed_for(seed: int, split: str, index: int) -> int:
    return int(seed) + SPLITS.index(split) * SPLIT_SEED_STRIDE + int(index)


def make_dataset(n: int, seed: int, split: str, out_root, canvas_size: int = 64) -> DatasetManifest:
    """Write n frame-pair samples under the shared dataset layout."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    sample_ids = []
    for k in range(n):
        sid = f"{split}_{k:06d}"
        pair = build_pair(sample_seed_for(seed, split, k), canvas_size)
        write_sample(out_root, split, sid, pair)
        sample_ids.append(sid)
    manifest = DatasetManifest(
        root=str(out_root),
        split=split,
        sample_ids=sample_ids,
        count=len(sample_ids),
        source={
            "kind": "toyworld",
            "generator_version": GENERATOR_VERSION,
            "seed": int(seed),
            "canvas_size": int(canvas_size),
            "seed_range": [sample_seed_for(seed, split, 0), sample_seed_for(seed, split, n - 1)],
            "skipped": 0,
        },
    )
    write_manifest(manifest)
    return manifest
