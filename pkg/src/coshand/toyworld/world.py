"""Procedural 2D manipulation world with analytic dynamics.

A scene is a flat-colored canvas with 1-3 simple objects and a capsule-shaped
actor ("hand"). Actions transform the target object in closed form, so the
post-action scene is an exact oracle for the future frame. All randomness
flows through explicit numpy Generators; identical seeds give identical
scenes.

Geometry conventions: positions are float pixels with the origin at the
top-left corner, x to the right, y down. An object's footprint is defined in
its local frame (rotated by ``orientation``); ``half_extents`` are the local
half-width/half-height.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from ..errors import (
    GenerationFailureError,
    InvalidTargetError,
    OutOfBoundsError,
)

GENERATOR_VERSION = "toyworld-1"

SHAPES = ("square", "circle", "bar")
ACTION_KINDS = ("push", "squeeze", "stretch", "rotate", "lift_remove", "insert_behind")

# Object palette: pairwise L2 distance >= 60/255 in [0, 1] RGB (verified in tests).
OBJECT_PALETTE = (
    (0.86, 0.12, 0.12),  # red
    (0.10, 0.75, 0.18),  # green
    (0.16, 0.30, 0.92),  # blue
    (0.95, 0.84, 0.12),  # yellow
    (0.82, 0.16, 0.82),  # magenta
    (0.10, 0.80, 0.84),  # cyan
    (0.96, 0.55, 0.10),  # orange
    (0.55, 0.30, 0.08),  # brown
)

BACKGROUND_PALETTE = (
    (0.12, 0.12, 0.14),  # near-black
    (0.92, 0.92, 0.90),  # off-white
    (0.45, 0.47, 0.50),  # gray
    (0.20, 0.30, 0.25),  # dark green-gray
)

HAND_COLOR = (0.94, 0.78, 0.62)

MIN_HALF_EXTENT = 2.0
MIN_HAND_MASK_AREA = 30  # at 64x64; scales with canvas area
SCALE_FACTOR_RANGE = (0.5, 1.8)
MAX_ROTATE_ANGLE = math.pi / 2
MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class ToyObject:
    shape: str  # square | circle | bar
    center: tuple  # (x, y) pixels
    half_extents: tuple  # (w, h) pixels in the local frame
    color: tuple  # RGB in [0, 1]
    deformable: bool
    orientation: float = 0.0  # radians; local frame rotation

    def axes(self):
        """Local frame unit axes (x_axis, y_axis) in world coordinates."""
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        return (c, s), (-s, c)

    def bbox(self):
        """Axis-aligned bounding box (x0, y0, x1, y1) of the footprint."""
        w, h = self.half_extents
        c, s = abs(math.cos(self.orientation)), abs(math.sin(self.orientation))
        if self.shape == "circle":
            hx = math.sqrt((w * math.cos(self.orientation)) ** 2 + (h * math.sin(self.orientation)) ** 2)
            hy = math.sqrt((w * math.sin(self.orientation)) ** 2 + (h * math.cos(self.orientation)) ** 2)
        else:
            hx = w * c + h * s
            hy = w * s + h * c
        x, y = self.center
        return (x - hx, y - hy, x + hx, y + hy)

    def support(self, direction):
        """Half-extent of the footprint along a world-frame unit direction."""
        ax, ay = self.axes()
        w, h = self.half_extents
        du = direction[0] * ax[0] + direction[1] * ax[1]
        dv = direction[0] * ay[0] + direction[1] * ay[1]
        if self.shape == "circle":
            return math.sqrt((w * du) ** 2 + (h * dv) ** 2)
        return w * abs(du) + h * abs(dv)


@dataclass(frozen=True)
class HandPose:
    anchor: tuple  # (x, y) pixels; one capsule endpoint
    orientation: float  # radians; direction from anchor to tip
    span: float  # capsule segment length in pixels
    contact_object: int | None = None

    @property
    def radius(self):
        # Derived, not stored: keeps the pose 4-field and the mask area analytic.
        return max(2.5, 0.25 * self.span)

    def tip(self):
        return (
            self.anchor[0] + self.span * math.cos(self.orientation),
            self.anchor[1] + self.span * math.sin(self.orientation),
        )

    def capsule_area(self):
        return math.pi * self.radius**2 + 2.0 * self.radius * self.span


@dataclass(frozen=True)
class ToyAction:
    kind: str
    target: int
    magnitude: float  # pixels (push/lift/insert), scale factor (squeeze/stretch), radians (rotate)
    direction: tuple  # unit 2-vector; for squeeze/stretch it selects the local axis


@dataclass(frozen=True)
class ToyScene:
    canvas_size: int
    background: int  # index into BACKGROUND_PALETTE
    objects: tuple  # tuple of ToyObject, painter's order (index 0 is back-most)
    hand: HandPose

    def to_dict(self):
        return {
            "canvas_size": self.canvas_size,
            "background": self.background,
            "objects": [
                {
                    "shape": o.shape,
                    "center": list(o.center),
                    "half_extents": list(o.half_extents),
                    "color": list(o.color),
                    "deformable": o.deformable,
                    "orientation": o.orientation,
                }
                for o in self.objects
            ],
            "hand": {
                "anchor": list(self.hand.anchor),
                "orientation": self.hand.orientation,
                "span": self.hand.span,
                "contact_object": self.hand.contact_object,
            },
        }

    @staticmethod
    def from_dict(d):
        return ToyScene(
            canvas_size=int(d["canvas_size"]),
            background=int(d["background"]),
            objects=tuple(
                ToyObject(
                    shape=o["shape"],
                    center=tuple(o["center"]),
                    half_extents=tuple(o["half_extents"]),
                    color=tuple(o["color"]),
                    deformable=bool(o["deformable"]),
                    orientation=float(o["orientation"]),
                )
                for o in d["objects"]
            ),
            hand=HandPose(
                anchor=tuple(d["hand"]["anchor"]),
                orientation=float(d["hand"]["orientation"]),
                span=float(d["hand"]["span"]),
                contact_object=d["hand"]["contact_object"],
            ),
        )


def action_to_dict(action: ToyAction):
    return {
        "kind": action.kind,
        "target": action.target,
        "magnitude": action.magnitude,
        "direction": list(action.direction),
    }


def action_from_dict(d) -> ToyAction:
    return ToyAction(
        kind=d["kind"],
        target=int(d["target"]),
        magnitude=float(d["magnitude"]),
        direction=tuple(d["direction"]),
    )


# ---------------------------------------------------------------------------
# scene invariants


def _bboxes_overlap(a, b, gap=0.0):
    return not (a[2] + gap <= b[0] or b[2] + gap <= a[0] or a[3] + gap <= b[1] or b[3] + gap <= a[1])


def _bbox_inside_fraction(bbox, size):
    x0, y0, x1, y1 = bbox
    area = max(x1 - x0, 0.0) * max(y1 - y0, 0.0)
    if area <= 0:
        return 0.0
    ix0, iy0 = max(x0, 0.0), max(y0, 0.0)
    ix1, iy1 = min(x1, float(size)), min(y1, float(size))
    inside = max(ix1 - ix0, 0.0) * max(iy1 - iy0, 0.0)
    return inside / area


def check_scene(scene: ToyScene, at_generation=True):
    """Return a list of invariant-violation strings (empty when the scene is valid).

    ``at_generation=False`` relaxes full-containment to the post-action rule:
    every object bbox at least 50% inside the canvas, overlaps allowed.
    """
    problems = []
    n = len(scene.objects)
    if not 1 <= n <= 3:
        problems.append(f"object count {n} outside [1, 3]")
    for i, obj in enumerate(scene.objects):
        if obj.shape not in SHAPES:
            problems.append(f"object {i}: unknown shape {obj.shape!r}")
        if min(obj.half_extents) < MIN_HALF_EXTENT - 1e-9:
            problems.append(f"object {i}: half_extents {obj.half_extents} below {MIN_HALF_EXTENT}")
        frac = _bbox_inside_fraction(obj.bbox(), scene.canvas_size)
        if at_generation and frac < 1.0 - 1e-9:
            problems.append(f"object {i}: bbox not fully inside canvas")
        elif frac < 0.5:
            problems.append(f"object {i}: bbox less than 50% inside canvas")
    if at_generation:
        for i in range(n):
            for j in range(i + 1, n):
                if _bboxes_overlap(scene.objects[i].bbox(), scene.objects[j].bbox()):
                    problems.append(f"objects {i} and {j} overlap")
        colors = [np.asarray(o.color) for o in scene.objects]
        for i in range(n):
            for j in range(i + 1, n):
                if np.linalg.norm(colors[i] - colors[j]) < 60.0 / 255.0 - 1e-9:
                    problems.append(f"objects {i} and {j} have near-identical colors")
    if scene.hand.contact_object is not None and not 0 <= scene.hand.contact_object < n:
        problems.append("hand contact_object index out of range")
    return problems


# ---------------------------------------------------------------------------
# scene generation


def _unit(vec):
    n = math.hypot(vec[0], vec[1])
    if n < 1e-12:
        raise ValueError("zero direction")
    return (vec[0] / n, vec[1] / n)


def _sample_object(rng, size, scale, color_idx, shape=None, deformable=None):
    shape = SHAPES[rng.integers(len(SHAPES))] if shape is None else shape
    if shape == "bar":
        w = rng.uniform(6.0, 11.0) * scale
        h = rng.uniform(2.0, 3.5) * scale
    else:
        w = rng.uniform(3.5, 7.5) * scale
        h = w if shape == "circle" else rng.uniform(3.5, 7.5) * scale
    orientation = float(rng.uniform(0.0, math.pi)) if shape != "circle" else 0.0
    if deformable is None:
        deformable = bool(rng.integers(2))
    margin = max(w, h) * 1.5 + 2.0
    center = (
        float(rng.uniform(margin, size - margin)),
        float(rng.uniform(margin, size - margin)),
    )
    return ToyObject(
        shape=shape,
        center=center,
        half_extents=(float(max(w, MIN_HALF_EXTENT)), float(max(h, MIN_HALF_EXTENT))),
        color=OBJECT_PALETTE[color_idx],
        deformable=bool(deformable),
        orientation=orientation,
    )


def _place_hand(rng, obj, size, contact_index):
    """Put the capsule adjacent to ``obj`` along a random approach direction."""
    span = float(rng.uniform(10.0, 18.0) * (size / 64.0))
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    d = (math.cos(angle), math.sin(angle))
    pose = HandPose(anchor=(0.0, 0.0), orientation=angle, span=span, contact_object=contact_index)
    gap = obj.support(d) + pose.radius + 1.0
    tip = (obj.center[0] - d[0] * gap, obj.center[1] - d[1] * gap)
    anchor = (tip[0] - d[0] * span, tip[1] - d[1] * span)
    return dataclasses.replace(pose, anchor=(float(anchor[0]), float(anchor[1])))


def _hand_inside(hand: HandPose, size):
    r = hand.radius
    for p in (hand.anchor, hand.tip()):
        if not (r <= p[0] <= size - r and r <= p[1] <= size - r):
            return False
    return True


def _generate_scene(rng, canvas_size=64, min_objects=1, require_deformable=False):
    """Rejection-sample a valid scene from an already-seeded generator."""
    scale = canvas_size / 64.0
    for _ in range(MAX_REJECTIONS):
        background = int(rng.integers(len(BACKGROUND_PALETTE)))
        n = int(rng.integers(min_objects, 4))
        color_order = rng.permutation(len(OBJECT_PALETTE))[:n]
        objects = []
        for k in range(n):
            deform = True if (require_deformable and k == 0) else None
            objects.append(_sample_object(rng, canvas_size, scale, int(color_order[k]), deformable=deform))
        contact = int(rng.integers(n))
        hand = _place_hand(rng, objects[contact], canvas_size, contact)
        scene = ToyScene(
            canvas_size=canvas_size,
            background=background,
            objects=tuple(objects),
            hand=hand,
        )
        if check_scene(scene):
            continue
        if not _hand_inside(hand, canvas_size):
            continue
        return scene
    raise GenerationFailureError(f"no valid scene after {MAX_REJECTIONS} rejections")


def gen_scene(seed: int, canvas_size: int = 64) -> ToyScene:
    """Deterministically generate a valid scene from a non-negative seed."""
    if seed < 0:
        raise ValueError("seed must be >= 0")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return _generate_scene(rng, canvas_size=canvas_size)


# ---------------------------------------------------------------------------
# dynamics


def _separation_depth(mover_bbox, other_bbox, direction):
    """Minimal t >= 0 such that translating ``other`` by t*direction clears the overlap."""
    ox = min(mover_bbox[2], other_bbox[2]) - max(mover_bbox[0], other_bbox[0])
    oy = min(mover_bbox[3], other_bbox[3]) - max(mover_bbox[1], other_bbox[1])
    if ox <= 1e-9 or oy <= 1e-9:
        return 0.0
    candidates = []
    if abs(direction[0]) > 1e-9:
        candidates.append(ox / abs(direction[0]))
    if abs(direction[1]) > 1e-9:
        candidates.append(oy / abs(direction[1]))
    return min(candidates) if candidates else 0.0


def _translated(obj: ToyObject, delta):
    return dataclasses.replace(obj, center=(obj.center[0] + delta[0], obj.center[1] + delta[1]))


def _require_half_inside(obj: ToyObject, size):
    if _bbox_inside_fraction(obj.bbox(), size) < 0.5:
        raise OutOfBoundsError(f"object bbox less than 50% inside {size}px canvas")


def _propagate_contacts(objects, moved_idx, direction, size):
    """Push any object overlapped by a moved object out by the overlap depth.

    All displacements are along +-direction (sign chosen away from the mover),
    applied transitively; each object moves at most once per action.
    """
    objects = list(objects)
    queue = [moved_idx]
    resolved = {moved_idx}
    while queue:
        i = queue.pop(0)
        for j in range(len(objects)):
            if j in resolved:
                continue
            if not _bboxes_overlap(objects[i].bbox(), objects[j].bbox()):
                continue
            rel = (
                objects[j].center[0] - objects[i].center[0],
                objects[j].center[1] - objects[i].center[1],
            )
            sign = 1.0 if rel[0] * direction[0] + rel[1] * direction[1] >= 0 else -1.0
            d = (direction[0] * sign, direction[1] * sign)
            depth = _separation_depth(objects[i].bbox(), objects[j].bbox(), d)
            if depth <= 0.0:
                continue
            objects[j] = _translated(objects[j], (d[0] * depth, d[1] * depth))
            _require_half_inside(objects[j], size)
            resolved.add(j)
            queue.append(j)
    return objects


def _scale_axis(obj: ToyObject, direction, factor):
    """Scale the local half-extent whose axis is most aligned with ``direction``."""
    ax, ay = obj.axes()
    along_x = abs(direction[0] * ax[0] + direction[1] * ax[1])
    along_y = abs(direction[0] * ay[0] + direction[1] * ay[1])
    w, h = obj.half_extents
    if along_x >= along_y:
        new_extents, axis = (w * factor, h), ax
    else:
        new_extents, axis = (w, h * factor), ay
    if min(new_extents) < MIN_HALF_EXTENT - 1e-9:
        raise OutOfBoundsError("deformation would shrink a half-extent below the minimum")
    return dataclasses.replace(obj, half_extents=(float(new_extents[0]), float(new_extents[1]))), axis


def _rotate_about(point, center, angle):
    c, s = math.cos(angle), math.sin(angle)
    dx, dy = point[0] - center[0], point[1] - center[1]
    return (center[0] + c * dx - s * dy, center[1] + s * dx + c * dy)


_KEEP = object()


def _move_hand(hand: HandPose, delta, contact=_KEEP):
    return dataclasses.replace(
        hand,
        anchor=(hand.anchor[0] + delta[0], hand.anchor[1] + delta[1]),
        contact_object=hand.contact_object if contact is _KEEP else contact,
    )


def apply_action(scene: ToyScene, action: ToyAction) -> ToyScene:
    """Analytic scene dynamics: returns the post-action scene.

    Raises InvalidTargetError for a bad target index and OutOfBoundsError when
    the result would violate post-action scene invariants (objects must stay
    at least 50% inside the canvas, half-extents at least 2 px).
    """
    n = len(scene.objects)
    if not 0 <= action.target < n:
        raise InvalidTargetError(f"target {action.target} with {n} objects")
    if action.kind not in ACTION_KINDS:
        raise ValueError(f"unknown action kind {action.kind!r}")
    size = scene.canvas_size
    hand = scene.hand
    objects = list(scene.objects)
    target = objects[action.target]

    if action.kind == "push":
        d = _unit(action.direction)
        delta = (d[0] * action.magnitude, d[1] * action.magnitude)
        moved = _translated(target, delta)
        _require_half_inside(moved, size)
        objects[action.target] = moved
        if abs(action.magnitude) > 1e-9:
            objects = _propagate_contacts(objects, action.target, d, size)
        hand = _move_hand(hand, delta)

    elif action.kind in ("squeeze", "stretch"):
        factor = action.magnitude
        lo, hi = SCALE_FACTOR_RANGE
        if not lo <= factor <= hi:
            raise ValueError(f"scale factor {factor} outside [{lo}, {hi}]")
        if action.kind == "squeeze" and factor >= 1.0:
            raise ValueError("squeeze requires factor < 1")
        if action.kind == "stretch" and factor <= 1.0:
            raise ValueError("stretch requires factor > 1")
        d = _unit(action.direction)
        scaled, axis = _scale_axis(target, d, factor)
        if action.kind == "stretch":
            _require_half_inside(scaled, size)
        objects[action.target] = scaled
        if action.kind == "stretch":
            objects = _propagate_contacts(objects, action.target, axis, size)
        # Hand tracks the face it touches: shift by the extent change, outward side.
        old_ext = target.support(axis)
        new_ext = scaled.support(axis)
        rel = (hand.anchor[0] - target.center[0], hand.anchor[1] - target.center[1])
        side = 1.0 if rel[0] * axis[0] + rel[1] * axis[1] >= 0 else -1.0
        shift = (new_ext - old_ext) * side
        hand = _move_hand(hand, (axis[0] * shift, axis[1] * shift))

    elif action.kind == "rotate":
        angle = action.magnitude
        if abs(angle) > MAX_ROTATE_ANGLE + 1e-9:
            raise ValueError(f"rotate angle {angle} exceeds pi/2")
        rotated = dataclasses.replace(target, orientation=target.orientation + angle)
        _require_half_inside(rotated, size)
        objects[action.target] = rotated
        new_anchor = _rotate_about(hand.anchor, target.center, angle)
        hand = dataclasses.replace(
            hand,
            anchor=(float(new_anchor[0]), float(new_anchor[1])),
            orientation=hand.orientation + angle,
        )

    elif action.kind == "lift_remove":
        d = _unit(action.direction)
        del objects[action.target]
        contact = hand.contact_object
        if contact is not None:
            contact = None if contact == action.target else (contact - 1 if contact > action.target else contact)
        hand = _move_hand(hand, (d[0] * action.magnitude, d[1] * action.magnitude), contact=contact)

    elif action.kind == "insert_behind":
        d = _unit(action.direction)
        delta = (d[0] * action.magnitude, d[1] * action.magnitude)
        moved = _translated(target, delta)
        _require_half_inside(moved, size)
        # Re-insert at the back of the paint order so overlapped objects occlude it.
        del objects[action.target]
        objects.insert(0, moved)
        contact = hand.contact_object
        if contact is not None:
            contact = 0 if contact == action.target else (contact + 1 if contact < action.target else contact)
        hand = _move_hand(hand, delta, contact=contact)

    return dataclasses.replace(scene, objects=tuple(objects), hand=hand)
