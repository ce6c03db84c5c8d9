"""Deterministic rasterizer for toy scenes.

Pixel (i, j) is covered by a shape when its center (j + 0.5, i + 0.5) lies
inside the footprint; there is no anti-aliasing, so renders are bit-exact
across calls and the mask is exactly the hand capsule's pixel footprint.
"""

import numpy as np

from .world import BACKGROUND_PALETTE, HAND_COLOR, HandPose, ToyObject, ToyScene


def _pixel_centers(size):
    ys, xs = np.mgrid[0:size, 0:size]
    return xs + 0.5, ys + 0.5


def object_footprint(obj: ToyObject, size: int) -> np.ndarray:
    """Boolean (size, size) coverage of the object's footprint."""
    xs, ys = _pixel_centers(size)
    dx = xs - obj.center[0]
    dy = ys - obj.center[1]
    (axx, axy), (ayx, ayy) = obj.axes()
    u = dx * axx + dy * axy
    v = dx * ayx + dy * ayy
    w, h = obj.half_extents
    if obj.shape == "circle":
        return (u / w) ** 2 + (v / h) ** 2 <= 1.0
    return (np.abs(u) <= w) & (np.abs(v) <= h)


def capsule_footprint(hand: HandPose, size: int) -> np.ndarray:
    """Boolean coverage of the capsule: distance to the segment <= radius."""
    xs, ys = _pixel_centers(size)
    ax, ay = hand.anchor
    bx, by = hand.tip()
    abx, aby = bx - ax, by - ay
    denom = abx * abx + aby * aby
    if denom < 1e-12:
        t = np.zeros_like(xs)
    else:
        t = np.clip(((xs - ax) * abx + (ys - ay) * aby) / denom, 0.0, 1.0)
    px = ax + t * abx
    py = ay + t * aby
    return (xs - px) ** 2 + (ys - py) ** 2 <= hand.radius**2


def render(scene: ToyScene):
    """Rasterize a scene: background, objects in paint order, hand on top.

    Returns (image, mask): float32 (H, W, 3) in [-1, 1] and uint8 (H, W) in
    {0, 1} marking exactly the hand pixels.
    """
    size = scene.canvas_size
    canvas = np.empty((size, size, 3), dtype=np.float64)
    canvas[:] = BACKGROUND_PALETTE[scene.background]
    for obj in scene.objects:
        canvas[object_footprint(obj, size)] = obj.color
    hand_mask = capsule_footprint(scene.hand, size)
    canvas[hand_mask] = HAND_COLOR
    image = (canvas * 2.0 - 1.0).astype(np.float32)
    return image, hand_mask.astype(np.uint8)


def render_mask(hand: HandPose, size: int) -> np.ndarray:
    """Rasterize just the hand mask for a pose (uint8 {0, 1})."""
    return capsule_footprint(hand, size).astype(np.uint8)


def color_centroid(image: np.ndarray, color, tol: float = 0.25):
    """Centroid (x, y) of pixels matching an RGB palette color in a [-1, 1] image.

    Returns None when no pixel is within ``tol`` (L2 in [0, 1] units) of the
    color; used to localize objects by their known palette entry.
    """
    rgb01 = (np.asarray(image, dtype=np.float64) + 1.0) / 2.0
    dist = np.linalg.norm(rgb01 - np.asarray(color, dtype=np.float64), axis=-1)
    hit = dist <= tol
    if not hit.any():
        return None
    ys, xs = np.nonzero(hit)
    return float(xs.mean() + 0.5), float(ys.mean() + 0.5)
