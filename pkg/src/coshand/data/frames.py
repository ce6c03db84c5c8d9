"""Video frame extraction and temporal pairing.

Frames are resampled to a target rate by index mapping (frame k of the
output takes source frame floor(k * native/target)), center-cropped square,
resized, and mapped to [-1, 1]. Decoding is deterministic, so re-extraction
reproduces identical arrays.
"""

import os

import cv2
import numpy as np

from ..errors import TooShortError, UnreadableVideoError, ZeroFramesError

VIDEO_EXTENSIONS = (".mp4", ".avi", ".mov", ".mkv", ".webm")


def center_crop_square(frame: np.ndarray) -> np.ndarray:
    h, w = frame.shape[:2]
    side = min(h, w)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    return frame[y0 : y0 + side, x0 : x0 + side]


def resize_image(frame: np.ndarray, size: int) -> np.ndarray:
    if frame.shape[0] == size and frame.shape[1] == size:
        return frame
    return cv2.resize(frame, (size, size), interpolation=cv2.INTER_LINEAR)


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbor keeps masks binary."""
    if mask.shape[0] == size and mask.shape[1] == size:
        return mask
    return cv2.resize(mask, (size, size), interpolation=cv2.INTER_NEAREST)


def extract_frames(video_path, fps: float = 12.0, resolution: int = 64) -> list:
    """Decode a video into a list of (resolution, resolution, 3) float32
    frames in [-1, 1], resampled to ``fps``."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise UnreadableVideoError(f"cannot open {video_path}")
    native = cap.get(cv2.CAP_PROP_FPS)
    if not native or native <= 0:
        cap.release()
        raise UnreadableVideoError(f"no frame rate reported for {video_path}")

    frames = []
    src_index = 0
    k = 0
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        while int(k * native / fps + 1e-9) == src_index:
            rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
            square = resize_image(center_crop_square(rgb), resolution)
            frames.append(square.astype(np.float32) / 127.5 - 1.0)
            k += 1
        src_index += 1
    cap.release()
    if not frames:
        raise ZeroFramesError(f"no frames decoded from {video_path}")
    return frames


def pair_frames(frames, interval: int = 3, stride: int | None = None) -> list:
    """Index pairs (t, t + interval) with configurable start stride."""
    if interval < 1:
        raise ValueError("interval must be >= 1")
    stride = interval if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = len(frames)
    if n <= interval:
        raise TooShortError(f"{n} frames cannot form a pair at interval {interval}")
    return [(t, t + interval) for t in range(0, n - interval, stride)]


def list_videos(video_dir):
    entries = sorted(os.listdir(str(video_dir)))
    return [
        os.path.join(str(video_dir), name)
        for name in entries
        if name.lower().endswith(VIDEO_EXTENSIONS)
    ]
