"""Actor-mask acquisition through an external-segmenter adapter.

The adapter contract: given an image (and an optional prompt bbox), return a
list of binary instance masks at the image's resolution, or raise a
well-typed failure. Multiple instances are unioned into the single actor
channel the model consumes (covers bi-manual scenes).
"""

import time

import numpy as np
import requests

from ..errors import AdapterUnavailableError, NoDetectionError, ShapeMismatchError
from ..imageio import (
    b64_decode_png,
    b64_encode_png,
    png_bytes_from_image,
    uint8_from_png_bytes,
    uint8_to_mask,
)


class SegmenterAdapter:
    """Interface; implementations provide ``segment`` and ``prompt_mode``."""

    prompt_mode = "none"  # bbox | point | none

    def segment(self, image: np.ndarray, bbox=None) -> list:
        raise NotImplementedError


class CallableAdapter(SegmenterAdapter):
    """Wraps a plain function (image, bbox) -> list of {0,1} masks."""

    def __init__(self, fn, prompt_mode="none"):
        self.fn = fn
        self.prompt_mode = prompt_mode

    def segment(self, image, bbox=None):
        return list(self.fn(image, bbox))


class HTTPSegmenterAdapter(SegmenterAdapter):
    """Remote segmenter speaking the wire contract:
    POST {image: base64 PNG, bbox?: [x0,y0,x1,y1]} -> {mask: base64 PNG}.
    """

    prompt_mode = "bbox"

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2, backoff: float = 0.5):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def segment(self, image, bbox=None):
        payload = {"image": b64_encode_png(png_bytes_from_image(image))}
        if bbox is not None:
            payload["bbox"] = [float(v) for v in bbox]
        last_err = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise requests.RequestException(f"server error {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()
                mask = uint8_to_mask(uint8_from_png_bytes(b64_decode_png(data["mask"]), "L"))
                return [mask]
            except (requests.RequestException, KeyError, ValueError) as e:
                last_err = e
                if attempt < self.retries:
                    time.sleep(self.backoff * (attempt + 1))
        raise AdapterUnavailableError(f"segmenter at {self.endpoint} failed: {last_err}")


def acquire_mask(image: np.ndarray, adapter: SegmenterAdapter, hint=None) -> np.ndarray:
    """Union of all detected actor instances; empty union means no detection
    and the sample should be skipped."""
    masks = adapter.segment(image, bbox=hint)
    h, w = image.shape[:2]
    union = np.zeros((h, w), dtype=np.uint8)
    for m in masks:
        m = np.asarray(m)
        if m.shape != (h, w):
            raise ShapeMismatchError(f"adapter mask {m.shape} != image {(h, w)}")
        union |= (m > 0).astype(np.uint8)
    if union.sum() == 0:
        raise NoDetectionError("segmenter returned no actor pixels")
    return union
