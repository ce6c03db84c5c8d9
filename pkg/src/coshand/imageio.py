"""Image and mask array conventions plus lossless PNG round-trips.

Conventions used everywhere in the package:
  - image: float32 numpy array, shape (H, W, 3), values in [-1, 1]
  - mask:  uint8 numpy array, shape (H, W), values exactly {0, 1}

On disk, images are 8-bit RGB PNGs and masks are 8-bit grayscale PNGs with
values exactly {0, 255}. The [-1, 1] <-> uint8 mapping is fixed here so a
write/read round-trip is bit-exact on the uint8 side.
"""

import base64
import io

import numpy as np
from PIL import Image as PILImage

from .errors import NonBinaryInputError, ShapeMismatchError


def image_to_uint8(img: np.ndarray) -> np.ndarray:
    """Map a [-1, 1] float image to uint8 [0, 255] (round-half-away via rint)."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatchError(f"expected (H, W, 3) image, got {img.shape}")
    arr = np.clip((np.asarray(img, dtype=np.float64) + 1.0) * 127.5, 0.0, 255.0)
    return np.rint(arr).astype(np.uint8)


def uint8_to_image(arr: np.ndarray) -> np.ndarray:
    """Map uint8 [0, 255] to float32 [-1, 1]."""
    return (arr.astype(np.float32) / 127.5) - 1.0


def mask_to_uint8(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask)
    if not np.isin(m, (0, 1)).all():
        raise NonBinaryInputError("mask values must be exactly {0, 1}")
    return (m.astype(np.uint8)) * 255


def uint8_to_mask(arr: np.ndarray) -> np.ndarray:
    """Threshold a grayscale array at 128 into a {0, 1} mask."""
    return (np.asarray(arr) >= 128).astype(np.uint8)


def save_image_png(path, img: np.ndarray) -> None:
    PILImage.fromarray(image_to_uint8(img), mode="RGB").save(path, format="PNG")


def load_image_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return uint8_to_image(np.asarray(im.convert("RGB")))


def save_mask_png(path, mask: np.ndarray) -> None:
    PILImage.fromarray(mask_to_uint8(mask), mode="L").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return uint8_to_mask(np.asarray(im.convert("L")))


def png_bytes_from_image(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(image_to_uint8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_from_mask(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(mask_to_uint8(mask), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def uint8_from_png_bytes(data: bytes, mode: str) -> np.ndarray:
    """Decode PNG bytes to a uint8 array. mode: 'RGB' or 'L'."""
    with PILImage.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert(mode))


def b64_encode_png(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64_decode_png(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)
