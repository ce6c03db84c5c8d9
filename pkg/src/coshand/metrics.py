"""Image similarity metrics over [-1, 1] float images.

All three metrics internally map inputs to [0, 1] so dB values and SSIM
constants follow the usual 8-bit-image conventions (dynamic range L = 1).
"""

import numpy as np
from scipy.ndimage import correlate1d

from .errors import BackendMissingError, ShapeMismatchError, TooSmallError

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LPIPS_EPS = 1e-10


def _to_unit(img):
    return (np.asarray(img, dtype=np.float64) + 1.0) / 2.0


def _check_pair(a, b):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB: 10*log10(1/MSE) on the [0, 1] scale.

    Identical inputs return the 100 dB cap instead of infinity.
    """
    _check_pair(a, b)
    mse = float(np.mean((_to_unit(a) - _to_unit(b)) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _ssim_filter(x, g):
    # Separable Gaussian then crop to the valid region (no border invention).
    half = (len(g) - 1) // 2
    y = correlate1d(x, g, axis=0, mode="constant")
    y = correlate1d(y, g, axis=1, mode="constant")
    return y[half:-half, half:-half]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Computed per channel on the [0, 1] scale with K1=0.01, K2=0.03 and
    averaged; returns 1.0 exactly for identical images.
    """
    _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise TooSmallError(f"min spatial dim {min(a.shape[:2])} < window {SSIM_WINDOW}")
    x = _to_unit(a)
    y = _to_unit(b)
    if x.ndim == 2:
        x = x[:, :, None]
        y = y[:, :, None]
    g = gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    scores = []
    for ch in range(x.shape[2]):
        xc, yc = x[:, :, ch], y[:, :, ch]
        mu_x = _ssim_filter(xc, g)
        mu_y = _ssim_filter(yc, g)
        var_x = _ssim_filter(xc * xc, g) - mu_x**2
        var_y = _ssim_filter(yc * yc, g) - mu_y**2
        cov = _ssim_filter(xc * yc, g) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


class PerceptualBackend:
    """Frozen feature extractor interface for the perceptual distance.

    Implementations return a list of float feature maps, each shaped
    (h_i, w_i, c_i), for an input image shaped (H, W, 3) in [-1, 1].
    """

    name = "abstract"

    def features(self, image: np.ndarray) -> list:
        raise NotImplementedError


class IdentityBackend(PerceptualBackend):
    """Features are the raw pixels; keeps the lpips code path testable."""

    name = "identity"

    def features(self, image):
        return [np.asarray(image, dtype=np.float64)]


def _unit_normalize(feat):
    norm = np.sqrt(np.sum(feat**2, axis=-1, keepdims=True))
    return feat / (norm + LPIPS_EPS)


def lpips(a: np.ndarray, b: np.ndarray, backend: PerceptualBackend | None) -> float:
    """Perceptual distance: channel-unit-normalized squared feature differences
    averaged over locations, then over layers. Zero for identical inputs.
    """
    if backend is None:
        raise BackendMissingError("no perceptual backend configured")
    _check_pair(a, b)
    fa = backend.features(a)
    fb = backend.features(b)
    layer_means = []
    for xa, xb in zip(fa, fb):
        da = _unit_normalize(np.asarray(xa, dtype=np.float64))
        db = _unit_normalize(np.asarray(xb, dtype=np.float64))
        layer_means.append(float(np.mean(np.sum((da - db) ** 2, axis=-1))))
    return float(np.mean(layer_means))
