import math

import numpy as np
import pytest

from coshand.errors import BackendMissingError, ShapeMismatchError, TooSmallError
from coshand.metrics import (
    IdentityBackend,
    gaussian_window,
    lpips,
    psnr,
    ssim,
)


def rand_image(rng, h=16, w=16, c=3):
    return rng.uniform(-1.0, 1.0, size=(h, w, c))


# --- independent brute-force oracles -------------------------------------


def psnr_bruteforce(a, b):
    x = (np.asarray(a, dtype=np.float64) + 1.0) / 2.0
    y = (np.asarray(b, dtype=np.float64) + 1.0) / 2.0
    mse = np.mean((x - y) ** 2)
    return 100.0 if mse == 0 else 10.0 * math.log10(1.0 / mse)


def ssim_bruteforce(a, b, win=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct windowed formula: explicit loops over every valid window."""
    x = (np.asarray(a, dtype=np.float64) + 1.0) / 2.0
    y = (np.asarray(b, dtype=np.float64) + 1.0) / 2.0
    if x.ndim == 2:
        x, y = x[:, :, None], y[:, :, None]
    half = (win - 1) / 2.0
    coords = np.arange(win) - half
    g1 = np.exp(-(coords**2) / (2 * sigma**2))
    g1 /= g1.sum()
    w2 = np.outer(g1, g1)
    c1, c2 = k1**2, k2**2
    h, w, c = x.shape
    per_channel = []
    for ch in range(c):
        vals = []
        for i in range(h - win + 1):
            for j in range(w - win + 1):
                px = x[i : i + win, j : j + win, ch]
                py = y[i : i + win, j : j + win, ch]
                mx = (w2 * px).sum()
                my = (w2 * py).sum()
                vx = (w2 * px * px).sum() - mx * mx
                vy = (w2 * py * py).sum() - my * my
                cov = (w2 * px * py).sum() - mx * my
                vals.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        per_channel.append(np.mean(vals))
    return float(np.mean(per_channel))


def lpips_identity_bruteforce(a, b, eps=1e-10):
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    xn = x / (np.linalg.norm(x, axis=-1, keepdims=True) + eps)
    yn = y / (np.linalg.norm(y, axis=-1, keepdims=True) + eps)
    return float(np.mean(np.sum((xn - yn) ** 2, axis=-1)))


# --- psnr ------------------------------------------------------------------


class TestPsnr:
    def test_identical_hits_cap(self):
        a = rand_image(np.random.default_rng(0))
        assert psnr(a, a) == 100.0

    def test_uniform_difference_golden_value(self):
        # 16/255 offset on the [0, 1] scale is 32/255 on [-1, 1]
        a = np.zeros((16, 16, 3))
        b = a + 2.0 * 16.0 / 255.0
        expected = 10.0 * math.log10(1.0 / (16.0 / 255.0) ** 2)
        assert psnr(a, b) == pytest.approx(expected, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rand_image(rng), rand_image(rng)
        assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            a, b = rand_image(rng), rand_image(rng)
            assert psnr(a, b) == pytest.approx(psnr_bruteforce(a, b), abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            psnr(np.zeros((8, 8, 3)), np.zeros((9, 8, 3)))


# --- ssim ------------------------------------------------------------------


class TestSsim:
    def test_identical_is_one(self):
        a = rand_image(np.random.default_rng(3))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_matches_bruteforce_on_16x16(self):
        rng = np.random.default_rng(4)
        for _ in range(3):
            a, b = rand_image(rng), rand_image(rng)
            assert ssim(a, b) == pytest.approx(ssim_bruteforce(a, b), abs=1e-6)

    def test_negation_of_constant_regions_matches_bruteforce(self):
        a = np.full((16, 16, 3), 0.5)
        a[:8] = -0.25
        b = -a
        assert ssim(a, b) == pytest.approx(ssim_bruteforce(a, b), abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a, b = rand_image(rng), rand_image(rng)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            ssim(np.zeros((10, 16, 3)), np.zeros((10, 16, 3)))

    def test_window_normalized(self):
        g = gaussian_window()
        assert g.sum() == pytest.approx(1.0, abs=1e-12)
        assert len(g) == 11


# --- lpips -----------------------------------------------------------------


class TestLpips:
    def test_identical_is_zero(self):
        a = rand_image(np.random.default_rng(6))
        assert lpips(a, a, IdentityBackend()) == 0.0

    def test_identity_backend_matches_direct_formula(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            a, b = rand_image(rng), rand_image(rng)
            assert lpips(a, b, IdentityBackend()) == pytest.approx(
                lpips_identity_bruteforce(a, b), abs=1e-6
            )

    def test_missing_backend_raises(self):
        a = rand_image(np.random.default_rng(8))
        with pytest.raises(BackendMissingError):
            lpips(a, a, None)

    def test_nonnegative(self):
        rng = np.random.default_rng(9)
        a, b = rand_image(rng), rand_image(rng)
        assert lpips(a, b, IdentityBackend()) >= 0.0
