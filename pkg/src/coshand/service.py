"""Inference service: loads one model bundle and serves prediction over HTTP.

Endpoints: POST /predict, POST /segment (proxy to a configured segmenter),
GET /health, GET /model. Requests are validated (dimension agreement, size
cap, near-binary masks), auto-resized to the model resolution with a warning
rather than rejected, and answered with the seeds used so every returned
sample is reproducible. A bounded worker pool plus a small intake queue
guards the single shared model; overflow is rejected with 429.
"""

import dataclasses
import secrets
import threading
import time
from dataclasses import dataclass

import numpy as np
import torch
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .bundle import load_bundle
from .data.frames import resize_image, resize_mask
from .data.segmenter import acquire_mask
from .diffusion import SampleConfig, assemble_context_batch, sample_latents
from .errors import AdapterUnavailableError, NoDetectionError
from .imageio import (
    b64_decode_png,
    b64_encode_png,
    image_to_uint8,
    png_bytes_from_image,
    png_bytes_from_mask,
    uint8_from_png_bytes,
    uint8_to_image,
)

DEFAULT_STEPS = 50
BINARY_LOW, BINARY_HIGH = 64, 192
NONBINARY_TOLERANCE = 0.01


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8008
    checkpoint: str = ""
    max_concurrent: int = 4
    max_queue: int = 16
    max_image_side: int = 512
    default_steps: int = DEFAULT_STEPS
    cors_origins: tuple = ("*",)


class PredictRequest(BaseModel):
    image: str
    mask_current: str
    mask_query: str
    num_samples: int = Field(default=4, ge=1, le=16)
    guidance_scale: float = Field(default=2.5, ge=0.0)
    seed: int | None = None
    steps: int | None = None


class PredictResponse(BaseModel):
    samples: list[str]
    seeds: list[int]
    model_fingerprint: str
    timing_ms: float
    warnings: list[str]


class SegmentRequest(BaseModel):
    image: str
    bbox: list[float] | None = None


def _error(status: int, code: str, detail: str = ""):
    return JSONResponse(status_code=status, content={"error": code, "detail": detail})


def _decode_mask_b64(text: str, warnings: list, name: str) -> np.ndarray | None:
    """Decode + threshold a near-binary mask; None means reject as nonbinary."""
    gray = uint8_from_png_bytes(b64_decode_png(text), "L")
    between = np.count_nonzero((gray >= BINARY_LOW) & (gray <= BINARY_HIGH))
    if between > NONBINARY_TOLERANCE * gray.size:
        return None
    if np.count_nonzero((gray != 0) & (gray != 255)):
        warnings.append(f"{name}: antialiased strokes thresholded at 128")
    return (gray >= 128).astype(np.uint8)


class _Gate:
    """Bounded concurrency with an explicit intake queue limit."""

    def __init__(self, max_concurrent: int, max_queue: int):
        self.sem = threading.Semaphore(max_concurrent)
        self.lock = threading.Lock()
        self.in_flight = 0
        self.limit = max_concurrent + max_queue

    def try_enter(self) -> bool:
        with self.lock:
            if self.in_flight >= self.limit:
                return False
            self.in_flight += 1
        self.sem.acquire()
        return True

    def leave(self):
        self.sem.release()
        with self.lock:
            self.in_flight -= 1


def predict_images(bundle, image, mask_current, mask_query, k, guidance, seed, steps):
    """Replicate one conditioning k times and sample with seeds seed..seed+k-1."""
    x = torch.from_numpy(image.transpose(2, 0, 1)).float().unsqueeze(0).repeat(k, 1, 1, 1)
    hc = torch.from_numpy(mask_current).unsqueeze(0).unsqueeze(0).repeat(k, 1, 1, 1)
    hq = torch.from_numpy(mask_query).unsqueeze(0).unsqueeze(0).repeat(k, 1, 1, 1)
    if bundle.ucg_mode:
        hc = torch.zeros_like(hc)
        hq = torch.zeros_like(hq)
    ctx, emb = assemble_context_batch(x, hc, hq, bundle.codec, bundle.embedder)
    if bundle.embedder is None:
        emb = torch.zeros(k, bundle.denoiser.config.semantic_dim)
    seeds = [seed + j for j in range(k)]
    cfg = SampleConfig(steps=steps, guidance_scale=guidance, seed=seed)
    z = sample_latents(bundle.denoiser, ctx, emb, bundle.schedule, cfg, seeds=seeds)
    with torch.no_grad():
        imgs = bundle.codec.decode_batch(z)
    return np.clip(imgs.numpy().transpose(0, 2, 3, 1), -1.0, 1.0), seeds


def create_app(bundle, config: ServeConfig, segmenter=None) -> FastAPI:
    app = FastAPI(title="coshand predict service", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    gate = _Gate(config.max_concurrent, config.max_queue)

    @app.get("/health")
    def health():
        return {"status": "ok", "model": bundle.fingerprint}

    @app.get("/model")
    def model_info():
        return {
            "fingerprint": bundle.fingerprint,
            "arch_fingerprint": bundle.arch_fingerprint,
            "resolution": bundle.resolution,
            "step": bundle.step,
            "uses_ema": bundle.uses_ema,
            "arch": bundle.configs["arch"],
        }

    @app.post("/segment")
    def segment(req: SegmentRequest):
        if segmenter is None:
            return _error(503, "adapter_unavailable", "no segmenter configured")
        try:
            rgb = uint8_from_png_bytes(b64_decode_png(req.image), "RGB")
        except Exception as e:
            return _error(400, "invalid_image", str(e))
        image = uint8_to_image(rgb)
        try:
            mask = acquire_mask(image, segmenter, hint=req.bbox)
        except NoDetectionError:
            return _error(422, "no_detection", "no actor pixels found")
        except AdapterUnavailableError as e:
            return _error(503, "adapter_unavailable", str(e))
        return {"mask": b64_encode_png(png_bytes_from_mask(mask))}

    @app.post("/predict")
    def predict(req: PredictRequest):
        t0 = time.time()
        warnings = []
        try:
            rgb = uint8_from_png_bytes(b64_decode_png(req.image), "RGB")
            mask_c = _decode_mask_b64(req.mask_current, warnings, "mask_current")
            mask_q = _decode_mask_b64(req.mask_query, warnings, "mask_query")
        except Exception as e:
            return _error(400, "invalid_image", str(e))
        if mask_c is None or mask_q is None:
            return _error(400, "nonbinary_mask", ">1% of mask pixels are mid-gray")
        if rgb.shape[:2] != mask_c.shape or rgb.shape[:2] != mask_q.shape:
            return _error(
                400,
                "shape_mismatch",
                f"image {rgb.shape[:2]} vs masks {mask_c.shape} / {mask_q.shape}",
            )
        if max(rgb.shape[:2]) > config.max_image_side:
            return _error(413, "image_too_large", f"side limit {config.max_image_side}")

        # work on the center square; non-square borders pass through unchanged
        h0, w0 = rgb.shape[:2]
        side = min(h0, w0)
        y0, x0 = (h0 - side) // 2, (w0 - side) // 2
        crop = rgb[y0 : y0 + side, x0 : x0 + side]
        if (h0, w0) != (side, side):
            warnings.append(f"center-cropped {h0}x{w0} -> {side}x{side}")
        image = uint8_to_image(crop)
        mask_c_crop = mask_c[y0 : y0 + side, x0 : x0 + side]
        mask_q_crop = mask_q[y0 : y0 + side, x0 : x0 + side]
        if side != bundle.resolution:
            image = np.clip(resize_image(image, bundle.resolution), -1.0, 1.0)
            mask_c_crop = resize_mask(mask_c_crop, bundle.resolution)
            mask_q_crop = resize_mask(mask_q_crop, bundle.resolution)
            warnings.append(f"auto-resized {side} -> {bundle.resolution}")
        mask_c, mask_q = mask_c_crop, mask_q_crop

        seed = req.seed if req.seed is not None else secrets.randbelow(2**31)
        steps = req.steps or config.default_steps
        if not 1 <= steps <= bundle.schedule.T:
            return _error(400, "invalid_steps", f"steps must be in [1, {bundle.schedule.T}]")

        if not gate.try_enter():
            return _error(429, "overloaded", "queue full; retry later")
        try:
            imgs, seeds = predict_images(
                bundle, image, mask_c, mask_q, req.num_samples, req.guidance_scale, seed, steps
            )
        except Exception as e:  # noqa: BLE001 - surfaced as a typed 500
            return _error(500, "internal", str(e))
        finally:
            gate.leave()

        payload = []
        for img in imgs:
            if side != bundle.resolution:
                img = np.clip(resize_image(img, side), -1.0, 1.0)
            if (h0, w0) != (side, side):
                full = uint8_to_image(rgb.copy())
                full[y0 : y0 + side, x0 : x0 + side] = img
                img = full
            payload.append(b64_encode_png(png_bytes_from_image(img)))
        return PredictResponse(
            samples=payload,
            seeds=seeds,
            model_fingerprint=bundle.fingerprint,
            timing_ms=round((time.time() - t0) * 1000.0, 2),
            warnings=warnings,
        )

    return app


def serve(config: ServeConfig, segmenter=None):
    """Load the bundle and run uvicorn until interrupted."""
    import uvicorn

    bundle = load_bundle(config.checkpoint)
    app = create_app(bundle, config, segmenter=segmenter)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
