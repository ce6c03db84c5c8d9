"""On-disk dataset layout shared by the toy generator and the video pipeline.

Layout:
    <root>/<split>/<sample_id>/{x_t.png, h_t.png, h_t1.png, x_t1.png, meta.json}
    <root>/<split>/manifest.json

Images are 8-bit RGB PNG, masks 8-bit grayscale PNG with values {0, 255};
loading maps images to [-1, 1] float32 and masks to {0, 1} uint8, so a
write/load round-trip is bit-exact at the uint8 level.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import IOFailureError, ShapeMismatchError
from ..imageio import (
    load_image_png,
    load_mask_png,
    save_image_png,
    save_mask_png,
)

SAMPLE_FILES = ("x_t.png", "h_t.png", "h_t1.png", "x_t1.png", "meta.json")
MANIFEST_NAME = "manifest.json"
PROVENANCE_TAGS = ("segmenter", "manual", "synthetic")


@dataclass
class FramePairSample:
    x_t: np.ndarray  # (H, W, 3) float32 in [-1, 1]
    h_t: np.ndarray  # (H, W) uint8 {0, 1}
    h_t1: np.ndarray
    x_t1: np.ndarray
    meta: dict = field(default_factory=dict)

    def validate(self):
        shapes = {self.x_t.shape[:2], self.h_t.shape, self.h_t1.shape, self.x_t1.shape[:2]}
        if len(shapes) != 1:
            raise ShapeMismatchError(f"inconsistent H x W across arrays: {shapes}")
        for name, mask in (("h_t", self.h_t), ("h_t1", self.h_t1)):
            if not np.isin(mask, (0, 1)).all():
                raise ShapeMismatchError(f"{name} is not binary")
        return self


@dataclass
class DatasetManifest:
    root: str
    split: str
    sample_ids: list
    count: int
    source: dict = field(default_factory=dict)

    def sample_dir(self, sample_id):
        return os.path.join(self.root, self.split, sample_id)

    def verify(self):
        """Check that every listed id resolves to a complete sample directory."""
        missing = []
        for sid in self.sample_ids:
            d = self.sample_dir(sid)
            for f in SAMPLE_FILES:
                if not os.path.isfile(os.path.join(d, f)):
                    missing.append(f"{sid}/{f}")
        if missing:
            raise IOFailureError(f"incomplete samples: {missing[:5]} ({len(missing)} files missing)")
        return self


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_sample(root, split, sample_id, sample: FramePairSample):
    sample.validate()
    d = os.path.join(root, split, sample_id)
    os.makedirs(d, exist_ok=True)
    save_image_png(os.path.join(d, "x_t.png"), sample.x_t)
    save_mask_png(os.path.join(d, "h_t.png"), sample.h_t)
    save_mask_png(os.path.join(d, "h_t1.png"), sample.h_t1)
    save_image_png(os.path.join(d, "x_t1.png"), sample.x_t1)
    with open(os.path.join(d, "meta.json"), "w") as f:
        f.write(canonical_json(sample.meta))


def load_sample(root, split, sample_id) -> FramePairSample:
    d = os.path.join(root, split, sample_id)
    try:
        with open(os.path.join(d, "meta.json")) as f:
            meta = json.load(f)
        sample = FramePairSample(
            x_t=load_image_png(os.path.join(d, "x_t.png")),
            h_t=load_mask_png(os.path.join(d, "h_t.png")),
            h_t1=load_mask_png(os.path.join(d, "h_t1.png")),
            x_t1=load_image_png(os.path.join(d, "x_t1.png")),
            meta=meta,
        )
    except OSError as e:
        raise IOFailureError(f"cannot load sample {sample_id}: {e}") from e
    return sample.validate()


def write_manifest(manifest: DatasetManifest):
    path = os.path.join(manifest.root, manifest.split, MANIFEST_NAME)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    payload = {
        "split": manifest.split,
        "sample_ids": list(manifest.sample_ids),
        "count": manifest.count,
        "source": manifest.source,
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(canonical_json(payload))
    os.replace(tmp, path)
    return path


def load_manifest(root, split) -> DatasetManifest:
    path = os.path.join(root, split, MANIFEST_NAME)
    try:
        with open(path) as f:
            payload = json.load(f)
    except OSError as e:
        raise IOFailureError(f"cannot read manifest {path}: {e}") from e
    return DatasetManifest(
        root=str(root),
        split=payload["split"],
        sample_ids=list(payload["sample_ids"]),
        count=int(payload["count"]),
        source=payload.get("source", {}),
    )
