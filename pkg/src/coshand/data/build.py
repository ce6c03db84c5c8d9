"""End-to-end dataset construction from a directory of videos.

Pairs failing mask acquisition (no detection, or an adapter that stays down
through its retries) are skipped and counted; the manifest records the skip
total. Mask acquisition may run in a bounded thread pool since adapter calls
are independent and idempotent; samples are written in deterministic order
after all masks for a video are in.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import (
    AdapterUnavailableError,
    AllSamplesSkippedError,
    NoDetectionError,
    UnreadableVideoError,
    ZeroFramesError,
)
from ..imageio import image_to_uint8, uint8_to_image
from .frames import extract_frames, list_videos, pair_frames
from .samples import DatasetManifest, FramePairSample, write_manifest, write_sample
from .segmenter import acquire_mask


def build_dataset(
    video_dir,
    adapter,
    out_root,
    split: str = "train",
    fps: float = 12.0,
    interval: int = 3,
    stride: int | None = None,
    resolution: int = 64,
    workers: int = 1,
) -> DatasetManifest:
    videos = list_videos(video_dir)
    if not videos:
        raise UnreadableVideoError(f"no video files in {video_dir}")

    sample_ids = []
    skipped = 0
    unreadable = 0
    index = 0
    for video in videos:
        try:
            frames = extract_frames(video, fps=fps, resolution=resolution)
            pairs = pair_frames(frames, interval=interval, stride=stride)
        except (UnreadableVideoError, ZeroFramesError):
            unreadable += 1
            continue
        except Exception:
            skipped += 1
            continue

        def get_mask(t):
            try:
                return acquire_mask(frames[t], adapter)
            except (NoDetectionError, AdapterUnavailableError):
                return None

        needed = sorted({t for p in pairs for t in p})
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                masks = dict(zip(needed, pool.map(get_mask, needed)))
        else:
            masks = {t: get_mask(t) for t in needed}

        for t, t1 in pairs:
            if masks[t] is None or masks[t1] is None:
                skipped += 1
                continue
            sid = f"{split}_{index:06d}"
            # round-trip through uint8 so stored metadata matches stored pixels
            sample = FramePairSample(
                x_t=uint8_to_image(image_to_uint8(frames[t])),
                h_t=masks[t],
                h_t1=masks[t1],
                x_t1=uint8_to_image(image_to_uint8(frames[t1])),
                meta={
                    "source": os.path.basename(video),
                    "frame_t": t,
                    "frame_t1": t1,
                    "fps": fps,
                    "interval": interval,
                    "mask_provenance": "segmenter",
                },
            )
            write_sample(out_root, split, sid, sample)
            sample_ids.append(sid)
            index += 1

    if not sample_ids:
        raise AllSamplesSkippedError(
            f"no usable samples from {len(videos)} videos ({skipped} skipped, {unreadable} unreadable)"
        )
    manifest = DatasetManifest(
        root=str(out_root),
        split=split,
        sample_ids=sample_ids,
        count=len(sample_ids),
        source={
            "kind": "video",
            "video_count": len(videos),
            "fps": fps,
            "interval": interval,
            "stride": interval if stride is None else stride,
            "resolution": resolution,
            "skipped": skipped,
            "unreadable_videos": unreadable,
        },
    )
    write_manifest(manifest)
    return manifest
