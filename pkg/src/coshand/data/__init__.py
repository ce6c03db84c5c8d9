from .build import build_dataset
from .frames import center_crop_square, extract_frames, list_videos, pair_frames, resize_image, resize_mask
from .samples import (
    DatasetManifest,
    FramePairSample,
    load_manifest,
    load_sample,
    write_manifest,
    write_sample,
)
from .segmenter import CallableAdapter, HTTPSegmenterAdapter, SegmenterAdapter, acquire_mask

__all__ = [
    "CallableAdapter",
    "DatasetManifest",
    "FramePairSample",
    "HTTPSegmenterAdapter",
    "SegmenterAdapter",
    "acquire_mask",
    "build_dataset",
    "center_crop_square",
    "extract_frames",
    "list_videos",
    "load_manifest",
    "load_sample",
    "pair_frames",
    "resize_image",
    "resize_mask",
    "write_manifest",
    "write_sample",
]
