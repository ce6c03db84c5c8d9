"""Deterministic checkpoint archives.

A checkpoint is a ZIP (stored, fixed timestamps) containing one npy member
per parameter array plus a canonical-JSON manifest with the embedded
configs, a version field, and a config fingerprint. Identical arrays and
configs produce identical bytes, so load-then-save round-trips exactly and
fingerprints can gate checkpoint/config compatibility.
"""

import hashlib
import io
import json
import os
import zipfile

import numpy as np

from .errors import CheckpointMissingError, IncompatibleCheckpointError

ARCHIVE_VERSION = "1"
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint_of(configs: dict) -> str:
    """Stable hex fingerprint of a jsonable config tree."""
    return hashlib.sha256(canonical_json(configs).encode()).hexdigest()[:16]


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_archive(path, arrays: dict, configs: dict, kind: str) -> str:
    """Write arrays + configs to a byte-deterministic archive; returns the fingerprint."""
    fingerprint = fingerprint_of(configs)
    manifest = {
        "archive_version": ARCHIVE_VERSION,
        "kind": kind,
        "configs": configs,
        "fingerprint": fingerprint,
        "arrays": sorted(arrays.keys()),
    }
    tmp = str(path) + ".tmp"
    os.makedirs(os.path.dirname(os.path.abspath(str(path))), exist_ok=True)
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=_FIXED_DATE)
        zf.writestr(info, canonical_json(manifest))
        for name in sorted(arrays.keys()):
            info = zipfile.ZipInfo(f"arrays/{name}.npy", date_time=_FIXED_DATE)
            zf.writestr(info, _npy_bytes(np.asarray(arrays[name])))
    os.replace(tmp, str(path))
    return fingerprint


def load_archive(path):
    """Read an archive; returns (arrays dict, manifest dict)."""
    if not os.path.isfile(str(path)):
        raise CheckpointMissingError(f"no checkpoint at {path}")
    try:
        with zipfile.ZipFile(str(path), "r") as zf:
            manifest = json.loads(zf.read("manifest.json"))
            arrays = {}
            for name in manifest["arrays"]:
                with zf.open(f"arrays/{name}.npy") as f:
                    arrays[name] = np.lib.format.read_array(f, allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, ValueError) as e:
        raise IncompatibleCheckpointError(f"unreadable checkpoint {path}: {e}") from e
    return arrays, manifest


def require_kind(manifest: dict, kind: str):
    if manifest.get("kind") != kind:
        raise IncompatibleCheckpointError(
            f"expected a {kind!r} checkpoint, found {manifest.get('kind')!r}"
        )


def state_to_arrays(state_dict, prefix: str) -> dict:
    """Flatten a torch state dict into named numpy arrays."""
    return {f"{prefix}/{k}": v.detach().cpu().numpy() for k, v in state_dict.items()}


def arrays_to_state(arrays: dict, prefix: str) -> dict:
    """Rebuild a torch state dict (as tensors) from prefixed arrays."""
    import torch

    plen = len(prefix) + 1
    return {
        k[plen:]: torch.from_numpy(np.array(v))
        for k, v in arrays.items()
        if k.startswith(prefix + "/")
    }


def params_hash(module) -> str:
    """Order-stable hash of a module's parameter and buffer bytes."""
    h = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state.keys()):
        h.update(name.encode())
        h.update(state[name].detach().cpu().numpy().tobytes())
    return h.hexdigest()
