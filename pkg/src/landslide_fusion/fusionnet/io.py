"""Weight persistence: a flat little-endian float32 blob plus a JSON manifest.

The manifest maps every tensor name to ``{"offset", "shape"}`` (offset in
elements) and carries the fusion config plus any caller metadata, e.g. the
scaler used to prepare inputs.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import FusionConfig, FusionNet

MANIFEST_FORMAT = "landslide-fusionnet/1"


def save_weights(net: FusionNet, blob_path, manifest_path=None, metadata=None) -> Path:
    blob_path = Path(blob_path)
    manifest_path = Path(manifest_path) if manifest_path else blob_path.with_suffix(".json")
    tensors = {**{n: p.data for n, p in net.params.items()},
               **{f"running:{n}": v for n, v in net.running.items()}}
    entries, chunks, offset = {}, [], 0
    for name, arr in tensors.items():
        flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
        entries[name] = {"offset": offset, "shape": list(arr.shape)}
        chunks.append(flat)
        offset += flat.size
    blob_path.write_bytes(np.concatenate(chunks).tobytes() if chunks else b"")
    manifest = {
        "format": MANIFEST_FORMAT,
        "blob": blob_path.name,
        "dtype": "<f4",
        "config": net.config.to_dict(),
        "tensors": entries,
        "metadata": metadata or {},
    }
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    return manifest_path


def load_weights(manifest_path, dtype=np.float32):
    """Rebuild an eval-mode net; returns ``(net, metadata)``."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{manifest_path}: not a {MANIFEST_FORMAT} manifest")
    blob = np.frombuffer((manifest_path.parent / manifest["blob"]).read_bytes(), dtype="<f4")
    net = FusionNet(FusionConfig.from_dict(manifest["config"]), dtype=dtype)
    for name, entry in manifest["tensors"].items():
        size = int(np.prod(entry["shape"]))
        arr = blob[entry["offset"]:entry["offset"] + size].reshape(entry["shape"]).astype(dtype)
        if name.startswith("running:"):
            net.running[name.split(":", 1)[1]] = arr
        else:
            if net.params[name].shape != arr.shape:
                raise ValueError(f"{name}: manifest shape {arr.shape} != {net.params[name].shape}")
            net.params[name].data = arr
    net.eval()
    return net, manifest.get("metadata", {})
