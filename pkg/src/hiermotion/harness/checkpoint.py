"""Checkpoint container: a zip of named parameter blobs plus a JSON manifest.

Self-describing (format version, kind, config snapshot, RNG state) with a
SHA-256 per blob so tampering is caught at load time, naming the blob.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class VersionMismatch(CheckpointError):
    pass


class Corrupt(CheckpointError):
    pass


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class Checkpoint:
    kind: str
    config: dict
    blobs: dict[str, np.ndarray]
    rng_state: Optional[bytes] = None
    extra: dict = field(default_factory=dict)

    def state_dict(self) -> dict[str, torch.Tensor]:
        return {name: torch.as_tensor(arr) for name, arr in self.blobs.items()}


def from_module(kind: str, config: dict, module: torch.nn.Module,
                rng_state: Optional[bytes] = None, extra: Optional[dict] = None) -> Checkpoint:
    blobs = {name: tensor.detach().cpu().numpy().copy()
             for name, tensor in module.state_dict().items()}
    return Checkpoint(kind=kind, config=config, blobs=blobs, rng_state=rng_state,
                      extra=extra or {})


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": ckpt.kind,
        "config": ckpt.config,
        "config_hash": config_hash(ckpt.config),
        "rng_state": ckpt.rng_state.hex() if ckpt.rng_state else None,
        "extra": ckpt.extra,
        "blobs": {},
    }
    payloads = {}
    for name, arr in ckpt.blobs.items():
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
        data = buf.getvalue()
        manifest["blobs"][name] = {
            "sha256": hashlib.sha256(data).hexdigest(),
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
        }
        payloads[name] = data
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        for name, data in payloads.items():
            zf.writestr(f"blobs/{name}.npy", data)


def load_checkpoint(path: str | Path, expected_kind: Optional[str] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise Corrupt(f"no checkpoint at {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            version = manifest.get("format_version")
            if version != CHECKPOINT_FORMAT_VERSION:
                raise VersionMismatch(
                    f"checkpoint format {version} != supported {CHECKPOINT_FORMAT_VERSION}")
            if expected_kind is not None and manifest.get("kind") != expected_kind:
                raise Corrupt(f"checkpoint kind {manifest.get('kind')!r}, "
                              f"expected {expected_kind!r}")
            blobs = {}
            for name, meta in manifest["blobs"].items():
                data = zf.read(f"blobs/{name}.npy")
                digest = hashlib.sha256(data).hexdigest()
                if digest != meta["sha256"]:
                    raise Corrupt(f"blob {name!r} failed its integrity check")
                arr = np.load(io.BytesIO(data), allow_pickle=False)
                blobs[name] = arr
    except zipfile.BadZipFile as exc:
        raise Corrupt(f"{path} is not a readable checkpoint: {exc}") from exc
    except KeyError as exc:
        raise Corrupt(f"{path} is missing entry {exc}") from exc
    rng_hex = manifest.get("rng_state")
    return Checkpoint(
        kind=manifest["kind"], config=manifest["config"], blobs=blobs,
        rng_state=bytes.fromhex(rng_hex) if rng_hex else None,
        extra=manifest.get("extra", {}),
    )


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
