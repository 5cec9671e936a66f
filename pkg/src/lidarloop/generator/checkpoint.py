"""Checkpoint container: magic "LGCK", u32 version, u32 manifest length,
JSON manifest (config + blob directory), then named f32 LE parameter blobs.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

from lidarloop.generator.pipeline import GeneratorConfig, GeneratorModel, config_dict

_MAGIC = b"LGCK"
_VERSION = 1


def save_model(model: GeneratorModel, path) -> None:
    state = model.state_dict()
    blobs = []
    payload = bytearray()
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        blobs.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.tobytes())
    manifest = json.dumps(
        {"version": _VERSION, "config": config_dict(model.config), "blobs": blobs}
    ).encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(struct.pack("<4sII", _MAGIC, _VERSION, len(manifest)))
        fp.write(manifest)
        fp.write(bytes(payload))


def load_model(path) -> GeneratorModel:
    with open(path, "rb") as fp:
        head = fp.read(12)
        if len(head) != 12:
            raise ValueError("truncated checkpoint header")
        magic, version, mlen = struct.unpack("<4sII", head)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        manifest = json.loads(fp.read(mlen).decode("utf-8"))
        payload = fp.read()
    config = GeneratorConfig(**manifest["config"])
    model = GeneratorModel(config)
    state = {}
    for blob in manifest["blobs"]:
        shape = tuple(blob["shape"])
        n = int(np.prod(shape)) if shape else 1
        off = blob["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=off).reshape(shape)
        state[blob["name"]] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)
    model.eval()
    for p in model.ae.parameters():
        p.requires_grad_(False)
    return model
