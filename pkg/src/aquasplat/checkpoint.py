"""Binary checkpoints: the Gaussian cloud followed by named network arrays.

Layout (little-endian)::

    cloud block        see scene.write_cloud ('AQSP', u32 version, u64 count, ...)
    u32                flags (bit 0: medium enabled)
    u32                number of sections
    per section        u16 name length, utf-8 name, u32 ndim, u32 dims..., f32 data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import SceneModel
from .scene import read_cloud, write_cloud


def save_checkpoint(path: str | Path, model: SceneModel) -> None:
    arrays = model.network_params()
    with open(path, "wb") as fh:
        write_cloud(fh, model.cloud)
        fh.write(struct.pack("<II", int(model.use_medium), len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> SceneModel:
    with open(path, "rb") as fh:
        cloud = read_cloud(fh)
        flags, n_sections = struct.unpack("<II", fh.read(8))
        sections = {}
        for _ in range(n_sections):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            sections[name] = data.astype(np.float64)
    model = SceneModel(cloud, use_medium=bool(flags & 1))
    targets = model.network_params()
    missing = set(targets) - set(sections)
    if missing:
        raise ValueError(f"checkpoint is missing sections: {sorted(missing)}")
    for name, arr in targets.items():
        if arr.shape != sections[name].shape:
            raise ValueError(f"section {name}: shape {sections[name].shape}, expected {arr.shape}")
        arr[...] = sections[name]
    return model
