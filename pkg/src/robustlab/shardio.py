"""Binary shard persistence and PNG export.

Shard file layout (all integers little-endian):

    magic   4 bytes  b"RLSH"
    version u32      1
    count   u32      N
    then named sections, each:
        name_len u16, name bytes (utf-8), payload_len u64, payload

Sections written (in this order): ``split`` (utf-8), ``seed`` (u64),
``images`` (f32, N*3*32*32), ``labels`` / ``shape_ids`` / ``texture_ids`` /
``fg_color_ids`` / ``bg_color_ids`` (u32 each), ``fg_masks`` (bit-packed u8,
row-major, N*32*32 bits). Unknown sections are rejected; a missing section
is a format error. See FORMATS.md for the same description.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np
from PIL import Image

from .dataset import IMG, DatasetShard
from .errors import FormatError

MAGIC = b"RLSH"
VERSION = 1

_SECTION_ORDER = ("split", "seed", "images", "labels", "shape_ids",
                  "texture_ids", "fg_color_ids", "bg_color_ids", "fg_masks")


def _write_section(f, name: str, payload: bytes):
    raw = name.encode("utf-8")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)
    f.write(struct.pack("<Q", len(payload)))
    f.write(payload)


def write_shard(shard: DatasetShard, path) -> None:
    n = len(shard)
    masks_packed = np.packbits(shard.fg_masks.reshape(n, -1), axis=1)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, n))
        _write_section(f, "split", shard.split.encode("utf-8"))
        _write_section(f, "seed", struct.pack("<Q", shard.seed))
        _write_section(f, "images",
                       shard.images.astype("<f4", copy=False).tobytes())
        for name in ("labels", "shape_ids", "texture_ids",
                     "fg_color_ids", "bg_color_ids"):
            arr = getattr(shard, name).astype("<u4", copy=False)
            _write_section(f, name, arr.tobytes())
        _write_section(f, "fg_masks", masks_packed.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise IOError(
            f"truncated shard file while reading {what}: expected {n} bytes "
            f"at offset {f.tell() - len(buf)}, got {len(buf)}")
    return buf


def read_shard(path) -> DatasetShard:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, n = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != VERSION:
            raise FormatError(f"unsupported shard version {version}")
        sections = {}
        for expected in _SECTION_ORDER:
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "section name length"))
            name = _read_exact(f, name_len, "section name").decode("utf-8")
            if name != expected:
                raise FormatError(f"section {name!r} where {expected!r} expected")
            (plen,) = struct.unpack("<Q", _read_exact(f, 8, f"{name} length"))
            sections[name] = _read_exact(f, plen, f"section {name}")
        if f.read(1):
            raise FormatError("trailing bytes after final section")

    images = np.frombuffer(sections["images"], dtype="<f4")
    if images.size != n * 3 * IMG * IMG:
        raise FormatError(f"images section holds {images.size} floats, "
                          f"expected {n * 3 * IMG * IMG}")
    ints = {}
    for name in ("labels", "shape_ids", "texture_ids",
                 "fg_color_ids", "bg_color_ids"):
        arr = np.frombuffer(sections[name], dtype="<u4")
        if arr.size != n:
            raise FormatError(f"{name} section holds {arr.size} values, expected {n}")
        ints[name] = arr.copy()
    packed = np.frombuffer(sections["fg_masks"], dtype=np.uint8)
    bits_per = IMG * IMG
    masks = np.unpackbits(packed.reshape(n, -1), axis=1, count=bits_per)
    return DatasetShard(
        images=images.reshape(n, 3, IMG, IMG).copy(),
        fg_masks=masks.reshape(n, IMG, IMG).astype(bool),
        split=sections["split"].decode("utf-8"),
        seed=struct.unpack("<Q", sections["seed"])[0],
        **ints,
    )


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a (3,H,W) float image in [0,1] to HWC uint8, rounding half up."""
    q = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return q.transpose(1, 2, 0)


def export_png(shard: DatasetShard, out_dir) -> None:
    """Write one PNG per sample (plus its mask) and a meta.jsonl sidecar."""
    os.makedirs(out_dir, exist_ok=True)
    meta_path = os.path.join(out_dir, "meta.jsonl")
    with open(meta_path, "w") as meta:
        for i in range(len(shard)):
            name = f"{i:06d}.png"
            mask_name = f"{i:06d}_mask.png"
            Image.fromarray(to_uint8(shard.images[i])).save(
                os.path.join(out_dir, name))
            Image.fromarray(shard.fg_masks[i].astype(np.uint8) * 255).save(
                os.path.join(out_dir, mask_name))
            row = {
                "index": i,
                "png": name,
                "fg_mask_png": mask_name,
                "class_label": int(shard.labels[i]),
                "shape_id": int(shard.shape_ids[i]),
                "texture_id": int(shard.texture_ids[i]),
                "fg_color_id": int(shard.fg_color_ids[i]),
                "bg_color_id": int(shard.bg_color_ids[i]),
            }
            meta.write(json.dumps(row) + "\n")
