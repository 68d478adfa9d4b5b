"""Small CNN architectures and checkpoint persistence.

Two architectures are available, both ending in global average pooling so
every conv channel has a spatial activation map:

* ``mini3``: conv5x5(16) - relu - pool - conv3x3(32) - relu - pool -
  conv3x3(64) - relu - gap - linear(8)
* ``mini4``: mini3 with one extra conv3x3(64) - relu before gap

Checkpoint layout (little-endian):

    magic   4 bytes  b"RLCK"
    version u32      1
    meta_len u32, meta JSON bytes (arch, metadata dict, tensor count)
    per tensor: name_len u16, name utf-8, ndim u8, ndim * u32 dims,
                f32 payload (prod(dims) * 4 bytes)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, IntegrityError, UsageError

MAGIC = b"RLCK"
VERSION = 1

N_CLASSES = 8
IN_CHANNELS = 3


@dataclass(frozen=True)
class LayerSpec:
    kind: str                       # conv | relu | maxpool | gap | linear
    name: str = ""
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    out_features: int = 0


def _conv(name, out_channels, kernel, padding):
    return LayerSpec("conv", name=name, out_channels=out_channels,
                     kernel=kernel, padding=padding)


_ARCHS: Dict[str, List[LayerSpec]] = {
    "mini3": [
        _conv("conv1", 16, 5, 2), LayerSpec("relu"), LayerSpec("maxpool"),
        _conv("conv2", 32, 3, 1), LayerSpec("relu"), LayerSpec("maxpool"),
        _conv("conv3", 64, 3, 1), LayerSpec("relu"),
        LayerSpec("gap"),
        LayerSpec("linear", name="fc", out_features=N_CLASSES),
    ],
    "mini4": [
        _conv("conv1", 16, 5, 2), LayerSpec("relu"), LayerSpec("maxpool"),
        _conv("conv2", 32, 3, 1), LayerSpec("relu"), LayerSpec("maxpool"),
        _conv("conv3", 64, 3, 1), LayerSpec("relu"),
        _conv("conv4", 64, 3, 1), LayerSpec("relu"),
        LayerSpec("gap"),
        LayerSpec("linear", name="fc", out_features=N_CLASSES),
    ],
}


def arch_names() -> List[str]:
    return sorted(_ARCHS)


class Network:
    """An ordered layer stack with named parameter tensors.

    ``params`` maps ``<layer>.weight`` / ``<layer>.bias`` to Tensors with
    ``requires_grad=True``. ``meta`` carries the training provenance
    (regime, seed, epochs) and round-trips through checkpoints.
    """

    def __init__(self, arch_name: str, layers: List[LayerSpec],
                 params: Dict[str, Tensor], meta: Optional[dict] = None):
        self.arch_name = arch_name
        self.layers = layers
        self.params = params
        self.meta = dict(meta or {})

    @property
    def conv_layer_names(self) -> List[str]:
        return [l.name for l in self.layers if l.kind == "conv"]

    def conv_width(self, layer: str) -> int:
        for l in self.layers:
            if l.kind == "conv" and l.name == layer:
                return l.out_channels
        raise ConfigurationError(f"{self.arch_name} has no conv layer {layer!r}")

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def set_requires_grad(self, flag: bool):
        for p in self.params.values():
            p.requires_grad = flag

    def forward(self, x: Tensor, ablate: Optional[tuple] = None,
                collect: Optional[dict] = None) -> Tensor:
        """Run the stack on [N,3,32,32] input, returning [N,8] logits.

        ``ablate=(layer_name, channel)`` zeroes that channel of the named
        conv layer's post-ReLU map (``channel=None`` zeroes the whole map);
        only valid outside a tape. ``collect`` is filled with post-ReLU
        activation arrays keyed by conv layer name.
        """
        if ablate is not None and ad._active_tape is not None:
            raise UsageError("ablation is an inference-time tool; no tape allowed")
        h = x
        current_conv = None
        for spec in self.layers:
            if spec.kind == "conv":
                current_conv = spec.name
                h = ad.conv2d(h, self.params[f"{spec.name}.weight"],
                              self.params[f"{spec.name}.bias"],
                              stride=spec.stride, padding=spec.padding)
            elif spec.kind == "relu":
                h = ad.relu(h)
                if ablate is not None and current_conv == ablate[0]:
                    arr = h.data.copy()
                    if ablate[1] is None:
                        arr[:] = 0.0
                    else:
                        arr[:, ablate[1]] = 0.0
                    h = Tensor(arr)
                if collect is not None and current_conv is not None:
                    collect[current_conv] = h.data
            elif spec.kind == "maxpool":
                h = ad.maxpool2(h)
            elif spec.kind == "gap":
                h = ad.global_avg_pool(h)
            elif spec.kind == "linear":
                h = ad.linear(h, self.params[f"{spec.name}.weight"],
                              self.params[f"{spec.name}.bias"])
        return h

    def logits(self, images: np.ndarray, batch_size: int = 256,
               ablate: Optional[tuple] = None) -> np.ndarray:
        """Tape-free batched forward over an (N,3,32,32) array."""
        outs = []
        for lo in range(0, len(images), batch_size):
            out = self.forward(Tensor(images[lo:lo + batch_size]), ablate=ablate)
            outs.append(out.data)
        return np.concatenate(outs) if outs else np.empty((0, N_CLASSES), np.float32)

    def predict(self, images: np.ndarray, batch_size: int = 256,
                ablate: Optional[tuple] = None) -> np.ndarray:
        """Top-1 labels; argmax ties resolve to the lowest class index."""
        return self.logits(images, batch_size, ablate).argmax(axis=1)

    def activations(self, images: np.ndarray, layers: List[str],
                    batch_size: int = 256) -> Dict[str, np.ndarray]:
        """Post-ReLU activation maps for the named conv layers."""
        for layer in layers:
            self.conv_width(layer)
        chunks: Dict[str, list] = {l: [] for l in layers}
        for lo in range(0, len(images), batch_size):
            got: dict = {}
            self.forward(Tensor(images[lo:lo + batch_size]), collect=got)
            for l in layers:
                chunks[l].append(got[l])
        return {l: np.concatenate(chunks[l]) for l in layers}


def _expected_shapes(arch_name: str) -> Dict[str, tuple]:
    layers = _ARCHS[arch_name]
    shapes: Dict[str, tuple] = {}
    cin = IN_CHANNELS
    feat = None
    for spec in layers:
        if spec.kind == "conv":
            shapes[f"{spec.name}.weight"] = (spec.out_channels, cin,
                                             spec.kernel, spec.kernel)
            shapes[f"{spec.name}.bias"] = (spec.out_channels,)
            cin = spec.out_channels
        elif spec.kind == "gap":
            feat = cin
        elif spec.kind == "linear":
            shapes[f"{spec.name}.weight"] = (spec.out_features, feat)
            shapes[f"{spec.name}.bias"] = (spec.out_features,)
    return shapes


def build(arch: str, seed: int) -> Network:
    """Fresh network with fan-in-scaled uniform weights and zero biases."""
    if arch not in _ARCHS:
        raise ConfigurationError(
            f"unknown arch {arch!r}; valid: {', '.join(arch_names())}")
    rng = np.random.default_rng(seed)
    params: Dict[str, Tensor] = {}
    for name, shape in _expected_shapes(arch).items():
        if name.endswith(".bias"):
            data = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        params[name] = Tensor(data, requires_grad=True)
    return Network(arch, _ARCHS[arch], params,
                   meta={"regime": "untrained", "seed": int(seed), "epochs": 0})


def save(net: Network, path) -> None:
    names = sorted(net.params)
    meta = {"arch": net.arch_name, "meta": net.meta, "tensors": len(names)}
    meta_raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(meta_raw)))
        f.write(meta_raw)
        for name in names:
            t = net.params[name]
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(t.data.astype("<f4", copy=False).tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise IOError(
            f"truncated checkpoint while reading {what}: expected {n} bytes "
            f"at offset {f.tell() - len(buf)}, got {len(buf)}")
    return buf


def load(path) -> Network:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != MAGIC:
            raise IntegrityError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise IntegrityError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(f, 4, "meta length"))
        header = json.loads(_read_exact(f, meta_len, "meta"))
        arch = header.get("arch")
        if arch not in _ARCHS:
            raise IntegrityError(f"checkpoint names unknown arch {arch!r}")
        expected = _expected_shapes(arch)
        params: Dict[str, Tensor] = {}
        for _ in range(int(header.get("tensors", 0))):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "tensor name length"))
            name = _read_exact(f, name_len, "tensor name").decode("utf-8")
            if name not in expected:
                raise IntegrityError(f"unknown tensor {name!r} for arch {arch}")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1, f"{name} ndim"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, f"{name} dims"))
            if dims != expected[name]:
                raise IntegrityError(
                    f"tensor {name!r} has shape {dims}, arch {arch} expects "
                    f"{expected[name]}")
            count = int(np.prod(dims)) if ndim else 1
            payload = _read_exact(f, 4 * count, f"{name} payload")
            data = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
            params[name] = Tensor(data, requires_grad=True)
        if f.read(1):
            raise IntegrityError("trailing bytes after final tensor")
    missing = sorted(set(expected) - set(params))
    if missing:
        raise IntegrityError(f"checkpoint is missing tensors: {missing}")
    return Network(arch, _ARCHS[arch], params, meta=header.get("meta", {}))
