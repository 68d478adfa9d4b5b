"""Out-of-distribution image transforms and the both-correct evaluation subset.

All transforms map float images in [0,1] to float images in [0,1] and are
pure per-image functions. ``build_eval_subset`` implements the protocol of
comparing two models only on inputs both classify correctly when clean, so
accuracy differences on distorted versions are attributable to the
distortion rather than to baseline accuracy gaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import IMG, DatasetShard, Sample
from .errors import ConfigurationError
from .models import Network

KINDS = ("scramble", "gauss_noise", "gauss_blur", "contrast", "bw", "silhouette")

NOISE_SIGMA = {1: 0.08, 2: 0.16, 3: 0.24}
BLUR_SIGMA = {1: 0.5, 2: 1.0, 3: 1.5}
CONTRAST_FACTOR = {1: 0.6, 2: 0.4, 3: 0.2}

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class DistortionConfig:
    kind: str
    p: int = 1                    # scramble grid
    sigma: float = 0.0            # noise / blur strength
    factor: float = 1.0           # contrast
    threshold: float = 0.5        # bw
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(
                f"unknown distortion {self.kind!r}; valid: {', '.join(KINDS)}")
        if self.kind == "scramble" and self.p not in (1, 2, 4, 8):
            raise ConfigurationError(f"scramble grid p={self.p} not in {{1,2,4,8}}")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        if not 0 < self.factor <= 1:
            raise ConfigurationError("contrast factor must be in (0, 1]")
        if not 0 < self.threshold < 1:
            raise ConfigurationError("threshold must be in (0, 1)")


def scramble(image: np.ndarray, p: int, seed) -> np.ndarray:
    """Cut the image into a p x p grid of tiles and permute tile positions."""
    c, h, w = image.shape
    if h % p or w % p:
        raise ConfigurationError(f"grid p={p} does not divide {h}x{w}")
    t = h // p
    tiles = image.reshape(c, p, t, p, t).transpose(1, 3, 0, 2, 4).reshape(p * p, c, t, t)
    perm = np.random.default_rng(seed).permutation(p * p)
    out = tiles[perm].reshape(p, p, c, t, t).transpose(2, 0, 3, 1, 4).reshape(c, h, w)
    return np.ascontiguousarray(out)


def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return (k / k.sum()).astype(np.float32)


def _blur(image: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0:
        return image.copy()
    k = _gauss_kernel(sigma)
    r = len(k) // 2
    out = np.empty_like(image)
    for ch in range(image.shape[0]):
        padded = np.pad(image[ch], r, mode="reflect")
        tmp = np.zeros((image.shape[1] + 2 * r, image.shape[2]), dtype=np.float32)
        for i, kv in enumerate(k):
            tmp += kv * padded[:, i:i + image.shape[2]]
        res = np.zeros((image.shape[1], image.shape[2]), dtype=np.float32)
        for i, kv in enumerate(k):
            res += kv * tmp[i:i + image.shape[1], :]
        out[ch] = res
    return out


def corrupt(image: np.ndarray, kind: str, level: int, seed=0) -> np.ndarray:
    """Apply one corruption at severity level 1..3; output clamped to [0,1]."""
    if level not in (1, 2, 3):
        raise ConfigurationError(f"corruption level {level} not in {{1,2,3}}")
    if kind == "gauss_noise":
        sigma = NOISE_SIGMA[level]
        if sigma == 0:
            return image.copy()
        noise = np.random.default_rng(seed).normal(0.0, sigma, image.shape)
        return np.clip(image + noise.astype(np.float32), 0.0, 1.0)
    if kind == "gauss_blur":
        return np.clip(_blur(image, BLUR_SIGMA[level]), 0.0, 1.0)
    if kind == "contrast":
        c = np.float32(CONTRAST_FACTOR[level])
        return np.clip(0.5 + c * (image - 0.5), 0.0, 1.0)
    raise ConfigurationError(
        f"unknown corruption {kind!r}; valid: gauss_noise, gauss_blur, contrast")


def binarize(image: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold luminance: bright pixels become white, the rest black."""
    y = np.tensordot(_LUMA, image, axes=(0, 0))
    bright = (y >= threshold).astype(np.float32)
    return np.broadcast_to(bright, image.shape).copy()


def silhouette(sample: Sample) -> np.ndarray:
    """Foreground black on white background; texture and color removed."""
    out = np.where(sample.fg_mask, np.float32(0.0), np.float32(1.0))
    return np.broadcast_to(out, (3, IMG, IMG)).copy()


@dataclass
class EvalSubset:
    """Indices of shard samples that two models both classify correctly."""
    indices: np.ndarray

    def __len__(self):
        return len(self.indices)


def build_eval_subset(net_a: Network, net_b: Network,
                      shard: DatasetShard) -> EvalSubset:
    pa = net_a.predict(shard.images)
    pb = net_b.predict(shard.images)
    ok = (pa == shard.labels) & (pb == shard.labels)
    return EvalSubset(indices=np.flatnonzero(ok))


def distort_shard(shard: DatasetShard, cfg: DistortionConfig,
                  level: Optional[int] = None) -> DatasetShard:
    """Apply one distortion to every image of a shard.

    Scrambling permutes each image with its own seed (derived from
    ``cfg.seed`` and the sample index) and permutes the mask identically so
    the mask keeps describing the image.
    """
    images = np.empty_like(shard.images)
    masks = shard.fg_masks.copy()
    for i in range(len(shard)):
        img = shard.images[i]
        if cfg.kind == "scramble":
            sseed = (cfg.seed, 101, i)
            images[i] = scramble(img, cfg.p, sseed)
            m3 = np.broadcast_to(shard.fg_masks[i], (1, IMG, IMG)).astype(np.float32)
            masks[i] = scramble(m3, cfg.p, sseed)[0] > 0.5
        elif cfg.kind == "gauss_noise":
            images[i] = corrupt(img, "gauss_noise", level or 1, seed=(cfg.seed, 102, i))
        elif cfg.kind == "gauss_blur":
            images[i] = corrupt(img, "gauss_blur", level or 1)
        elif cfg.kind == "contrast":
            images[i] = corrupt(img, "contrast", level or 1)
        elif cfg.kind == "bw":
            images[i] = binarize(img, cfg.threshold)
        elif cfg.kind == "silhouette":
            images[i] = silhouette(shard.sample(i))
    out = shard.replace_images(images, split=f"{shard.split}+{cfg.kind}")
    out.fg_masks = masks
    return out
