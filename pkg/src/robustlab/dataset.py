"""Procedural shape-vs-texture image generator with exact concept masks.

Every image is a single filled shape on a solid background. The shape is one
of 8 geometric outlines, filled with one of 8 binary texture patterns drawn
in the foreground color (pattern-off pixels keep the foreground hue at
reduced intensity), on one of 6 background colors. Rasterization is
hard-edged: a pixel is foreground iff its center falls inside the
transformed shape, so the foreground mask and all derived concept masks are
exact by construction.

Three generators share this machinery:

* ``gen_train``          - shape k filled with texture k (both cues predict k)
* ``gen_cue_conflict``   - shape i filled with texture j, i != j
* ``gen_texture_randomized`` - shape k with a texture drawn independently

Generation is a pure function of (seed, config): each sample draws from its
own ``default_rng((seed, stream, index))`` stream, so shards are
reproducible and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .errors import ConfigurationError

IMG = 32
N_CLASSES = 8

SHAPES = ("circle", "square", "triangle", "diamond", "star", "cross",
          "annulus", "crescent")
TEXTURES = ("stripes_h", "stripes_v", "stripes_diag", "checker", "dots",
            "grid", "solid", "speckle")
COLORS = ("red", "green", "blue", "yellow", "magenta", "cyan")

PALETTE = np.array([
    [1.0, 0.0, 0.0],   # red
    [0.0, 1.0, 0.0],   # green
    [0.0, 0.0, 1.0],   # blue
    [1.0, 1.0, 0.0],   # yellow
    [1.0, 0.0, 1.0],   # magenta
    [0.0, 1.0, 1.0],   # cyan
], dtype=np.float32)

# Foreground pixels where the texture pattern is "off" keep the foreground
# hue at this intensity; "on" pixels are full intensity. Moderate contrast:
# strong enough that texture statistics are trivially recoverable, weak
# enough that the shape outline (full-intensity color boundary) stays the
# dominant structure.
TEX_OFF = 0.6

# Texture pattern period in pixels (stripes, checker, dots, grid).
TEX_PERIOD = 4

MIN_FG_FRAC = 0.15
MAX_FG_FRAC = 0.70

ROT_MAX_DEG = 25.0
SCALE_RANGE = (0.7, 1.1)
TRANS_MAX = 4.0

CONCEPTS = tuple(sorted(
    [f"shape:{s}" for s in SHAPES]
    + [f"texture:{t}" for t in TEXTURES]
    + [f"color:{c}" for c in COLORS]
))

# rng stream tags, one per generator role
_STREAM_TRAIN = 1
_STREAM_CONFLICT = 2
_STREAM_TEXRAND = 3
_STREAM_PLAN = 4


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

# Pixel-center coordinates of the 32x32 grid, x = column, y = row.
_YY, _XX = np.mgrid[0:IMG, 0:IMG].astype(np.float64) + 0.5


def _in_polygon(px, py, verts):
    """Even-odd point-in-polygon test, vectorized over the pixel grid."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > py) != (y2 > py)
        x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_at)
    return inside


def _poly_verts(n_outer, r_outer, r_inner=None, phase=np.pi / 2):
    """Vertices of a regular polygon, or a star when r_inner is given."""
    if r_inner is None:
        ang = phase + np.arange(n_outer) * 2 * np.pi / n_outer
        return [(r_outer * np.cos(a), r_outer * np.sin(a)) for a in ang]
    verts = []
    for k in range(2 * n_outer):
        r = r_outer if k % 2 == 0 else r_inner
        a = phase + k * np.pi / n_outer
        verts.append((r * np.cos(a), r * np.sin(a)))
    return verts


_TRIANGLE_VERTS = _poly_verts(3, 16.0)
_STAR_VERTS = _poly_verts(5, 15.5, r_inner=7.75)


def _shape_mask(shape_id: int, qx, qy) -> np.ndarray:
    """Membership of canonical-frame points (qx, qy) in the base shape."""
    name = SHAPES[shape_id]
    if name == "circle":
        return qx * qx + qy * qy <= 10.5 ** 2
    if name == "square":
        return np.maximum(np.abs(qx), np.abs(qy)) <= 9.5
    if name == "triangle":
        return _in_polygon(qx, qy, _TRIANGLE_VERTS)
    if name == "diamond":
        # rhombus with unequal diagonals: never a rotated copy of the square
        return np.abs(qx) / 14.5 + np.abs(qy) / 11.0 <= 1.0
    if name == "star":
        return _in_polygon(qx, qy, _STAR_VERTS)
    if name == "cross":
        return ((np.abs(qx) <= 4.0) & (np.abs(qy) <= 12.5)) | \
               ((np.abs(qy) <= 4.0) & (np.abs(qx) <= 12.5))
    if name == "annulus":
        r2 = qx * qx + qy * qy
        return (r2 >= 6.0 ** 2) & (r2 <= 12.0 ** 2)
    if name == "crescent":
        big = qx * qx + qy * qy <= 12.5 ** 2
        cut = (qx - 7.5) ** 2 + qy * qy <= 8.5 ** 2
        return big & ~cut
    raise ConfigurationError(f"unknown shape id {shape_id}")


def render_shape_mask(shape_id: int, rot_deg: float, scl: float,
                      tx: float, ty: float) -> np.ndarray:
    """Rasterize a transformed shape onto the 32x32 grid of pixel centers."""
    cx = IMG / 2 + tx
    cy = IMG / 2 + ty
    th = np.deg2rad(rot_deg)
    c, s = np.cos(th), np.sin(th)
    dx = (_XX - cx) / scl
    dy = (_YY - cy) / scl
    qx = c * dx + s * dy
    qy = -s * dx + c * dy
    return _shape_mask(shape_id, qx, qy)


# ---------------------------------------------------------------------------
# textures
# ---------------------------------------------------------------------------

_COL = np.arange(IMG)[None, :].repeat(IMG, axis=0)
_ROW = np.arange(IMG)[:, None].repeat(IMG, axis=1)


def texture_pattern(texture_id: int, rng: np.random.Generator) -> np.ndarray:
    """Binary on/off pattern over the full grid, fixed phase in image coords.

    Only ``speckle`` consumes randomness (per-sample Bernoulli field).
    """
    name = TEXTURES[texture_id]
    p = TEX_PERIOD
    if name == "stripes_h":
        return (_ROW % p) < p // 2
    if name == "stripes_v":
        return (_COL % p) < p // 2
    if name == "stripes_diag":
        return ((_COL + _ROW) % p) < p // 2
    if name == "checker":
        return ((_COL // (p // 2) + _ROW // (p // 2)) % 2) == 0
    if name == "dots":
        dx = _COL % p - (p - 1) / 2
        dy = _ROW % p - (p - 1) / 2
        return dx * dx + dy * dy <= 1.3 ** 2
    if name == "grid":
        return (_COL % p == 0) | (_ROW % p == 0)
    if name == "solid":
        return np.ones((IMG, IMG), dtype=bool)
    if name == "speckle":
        # block noise at half the pattern period; per-sample seeded
        blocks = rng.random((IMG // 2, IMG // 2)) < 0.5
        return blocks.repeat(2, axis=0).repeat(2, axis=1)
    raise ConfigurationError(f"unknown texture id {texture_id}")


# ---------------------------------------------------------------------------
# samples and shards
# ---------------------------------------------------------------------------

def concept_masks_for(shape_id: int, texture_id: int, fg_color_id: int,
                      bg_color_id: int, fg_mask: np.ndarray) -> Dict[str, np.ndarray]:
    """All 22 concept masks of one sample (most are empty).

    The sample's own shape and texture concepts equal the foreground mask;
    color masks partition the grid into the foreground and background colors.
    """
    zeros = np.zeros((IMG, IMG), dtype=bool)
    masks = {}
    for i, s in enumerate(SHAPES):
        masks[f"shape:{s}"] = fg_mask if i == shape_id else zeros
    for i, t in enumerate(TEXTURES):
        masks[f"texture:{t}"] = fg_mask if i == texture_id else zeros
    for i, c in enumerate(COLORS):
        if i == fg_color_id:
            masks[f"color:{c}"] = fg_mask
        elif i == bg_color_id:
            masks[f"color:{c}"] = ~fg_mask
        else:
            masks[f"color:{c}"] = zeros
    return masks


@dataclass
class Sample:
    image: np.ndarray          # (3, 32, 32) float32 in [0, 1]
    class_label: int
    shape_id: int
    texture_id: int
    fg_color_id: int
    bg_color_id: int
    fg_mask: np.ndarray        # (32, 32) bool

    @property
    def concept_masks(self) -> Dict[str, np.ndarray]:
        return concept_masks_for(self.shape_id, self.texture_id,
                                 self.fg_color_id, self.bg_color_id,
                                 self.fg_mask)


@dataclass
class DatasetShard:
    """A packed batch of samples plus its provenance."""

    images: np.ndarray         # (N, 3, 32, 32) float32
    labels: np.ndarray         # (N,) uint32
    shape_ids: np.ndarray      # (N,) uint32
    texture_ids: np.ndarray    # (N,) uint32
    fg_color_ids: np.ndarray   # (N,) uint32
    bg_color_ids: np.ndarray   # (N,) uint32
    fg_masks: np.ndarray       # (N, 32, 32) bool
    split: str = ""
    seed: int = 0

    def __post_init__(self):
        n = len(self.images)
        for name in ("labels", "shape_ids", "texture_ids", "fg_color_ids",
                     "bg_color_ids", "fg_masks"):
            if len(getattr(self, name)) != n:
                raise ConfigurationError(f"shard field {name} length != {n}")

    def __len__(self) -> int:
        return len(self.images)

    def sample(self, i: int) -> Sample:
        return Sample(
            image=self.images[i],
            class_label=int(self.labels[i]),
            shape_id=int(self.shape_ids[i]),
            texture_id=int(self.texture_ids[i]),
            fg_color_id=int(self.fg_color_ids[i]),
            bg_color_id=int(self.bg_color_ids[i]),
            fg_mask=self.fg_masks[i],
        )

    def concept_mask_block(self, concept: str) -> np.ndarray:
        """(N, 32, 32) boolean mask of one concept across the whole shard."""
        kind, _, name = concept.partition(":")
        if kind == "shape":
            sel = self.shape_ids == SHAPES.index(name)
            return self.fg_masks & sel[:, None, None]
        if kind == "texture":
            sel = self.texture_ids == TEXTURES.index(name)
            return self.fg_masks & sel[:, None, None]
        if kind == "color":
            cid = COLORS.index(name)
            fg = self.fg_masks & (self.fg_color_ids == cid)[:, None, None]
            bg = (~self.fg_masks) & (self.bg_color_ids == cid)[:, None, None]
            return fg | bg
        raise ConfigurationError(f"unknown concept {concept!r}")

    def subset(self, indices) -> "DatasetShard":
        idx = np.asarray(indices)
        return DatasetShard(
            images=self.images[idx], labels=self.labels[idx],
            shape_ids=self.shape_ids[idx], texture_ids=self.texture_ids[idx],
            fg_color_ids=self.fg_color_ids[idx],
            bg_color_ids=self.bg_color_ids[idx],
            fg_masks=self.fg_masks[idx], split=self.split, seed=self.seed,
        )

    def replace_images(self, images: np.ndarray, split: str | None = None) -> "DatasetShard":
        return DatasetShard(
            images=np.ascontiguousarray(images, dtype=np.float32),
            labels=self.labels.copy(), shape_ids=self.shape_ids.copy(),
            texture_ids=self.texture_ids.copy(),
            fg_color_ids=self.fg_color_ids.copy(),
            bg_color_ids=self.bg_color_ids.copy(),
            fg_masks=self.fg_masks.copy(),
            split=self.split if split is None else split, seed=self.seed,
        )


def _draw_fg_mask(shape_id: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a transform and rasterize; redraw until the area invariant holds."""
    lo = MIN_FG_FRAC * IMG * IMG
    hi = MAX_FG_FRAC * IMG * IMG
    for _ in range(64):
        rot = rng.uniform(-ROT_MAX_DEG, ROT_MAX_DEG)
        scl = rng.uniform(*SCALE_RANGE)
        tx = rng.uniform(-TRANS_MAX, TRANS_MAX)
        ty = rng.uniform(-TRANS_MAX, TRANS_MAX)
        mask = render_shape_mask(shape_id, rot, scl, tx, ty)
        area = mask.sum()
        if lo <= area <= hi:
            return mask
    raise ConfigurationError(
        f"could not draw a valid mask for shape {SHAPES[shape_id]}")


def _render_sample(shape_id: int, texture_id: int,
                   rng: np.random.Generator) -> tuple:
    fg_mask = _draw_fg_mask(shape_id, rng)
    fg_color = int(rng.integers(len(COLORS)))
    bg_color = int(rng.integers(len(COLORS) - 1))
    if bg_color >= fg_color:
        bg_color += 1
    tex_on = texture_pattern(texture_id, rng)

    intensity = np.where(tex_on, np.float32(1.0), np.float32(TEX_OFF))
    img = np.empty((3, IMG, IMG), dtype=np.float32)
    img[:] = PALETTE[bg_color][:, None, None]
    img[:, fg_mask] = PALETTE[fg_color][:, None] * intensity[fg_mask][None, :]
    return img, fg_color, bg_color, fg_mask


def _assemble(n: int, split: str, seed: int, stream: int,
              shape_of, texture_of, label_of) -> DatasetShard:
    images = np.empty((n, 3, IMG, IMG), dtype=np.float32)
    labels = np.empty(n, dtype=np.uint32)
    shape_ids = np.empty(n, dtype=np.uint32)
    texture_ids = np.empty(n, dtype=np.uint32)
    fg_color_ids = np.empty(n, dtype=np.uint32)
    bg_color_ids = np.empty(n, dtype=np.uint32)
    fg_masks = np.empty((n, IMG, IMG), dtype=bool)
    for i in range(n):
        rng = np.random.default_rng((seed, stream, i))
        sid = shape_of(i, rng)
        tid = texture_of(i, sid, rng)
        img, fgc, bgc, mask = _render_sample(sid, tid, rng)
        images[i] = img
        labels[i] = label_of(i, sid, tid)
        shape_ids[i] = sid
        texture_ids[i] = tid
        fg_color_ids[i] = fgc
        bg_color_ids[i] = bgc
        fg_masks[i] = mask
    return DatasetShard(images, labels, shape_ids, texture_ids,
                        fg_color_ids, bg_color_ids, fg_masks,
                        split=split, seed=seed)


def gen_train(seed: int, n_per_class: int) -> DatasetShard:
    """Training-style shard: class k = shape k filled with texture k."""
    if n_per_class < 1:
        raise ConfigurationError("n_per_class must be >= 1")
    n = N_CLASSES * n_per_class
    return _assemble(
        n, "train", seed, _STREAM_TRAIN,
        shape_of=lambda i, rng: i % N_CLASSES,
        texture_of=lambda i, sid, rng: sid,
        label_of=lambda i, sid, tid: sid,
    )


def gen_texture_randomized(seed: int, n_per_class: int) -> DatasetShard:
    """Like gen_train but the texture is drawn independently of the class."""
    if n_per_class < 1:
        raise ConfigurationError("n_per_class must be >= 1")
    n = N_CLASSES * n_per_class
    return _assemble(
        n, "texture_randomized", seed, _STREAM_TEXRAND,
        shape_of=lambda i, rng: i % N_CLASSES,
        texture_of=lambda i, sid, rng: int(rng.integers(len(TEXTURES))),
        label_of=lambda i, sid, tid: sid,
    )


def conflict_pair_plan(seed: int, n_pairs: int) -> np.ndarray:
    """(n_pairs, 2) array of (shape, texture) ids, shape != texture.

    Every ordered pair (i, j), i != j, appears floor(n/56) or ceil(n/56)
    times; which pairs get the extra sample, and the order, come from the
    seed.
    """
    pairs = np.array([(i, j) for i in range(N_CLASSES)
                      for j in range(N_CLASSES) if i != j])
    n_kinds = len(pairs)  # 56
    base = n_pairs // n_kinds
    extra = n_pairs % n_kinds
    rng = np.random.default_rng((seed, _STREAM_PLAN))
    counts = np.full(n_kinds, base, dtype=int)
    if extra:
        counts[rng.choice(n_kinds, size=extra, replace=False)] += 1
    plan = np.repeat(np.arange(n_kinds), counts)
    rng.shuffle(plan)
    return pairs[plan]


def gen_cue_conflict(seed: int, n_pairs: int) -> DatasetShard:
    """Cue-conflict shard: every sample's shape and texture ids differ.

    The class label is set to the shape id by convention; bias measurement
    reads both id columns directly.
    """
    if n_pairs < 1:
        raise ConfigurationError("n_pairs must be >= 1")
    plan = conflict_pair_plan(seed, n_pairs)
    return _assemble(
        n_pairs, "cue_conflict", seed, _STREAM_CONFLICT,
        shape_of=lambda i, rng: int(plan[i, 0]),
        texture_of=lambda i, sid, rng: int(plan[i, 1]),
        label_of=lambda i, sid, tid: sid,
    )
