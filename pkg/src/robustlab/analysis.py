"""Measurement battery: bias, smoothness, matching, dissection, ablation.

Every function here is read-only over a (network, shard) pair and
deterministic, so repeated calls agree bitwise. The units of analysis are
conv channels; post-ReLU activation maps are used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dataset import CONCEPTS, IMG, DatasetShard
from .distortions import EvalSubset
from .errors import ConfigurationError
from .models import Network

# Dissection conventions: a channel's activation is binarized at its top
# 0.5% quantile over the whole probe shard, and a concept counts toward the
# diversity score when its dataset-level IoU reaches 0.01.
DISSECT_QUANTILE = 0.995
DIVERSITY_IOU_FLOOR = 0.01


# ---------------------------------------------------------------------------
# shape bias
# ---------------------------------------------------------------------------

@dataclass
class BiasReport:
    n_evaluated: int
    n_shape_decisions: int
    n_texture_decisions: int
    shape_bias: float
    per_shape_class: Dict[int, Tuple[int, int]]  # shape class -> (shape, texture)


def _predict(model, images: np.ndarray) -> np.ndarray:
    """Top-1 labels from a Network or anything exposing predict(images)."""
    return np.asarray(model.predict(images))


def shape_bias(model, conflict_shard: DatasetShard) -> BiasReport:
    """Count shape-following vs texture-following correct decisions.

    A prediction equal to the sample's shape id counts as a shape decision,
    equal to its texture id as a texture decision; anything else is excluded.
    shape_bias = shape / (shape + texture).
    """
    if len(conflict_shard) == 0:
        raise ConfigurationError("empty conflict shard")
    preds = _predict(model, conflict_shard.images)
    shape_hit = preds == conflict_shard.shape_ids
    texture_hit = preds == conflict_shard.texture_ids
    n_shape = int(shape_hit.sum())
    n_texture = int(texture_hit.sum())
    per_class: Dict[int, Tuple[int, int]] = {}
    for k in np.unique(conflict_shard.shape_ids):
        sel = conflict_shard.shape_ids == k
        per_class[int(k)] = (int(shape_hit[sel].sum()), int(texture_hit[sel].sum()))
    denom = n_shape + n_texture
    return BiasReport(
        n_evaluated=len(conflict_shard),
        n_shape_decisions=n_shape,
        n_texture_decisions=n_texture,
        shape_bias=n_shape / denom if denom else 0.0,
        per_shape_class=per_class,
    )


# ---------------------------------------------------------------------------
# total variation
# ---------------------------------------------------------------------------

def tv_map(arr: np.ndarray) -> np.ndarray:
    """Anisotropic 4-neighbor total variation of the trailing 2-d grid.

    Sums |horizontal differences| + |vertical differences|; leading axes are
    preserved.
    """
    h = np.abs(np.diff(arr, axis=-1)).sum(axis=(-2, -1))
    v = np.abs(np.diff(arr, axis=-2)).sum(axis=(-2, -1))
    return h + v


def filter_tv(net: Network) -> Dict[str, float]:
    """Mean per-filter TV of each conv layer, plus the network mean.

    A filter's TV sums the 4-neighbor variation over its input-channel
    slices; the layer value averages over output channels. The returned dict
    maps layer name to mean TV and adds a ``"mean"`` entry averaging the
    layer means.
    """
    out: Dict[str, float] = {}
    for layer in net.conv_layer_names:
        w = net.params[f"{layer}.weight"].data  # (Cout, Cin, kh, kw)
        per_filter = tv_map(w).sum(axis=1)      # sum over Cin
        out[layer] = float(per_filter.mean())
    out["mean"] = float(np.mean([out[l] for l in net.conv_layer_names]))
    return out


def per_filter_tv(net: Network, layer: str) -> np.ndarray:
    w = net.params[f"{layer}.weight"].data
    return tv_map(w).sum(axis=1)


# ---------------------------------------------------------------------------
# filter matching
# ---------------------------------------------------------------------------

def _rank_average(v: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    ra = _rank_average(np.asarray(a, dtype=np.float64).ravel())
    rb = _rank_average(np.asarray(b, dtype=np.float64).ravel())
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0:
        return 0.0
    return float((ra * rb).sum() / denom)


@dataclass
class FilterMatch:
    idx_a: int
    idx_b: int
    spearman_r: float
    tv_diff: float   # TV(filter A) - TV(matched filter B)


def match_filters(net_a: Network, net_b: Network, layer: str) -> List[FilterMatch]:
    """For each filter of A, the highest-rank-correlated filter of B."""
    wa = net_a.params[f"{layer}.weight"].data
    wb = net_b.params[f"{layer}.weight"].data
    if wa.shape[1:] != wb.shape[1:]:
        raise ConfigurationError(
            f"filter shapes differ at {layer}: {wa.shape} vs {wb.shape}")
    ranks_a = np.stack([_rank_average(f.ravel().astype(np.float64)) for f in wa])
    ranks_b = np.stack([_rank_average(f.ravel().astype(np.float64)) for f in wb])
    ranks_a -= ranks_a.mean(axis=1, keepdims=True)
    ranks_b -= ranks_b.mean(axis=1, keepdims=True)
    na = np.sqrt((ranks_a ** 2).sum(axis=1))
    nb = np.sqrt((ranks_b ** 2).sum(axis=1))
    na[na == 0] = 1.0
    nb[nb == 0] = 1.0
    corr = (ranks_a / na[:, None]) @ (ranks_b / nb[:, None]).T
    tv_a = per_filter_tv(net_a, layer)
    tv_b = per_filter_tv(net_b, layer)
    matches = []
    for i in range(len(wa)):
        j = int(corr[i].argmax())
        matches.append(FilterMatch(
            idx_a=i, idx_b=j,
            spearman_r=float(corr[i, j]),
            tv_diff=float(tv_a[i] - tv_b[j]),
        ))
    return matches


# ---------------------------------------------------------------------------
# activation TV under noise
# ---------------------------------------------------------------------------

def activation_tv(net: Network, shard_clean: DatasetShard,
                  shard_noisy: DatasetShard, layer: str,
                  subset: Optional[EvalSubset] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel mean spatial TV of post-ReLU maps on clean vs noisy inputs."""
    imgs_c = shard_clean.images
    imgs_n = shard_noisy.images
    if subset is not None:
        imgs_c = imgs_c[subset.indices]
        imgs_n = imgs_n[subset.indices]
    acts_c = net.activations(imgs_c, [layer])[layer]   # (N, C, h, w)
    acts_n = net.activations(imgs_n, [layer])[layer]
    tv_clean = tv_map(acts_c).mean(axis=0)
    tv_noisy = tv_map(acts_n).mean(axis=0)
    return tv_clean, tv_noisy


def noise_tv_ratio(tv_clean: np.ndarray, tv_noisy: np.ndarray,
                   live_frac: float = 0.01) -> float:
    """Median tv_noisy/tv_clean over live channels.

    Channels whose clean TV is below ``live_frac`` of the layer's largest
    channel TV are excluded: their ratios are quotients of near-zeros and
    carry no information about noise transmission.
    """
    live = tv_clean > live_frac * float(tv_clean.max(initial=0.0))
    if not live.any():
        return 1.0
    return float(np.median(tv_noisy[live] / tv_clean[live]))


# ---------------------------------------------------------------------------
# concept dissection
# ---------------------------------------------------------------------------

@dataclass
class ChannelRef:
    layer: str
    channel: int


@dataclass
class ConceptProfile:
    channel: ChannelRef
    iou: Dict[str, float] = field(default_factory=dict)
    main_label: str = "none"
    category: str = "none"
    diversity: int = 0

    @property
    def main_iou(self) -> float:
        return self.iou.get(self.main_label, 0.0)


def _upsample_nearest(binary: np.ndarray, target: int) -> np.ndarray:
    """(N, h, w) boolean maps -> (N, target, target) by nearest neighbor."""
    n, h, w = binary.shape
    if h == target and w == target:
        return binary
    if target % h or target % w:
        raise ConfigurationError(f"cannot upsample {h}x{w} to {target}x{target}")
    return binary.repeat(target // h, axis=1).repeat(target // w, axis=2)


def dissect(net: Network, shard: DatasetShard, layer: str) -> List[ConceptProfile]:
    """Label every channel of a layer with its best-overlapping concept.

    Activations are thresholded at the channel's top-0.5% quantile over the
    whole shard, upsampled to the mask grid, and scored against each concept
    with dataset-level IoU (sum of intersections over sum of unions). The
    main label is the argmax concept, ties going to the lexicographically
    first; a dead channel gets the label "none" and diversity 0.
    """
    acts = net.activations(shard.images, [layer])[layer]   # (N, C, h, w)
    n, c, h, w = acts.shape
    flat = acts.transpose(1, 0, 2, 3).reshape(c, -1)
    thresholds = np.quantile(flat, DISSECT_QUANTILE, axis=1)
    dead = flat.max(axis=1) == flat.min(axis=1)
    profiles = []
    concept_blocks = {name: shard.concept_mask_block(name) for name in CONCEPTS}
    mask_areas = {name: int(block.sum()) for name, block in concept_blocks.items()}
    for ch in range(c):
        # >= keeps channels alive when the top of the distribution is a
        # plateau of equal values; a truly constant channel stays empty
        if dead[ch]:
            binary = np.zeros((n, h, w), dtype=bool)
        else:
            binary = acts[:, ch] >= thresholds[ch]
        up = _upsample_nearest(binary, IMG)
        act_area = int(up.sum())
        profile = ConceptProfile(channel=ChannelRef(layer=layer, channel=ch))
        best_label, best_iou = "none", 0.0
        for name in CONCEPTS:
            inter = int((up & concept_blocks[name]).sum())
            union = act_area + mask_areas[name] - inter
            iou = inter / union if union else 0.0
            profile.iou[name] = iou
            if iou > best_iou:
                best_label, best_iou = name, iou
        if best_iou > 0.0:
            profile.main_label = best_label
            profile.category = best_label.split(":", 1)[0]
        profile.diversity = int(sum(
            v >= DIVERSITY_IOU_FLOOR for v in profile.iou.values()))
        profiles.append(profile)
    return profiles


def category_counts(profiles: List[ConceptProfile]) -> Dict[str, int]:
    """Channels per main-label category (shape / texture / color / none)."""
    counts = {"shape": 0, "texture": 0, "color": 0, "none": 0}
    for p in profiles:
        counts[p.category] = counts.get(p.category, 0) + 1
    return counts


def mean_diversity(profiles: List[ConceptProfile]) -> float:
    return float(np.mean([p.diversity for p in profiles]))


# ---------------------------------------------------------------------------
# channel ablation
# ---------------------------------------------------------------------------

@dataclass
class AblationScore:
    channel: ChannelRef
    shape_score: int
    texture_score: int


def ablation_scores(net: Network, conflict_shard: DatasetShard,
                    layers: Optional[List[str]] = None) -> List[AblationScore]:
    """Decision flips caused by zeroing each channel, one at a time.

    The shape score of a channel counts samples the unablated network
    labeled with the shape class that change label once the channel's
    post-ReLU map is zeroed; the texture score is the analogue for
    texture-class decisions.
    """
    if layers is None:
        layers = net.conv_layer_names
    images = conflict_shard.images
    base = net.predict(images)
    base_shape = base == conflict_shard.shape_ids
    base_texture = base == conflict_shard.texture_ids
    scores = []
    for layer in layers:
        for ch in range(net.conv_width(layer)):
            preds = net.predict(images, ablate=(layer, ch))
            shape_flips = int((preds[base_shape]
                               != conflict_shard.shape_ids[base_shape]).sum())
            texture_flips = int((preds[base_texture]
                                 != conflict_shard.texture_ids[base_texture]).sum())
            scores.append(AblationScore(
                channel=ChannelRef(layer=layer, channel=ch),
                shape_score=shape_flips,
                texture_score=texture_flips,
            ))
    return scores
