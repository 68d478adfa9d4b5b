"""Pipeline orchestration: dataset generation through acceptance checks.

A run directory accumulates artifacts step by step; every emitted file is
digested into ``manifest.json`` so each number in the final report traces
back to exactly one recorded step. Layout::

    <run>/config.json, manifest.json, acceptance.json, report/
    <run>/seed<N>/shards/*.rlsh
    <run>/seed<N>/ckpt_<regime>.rlck, train_<regime>.csv
    <run>/seed<N>/analysis/*.csv, *.json
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .analysis import (ablation_scores, activation_tv, category_counts,
                       dissect, filter_tv, match_filters, mean_diversity,
                       noise_tv_ratio, shape_bias)
from .attack import AttackConfig, adv_accuracy, pgd
from .config import config_digest
from .dataset import (DatasetShard, gen_cue_conflict, gen_texture_randomized,
                      gen_train)
from .distortions import (DistortionConfig, build_eval_subset, distort_shard)
from .errors import RobustLabError
from .models import Network, build, load, save
from .shardio import read_shard, write_shard
from .training import TrainConfig, train

REGIMES = ("standard", "adversarial", "texture-randomized")

# regime tag -> filename fragment
_TAG = {"standard": "standard", "adversarial": "adversarial",
        "texture-randomized": "texture_randomized"}


class MissingArtifact(RobustLabError):
    """A required input file from an earlier step is absent."""


def _digest(path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            sha.update(chunk)
    return sha.hexdigest()


class RunContext:
    """Paths, config, and the manifest of one run directory."""

    def __init__(self, run_dir: str, cfg: dict):
        self.run_dir = run_dir
        self.cfg = cfg
        os.makedirs(run_dir, exist_ok=True)
        self.manifest_path = os.path.join(run_dir, "manifest.json")
        if os.path.exists(self.manifest_path):
            with open(self.manifest_path) as f:
                self.manifest = json.load(f)
        else:
            self.manifest = {"tool_version": __version__,
                             "config_digest": config_digest(cfg), "steps": []}
        cfg_path = os.path.join(run_dir, "config.json")
        with open(cfg_path, "w") as f:
            json.dump(cfg, f, indent=1, sort_keys=True)

    # -- paths ------------------------------------------------------------
    def seed_dir(self, seed: int) -> str:
        return os.path.join(self.run_dir, f"seed{seed}")

    def shard_path(self, seed: int, name: str) -> str:
        return os.path.join(self.seed_dir(seed), "shards", f"{name}.rlsh")

    def ckpt_path(self, seed: int, regime: str) -> str:
        return os.path.join(self.seed_dir(seed), f"ckpt_{_TAG[regime]}.rlck")

    def analysis_dir(self, seed: int) -> str:
        return os.path.join(self.seed_dir(seed), "analysis")

    def analysis_path(self, seed: int, name: str) -> str:
        return os.path.join(self.analysis_dir(seed), name)

    # -- manifest ---------------------------------------------------------
    def record(self, step: str, inputs: List[str], outputs: List[str],
               seconds: float):
        self.manifest["steps"].append({
            "step": step,
            "inputs": {os.path.relpath(p, self.run_dir): _digest(p)
                       for p in inputs},
            "outputs": {os.path.relpath(p, self.run_dir): _digest(p)
                        for p in outputs},
            "seconds": round(seconds, 3),
        })
        with open(self.manifest_path, "w") as f:
            json.dump(self.manifest, f, indent=1)

    def need(self, path: str) -> str:
        if not os.path.exists(path):
            raise MissingArtifact(
                f"missing input artifact {path}; run the producing step first")
        return path

    def model_name(self, seed: int, regime: str) -> str:
        return f"{self.cfg['arch']}-{_TAG[regime]}-s{seed}"

    def attack_config(self) -> AttackConfig:
        a = self.cfg["attack"]
        return AttackConfig(epsilon=float(a["epsilon"]), alpha=float(a["alpha"]),
                            steps=int(a["steps"]))

    def dissect_layer(self) -> str:
        if self.cfg["dissect_layer"]:
            return self.cfg["dissect_layer"]
        return build(self.cfg["arch"], 0).conv_layer_names[-1]


def _write_csv(path: str, header: str, rows: List[str]):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(row + "\n")


def _write_json(path: str, payload: dict):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------

def gen_data(ctx: RunContext, seed: int) -> List[str]:
    """Generate and persist every shard one seed's pipeline needs."""
    t0 = time.perf_counter()
    d = ctx.cfg["data"]
    shards = {
        "train_standard": gen_train(seed, d["n_train_per_class"]),
        "train_texture_randomized": gen_texture_randomized(seed, d["n_train_per_class"]),
        "val": gen_train(seed + 9000, d["n_val_per_class"]),
        "conflict": gen_cue_conflict(seed + 7000, d["n_conflict"]),
        "probe": gen_cue_conflict(seed + 5000, d["n_probe"]),
    }
    os.makedirs(os.path.join(ctx.seed_dir(seed), "shards"), exist_ok=True)
    outputs = []
    for name, shard in shards.items():
        path = ctx.shard_path(seed, name)
        write_shard(shard, path)
        outputs.append(path)
    ctx.record(f"gen-data[s{seed}]", [], outputs, time.perf_counter() - t0)
    return outputs


def _load_shard(ctx: RunContext, seed: int, name: str) -> DatasetShard:
    return read_shard(ctx.need(ctx.shard_path(seed, name)))


def train_regime(ctx: RunContext, seed: int, regime: str) -> str:
    """Train one regime from its shards; writes checkpoint and log CSV."""
    t0 = time.perf_counter()
    train_name = ("train_texture_randomized" if regime == "texture-randomized"
                  else "train_standard")
    shard_train = _load_shard(ctx, seed, train_name)
    shard_val = _load_shard(ctx, seed, "val")
    t = dict(ctx.cfg["train"])
    t.update(ctx.cfg["train_per_regime"].get(regime, {}))
    cfg = TrainConfig(
        regime=regime,
        epochs=t["epochs"], batch_size=t["batch_size"], lr0=t["lr0"],
        lr_decay_factor=t["lr_decay_factor"], lr_decay_every=t["lr_decay_every"],
        momentum=t["momentum"], weight_decay=t["weight_decay"],
        adv_eval_every=t["adv_eval_every"],
        attack_warmup_epochs=t["attack_warmup_epochs"],
        attack_ramp_epochs=t["attack_ramp_epochs"],
        attack_warmup_exit_acc=t["attack_warmup_exit_acc"],
        attack=ctx.attack_config() if regime == "adversarial" else None,
        seed=seed,
    )
    net = build(ctx.cfg["arch"], seed)
    net, log = train(net, shard_train, shard_val, cfg)
    ckpt = ctx.ckpt_path(seed, regime)
    save(net, ckpt)
    log_path = os.path.join(ctx.seed_dir(seed), f"train_{_TAG[regime]}.csv")
    with open(log_path, "w") as f:
        f.write(log.to_csv())
    ctx.record(f"train[{_TAG[regime]},s{seed}]",
               [ctx.shard_path(seed, train_name), ctx.shard_path(seed, "val")],
               [ckpt, log_path], time.perf_counter() - t0)
    return ckpt


def _load_net(ctx: RunContext, seed: int, regime: str) -> Network:
    return load(ctx.need(ctx.ckpt_path(seed, regime)))


def attack_eval(ctx: RunContext, seed: int,
                regimes: Optional[List[str]] = None) -> str:
    """Clean and adversarial accuracy per model, plus PGD contract stats."""
    t0 = time.perf_counter()
    val = _load_shard(ctx, seed, "val")
    atk = ctx.attack_config()
    rows = []
    summary = {}
    inputs = [ctx.shard_path(seed, "val")]
    for regime in regimes or list(REGIMES):
        net = _load_net(ctx, seed, regime)
        inputs.append(ctx.ckpt_path(seed, regime))
        clean = float((net.predict(val.images) == val.labels).mean())
        max_norm, lo, hi, correct = 0.0, np.inf, -np.inf, 0
        for b in range(0, len(val), 256):
            res = pgd(net, val.images[b:b + 256],
                      val.labels[b:b + 256].astype(np.int64), atk)
            correct += int((~res.fooled).sum())
            max_norm = max(max_norm, float(res.delta_norm.max()))
            lo = min(lo, float(res.x_adv.min()))
            hi = max(hi, float(res.x_adv.max()))
        adv = correct / len(val)
        name = ctx.model_name(seed, regime)
        rows.append(f"{name},{regime},{clean:.6f},{adv:.6f},{atk.epsilon},"
                    f"{max_norm:.8f},{lo:.6f},{hi:.6f}")
        summary[regime] = {"clean_acc": clean, "adv_acc": adv,
                           "max_delta_norm": max_norm,
                           "min_pixel": lo, "max_pixel": hi}
    path = ctx.analysis_path(seed, "adv.csv")
    _write_csv(path, "model,regime,clean_acc,adv_acc,epsilon,"
                     "max_delta_norm,min_pixel,max_pixel", rows)
    jpath = ctx.analysis_path(seed, "adv.json")
    _write_json(jpath, {"epsilon": atk.epsilon, "alpha": atk.alpha,
                        "steps": atk.steps, "models": summary})
    ctx.record(f"attack-eval[s{seed}]", inputs, [path, jpath],
               time.perf_counter() - t0)
    return path


DISTORT_BATTERY = (
    ("scramble-1", DistortionConfig(kind="scramble", p=1, seed=31), None),
    ("scramble-2", DistortionConfig(kind="scramble", p=2, seed=31), None),
    ("scramble-4", DistortionConfig(kind="scramble", p=4, seed=31), None),
    ("scramble-8", DistortionConfig(kind="scramble", p=8, seed=31), None),
    ("gauss_noise-1", DistortionConfig(kind="gauss_noise", seed=32), 1),
    ("gauss_noise-2", DistortionConfig(kind="gauss_noise", seed=32), 2),
    ("gauss_noise-3", DistortionConfig(kind="gauss_noise", seed=32), 3),
    ("gauss_blur-1", DistortionConfig(kind="gauss_blur"), 1),
    ("gauss_blur-2", DistortionConfig(kind="gauss_blur"), 2),
    ("gauss_blur-3", DistortionConfig(kind="gauss_blur"), 3),
    ("contrast-1", DistortionConfig(kind="contrast"), 1),
    ("contrast-2", DistortionConfig(kind="contrast"), 2),
    ("contrast-3", DistortionConfig(kind="contrast"), 3),
    ("bw", DistortionConfig(kind="bw"), None),
    ("silhouette", DistortionConfig(kind="silhouette"), None),
)


def distort_eval(ctx: RunContext, seed: int) -> str:
    """Accuracy of the standard vs adversarial model on distorted images.

    All rows are computed on the subset of validation images both models
    classify correctly when clean, so the clean row is 100% by construction.
    """
    t0 = time.perf_counter()
    val = _load_shard(ctx, seed, "val")
    net_s = _load_net(ctx, seed, "standard")
    net_r = _load_net(ctx, seed, "adversarial")
    subset = build_eval_subset(net_s, net_r, val)
    rows = []
    summary: Dict[str, dict] = {"subset_size": len(subset)}
    clean_sub = val.subset(subset.indices)
    for regime, net in (("standard", net_s), ("adversarial", net_r)):
        acc = float((net.predict(clean_sub.images) == clean_sub.labels).mean()) \
            if len(subset) else 0.0
        rows.append(f"{ctx.model_name(seed, regime)},{regime},clean,"
                    f"{acc:.6f},{len(subset)}")
        summary.setdefault(regime, {})["clean"] = acc
    for name, dcfg, level in DISTORT_BATTERY:
        shard = distort_shard(val, dcfg, level).subset(subset.indices)
        for regime, net in (("standard", net_s), ("adversarial", net_r)):
            acc = float((net.predict(shard.images) == shard.labels).mean()) \
                if len(subset) else 0.0
            rows.append(f"{ctx.model_name(seed, regime)},{regime},{name},"
                        f"{acc:.6f},{len(subset)}")
            summary[regime][name] = acc
    path = ctx.analysis_path(seed, "distort.csv")
    _write_csv(path, "model,regime,distortion,accuracy,n", rows)
    jpath = ctx.analysis_path(seed, "distort.json")
    _write_json(jpath, summary)
    ctx.record(f"distort-eval[s{seed}]",
               [ctx.shard_path(seed, "val"), ctx.ckpt_path(seed, "standard"),
                ctx.ckpt_path(seed, "adversarial")],
               [path, jpath], time.perf_counter() - t0)
    return path


def analyze(ctx: RunContext, seed: int, kind: str) -> str:
    """Run one named analysis over the trained models of a seed."""
    t0 = time.perf_counter()
    inputs: List[str] = []
    outputs: List[str] = []

    if kind == "bias":
        conflict = _load_shard(ctx, seed, "conflict")
        inputs.append(ctx.shard_path(seed, "conflict"))
        rows, summary = [], {}
        for regime in REGIMES:
            net = _load_net(ctx, seed, regime)
            inputs.append(ctx.ckpt_path(seed, regime))
            rep = shape_bias(net, conflict)
            rows.append(f"{ctx.model_name(seed, regime)},{regime},"
                        f"{rep.n_evaluated},{rep.n_shape_decisions},"
                        f"{rep.n_texture_decisions},{rep.shape_bias:.6f}")
            summary[regime] = {
                "n": rep.n_evaluated, "shape": rep.n_shape_decisions,
                "texture": rep.n_texture_decisions, "shape_bias": rep.shape_bias,
                "per_shape_class": {str(k): list(v)
                                    for k, v in rep.per_shape_class.items()},
            }
        path = ctx.analysis_path(seed, "bias.csv")
        _write_csv(path, "model,regime,n,shape,texture,shape_bias", rows)
        _write_json(ctx.analysis_path(seed, "bias.json"), summary)
        outputs = [path, ctx.analysis_path(seed, "bias.json")]

    elif kind == "tv":
        rows, summary = [], {}
        for regime in REGIMES:
            net = _load_net(ctx, seed, regime)
            inputs.append(ctx.ckpt_path(seed, regime))
            table = filter_tv(net)
            for layer in list(net.conv_layer_names) + ["mean"]:
                rows.append(f"{ctx.model_name(seed, regime)},{regime},"
                            f"{layer},{table[layer]:.6f}")
            summary[regime] = table
        path = ctx.analysis_path(seed, "tv.csv")
        _write_csv(path, "model,regime,layer,mean_tv", rows)
        _write_json(ctx.analysis_path(seed, "tv.json"), summary)
        outputs = [path, ctx.analysis_path(seed, "tv.json")]

    elif kind == "match":
        layer = ctx.cfg["match_layer"]
        net_s = _load_net(ctx, seed, "standard")
        net_r = _load_net(ctx, seed, "adversarial")
        inputs += [ctx.ckpt_path(seed, "standard"), ctx.ckpt_path(seed, "adversarial")]
        matches = match_filters(net_s, net_r, layer)
        rows = [f"{ctx.model_name(seed, 'standard')},"
                f"{ctx.model_name(seed, 'adversarial')},{layer},"
                f"{m.idx_a},{m.idx_b},{m.spearman_r:.6f},{m.tv_diff:.6f}"
                for m in matches]
        path = ctx.analysis_path(seed, "match.csv")
        _write_csv(path, "model_a,model_b,layer,idx_a,idx_b,spearman_r,tv_diff", rows)
        _write_json(ctx.analysis_path(seed, "match.json"), {
            "layer": layer,
            "mean_r": float(np.mean([m.spearman_r for m in matches])),
            "mean_tv_diff": float(np.mean([m.tv_diff for m in matches])),
            "positive_tv_diff_fraction": float(np.mean(
                [m.tv_diff > 0 for m in matches])),
        })
        outputs = [path, ctx.analysis_path(seed, "match.json")]

    elif kind == "noise-tv":
        layer = ctx.cfg["noise_tv_layer"]
        val = _load_shard(ctx, seed, "val")
        inputs.append(ctx.shard_path(seed, "val"))
        noisy = distort_shard(val, DistortionConfig(kind="gauss_noise", seed=33), 1)
        net_s = _load_net(ctx, seed, "standard")
        net_r = _load_net(ctx, seed, "adversarial")
        inputs += [ctx.ckpt_path(seed, "standard"), ctx.ckpt_path(seed, "adversarial")]
        subset = build_eval_subset(net_s, net_r, val)
        rows, summary = [], {"layer": layer, "subset_size": len(subset)}
        for regime, net in (("standard", net_s), ("adversarial", net_r)):
            tv_c, tv_n = activation_tv(net, val, noisy, layer, subset)
            for ch in range(len(tv_c)):
                rows.append(f"{ctx.model_name(seed, regime)},{regime},{layer},"
                            f"{ch},{tv_c[ch]:.6f},{tv_n[ch]:.6f}")
            live = tv_c > 0.01 * float(tv_c.max(initial=0.0))
            summary[regime] = {
                "median_noisy_over_clean": noise_tv_ratio(tv_c, tv_n),
                "live_channels": int(live.sum()),
            }
        path = ctx.analysis_path(seed, "noise_tv.csv")
        _write_csv(path, "model,regime,layer,channel,tv_clean,tv_noisy", rows)
        _write_json(ctx.analysis_path(seed, "noise_tv.json"), summary)
        outputs = [path, ctx.analysis_path(seed, "noise_tv.json")]

    elif kind == "dissect":
        layer = ctx.dissect_layer()
        probe = _load_shard(ctx, seed, "probe")
        inputs.append(ctx.shard_path(seed, "probe"))
        rows, iou_rows, summary = [], [], {"layer": layer}
        for regime in REGIMES:
            net = _load_net(ctx, seed, regime)
            inputs.append(ctx.ckpt_path(seed, regime))
            profiles = dissect(net, probe, layer)
            name = ctx.model_name(seed, regime)
            for p in profiles:
                rows.append(f"{name},{regime},{layer},{p.channel.channel},"
                            f"{p.main_label},{p.category},{p.main_iou:.6f},"
                            f"{p.diversity}")
                for concept, iou in sorted(p.iou.items()):
                    iou_rows.append(f"{name},{regime},{layer},"
                                    f"{p.channel.channel},{concept},{iou:.6f}")
            summary[regime] = {
                "category_counts": category_counts(profiles),
                "mean_diversity": mean_diversity(profiles),
            }
        path = ctx.analysis_path(seed, "dissect.csv")
        _write_csv(path, "model,regime,layer,channel,main_label,category,"
                         "main_iou,diversity", rows)
        iou_path = ctx.analysis_path(seed, "dissect_iou.csv")
        _write_csv(iou_path, "model,regime,layer,channel,concept,iou", iou_rows)
        _write_json(ctx.analysis_path(seed, "dissect.json"), summary)
        outputs = [path, iou_path, ctx.analysis_path(seed, "dissect.json")]

    elif kind == "ablate":
        layer = ctx.dissect_layer()
        conflict = _load_shard(ctx, seed, "conflict")
        probe = _load_shard(ctx, seed, "probe")
        inputs += [ctx.shard_path(seed, "conflict"), ctx.shard_path(seed, "probe")]
        rows, summary = [], {"layer": layer}
        for regime in ("standard", "adversarial"):
            net = _load_net(ctx, seed, regime)
            inputs.append(ctx.ckpt_path(seed, regime))
            scores = ablation_scores(net, conflict, layers=[layer])
            profiles = dissect(net, probe, layer)
            cat_of = {p.channel.channel: p.category for p in profiles}
            name = ctx.model_name(seed, regime)
            for s in scores:
                ch = s.channel.channel
                rows.append(f"{name},{regime},{layer},{ch},{cat_of[ch]},"
                            f"{s.shape_score},{s.texture_score}")
            per_cat: Dict[str, dict] = {}
            for cat in ("shape", "texture", "color", "none"):
                chans = [s for s in scores if cat_of[s.channel.channel] == cat]
                if chans:
                    per_cat[cat] = {
                        "n": len(chans),
                        "mean_shape_score": float(np.mean(
                            [s.shape_score for s in chans])),
                        "mean_texture_score": float(np.mean(
                            [s.texture_score for s in chans])),
                    }
            summary[regime] = per_cat
        path = ctx.analysis_path(seed, "ablate.csv")
        _write_csv(path, "model,regime,layer,channel,category,"
                         "shape_score,texture_score", rows)
        _write_json(ctx.analysis_path(seed, "ablate.json"), summary)
        outputs = [path, ctx.analysis_path(seed, "ablate.json")]

    else:
        raise RobustLabError(f"unknown analysis {kind!r}")

    ctx.record(f"analyze-{kind}[s{seed}]", inputs, outputs,
               time.perf_counter() - t0)
    return outputs[0]


# ---------------------------------------------------------------------------
# acceptance checks over a completed run
# ---------------------------------------------------------------------------

@dataclass
class Check:
    check_id: str
    passed: bool
    detail: str


def _read_json(path) -> dict:
    with open(path) as f:
        return json.load(f)


def acceptance_checks(ctx: RunContext) -> List[Check]:
    """Directional criteria evaluated from a run's JSON summaries.

    Every directional claim must hold for every configured seed.
    """
    checks: List[Check] = []
    seeds = ctx.cfg["seeds"]

    def per_seed(check_id, fn):
        for seed in seeds:
            try:
                ok, detail = fn(seed)
            except (OSError, KeyError, MissingArtifact) as e:
                ok, detail = False, f"artifacts missing ({e})"
            checks.append(Check(f"{check_id}[s{seed}]", bool(ok), detail))

    eps = float(ctx.cfg["attack"]["epsilon"])

    def c3(seed):
        adv = _read_json(ctx.analysis_path(seed, "adv.json"))
        worst = max(m["max_delta_norm"] for m in adv["models"].values())
        lo = min(m["min_pixel"] for m in adv["models"].values())
        hi = max(m["max_pixel"] for m in adv["models"].values())
        ok = worst <= eps + 1e-5 and lo >= 0.0 and hi <= 1.0
        return ok, f"max|d|={worst:.6f} (eps={eps}), pixels in [{lo:.3f},{hi:.3f}]"
    per_seed("C3-pgd-contract", c3)

    def c4(seed):
        adv = _read_json(ctx.analysis_path(seed, "adv.json"))["models"]
        s, r = adv["standard"], adv["adversarial"]
        ok = (s["clean_acc"] >= 0.97 and s["adv_acc"] < 0.10
              and r["adv_acc"] >= s["adv_acc"] + 0.30
              and r["clean_acc"] <= s["clean_acc"])
        return ok, (f"S clean={s['clean_acc']:.3f} adv={s['adv_acc']:.3f}; "
                    f"R clean={r['clean_acc']:.3f} adv={r['adv_acc']:.3f}")
    per_seed("C4-accuracy-tradeoff", c4)

    def c5(seed):
        bias = _read_json(ctx.analysis_path(seed, "bias.json"))
        s = bias["standard"]["shape_bias"]
        r = bias["adversarial"]["shape_bias"]
        x = bias["texture-randomized"]["shape_bias"]
        ok = (r - s >= 0.20) and (x >= s)
        return ok, f"bias S={s:.3f} R={r:.3f} X={x:.3f}"
    per_seed("C5-shape-bias-gap", c5)

    def c6(seed):
        tv = _read_json(ctx.analysis_path(seed, "tv.json"))
        s = tv["standard"]["conv1"]
        r = tv["adversarial"]["conv1"]
        return r < s, f"conv1 TV S={s:.3f} R={r:.3f}"
    per_seed("C6-filter-smoothness", c6)

    def c7(seed):
        nt = _read_json(ctx.analysis_path(seed, "noise_tv.json"))
        s = nt["standard"]["median_noisy_over_clean"]
        r = nt["adversarial"]["median_noisy_over_clean"]
        ok = abs(r - 1.0) < abs(s - 1.0)
        return ok, f"median tv_noisy/tv_clean S={s:.3f} R={r:.3f}"
    per_seed("C7-noise-blocking", c7)

    def c8(seed):
        d = _read_json(ctx.analysis_path(seed, "distort.json"))
        s, r = d["standard"], d["adversarial"]
        scram_s = np.mean([s[f"scramble-{p}"] for p in (2, 4, 8)])
        scram_r = np.mean([r[f"scramble-{p}"] for p in (2, 4, 8)])
        ok = (scram_s > scram_r
              and r["bw"] > s["bw"] and r["silhouette"] > s["silhouette"]
              and s["clean"] == 1.0 and r["clean"] == 1.0
              and s["scramble-1"] == 1.0 and r["scramble-1"] == 1.0)
        return ok, (f"scram S={scram_s:.3f} R={scram_r:.3f}; "
                    f"bw S={s['bw']:.3f} R={r['bw']:.3f}; "
                    f"silh S={s['silhouette']:.3f} R={r['silhouette']:.3f}; "
                    f"clean S={s['clean']:.3f} R={r['clean']:.3f}")
    per_seed("C8-distortion-directions", c8)

    def c9(seed):
        di = _read_json(ctx.analysis_path(seed, "dissect.json"))
        s_cat = di["standard"]["category_counts"]
        r_cat = di["adversarial"]["category_counts"]
        s_low = s_cat["texture"] + s_cat["color"]
        r_low = r_cat["texture"] + r_cat["color"]
        ok = (r_low > s_low and r_cat["shape"] < s_cat["shape"]
              and di["adversarial"]["mean_diversity"]
              < di["standard"]["mean_diversity"])
        return ok, (f"low-level S={s_low} R={r_low}; shape S={s_cat['shape']} "
                    f"R={r_cat['shape']}; diversity S="
                    f"{di['standard']['mean_diversity']:.2f} "
                    f"R={di['adversarial']['mean_diversity']:.2f}")
    per_seed("C9-dissection-shift", c9)

    def c10(seed):
        ab = _read_json(ctx.analysis_path(seed, "ablate.json"))
        s = ab["standard"].get("texture")
        r = ab["adversarial"].get("texture")
        if not s or not r:
            return False, "no texture-labeled channels in one of the models"
        if r["mean_shape_score"] <= 0:
            return False, f"R texture channels mean shape score {r['mean_shape_score']}"
        r_ratio = r["mean_texture_score"] / r["mean_shape_score"]
        s_ratio = (s["mean_texture_score"] / s["mean_shape_score"]
                   if s["mean_shape_score"] > 0 else np.inf)
        ok = r_ratio < s_ratio
        return ok, (f"texture/shape ratio S={s_ratio:.2f} R={r_ratio:.2f}; "
                    f"R shape score={r['mean_shape_score']:.2f}")
    per_seed("C10-ablation-generalists", c10)

    return checks


def write_acceptance(ctx: RunContext, checks: List[Check],
                     wall_seconds: float) -> str:
    path = os.path.join(ctx.run_dir, "acceptance.json")
    payload = {
        "wall_seconds": round(wall_seconds, 1),
        "all_passed": all(c.passed for c in checks),
        "checks": [{"id": c.check_id, "passed": c.passed, "detail": c.detail}
                   for c in checks],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)
    return path


def repro_all(ctx: RunContext, echo=print) -> bool:
    """The whole study: all regimes, seeds, analyses, checks, report."""
    from .report import render_report
    t0 = time.perf_counter()
    for seed in ctx.cfg["seeds"]:
        echo(f"[seed {seed}] generating shards")
        gen_data(ctx, seed)
        for regime in REGIMES:
            echo(f"[seed {seed}] training {regime}")
            train_regime(ctx, seed, regime)
        echo(f"[seed {seed}] attack-eval")
        attack_eval(ctx, seed)
        echo(f"[seed {seed}] distortion battery")
        distort_eval(ctx, seed)
        for kind in ctx.cfg["analyses"]:
            echo(f"[seed {seed}] analyze {kind}")
            analyze(ctx, seed, kind)
    checks = acceptance_checks(ctx)
    wall = time.perf_counter() - t0
    write_acceptance(ctx, checks, wall)
    render_report(ctx.run_dir)
    for c in checks:
        echo(f"{'PASS' if c.passed else 'FAIL'} {c.check_id}: {c.detail}")
    echo(f"repro-all finished in {wall / 60:.1f} min")
    return all(c.passed for c in checks)
