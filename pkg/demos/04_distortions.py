"""Apply every out-of-distribution transform and export galleries.

Run:  python demos/04_distortions.py [out_dir]
"""

import sys

from robustlab.dataset import gen_train
from robustlab.distortions import DistortionConfig, distort_shard
from robustlab.shardio import export_png

out = sys.argv[1] if len(sys.argv) > 1 else "gallery"
shard = gen_train(23, 3)

battery = [
    ("scramble_p2", DistortionConfig(kind="scramble", p=2, seed=1), None),
    ("scramble_p8", DistortionConfig(kind="scramble", p=8, seed=1), None),
    ("noise_l1", DistortionConfig(kind="gauss_noise", seed=2), 1),
    ("noise_l3", DistortionConfig(kind="gauss_noise", seed=2), 3),
    ("blur_l2", DistortionConfig(kind="gauss_blur"), 2),
    ("contrast_l3", DistortionConfig(kind="contrast"), 3),
    ("bw", DistortionConfig(kind="bw"), None),
    ("silhouette", DistortionConfig(kind="silhouette"), None),
]

export_png(shard, f"{out}/original")
for name, cfg, level in battery:
    distorted = distort_shard(shard, cfg, level)
    lo, hi = distorted.images.min(), distorted.images.max()
    export_png(distorted, f"{out}/{name}")
    print(f"{name:12s} range [{lo:.2f}, {hi:.2f}]  -> {out}/{name}/")
