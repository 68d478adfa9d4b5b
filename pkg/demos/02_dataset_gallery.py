"""Generate each kind of shard and export a PNG gallery to look at.

Run:  python demos/02_dataset_gallery.py [out_dir]
"""

import sys

import numpy as np

from robustlab.dataset import (SHAPES, TEXTURES, gen_cue_conflict, gen_train,
                               gen_texture_randomized)
from robustlab.shardio import export_png

out = sys.argv[1] if len(sys.argv) > 1 else "gallery"

train = gen_train(7, 4)
conflict = gen_cue_conflict(7, 32)
texrand = gen_texture_randomized(7, 4)

print("train shard:", len(train), "samples;",
      "shape==texture==class:", bool((train.shape_ids == train.labels).all()))
print("conflict shard: all cues differ:",
      bool((conflict.shape_ids != conflict.texture_ids).all()))
frac = train.fg_masks.mean(axis=(1, 2))
print(f"foreground fractions: {frac.min():.2f} .. {frac.max():.2f}")

s = conflict.sample(0)
print(f"sample 0: shape={SHAPES[s.shape_id]} texture={TEXTURES[s.texture_id]}")
nonempty = sorted(k for k, v in s.concept_masks.items() if v.any())
print("nonempty concept masks:", nonempty)

for name, shard in (("train", train), ("conflict", conflict),
                    ("texture_randomized", texrand)):
    export_png(shard, f"{out}/{name}")
    print(f"wrote {out}/{name}/ ({len(shard)} PNGs + meta.jsonl)")
