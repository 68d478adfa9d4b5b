"""Run every analysis on a quickly trained model pair and print summaries.

This is the measurement layer only; the pipeline command
``robustlab repro-all`` runs the same battery on fully trained models.

Run:  python demos/05_analysis_battery.py
"""

import numpy as np

from robustlab.analysis import (ablation_scores, activation_tv,
                                category_counts, dissect, filter_tv,
                                match_filters, mean_diversity, noise_tv_ratio,
                                shape_bias)
from robustlab.attack import AttackConfig
from robustlab.dataset import gen_cue_conflict, gen_train
from robustlab.distortions import (DistortionConfig, build_eval_subset,
                                   distort_shard)
from robustlab.models import build
from robustlab.training import TrainConfig, train

train_shard = gen_train(3, 50)
val = gen_train(9003, 25)
conflict = gen_cue_conflict(7003, 224)

print("training a small standard/adversarial pair (shortened schedule)...")
net_s, _ = train(build("mini3", 3), train_shard, val,
                 TrainConfig(epochs=8, batch_size=64, seed=3))
net_r, _ = train(build("mini3", 3), train_shard, val,
                 TrainConfig(regime="adversarial", epochs=8, batch_size=64,
                             seed=3, attack=AttackConfig(2.0, 0.5, 7),
                             adv_eval_every=100))

bias_s = shape_bias(net_s, conflict)
bias_r = shape_bias(net_r, conflict)
print(f"shape bias: standard {bias_s.shape_bias:.2f} "
      f"({bias_s.n_shape_decisions}/{bias_s.n_texture_decisions}), "
      f"adversarial {bias_r.shape_bias:.2f} "
      f"({bias_r.n_shape_decisions}/{bias_r.n_texture_decisions})")

tv_s, tv_r = filter_tv(net_s), filter_tv(net_r)
print(f"conv1 filter TV: standard {tv_s['conv1']:.2f}, "
      f"adversarial {tv_r['conv1']:.2f}")

matches = match_filters(net_s, net_r, "conv1")
print(f"filter matching: mean spearman r = "
      f"{np.mean([m.spearman_r for m in matches]):.2f}, "
      f"TV diff > 0 for {sum(m.tv_diff > 0 for m in matches)}/16 filters")

noisy = distort_shard(val, DistortionConfig(kind="gauss_noise", seed=5), 1)
subset = build_eval_subset(net_s, net_r, val)
for name, net in (("standard", net_s), ("adversarial", net_r)):
    tv_c, tv_n = activation_tv(net, val, noisy, "conv1", subset)
    print(f"{name}: median conv1 tv_noisy/tv_clean = "
          f"{noise_tv_ratio(tv_c, tv_n):.3f}")

probe = gen_cue_conflict(5003, 224)
for name, net in (("standard", net_s), ("adversarial", net_r)):
    profiles = dissect(net, probe, "conv3")
    print(f"{name}: categories {category_counts(profiles)}, "
          f"mean diversity {mean_diversity(profiles):.2f}")

scores = ablation_scores(net_r, conflict, layers=["conv3"])
top = max(scores, key=lambda s: s.shape_score + s.texture_score)
print(f"most decision-critical adversarial channel: conv3[{top.channel.channel}] "
      f"shape score {top.shape_score}, texture score {top.texture_score}")
