"""Train a small classifier, then attack it with L2 PGD.

A shortened schedule keeps this demo around two minutes; the full study
uses the defaults in robustlab.config.

Run:  python demos/03_train_and_attack.py
"""

import numpy as np

from robustlab.attack import AttackConfig, adv_accuracy, pgd
from robustlab.dataset import gen_train
from robustlab.models import build
from robustlab.training import TrainConfig, train

train_shard = gen_train(11, 60)
val_shard = gen_train(9011, 30)

net = build("mini3", 11)
cfg = TrainConfig(regime="standard", epochs=10, batch_size=64, seed=11)
net, log = train(net, train_shard, val_shard, cfg)
print(log.to_csv())

attack = AttackConfig(epsilon=2.0, alpha=0.5, steps=7)
res = pgd(net, val_shard.images[:32], val_shard.labels[:32].astype(np.int64),
          attack)
print(f"perturbation norms: max={res.delta_norm.max():.4f} "
      f"(budget {attack.epsilon}), fooled {res.fooled.sum()}/32")
print(f"pixels stay in [{res.x_adv.min():.3f}, {res.x_adv.max():.3f}]")

clean = (net.predict(val_shard.images) == val_shard.labels).mean()
robust = adv_accuracy(net, val_shard, attack)
print(f"clean accuracy {clean:.3f} -> adversarial accuracy {robust:.3f}")
