"""SGD training under three regimes: standard, adversarial, texture-randomized.

The adversarial regime replaces every batch with PGD adversarial examples
generated against the current parameters before the gradient step; the other
two regimes differ only in which shard they are fed. The optimizer is SGD
with momentum and decoupled-from-bias weight decay:

    v <- momentum * v - lr * (g + wd * w)      (wd applied to weights only)
    w <- w + v

The learning rate is multiplied by ``lr_decay_factor`` every
``lr_decay_every`` epochs. Batch order is reshuffled each epoch from the
config seed, so (seed, config, shards) fully determine the result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .attack import AttackConfig, adv_accuracy, pgd
from .dataset import DatasetShard
from .errors import ConfigurationError, TrainingDiverged
from .models import Network

REGIMES = ("standard", "adversarial", "texture-randomized")

LOG_HEADER = "epoch,loss,train_acc,val_acc,adv_acc,lr,seconds"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    ``attack_warmup_epochs`` and ``attack_ramp_epochs`` only affect the
    adversarial regime: the perturbation radius is 0 during warmup, grows
    linearly to the full epsilon across the ramp (step size scaled along),
    and is the configured constant afterwards. From-scratch PGD training at
    full radius stalls at chance here (the attack erases the early learning
    signal before any features form), so the warmup gives the model a clean
    start; with warmup and ramp at 0 the attack applies from the first
    batch. The warmup's job is escaping the initial optimization plateau,
    whose length varies by seed, so it ends early once the clean train
    accuracy reaches ``attack_warmup_exit_acc`` (the epoch count is a cap).
    Evaluation always uses the full-strength attack.
    """

    regime: str = "standard"
    epochs: int = 30
    batch_size: int = 128
    lr0: float = 0.05
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 15
    momentum: float = 0.9
    weight_decay: float = 1e-4
    attack: Optional[AttackConfig] = None
    seed: int = 0
    adv_eval_every: int = 5
    attack_warmup_epochs: int = 0
    attack_ramp_epochs: int = 0
    attack_warmup_exit_acc: float = 0.25

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigurationError(
                f"unknown regime {self.regime!r}; valid: {', '.join(REGIMES)}")
        if self.regime == "adversarial" and self.attack is None:
            raise ConfigurationError("adversarial regime requires an attack config")
        if min(self.epochs, self.batch_size) < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.lr0 < 0:
            raise ConfigurationError("lr0 must be >= 0")
        for name in ("lr_decay_factor", "lr_decay_every"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ConfigurationError("momentum and weight_decay must be >= 0")
        if min(self.attack_warmup_epochs, self.attack_ramp_epochs) < 0:
            raise ConfigurationError("attack warmup/ramp epochs must be >= 0")

    def attack_at(self, epochs_since_warmup: int) -> Optional[AttackConfig]:
        """The attack applied N epochs after the warmup ended."""
        if self.regime != "adversarial":
            return None
        if epochs_since_warmup < self.attack_ramp_epochs:
            frac = (epochs_since_warmup + 1) / self.attack_ramp_epochs
            if self.attack.epsilon * frac == 0.0:
                return None
            return AttackConfig(
                epsilon=self.attack.epsilon * frac,
                alpha=self.attack.alpha * frac,
                steps=self.attack.steps,
                clamp_lo=self.attack.clamp_lo, clamp_hi=self.attack.clamp_hi)
        return self.attack


@dataclass
class EpochRow:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    adv_acc: Optional[float]   # None on epochs where it is not evaluated
    lr: float
    seconds: float


@dataclass
class TrainLog:
    rows: List[EpochRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [LOG_HEADER]
        for r in self.rows:
            adv = "" if r.adv_acc is None else f"{r.adv_acc:.6f}"
            lines.append(f"{r.epoch},{r.loss:.6f},{r.train_acc:.6f},"
                         f"{r.val_acc:.6f},{adv},{r.lr:.6g},{r.seconds:.3f}")
        return "\n".join(lines) + "\n"


def _accuracy(net: Network, shard: DatasetShard) -> float:
    return float((net.predict(shard.images) == shard.labels).mean())


def train(net: Network, shard_train: DatasetShard, shard_val: DatasetShard,
          cfg: TrainConfig) -> tuple:
    """Train in place; returns (net, TrainLog)."""
    if len(shard_train) == 0 or len(shard_val) == 0:
        raise ConfigurationError("training and validation shards must be nonempty")
    if cfg.regime == "adversarial" and cfg.attack.epsilon <= 0:
        # epsilon == 0 degenerates to the standard regime; allowed, but the
        # attack config must still be well-formed (checked in AttackConfig).
        pass

    rng = np.random.default_rng(cfg.seed)
    n = len(shard_train)
    velocity = {k: np.zeros_like(p.data) for k, p in net.params.items()}
    log = TrainLog()
    attack_start: Optional[int] = None  # epoch at which the warmup ended

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.lr0 * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)
        if cfg.regime == "adversarial" and attack_start is None:
            escaped = (log.rows and
                       log.rows[-1].train_acc >= cfg.attack_warmup_exit_acc)
            if epoch >= cfg.attack_warmup_epochs or escaped:
                attack_start = epoch
        epoch_attack = (cfg.attack_at(epoch - attack_start)
                        if attack_start is not None else None)
        order = rng.permutation(n)
        losses = []
        for bi, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            xb = shard_train.images[idx]
            yb = shard_train.labels[idx].astype(np.int64)
            if epoch_attack is not None and epoch_attack.epsilon > 0:
                xb = pgd(net, xb, yb, epoch_attack).x_adv

            with Tape() as tape:
                loss = ad.softmax_cross_entropy(net.forward(Tensor(xb)), yb)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise TrainingDiverged(epoch, bi)
            losses.append(loss_val)
            net.zero_grad()
            backward(loss)
            tape.clear()

            for name, p in net.params.items():
                g = p.grad
                if cfg.weight_decay and name.endswith(".weight"):
                    g = g + cfg.weight_decay * p.data
                v = velocity[name]
                v *= cfg.momentum
                v -= lr * g
                p.data += v

        adv_acc = None
        if cfg.attack is not None and (
                (epoch + 1) % cfg.adv_eval_every == 0 or epoch == cfg.epochs - 1):
            adv_acc = adv_accuracy(net, shard_val, cfg.attack)
        log.rows.append(EpochRow(
            epoch=epoch,
            loss=float(np.mean(losses)),
            train_acc=_accuracy(net, shard_train),
            val_acc=_accuracy(net, shard_val),
            adv_acc=adv_acc,
            lr=lr,
            seconds=time.perf_counter() - t0,
        ))

    net.meta["regime"] = cfg.regime
    net.meta["epochs"] = cfg.epochs
    net.meta["train_seed"] = cfg.seed
    if cfg.regime == "adversarial":
        net.meta["attack_started_epoch"] = attack_start
    return net, log
