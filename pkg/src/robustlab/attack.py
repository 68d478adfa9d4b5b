"""Projected gradient descent under an L2 ball, and adversarial accuracy.

Each iteration takes a normalized gradient-ascent step on the loss, projects
the accumulated perturbation back onto the epsilon ball, clamps the result
to the valid pixel range, and re-derives the perturbation from the clamped
image so the norm bound holds on what is actually delivered. The start is
the clean image (no random start), which keeps attacks deterministic.
Network parameters are left untouched: their gradients are neither needed
nor accumulated during the attack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .errors import ConfigurationError
from .models import Network


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float          # L2 radius in flattened input space
    alpha: float            # per-iteration step size
    steps: int
    clamp_lo: float = 0.0
    clamp_hi: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0")
        if self.steps < 0:
            raise ConfigurationError("steps must be >= 0")
        if self.steps > 0 and self.alpha <= 0:
            raise ConfigurationError("alpha must be > 0 when steps > 0")


@dataclass
class AttackResult:
    x_adv: np.ndarray        # (N,3,H,W) float32 in clamp range
    delta_norm: np.ndarray   # (N,) achieved L2 norm of x_adv - x
    fooled: np.ndarray       # (N,) bool, prediction on x_adv differs from y
    zero_grad_skips: int = 0  # samples*iterations where the gradient vanished


def _per_sample_l2(d: np.ndarray) -> np.ndarray:
    return np.sqrt((d.astype(np.float64) ** 2).sum(axis=(1, 2, 3))).astype(np.float32)


def pgd(net: Network, x: np.ndarray, y: np.ndarray, cfg: AttackConfig) -> AttackResult:
    """Attack a batch; returns the perturbed images and per-sample stats."""
    x0 = np.ascontiguousarray(x, dtype=np.float32)
    y = np.asarray(y)
    n = len(x0)
    delta = np.zeros_like(x0)
    skips = 0

    saved_flags = {k: p.requires_grad for k, p in net.params.items()}
    net.set_requires_grad(False)
    try:
        for _ in range(cfg.steps):
            xt = Tensor(x0 + delta, requires_grad=True)
            with Tape() as tape:
                loss = ad.softmax_cross_entropy(net.forward(xt), y)
            backward(loss)
            tape.clear()
            g = xt.grad
            gn = _per_sample_l2(g)
            live = gn > 0
            skips += int(n - live.sum())
            if live.any():
                step = np.zeros_like(g)
                step[live] = g[live] / gn[live, None, None, None]
                delta += cfg.alpha * step
            dn = _per_sample_l2(delta)
            over = dn > cfg.epsilon
            if over.any():
                scale = np.ones(n, dtype=np.float32)
                scale[over] = cfg.epsilon / dn[over]
                delta *= scale[:, None, None, None]
            x_adv = np.clip(x0 + delta, cfg.clamp_lo, cfg.clamp_hi)
            delta = x_adv - x0
    finally:
        for k, flag in saved_flags.items():
            net.params[k].requires_grad = flag

    x_adv = np.clip(x0 + delta, cfg.clamp_lo, cfg.clamp_hi)
    fooled = net.predict(x_adv) != y
    return AttackResult(
        x_adv=x_adv,
        delta_norm=_per_sample_l2(x_adv - x0),
        fooled=fooled,
        zero_grad_skips=skips,
    )


def adv_accuracy(net: Network, shard, cfg: AttackConfig,
                 batch_size: int = 256) -> float:
    """Top-1 accuracy on PGD-perturbed shard images."""
    correct = 0
    for lo in range(0, len(shard), batch_size):
        res = pgd(net, shard.images[lo:lo + batch_size],
                  shard.labels[lo:lo + batch_size].astype(np.int64), cfg)
        correct += int((~res.fooled).sum())
    return correct / len(shard)
