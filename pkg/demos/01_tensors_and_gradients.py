"""Tour of the tensor core: forward ops, the tape, and gradient checking.

Run:  python demos/01_tensors_and_gradients.py
"""

import numpy as np

from robustlab import autodiff as ad
from robustlab.autodiff import Tape, Tensor, backward

rng = np.random.default_rng(0)

# --- forward ops are plain numpy under the hood -----------------------------
x = Tensor(rng.random((2, 3, 8, 8)).astype(np.float32), requires_grad=True)
w = Tensor(rng.normal(0, 0.4, (4, 3, 3, 3)).astype(np.float32), requires_grad=True)
b = Tensor(np.zeros(4, dtype=np.float32), requires_grad=True)

out = ad.conv2d(x, w, b, stride=1, padding=1)
print("conv2d:", x.shape, "->", out.shape)

# --- record a loss under a tape, then replay it backward ---------------------
labels = rng.integers(0, 8, 2)
fcw = Tensor(rng.normal(0, 0.3, (8, 4)).astype(np.float32), requires_grad=True)
fcb = Tensor(np.zeros(8, dtype=np.float32), requires_grad=True)

with Tape() as tape:
    h = ad.global_avg_pool(ad.relu(ad.conv2d(x, w, b, 1, 1)))
    loss = ad.softmax_cross_entropy(ad.linear(h, fcw, fcb), labels)
print(f"loss = {loss.item():.4f}  ({len(tape)} ops recorded)")

backward(loss)
print("grad shapes:", {n: t.grad.shape for n, t in
                       [("x", x), ("w", w), ("fc.w", fcw)]})

# --- gradients agree with central finite differences --------------------------
h_step = 1e-3
i = (0, 0, 1, 1)
orig = w.data[i]
probe = []
for sign in (+1, -1):
    w.data[i] = orig + sign * h_step
    hh = ad.global_avg_pool(ad.relu(ad.conv2d(x, w, b, 1, 1)))
    probe.append(ad.softmax_cross_entropy(ad.linear(hh, fcw, fcb), labels).item())
w.data[i] = orig
fd = (np.float64(probe[0]) - np.float64(probe[1])) / (2 * h_step)
print(f"dL/dw{list(i)}: autodiff={w.grad[i]:.6f}  finite-diff={fd:.6f}")

# --- gradients accumulate until cleared --------------------------------------
g1 = x.grad.copy()
backward(loss)
print("second backward doubles grads:", np.allclose(x.grad, 2 * g1))
tape.clear()
