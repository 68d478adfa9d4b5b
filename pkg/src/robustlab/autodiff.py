"""Dense float32 tensors with tape-based reverse-mode automatic differentiation.

The op set is exactly what a small image classifier needs: conv2d, relu,
maxpool2, global_avg_pool, linear, softmax_cross_entropy, plus elementwise
add/mul/scale/sum for composing test objectives. Ops record themselves onto
the innermost active :class:`Tape`; :func:`backward` replays the tape in
reverse and accumulates gradients additively into every leaf tensor that has
``requires_grad`` set. Without an active tape the same ops run as plain
numpy, which is the fast path used for evaluation and analysis.

Storage and compute are float32 throughout. No broadcasting is supported
beyond the bias add inside conv2d/linear.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, UsageError

_active_tape: Optional["Tape"] = None

# Reusable scratch buffers keyed by (shape, dtype). Fresh multi-megabyte
# allocations cost page faults every call; recycling them makes the conv
# lowering several times faster. Single-threaded use only.
_workspace: dict = {}


def _take(shape, dtype=np.float32) -> np.ndarray:
    key = (tuple(shape), np.dtype(dtype).str)
    stack = _workspace.get(key)
    if stack:
        return stack.pop()
    return np.empty(shape, dtype)


def _give(arr: np.ndarray):
    key = (arr.shape, arr.dtype.str)
    _workspace.setdefault(key, []).append(arr)


def clear_workspace():
    """Drop all cached scratch buffers (frees memory; mainly for tests)."""
    _workspace.clear()


class Tape:
    """Ordered record of primitive ops executed during one forward pass.

    Used as a context manager::

        with Tape() as tape:
            loss = softmax_cross_entropy(net.forward(x), y)
        backward(loss)

    ``clear()`` drops every recorded node and recycles the intermediates
    they saved. Tapes do not nest: one training step owns one tape.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._owned: list[np.ndarray] = []

    def __enter__(self) -> "Tape":
        global _active_tape
        if _active_tape is not None:
            raise UsageError("a tape is already active; tapes do not nest")
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = None
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def clear(self):
        self._nodes.clear()
        while self._owned:
            _give(self._owned.pop())

    def _record(self, node: "_Node"):
        self._nodes.append(node)


class _Node:
    """One recorded primitive: output tensor, needy inputs, and a pullback."""

    __slots__ = ("out", "inputs", "pullback")

    def __init__(self, out: "Tensor", inputs: Sequence["Tensor"],
                 pullback: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.out = out
        self.inputs = inputs
        self.pullback = pullback


class Tensor:
    """A dense n-d array of float32 values, optionally tracked for gradients.

    ``data`` is always a C-contiguous float32 ndarray, so the flat buffer is
    the row-major layout of ``shape``. ``grad`` is populated (same shape,
    float32) by :func:`backward` for leaves created with
    ``requires_grad=True``; repeated backward calls accumulate.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_is_result")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None
        self._is_result = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Small arithmetic sugar used by tests and demos.
    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__


def _wants_grad(t: Tensor) -> bool:
    return t.requires_grad or t._is_result


def _emit(out_data: np.ndarray, inputs: Sequence[Tensor], pullback,
          saved: Sequence[np.ndarray] = ()) -> Tensor:
    """Wrap an op result, recording it on the active tape if one exists.

    ``saved`` holds pooled scratch buffers the pullback reads; they stay
    owned by the tape until it is cleared, or go straight back to the pool
    when the op is not recorded.
    """
    out = Tensor(out_data)
    if _active_tape is not None and any(_wants_grad(t) for t in inputs):
        out._tape = _active_tape
        out._is_result = True
        _active_tape._record(_Node(out, tuple(inputs), pullback))
        _active_tape._owned.extend(saved)
    else:
        for buf in saved:
            _give(buf)
    return out


def backward(loss: Tensor):
    """Populate ``grad`` on every participating leaf by replaying the tape.

    ``loss`` must be a scalar produced under an active-at-the-time tape.
    Gradients accumulate: call ``zero_grad`` on leaves (or
    ``Network.zero_grad``) between steps.
    """
    if loss.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise UsageError("backward on a tensor that was not produced under a Tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape._nodes):
        g_out = grads.pop(id(node.out), None)
        if g_out is None:
            continue
        for inp, g in zip(node.inputs, node.pullback(g_out)):
            if g is None or not _wants_grad(inp):
                continue
            if inp._is_result:
                acc = grads.get(id(inp))
                grads[id(inp)] = g if acc is None else acc + g
            else:
                g32 = np.asarray(g, dtype=np.float32)
                if inp.grad is None:
                    inp.grad = g32.copy() if g32 is g else g32
                else:
                    inp.grad += g32


# ---------------------------------------------------------------------------
# elementwise / reduction primitives
# ---------------------------------------------------------------------------

def _check_same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ConfigurationError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    _check_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(a.data * np.float32(c), (a,), lambda g: (g * np.float32(c),))


def tensor_sum(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    shape = a.shape
    return _emit(a.data.sum(dtype=np.float32).reshape(()), (a,),
                 lambda g: (np.broadcast_to(g, shape),))


def relu(x: Tensor) -> Tensor:
    xd = x.data
    return _emit(np.maximum(xd, 0.0), (x,), lambda g: (g * (xd > 0),))


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _im2col_view(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Channel-first patch view (C, kh, kw, N, H', W') of padded NCHW input.

    Copying this view into a (C*kh*kw, N*H'*W') buffer lowers the whole
    batch to one GEMM operand.
    """
    n, c, h, w = xp.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    s0, s1, s2, s3 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(c, kh, kw, n, ho, wo),
        strides=(s1, s2, s3, s0, s2 * stride, s3 * stride),
        writeable=False,
    )


def _col2im_cfirst(gcols: np.ndarray, x_shape: tuple, kh: int, kw: int,
                   stride: int, padding: int) -> np.ndarray:
    """Scatter-add channel-first patch gradients back onto the input grid.

    ``gcols`` has layout (C*kh*kw, N*H'*W'), the natural output of a single
    GEMM against the whole batch. Accumulation lands directly on the
    unpadded grid: each kernel tap contributes a cropped, shifted slab.
    """
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    gx = _take((c, n, h, w))
    gx.fill(0.0)
    g6 = gcols.reshape(c, kh, kw, n, ho, wo)
    for i in range(kh):
        for j in range(kw):
            # Output position (y, x) of this tap touches input row
            # y*stride + i - padding; keep the in-bounds range only.
            oy0 = max(0, -(-(padding - i) // stride))
            ox0 = max(0, -(-(padding - j) // stride))
            oy1 = min(ho, (h - 1 + padding - i) // stride + 1)
            ox1 = min(wo, (w - 1 + padding - j) // stride + 1)
            if oy0 >= oy1 or ox0 >= ox1:
                continue
            iy0 = oy0 * stride + i - padding
            ix0 = ox0 * stride + j - padding
            iy1 = iy0 + (oy1 - oy0 - 1) * stride + 1
            ix1 = ix0 + (ox1 - ox0 - 1) * stride + 1
            gx[:, :, iy0:iy1:stride, ix0:ix1:stride] += g6[:, i, j, :, oy0:oy1, ox0:ox1]
    out = np.ascontiguousarray(gx.transpose(1, 0, 2, 3))
    _give(gx)
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    """2-D cross-correlation of NCHW input with OIHW filters plus channel bias.

    Output spatial extent must come out integral:
    ``H' = (H + 2*padding - kH)/stride + 1``.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigurationError(
            f"conv2d: need 4-d input and weight, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ConfigurationError(
            f"conv2d: input channels {cin} != weight in-channels {cin_w}")
    if bias.shape != (cout,):
        raise ConfigurationError(
            f"conv2d: bias shape {bias.shape} != ({cout},)")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"conv2d: bad stride={stride} padding={padding}")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ConfigurationError(
            f"conv2d: extents H={h} W={w} with k=({kh},{kw}) pad={padding} "
            f"stride={stride} do not tile evenly")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ConfigurationError(f"conv2d: empty output {ho}x{wo}")

    ckk = cin * kh * kw
    nl = n * ho * wo
    if padding:
        xp = _take((n, cin, h + 2 * padding, w + 2 * padding))
        xp.fill(0.0)
        xp[:, :, padding:padding + h, padding:padding + w] = x.data
    else:
        xp = x.data
    cols = _take((ckk, nl))                                 # channel-first patches
    np.copyto(cols.reshape(cin, kh, kw, n, ho, wo), _im2col_view(xp, kh, kw, stride))
    if padding:
        _give(xp)
    wmat = weight.data.reshape(cout, ckk)
    out_cf = _take((cout, nl))
    np.matmul(wmat, cols, out=out_cf)
    out_cf += bias.data[:, None]
    out = np.ascontiguousarray(
        out_cf.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3))
    _give(out_cf)

    x_needs = _wants_grad(x)
    w_needs = _wants_grad(weight)

    def pullback(g):
        gt = _take((cout, nl))
        np.copyto(gt.reshape(cout, n, ho, wo), g.transpose(1, 0, 2, 3))
        gx = gw = gb = None
        if w_needs:
            gw = np.matmul(gt, cols.T).reshape(weight.shape)
            gb = gt.sum(axis=1)
        if x_needs:
            gcols = _take((ckk, nl))
            np.matmul(wmat.T, gt, out=gcols)
            gx = _col2im_cfirst(gcols, x.shape, kh, kw, stride, padding)
            _give(gcols)
        _give(gt)
        return gx, gw, gb

    return _emit(out, (x, weight, bias), pullback, saved=(cols,))


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; spatial extents must be even.

    Ties send the gradient to the first maximal position in row-major window
    order, matching an argmax over the flattened window.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigurationError(f"maxpool2: odd spatial extent in {x.shape}")
    xd = x.data
    cells = (xd[:, :, 0::2, 0::2], xd[:, :, 0::2, 1::2],
             xd[:, :, 1::2, 0::2], xd[:, :, 1::2, 1::2])
    out = np.maximum(np.maximum(cells[0], cells[1]),
                     np.maximum(cells[2], cells[3]))

    def pullback(g):
        # First-max selection in row-major window order, matching an argmax
        # over the flattened 2x2 window. Work on contiguous buffers, then
        # scatter the four window cells back in one strided write each.
        taken = np.zeros(out.shape, dtype=bool)
        gx = np.empty((n, c, h, w), dtype=np.float32)
        views = (gx[:, :, 0::2, 0::2], gx[:, :, 0::2, 1::2],
                 gx[:, :, 1::2, 0::2], gx[:, :, 1::2, 1::2])
        zero = np.float32(0.0)
        for cell, view in zip(cells, views):
            hit = np.equal(cell, out)
            hit &= ~taken
            view[...] = np.where(hit, g, zero)
            taken |= hit
        return (gx,)

    return _emit(out, (x,), pullback)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial grid: [N,C,H,W] -> [N,C]."""
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=np.float32)
    inv = np.float32(1.0 / (h * w))

    def pullback(g):
        return (np.broadcast_to((g * inv)[:, :, None, None], (n, c, h, w)),)

    return _emit(out, (x,), pullback)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map [N,F] @ [O,F]^T + [O]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ConfigurationError(
            f"linear: shapes {x.shape} and {weight.shape} do not compose")
    out = x.data @ weight.data.T + bias.data
    x_needs = _wants_grad(x)
    w_needs = _wants_grad(weight)
    xd, wd = x.data, weight.data

    def pullback(g):
        gx = g @ wd if x_needs else None
        gw = g.T @ xd if w_needs else None
        gb = g.sum(axis=0) if w_needs else None
        return gx, gw, gb

    return _emit(out, (x, weight, bias), pullback)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy over the batch, via max-shifted log-sum-exp.

    ``labels`` is an integer array of shape [N] with values in
    ``range(num_classes)``.
    """
    if logits.ndim != 2:
        raise ConfigurationError(f"softmax_cross_entropy: logits shape {logits.shape}")
    y = np.asarray(labels)
    n, k = logits.shape
    if y.shape != (n,):
        raise InputError(f"labels shape {y.shape} != ({n},)")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise InputError(
            f"label out of range: values span [{y.min()}, {y.max()}], classes={k}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    logp = z - np.log(sez)
    loss = np.float32(-(logp[np.arange(n), y]).mean())

    # The softmax for the pullback is computed in float64: under float32 a
    # confidently-correct row rounds to p == onehot exactly, the gradient
    # vanishes, and gradient-based attacks are blinded by pure rounding
    # (margins beyond ~16 nats saturate). float64 keeps a true descent
    # direction up to ~700 nats.
    z64 = logits.data.astype(np.float64)
    z64 -= z64.max(axis=1, keepdims=True)
    ez64 = np.exp(z64)
    p64 = ez64 / ez64.sum(axis=1, keepdims=True)

    def pullback(g):
        gl = p64.copy()
        gl[np.arange(n), y] -= 1.0
        gl *= np.float64(g.reshape(())) / n
        return (gl.astype(np.float32),)

    return _emit(np.asarray(loss).reshape(()), (logits,), pullback)
