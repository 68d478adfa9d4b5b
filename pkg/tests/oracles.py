"""Independent brute-force references used by the test suite.

Everything here is deliberately written the slow, obvious way (loops, sets,
64-bit arithmetic) and never calls into the library code paths it checks.
"""

import numpy as np

from robustlab import autodiff as ad
from robustlab.autodiff import Tape, Tensor, backward


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def gradcheck(fwd, leaves, h=1e-3, seed=0):
    """Max scaled error between autodiff and central finite differences.

    ``fwd`` builds the primitive's output from the leaf tensors. The output
    is scalarized against a fixed random probe r: the autodiff side computes
    grad of sum(out * r) in-graph, the FD side evaluates the float32
    primitive and accumulates the probe reduction in float64, as required
    for a trustworthy reference at h=1e-3.

    Error is per-leaf: max|g_ad - g_fd| / max(max|g_ad|, max|g_fd|, 1e-6).
    """
    rng = np.random.default_rng(seed)
    out_shape = fwd().shape
    r = rng.normal(0.0, 1.0, out_shape).astype(np.float32)
    rt = Tensor(r)
    with Tape() as tape:
        loss = ad.tensor_sum(ad.mul(fwd(), rt))
    for p in leaves:
        p.zero_grad()
    backward(loss)
    tape.clear()

    r64 = r.astype(np.float64)

    def scalar():
        return float((fwd().data.astype(np.float64) * r64).sum())

    worst = 0.0
    for p in leaves:
        flat = p.data.ravel()
        g_fd = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i].copy()
            flat[i] = orig + h
            up = scalar()
            flat[i] = orig - h
            down = scalar()
            flat[i] = orig
            g_fd[i] = (up - down) / (2.0 * h)
        g_ad = p.grad.astype(np.float64).ravel()
        scale = max(np.abs(g_ad).max(), np.abs(g_fd).max(), 1e-6)
        worst = max(worst, float(np.abs(g_ad - g_fd).max() / scale))
    return worst


def gradcheck_scalar(make_loss, leaves, ref_scalar=None, h=1e-3):
    """Gradcheck for functions that already produce a scalar (e.g. CE loss).

    ``ref_scalar``, when given, is an independent float64 evaluation of the
    same mathematical function, used for the finite-difference side so the
    h=1e-3 quotient is not drowned by float32 rounding of the loss.
    """
    with Tape() as tape:
        loss = make_loss()
    for p in leaves:
        p.zero_grad()
    backward(loss)
    tape.clear()
    evaluate = ref_scalar if ref_scalar is not None \
        else (lambda: np.float64(make_loss().item()))

    worst = 0.0
    for p in leaves:
        flat = p.data.ravel()
        g_fd = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i].copy()
            flat[i] = orig + h
            up = evaluate()
            flat[i] = orig - h
            down = evaluate()
            flat[i] = orig
            g_fd[i] = (up - down) / (2.0 * h)
        g_ad = p.grad.astype(np.float64).ravel()
        scale = max(np.abs(g_ad).max(), np.abs(g_fd).max(), 1e-6)
        worst = max(worst, float(np.abs(g_ad - g_fd).max() / scale))
    return worst


def cross_entropy_f64(logits, labels):
    """Independent float64 mean cross-entropy via max-shifted log-sum-exp."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(z)), np.asarray(labels)].mean()


def away_from_zero(values, margin=0.05):
    """Push values out of the [-margin, margin] band so relu's kink at zero
    cannot corrupt the finite-difference quotient."""
    v = np.asarray(values, dtype=np.float32)
    return v + np.sign(v).astype(np.float32) * np.float32(margin)


def distinct_pool_windows(rng, shape, min_gap=0.01):
    """Random NCHW data whose 2x2 pooling windows have no near-ties, so the
    window argmax is stable under +-h perturbation."""
    while True:
        x = rng.normal(0, 1, shape).astype(np.float32)
        n, c, h, w = shape
        win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(n, c, h // 2, w // 2, 4)
        sorted_win = np.sort(win, axis=-1)
        if np.diff(sorted_win, axis=-1).min() > min_gap:
            return x


# ---------------------------------------------------------------------------
# brute-force references
# ---------------------------------------------------------------------------

def conv2d_loopnest(x, w, b, stride, padding):
    """Six nested loops, float64 accumulation."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, cin, h, wid = x.shape
    cout, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wid + 2 * padding - kw) // stride + 1
    xp = np.zeros((n, cin, h + 2 * padding, wid + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wid] = x
    out = np.zeros((n, cout, ho, wo))
    for nn in range(n):
        for oo in range(cout):
            for yy in range(ho):
                for xx in range(wo):
                    acc = 0.0
                    for cc in range(cin):
                        for ii in range(kh):
                            for jj in range(kw):
                                acc += w[oo, cc, ii, jj] * \
                                    xp[nn, cc, yy * stride + ii, xx * stride + jj]
                    out[nn, oo, yy, xx] = acc + b[oo]
    return out


def tv_pairs(grid):
    """Total variation by explicit enumeration of adjacent pairs."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            if j + 1 < w:
                total += abs(grid[i, j] - grid[i, j + 1])
            if i + 1 < h:
                total += abs(grid[i, j] - grid[i + 1, j])
    return total


def spearman_rank_pearson(a, b):
    """Rank both vectors by sorting (average ties), then Pearson in float64."""
    def ranks(v):
        v = np.asarray(v, dtype=np.float64).ravel()
        order = sorted(range(len(v)), key=lambda i: v[i])
        out = [0.0] * len(v)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
                j += 1
            avg = (i + j) / 2.0 + 1.0
            for k in range(i, j + 1):
                out[order[k]] = avg
            i = j + 1
        return np.array(out)

    ra, rb = ranks(a), ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0:
        return 0.0
    return float((ra * rb).sum() / denom)


def iou_setcount(mask_a, mask_b):
    """IoU via explicit index sets."""
    a = {i for i, v in enumerate(np.asarray(mask_a).ravel()) if v}
    b = {i for i, v in enumerate(np.asarray(mask_b).ravel()) if v}
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def mutual_information_bits(xs, ys):
    """Plug-in MI estimate from the empirical joint distribution, in bits."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    n = len(xs)
    mi = 0.0
    for x in np.unique(xs):
        for y in np.unique(ys):
            pxy = ((xs == x) & (ys == y)).sum() / n
            if pxy == 0:
                continue
            px = (xs == x).sum() / n
            py = (ys == y).sum() / n
            mi += pxy * np.log2(pxy / (px * py))
    return mi


# ---------------------------------------------------------------------------
# pixel-level dataset oracles
# ---------------------------------------------------------------------------

def classify_texture(image, fg_mask):
    """Predict the texture id from pixel statistics inside the mask.

    Recovers the on/off field by comparing each foreground pixel to the
    brightest foreground value, then measures agreement with each
    deterministic pattern; speckle is the fallback when nothing fits.
    """
    from robustlab.dataset import TEXTURES, texture_pattern

    fg = np.asarray(fg_mask, dtype=bool)
    vals = image.max(axis=0)[fg]
    on_observed = vals > 0.7 * vals.max()
    best_name, best_score = "speckle", 0.0
    rng = np.random.default_rng(0)  # only speckle consumes randomness
    for tid, name in enumerate(TEXTURES):
        if name == "speckle":
            continue
        pattern = texture_pattern(tid, rng)[fg]
        score = (pattern == on_observed).mean()
        if score > best_score:
            best_name, best_score = name, score
    if best_score < 0.9:
        best_name = "speckle"
    return TEXTURES.index(best_name)


class ShapeTemplateOracle:
    """Classify shapes by IoU against a rotation/scale template bank."""

    def __init__(self):
        from robustlab.dataset import IMG, SHAPES, render_shape_mask
        self.img = IMG
        templates = []
        owners = []
        for sid in range(len(SHAPES)):
            for rot in np.arange(-25, 26, 5):
                for scl in np.arange(0.7, 1.101, 0.05):
                    mask = render_shape_mask(sid, rot, scl, 0.0, 0.0)
                    templates.append(self._recenter(mask).ravel())
                    owners.append(sid)
        self.templates = np.array(templates, dtype=np.float32)  # (T, IMG*IMG)
        self.owners = np.array(owners)
        self.t_areas = self.templates.sum(axis=1)

    def _recenter(self, mask):
        """Integer-shift a mask so its centroid sits at the image center.

        Matters for asymmetric shapes (crescent) whose centroid is far from
        the rendering origin.
        """
        ys, xs = np.nonzero(mask)
        dy = int(round(self.img / 2 - (ys.mean() + 0.5)))
        dx = int(round(self.img / 2 - (xs.mean() + 0.5)))
        shifted = np.zeros_like(mask)
        src = mask[max(0, -dy):self.img - max(0, dy),
                   max(0, -dx):self.img - max(0, dx)]
        shifted[max(0, dy):max(0, dy) + src.shape[0],
                max(0, dx):max(0, dx) + src.shape[1]] = src
        return shifted

    def classify_mask(self, mask):
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return 0
        flat = self._recenter(mask).ravel().astype(np.float32)
        inter = self.templates @ flat
        union = self.t_areas + flat.sum() - inter
        iou = inter / np.maximum(union, 1.0)
        return int(self.owners[int(iou.argmax())])

    def classify_silhouette(self, image):
        """Silhouette images are foreground-black on white."""
        return self.classify_mask(image[0] < 0.5)
