"""Dense tensors with reverse-mode automatic differentiation.

A deliberately small engine: it implements exactly the operations the
segmentation network and its objective need (2-D same-padding convolution,
ReLU, instance normalization, channel softmax, and a handful of
elementwise/reduction primitives), nothing more.

Execution is define-by-run: operations executed inside a ``with Tape():``
block are recorded in order, and ``tape.backward(loss)`` replays their
backward rules in reverse to fill the ``grad`` buffer of every
``requires_grad`` leaf. Operations executed without an active tape are
plain eager computations (useful for finite-difference probing and for
constant precomputation).

Values are numpy arrays, float32 by default; passing float64 arrays runs
the identical rules in double precision, which is what the gradient-check
tests do. Reduction order is fixed, so results are bit-reproducible for a
given build configuration.

Performance notes. An optimization loop evaluates the same computation
thousands of times, so each tape owns an arena of scratch buffers: the
i-th allocation of an iteration reuses the i-th slot of the previous one
(``tape.reset()`` rewinds the arena). Consequently the arrays backing
tensors recorded on a tape are only valid until the tape is reset; copy
anything you keep. Leaf gradients always live in private buffers and
survive resets. The first tape construction also raises glibc's mmap
threshold so any remaining large temporaries recycle their pages.
"""

from __future__ import annotations

import ctypes
import sys
import threading

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "conv2d",
    "relu",
    "instance_norm",
    "softmax_channels",
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "abs_",
    "square",
    "exp",
    "log_guarded",
    "forward_diff",
    "channel_slice",
    "sum_channels",
    "spatial_mean",
    "sum_all",
    "mean_all",
    "LOG_FLOOR",
]

# Floor used by log_guarded so entropy terms stay finite when probabilities
# underflow.
LOG_FLOOR = 1e-12

_local = threading.local()

_allocator_tuned = False


def _tune_allocator():
    """Keep big freed blocks on the glibc heap instead of unmapping them.

    Without this every >128 KiB numpy temporary is mmap'd and costs page
    faults on first touch, which dominates the optimization loop. No-op on
    non-glibc platforms; disable with UNSUPIX_NO_MALLOC_TUNING=1.
    """
    global _allocator_tuned
    if _allocator_tuned:
        return
    _allocator_tuned = True
    import os

    if os.environ.get("UNSUPIX_NO_MALLOC_TUNING"):
        return
    if not sys.platform.startswith("linux"):
        return
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except Exception:
        pass


class _Arena:
    """Iteration-scoped scratch buffers with stable slot order.

    Allocation k after a rewind returns the same array as allocation k of
    the previous pass when shape and dtype match, so a repeated identical
    computation stops allocating entirely. Buffers come back dirty; call
    sites that need zeros must fill them.
    """

    __slots__ = ("_slots", "_next")

    def __init__(self):
        self._slots: list[np.ndarray] = []
        self._next = 0

    def get(self, shape, dtype) -> np.ndarray:
        i = self._next
        self._next += 1
        if i < len(self._slots):
            buf = self._slots[i]
            if buf.shape == shape and buf.dtype == dtype:
                return buf
            buf = np.empty(shape, dtype)
            self._slots[i] = buf
            return buf
        buf = np.empty(shape, dtype)
        self._slots.append(buf)
        return buf

    def rewind(self):
        self._next = 0

    def clear(self):
        self._slots.clear()
        self._next = 0


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """A dense real array, optionally participating in gradient recording.

    Attributes:
        data: numpy array holding the values (float32 or float64).
        requires_grad: whether backward should produce a gradient here.
        grad: same-shape gradient buffer, filled by ``Tape.backward``;
            contributions accumulate until cleared with ``zero_grad``.
        tape: the tape that recorded the operation producing this tensor,
            or None for leaves and untaped results.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape", "_from_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape: "Tape | None" = None
        self._from_op = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0)

    def __repr__(self):
        return (
            f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, "
            f"requires_grad={self.requires_grad})"
        )


class Tape:
    """Ordered record of operations for one backward pass.

    Use as a context manager around the forward computation; execution
    order is the topological order, so backward simply walks the record
    in reverse. A tape is meant to live for one optimization iteration at
    a time: call ``reset()`` before the next iteration so the recording
    does not grow (the scratch arena is rewound and its buffers, including
    those backing recorded tensors, get reused by the next iteration).
    """

    def __init__(self):
        _tune_allocator()
        self._nodes: list[tuple[str, Tensor, object]] = []
        self._arena = _Arena()

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "tape_stack", None)
        if stack is None:
            stack = _local.tape_stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tape_stack.pop()
        return False

    @property
    def n_ops(self) -> int:
        return len(self._nodes)

    def op_names(self) -> list[str]:
        return [name for name, _, _ in self._nodes]

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(leaf) into every reachable requires_grad leaf.

        ``loss`` must be a scalar recorded on this tape. Repeated calls
        without clearing leaf grads accumulate.
        """
        if loss.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar loss, got shape {loss.data.shape}"
            )
        if loss.tape is not self:
            raise ValueError("loss was not produced on this tape")
        alloc = self._arena.get
        _accumulate(loss, np.ones_like(loss.data), own=True)
        for _, out, backward_fn in reversed(self._nodes):
            if out.grad is not None:
                backward_fn(out.grad, alloc)

    def reset(self):
        """Drop the recorded operations and recycle the scratch buffers."""
        self._nodes.clear()
        self._arena.rewind()


def _active_tape() -> Tape | None:
    stack = getattr(_local, "tape_stack", None)
    return stack[-1] if stack else None


def _alloc(shape, dtype) -> np.ndarray:
    """Scratch array from the active tape's arena, or fresh when untaped."""
    tape = _active_tape()
    if tape is None:
        return np.empty(shape, dtype)
    return tape._arena.get(shape, dtype)


def _accumulate(t: Tensor, g: np.ndarray, own: bool):
    """Add a gradient contribution to ``t``.

    ``own=True`` promises ``g`` is not aliased by any other tensor's grad,
    so intermediates may adopt it in place. Leaves always accumulate into
    a private persistent buffer so their gradients survive tape resets.
    """
    if t.grad is None:
        if own and t._from_op:
            t.grad = g
        else:
            t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad += g


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], name: str, backward_fn):
    """Wrap an op result, recording it if a tape is active and grads flow."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._from_op = False
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.tape = None
    if out.requires_grad:
        tape = _active_tape()
        if tape is not None:
            out.tape = tape
            out._from_op = True
            tape._nodes.append((name, out, backward_fn))
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")
    if a.data.dtype != b.data.dtype:
        raise ValueError(f"{op}: dtype mismatch {a.data.dtype} vs {b.data.dtype}")


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

# "auto" picks Winograd for 3x3 kernels on wide layers; "direct" forces the
# im2col path everywhere (UNSUPIX_CONV_BACKEND overrides at import time)
CONV_BACKEND = __import__("os").environ.get("UNSUPIX_CONV_BACKEND", "auto")
_WINOGRAD_MIN_CIN = 128  # measured crossover; below this im2col+gemm wins


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """2-D cross-correlation, stride 1, zero padding preserving H and W.

    ``x`` is (H, W, Cin), ``weight`` is (k, k, Cin, Cout) with k odd,
    ``bias`` is (Cout,). Differentiable in all three arguments.

    Two numerically equivalent backends: an im2col+gemm path, and a
    Winograd F(2x2, 3x3) path used for 3x3 kernels on wide layers (2.25x
    fewer multiplies). Backend choice is deterministic for a given shape
    and build configuration.
    """
    h, w, cin = x.data.shape
    k, k2, wcin, cout = weight.data.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d: kernel must be square with odd size, got {k}x{k2}")
    if wcin != cin:
        raise ValueError(f"conv2d: input has {cin} channels but weight expects {wcin}")
    if bias.data.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {bias.data.shape} != ({cout},)")
    if not (x.data.dtype == weight.data.dtype == bias.data.dtype):
        raise ValueError("conv2d: mixed dtypes")
    if k == 3 and h >= 2 and w >= 2 and (
        CONV_BACKEND == "winograd"
        or (CONV_BACKEND == "auto" and cin >= _WINOGRAD_MIN_CIN)
    ):
        return _conv2d_winograd(x, weight, bias)
    return _conv2d_direct(x, weight, bias)


def _conv2d_direct(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    h, w, cin = x.data.shape
    k, _, _, cout = weight.data.shape
    pad = k // 2
    dtype = x.data.dtype
    xpad = _alloc((h + 2 * pad, w + 2 * pad, cin), dtype)
    xpad.fill(0)
    xpad[pad : pad + h, pad : pad + w] = x.data
    cols4 = _alloc((h, w, k * k, cin), dtype)
    for di in range(k):
        for dj in range(k):
            cols4[:, :, di * k + dj, :] = xpad[di : di + h, dj : dj + w, :]
    cols = cols4.reshape(h * w, k * k * cin)
    w2 = weight.data.reshape(k * k * cin, cout)
    out2 = _alloc((h * w, cout), dtype)
    np.matmul(cols, w2, out=out2)
    out2 += bias.data

    def backward_fn(g: np.ndarray, alloc):
        g2 = g.reshape(h * w, cout)
        if weight.requires_grad:
            dw = alloc((k * k * cin, cout), g.dtype)
            np.matmul(cols.T, g2, out=dw)
            _accumulate(weight, dw.reshape(weight.data.shape), own=True)
        if bias.requires_grad:
            _accumulate(bias, g2.sum(axis=0), own=True)
        if x.requires_grad:
            dcols = alloc((h * w, k * k * cin), g.dtype)
            np.matmul(g2, w2.T, out=dcols)
            dcols4 = dcols.reshape(h, w, k * k, cin)
            dxpad = alloc((h + 2 * pad, w + 2 * pad, cin), g.dtype)
            dxpad.fill(0)
            for di in range(k):
                for dj in range(k):
                    dxpad[di : di + h, dj : dj + w, :] += dcols4[:, :, di * k + dj, :]
            _accumulate(x, dxpad[pad : pad + h, pad : pad + w], own=True)

    return _result(out2.reshape(h, w, cout), (x, weight, bias), "conv2d", backward_fn)


def _winograd_filter(w: np.ndarray) -> np.ndarray:
    """G w G^T for every (cin, cout) pair: (3, 3, ...) -> (4, 4, ...)."""
    half = np.asarray(0.5, dtype=w.dtype)
    s0 = w[0]
    s1 = (w[0] + w[1] + w[2]) * half
    s2 = (w[0] - w[1] + w[2]) * half
    s3 = w[2]
    u = np.empty((4, 4) + w.shape[2:], dtype=w.dtype)
    for a, s in enumerate((s0, s1, s2, s3)):
        u[a, 0] = s[0]
        u[a, 1] = (s[0] + s[1] + s[2]) * half
        u[a, 2] = (s[0] - s[1] + s[2]) * half
        u[a, 3] = s[2]
    return u


def _winograd_filter_grad(du: np.ndarray) -> np.ndarray:
    """G^T du G: transform-domain filter gradient back to (3, 3, ...)."""
    half = np.asarray(0.5, dtype=du.dtype)
    r0 = du[0] + (du[1] + du[2]) * half
    r1 = (du[1] - du[2]) * half
    r2 = (du[1] + du[2]) * half + du[3]
    dw = np.empty((3, 3) + du.shape[2:], dtype=du.dtype)
    for a, r in enumerate((r0, r1, r2)):
        dw[a, 0] = r[0] + (r[1] + r[2]) * half
        dw[a, 1] = (r[1] - r[2]) * half
        dw[a, 2] = (r[1] + r[2]) * half + r[3]
    return dw


def _conv2d_winograd(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """F(2x2, 3x3) Winograd convolution, same contract as the direct path.

    The image is covered by 2x2 output tiles (odd sizes get one padded row
    or column, cropped at the end). Per tile the 4x4 input patch is moved
    into the Winograd domain (B^T d B, all additions), multiplied against
    the transformed filter per position (16 gemms over channels instead of
    9 at 4x the pixel count), and mapped back (A^T m A).

    Tile buffers are laid out (4, 4, ty, tx, C) so the stride-2 phase
    gathers and scatters are single slice copies and the per-position gemm
    operands are free contiguous reshapes.
    """
    h, w, cin = x.data.shape
    cout = weight.data.shape[3]
    dtype = x.data.dtype
    ty, tx = (h + 1) // 2, (w + 1) // 2
    t = ty * tx
    hp, wp = 2 * ty + 2, 2 * tx + 2
    xpad = _alloc((hp, wp, cin), dtype)
    xpad.fill(0)
    xpad[1 : 1 + h, 1 : 1 + w] = x.data

    # gather the 16 stride-2 phases: d[a, b, i, j] = patch element (a, b)
    # of tile (i, j)
    d = _alloc((4, 4, ty, tx, cin), dtype)
    for a in range(4):
        for b in range(4):
            d[a, b] = xpad[a : a + 2 * ty : 2, b : b + 2 * tx : 2, :]

    # input transform V = B^T d B (pure additions)
    tmp = _alloc((4, 4, ty, tx, cin), dtype)
    np.subtract(d[0], d[2], out=tmp[0])
    np.add(d[1], d[2], out=tmp[1])
    np.subtract(d[2], d[1], out=tmp[2])
    np.subtract(d[1], d[3], out=tmp[3])
    v = _alloc((4, 4, ty, tx, cin), dtype)
    for a in range(4):
        np.subtract(tmp[a, 0], tmp[a, 2], out=v[a, 0])
        np.add(tmp[a, 1], tmp[a, 2], out=v[a, 1])
        np.subtract(tmp[a, 2], tmp[a, 1], out=v[a, 2])
        np.subtract(tmp[a, 1], tmp[a, 3], out=v[a, 3])

    u = _winograd_filter(weight.data)
    v2 = v.reshape(16, t, cin)
    u2 = u.reshape(16, cin, cout)

    m = _alloc((4, 4, t, cout), dtype)
    np.matmul(v2, u2, out=m.reshape(16, t, cout))

    # output transform Y = A^T m A, then scatter the 2x2 tiles
    s = _alloc((2, 4, t, cout), dtype)
    for b in range(4):
        np.add(m[0, b], m[1, b], out=s[0, b])
        s[0, b] += m[2, b]
        np.subtract(m[1, b], m[2, b], out=s[1, b])
        s[1, b] -= m[3, b]
    y = _alloc((2, 2, ty, tx, cout), dtype)
    y4 = y.reshape(2, 2, t, cout)
    for i in range(2):
        np.add(s[i, 0], s[i, 1], out=y4[i, 0])
        y4[i, 0] += s[i, 2]
        np.subtract(s[i, 1], s[i, 2], out=y4[i, 1])
        y4[i, 1] -= s[i, 3]
    y += bias.data
    out_full = _alloc((2 * ty, 2 * tx, cout), dtype)
    for i in range(2):
        for j in range(2):
            out_full[i::2, j::2] = y[i, j]
    out = out_full[:h, :w]

    def backward_fn(g: np.ndarray, alloc):
        gy = alloc((2, 2, ty, tx, cout), g.dtype)
        if (2 * ty, 2 * tx) != (h, w):
            gfull = alloc((2 * ty, 2 * tx, cout), g.dtype)
            gfull.fill(0)
            gfull[:h, :w] = g
        else:
            gfull = g
        for i in range(2):
            for j in range(2):
                gy[i, j] = gfull[i::2, j::2]
        gy4 = gy.reshape(2, 2, t, cout)
        # dM = A dY A^T
        us = alloc((4, 2, t, cout), g.dtype)
        for j in range(2):
            us[0, j] = gy4[0, j]
            np.add(gy4[0, j], gy4[1, j], out=us[1, j])
            np.subtract(gy4[0, j], gy4[1, j], out=us[2, j])
            np.negative(gy4[1, j], out=us[3, j])
        dm = alloc((4, 4, t, cout), g.dtype)
        for a in range(4):
            dm[a, 0] = us[a, 0]
            np.add(us[a, 0], us[a, 1], out=dm[a, 1])
            np.subtract(us[a, 0], us[a, 1], out=dm[a, 2])
            np.negative(us[a, 1], out=dm[a, 3])
        dm2 = dm.reshape(16, t, cout)
        if weight.requires_grad:
            du = np.empty((16, cin, cout), dtype=g.dtype)
            np.matmul(v2.transpose(0, 2, 1), dm2, out=du)
            _accumulate(
                weight, _winograd_filter_grad(du.reshape(4, 4, cin, cout)), own=True
            )
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 1)), own=True)
        if x.requires_grad:
            dv = alloc((4, 4, t, cin), g.dtype)
            np.matmul(dm2, u2.transpose(0, 2, 1), out=dv.reshape(16, t, cin))
            # dd = B dV B^T
            r = alloc((4, 4, t, cin), g.dtype)
            for b in range(4):
                r[0, b] = dv[0, b]
                np.subtract(dv[1, b], dv[2, b], out=r[1, b])
                r[1, b] += dv[3, b]
                np.subtract(dv[1, b], dv[0, b], out=r[2, b])
                r[2, b] += dv[2, b]
                np.negative(dv[3, b], out=r[3, b])
            dd = alloc((4, 4, ty, tx, cin), g.dtype)
            dd4 = dd.reshape(4, 4, t, cin)
            for a in range(4):
                dd4[a, 0] = r[a, 0]
                np.subtract(r[a, 1], r[a, 2], out=dd4[a, 1])
                dd4[a, 1] += r[a, 3]
                np.subtract(r[a, 1], r[a, 0], out=dd4[a, 2])
                dd4[a, 2] += r[a, 2]
                np.negative(r[a, 3], out=dd4[a, 3])
            dxpad = alloc((hp, wp, cin), g.dtype)
            dxpad.fill(0)
            for a in range(4):
                for b in range(4):
                    dxpad[a : a + 2 * ty : 2, b : b + 2 * tx : 2, :] += dd[a, b]
            _accumulate(x, dxpad[1 : 1 + h, 1 : 1 + w], own=True)

    return _result(out, (x, weight, bias), "conv2d", backward_fn)


# ---------------------------------------------------------------------------
# Activations and normalization
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    """Elementwise max(x, 0); the subgradient at exactly 0 is taken as 0."""
    out = _alloc(x.data.shape, x.data.dtype)
    np.maximum(x.data, 0, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            # g is dead after this node, safe to reuse in place
            np.multiply(g, x.data > 0, out=g)
            _accumulate(x, g, own=True)

    return _result(out, (x,), "relu", backward_fn)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each channel of (H, W, C) to zero mean, unit variance.

    Statistics are taken over the spatial positions of the single input
    (population variance); there are no learnable affine parameters. ``eps``
    guards constant channels.
    """
    h, w, _ = x.data.shape
    if h * w < 2:
        raise ValueError("instance_norm: needs at least 2 spatial positions")
    mean = x.data.mean(axis=(0, 1))
    var = x.data.var(axis=(0, 1))
    istd = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    istd = istd.astype(x.data.dtype, copy=False)
    xhat = _alloc(x.data.shape, x.data.dtype)
    np.subtract(x.data, mean, out=xhat)
    xhat *= istd

    def backward_fn(g: np.ndarray, alloc):
        if not x.requires_grad:
            return
        gmean = g.mean(axis=(0, 1))
        gx = alloc(g.shape, g.dtype)
        np.multiply(g, xhat, out=gx)
        gxmean = gx.mean(axis=(0, 1))
        np.multiply(xhat, gxmean, out=gx)
        gx += gmean
        np.subtract(g, gx, out=gx)
        gx *= istd
        _accumulate(x, gx, own=True)

    return _result(xhat, (x,), "instance_norm", backward_fn)


def softmax_channels(x: Tensor) -> Tensor:
    """Per-pixel softmax over the trailing channel axis of (H, W, C).

    Computed with max subtraction, so arbitrarily large logits stay finite.
    """
    p = _alloc(x.data.shape, x.data.dtype)
    np.subtract(x.data, x.data.max(axis=-1, keepdims=True), out=p)
    np.exp(p, out=p)
    p /= p.sum(axis=-1, keepdims=True)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            gp = alloc(g.shape, g.dtype)
            np.multiply(g, p, out=gp)
            inner = gp.sum(axis=-1, keepdims=True)
            np.subtract(g, inner, out=gp)
            gp *= p
            _accumulate(x, gp, own=True)

    return _result(p, (x,), "softmax_channels", backward_fn)


# ---------------------------------------------------------------------------
# Elementwise primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = _alloc(a.data.shape, a.data.dtype)
    np.add(a.data, b.data, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if a.requires_grad:
            _accumulate(a, g, own=False)
        if b.requires_grad:
            _accumulate(b, g, own=False)

    return _result(out, (a, b), "add", backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = _alloc(a.data.shape, a.data.dtype)
    np.subtract(a.data, b.data, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if a.requires_grad:
            _accumulate(a, g, own=False)
        if b.requires_grad:
            gb = alloc(g.shape, g.dtype)
            np.negative(g, out=gb)
            _accumulate(b, gb, own=True)

    return _result(out, (a, b), "sub", backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = _alloc(a.data.shape, a.data.dtype)
    np.multiply(a.data, b.data, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if a.requires_grad:
            ga = alloc(g.shape, g.dtype)
            np.multiply(g, b.data, out=ga)
            _accumulate(a, ga, own=True)
        if b.requires_grad:
            gb = alloc(g.shape, g.dtype)
            np.multiply(g, a.data, out=gb)
            _accumulate(b, gb, own=True)

    return _result(out, (a, b), "mul", backward_fn)


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = _alloc(x.data.shape, x.data.dtype)
    np.multiply(x.data, np.asarray(c, dtype=x.data.dtype), out=out)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            np.multiply(g, np.asarray(c, dtype=g.dtype), out=g)
            _accumulate(x, g, own=True)

    return _result(out, (x,), "scalar_mul", backward_fn)


def abs_(x: Tensor) -> Tensor:
    """Elementwise absolute value; the subgradient at exactly 0 is 0."""
    out = _alloc(x.data.shape, x.data.dtype)
    np.abs(x.data, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(g.shape, g.dtype)
            np.sign(x.data, out=dx)
            dx *= g
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "abs", backward_fn)


def square(x: Tensor) -> Tensor:
    out = _alloc(x.data.shape, x.data.dtype)
    np.multiply(x.data, x.data, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(g.shape, g.dtype)
            np.multiply(g, x.data, out=dx)
            dx *= 2
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "square", backward_fn)


def exp(x: Tensor) -> Tensor:
    out = _alloc(x.data.shape, x.data.dtype)
    np.exp(x.data, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(g.shape, g.dtype)
            np.multiply(g, out, out=dx)
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "exp", backward_fn)


def log_guarded(x: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log of max(x, floor); gradient is 0 in the clamped region."""
    clamped = _alloc(x.data.shape, x.data.dtype)
    np.maximum(x.data, np.asarray(floor, dtype=x.data.dtype), out=clamped)
    out = _alloc(x.data.shape, x.data.dtype)
    np.log(clamped, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(g.shape, g.dtype)
            np.divide(g, clamped, out=dx)
            dx *= x.data > floor
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "log_guarded", backward_fn)


def forward_diff(x: Tensor, axis: int) -> Tensor:
    """Forward difference along a spatial axis, zero at the trailing edge.

    out[i] = x[i+1] - x[i] along ``axis`` (0 or 1); the final row/column is
    0 so the output keeps the input's shape.
    """
    if axis not in (0, 1):
        raise ValueError(f"forward_diff: axis must be 0 or 1, got {axis}")
    out = _alloc(x.data.shape, x.data.dtype)
    if axis == 0:
        np.subtract(x.data[1:], x.data[:-1], out=out[:-1])
        out[-1:].fill(0)
    else:
        np.subtract(x.data[:, 1:], x.data[:, :-1], out=out[:, :-1])
        out[:, -1:].fill(0)

    def backward_fn(g: np.ndarray, alloc):
        if not x.requires_grad:
            return
        dx = alloc(g.shape, g.dtype)
        dx.fill(0)
        if axis == 0:
            dx[1:] += g[:-1]
            dx[:-1] -= g[:-1]
        else:
            dx[:, 1:] += g[:, :-1]
            dx[:, :-1] -= g[:, :-1]
        _accumulate(x, dx, own=True)

    return _result(out, (x,), "forward_diff", backward_fn)


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    """View of channels [start, stop) of an (H, W, C) tensor."""
    c = x.data.shape[-1]
    if not (0 <= start < stop <= c):
        raise ValueError(f"channel_slice: bad range [{start}, {stop}) for C={c}")
    out = x.data[..., start:stop]

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(x.data.shape, x.data.dtype)
            dx.fill(0)
            dx[..., start:stop] = g
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "channel_slice", backward_fn)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def sum_channels(x: Tensor) -> Tensor:
    """Sum an (H, W, C) tensor over its channel axis, giving (H, W)."""
    out = _alloc(x.data.shape[:2], x.data.dtype)
    x.data.sum(axis=-1, out=out)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(x.data.shape, x.data.dtype)
            dx[...] = g[..., None]
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "sum_channels", backward_fn)


def spatial_mean(x: Tensor) -> Tensor:
    """Mean of an (H, W, C) tensor over both spatial axes, giving (C,)."""
    h, w = x.data.shape[:2]
    out = x.data.mean(axis=(0, 1))

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(x.data.shape, x.data.dtype)
            dx[...] = g / np.asarray(h * w, dtype=g.dtype)
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "spatial_mean", backward_fn)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(x.data.shape, x.data.dtype)
            dx.fill(float(g))
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "sum_all", backward_fn)


def mean_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.mean(), dtype=x.data.dtype)
    size = x.data.size

    def backward_fn(g: np.ndarray, alloc):
        if x.requires_grad:
            dx = alloc(x.data.shape, x.data.dtype)
            dx.fill(float(g) / size)
            _accumulate(x, dx, own=True)

    return _result(out, (x,), "mean_all", backward_fn)
