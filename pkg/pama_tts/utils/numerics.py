"""
Differentiable array substrate.

Arrays wrap numpy buffers; every primitive computes its forward value and,
when a Tape is active and any input needs a gradient, records a backward
closure. Tape.grad replays the record in exact reverse order.
"""
import threading
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from pama_tts.errors import AttentionError, NonFiniteError, PamaError, ShapeError

_local = threading.local()

NORMALIZATION_TOLERANCE = 1e-5


class Array:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Array(shape={self.shape}, dtype={self.dtype}{label})"


class Parameter(Array):
    """A named learnable array; always tracked by the tape."""

    __slots__ = ()

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)


class TapeEntry(NamedTuple):
    op: str
    inputs: tuple
    output: Array
    backward: Callable[[np.ndarray], tuple]


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; primitives run inside the block are recorded.
    Tapes are thread-local, so separate models can train on separate threads.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self):
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def record(self, op: str, inputs: tuple, output: Array, backward) -> None:
        self.entries.append(TapeEntry(op, inputs, output, backward))

    def grad(self, loss: Array, params: Iterable[Parameter] | Mapping[str, Parameter]) -> dict[str, np.ndarray]:
        if isinstance(params, Mapping):
            params = params.values()
        params = list(params)
        if loss.size != 1:
            raise PamaError(f"grad: loss must be a scalar, got shape {loss.shape}")

        accum: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            g_out = accum.pop(id(entry.output), None)
            if g_out is None:
                continue
            for inp, g_in in zip(entry.inputs, entry.backward(g_out)):
                if g_in is None or inp is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in accum:
                    accum[key] = accum[key] + g_in
                else:
                    accum[key] = g_in

        grads = {}
        for p in params:
            g = accum.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.shape:
                raise ShapeError(f"grad[{p.name}]", g.shape, p.shape)
            grads[p.name] = g.astype(p.dtype, copy=False)
        return grads


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def current_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def grad(loss: Array, params, tape: Tape | None = None) -> dict[str, np.ndarray]:
    tape = tape or current_tape()
    if tape is None:
        raise PamaError("grad: no tape is active")
    return tape.grad(loss, params)


def as_array(x, dtype=None) -> Array:
    if isinstance(x, Array):
        return x
    return Array(x, dtype=dtype)


def _emit(op: str, value: np.ndarray, inputs: tuple, backward) -> Array:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(op)
    out = Array(value)
    tape = current_tape()
    if tape is not None and any(i is not None and i.requires_grad for i in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, backward)
    return out


# ---------------------------------------------------------------------------
# elementwise and structural primitives
# ---------------------------------------------------------------------------

def matmul(a, b) -> Array:
    a, b = as_array(a), as_array(b)
    if (
        a.ndim < 2
        or b.ndim < 2
        or a.shape[-1] != b.shape[-2]
        or (b.ndim > 2 and a.shape[:-2] != b.shape[:-2])
    ):
        raise ShapeError("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _emit("matmul", out, (a, b), backward)


def add(a, b) -> Array:
    """Same-shape sum; b may also be a row bias over the last axis or a scalar."""
    a, b = as_array(a), as_array(b)
    if a.shape == b.shape:
        mode = "same"
    elif b.size == 1 and b.ndim <= 1:
        mode = "scalar"
    elif b.ndim == 1 and a.ndim >= 1 and b.shape[0] == a.shape[-1]:
        mode = "row"
    else:
        raise ShapeError("add", a.shape, b.shape)
    out = a.data + (b.data.reshape(()) if mode == "scalar" else b.data)

    def backward(g):
        if mode == "same":
            return g, g
        if mode == "scalar":
            return g, np.asarray(g.sum()).reshape(b.shape)
        return g, g.reshape(-1, g.shape[-1]).sum(axis=0)

    return _emit("add", out, (a, b), backward)


def mul(a, b) -> Array:
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise ShapeError("mul", a.shape, b.shape)
    out = a.data * b.data

    def backward(g):
        return g * b.data, g * a.data

    return _emit("mul", out, (a, b), backward)


def scale(a, factor: float) -> Array:
    a = as_array(a)
    out = a.data * factor

    def backward(g):
        return (g * factor,)

    return _emit("scale", out, (a,), backward)


def reshape(a, shape: Sequence[int]) -> Array:
    a = as_array(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None

    def backward(g):
        return (g.reshape(a.shape),)

    return _emit("reshape", out, (a,), backward)


def concat(arrays: Sequence, axis: int = -1) -> Array:
    arrays = tuple(as_array(x) for x in arrays)
    if not arrays:
        raise PamaError("concat: nothing to concatenate")
    ndim = arrays[0].ndim
    ax = axis % ndim
    for x in arrays[1:]:
        if x.ndim != ndim or x.shape[:ax] + x.shape[ax + 1:] != arrays[0].shape[:ax] + arrays[0].shape[ax + 1:]:
            raise ShapeError("concat", arrays[0].shape, x.shape)
    out = np.concatenate([x.data for x in arrays], axis=ax)
    splits = np.cumsum([x.shape[ax] for x in arrays])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return _emit("concat", out, arrays, backward)


def sigmoid(a) -> Array:
    a = as_array(a)
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _emit("sigmoid", out, (a,), backward)


def tanh(a) -> Array:
    a = as_array(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _emit("tanh", out, (a,), backward)


def relu(a) -> Array:
    a = as_array(a)
    keep = a.data > 0
    out = np.where(keep, a.data, 0.0).astype(a.dtype, copy=False)

    def backward(g):
        return (g * keep,)

    return _emit("relu", out, (a,), backward)


def softmax(a, axis: int = -1) -> Array:
    a = as_array(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax(axis={axis})", a.shape)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (a,), backward)


def embedding_lookup(table, index) -> Array:
    table = as_array(table)
    index = np.asarray(index)
    if table.ndim != 2:
        raise ShapeError("embedding_lookup", table.shape)
    if not np.issubdtype(index.dtype, np.integer):
        raise PamaError(f"embedding_lookup: index must be integer, got {index.dtype}")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise PamaError(
            f"embedding_lookup: index {int(index.max())} outside table of {table.shape[0]} rows"
        )
    out = table.data[index]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, index, g)
        return (gt,)

    return _emit("embedding_lookup", out, (table,), backward)


def gather_rows(a, index) -> Array:
    """Select rows along the sequence axis: out[b, n] = a[b, index[b, n]].

    Also accepts an unbatched (L, D) input with a 1-D index.
    """
    a = as_array(a)
    index = np.asarray(index, dtype=np.int64)
    batched = a.ndim == 3
    if (batched and index.ndim != 2) or (not batched and (a.ndim != 2 or index.ndim != 1)):
        raise ShapeError("gather_rows", a.shape, index.shape)
    if batched and index.shape[0] != a.shape[0]:
        raise ShapeError("gather_rows", a.shape, index.shape)
    if index.size and (index.min() < 0 or index.max() >= a.shape[-2]):
        raise ShapeError("gather_rows", a.shape, index.shape)
    if batched:
        out = np.take_along_axis(a.data, index[:, :, None], axis=1)
    else:
        out = a.data[index]

    def backward(g):
        ga = np.zeros_like(a.data)
        if batched:
            for b in range(a.shape[0]):
                np.add.at(ga[b], index[b], g[b])
        else:
            np.add.at(ga, index, g)
        return (ga,)

    return _emit("gather_rows", out, (a,), backward)


def pairwise_add(q, k) -> Array:
    """out[..., t, n, :] = q[..., t, :] + k[..., n, :]."""
    q, k = as_array(q), as_array(k)
    if q.ndim != k.ndim or q.ndim < 2 or q.shape[-1] != k.shape[-1] or q.shape[:-2] != k.shape[:-2]:
        raise ShapeError("pairwise_add", q.shape, k.shape)
    out = q.data[..., :, None, :] + k.data[..., None, :, :]

    def backward(g):
        return g.sum(axis=-2), g.sum(axis=-3)

    return _emit("pairwise_add", out, (q, k), backward)


def conv1d(signal, kernel) -> Array:
    """'Same'-padded 1-D convolution. signal (B, L, Cin) or (L, Cin); kernel (K, Cin, Cout)."""
    signal, kernel = as_array(signal), as_array(kernel)
    unbatched = signal.ndim == 2
    x = signal.data[None] if unbatched else signal.data
    if x.ndim != 3 or kernel.ndim != 3 or kernel.shape[1] != x.shape[2]:
        raise ShapeError("conv1d", signal.shape, kernel.shape)
    width = kernel.shape[0]
    left = (width - 1) // 2
    right = width - 1 - left
    length = x.shape[1]
    padded = np.pad(x, ((0, 0), (left, right), (0, 0)))
    w = kernel.data
    out = np.zeros((x.shape[0], length, w.shape[2]), dtype=np.result_type(x, w))
    for k in range(width):
        out += padded[:, k:k + length, :] @ w[k]

    def backward(g):
        g3 = g[None] if unbatched else g
        gp = np.zeros_like(padded)
        gw = np.zeros_like(w)
        flat_g = g3.reshape(-1, g3.shape[-1])
        for k in range(width):
            gp[:, k:k + length, :] += g3 @ w[k].T
            gw[k] = padded[:, k:k + length, :].reshape(-1, x.shape[2]).T @ flat_g
        gx = gp[:, left:left + length, :]
        return (gx[0] if unbatched else gx), gw

    return _emit("conv1d", out[0] if unbatched else out, (signal, kernel), backward)


def dropout(a, p: float, train: bool, rng: np.random.Generator | None = None) -> Array:
    a = as_array(a)
    if not train or p <= 0.0:
        return a
    if p >= 1.0:
        raise PamaError(f"dropout: rate must be below 1, got {p}")
    rng = rng or np.random.default_rng()
    keep = (rng.random(a.shape) >= p).astype(a.dtype) / (1.0 - p)
    out = a.data * keep

    def backward(g):
        return (g * keep,)

    return _emit("dropout", out, (a,), backward)


# ---------------------------------------------------------------------------
# gated recurrence
# ---------------------------------------------------------------------------

def lstm_cell(x: np.ndarray, h: np.ndarray, c: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """One untracked gated-cell step; returns (h_new, c_new, gates)."""
    hidden = h.shape[-1]
    xh = np.concatenate([x, h], axis=-1)
    z = xh @ weight + bias
    i = 0.5 * (np.tanh(0.5 * z[..., :hidden]) + 1.0)
    f = 0.5 * (np.tanh(0.5 * z[..., hidden:2 * hidden]) + 1.0)
    o = 0.5 * (np.tanh(0.5 * z[..., 2 * hidden:3 * hidden]) + 1.0)
    cand = np.tanh(z[..., 3 * hidden:])
    c_new = f * c + i * cand
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (xh, i, f, o, cand, tc)


def _reverse_index(lengths: np.ndarray, length: int) -> np.ndarray:
    t = np.arange(length)[None, :]
    lens = lengths[:, None]
    return np.where(t < lens, lens - 1 - t, t)


def gated_recurrence(seq, weight, bias, lengths=None, reverse: bool = False) -> Array:
    """Unidirectional gated recurrence over (B, L, D) or (L, D); gate order i, f, o, g.

    Steps past a sequence's length hold the state and emit zeros; with
    reverse=True each sequence is read backwards from its own last step.
    """
    seq, weight, bias = as_array(seq), as_array(weight), as_array(bias)
    unbatched = seq.ndim == 2
    x = seq.data[None] if unbatched else seq.data
    if x.ndim != 3:
        raise ShapeError("gated_recurrence", seq.shape)
    batch, length, dim = x.shape
    hidden = weight.shape[1] // 4 if weight.ndim == 2 else 0
    if weight.ndim != 2 or weight.shape != (dim + hidden, 4 * hidden) or bias.shape != (4 * hidden,):
        raise ShapeError("gated_recurrence", seq.shape, weight.shape, bias.shape)
    lens = np.full(batch, length, dtype=np.int64) if lengths is None else np.asarray(lengths, dtype=np.int64)
    mask = (np.arange(length)[None, :] < lens[:, None]).astype(x.dtype)
    rev = _reverse_index(lens, length) if reverse else None
    if rev is not None:
        x = np.take_along_axis(x, rev[:, :, None], axis=1)

    w, b = weight.data, bias.data
    h = np.zeros((batch, hidden), dtype=np.result_type(x, w))
    c = np.zeros_like(h)
    ys = np.zeros((batch, length, hidden), dtype=h.dtype)
    cache = []
    for t in range(length):
        m = mask[:, t, None]
        h_new, c_new, gates = lstm_cell(x[:, t], h, c, w, b)
        cache.append((gates, c))
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        ys[:, t] = m * h_new
    out = ys
    if rev is not None:
        out = np.take_along_axis(out, rev[:, :, None], axis=1)

    def backward(g):
        g3 = g[None] if unbatched else g
        if rev is not None:
            g3 = np.take_along_axis(g3, rev[:, :, None], axis=1)
        gw = np.zeros_like(w)
        gb = np.zeros_like(b)
        gx = np.zeros_like(x)
        dh = np.zeros((batch, hidden), dtype=h.dtype)
        dc = np.zeros_like(dh)
        for t in range(length - 1, -1, -1):
            m = mask[:, t, None]
            (xh, i, f, o, cand, tc), c_prev = cache[t]
            dh_new = m * (dh + g3[:, t])
            dc_new = m * dc + dh_new * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [
                    dc_new * cand * i * (1.0 - i),
                    dc_new * c_prev * f * (1.0 - f),
                    dh_new * tc * o * (1.0 - o),
                    dc_new * i * (1.0 - cand * cand),
                ],
                axis=-1,
            )
            gw += xh.T @ dz
            gb += dz.sum(axis=0)
            dxh = dz @ w.T
            gx[:, t] = dxh[:, :dim]
            dh = dxh[:, dim:] + (1.0 - m) * dh
            dc = (1.0 - m) * dc + dc_new * f
        if rev is not None:
            gx = np.take_along_axis(gx, rev[:, :, None], axis=1)
        return (gx[0] if unbatched else gx), gw, gb

    return _emit("gated_recurrence", out[0] if unbatched else out, (seq, weight, bias), backward)


def gated_bidirectional_recurrence(seq, fwd_weight, fwd_bias, bwd_weight, bwd_bias, lengths=None) -> Array:
    forward = gated_recurrence(seq, fwd_weight, fwd_bias, lengths)
    backward = gated_recurrence(seq, bwd_weight, bwd_bias, lengths, reverse=True)
    return concat([forward, backward], axis=-1)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _check_weights(op: str, weights, shape):
    if weights is None:
        return None
    w = np.asarray(weights)
    if w.shape != tuple(shape):
        raise ShapeError(op, shape, w.shape)
    return w


def mse(a, b, weights=None) -> Array:
    """Mean squared error; with weights, returns sum(w * (a - b)^2) instead of the mean."""
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise ShapeError("mse", a.shape, b.shape)
    w = _check_weights("mse", weights, a.shape)
    diff = a.data - b.data
    coef = (1.0 / diff.size) if w is None else w
    out = np.asarray((coef * diff * diff).sum(), dtype=diff.dtype)

    def backward(g):
        ga = 2.0 * g * coef * diff
        return ga, -ga

    return _emit("mse", out, (a, b), backward)


def l1(a, b, weights=None) -> Array:
    """Mean absolute error; subgradient at zero is zero."""
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise ShapeError("l1", a.shape, b.shape)
    w = _check_weights("l1", weights, a.shape)
    diff = a.data - b.data
    coef = (1.0 / diff.size) if w is None else w
    out = np.asarray((coef * np.abs(diff)).sum(), dtype=diff.dtype)

    def backward(g):
        ga = g * coef * np.sign(diff)
        return ga, -ga

    return _emit("l1", out, (a, b), backward)


def cross_entropy(logits, labels, weights=None) -> Array:
    """Softmax cross-entropy over the last axis, averaged over positions (or weighted sum)."""
    logits = as_array(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[:-1] != labels.shape:
        raise ShapeError("cross_entropy", logits.shape, labels.shape)
    classes = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise PamaError(f"cross_entropy: label outside {classes} classes")
    w = _check_weights("cross_entropy", weights, labels.shape)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    nll = -np.take_along_axis(log_probs, labels[..., None], axis=-1)[..., 0]
    coef = (1.0 / max(labels.size, 1)) if w is None else w
    out = np.asarray((coef * nll).sum(), dtype=logits.dtype)

    def backward(g):
        grad = np.exp(log_probs)
        np.put_along_axis(grad, labels[..., None], np.take_along_axis(grad, labels[..., None], axis=-1) - 1.0, axis=-1)
        coef_b = coef if np.ndim(coef) == 0 else coef[..., None]
        return (g * coef_b * grad,)

    return _emit("cross_entropy", out, (logits,), backward)


# ---------------------------------------------------------------------------
# stepwise monotonic attention recursion
# ---------------------------------------------------------------------------

def _absorbing_mask(shape: tuple, lengths) -> np.ndarray:
    """True where the selection probability is forced to 1 (last real token and padding)."""
    n = shape[-1]
    if lengths is None:
        last = np.full(shape[:-1], n - 1, dtype=np.int64)
    else:
        last = np.broadcast_to(np.asarray(lengths, dtype=np.int64) - 1, shape[:-1]) if len(shape) > 1 else np.asarray(lengths, dtype=np.int64) - 1
    return np.arange(n) >= np.asarray(last)[..., None]


def _shift_right(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[..., 1:] = x[..., :-1]
    return out


def _shift_left(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[..., :-1] = x[..., 1:]
    return out


def sma_step(alpha_prev, p, lengths=None) -> Array:
    """alpha_j = alpha_prev_j * p_j + alpha_prev_{j-1} * (1 - p_{j-1}); the last token absorbs."""
    alpha_prev, p = as_array(alpha_prev), as_array(p)
    if alpha_prev.shape != p.shape or alpha_prev.ndim not in (1, 2):
        raise ShapeError("sma_step", alpha_prev.shape, p.shape)
    totals = alpha_prev.data.sum(axis=-1)
    if np.any(np.abs(totals - 1.0) > NORMALIZATION_TOLERANCE) or np.any(alpha_prev.data < -NORMALIZATION_TOLERANCE):
        raise AttentionError(f"sma_step: previous attention is not normalized (sums {np.round(totals, 6).tolist()})")
    forced = _absorbing_mask(p.shape, lengths)
    p_eff = np.where(forced, 1.0, p.data)
    a = alpha_prev.data
    out = a * p_eff + _shift_right(a * (1.0 - p_eff))

    def backward(g):
        g_next = _shift_left(g)
        ga = g * p_eff + g_next * (1.0 - p_eff)
        gp = np.where(forced, 0.0, a * (g - g_next))
        return ga, gp

    return _emit("sma_step", out.astype(p.dtype, copy=False), (alpha_prev, p), backward)


def monotonic_scan(p, lengths=None) -> Array:
    """Roll sma_step over the decoder axis of p (B, T, N) or (T, N), starting one-hot on token 0.

    Row t of the result is the attention after decoder step t.
    """
    p = as_array(p)
    unbatched = p.ndim == 2
    probs = p.data[None] if unbatched else p.data
    if probs.ndim != 3:
        raise ShapeError("monotonic_scan", p.shape)
    batch, steps, n = probs.shape
    forced = _absorbing_mask((batch, n), lengths)
    p_eff = np.where(forced[:, None, :], 1.0, probs)
    alpha = np.zeros((batch, n), dtype=probs.dtype)
    alpha[:, 0] = 1.0
    alphas = np.zeros_like(probs)
    for t in range(steps):
        alpha = alpha * p_eff[:, t] + _shift_right(alpha * (1.0 - p_eff[:, t]))
        alphas[:, t] = alpha

    def backward(g):
        g3 = g[None] if unbatched else g
        gp = np.zeros_like(probs)
        carry = np.zeros((batch, n), dtype=g3.dtype)
        for t in range(steps - 1, -1, -1):
            ga = g3[:, t] + carry
            if t > 0:
                prev = alphas[:, t - 1]
            else:
                prev = np.zeros((batch, n), dtype=probs.dtype)
                prev[:, 0] = 1.0
            g_next = _shift_left(ga)
            gp[:, t] = np.where(forced, 0.0, prev * (ga - g_next))
            carry = ga * p_eff[:, t] + g_next * (1.0 - p_eff[:, t])
        return (gp[0] if unbatched else gp,)

    return _emit("monotonic_scan", alphas[0] if unbatched else alphas, (p,), backward)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def mask_rows(a, mask) -> Array:
    """Zero the positions where mask (a's shape without the last axis) is false."""
    a = as_array(a)
    m = np.asarray(mask, dtype=a.dtype)
    if m.shape != a.shape[:-1]:
        raise ShapeError("mask_rows", a.shape, m.shape)
    return mul(a, np.broadcast_to(m[..., None], a.shape))


def init_uniform(rng: np.random.Generator, name: str, shape: Sequence[int], fan_in: int, dtype=np.float32) -> Parameter:
    """Uniform in [-s, s] with s = sqrt(1 / fan_in)."""
    s = np.sqrt(1.0 / max(fan_in, 1))
    return Parameter(name, rng.uniform(-s, s, size=tuple(shape)), dtype=dtype)


def init_constant(name: str, shape: Sequence[int], value: float = 0.0, dtype=np.float32) -> Parameter:
    return Parameter(name, np.full(tuple(shape), value), dtype=dtype)
