"""Dense reverse-mode autodiff on 2-D float64 arrays.

Every differentiable value is a Tensor bound to a Tape. Ops are module
functions; they run the numpy forward kernel, check the result is finite,
and record a backward closure on the tape of their inputs. Calling an op
on tensors with no tape just computes the forward value.
"""

from __future__ import annotations

import numpy as np


class EngineError(Exception):
    pass


class DimensionError(EngineError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad=False, tape=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise EngineError("non-finite values in tensor data")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.tape = tape

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def is_scalar(self):
        return self.data.shape == (1, 1)

    def item(self):
        if not self.is_scalar():
            raise DimensionError(f"item() on non-scalar shape {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def to_csv(self):
        """Debug dump, one row per line, %.17g values."""
        return "\n".join(
            ",".join("%.17g" % v for v in row) for row in self.data
        ) + "\n"

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of ops; replayed backward exactly once per node."""

    def __init__(self):
        self.nodes = []          # (output, inputs, backward_fn)
        self._on_tape = set()    # ids of tensors produced or registered here

    def tensor(self, data, requires_grad=False):
        t = Tensor(data, requires_grad=requires_grad, tape=self)
        self._on_tape.add(id(t))
        return t

    def watch(self, t):
        """Bind an existing tensor (e.g. a persistent parameter) to this tape."""
        t.tape = self
        self._on_tape.add(id(t))
        return t

    def record(self, output, inputs, backward_fn):
        output.tape = self
        self._on_tape.add(id(output))
        self.nodes.append((output, inputs, backward_fn))

    def __len__(self):
        return len(self.nodes)


def _tape_of(*tensors):
    for t in tensors:
        if t.tape is not None:
            return t.tape
    return None


def _make(data, inputs, backward_fn):
    """Build the output tensor and record it if any input is live on a tape."""
    if not np.all(np.isfinite(data)):
        raise EngineError("non-finite values produced by op")
    tape = _tape_of(*inputs)
    out = Tensor(data)
    if tape is not None:
        tape.record(out, inputs, backward_fn)
    return out


def _check_same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape {a.shape} != {b.shape}")


# ---------------------------------------------------------------- basic ops

def matmul(a, b):
    if a.cols != b.rows:
        raise DimensionError(f"matmul: {a.shape} x {b.shape}")

    def bwd(g, acc):
        acc(a, g @ b.data.T)
        acc(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bwd)


def add(a, b):
    _check_same_shape(a, b, "add")

    def bwd(g, acc):
        acc(a, g)
        acc(b, g)

    return _make(a.data + b.data, (a, b), bwd)


def sub(a, b):
    _check_same_shape(a, b, "sub")

    def bwd(g, acc):
        acc(a, g)
        acc(b, -g)

    return _make(a.data - b.data, (a, b), bwd)


def hadamard(a, b):
    _check_same_shape(a, b, "hadamard")

    def bwd(g, acc):
        acc(a, g * b.data)
        acc(b, g * a.data)

    return _make(a.data * b.data, (a, b), bwd)


def scale(a, c):
    c = float(c)

    def bwd(g, acc):
        acc(a, g * c)

    return _make(a.data * c, (a,), bwd)


def transpose(a):
    def bwd(g, acc):
        acc(a, g.T)

    return _make(a.data.T.copy(), (a,), bwd)


def relu(a):
    mask = a.data > 0.0

    def bwd(g, acc):
        acc(a, g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), bwd)


def clip01(a):
    inside = (a.data > 0.0) & (a.data < 1.0)

    def bwd(g, acc):
        acc(a, g * inside)

    return _make(np.clip(a.data, 0.0, 1.0), (a,), bwd)


def sigmoid(a):
    # split form avoids overflow for large |x|
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g, acc):
        acc(a, g * out * (1.0 - out))

    return _make(out, (a,), bwd)


def total_sum(a):
    def bwd(g, acc):
        acc(a, np.full_like(a.data, g[0, 0]))

    return _make(np.array([[a.data.sum()]]), (a,), bwd)


def frobenius_sq(a):
    def bwd(g, acc):
        acc(a, 2.0 * a.data * g[0, 0])

    return _make(np.array([[float(np.sum(a.data * a.data))]]), (a,), bwd)


L2_EPS = 1e-12


def l2_norm(a):
    """sqrt(sum x^2) with an epsilon guard so the gradient is 0 at the origin."""
    sq = float(np.sum(a.data * a.data))
    val = np.sqrt(sq)

    def bwd(g, acc):
        acc(a, a.data / (val + L2_EPS) * g[0, 0])

    return _make(np.array([[val]]), (a,), bwd)


def row_sums(a):
    def bwd(g, acc):
        acc(a, np.broadcast_to(g, a.shape).copy())

    return _make(a.data.sum(axis=1, keepdims=True), (a,), bwd)


def rsqrt(a):
    """x^{-1/2}; requires strictly positive input."""
    if np.any(a.data <= 0.0):
        raise EngineError("rsqrt: non-positive input")
    out = 1.0 / np.sqrt(a.data)

    def bwd(g, acc):
        acc(a, -0.5 * out / a.data * g)

    return _make(out, (a,), bwd)


def reciprocal_guard(a):
    """1/x where x > 0, exactly 0 (with 0 gradient) elsewhere."""
    pos = a.data > 0.0
    out = np.where(pos, 1.0 / np.where(pos, a.data, 1.0), 0.0)

    def bwd(g, acc):
        acc(a, np.where(pos, -out * out, 0.0) * g)

    return _make(out, (a,), bwd)


def scale_rows(a, v):
    """Multiply row i of a by v[i]; v is N x 1."""
    if v.cols != 1 or v.rows != a.rows:
        raise DimensionError(f"scale_rows: {a.shape} with {v.shape}")

    def bwd(g, acc):
        acc(a, g * v.data)
        acc(v, (g * a.data).sum(axis=1, keepdims=True))

    return _make(a.data * v.data, (a, v), bwd)


def scale_cols(a, v):
    """Multiply column j of a by v[j]; v is N x 1 indexed by column."""
    if v.cols != 1 or v.rows != a.cols:
        raise DimensionError(f"scale_cols: {a.shape} with {v.shape}")

    def bwd(g, acc):
        acc(a, g * v.data.T)
        acc(v, (g * a.data).sum(axis=0, keepdims=True).T)

    return _make(a.data * v.data.T, (a, v), bwd)


def masked_softmax_cross_entropy(logits, labels, mask):
    """Mean over masked rows of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    n, c = logits.shape
    if labels.shape[0] != n or mask.shape[0] != n:
        raise DimensionError(
            f"cross entropy: logits {logits.shape}, labels {labels.shape}, mask {mask.shape}"
        )
    if not mask.any():
        raise EngineError("cross entropy: empty mask")
    if labels[mask].min() < 0 or labels[mask].max() >= c:
        raise EngineError(f"cross entropy: label outside [0, {c})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    softmax = ez / ez.sum(axis=1, keepdims=True)
    logp = z - np.log(ez.sum(axis=1, keepdims=True))
    idx = np.arange(n)
    m = int(mask.sum())
    loss = -logp[idx[mask], labels[mask]].sum() / m

    def bwd(g, acc):
        grad = softmax.copy()
        grad[idx, labels] -= 1.0
        grad[~mask] = 0.0
        acc(logits, grad / m * g[0, 0])

    return _make(np.array([[loss]]), (logits,), bwd)


# ----------------------------------------------------------------- backward

def backward(loss, tape):
    """Populate .grad of every requires_grad tensor reachable from loss."""
    if not loss.is_scalar():
        raise EngineError(f"backward: loss must be scalar, got {loss.shape}")
    if id(loss) not in tape._on_tape:
        raise EngineError("backward: loss was not produced on this tape")

    grads = {id(loss): np.ones((1, 1))}

    def acc(t, g):
        key = id(t)
        if key in grads:
            grads[key] += g
        else:
            grads[key] = np.array(g, dtype=np.float64, copy=True)

    for out, inputs, bwd_fn in reversed(tape.nodes):
        g = grads.get(id(out))
        if g is None:
            continue
        bwd_fn(g, acc)

    for out, inputs, _ in tape.nodes:
        for t in (out,) + tuple(inputs):
            if t.requires_grad and id(t) in grads:
                t.grad = grads[id(t)]
    if loss.requires_grad:
        loss.grad = grads[id(loss)]
    return grads
