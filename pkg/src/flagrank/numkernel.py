"""Minimal reverse-mode autodiff kernel over numpy float64.

Everything heavier than numpy is deliberately absent: the networks in this
package are two-layer MLPs with sigmoid activations plus an attention gate,
so a small fixed op set and a flat gradient tape are enough.  Ops are plain
functions taking the tape as their first argument; building a graph under
``Tape(grad=False)`` computes values only, which doubles as the inference
path.

Conventions:
  * all tensor data is float64,
  * weight matrices are stored (n_out, n_in) and applied as ``x @ W.T + b``,
  * gradients accumulate into ``Tensor.grad`` (None until first touched).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, PreconditionError, ShapeError, StateError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Tensor:
    """A numpy array plus an accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Records (output, backward-closure) pairs in execution order.

    A tape is single-use: build one graph on it, call :func:`backward` once.
    With ``grad=False`` nothing is recorded and ops run as plain numpy.
    """

    def __init__(self, grad=True):
        self.grad_enabled = bool(grad)
        self._nodes = []
        self._used = False

    def _record(self, out, backfn):
        if self.grad_enabled:
            self._nodes.append((out, backfn))


def _accum(tensor, g):
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += g


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def gradient(tensor):
    """The accumulated gradient, or zeros if the tensor was never reached."""
    if tensor.grad is None:
        return np.zeros_like(tensor.data)
    return tensor.grad


def backward(tape, loss, seed_gradient=1.0):
    """Backpropagate from a scalar loss through everything on the tape."""
    if not tape.grad_enabled:
        raise StateError("cannot backpropagate through a no-grad tape")
    if tape._used:
        raise StateError("backward was already called on this tape")
    if not tape._nodes:
        raise StateError("tape is empty; nothing was recorded")
    if loss.data.shape != ():
        raise ShapeError(f"loss must be a scalar, got shape {loss.data.shape}")
    tape._used = True
    loss.grad = np.asarray(float(seed_gradient))
    for out, backfn in reversed(tape._nodes):
        if out.grad is not None:
            backfn(out.grad)


# ---------------------------------------------------------------------------
# ops


def sigmoid_array(x):
    """Numerically stable sigmoid on a raw ndarray (or scalar)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def affine(tape, x, W, b):
    """x @ W.T + b for a batch of rows."""
    if x.data.ndim != 2 or W.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeError("affine expects x (n,d), W (out,d), b (out,)")
    if x.data.shape[1] != W.data.shape[1] or W.data.shape[0] != b.data.shape[0]:
        raise ShapeError(
            f"affine shape mismatch: x {x.data.shape}, W {W.data.shape}, b {b.data.shape}"
        )
    out = Tensor(x.data @ W.data.T + b.data)

    def backfn(g):
        _accum(x, g @ W.data)
        _accum(W, g.T @ x.data)
        _accum(b, g.sum(axis=0))

    tape._record(out, backfn)
    return out


def sigmoid(tape, x):
    out = Tensor(sigmoid_array(x.data))
    y = out.data

    def backfn(g):
        _accum(x, g * y * (1.0 - y))

    tape._record(out, backfn)
    return out


def gate_array(logits):
    """Row gate values for raw logits: exp(l - max) / rowmean(exp(l - max)).

    This equals softmax(l) scaled by the row width, so gate values average
    to one per row, and constant logits yield a gate of exactly 1.0 (the
    subtraction of the row max makes every exponent exp(0) == 1.0, so the
    identity holds bitwise, not just approximately).
    """
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.mean(axis=1, keepdims=True)


def attention_gate(tape, logits):
    """Taped version of :func:`gate_array` (same values bitwise)."""
    if logits.data.ndim != 2:
        raise ShapeError("attention_gate expects a 2-D logits matrix")
    gate = gate_array(logits.data)
    out = Tensor(gate)
    k = logits.data.shape[1]
    soft = gate / k

    def backfn(g):
        inner = g * gate
        _accum(logits, inner - soft * inner.sum(axis=1, keepdims=True))

    tape._record(out, backfn)
    return out


def _require_same_shape(a, b, opname):
    if a.data.shape != b.data.shape:
        raise ShapeError(
            f"{opname} expects matching shapes, got {a.data.shape} and {b.data.shape}"
        )


def add(tape, a, b):
    _require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def backfn(g):
        _accum(a, g)
        _accum(b, g)

    tape._record(out, backfn)
    return out


def sub(tape, a, b):
    _require_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)

    def backfn(g):
        _accum(a, g)
        _accum(b, -g)

    tape._record(out, backfn)
    return out


def mul(tape, a, b):
    _require_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)

    def backfn(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    tape._record(out, backfn)
    return out


def scale(tape, a, c):
    c = float(c)
    out = Tensor(a.data * c)

    def backfn(g):
        _accum(a, g * c)

    tape._record(out, backfn)
    return out


def const_minus(tape, c, a):
    """c - a for a python-float c (e.g. 1 - D(x))."""
    c = float(c)
    out = Tensor(c - a.data)

    def backfn(g):
        _accum(a, -g)

    tape._record(out, backfn)
    return out


def log(tape, a):
    out = Tensor(np.log(a.data))

    def backfn(g):
        _accum(a, g / a.data)

    tape._record(out, backfn)
    return out


def clip(tape, a, lo, hi):
    """Clamp values; gradient passes only where the input was in range."""
    out = Tensor(np.clip(a.data, lo, hi))
    mask = (a.data >= lo) & (a.data <= hi)

    def backfn(g):
        _accum(a, g * mask)

    tape._record(out, backfn)
    return out


def mean_row_sumsq(tape, a):
    """Mean over rows of the per-row sum of squares (a scalar).

    Applied to a difference matrix this is the mean squared reconstruction
    error over a batch.
    """
    if a.data.ndim != 2:
        raise ShapeError("mean_row_sumsq expects a 2-D matrix")
    n = a.data.shape[0]
    out = Tensor(float((a.data * a.data).sum(axis=1).mean()))

    def backfn(g):
        _accum(a, (2.0 / n) * g * a.data)

    tape._record(out, backfn)
    return out


def mean_all(tape, a):
    out = Tensor(float(a.data.mean()))
    size = a.data.size

    def backfn(g):
        _accum(a, np.full_like(a.data, g / size))

    tape._record(out, backfn)
    return out


# ---------------------------------------------------------------------------
# layers, init, optimizer


@dataclass
class LayerParams:
    """One affine layer: W is (n_out, n_in), b is (n_out,)."""

    W: Tensor
    b: Tensor

    def tensors(self):
        return [self.W, self.b]


def init_weights(rng, n_in, n_out):
    """Xavier-uniform layer init: W ~ U(-r, r) with r = sqrt(6/(n_in+n_out))."""
    if n_in <= 0 or n_out <= 0:
        raise ShapeError(f"layer dims must be positive, got ({n_in}, {n_out})")
    bound = math.sqrt(6.0 / (n_in + n_out))
    W = rng.uniform(-bound, bound, size=(n_out, n_in))
    return LayerParams(W=Tensor(W), b=Tensor(np.zeros(n_out)))


def affine_sigmoid(x, layer):
    """Tape-free fused forward step for hot inference paths."""
    return sigmoid_array(x @ layer.W.data.T + layer.b.data)


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, tensors):
        return cls(
            m=[np.zeros_like(p.data) for p in tensors],
            v=[np.zeros_like(p.data) for p in tensors],
            t=0,
        )


def adam_step(state, tensors, lr):
    """One in-place Adam update over `tensors` using their current grads.

    Raises NumericError before touching any parameter if a gradient is
    non-finite, so a poisoned batch cannot corrupt the model.
    """
    if len(state.m) != len(tensors):
        raise PreconditionError(
            f"optimizer state tracks {len(state.m)} tensors, got {len(tensors)}"
        )
    grads = [gradient(p) for p in tensors]
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient; refusing to update parameters")
    state.t += 1
    t = state.t
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for i, (p, g) in enumerate(zip(tensors, grads)):
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


# ---------------------------------------------------------------------------
# gradient checking


def finite_diff_check(loss_fn, params, epsilon=1e-5):
    """Compare tape gradients against central finite differences.

    ``loss_fn(tape, params)`` must rebuild the loss from scratch on the
    given tape and return a scalar Tensor.  Returns the worst relative
    error max|analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over
    every element of every parameter.
    """
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    zero_grads(params)
    tape = Tape(grad=True)
    loss = loss_fn(tape, params)
    backward(tape, loss)
    analytic = [gradient(p).copy() for p in params]

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(loss_fn(Tape(grad=False), params).data)
            flat[i] = orig - epsilon
            lo = float(loss_fn(Tape(grad=False), params).data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * epsilon)
            denom = max(abs(an_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(an_flat[i] - numeric) / denom)
    return worst
