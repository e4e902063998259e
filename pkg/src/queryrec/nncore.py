"""Dense numeric core with reverse-mode gradients.

A small tape-based autodiff engine over numpy arrays, sized for sequence
rankers: embedding lookups, GRU cells, a bidirectional encoder, attention,
action-type/time-decay modulation of hidden states, a two-layer softmax
head, SGD/Adam with an epsilon projection, and a central-finite-difference
gradient checker.

The hot recurrences (``gru_step``, ``modulate_sequence``) are single tape
nodes with hand-derived backward passes; ``grad_check`` is the independent
oracle that keeps them honest. All math runs in float64.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

DTYPE = np.float64

# Floor for the decay exponent base: dt values passed to modulate() are in
# model time units (hours by convention) and must already be clamped >= this.
DT_FLOOR = 1e-3


class NncoreError(Exception):
    """Base class for numeric-core failures."""


class ShapeMismatch(NncoreError):
    pass


class EmptySequence(NncoreError):
    pass


class InvalidAction(NncoreError):
    pass


class NonFiniteInput(NncoreError):
    pass


class NonFiniteGradient(NncoreError):
    pass


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape construction inside the block (forward-only inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense array node on the autodiff tape.

    ``data`` is always a float64 ndarray; ``grad`` is allocated lazily during
    backward. Leaf tensors created with ``parameter`` accumulate gradients;
    everything else participates only while a tape is being built.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # small conveniences; the op functions below are the real surface
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data) -> Tensor:
    """A non-trainable tensor; rejects NaN/Inf like every op boundary."""
    t = Tensor(data)
    _require_finite("constant", t.data)
    return t


def parameter(data) -> Tensor:
    """A trainable leaf tensor."""
    t = Tensor(data, requires_grad=True)
    _require_finite("parameter", t.data)
    return t


def _require_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput(f"non-finite values passed to {name}")


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data, parents, backward_fn) -> Tensor:
    """Create an op output, attaching the tape edge only when needed."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=None)
        out._backward = backward_fn
        return out
    return Tensor(data)


def backward(root: Tensor, seed=1.0):
    """Reverse-mode sweep from ``root``, accumulating into leaf ``.grad``.

    ``seed`` scales the upstream gradient; per-instance losses inside a
    minibatch are swept with seed 1/batch so leaf grads sum to the mean-loss
    gradient without building a cross-instance graph.
    """
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    root.grad = np.full_like(root.data, seed)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_finite("add", a.data, b.data)
    out_data = a.data + b.data

    def _bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), _bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_finite("mul", a.data, b.data)
    out_data = a.data * b.data

    def _bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), _bw)


def scale(a: Tensor, c: float) -> Tensor:
    _require_finite("scale", a.data)
    c = float(c)

    def _bw(g):
        if a.requires_grad:
            _accum(a, g * c)

    return _node(a.data * c, (a,), _bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for the 1-D/2-D combinations numpy's ``@`` allows."""
    _require_finite("matmul", a.data, b.data)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeMismatch(f"matmul expects 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def _bw(g):
        ad, bd = a.data, b.data
        if a.requires_grad:
            if ad.ndim == 2 and bd.ndim == 2:
                ga = g @ bd.T
            elif ad.ndim == 1 and bd.ndim == 2:
                ga = bd @ g
            elif ad.ndim == 2 and bd.ndim == 1:
                ga = np.outer(g, bd)
            else:  # both 1-D, scalar output
                ga = g * bd
            _accum(a, ga)
        if b.requires_grad:
            if ad.ndim == 2 and bd.ndim == 2:
                gb = ad.T @ g
            elif ad.ndim == 1 and bd.ndim == 2:
                gb = np.outer(ad, g)
            elif ad.ndim == 2 and bd.ndim == 1:
                gb = ad.T @ g
            else:
                gb = g * ad
            _accum(b, gb)

    return _node(out_data, (a, b), _bw)


def sigmoid(a: Tensor) -> Tensor:
    _require_finite("sigmoid", a.data)
    out_data = _sigmoid_raw(a.data)

    def _bw(g):
        if a.requires_grad:
            _accum(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), _bw)


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # numerically stable two-sided form
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(a: Tensor) -> Tensor:
    _require_finite("tanh", a.data)
    out_data = np.tanh(a.data)

    def _bw(g):
        if a.requires_grad:
            _accum(a, g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), _bw)


def relu(a: Tensor) -> Tensor:
    _require_finite("relu", a.data)
    out_data = np.maximum(a.data, 0.0)

    def _bw(g):
        if a.requires_grad:
            _accum(a, g * (a.data > 0.0))

    return _node(out_data, (a,), _bw)


def exp(a: Tensor) -> Tensor:
    _require_finite("exp", a.data)
    out_data = np.exp(a.data)
    _require_finite("exp result", out_data)

    def _bw(g):
        if a.requires_grad:
            _accum(a, g * out_data)

    return _node(out_data, (a,), _bw)


def log(a: Tensor) -> Tensor:
    _require_finite("log", a.data)
    if np.any(a.data <= 0.0):
        raise NonFiniteInput("log requires strictly positive input")
    out_data = np.log(a.data)

    def _bw(g):
        if a.requires_grad:
            _accum(a, g / a.data)

    return _node(out_data, (a,), _bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise EmptySequence("concat of zero tensors")
    for t in tensors:
        _require_finite("concat", t.data)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return _node(out_data, tuple(tensors), _bw)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equal-shape vectors into a matrix along a new leading axis."""
    if not tensors:
        raise EmptySequence("stack of zero tensors")
    for t in tensors:
        _require_finite("stack", t.data)
    out_data = np.stack([t.data for t in tensors])

    def _bw(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accum(t, g[i])

    return _node(out_data, tuple(tensors), _bw)


def row(a: Tensor, i: int) -> Tensor:
    _require_finite("row", a.data)
    i = int(i)

    def _bw(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[i] += g

    return _node(a.data[i], (a,), _bw)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows ``idx`` of a matrix (embedding lookup)."""
    _require_finite("take_rows", a.data)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatch("take_rows expects a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError("take_rows index out of range")
    out_data = a.data[idx]

    def _bw(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, idx, g)

    return _node(out_data, (a,), _bw)


def mean_rows(a: Tensor, ids: np.ndarray, mask: np.ndarray) -> Tensor:
    """Masked mean of table rows: ``out[i] = mean(a[ids[i, j]] for mask[i, j])``.

    Rows with an all-zero mask yield zeros. Used for mean word/value
    embeddings over padded token id matrices.
    """
    _require_finite("mean_rows", a.data)
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=DTYPE)
    if ids.shape != mask.shape or ids.ndim != 2:
        raise ShapeMismatch("mean_rows expects matching 2-D ids and mask")
    if ids.size and (ids.min() < 0 or ids.max() >= a.data.shape[0]):
        raise IndexError("mean_rows index out of range")
    counts = mask.sum(axis=1)
    denom = np.maximum(counts, 1.0)
    weights = mask / denom[:, None]  # (n, L)
    out_data = np.einsum("nl,nld->nd", weights, a.data[ids])

    def _bw(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            contrib = weights[:, :, None] * g[:, None, :]  # (n, L, D)
            np.add.at(a.grad, ids.reshape(-1), contrib.reshape(-1, a.data.shape[1]))

    return _node(out_data, (a,), _bw)


def broadcast_rows(v: Tensor, n: int) -> Tensor:
    """Repeat a vector as ``n`` rows."""
    _require_finite("broadcast_rows", v.data)
    if v.data.ndim != 1:
        raise ShapeMismatch("broadcast_rows expects a vector")
    out_data = np.tile(v.data, (n, 1))

    def _bw(g):
        if v.requires_grad:
            _accum(v, g.sum(axis=0))

    return _node(out_data, (v,), _bw)


def reshape(a: Tensor, shape) -> Tensor:
    _require_finite("reshape", a.data)
    out_data = a.data.reshape(shape)

    def _bw(g):
        if a.requires_grad:
            _accum(a, g.reshape(a.data.shape))

    return _node(out_data, (a,), _bw)


def pick(a: Tensor, i: int) -> Tensor:
    """Scalar entry of a vector."""
    _require_finite("pick", a.data)
    if a.data.ndim != 1:
        raise ShapeMismatch("pick expects a vector")
    i = int(i)

    def _bw(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[i] += g

    return _node(a.data[i], (a,), _bw)


def softmax(a: Tensor) -> Tensor:
    """Softmax over a vector; output lies on the probability simplex."""
    _require_finite("softmax", a.data)
    if a.data.ndim != 1:
        raise ShapeMismatch("softmax expects a vector")
    shifted = a.data - a.data.max()
    e = np.exp(shifted)
    out_data = e / e.sum()

    def _bw(g):
        if a.requires_grad:
            _accum(a, out_data * (g - np.dot(g, out_data)))

    return _node(out_data, (a,), _bw)


def log_softmax(a: Tensor) -> Tensor:
    _require_finite("log_softmax", a.data)
    if a.data.ndim != 1:
        raise ShapeMismatch("log_softmax expects a vector")
    shifted = a.data - a.data.max()
    lse = math.log(np.exp(shifted).sum())
    out_data = shifted - lse
    sm = np.exp(out_data)

    def _bw(g):
        if a.requires_grad:
            _accum(a, g - sm * g.sum())

    return _node(out_data, (a,), _bw)


def sum_all(a: Tensor) -> Tensor:
    _require_finite("sum_all", a.data)

    def _bw(g):
        if a.requires_grad:
            _accum(a, np.full_like(a.data, float(g)))

    return _node(a.data.sum(), (a,), _bw)


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

# Uniform half-width for weight init. Small enough to keep tanh/sigmoid units
# in their linear range at our fan-ins (~10-40), large enough that gradients
# survive the embed->encode->attend->fuse->head chain: at 0.08 the attention
# block's gradients arrived ~1e6 times smaller than the head's and the decay/
# action parameters never trained.
INIT_SCALE = 0.25


def uniform_init(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> Tensor:
    return parameter(rng.uniform(-scale, scale, size=shape))


@dataclass
class GruParams:
    """Gate parameters of one GRU direction.

    Gate equations (fixed across the project):
        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        hc = tanh(x Wh + (r * h) Uh + bh)
        h' = (1 - z) * h + z * hc
    """

    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wh: Tensor
    uh: Tensor
    bh: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, d_in: int, d: int) -> "GruParams":
        return cls(
            wz=uniform_init(rng, (d_in, d)), uz=uniform_init(rng, (d, d)), bz=parameter(np.zeros(d)),
            wr=uniform_init(rng, (d_in, d)), ur=uniform_init(rng, (d, d)), br=parameter(np.zeros(d)),
            wh=uniform_init(rng, (d_in, d)), uh=uniform_init(rng, (d, d)), bh=parameter(np.zeros(d)),
        )

    @property
    def input_size(self) -> int:
        return self.wz.data.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.wz.data.shape[1]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in
                ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")}


N_ACTION_TYPES = 4


@dataclass
class AttentionParams:
    """Attention scorer plus the action/time modulation parameters.

    ``w1/b1/w2/b2`` form the one-hidden-layer scorer mapping [h'_k ; s0] to a
    scalar. ``a_mats`` holds one square matrix per action type (1..4), and
    ``epsilon`` is the decay exponent, kept <= 0 by ``project_epsilon``.
    """

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    a_mats: list[Tensor]
    epsilon: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, state_width: int, s0_width: int,
               hidden: int) -> "AttentionParams":
        # A matrices start at identity and epsilon at 0 so the modulation is a
        # no-op until trained.
        return cls(
            w1=uniform_init(rng, (state_width + s0_width, hidden)),
            b1=parameter(np.zeros(hidden)),
            w2=uniform_init(rng, (hidden, 1)),
            b2=parameter(np.zeros(1)),
            a_mats=[parameter(np.eye(state_width)) for _ in range(N_ACTION_TYPES)],
            epsilon=parameter(0.0),
        )

    @property
    def state_width(self) -> int:
        return self.a_mats[0].data.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
               f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}
        for i, a in enumerate(self.a_mats):
            out[f"{prefix}.a{i + 1}"] = a
        out[f"{prefix}.epsilon"] = self.epsilon
        return out


@dataclass
class DenseHead:
    """Two fully-connected layers plus a parameterized 2-way softmax output."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, d_in: int, h1: int, h2: int) -> "DenseHead":
        return cls(
            w1=uniform_init(rng, (d_in, h1)), b1=parameter(np.zeros(h1)),
            w2=uniform_init(rng, (h1, h2)), b2=parameter(np.zeros(h2)),
            w3=uniform_init(rng, (h2, 2)), b3=parameter(np.zeros(2)),
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in
                ("w1", "b1", "w2", "b2", "w3", "b3")}


def dense_head_logits(head: DenseHead, x: Tensor) -> Tensor:
    # tanh keeps the whole model smooth, which central-difference gradient
    # checking at arbitrary points depends on
    h1 = tanh(add(matmul(x, head.w1), head.b1))
    h2 = tanh(add(matmul(h1, head.w2), head.b2))
    return add(matmul(h2, head.w3), head.b3)


def dense_head_probs(head: DenseHead, x: Tensor) -> Tensor:
    return softmax(dense_head_logits(head, x))


# ---------------------------------------------------------------------------
# fused sequence ops
# ---------------------------------------------------------------------------

def gru_step(params: GruParams, x: Tensor, h: Tensor) -> Tensor:
    """One GRU step as a single tape node with a hand-derived backward.

    With all-zero parameters this reduces to h/2: z = sigmoid(0) = 0.5 and the
    candidate state is tanh(0) = 0.
    """
    _require_finite("gru_step", x.data, h.data)
    d_in, d = params.input_size, params.hidden_size
    if x.data.shape != (d_in,):
        raise ShapeMismatch(f"gru_step input shape {x.data.shape}, expected ({d_in},)")
    if h.data.shape != (d,):
        raise ShapeMismatch(f"gru_step hidden shape {h.data.shape}, expected ({d},)")

    xd, hd = x.data, h.data
    wz, uz, bz = params.wz.data, params.uz.data, params.bz.data
    wr, ur, br = params.wr.data, params.ur.data, params.br.data
    wh, uh, bh = params.wh.data, params.uh.data, params.bh.data

    z = _sigmoid_raw(xd @ wz + hd @ uz + bz)
    r = _sigmoid_raw(xd @ wr + hd @ ur + br)
    rh = r * hd
    hc = np.tanh(xd @ wh + rh @ uh + bh)
    out_data = (1.0 - z) * hd + z * hc

    parents = (x, h, params.wz, params.uz, params.bz, params.wr, params.ur,
               params.br, params.wh, params.uh, params.bh)

    def _bw(g):
        dz = g * (hc - hd)
        dhc = g * z
        dh = g * (1.0 - z)

        da_c = dhc * (1.0 - hc * hc)
        d_rh = da_c @ uh.T
        dr = d_rh * hd
        dh = dh + d_rh * r

        da_r = dr * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)

        dx = da_c @ wh.T + da_r @ wr.T + da_z @ wz.T
        dh = dh + da_r @ ur.T + da_z @ uz.T

        if x.requires_grad:
            _accum(x, dx)
        if h.requires_grad:
            _accum(h, dh)
        if params.wz.requires_grad:
            _accum(params.wz, np.outer(xd, da_z))
            _accum(params.uz, np.outer(hd, da_z))
            _accum(params.bz, da_z)
            _accum(params.wr, np.outer(xd, da_r))
            _accum(params.ur, np.outer(hd, da_r))
            _accum(params.br, da_r)
            _accum(params.wh, np.outer(xd, da_c))
            _accum(params.uh, np.outer(rh, da_c))
            _accum(params.bh, da_c)

    return _node(out_data, parents, _bw)


def bigru_encode(fwd_params: GruParams, bwd_params: GruParams,
                 xs: Sequence[Tensor]) -> list[Tensor]:
    """Bidirectional encoding: h_k = [fwd state after x_1..x_k ; bwd state
    after x_n..x_k]. Both directions start from zero states."""
    n = len(xs)
    if n == 0:
        raise EmptySequence("bigru_encode needs a non-empty sequence")
    d_f = fwd_params.hidden_size
    d_b = bwd_params.hidden_size

    fwd_states = []
    h = constant(np.zeros(d_f))
    for k in range(n):
        h = gru_step(fwd_params, xs[k], h)
        fwd_states.append(h)

    bwd_states = [None] * n
    h = constant(np.zeros(d_b))
    for k in range(n - 1, -1, -1):
        h = gru_step(bwd_params, xs[k], h)
        bwd_states[k] = h

    return [concat([fwd_states[k], bwd_states[k]]) for k in range(n)]


def modulate_sequence(hs: Tensor, actions: np.ndarray, dts: np.ndarray,
                      attn: AttentionParams) -> Tensor:
    """Apply h'_k = (A_{l_k} h_k) * dt_k^epsilon to every row of ``hs``.

    ``actions`` holds action-type codes in 1..4 and ``dts`` the elapsed time
    per event in model time units, already clamped >= DT_FLOOR. One tape node;
    backward is hand-derived (dt^eps = exp(eps * ln dt), so
    d(out)/d(eps) = out * ln dt).
    """
    _require_finite("modulate_sequence", hs.data)
    actions = np.asarray(actions, dtype=np.int64)
    dts = np.asarray(dts, dtype=DTYPE)
    n, width = hs.data.shape
    if actions.shape != (n,) or dts.shape != (n,):
        raise ShapeMismatch("modulate_sequence: actions/dts must match sequence length")
    if actions.size and (actions.min() < 1 or actions.max() > N_ACTION_TYPES):
        raise InvalidAction(f"action codes must lie in 1..{N_ACTION_TYPES}")
    if np.any(dts < DT_FLOOR):
        raise NncoreError(f"dt values must be clamped >= {DT_FLOOR} before modulation")
    if attn.state_width != width:
        raise ShapeMismatch("modulation matrices do not match state width")

    log_dt = np.log(dts)
    decay = np.exp(attn.epsilon.data * log_dt)  # (n,)
    groups = [np.nonzero(actions == l + 1)[0] for l in range(N_ACTION_TYPES)]

    tmp = np.empty_like(hs.data)
    for l, idx in enumerate(groups):
        if idx.size:
            tmp[idx] = hs.data[idx] @ attn.a_mats[l].data
    out_data = tmp * decay[:, None]

    parents = (hs, *attn.a_mats, attn.epsilon)

    def _bw(g):
        if attn.epsilon.requires_grad:
            _accum(attn.epsilon, np.asarray((g * out_data).sum(axis=1) @ log_dt))
        gt = g * decay[:, None]
        for l, idx in enumerate(groups):
            if not idx.size:
                continue
            a = attn.a_mats[l]
            if a.requires_grad:
                _accum(a, hs.data[idx].T @ gt[idx])
            if hs.requires_grad:
                if hs.grad is None:
                    hs.grad = np.zeros_like(hs.data)
                hs.grad[idx] += gt[idx] @ a.data.T
    return _node(out_data, parents, _bw)


def modulate(h_k: Tensor, action: int, dt: float, attn: AttentionParams) -> Tensor:
    """Single-event modulation: returns (A_action h_k) * dt^epsilon."""
    if h_k.data.ndim != 1:
        raise ShapeMismatch("modulate expects a state vector")
    if not 1 <= int(action) <= N_ACTION_TYPES:
        raise InvalidAction(f"action {action} not in 1..{N_ACTION_TYPES}")
    mat = reshape(h_k, (1, h_k.data.shape[0]))
    out = modulate_sequence(mat, np.array([int(action)]), np.array([float(dt)]), attn)
    return reshape(out, (h_k.data.shape[0],))


def attend(attn: AttentionParams, s0: Tensor, h_primes, h_bases=None):
    """Attention weights over modulated states; glimpse over caller-chosen bases.

    Scores come from the one-hidden-layer scorer on [h'_k ; s0]; the glimpse
    is the weight-averaged sum of ``h_bases`` (defaults to ``h_primes``).
    Returns ``(weights, glimpse)``.
    """
    hp = stack(h_primes) if isinstance(h_primes, (list, tuple)) else h_primes
    if hp.data.ndim != 2 or hp.data.shape[0] == 0:
        raise EmptySequence("attend needs at least one state")
    if h_bases is None:
        hb = hp
    else:
        hb = stack(h_bases) if isinstance(h_bases, (list, tuple)) else h_bases
    n = hp.data.shape[0]
    z = concat([hp, broadcast_rows(s0, n)], axis=1)
    hidden = tanh(add(matmul(z, attn.w1), attn.b1))
    raw = add(matmul(hidden, attn.w2), attn.b2)  # (n, 1)
    weights = softmax(reshape(raw, (n,)))
    glimpse = matmul(weights, hb)
    return weights, glimpse


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

def _check_grads_finite(params: Iterable[Tensor]):
    for p in params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient("non-finite gradient encountered in optimizer step")


class SGD:
    def __init__(self, lr: float):
        self.lr = float(lr)

    def step(self, params: Iterable[Tensor]):
        params = list(params)
        _check_grads_finite(params)
        for p in params:
            if p.grad is not None:
                p.data -= self.lr * p.grad


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._state: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._t = 0

    def step(self, params: Iterable[Tensor]):
        params = list(params)
        _check_grads_finite(params)
        self._t += 1
        b1t = 1.0 - self.beta1 ** self._t
        b2t = 1.0 - self.beta2 ** self._t
        for p in params:
            if p.grad is None:
                continue
            m, v = self._state.get(id(p), (np.zeros_like(p.data), np.zeros_like(p.data)))
            m = self.beta1 * m + (1.0 - self.beta1) * p.grad
            v = self.beta2 * v + (1.0 - self.beta2) * p.grad * p.grad
            self._state[id(p)] = (m, v)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def sgd_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], lr: float):
    """Functional single step: params[i] -= lr * grads[i], with finite checks."""
    if len(params) != len(grads):
        raise ShapeMismatch("sgd_step: params and grads differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient passed to sgd_step")
    for p, g in zip(params, grads):
        p.data -= lr * np.asarray(g, dtype=DTYPE)


def project_epsilon(attn: AttentionParams):
    """Clamp the decay exponent to the feasible set (epsilon <= 0)."""
    attn.epsilon.data = np.minimum(attn.epsilon.data, 0.0)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    analytic: float
    numeric: float
    n_coords: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor],
               tolerance: float = 1e-4, step: float = 1e-5,
               max_coords_per_tensor: int = 64, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must rebuild the loss from scratch (it is re-evaluated under
    perturbed parameters). Large tensors are spot-checked on
    ``max_coords_per_tensor`` sampled coordinates. The relative error uses a
    guard floor of 1e-3 in the denominator so finite-difference noise on
    near-zero coordinates does not mask real errors on O(1) ones.
    """
    rng = np.random.default_rng(seed)
    zero_grad(params.values())
    loss = loss_fn()
    backward(loss)
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params.items()}

    report = GradCheckReport(0.0, "", -1, 0.0, 0.0, 0, tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        size = flat.size
        if size <= max_coords_per_tensor:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=max_coords_per_tensor, replace=False)
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            with no_grad():
                f_plus = float(loss_fn().data)
            flat[i] = orig - step
            with no_grad():
                f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(a_flat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
            report.n_coords += 1
            if rel > report.max_rel_error:
                report.max_rel_error = rel
                report.worst_param = name
                report.worst_index = int(i)
                report.analytic = a
                report.numeric = numeric
    return report
