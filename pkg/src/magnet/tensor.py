"""Dense numpy-backed tensors with reverse-mode differentiation and Adam.

Every primitive computes its forward value eagerly and, when any input
requires a gradient, records a closure that maps the output gradient to
input gradients.  ``backward`` orders the recorded operations topologically
and replays them once each in reverse.
"""
import contextlib
from dataclasses import dataclass, field

import numpy as np

_state = {"dtype": np.float32, "grad_enabled": True}

PRECISIONS = {"f32": np.float32, "f64": np.float64}


class ShapeError(ValueError):
    pass


class NotScalarError(ValueError):
    pass


class GradCheckError(AssertionError):
    pass


def set_precision(name):
    _state["dtype"] = PRECISIONS[name]


def default_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def precision(name):
    old = _state["dtype"]
    _state["dtype"] = PRECISIONS[name]
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    old = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(default_dtype())
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # operator sugar
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, o): return matmul(self, o)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)


def _t(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=default_dtype()))


def _make(data, parents, backward):
    out = Tensor(data)
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_check(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic -------------------------------------------------

def add(a, b):
    a, b = _t(a), _t(b)
    _broadcast_check("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _t(a), _t(b)
    _broadcast_check("sub", a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _t(a), _t(b)
    _broadcast_check("mul", a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = _t(a), _t(b)
    _broadcast_check("div", a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a):
    a = _t(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def exp(a):
    a = _t(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    a = _t(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = _t(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1 - out),))


def tanh(a):
    a = _t(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1 - out * out),))


def relu(a):
    a = _t(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


# -- linear algebra -----------------------------------------------------------

def matmul(a, b):
    a, b = _t(a), _t(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), back)


def einsum(spec, a, b):
    """Two-operand einsum; every input index must appear in the other operand or the output."""
    a, b = _t(a), _t(b)
    ins, out_idx = spec.replace(" ", "").split("->")
    ia, ib = ins.split(",")
    if len(ia) != a.ndim or len(ib) != b.ndim:
        raise ShapeError(f"einsum {spec}: operand ranks {a.shape}, {b.shape}")
    for i_self, i_other in ((ia, ib), (ib, ia)):
        if any(c not in i_other and c not in out_idx for c in i_self):
            raise ShapeError(f"einsum {spec}: reduction-only index unsupported")
    try:
        out = np.einsum(spec, a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"einsum {spec}: {exc}") from None
    return _make(out, (a, b),
                 lambda g: (np.einsum(f"{out_idx},{ib}->{ia}", g, b.data),
                            np.einsum(f"{out_idx},{ia}->{ib}", g, a.data)))


# -- shape manipulation -----------------------------------------------------

def reshape(a, shape):
    a = _t(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = _t(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (a,), lambda g: (np.transpose(g, inv),))


def concat(tensors, axis=0):
    ts = [_t(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make(out, tuple(ts), lambda g: tuple(np.split(g, bounds, axis=axis)))


def getitem(a, idx):
    """Basic slicing (views, no repeated positions)."""
    a = _t(a)

    def back(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(a.data[idx], (a,), back)


slice_ = getitem


def scatter_rows(num_rows, index, values):
    """Sum rows of values into num_rows buckets given by index (row order within a bucket)."""
    index = np.asarray(index, dtype=np.intp).reshape(-1)
    values = np.asarray(values)
    out = np.zeros((num_rows,) + values.shape[1:], dtype=values.dtype)
    if not index.size:
        return out
    if values.ndim == 1:
        out += np.bincount(index, weights=values, minlength=num_rows).astype(values.dtype)
        return out
    order = np.argsort(index, kind="stable")
    sorted_idx = index[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    out[sorted_idx[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


def gather(a, index):
    """Rows of a selected by an integer index array of any shape (repeats allowed)."""
    a = _t(a)
    index = np.asarray(index, dtype=np.intp)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ShapeError(f"gather: index out of range for {a.shape}")

    def back(g):
        return (scatter_rows(a.shape[0], index, g.reshape((-1,) + a.shape[1:])),)

    return _make(a.data[index], (a,), back)


def segment_sum(a, segment_ids, num_segments):
    """Sum rows of a into num_segments buckets (in row order, deterministic)."""
    a = _t(a)
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape != a.shape[:1]:
        raise ShapeError(f"segment_sum: {seg.shape} ids for rows of {a.shape}")
    out = scatter_rows(num_segments, seg, a.data)
    return _make(out, (a,), lambda g: (g[seg],))


def segment_max(a, segment_ids, num_segments):
    """Row-wise max per segment; empty segments yield zeros. Ties share the gradient."""
    a = _t(a)
    seg = np.asarray(segment_ids, dtype=np.intp)
    out = np.full((num_segments,) + a.shape[1:], -np.inf, dtype=a.dtype)
    np.maximum.at(out, seg, a.data)
    empty = np.isneginf(out)
    out[empty] = 0
    hit = (a.data == out[seg]).astype(a.dtype)
    counts = scatter_rows(num_segments, seg, hit)

    def back(g):
        return (hit * (g / np.maximum(counts, 1))[seg],)

    return _make(out, (a,), back)


# -- reductions ---------------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = _t(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), back)


def mean(a, axis=None, keepdims=False):
    a = _t(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def tmax(a, axis=None, keepdims=False):
    a = _t(a)
    out = a.data.max(axis=axis, keepdims=True)
    hit = (a.data == out).astype(a.dtype)
    hit /= hit.sum(axis=axis, keepdims=True)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        elif axis is None and not keepdims:
            g = np.reshape(g, (1,) * a.ndim)
        return (g * hit,)

    value = out if keepdims else (out.squeeze(axis) if axis is not None else out.reshape(()))
    return _make(value, (a,), back)


# -- normalisation and loss -------------------------------------------------

def softmax(a, axis=-1):
    a = _t(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return _make(out, (a,),
                 lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(a, axis=-1):
    a = _t(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _make(out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def cross_entropy(logits, labels, weights=None):
    """Mean (optionally class-weighted) cross-entropy of (B, C) logits; a 1-D logit vector is one sample."""
    logits = _t(logits)
    if logits.ndim == 1:
        logits = reshape(logits, (1, -1))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for logits {logits.shape}")
    logp = log_softmax(logits, axis=-1)
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    onehot[np.arange(len(labels)), labels] = 1
    if weights is None:
        w = np.full(len(labels), 1.0 / len(labels), dtype=logits.dtype)
    else:
        w = np.asarray(weights, dtype=logits.dtype)[labels]
        w = w / w.sum()
    return -tsum(logp * (onehot * w[:, None]))


# -- fused recurrent primitive ----------------------------------------------

def gru_sequence(x, mask, w_ih, w_hh, b_ih, b_hh):
    """Run a GRU over (B, T, D) inputs from a zero state; returns (B, T, H) states.

    Gate layout along the 3H axis is [reset, update, candidate]:
        r = s(x W_r + b_r + h U_r + c_r),  z = s(x W_z + b_z + h U_z + c_z)
        n = tanh(x W_n + b_n + r * (h U_n + c_n)),  h' = (1 - z) n + z h
    Positions with mask 0 carry the previous state through unchanged.
    """
    x, w_ih, w_hh, b_ih, b_hh = (_t(t) for t in (x, w_ih, w_hh, b_ih, b_hh))
    B, T, D = x.shape
    H = w_hh.shape[0]
    if w_ih.shape != (D, 3 * H) or w_hh.shape != (H, 3 * H):
        raise ShapeError(f"gru: weights {w_ih.shape}, {w_hh.shape} for input dim {D}")
    m = np.asarray(mask, dtype=x.dtype).reshape(B, T, 1)
    gi = x.data @ w_ih.data + b_ih.data
    whh = w_hh.data
    h = np.zeros((B, H), dtype=x.dtype)
    hs = np.empty((B, T, H), dtype=x.dtype)
    cache = []
    for t in range(T):
        gh = h @ whh + b_hh.data
        r = _sigmoid(gi[:, t, :H] + gh[:, :H])
        z = _sigmoid(gi[:, t, H:2 * H] + gh[:, H:2 * H])
        n = np.tanh(gi[:, t, 2 * H:] + r * gh[:, 2 * H:])
        h_new = (1 - z) * n + z * h
        cache.append((h, r, z, n, gh[:, 2 * H:]))
        mt = m[:, t]
        h = mt * h_new + (1 - mt) * h
        hs[:, t] = h

    def back(g):
        d_gi = np.empty_like(gi)
        d_whh = np.zeros_like(whh)
        d_bhh = np.zeros_like(b_hh.data)
        dh_next = np.zeros((B, H), dtype=x.dtype)
        for t in range(T - 1, -1, -1):
            h_prev, r, z, n, ghn = cache[t]
            mt = m[:, t]
            dh = g[:, t] + dh_next
            dh_new = mt * dh
            dh_prev = (1 - mt) * dh + dh_new * z
            dn = dh_new * (1 - z) * (1 - n * n)
            dz = dh_new * (h_prev - n) * z * (1 - z)
            dr = dn * ghn * r * (1 - r)
            d_gi[:, t] = np.concatenate([dr, dz, dn], axis=1)
            dgh = np.concatenate([dr, dz, dn * r], axis=1)
            d_whh += h_prev.T @ dgh
            d_bhh += dgh.sum(axis=0)
            dh_next = dh_prev + dgh @ whh.T
        flat = d_gi.reshape(B * T, 3 * H)
        dx = d_gi @ w_ih.data.T
        d_wih = x.data.reshape(B * T, D).T @ flat
        return dx, d_wih, d_whh, flat.sum(axis=0), d_bhh

    return _make(hs, (x, w_ih, w_hh, b_ih, b_hh), back)


# -- backward pass ------------------------------------------------------------

def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf that requires grad."""
    if loss.data.size != 1:
        raise NotScalarError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = _topo(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if not p.requires_grad or pg is None:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


# -- initialisation -----------------------------------------------------------

def xavier_init(shape, rng, dtype=None, scale=1.0):
    """Uniform(-a, a) with a = scale * sqrt(6 / (fan_in + fan_out)); last two dims are (fan_in, fan_out)."""
    shape = tuple(int(s) for s in shape)
    if not shape or min(shape) < 1:
        raise ShapeError(f"xavier_init: invalid shape {shape}")
    fan_in = shape[-2] if len(shape) >= 2 else shape[0]
    fan_out = shape[-1]
    bound = scale * np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-bound, bound, size=shape)
    return Tensor(data.astype(dtype or default_dtype()), requires_grad=True)


# -- optimisation -------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state):
    """One bias-corrected Adam update over a name -> Tensor mapping; zeroes grads afterwards."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name in params:
        p = params[name]
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)
        p.grad = np.zeros_like(p.data)


# -- verification -------------------------------------------------------------

def grad_check(f, params, h=1e-5, tol=None, max_coords=None, rng=None):
    """Worst relative error between backward() gradients and central differences.

    f: zero-argument callable returning a scalar Tensor built from params.
    params: list of leaf Tensors (or a name -> Tensor mapping).
    Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6).
    max_coords caps coordinates checked per tensor (sampled with rng).
    """
    if isinstance(params, dict):
        params = [params[k] for k in params]
    for p in params:
        p.grad = np.zeros_like(p.data)
    backward(f())
    analytic = [p.grad.copy() for p in params]
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            a = float(ga.reshape(-1)[i])
            err = abs(a - num) / max(abs(a), abs(num), 1e-6)
            worst = max(worst, err)
    if tol is not None and worst > tol:
        raise GradCheckError(f"gradient check failed: max relative error {worst:.3g} > {tol}")
    return worst
