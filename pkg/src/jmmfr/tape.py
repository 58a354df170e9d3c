"""Dense float64 reverse-mode kernel: parameters, primitives, Adam, grad check.

Gradients flow over an explicitly recorded chain of primitive ops. Each op
returns a Node holding the forward value plus a closure that scatters the
incoming gradient to its parents; Node.backward() replays the chain in
reverse topological order. No graph rewriting, no dtype other than float64.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError, NonFiniteGradientError, TapeError

EPS_BCE = 1e-7  # probability clamp for bce_loss


def _f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Node:
    """One value in a recorded forward computation."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = _f64(value)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable parameter's grad."""
        if self.value.shape != ():
            raise TapeError("backward() must start from a scalar node")
        order = _toposort(self)
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Node(shape={self.value.shape}, requires_grad={self.requires_grad})"


class Parameter(Node):
    """Named leaf with a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def constant(x) -> Node:
    return Node(x)


def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _accum(node: Node, g: np.ndarray):
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


def _make(value, parents, backward) -> Node:
    req = any(p.requires_grad for p in parents)
    if not req:
        return Node(value)
    return Node(value, requires_grad=True, parents=tuple(parents), backward=backward)


# ---------------------------------------------------------------------------
# primitives


def linear(x: Node, W: Node, b: Node | None) -> Node:
    """W x + b for a single vector, or x @ W.T + b row-wise for a matrix."""
    xv, Wv = x.value, W.value
    if Wv.ndim != 2:
        raise TapeError(f"linear expects 2-d weight, got shape {Wv.shape}")
    if xv.ndim == 1:
        if xv.shape[0] != Wv.shape[1]:
            raise TapeError(f"linear shape mismatch: x {xv.shape} vs W {Wv.shape}")
        out = Wv @ xv
    elif xv.ndim == 2:
        if xv.shape[1] != Wv.shape[1]:
            raise TapeError(f"linear shape mismatch: x {xv.shape} vs W {Wv.shape}")
        out = xv @ Wv.T
    else:
        raise TapeError(f"linear expects 1-d or 2-d input, got shape {xv.shape}")
    if b is not None:
        if b.value.shape != (Wv.shape[0],):
            raise TapeError(f"linear bias shape {b.value.shape} != ({Wv.shape[0]},)")
        out = out + b.value

    def backward(g):
        if xv.ndim == 1:
            _accum(x, Wv.T @ g)
            _accum(W, np.outer(g, xv))
            if b is not None:
                _accum(b, g)
        else:
            _accum(x, g @ Wv)
            _accum(W, g.T @ xv)
            if b is not None:
                _accum(b, g.sum(axis=0))

    parents = (x, W) if b is None else (x, W, b)
    return _make(out, parents, backward)


def matvec(x: Node, a: Node) -> Node:
    """x @ a for x (n, d) and a (d,) -> (n,)."""
    xv, av = x.value, a.value
    out = xv @ av

    def backward(g):
        _accum(x, np.outer(g, av))
        _accum(a, xv.T @ g)

    return _make(out, (x, a), backward)


def dot_bias(x: Node, w: Node, b: Node) -> Node:
    """x @ w + b0 for x (n, d), w (d,), scalar bias b (1,) -> (n,)."""
    xv, wv = x.value, w.value
    out = xv @ wv + b.value[0]

    def backward(g):
        _accum(x, np.outer(g, wv))
        _accum(w, xv.T @ g)
        _accum(b, np.array([g.sum()]))

    return _make(out, (x, w, b), backward)


def relu(x: Node) -> Node:
    mask = x.value > 0

    def backward(g):
        _accum(x, g * mask)

    return _make(np.where(mask, x.value, 0.0), (x,), backward)


def leaky_relu(x: Node, slope: float = 0.2) -> Node:
    mask = x.value > 0
    out = np.where(mask, x.value, slope * x.value)

    def backward(g):
        _accum(x, g * np.where(mask, 1.0, slope))

    return _make(out, (x,), backward)


def _sigmoid_values(v: np.ndarray) -> np.ndarray:
    # piecewise form avoids overflow in exp for large |v|
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x: Node) -> Node:
    s = _sigmoid_values(x.value)

    def backward(g):
        _accum(x, g * s * (1.0 - s))

    return _make(s, (x,), backward)


def exp(x: Node) -> Node:
    out = np.exp(x.value)

    def backward(g):
        _accum(x, g * out)

    return _make(out, (x,), backward)


def add(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise TapeError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _make(a.value + b.value, (a, b), backward)


def sub(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise TapeError(f"sub shape mismatch: {a.value.shape} vs {b.value.shape}")

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return _make(a.value - b.value, (a, b), backward)


def mul(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise TapeError(f"mul shape mismatch: {a.value.shape} vs {b.value.shape}")
    av, bv = a.value, b.value

    def backward(g):
        _accum(a, g * bv)
        _accum(b, g * av)

    return _make(av * bv, (a, b), backward)


def div(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise TapeError(f"div shape mismatch: {a.value.shape} vs {b.value.shape}")
    av, bv = a.value, b.value
    out = av / bv

    def backward(g):
        _accum(a, g / bv)
        _accum(b, -g * av / (bv * bv))

    return _make(out, (a, b), backward)


def smul(x: Node, c: float) -> Node:
    c = float(c)

    def backward(g):
        _accum(x, g * c)

    return _make(x.value * c, (x,), backward)


def sub_const(x: Node, c) -> Node:
    """x - c with c detached (no gradient to c)."""
    cv = _f64(c)

    def backward(g):
        _accum(x, g)

    return _make(x.value - cv, (x,), backward)


def mul_const(x: Node, c) -> Node:
    """x * c with c a detached array broadcastable to x."""
    cv = _f64(c)
    out = x.value * cv

    def backward(g):
        gx = g * cv
        # reduce broadcast dims back to x's shape
        if gx.shape != x.value.shape:
            raise TapeError("mul_const constant must not broadcast x upward")
        _accum(x, gx)

    return _make(out, (x,), backward)


def concat_cols(parts: list[Node]) -> Node:
    if not parts:
        raise TapeError("concat_cols needs at least one input")
    widths = [p.value.shape[1] for p in parts]
    out = np.concatenate([p.value for p in parts], axis=1)

    def backward(g):
        at = 0
        for p, w in zip(parts, widths):
            _accum(p, g[:, at : at + w])
            at += w

    return _make(out, tuple(parts), backward)


def vstack_rows(top: Node, bottom: Node) -> Node:
    k = top.value.shape[0]
    out = np.concatenate([top.value, bottom.value], axis=0)

    def backward(g):
        _accum(top, g[:k])
        _accum(bottom, g[k:])

    return _make(out, (top, bottom), backward)


def split_rows(x: Node, k: int) -> tuple[Node, Node]:
    """Split (n, d) into ((k, d), (n-k, d)); gradients re-assemble."""
    xv = x.value
    top_v, bot_v = xv[:k], xv[k:]

    def back_top(g):
        pad = np.zeros_like(xv)
        pad[:k] = g
        _accum(x, pad)

    def back_bot(g):
        pad = np.zeros_like(xv)
        pad[k:] = g
        _accum(x, pad)

    return _make(top_v, (x,), back_top), _make(bot_v, (x,), back_bot)


def gather_rows(x: Node, idx: np.ndarray) -> Node:
    """Row gather, duplicates allowed; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)
    out = x.value[idx]

    def backward(g):
        buf = np.zeros_like(x.value)
        np.add.at(buf, idx, g)
        _accum(x, buf)

    return _make(out, (x,), backward)


def gather_vec(x: Node, idx: np.ndarray) -> Node:
    """Element gather from a 1-d node."""
    idx = np.asarray(idx, dtype=np.int64)
    out = x.value[idx]

    def backward(g):
        buf = np.zeros_like(x.value)
        np.add.at(buf, idx, g)
        _accum(x, buf)

    return _make(out, (x,), backward)


def scale_rows(m: Node, s: Node) -> Node:
    """(E, d) rows scaled by an (E,) vector."""
    mv, sv = m.value, s.value
    out = mv * sv[:, None]

    def backward(g):
        _accum(m, g * sv[:, None])
        _accum(s, (g * mv).sum(axis=1))

    return _make(out, (m, s), backward)


def _segment_sum_values(vals: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    pad = np.zeros((vals.shape[0] + 1,) + vals.shape[1:], dtype=np.float64)
    np.cumsum(vals, axis=0, out=pad[1:])
    return pad[ptr[1:]] - pad[ptr[:-1]]


def segment_sum(x: Node, ptr: np.ndarray) -> Node:
    """Sum contiguous row segments delimited by ptr; empty segments -> zero."""
    ptr = np.asarray(ptr, dtype=np.int64)
    counts = np.diff(ptr)
    out = _segment_sum_values(x.value, ptr)

    def backward(g):
        _accum(x, np.repeat(g, counts, axis=0))

    return _make(out, (x,), backward)


def repeat_segments(x: Node, ptr: np.ndarray) -> Node:
    """Repeat row i of x count_i times, counts from ptr; adjoint of segment_sum."""
    ptr = np.asarray(ptr, dtype=np.int64)
    counts = np.diff(ptr)
    out = np.repeat(x.value, counts, axis=0)

    def backward(g):
        _accum(x, _segment_sum_values(g, ptr))

    return _make(out, (x,), backward)


def dropout(x: Node, rate: float, training: bool = True,
            rng: np.random.Generator | None = None, seed: int | None = None) -> Node:
    """Inverted dropout: surviving entries scaled by 1/(1-rate); identity in eval."""
    if not 0.0 <= rate < 1.0:
        raise TapeError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        rng = np.random.default_rng(seed)
    keep = rng.random(x.value.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    factor = keep * scale

    def backward(g):
        _accum(x, g * factor)

    return _make(x.value * factor, (x,), backward)


def mean_scalars(parts: list[Node]) -> Node:
    if not parts:
        raise TapeError("mean_scalars needs at least one input")
    k = len(parts)
    out = np.array(sum(float(p.value) for p in parts) / k)

    def backward(g):
        for p in parts:
            _accum(p, g / k)

    return _make(out, tuple(parts), backward)


def bce_loss(p: Node, y: np.ndarray, mask: np.ndarray | None = None) -> Node:
    """Mean binary cross-entropy over masked entries of probabilities p.

    p is clamped to [EPS_BCE, 1-EPS_BCE] before the logs; clamped entries get
    zero gradient.
    """
    yv = _f64(y)
    pv = p.value
    if mask is None:
        mask = np.ones(pv.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    if mask.shape != pv.shape:
        raise TapeError(f"bce_loss mask shape {mask.shape} != {pv.shape}")
    m = int(mask.sum())
    if m == 0:
        raise TapeError("bce_loss over an empty mask is undefined")
    ph = np.clip(pv, EPS_BCE, 1.0 - EPS_BCE)
    per = -(yv * np.log(ph) + (1.0 - yv) * np.log(1.0 - ph))
    out = np.array(per[mask].mean())
    unclamped = pv == ph

    def backward(g):
        inner = np.where(mask & unclamped, (ph - yv) / (ph * (1.0 - ph)) / m, 0.0)
        _accum(p, g * inner)

    return _make(out, (p,), backward)


def bce_with_logits(x: Node, y: np.ndarray, row_mask: np.ndarray | None = None) -> Node:
    """Mean BCE of sigmoid(x) against y over all entries of the masked rows.

    Fused softplus form: per-entry loss = y*softplus(-x) + (1-y)*softplus(x),
    identical to sigmoid followed by cross-entropy but stable for large |x|.
    """
    yv = _f64(y)
    xv = x.value
    if xv.ndim == 1:
        xv2, yv2 = xv[:, None], yv[:, None]
    else:
        xv2, yv2 = xv, yv
    n = xv2.shape[0]
    if row_mask is None:
        row_mask = np.ones(n, dtype=bool)
    else:
        row_mask = np.asarray(row_mask, dtype=bool)
    rows = int(row_mask.sum())
    m = rows * xv2.shape[1]
    if m == 0:
        raise TapeError("bce_with_logits over an empty row mask is undefined")
    per = np.logaddexp(0.0, xv2) - yv2 * xv2
    out = np.array(per[row_mask].mean())
    s = _sigmoid_values(xv2)

    def backward(g):
        inner = np.zeros_like(xv2)
        inner[row_mask] = (s[row_mask] - yv2[row_mask]) / m
        _accum(x, g * inner.reshape(xv.shape))

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# parameters, optimizer, checking, serialization


class ParamRegistry:
    """Named parameters in deterministic registration order with a flat view."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def register(self, name: str, value) -> Parameter:
        if name in self._params:
            raise TapeError(f"duplicate parameter name {name!r}")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    @property
    def n_scalars(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def zero_grads(self):
        for p in self._params.values():
            p.zero_grad()

    def get_flat(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([p.value.ravel() for p in self._params.values()])

    def get_flat_grad(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([p.grad.ravel() for p in self._params.values()])

    def set_flat(self, vec: np.ndarray):
        vec = _f64(vec)
        if vec.shape != (self.n_scalars,):
            raise TapeError(f"flat vector has {vec.shape}, registry holds {self.n_scalars} scalars")
        at = 0
        for p in self._params.values():
            size = p.value.size
            p.value[...] = vec[at : at + size].reshape(p.value.shape)
            at += size

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise CheckpointError(f"state mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, p in self._params.items():
            arr = _f64(state[name])
            if arr.shape != p.value.shape:
                raise CheckpointError(
                    f"tensor {name!r} has shape {arr.shape}, expected {p.value.shape}")
            p.value[...] = arr


class Adam:
    """Adam with bias correction over every tensor of a registry."""

    def __init__(self, registry: ParamRegistry, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.registry = registry
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {name: np.zeros_like(p.value) for name, p in registry.items()}
        self._v = {name: np.zeros_like(p.value) for name, p in registry.items()}

    def zero_grads(self):
        self.registry.zero_grads()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.registry.items():
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(name)
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def grad_check(loss_fn, registry: ParamRegistry, h: float = 1e-5,
               samples: int = 64, seed: int = 0) -> float:
    """Max relative error between recorded and central-difference gradients.

    loss_fn() must rebuild the forward pass from the registry's current
    values and return a scalar Node; it must be deterministic (dropout off).
    Error metric per sampled coordinate: |a - n| / max(|a|, |n|, 1e-8).
    """
    registry.zero_grads()
    loss_fn().backward()
    analytic = registry.get_flat_grad()

    base = registry.get_flat()
    n = base.size
    rng = np.random.default_rng(seed)
    if samples >= n:
        coords = np.arange(n)
    else:
        coords = np.sort(rng.choice(n, size=samples, replace=False))

    worst = 0.0
    try:
        for i in coords:
            pert = base.copy()
            pert[i] = base[i] + h
            registry.set_flat(pert)
            hi = float(loss_fn().value)
            pert[i] = base[i] - h
            registry.set_flat(pert)
            lo = float(loss_fn().value)
            numeric = (hi - lo) / (2.0 * h)
            a = analytic[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    finally:
        registry.set_flat(base)
    return worst


CHECKPOINT_FORMAT = "jmmfr-params-v1"


def save_params(path, registry: ParamRegistry, meta: dict | None = None):
    """Write name -> shape + row-major values as JSON; floats round-trip exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "meta": meta or {},
        "tensors": {
            name: {"shape": list(p.value.shape), "values": p.value.ravel().tolist()}
            for name, p in registry.items()
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f)


def load_params(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (meta, name -> array)."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {e}") from e
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"checkpoint {path} has format {doc.get('format')!r}, "
                              f"expected {CHECKPOINT_FORMAT!r}")
    tensors = {}
    for name, entry in doc["tensors"].items():
        arr = _f64(entry["values"]).reshape(entry["shape"])
        tensors[name] = arr
    return doc.get("meta", {}), tensors
