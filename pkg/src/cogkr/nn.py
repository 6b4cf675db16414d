"""Small reverse-mode autodiff over numpy arrays, a parameter store and Adam.

Ops are recorded on a :class:`Tape` during the forward pass and their
backward rules are replayed in reverse order. Only vectors and matrices are
supported; there is no broadcasting beyond what each primitive documents.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

EMBEDDING = "embedding"
OTHER = "other"


class NumericError(FloatingPointError):
    """A forward value or loss became NaN/Inf."""


def sigmoid(x):
    # tanh form avoids overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x):
    z = np.exp(x - np.max(x))
    return z / z.sum()


def log_softmax(x):
    s = x - np.max(x)
    return s - np.log(np.exp(s).sum())


# -- parameters ---------------------------------------------------------------

@dataclass
class Param:
    value: np.ndarray
    group: str = OTHER
    grad: np.ndarray = None
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.m is None:
            self.m = np.zeros_like(self.value)
        if self.v is None:
            self.v = np.zeros_like(self.value)


class ParameterStore:
    """Named trainable tensors with gradient accumulators and Adam state."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Param] = {}

    def add(self, name: str, value, group: str = OTHER) -> Param:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Param(np.array(value, dtype=self.dtype), group)
        self.params[name] = p
        return p

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name].value

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad.fill(0.0)

    def n_values(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def copy(self) -> "ParameterStore":
        other = ParameterStore(self.dtype)
        for name, p in self.params.items():
            other.params[name] = Param(p.value.copy(), p.group, p.grad.copy(), p.m.copy(), p.v.copy(), p.step)
        return other

    def values_equal(self, other: "ParameterStore") -> bool:
        return list(self.params) == list(other.params) and all(
            np.array_equal(p.value, other.params[n].value) for n, p in self.params.items())

    def apply(self, buffer: "GradBuffer", scale: float = 1.0) -> None:
        """Add a gradient buffer into the accumulators."""
        for name, g in buffer.dense.items():
            self.params[name].grad += scale * g
        for name, rows in buffer.sparse.items():
            grad = self.params[name].grad
            for idx, g in rows:
                if scale != 1.0:
                    g = scale * g
                np.add.at(grad, idx, g)


# -- snapshots ----------------------------------------------------------------

_MAGIC = b"CGKRPRM\0"
_VERSION = 1


def save_params(store: ParameterStore, path: str) -> None:
    """Write ``(name, shape, little-endian payload)`` records after a version header."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(store.params)))
        for name, p in store.params.items():
            raw = name.encode("utf-8")
            dt = p.value.dtype.newbyteorder("<")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<B", 1 if p.group == EMBEDDING else 0))
            fh.write(struct.pack("<B", dt.itemsize))
            fh.write(struct.pack("<I", p.value.ndim))
            fh.write(struct.pack(f"<{p.value.ndim}Q", *p.value.shape))
            fh.write(p.value.astype(dt, copy=False).tobytes(order="C"))


def load_params(path: str) -> ParameterStore:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a parameter snapshot")
    version, count = struct.unpack_from("<II", data, 8)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    pos = 16
    store = None
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        group, width = struct.unpack_from("<BB", data, pos)
        pos += 2
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        dt = np.dtype(f"<f{width}")
        size = int(np.prod(shape)) * width
        value = np.frombuffer(data, dtype=dt, count=int(np.prod(shape)), offset=pos).reshape(shape)
        pos += size
        if store is None:
            store = ParameterStore(dt.newbyteorder("="))
        store.add(name, value.astype(store.dtype), EMBEDDING if group else OTHER)
    return store if store is not None else ParameterStore()


# -- optimizer ----------------------------------------------------------------

@dataclass
class Adam:
    lr_by_group: dict = field(default_factory=lambda: {EMBEDDING: 1e-5, OTHER: 1e-4})
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None

    def step(self, store: ParameterStore) -> None:
        adam_step(store, self.lr_by_group, self.weight_decay, self.beta1, self.beta2, self.eps, self.clip_norm)


def adam_step(store: ParameterStore, lr_by_group: dict, weight_decay: float = 0.0,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              clip_norm: float | None = None) -> None:
    """One bias-corrected Adam update per parameter, then zero the gradients.

    L2 decay is folded into the gradient before the moment update.
    """
    scale = 1.0
    if clip_norm is not None:
        norm = np.sqrt(sum(float(np.sum(p.grad ** 2)) for p in store.params.values()))
        if norm > clip_norm:
            scale = clip_norm / norm
    for p in store.params.values():
        g = p.grad * scale
        if weight_decay:
            g = g + weight_decay * p.value
        p.step += 1
        p.m *= beta1
        p.m += (1 - beta1) * g
        p.v *= beta2
        p.v += (1 - beta2) * g * g
        lr = lr_by_group[p.group]
        if lr:
            m_hat = p.m / (1 - beta1 ** p.step)
            v_hat = p.v / (1 - beta2 ** p.step)
            p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad.fill(0.0)


# -- tape ---------------------------------------------------------------------

class Var:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = value
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def _acc(var: Var, g) -> None:
    if var.grad is None:
        var.grad = g
    else:
        var.grad = var.grad + g


class GradBuffer:
    """Private gradient accumulator: dense per-parameter arrays plus sparse row updates."""

    def __init__(self):
        self.dense: dict[str, np.ndarray] = {}
        self.sparse: dict[str, list] = {}

    def add_dense(self, name: str, g) -> None:
        if name in self.dense:
            self.dense[name] = self.dense[name] + g
        else:
            self.dense[name] = g

    def add_rows(self, name: str, idx, g) -> None:
        self.sparse.setdefault(name, []).append((idx, g))

    def merge(self, other: "GradBuffer") -> None:
        for name, g in other.dense.items():
            self.add_dense(name, g)
        for name, rows in other.sparse.items():
            self.sparse.setdefault(name, []).extend(rows)

    def is_empty(self) -> bool:
        return not self.dense and not self.sparse


class Tape:
    """Records primitive ops on :class:`Var` values for a reverse sweep.

    With ``record=False`` the same calls compute values only.
    """

    def __init__(self, store: ParameterStore, record: bool = True):
        self.store = store
        self.record = record
        self._ops: list[Callable[[], None]] = []
        self._params: dict[str, Var] = {}
        self._gathers: list[tuple[str, object, Var]] = []

    def __len__(self):
        return len(self._ops)

    def _push(self, fn) -> None:
        if self.record:
            self._ops.append(fn)

    @staticmethod
    def _finite(value):
        if not np.all(np.isfinite(value)):
            raise NumericError("non-finite value in forward pass")
        return value

    # leaves

    def param(self, name: str) -> Var:
        v = self._params.get(name)
        if v is None:
            v = Var(self.store[name])
            self._params[name] = v
        return v

    def rows(self, name: str, idx) -> Var:
        """Gather row(s) of a parameter table; ``idx`` may be an int or an index array."""
        out = Var(self.store[name][idx])
        if self.record:
            self._gathers.append((name, idx, out))
        return out

    def const(self, value) -> Var:
        return Var(np.asarray(value, dtype=self.store.dtype))

    # primitives

    def matvec(self, W: Var, x: Var) -> Var:
        if W.value.ndim != 2 or x.value.ndim != 1 or W.value.shape[1] != x.value.shape[0]:
            raise ValueError(f"matvec shape mismatch {W.shape} @ {x.shape}")
        out = Var(self._finite(W.value @ x.value))

        def backward():
            g = out.grad
            if g is None:
                return
            _acc(W, np.outer(g, x.value))
            _acc(x, W.value.T @ g)

        self._push(backward)
        return out

    def matmat(self, A: Var, B: Var) -> Var:
        if A.value.ndim != 2 or B.value.ndim != 2 or A.value.shape[1] != B.value.shape[0]:
            raise ValueError(f"matmat shape mismatch {A.shape} @ {B.shape}")
        out = Var(self._finite(A.value @ B.value))

        def backward():
            g = out.grad
            if g is None:
                return
            _acc(A, g @ B.value.T)
            _acc(B, A.value.T @ g)

        self._push(backward)
        return out

    def concat(self, xs: Sequence[Var]) -> Var:
        """Concatenate vectors, or matrices along columns."""
        vals = [x.value for x in xs]
        if len({v.ndim for v in vals}) != 1:
            raise ValueError("concat of mixed ranks")
        axis = vals[0].ndim - 1
        if axis == 1 and len({v.shape[0] for v in vals}) != 1:
            raise ValueError("concat row counts differ")
        out = Var(np.concatenate(vals, axis=axis))
        bounds = []
        pos = 0
        for v in vals:
            bounds.append((pos, pos + v.shape[axis]))
            pos += v.shape[axis]

        def backward():
            g = out.grad
            if g is None:
                return
            for x, (lo, hi) in zip(xs, bounds):
                _acc(x, g[..., lo:hi])

        self._push(backward)
        return out

    def stack(self, xs: Sequence[Var | None], width: int) -> Var:
        """Stack vectors as matrix rows; ``None`` entries become zero rows."""
        out = Var(np.zeros((len(xs), width), dtype=self.store.dtype))
        for i, x in enumerate(xs):
            if x is not None:
                if x.value.shape != (width,):
                    raise ValueError("stack row width mismatch")
                out.value[i] = x.value

        def backward():
            g = out.grad
            if g is None:
                return
            for i, x in enumerate(xs):
                if x is not None:
                    _acc(x, g[i])

        self._push(backward)
        return out

    def vstack(self, top: Var, bottom: Var) -> Var:
        """Stack two matrices vertically."""
        if top.value.shape[1] != bottom.value.shape[1]:
            raise ValueError("vstack column mismatch")
        out = Var(np.vstack([top.value, bottom.value]))
        k = top.value.shape[0]

        def backward():
            if out.grad is not None:
                _acc(top, out.grad[:k])
                _acc(bottom, out.grad[k:])

        self._push(backward)
        return out

    def mean_rows(self, X: Var) -> Var:
        if X.value.ndim != 2 or X.value.shape[0] == 0:
            raise ValueError("mean_rows needs a non-empty matrix")
        k = X.value.shape[0]
        # shifted mean: exact when all rows are equal
        first = X.value[0]
        out = Var(first + (X.value - first).sum(axis=0) / k)

        def backward():
            if out.grad is None:
                return
            _acc(X, np.broadcast_to(out.grad / k, X.value.shape).copy())

        self._push(backward)
        return out

    def add(self, *xs: Var) -> Var:
        shape = xs[0].value.shape
        if any(x.value.shape != shape for x in xs):
            raise ValueError("add shape mismatch")
        total = xs[0].value.copy()
        for x in xs[1:]:
            total += x.value
        out = Var(total)

        def backward():
            if out.grad is None:
                return
            for x in xs:
                _acc(x, out.grad)

        self._push(backward)
        return out

    def sigmoid(self, x: Var) -> Var:
        s = sigmoid(x.value)
        out = Var(s)

        def backward():
            if out.grad is not None:
                _acc(x, out.grad * s * (1.0 - s))

        self._push(backward)
        return out

    def softmax(self, x: Var) -> Var:
        p = self._finite(softmax(x.value))
        out = Var(p)

        def backward():
            g = out.grad
            if g is not None:
                _acc(x, p * (g - np.dot(g, p)))

        self._push(backward)
        return out

    def log_softmax(self, x: Var) -> Var:
        ls = self._finite(log_softmax(x.value))
        out = Var(ls)

        def backward():
            g = out.grad
            if g is not None:
                _acc(x, g - np.exp(ls) * g.sum())

        self._push(backward)
        return out

    def dot(self, x: Var, y: Var) -> Var:
        """Inner product of two vectors (scalar out); matrix-vector when ``x`` is 2-D."""
        if x.value.ndim == 2:
            return self.matvec(x, y)
        out = Var(np.dot(x.value, y.value))

        def backward():
            g = out.grad
            if g is not None:
                _acc(x, g * y.value)
                _acc(y, g * x.value)

        self._push(backward)
        return out

    def weighted_sum(self, x: Var, weights) -> Var:
        """``sum_i weights[i] * x[i]`` for a fixed weight vector (scalar out)."""
        w = np.asarray(weights, dtype=x.value.dtype)
        out = Var(self._finite(np.dot(w, x.value)))

        def backward():
            if out.grad is not None:
                _acc(x, out.grad * w)

        self._push(backward)
        return out

    def scale(self, x: Var, c: float) -> Var:
        out = Var(c * x.value)

        def backward():
            if out.grad is not None:
                _acc(x, c * out.grad)

        self._push(backward)
        return out

    # reverse sweep

    def backward(self, loss: Var, into: GradBuffer | None = None) -> GradBuffer:
        """Propagate d(loss) to every recorded parameter; returns the gradients."""
        if not self.record:
            raise RuntimeError("tape was not recording")
        if np.ndim(loss.value) != 0:
            raise ValueError("loss must be a scalar")
        if not np.isfinite(loss.value):
            raise NumericError("non-finite loss")
        into = GradBuffer() if into is None else into
        loss.grad = np.ones_like(loss.value)
        for fn in reversed(self._ops):
            fn()
        for name, v in self._params.items():
            if v.grad is not None:
                into.add_dense(name, np.asarray(v.grad))
        for name, idx, v in self._gathers:
            if v.grad is not None:
                into.add_rows(name, idx, v.grad)
        return into


# -- gradient checking --------------------------------------------------------

def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(f: Callable[[ParameterStore], float], grad: Callable[[ParameterStore], GradBuffer | None],
               store: ParameterStore, eps: float = 1e-5, coords: Iterable[tuple[str, tuple]] | None = None,
               n_coords: int = 20, rng=None, floor: float = 1e-8) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f(store)`` evaluates the scalar; ``grad(store)`` returns a
    :class:`GradBuffer` (or ``None`` to read ``store`` accumulators). When
    ``coords`` is omitted, ``n_coords`` coordinates per parameter are drawn
    from ``rng``.
    """
    store.zero_grad()
    buf = grad(store)
    if buf is not None:
        store.apply(buf)
    analytic = {name: p.grad.copy() for name, p in store.items()}
    store.zero_grad()
    if coords is None:
        rng = np.random.default_rng(0) if rng is None else rng
        coords = []
        for name, p in store.items():
            for flat in rng.choice(p.value.size, size=min(n_coords, p.value.size), replace=False):
                coords.append((name, np.unravel_index(flat, p.value.shape)))
    worst = 0.0
    for name, idx in coords:
        value = store[name]
        orig = value[idx]
        value[idx] = orig + eps
        up = f(store)
        value[idx] = orig - eps
        down = f(store)
        value[idx] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite objective while perturbing {name}{idx}")
        numeric = (up - down) / (2 * eps)
        worst = max(worst, relative_error(float(analytic[name][idx]), numeric, floor))
    return worst
