"""Minimal dense-array reverse-mode autodiff engine.

Everything is float64. A forward pass records a define-by-run tape of
``Tensor`` nodes; ``Tensor.backward()`` walks the tape once in reverse
topological order and accumulates gradients into leaf tensors.

Only the primitives the association model needs are implemented:
matmul, (broadcast) add, elementwise mul, scale, transpose, relu,
row softmax, row/column log-sum-exp, group normalization, concat,
column slicing, fill-from-scalar, exp and sum.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Callable, Iterable

import numpy as np


class AutodiffError(Exception):
    pass


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A node of the computation tape.

    ``requires_grad`` leaves collect gradients in ``.grad``; interior
    nodes carry a ``_backward`` closure distributing the upstream
    gradient to their parents.
    """

    __slots__ = ("data", "parents", "requires_grad", "grad", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward: Callable[[np.ndarray], None] | None = None,
                 name: str = ""):
        self.data = _as_array(data)
        if not np.all(np.isfinite(self.data)):
            raise AutodiffError(f"non-finite values entering tensor {name or '<unnamed>'}")
        self.requires_grad = requires_grad
        self.parents = parents
        self.grad: np.ndarray | None = None
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self, output_grad: np.ndarray | None = None) -> None:
        """Reverse pass from this node; visits every node exactly once."""
        if output_grad is None:
            output_grad = np.ones_like(self.data)
        output_grad = _as_array(output_grad)
        if output_grad.shape != self.data.shape:
            raise AutodiffError(
                f"output grad shape {output_grad.shape} != tensor shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(output_grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad_tree(self) -> None:
        seen: set[int] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            node.grad = None
            stack.extend(node.parents)

    # -- convenience operators ------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"


def constant(x, name: str = "") -> Tensor:
    return Tensor(x, requires_grad=False, name=name)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- primitives ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward, name="add")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward, name="mul")


def scale(a, k: float) -> Tensor:
    a = _wrap(a)
    k = float(k)

    def backward(g):
        a._accumulate(g * k)

    return Tensor(a.data * k, parents=(a,), backward=backward, name="scale")


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise AutodiffError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise AutodiffError(
            f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return Tensor(out_data, parents=(a, b), backward=backward, name="matmul")


def transpose(a) -> Tensor:
    a = _wrap(a)

    def backward(g):
        a._accumulate(g.T)

    return Tensor(a.data.T, parents=(a,), backward=backward, name="transpose")


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return Tensor(a.data * mask, parents=(a,), backward=backward, name="relu")


def exp(a) -> Tensor:
    a = _wrap(a)
    out_data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out_data)

    return Tensor(out_data, parents=(a,), backward=backward, name="exp")


def softmax_rows(a) -> Tensor:
    """Row-wise softmax, overflow-safe via max subtraction."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        a._accumulate((g - dot) * out_data)

    return Tensor(out_data, parents=(a,), backward=backward, name="softmax_rows")


def logsumexp_rows(a) -> Tensor:
    """Log-sum-exp along rows of an (M, N) tensor -> (M, 1)."""
    a = _wrap(a)
    m = a.data.max(axis=1, keepdims=True)
    out_data = m + np.log(np.exp(a.data - m).sum(axis=1, keepdims=True))
    soft = np.exp(a.data - out_data)

    def backward(g):
        a._accumulate(g * soft)

    return Tensor(out_data, parents=(a,), backward=backward, name="lse_rows")


def logsumexp_cols(a) -> Tensor:
    """Log-sum-exp along columns of an (M, N) tensor -> (1, N)."""
    a = _wrap(a)
    m = a.data.max(axis=0, keepdims=True)
    out_data = m + np.log(np.exp(a.data - m).sum(axis=0, keepdims=True))
    soft = np.exp(a.data - out_data)

    def backward(g):
        a._accumulate(g * soft)

    return Tensor(out_data, parents=(a,), backward=backward, name="lse_cols")


def concat_cols(tensors: Iterable[Tensor]) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    widths = [t.data.shape[1] for t in ts]
    out_data = np.concatenate([t.data for t in ts], axis=1)

    def backward(g):
        ofs = 0
        for t, w in zip(ts, widths):
            t._accumulate(g[:, ofs:ofs + w])
            ofs += w

    return Tensor(out_data, parents=tuple(ts), backward=backward, name="concat_cols")


def concat_rows(tensors: Iterable[Tensor]) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    heights = [t.data.shape[0] for t in ts]
    out_data = np.concatenate([t.data for t in ts], axis=0)

    def backward(g):
        ofs = 0
        for t, h in zip(ts, heights):
            t._accumulate(g[ofs:ofs + h, :])
            ofs += h

    return Tensor(out_data, parents=tuple(ts), backward=backward, name="concat_rows")


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = _wrap(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        a._accumulate(full)

    return Tensor(a.data[:, start:stop], parents=(a,), backward=backward, name="slice_cols")


def fill(shape: tuple, scalar: Tensor) -> Tensor:
    """Broadcast a 1-element tensor into a constant-valued matrix."""
    scalar = _wrap(scalar)
    if scalar.data.size != 1:
        raise AutodiffError("fill expects a 1-element tensor")
    out_data = np.full(shape, float(scalar.data.reshape(-1)[0]))

    def backward(g):
        scalar._accumulate(np.full(scalar.data.shape, g.sum()))

    return Tensor(out_data, parents=(scalar,), backward=backward, name="fill")


def total(a) -> Tensor:
    """Sum all entries to a 1x1 tensor."""
    a = _wrap(a)

    def backward(g):
        a._accumulate(np.full(a.data.shape, g.reshape(-1)[0]))

    return Tensor(a.data.sum().reshape(1, 1), parents=(a,), backward=backward, name="total")


def mean_rows(a) -> Tensor:
    """Mean over rows of an (M, N) tensor -> (1, N)."""
    a = _wrap(a)
    m = a.data.shape[0]
    out_data = a.data.mean(axis=0, keepdims=True)

    def backward(g):
        a._accumulate(np.repeat(g, m, axis=0) / m)

    return Tensor(out_data, parents=(a,), backward=backward, name="mean_rows")


def group_norm(x, gamma, beta, num_groups: int | None = None, eps: float = 1e-5) -> Tensor:
    """Per-row group normalization of an (N, C) tensor.

    Channels are split into groups (8 when divisible and at least 2 wide,
    else 1 unless an explicit count is given); each group is standardized
    per row and the result is scaled/shifted by learnable gamma/beta of
    length C. Single-channel groups would standardize to zero and sever
    the gradient, so the default never produces them.
    """
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    n, c = x.data.shape
    if num_groups is None:
        num_groups = 8 if c % 8 == 0 and c >= 16 else 1
    if c % num_groups != 0:
        raise AutodiffError(f"channels {c} not divisible by {num_groups} groups")
    gw = c // num_groups
    xg = x.data.reshape(n, num_groups, gw)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(n, c)
    g_row = gamma.data.reshape(1, c)
    b_row = beta.data.reshape(1, c)
    out_data = xhat * g_row + b_row

    def backward(g):
        gamma._accumulate((g * xhat).sum(axis=0).reshape(gamma.data.shape))
        beta._accumulate(g.sum(axis=0).reshape(beta.data.shape))
        dxhat = (g * g_row).reshape(n, num_groups, gw)
        xh = xhat.reshape(n, num_groups, gw)
        # standard normalization backward per group
        dx = inv / gw * (gw * dxhat
                         - dxhat.sum(axis=2, keepdims=True)
                         - xh * (dxhat * xh).sum(axis=2, keepdims=True))
        x._accumulate(dx.reshape(n, c))

    return Tensor(out_data, parents=(x, gamma, beta), backward=backward, name="group_norm")


# -- parameters -----------------------------------------------------------

def _name_seed(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    sub = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, sub])))


class ParameterStore:
    """Named, shaped weight arrays with gradient slots.

    Construction from the same seed and the same (name, shape, init)
    requests is bit-identical regardless of request order.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.entries: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def create(self, name: str, shape: tuple, init: str = "xavier") -> np.ndarray:
        if name in self.entries:
            return self.entries[name]
        shape = tuple(int(s) for s in shape)
        if init == "xavier":
            fan_in = shape[0] if len(shape) > 1 else shape[0]
            fan_out = shape[1] if len(shape) > 1 else shape[0]
            a = np.sqrt(6.0 / (fan_in + fan_out))
            arr = _name_seed(self.seed, name).uniform(-a, a, size=shape)
        elif init == "zeros":
            arr = np.zeros(shape)
        elif init == "ones":
            arr = np.ones(shape)
        else:
            raise AutodiffError(f"unknown init {init!r}")
        self.entries[name] = arr
        self.grads[name] = np.zeros(shape)
        return arr

    def names(self) -> list[str]:
        return sorted(self.entries)

    def zero_grads(self) -> None:
        for name in self.grads:
            self.grads[name][...] = 0.0

    def leaves(self) -> dict[str, Tensor]:
        """Fresh leaf tensors over the current parameter values."""
        return {name: Tensor(self.entries[name], requires_grad=True, name=name)
                for name in self.entries}

    def harvest(self, leaves: dict[str, Tensor]) -> None:
        """Accumulate leaf gradients from a finished backward pass."""
        for name, leaf in leaves.items():
            if leaf.grad is not None:
                self.grads[name] += leaf.grad

    def clone(self) -> "ParameterStore":
        other = ParameterStore(self.seed)
        other.entries = {k: v.copy() for k, v in self.entries.items()}
        other.grads = {k: v.copy() for k, v in self.grads.items()}
        return other


def grad_check(fn: Callable[[dict[str, Tensor]], Tensor], store: ParameterStore,
               h: float = 1e-5, param_names: list[str] | None = None) -> float:
    """Max relative error between analytic and central-difference grads.

    ``fn`` maps leaf tensors to an output tensor (sum-reduced internally
    when not scalar). Relative error uses |a - n| / max(1e-12, |a| + |n|).
    """
    if h <= 0:
        raise AutodiffError("h must be positive")
    leaves = store.leaves()
    out = fn(leaves)
    if out.data.size != 1:
        out = total(out)
    out.backward(np.ones_like(out.data))
    analytic = {name: (leaves[name].grad if leaves[name].grad is not None
                       else np.zeros_like(leaves[name].data))
                for name in leaves}

    names = param_names if param_names is not None else store.names()
    max_err = 0.0
    for name in names:
        base = store.entries[name]
        flat = base.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = float(total(fn(store.leaves())).data[0, 0])
            flat[idx] = orig - h
            fm = float(total(fn(store.leaves())).data[0, 0])
            flat[idx] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic[name].reshape(-1)[idx]
            err = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            max_err = max(max_err, err)
    return max_err


# -- checkpoint I/O --------------------------------------------------------

def save_checkpoint(store: ParameterStore, path: str) -> None:
    """Write a single-line JSON manifest then a little-endian f32 blob."""
    names = store.names()
    manifest = {"seed": store.seed, "params": []}
    offset = 0
    for name in names:
        arr = store.entries[name]
        manifest["params"].append(
            {"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 4
    blob = b"".join(
        store.entries[name].astype("<f4").tobytes() for name in names)
    with open(path, "wb") as f:
        f.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(blob)


def load_checkpoint(path: str) -> ParameterStore:
    with open(path, "rb") as f:
        header = f.readline()
        blob = f.read()
    manifest = json.loads(header.decode("utf-8"))
    store = ParameterStore(seed=int(manifest.get("seed", 0)))
    for rec in manifest["params"]:
        shape = tuple(rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = blob[rec["offset"]:rec["offset"] + count * 4]
        if len(raw) != count * 4:
            raise AutodiffError(f"checkpoint truncated at parameter {rec['name']}")
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        store.entries[rec["name"]] = arr.copy()
        store.grads[rec["name"]] = np.zeros(shape)
    return store
