"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is deliberately small: elementwise arithmetic, per-position
channel mixing, axis softmax, bilinear/trilinear resampling with zero
padding, reductions, concatenation and shape moves. Tensors are immutable
after construction; gradients live in separate buffers filled by
``backward``. A ``Tape`` is the topological ordering of the recorded graph
reachable from one scalar root.
"""
import json
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels


class Tensor:
    """Immutable n-d array of float64 with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._vjp: Optional[Callable] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # convenience arithmetic; scalars are treated as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self, axis=None):
        return reduce("sum", self, axis)

    def mean(self, axis=None):
        return reduce("mean", self, axis)

    def reshape(self, shape):
        return reshape(self, shape)


def from_op(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Wrap an op result. vjp(grad_out) returns one grad (or None) per parent."""
    out = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=np.float64)
    arr.setflags(write=False)
    out.data = arr
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Topologically ordered view of the graph below one root node.

    Every node's inputs precede it in ``nodes``; only gradient-carrying
    nodes are recorded.
    """

    def __init__(self, nodes):
        self.nodes = list(nodes)

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def verify(self) -> bool:
        pos = {id(n): i for i, n in enumerate(self.nodes)}
        for i, n in enumerate(self.nodes):
            for p in n._parents:
                if p.requires_grad and pos.get(id(p), -1) >= i:
                    return False
        return True


def backward(root: Tensor) -> None:
    """Fill ``grad`` on every requires_grad tensor reachable from a scalar root."""
    if root.data.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
    if not root.requires_grad:
        raise ValueError("backward root does not require grad")
    tape = Tape.trace(root)
    for node in tape.nodes:
        node.grad = np.zeros_like(node.data)
    root.grad = np.ones_like(root.data)
    for node in reversed(tape.nodes):
        if node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            parent.grad += g


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    if np.isscalar(b) or isinstance(b, (int, float)):
        return from_op(a.data + float(b), (a,), lambda g: (g,))
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return from_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    if np.isscalar(b) or isinstance(b, (int, float)):
        return from_op(a.data - float(b), (a,), lambda g: (g,))
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return from_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    if np.isscalar(b) or isinstance(b, (int, float)):
        s = float(b)
        return from_op(a.data * s, (a,), lambda g: (g * s,))
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def vjp(g):
        ga = g * b.data if a.requires_grad else None
        gb = g * a.data if b.requires_grad else None
        return ga, gb

    return from_op(a.data * b.data, (a, b), vjp)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0  # subgradient at 0 is 0
    return from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def log(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data <= 0):
        raise ValueError("log requires strictly positive inputs")
    return from_op(np.log(x.data), (x,), lambda g: (g / x.data,))


def exp(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out_data = np.exp(x.data)
    return from_op(out_data, (x,), lambda g: (g * out_data,))


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    # stable split: 1/(1+e^-x) for x>=0, e^x/(1+e^x) otherwise
    pos = x.data >= 0
    ex = np.exp(np.where(pos, -x.data, x.data))
    out_data = np.where(pos, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return from_op(out_data, (x,), lambda g: (g * out_data * (1.0 - out_data),))


def maximum(x: Tensor, scalar: float) -> Tensor:
    """max(x, scalar); gradient is 1 strictly above the threshold, else 0."""
    x = _as_tensor(x)
    s = float(scalar)
    mask = x.data > s
    return from_op(np.where(mask, x.data, s), (x,), lambda g: (g * mask,))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "log": log,
    "exp": exp,
    "sigmoid": sigmoid,
    "max": maximum,
}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Dispatch by op kind: add/sub/mul/max take two operands, the rest one."""
    if kind not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise op {kind!r}")
    fn = _ELEMENTWISE[kind]
    if kind in ("add", "sub", "mul", "max"):
        if b is None:
            raise ValueError(f"{kind} needs a second operand")
        return fn(a, b)
    if b is not None:
        raise ValueError(f"{kind} takes a single operand")
    return fn(a)


# ---------------------------------------------------------------------------
# structured ops


def channel_mix(x: Tensor, weight: Tensor, bias: Tensor, relu_after: bool = False) -> Tensor:
    """Per-position linear map over the leading channel axis.

    x: [C_in, *spatial], weight: [C_out, C_in], bias: [C_out].
    """
    x = _as_tensor(x)
    weight = _as_tensor(weight)
    bias = _as_tensor(bias)
    if weight.ndim != 2 or x.ndim < 1:
        raise ValueError("channel_mix expects weight [C_out, C_in] and x [C_in, ...]")
    c_out, c_in = weight.shape
    if x.shape[0] != c_in:
        raise ValueError(f"channel_mix: x has {x.shape[0]} channels, weight expects {c_in}")
    if bias.shape != (c_out,):
        raise ValueError(f"channel_mix: bias shape {bias.shape} != ({c_out},)")
    spatial = x.shape[1:]
    x2 = x.data.reshape(c_in, -1)
    out2 = weight.data @ x2 + bias.data[:, None]

    def vjp(g):
        g2 = g.reshape(c_out, -1)
        gx = (weight.data.T @ g2).reshape(x.shape) if x.requires_grad else None
        gw = g2 @ x2.T if weight.requires_grad else None
        gb = g2.sum(axis=1) if bias.requires_grad else None
        return gx, gw, gb

    out = from_op(out2.reshape((c_out,) + spatial), (x, weight, bias), vjp)
    if relu_after:
        out = relu(out)
    return out


def softmax_axis(x: Tensor, axis: int) -> Tensor:
    x = _as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - dot),)

    return from_op(p, (x,), vjp)


def bilinear_gather(src: Tensor, us: np.ndarray, vs: np.ndarray) -> Tensor:
    """Batched bilinear sampling of src [C,H,W] at points (us, vs) -> [C,N]."""
    src = _as_tensor(src)
    if src.ndim != 3:
        raise ValueError(f"bilinear_gather expects [C,H,W], got {src.shape}")
    us = np.ascontiguousarray(us, dtype=np.float64)
    vs = np.ascontiguousarray(vs, dtype=np.float64)
    _, h, w = src.shape
    out = kernels.bilinear_gather(src.data, us, vs)

    def vjp(g):
        return (kernels.bilinear_scatter(np.ascontiguousarray(g), us, vs, h, w),)

    return from_op(out, (src,), vjp)


def bilinear_sample2d(src: Tensor, u: float, v: float) -> Tensor:
    """Single-point bilinear sample with zero padding outside the grid."""
    out = bilinear_gather(src, np.array([float(u)]), np.array([float(v)]))
    return reshape(out, (src.shape[0],))


def trilinear_gather(src: Tensor, ds: np.ndarray, vs: np.ndarray, us: np.ndarray) -> Tensor:
    """Batched trilinear sampling of src [C,D,H,W] at (d,v,u) points -> [C,N]."""
    src = _as_tensor(src)
    if src.ndim != 4:
        raise ValueError(f"trilinear_gather expects [C,D,H,W], got {src.shape}")
    ds = np.ascontiguousarray(ds, dtype=np.float64)
    vs = np.ascontiguousarray(vs, dtype=np.float64)
    us = np.ascontiguousarray(us, dtype=np.float64)
    _, nd, h, w = src.shape
    out = kernels.trilinear_gather(src.data, ds, vs, us)

    def vjp(g):
        return (kernels.trilinear_scatter(np.ascontiguousarray(g), ds, vs, us, nd, h, w),)

    return from_op(out, (src,), vjp)


def trilinear_sample3d(src: Tensor, d: float, v: float, u: float) -> Tensor:
    out = trilinear_gather(src, np.array([float(d)]), np.array([float(v)]),
                           np.array([float(u)]))
    return reshape(out, (src.shape[0],))


def reduce(kind: str, x: Tensor, axis=None) -> Tensor:
    x = _as_tensor(x)
    if kind == "sum":
        out = x.data.sum(axis=axis)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, x.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    elif kind == "mean":
        out = x.data.mean(axis=axis)
        n = x.data.size if axis is None else x.shape[axis]

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g / n, x.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g / n, axis), x.shape).copy(),)

    elif kind == "max":
        out = x.data.max(axis=axis)

        def vjp(g):
            # subgradient: all mass on the first argmax
            if axis is None:
                gx = np.zeros_like(x.data)
                gx.flat[int(np.argmax(x.data))] = float(g)
                return (gx,)
            gx = np.zeros_like(x.data)
            idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
            np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis)
            return (gx,)

    else:
        raise ValueError(f"unknown reduce kind {kind!r}")
    return from_op(out, (x,), vjp)


def concat_axis(xs: Sequence[Tensor], axis: int) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("concat_axis needs at least one tensor")
    out = np.concatenate([x.data for x in xs], axis=axis)
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return from_op(out, xs, vjp)


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)
    return from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(axes)
    inv = np.argsort(axes)
    return from_op(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def broadcast_to(x: Tensor, shape) -> Tensor:
    """Broadcast against leading axes / size-1 axes; backward sums them out."""
    x = _as_tensor(x)
    shape = tuple(shape)
    out = np.broadcast_to(x.data, shape)
    lead = len(shape) - x.ndim
    expanded = tuple(range(lead)) + tuple(
        lead + i for i, s in enumerate(x.shape) if s == 1 and shape[lead + i] != 1
    )

    def vjp(g):
        gx = g.sum(axis=expanded) if expanded else g
        return (gx.reshape(x.shape),)

    return from_op(out.copy(), (x,), vjp)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return from_op(x.data[idx].copy(), (x,), vjp)


def take_axis(x: Tensor, axis: int, indices: np.ndarray) -> Tensor:
    x = _as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    out = np.take(x.data, indices, axis=axis)

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, tuple(indices if a == axis else slice(None) for a in range(x.ndim)), g)
        return (gx,)

    return from_op(out, (x,), vjp)


# ---------------------------------------------------------------------------
# gradient checking


def gradcheck(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5,
              max_coords: Optional[int] = None, seed: int = 0) -> float:
    """Worst relative error between analytic gradient and central differences.

    f must map one tensor to a scalar tensor. With ``max_coords`` set, a
    seeded subset of coordinates is probed instead of all of them.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(base, requires_grad=True)
    y = f(leaf)
    if y.data.size != 1:
        raise ValueError("gradcheck target must be scalar-valued")
    if not np.isfinite(y.data).all():
        raise ValueError("gradcheck: non-finite function value")
    backward(y)
    analytic = leaf.grad
    if analytic is None or not np.isfinite(analytic).all():
        raise ValueError("gradcheck: non-finite analytic gradient")

    n = base.size
    if max_coords is not None and max_coords < n:
        rng = np.random.default_rng(seed)
        coords = rng.choice(n, size=max_coords, replace=False)
    else:
        coords = np.arange(n)

    worst = 0.0
    flat = base.reshape(-1)
    for idx in coords:
        dp = flat.copy()
        dm = flat.copy()
        dp[idx] += eps
        dm[idx] -= eps
        fp = f(Tensor(dp.reshape(base.shape))).item()
        fm = f(Tensor(dm.reshape(base.shape))).item()
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("gradcheck: non-finite perturbed value")
        num = (fp - fm) / (2.0 * eps)
        a = analytic.reshape(-1)[idx]
        rel = abs(a - num) / max(abs(a), abs(num), 1e-2)
        worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# .tsr file format: one JSON header line, then raw little-endian float64


def save_tsr(path, tensor) -> None:
    arr = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor, dtype=np.float64)
    header = json.dumps({"dtype": "f64", "shape": list(arr.shape)},
                        separators=(",", ":"), sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_tsr(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("dtype") != "f64":
            raise ValueError(f"unsupported tsr dtype {header.get('dtype')!r}")
        shape = tuple(header["shape"])
        payload = fh.read()
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    expected = int(np.prod(shape)) if shape else 1
    if arr.size != expected:
        raise ValueError(f"tsr payload has {arr.size} values, header says {expected}")
    return arr.reshape(shape)
