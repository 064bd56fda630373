"""Define-by-run automatic differentiation over 64-bit numpy arrays.

The engine records an eager computation graph of :class:`Node` objects.  A
"program" is any pure Python callable mapping nodes to nodes; re-running it
with the same inputs rebuilds the same values bit-for-bit because every
primitive delegates to deterministic numpy kernels.

Both differentiation passes construct their results *as graph nodes*: the
reverse sweep emits cotangent nodes and the forward sweep emits tangent
nodes, each assembled from the same primitive set.  Gradients of scalars
that contain ``jvp``/``vjp`` results therefore work to any nesting depth.

Primitives: add, sub, mul, div, neg, exp, log, tanh, sigmoid, power (fixed
exponent), relu, sum, matmul (2-D), broadcast_to, reshape, transpose, slice,
scatter (adjoint of slice), concat, where_mask, stop_gradient.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Node",
    "AutodiffError",
    "ShapeMismatchError",
    "NonFiniteError",
    "constant",
    "as_node",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "power",
    "sqrt",
    "relu",
    "softplus",
    "logsumexp",
    "sum_",
    "mean",
    "matmul",
    "broadcast_to",
    "reshape",
    "transpose",
    "slice_",
    "concat",
    "where_mask",
    "stop_gradient",
    "backward",
    "forward_tangent",
    "jvp",
    "vjp",
    "grad",
    "linearize",
    "linearize_vjp",
    "jacobian",
    "probe_count",
    "reset_probe_count",
    "set_finite_checks",
]


class AutodiffError(RuntimeError):
    """Base class for differentiation-engine failures."""


class ShapeMismatchError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    pass


_CHECK_FINITE = True

# Counts jvp/vjp sweeps.  One sweep pushes a single probe vector per sample
# through the program, so for batched programs this equals probes-per-sample.
_PROBE_COUNT = 0


def set_finite_checks(enabled: bool) -> bool:
    """Toggle per-primitive finiteness validation; returns previous setting."""
    global _CHECK_FINITE
    prev = _CHECK_FINITE
    _CHECK_FINITE = enabled
    return prev


def probe_count() -> int:
    return _PROBE_COUNT


def reset_probe_count() -> None:
    global _PROBE_COUNT
    _PROBE_COUNT = 0


def count_probe() -> None:
    """Record one jvp/vjp sweep performed via the low-level sweep API."""
    global _PROBE_COUNT
    _PROBE_COUNT += 1


class Node:
    """One recorded value: an immutable float64 array plus its provenance."""

    __slots__ = ("value", "op", "parents", "meta")

    def __init__(self, value, op: str, parents: tuple = (), meta=None):
        value = np.asarray(value, dtype=np.float64)
        if _CHECK_FINITE and not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite value produced by op '{op}'")
        self.value = value
        self.op = op
        self.parents = parents
        self.meta = meta

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    # Operator sugar keeps layer code readable.
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)


def constant(x) -> Node:
    """Lift an array-like into a leaf node (copies, so later caller mutation
    of the source cannot corrupt the recorded value)."""
    return Node(np.array(x, dtype=np.float64), "const")


def as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


# --------------------------------------------------------------------------
# Rule tables.  VJP rules: op -> tuple of per-parent fns (node, ct) -> Node.
# JVP rules: op -> tuple of per-parent fns (node, tangent_i) -> Node.
# Entries of None mark non-differentiable parent slots.
# --------------------------------------------------------------------------

_VJP_RULES: dict[str, tuple] = {}
_JVP_RULES: dict[str, tuple] = {}


def _unbroadcast(ct: Node, shape: tuple) -> Node:
    """Reduce a cotangent back to the pre-broadcast operand shape."""
    if ct.value.shape == shape:
        return ct
    extra = ct.value.ndim - len(shape)
    if extra > 0:
        ct = sum_(ct, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and ct.value.shape[i] != 1)
    if axes:
        ct = sum_(ct, axis=axes, keepdims=True)
    if ct.value.shape != shape:
        ct = reshape(ct, shape)
    return ct


# ---- arithmetic ----------------------------------------------------------


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value + b.value, "add", (a, b))


_VJP_RULES["add"] = (
    lambda n, ct: _unbroadcast(ct, n.parents[0].value.shape),
    lambda n, ct: _unbroadcast(ct, n.parents[1].value.shape),
)
_JVP_RULES["add"] = (lambda n, t: t, lambda n, t: t)


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value - b.value, "sub", (a, b))


_VJP_RULES["sub"] = (
    lambda n, ct: _unbroadcast(ct, n.parents[0].value.shape),
    lambda n, ct: _unbroadcast(neg(ct), n.parents[1].value.shape),
)
_JVP_RULES["sub"] = (lambda n, t: t, lambda n, t: neg(t))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value * b.value, "mul", (a, b))


_VJP_RULES["mul"] = (
    lambda n, ct: _unbroadcast(mul(ct, n.parents[1]), n.parents[0].value.shape),
    lambda n, ct: _unbroadcast(mul(ct, n.parents[0]), n.parents[1].value.shape),
)
_JVP_RULES["mul"] = (
    lambda n, t: mul(t, n.parents[1]),
    lambda n, t: mul(n.parents[0], t),
)


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value / b.value, "div", (a, b))


_VJP_RULES["div"] = (
    lambda n, ct: _unbroadcast(div(ct, n.parents[1]), n.parents[0].value.shape),
    lambda n, ct: _unbroadcast(neg(mul(ct, div(n, n.parents[1]))), n.parents[1].value.shape),
)
_JVP_RULES["div"] = (
    lambda n, t: div(t, n.parents[1]),
    lambda n, t: neg(mul(t, div(n, n.parents[1]))),
)


def neg(a) -> Node:
    a = as_node(a)
    return Node(-a.value, "neg", (a,))


_VJP_RULES["neg"] = (lambda n, ct: neg(ct),)
_JVP_RULES["neg"] = (lambda n, t: neg(t),)


# ---- elementwise transcendental ------------------------------------------


def exp(a) -> Node:
    a = as_node(a)
    return Node(np.exp(a.value), "exp", (a,))


_VJP_RULES["exp"] = (lambda n, ct: mul(ct, n),)
_JVP_RULES["exp"] = (lambda n, t: mul(t, n),)


def log(a) -> Node:
    a = as_node(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.log(a.value)
    return Node(value, "log", (a,))


_VJP_RULES["log"] = (lambda n, ct: div(ct, n.parents[0]),)
_JVP_RULES["log"] = (lambda n, t: div(t, n.parents[0]),)


def tanh(a) -> Node:
    a = as_node(a)
    return Node(np.tanh(a.value), "tanh", (a,))


def _tanh_deriv(n: Node) -> Node:
    return sub(constant(1.0), mul(n, n))


_VJP_RULES["tanh"] = (lambda n, ct: mul(ct, _tanh_deriv(n)),)
_JVP_RULES["tanh"] = (lambda n, t: mul(t, _tanh_deriv(n)),)


def sigmoid(a) -> Node:
    a = as_node(a)
    # Stable both tails: tanh form avoids overflow in exp.
    value = 0.5 * (np.tanh(0.5 * a.value) + 1.0)
    return Node(value, "sigmoid", (a,))


def _sigmoid_deriv(n: Node) -> Node:
    return mul(n, sub(constant(1.0), n))


_VJP_RULES["sigmoid"] = (lambda n, ct: mul(ct, _sigmoid_deriv(n)),)
_JVP_RULES["sigmoid"] = (lambda n, t: mul(t, _sigmoid_deriv(n)),)


def power(a, p: float) -> Node:
    a = as_node(a)
    p = float(p)
    return Node(a.value**p, "power", (a,), meta=p)


def _power_deriv(n: Node) -> Node:
    p = n.meta
    return mul(constant(p), power(n.parents[0], p - 1.0))


_VJP_RULES["power"] = (lambda n, ct: mul(ct, _power_deriv(n)),)
_JVP_RULES["power"] = (lambda n, t: mul(t, _power_deriv(n)),)


def sqrt(a) -> Node:
    return power(a, 0.5)


def relu(a) -> Node:
    a = as_node(a)
    return Node(np.maximum(a.value, 0.0), "relu", (a,))


def _relu_mask(n: Node) -> Node:
    return constant((n.parents[0].value > 0.0).astype(np.float64))


_VJP_RULES["relu"] = (lambda n, ct: mul(ct, _relu_mask(n)),)
_JVP_RULES["relu"] = (lambda n, t: mul(t, _relu_mask(n)),)


def softplus(a) -> Node:
    """log(1 + exp(a)), overflow-safe composite."""
    a = as_node(a)
    absa = add(relu(a), relu(neg(a)))
    return add(relu(a), log(add(constant(1.0), exp(neg(absa)))))


def logsumexp(a: Node, axis: int, keepdims: bool = False) -> Node:
    """Shift-stabilized composite; the shift is a stopped constant so the
    derivative is exact."""
    shift = stop_gradient(constant(np.max(a.value, axis=axis, keepdims=True)))
    res = log(sum_(exp(sub(a, shift)), axis=axis, keepdims=True))
    res = add(res, shift)
    if not keepdims:
        res = reshape(res, np.sum(res.value, axis=axis).shape)
    return res


# ---- reductions and structure --------------------------------------------


def sum_(a, axis=None, keepdims: bool = False) -> Node:
    a = as_node(a)
    value = np.sum(a.value, axis=axis, keepdims=keepdims)
    return Node(value, "sum", (a,), meta=(axis, keepdims, a.value.shape))


def _sum_vjp(n: Node, ct: Node) -> Node:
    axis, keepdims, in_shape = n.meta
    if axis is None:
        return broadcast_to(reshape(ct, (1,) * len(in_shape)), in_shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if not keepdims:
        kept = list(ct.value.shape)
        for ax in sorted(ax % len(in_shape) for ax in axes):
            kept.insert(ax, 1)
        ct = reshape(ct, tuple(kept))
    return broadcast_to(ct, in_shape)


_VJP_RULES["sum"] = (_sum_vjp,)
_JVP_RULES["sum"] = (lambda n, t: sum_(t, axis=n.meta[0], keepdims=n.meta[1]),)


def mean(a, axis=None, keepdims: bool = False) -> Node:
    a = as_node(a)
    count = a.value.size if axis is None else np.prod(
        [a.value.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)]
    )
    return div(sum_(a, axis=axis, keepdims=keepdims), constant(float(count)))


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeMismatchError("matmul supports 2-D operands only")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeMismatchError(f"matmul inner dims {a.value.shape} @ {b.value.shape}")
    return Node(a.value @ b.value, "matmul", (a, b))


_VJP_RULES["matmul"] = (
    lambda n, ct: matmul(ct, transpose(n.parents[1])),
    lambda n, ct: matmul(transpose(n.parents[0]), ct),
)
_JVP_RULES["matmul"] = (
    lambda n, t: matmul(t, n.parents[1]),
    lambda n, t: matmul(n.parents[0], t),
)


def broadcast_to(a, shape) -> Node:
    a = as_node(a)
    shape = tuple(shape)
    if a.value.shape == shape:
        return a
    return Node(np.broadcast_to(a.value, shape).copy(), "broadcast", (a,), meta=a.value.shape)


_VJP_RULES["broadcast"] = (lambda n, ct: _unbroadcast(ct, n.meta),)
_JVP_RULES["broadcast"] = (lambda n, t: broadcast_to(t, n.value.shape),)


def reshape(a, shape) -> Node:
    a = as_node(a)
    shape = tuple(int(s) for s in np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    if a.value.shape == shape:
        return a
    return Node(a.value.reshape(shape), "reshape", (a,), meta=a.value.shape)


_VJP_RULES["reshape"] = (lambda n, ct: reshape(ct, n.meta),)
_JVP_RULES["reshape"] = (lambda n, t: reshape(t, n.value.shape),)


def transpose(a, axes=None) -> Node:
    a = as_node(a)
    return Node(np.transpose(a.value, axes), "transpose", (a,), meta=axes)


def _transpose_vjp(n: Node, ct: Node) -> Node:
    axes = n.meta
    inv = None if axes is None else tuple(np.argsort(axes))
    return transpose(ct, inv)


_VJP_RULES["transpose"] = (_transpose_vjp,)
_JVP_RULES["transpose"] = (lambda n, t: transpose(t, n.meta),)


def slice_(a, key) -> Node:
    """Basic slicing only (slices / ints / ellipsis), recorded for scatter."""
    a = as_node(a)
    return Node(a.value[key], "slice", (a,), meta=(key, a.value.shape))


def _scatter(ct: Node, key, shape) -> Node:
    out = np.zeros(shape, dtype=np.float64)
    out[key] = ct.value
    return Node(out, "scatter", (ct,), meta=(key, shape))


_VJP_RULES["slice"] = (lambda n, ct: _scatter(ct, n.meta[0], n.meta[1]),)
_JVP_RULES["slice"] = (lambda n, t: slice_(t, n.meta[0]),)

_VJP_RULES["scatter"] = (lambda n, ct: slice_(ct, n.meta[0]),)
_JVP_RULES["scatter"] = (lambda n, t: _scatter(t, n.meta[0], n.meta[1]),)


def concat(parts: Sequence[Node], axis: int = 0) -> Node:
    parts = tuple(as_node(p) for p in parts)
    value = np.concatenate([p.value for p in parts], axis=axis)
    return Node(value, "concat", parts, meta=axis)


def _concat_vjp_factory(i: int):
    def rule(n: Node, ct: Node) -> Node:
        axis = n.meta
        start = sum(p.value.shape[axis] for p in n.parents[:i])
        size = n.parents[i].value.shape[axis]
        key = [slice(None)] * n.value.ndim
        key[axis] = slice(start, start + size)
        return slice_(ct, tuple(key))

    return rule


def where_mask(mask: np.ndarray, a, b) -> Node:
    """Elementwise select with a constant boolean mask (the branch condition
    carries no gradient)."""
    a, b = as_node(a), as_node(b)
    mask = np.asarray(mask, dtype=bool)
    value = np.where(mask, a.value, b.value)
    return Node(value, "where", (a, b), meta=mask)


_VJP_RULES["where"] = (
    lambda n, ct: _unbroadcast(mul(ct, constant(n.meta.astype(np.float64))), n.parents[0].value.shape),
    lambda n, ct: _unbroadcast(mul(ct, constant((~n.meta).astype(np.float64))), n.parents[1].value.shape),
)
_JVP_RULES["where"] = (
    lambda n, t: mul(t, constant(n.meta.astype(np.float64))),
    lambda n, t: mul(t, constant((~n.meta).astype(np.float64))),
)


def stop_gradient(a) -> Node:
    a = as_node(a)
    return Node(a.value, "stop_gradient", (a,))


_VJP_RULES["stop_gradient"] = (None,)
_JVP_RULES["stop_gradient"] = (None,)

_VJP_RULES["const"] = ()
_JVP_RULES["const"] = ()


# --------------------------------------------------------------------------
# Graph traversal and the two differentiation sweeps.
# --------------------------------------------------------------------------


def _topo_order(root: Node) -> list[Node]:
    """Parents-before-children ordering of the ancestors of ``root``."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Node, seed: Node, wrt: Sequence[Node]) -> list[Node | None]:
    """Reverse sweep: cotangent of each ``wrt`` node given the output seed.

    The returned cotangents are graph nodes, so any scalar formed from them
    remains differentiable.  Entries are None when the output does not
    depend on that node.
    """
    if seed.value.shape != output.value.shape:
        raise ShapeMismatchError(
            f"cotangent shape {seed.value.shape} != output shape {output.value.shape}"
        )
    order = _topo_order(output)
    wrt_ids = {id(w) for w in wrt}
    # Active nodes: those through which a wrt leaf can influence the output.
    active: set[int] = set()
    for node in order:
        if id(node) in wrt_ids or any(id(p) in active for p in node.parents):
            active.add(id(node))
    cotangents: dict[int, Node] = {id(output): seed}
    for node in reversed(order):
        ct = cotangents.get(id(node))
        if ct is None or id(node) not in active:
            continue
        if node.op == "concat":
            rules = tuple(_concat_vjp_factory(i) for i in range(len(node.parents)))
        else:
            rules = _VJP_RULES[node.op]
        for parent, rule in zip(node.parents, rules):
            if rule is None or id(parent) not in active:
                continue
            contrib = rule(node, ct)
            prev = cotangents.get(id(parent))
            cotangents[id(parent)] = contrib if prev is None else add(prev, contrib)
    return [cotangents.get(id(w)) for w in wrt]


def forward_tangent(output: Node, seeds: dict[int, Node]) -> Node | None:
    """Forward sweep: tangent of ``output`` given tangents for some leaves.

    ``seeds`` maps id(node) -> tangent node.  Returns None when the output
    does not depend on any seeded node.
    """
    order = _topo_order(output)
    tangents: dict[int, Node] = dict(seeds)
    for node in order:
        if id(node) in tangents:
            continue
        total: Node | None = None
        if node.op == "concat":
            parts = []
            any_t = False
            for p in node.parents:
                t = tangents.get(id(p))
                if t is None:
                    parts.append(constant(np.zeros(p.value.shape)))
                else:
                    any_t = True
                    parts.append(t)
            if any_t:
                total = concat(parts, axis=node.meta)
        else:
            rules = _JVP_RULES[node.op]
            for parent, rule in zip(node.parents, rules):
                t = tangents.get(id(parent))
                if t is None or rule is None:
                    continue
                contrib = rule(node, t)
                total = contrib if total is None else add(total, contrib)
        if total is not None:
            tangents[id(node)] = total
    return tangents.get(id(output))


# --------------------------------------------------------------------------
# Public entry points.  Node in -> Node out; arrays are lifted and unpacked,
# so the same functions serve both test oracles and nested loss building.
# --------------------------------------------------------------------------


def _run_program(fn: Callable, x: Node) -> Node:
    out = fn(x)
    if not isinstance(out, Node):
        raise AutodiffError("program must return a Node")
    return out


def jvp(fn: Callable[[Node], Node], x, tangent):
    """Forward-mode product: returns (output, J @ tangent)."""
    global _PROBE_COUNT
    unpack = not isinstance(x, Node)
    xn, tn = as_node(x), as_node(tangent)
    if xn.value.shape != tn.value.shape:
        raise ShapeMismatchError(
            f"tangent shape {tn.value.shape} != input shape {xn.value.shape}"
        )
    out = _run_program(fn, xn)
    _PROBE_COUNT += 1
    jt = forward_tangent(out, {id(xn): tn})
    if jt is None:
        jt = constant(np.zeros(out.value.shape))
    if unpack:
        return out.value.copy(), jt.value.copy()
    return out, jt


def vjp(fn: Callable[[Node], Node], x, cotangent):
    """Reverse-mode product: returns (output, cotangent^T @ J)."""
    global _PROBE_COUNT
    unpack = not isinstance(x, Node)
    xn, cn = as_node(x), as_node(cotangent)
    out = _run_program(fn, xn)
    if cn.value.shape != out.value.shape:
        raise ShapeMismatchError(
            f"cotangent shape {cn.value.shape} != output shape {out.value.shape}"
        )
    _PROBE_COUNT += 1
    (gc,) = backward(out, cn, [xn])
    if gc is None:
        gc = constant(np.zeros(xn.value.shape))
    if unpack:
        return out.value.copy(), gc.value.copy()
    return out, gc


def grad(fn: Callable[[Node], Node], x) -> np.ndarray:
    """Gradient of a scalar-output program.  The program may itself contain
    jvp/vjp results; the reverse sweep differentiates through them."""
    unpack = not isinstance(x, Node)
    xn = as_node(x)
    out = _run_program(fn, xn)
    if out.value.size != 1:
        raise AutodiffError(f"grad requires scalar output, got shape {out.value.shape}")
    (g,) = backward(out, constant(np.ones(out.value.shape)), [xn])
    if g is None:
        g = constant(np.zeros(xn.value.shape))
    gv = g.value
    if not np.all(np.isfinite(gv)):
        bad = int(np.flatnonzero(~np.isfinite(gv.ravel()))[0])
        raise NonFiniteError(f"non-finite gradient, first occurrence at parameter index {bad}")
    if unpack:
        return gv.copy()
    return g


def value_and_grad(fn: Callable[[Node], Node], x) -> tuple[float, np.ndarray]:
    """Scalar program value together with its gradient, one reverse pass."""
    xn = as_node(x)
    out = _run_program(fn, xn)
    if out.value.size != 1:
        raise AutodiffError(f"grad requires scalar output, got shape {out.value.shape}")
    (g,) = backward(out, constant(np.ones(out.value.shape)), [xn])
    gv = g.value if g is not None else np.zeros(xn.value.shape)
    if not np.all(np.isfinite(gv)):
        bad = int(np.flatnonzero(~np.isfinite(gv.ravel()))[0])
        raise NonFiniteError(f"non-finite gradient, first occurrence at parameter index {bad}")
    return float(out.value), gv.copy()


def linearize(fn: Callable[[Node], Node], x):
    """Run the program once; return (output, push) where push(tangent)
    performs one forward sweep over the shared primal graph."""
    xn = as_node(x)
    out = _run_program(fn, xn)

    def push(tangent) -> Node:
        global _PROBE_COUNT
        tn = as_node(tangent)
        if tn.value.shape != xn.value.shape:
            raise ShapeMismatchError(
                f"tangent shape {tn.value.shape} != input shape {xn.value.shape}"
            )
        _PROBE_COUNT += 1
        jt = forward_tangent(out, {id(xn): tn})
        return jt if jt is not None else constant(np.zeros(out.value.shape))

    return out, push


def linearize_vjp(fn: Callable[[Node], Node], x):
    """Run the program once; return (output, pull) where pull(cotangent)
    performs one reverse sweep over the shared primal graph."""
    xn = as_node(x)
    out = _run_program(fn, xn)

    def pull(cotangent) -> Node:
        global _PROBE_COUNT
        cn = as_node(cotangent)
        if cn.value.shape != out.value.shape:
            raise ShapeMismatchError(
                f"cotangent shape {cn.value.shape} != output shape {out.value.shape}"
            )
        _PROBE_COUNT += 1
        (gc,) = backward(out, cn, [xn])
        return gc if gc is not None else constant(np.zeros(xn.value.shape))

    return out, pull


def jacobian(fn: Callable[[Node], Node], x) -> np.ndarray:
    """Dense Jacobian assembled column-by-column from one-hot jvps."""
    x = np.asarray(x, dtype=np.float64)
    _, push = linearize(fn, x)
    cols = []
    for i in range(x.size):
        e = np.zeros(x.shape)
        e.ravel()[i] = 1.0
        cols.append(np.ravel(push(e).value))
    return np.stack(cols, axis=1)
