"""
Tensor Engine

Dense float64 tensors recorded on a tape, with reverse-mode differentiation.

A Tape owns every node value. Leaves are either parameters (differentiable,
named) or constants. Each primitive application appends one TapeEntry whose
output is a new node. backward() walks the entries in reverse order.

Shape contracts per primitive:
- matmul:           a (..., n, k) @ b (k, m)  or  a (B, n, k) @ b (B, k, m)
- add:              equal shapes, or b a bias row of shape (d,) / (1, d) with d = a.shape[-1]
- sub, mul:         equal shapes
- scale:            any shape, attr factor
- concat:           shapes equal except along attr axis
- slice:            attr axis/start/stop within bounds
- reshape:          attr shape with the same element count
- expand:           a.shape[axis] == 1, repeated attr size times
- sigmoid, tanh:    any shape
- softmax-rows:     over the last axis, optional 0/1 mask of the same shape
- log-softmax-rows: over the last axis
- embedding-lookup: table (V, E) with integer ids of any shape -> ids.shape + (E,)
- gather-rows:      a (..., V) with integer index of shape a.shape[:-1]
- sum:              any shape -> (1,)
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from backend.app.core.exceptions import NonFiniteError, ShapeError, TapeError

logger = logging.getLogger(__name__)


class Tensor:
    """
    Immutable value node on a tape.

    Attributes:
        value: Read-only float64 array
        node_id: Position on the owning tape (-1 when not recorded)
        tape: Owning tape
        name: Parameter name for parameter leaves
    """

    __slots__ = ("value", "node_id", "tape", "name")

    def __init__(self, value: np.ndarray, node_id: int, tape: "Tape", name: Optional[str] = None):
        value.setflags(write=False)
        self.value = value
        self.node_id = node_id
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(node={self.node_id}, shape={self.shape}{label})"


@dataclass
class TapeEntry:
    """One recorded primitive application"""
    kind: str
    inputs: Tuple[int, ...]
    output: int
    attrs: Dict[str, Any]
    value: np.ndarray


class GradientMap(dict):
    """
    Node id -> gradient array, with lookup by parameter name or Tensor.
    """

    def __init__(self, grads: Dict[int, np.ndarray], names: Dict[str, int]):
        super().__init__(grads)
        self.names = dict(names)

    def __getitem__(self, key: Union[int, str, Tensor]) -> np.ndarray:
        if isinstance(key, Tensor):
            key = key.node_id
        elif isinstance(key, str):
            key = self.names[key]
        return super().__getitem__(key)

    def named(self) -> Dict[str, np.ndarray]:
        """Gradients keyed by parameter name"""
        return {name: dict.__getitem__(self, node) for name, node in self.names.items()}


class Primitive(NamedTuple):
    check: Callable[[List[Tuple[int, ...]], Dict[str, Any]], None]
    forward: Callable[[List[np.ndarray], Dict[str, Any]], np.ndarray]
    backward: Callable[[np.ndarray, List[np.ndarray], np.ndarray, Dict[str, Any]], List[Optional[np.ndarray]]]


def _shape_error(kind: str, shapes: Sequence[Tuple[int, ...]], reason: str) -> ShapeError:
    return ShapeError(
        f"{kind}: {reason}",
        details={"primitive": kind, "shapes": [list(s) for s in shapes]}
    )


# ----------------------------------------------------------------------------
# Primitive definitions
# ----------------------------------------------------------------------------

def _check_matmul(shapes, attrs):
    a, b = shapes
    if len(a) < 2 or len(b) < 2:
        raise _shape_error("matmul", shapes, "operands must have rank >= 2")
    if a[-1] != b[-2]:
        raise _shape_error("matmul", shapes, "inner dimensions differ")
    if len(b) > 2 and a[:-2] != b[:-2]:
        raise _shape_error("matmul", shapes, "batch dimensions differ")


def _bwd_matmul(g, inputs, out, attrs):
    a, b = inputs
    if b.ndim == 2:
        ga = g @ b.T
        gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    else:
        ga = g @ np.swapaxes(b, -1, -2)
        gb = np.swapaxes(a, -1, -2) @ g
    return [ga, gb]


def _is_bias_row(a_shape, b_shape) -> bool:
    return b_shape in ((a_shape[-1],), (1, a_shape[-1])) and b_shape != a_shape


def _check_add(shapes, attrs):
    a, b = shapes
    if a != b and not _is_bias_row(a, b):
        raise _shape_error("add", shapes, "shapes differ and second operand is not a bias row")


def _fwd_add(inputs, attrs):
    a, b = inputs
    if a.shape != b.shape:
        return a + b.reshape(-1)
    return a + b


def _bwd_add(g, inputs, out, attrs):
    a, b = inputs
    if a.shape != b.shape:
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0).reshape(b.shape)
        return [g, gb]
    return [g, g]


def _check_same(kind):
    def check(shapes, attrs):
        if shapes[0] != shapes[1]:
            raise _shape_error(kind, shapes, "operand shapes differ")
    return check


def _check_any(shapes, attrs):
    return None


def _check_concat(shapes, attrs):
    axis = attrs["axis"]
    ref = shapes[0]
    rank = len(ref)
    ax = axis % rank
    for s in shapes[1:]:
        if len(s) != rank or any(s[i] != ref[i] for i in range(rank) if i != ax):
            raise _shape_error("concat", shapes, f"shapes differ outside axis {axis}")


def _bwd_concat(g, inputs, out, attrs):
    axis = attrs["axis"]
    bounds = np.cumsum([x.shape[axis] for x in inputs])[:-1]
    return list(np.split(g, bounds, axis=axis))


def _check_slice(shapes, attrs):
    (a,) = shapes
    axis, start, stop = attrs["axis"], attrs["start"], attrs["stop"]
    if not (0 <= start < stop <= a[axis]):
        raise _shape_error("slice", shapes, f"bounds [{start}, {stop}) outside axis {axis}")


def _slicer(rank, axis, start, stop):
    index = [slice(None)] * rank
    index[axis] = slice(start, stop)
    return tuple(index)


def _fwd_slice(inputs, attrs):
    (a,) = inputs
    return a[_slicer(a.ndim, attrs["axis"], attrs["start"], attrs["stop"])].copy()


def _bwd_slice(g, inputs, out, attrs):
    (a,) = inputs
    ga = np.zeros_like(a)
    ga[_slicer(a.ndim, attrs["axis"], attrs["start"], attrs["stop"])] = g
    return [ga]


def _check_reshape(shapes, attrs):
    (a,) = shapes
    if int(np.prod(a)) != int(np.prod(attrs["shape"])):
        raise _shape_error("reshape", [a, tuple(attrs["shape"])], "element counts differ")


def _check_expand(shapes, attrs):
    (a,) = shapes
    if a[attrs["axis"]] != 1:
        raise _shape_error("expand", shapes, f"axis {attrs['axis']} has extent != 1")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(x, mask=None):
    if mask is None:
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    valid = mask > 0
    z = np.where(valid, x, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(valid, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_softmax(shapes, attrs):
    mask = attrs.get("mask")
    if mask is not None and mask.shape != shapes[0]:
        raise _shape_error("softmax-rows", [shapes[0], mask.shape], "mask shape differs")
    if mask is not None and not (mask > 0).any(axis=-1).all():
        raise _shape_error("softmax-rows", shapes, "mask leaves a row empty")


def _bwd_softmax(g, inputs, out, attrs):
    return [out * (g - (g * out).sum(axis=-1, keepdims=True))]


def _bwd_log_softmax(g, inputs, out, attrs):
    return [g - np.exp(out) * g.sum(axis=-1, keepdims=True)]


def _check_lookup(shapes, attrs):
    (table,) = shapes
    ids = attrs["ids"]
    if len(table) != 2:
        raise _shape_error("embedding-lookup", shapes, "table must be (V, E)")
    if ids.size and (ids.min() < 0 or ids.max() >= table[0]):
        raise _shape_error("embedding-lookup", shapes, f"ids outside [0, {table[0]})")


def _bwd_lookup(g, inputs, out, attrs):
    (table,) = inputs
    gt = np.zeros_like(table)
    np.add.at(gt, attrs["ids"].reshape(-1), g.reshape(-1, table.shape[1]))
    return [gt]


def _check_gather(shapes, attrs):
    (a,) = shapes
    index = attrs["index"]
    if index.shape != a[:-1]:
        raise _shape_error("gather-rows", [a, index.shape], "index shape must equal a.shape[:-1]")
    if index.size and (index.min() < 0 or index.max() >= a[-1]):
        raise _shape_error("gather-rows", shapes, "index outside last axis")


def _fwd_gather(inputs, attrs):
    (a,) = inputs
    return np.take_along_axis(a, attrs["index"][..., None], axis=-1)[..., 0]


def _bwd_gather(g, inputs, out, attrs):
    (a,) = inputs
    ga = np.zeros_like(a)
    np.put_along_axis(ga, attrs["index"][..., None], g[..., None], axis=-1)
    return [ga]


PRIMITIVES: Dict[str, Primitive] = {
    "matmul": Primitive(_check_matmul, lambda x, at: x[0] @ x[1], _bwd_matmul),
    "add": Primitive(_check_add, _fwd_add, _bwd_add),
    "sub": Primitive(_check_same("sub"), lambda x, at: x[0] - x[1], lambda g, x, o, at: [g, -g]),
    "mul": Primitive(_check_same("mul"), lambda x, at: x[0] * x[1], lambda g, x, o, at: [g * x[1], g * x[0]]),
    "scale": Primitive(_check_any, lambda x, at: x[0] * at["factor"], lambda g, x, o, at: [g * at["factor"]]),
    "concat": Primitive(_check_concat, lambda x, at: np.concatenate(x, axis=at["axis"]), _bwd_concat),
    "slice": Primitive(_check_slice, _fwd_slice, _bwd_slice),
    "reshape": Primitive(_check_reshape, lambda x, at: x[0].reshape(at["shape"]).copy(),
                         lambda g, x, o, at: [g.reshape(x[0].shape)]),
    "expand": Primitive(_check_expand, lambda x, at: np.repeat(x[0], at["size"], axis=at["axis"]),
                        lambda g, x, o, at: [g.sum(axis=at["axis"], keepdims=True)]),
    "sigmoid": Primitive(_check_any, lambda x, at: _sigmoid(x[0]), lambda g, x, o, at: [g * o * (1.0 - o)]),
    "tanh": Primitive(_check_any, lambda x, at: np.tanh(x[0]), lambda g, x, o, at: [g * (1.0 - o * o)]),
    "softmax-rows": Primitive(_check_softmax, lambda x, at: _softmax(x[0], at.get("mask")), _bwd_softmax),
    "log-softmax-rows": Primitive(_check_any, lambda x, at: _log_softmax(x[0]), _bwd_log_softmax),
    "embedding-lookup": Primitive(_check_lookup, lambda x, at: x[0][at["ids"]], _bwd_lookup),
    "gather-rows": Primitive(_check_gather, _fwd_gather, _bwd_gather),
    "sum": Primitive(_check_any, lambda x, at: np.array([x[0].sum()]),
                     lambda g, x, o, at: [np.full_like(x[0], g[0])]),
}


# ----------------------------------------------------------------------------
# Tape
# ----------------------------------------------------------------------------

@dataclass
class _Node:
    value: np.ndarray
    requires_grad: bool
    entry: Optional[int] = None


class Tape:
    """
    Ordered record of primitive applications.

    A tape is built by one thread; a fresh tape is used per minibatch.
    With record=False values are computed but nothing is kept, which is how
    decoding and finite-difference checks run.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.entries: List[TapeEntry] = []
        self._nodes: List[_Node] = []
        self.parameters: Dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def _new_node(self, value: np.ndarray, requires_grad: bool, entry: Optional[int] = None) -> int:
        if not self.record:
            return -1
        self._nodes.append(_Node(value, requires_grad, entry))
        return len(self._nodes) - 1

    def parameter(self, name: str, array: np.ndarray) -> Tensor:
        """Register a differentiable leaf"""
        value = np.array(array, dtype=np.float64)
        if name in self.parameters:
            raise TapeError(f"parameter '{name}' already on tape", details={"name": name})
        node_id = self._new_node(value, True)
        if self.record:
            self.parameters[name] = node_id
        return Tensor(value, node_id, self, name)

    def constant(self, array: Any) -> Tensor:
        """Register a non-differentiable leaf"""
        value = np.array(array, dtype=np.float64)
        return Tensor(value, self._new_node(value, False), self)

    def value(self, node_id: int) -> np.ndarray:
        return self._nodes[node_id].value

    def apply(self, kind: str, inputs: Sequence[Tensor], **attrs: Any) -> Tensor:
        """
        Apply a primitive and record it.

        Args:
            kind: Primitive name (see PRIMITIVES)
            inputs: Input tensors, all owned by this tape
            **attrs: Primitive attributes (axis, ids, mask, ...)

        Returns:
            Output tensor

        Raises:
            ShapeError: Inputs violate the primitive's contract
            NonFiniteError: Finite inputs produced a non-finite output
        """
        primitive = PRIMITIVES.get(kind)
        if primitive is None:
            raise TapeError(f"unknown primitive '{kind}'", details={"primitive": kind})
        for t in inputs:
            if t.tape is not self:
                raise TapeError(f"{kind}: input {t!r} belongs to another tape")

        values = [t.value for t in inputs]
        primitive.check([v.shape for v in values], attrs)
        out = primitive.forward(values, attrs)
        if not np.isfinite(out).all() and all(np.isfinite(v).all() for v in values):
            raise NonFiniteError(
                f"{kind} produced non-finite values",
                details={"primitive": kind, "shapes": [list(v.shape) for v in values]}
            )

        if not self.record:
            return Tensor(out, -1, self)

        requires_grad = any(self._nodes[t.node_id].requires_grad for t in inputs)
        node_id = self._new_node(out, requires_grad, len(self.entries))
        self.entries.append(TapeEntry(kind, tuple(t.node_id for t in inputs), node_id, attrs, out))
        return Tensor(out, node_id, self)

    def replay(self) -> List[np.ndarray]:
        """Recompute every recorded entry from its recorded inputs"""
        return [
            PRIMITIVES[e.kind].forward([self._nodes[i].value for i in e.inputs], e.attrs)
            for e in self.entries
        ]

    def backward(self, loss: Tensor) -> GradientMap:
        """
        Reverse-mode differentiation of a scalar loss.

        Args:
            loss: Single-element tensor recorded on this tape

        Returns:
            Gradients for every parameter leaf (zeros when unreached)

        Raises:
            TapeError: Loss is not scalar or not on this tape
        """
        if not self.record:
            raise TapeError("backward on a non-recording tape")
        if loss.tape is not self or not (0 <= loss.node_id < len(self._nodes)):
            raise TapeError("loss node is not on this tape", details={"node": loss.node_id})
        if loss.value.size != 1:
            raise TapeError("loss must be scalar-shaped", details={"shape": list(loss.shape)})

        grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.value)}
        last = self._nodes[loss.node_id].entry
        if last is not None:
            for entry in reversed(self.entries[: last + 1]):
                g = grads.pop(entry.output, None)
                if g is None:
                    continue
                inputs = [self._nodes[i].value for i in entry.inputs]
                input_grads = PRIMITIVES[entry.kind].backward(g, inputs, entry.value, entry.attrs)
                for node_id, gi in zip(entry.inputs, input_grads):
                    if gi is None or not self._nodes[node_id].requires_grad:
                        continue
                    if node_id in grads:
                        grads[node_id] = grads[node_id] + gi
                    else:
                        grads[node_id] = gi

        result = {
            node_id: grads.get(node_id, np.zeros_like(self._nodes[node_id].value))
            for node_id in self.parameters.values()
        }
        return GradientMap(result, self.parameters)


def backward(tape: Tape, loss: Tensor) -> GradientMap:
    """Module-level alias of Tape.backward"""
    return tape.backward(loss)


def primitive_forward(tape: Tape, kind: str, inputs: Sequence[Tensor], **attrs: Any) -> Tensor:
    """Module-level alias of Tape.apply"""
    return tape.apply(kind, inputs, **attrs)


# ----------------------------------------------------------------------------
# Convenience wrappers
# ----------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a.tape.apply("matmul", [a, b])


def add(a: Tensor, b: Tensor) -> Tensor:
    return a.tape.apply("add", [a, b])


def sub(a: Tensor, b: Tensor) -> Tensor:
    return a.tape.apply("sub", [a, b])


def mul(a: Tensor, b: Tensor) -> Tensor:
    return a.tape.apply("mul", [a, b])


def scale(a: Tensor, factor: float) -> Tensor:
    return a.tape.apply("scale", [a], factor=float(factor))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if len(parts) == 1:
        return parts[0]
    return parts[0].tape.apply("concat", list(parts), axis=axis)


def slice_(a: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    return a.tape.apply("slice", [a], start=start, stop=stop, axis=axis % a.value.ndim)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return a.tape.apply("reshape", [a], shape=tuple(shape))


def expand(a: Tensor, axis: int, size: int) -> Tensor:
    return a.tape.apply("expand", [a], axis=axis, size=size)


def sigmoid(a: Tensor) -> Tensor:
    return a.tape.apply("sigmoid", [a])


def tanh(a: Tensor) -> Tensor:
    return a.tape.apply("tanh", [a])


def softmax_rows(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    if mask is None:
        return a.tape.apply("softmax-rows", [a])
    return a.tape.apply("softmax-rows", [a], mask=np.asarray(mask, dtype=np.float64))


def log_softmax_rows(a: Tensor) -> Tensor:
    return a.tape.apply("log-softmax-rows", [a])


def embedding_lookup(table: Tensor, ids: Any) -> Tensor:
    return table.tape.apply("embedding-lookup", [table], ids=np.asarray(ids, dtype=np.int64))


def gather_rows(a: Tensor, index: Any) -> Tensor:
    return a.tape.apply("gather-rows", [a], index=np.asarray(index, dtype=np.int64))


def sum_(a: Tensor) -> Tensor:
    return a.tape.apply("sum", [a])
