"""
Static reverse-mode computation graph.

A :class:`Tape` is built once (inputs, parameters and operations are appended
in topological order) and then replayed: :meth:`Tape.run` evaluates every node
for a set of input feeds and :meth:`Tape.backward` propagates the gradient of
a scalar node back to the trainable parameters.

Only the operations the hourglass networks and the task energies need are
registered in :data:`OPS`.
"""
import logging
from dataclasses import dataclass, field
from math import prod
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from autodiff import kernels
from core.errors import GraphError, NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]


@dataclass
class Node:
    """One operation record on the tape."""
    id: int
    op: str
    inputs: Tuple[int, ...]
    attrs: Dict[str, Any]
    shape: Shape
    name: Optional[str] = None
    requires_grad: bool = False
    value: Optional[np.ndarray] = field(default=None, repr=False)


class OpRule(NamedTuple):
    """Shape inference, forward and backward rule of one op kind."""
    shape: Callable[[List[Shape], Dict[str, Any]], Shape]
    forward: Callable[[List[np.ndarray], Dict[str, Any]], np.ndarray]
    # (grad, inputs, output, attrs, needs) -> one gradient (or None) per input
    backward: Callable[..., List[Optional[np.ndarray]]]


def _same_shape(shapes: List[Shape], attrs: Dict[str, Any]) -> Shape:
    first = shapes[0]
    for other in shapes[1:]:
        if other != first:
            axis = next(
                (i for i, (a, b) in enumerate(zip(first, other)) if a != b),
                min(len(first), len(other)),
            )
            raise ShapeMismatchError(
                f"Elementwise operands differ: {first} vs {other}",
                field=f"axis {axis}", expected=first, actual=other,
            )
    return first


def _bias_shape(shapes: List[Shape], attrs: Dict[str, Any]) -> Shape:
    x, bias = shapes
    if bias != (x[-1],):
        raise ShapeMismatchError(
            f"Bias of shape {bias} does not match {x[-1]} channels",
            field="channels", expected=(x[-1],), actual=bias,
        )
    return x


def _concat_shape(shapes: List[Shape], attrs: Dict[str, Any]) -> Shape:
    head = shapes[0][:-1]
    for other in shapes[1:]:
        if other[:-1] != head:
            raise ShapeMismatchError(
                f"Cannot concatenate {shapes[0]} with {other}",
                field="non-channel extents", expected=head, actual=other[:-1],
            )
    return head + (sum(s[-1] for s in shapes),)


def _reshape_shape(shapes: List[Shape], attrs: Dict[str, Any]) -> Shape:
    target = tuple(attrs["shape"])
    if prod(target) != prod(shapes[0]):
        raise ShapeMismatchError(
            f"Cannot reshape {shapes[0]} to {target}",
            field="element count", expected=prod(shapes[0]), actual=prod(target),
        )
    return target


def _upsample_shape(shapes: List[Shape], attrs: Dict[str, Any]) -> Shape:
    x = shapes[0]
    factors = attrs["factors"]
    return tuple(n * f for n, f in zip(x, factors)) + x[len(factors):]


def _block_mean_shape(shapes: List[Shape], attrs: Dict[str, Any]) -> Shape:
    x = shapes[0]
    factor = attrs["factor"]
    for axis, label in ((0, "height"), (1, "width")):
        if x[axis] % factor:
            raise ShapeMismatchError(
                f"Extent {x[axis]} is not divisible by factor {factor}",
                field=label, expected=f"multiple of {factor}", actual=x[axis],
            )
    return (x[0] // factor, x[1] // factor) + x[2:]


def _conv_backward(grad, inputs, output, attrs, needs):
    x, kernel = inputs
    return list(kernels.conv_backward(
        grad, x, kernel, attrs["stride"], attrs["pad"],
        need_input=needs[0], need_kernel=needs[1],
    ))


def _concat_backward(grad, inputs, output, attrs, needs):
    grads, start = [], 0
    for x in inputs:
        stop = start + x.shape[-1]
        grads.append(grad[..., start:stop])
        start = stop
    return grads


OPS: Dict[str, OpRule] = {
    "conv": OpRule(
        shape=lambda s, a: kernels.conv_output_shape(s[0], s[1], a["stride"], a["pad"]),
        forward=lambda v, a: kernels.conv_forward(v[0], v[1], a["stride"], a["pad"]),
        backward=_conv_backward,
    ),
    "bias_add": OpRule(
        shape=_bias_shape,
        forward=lambda v, a: v[0] + v[1],
        backward=lambda g, v, y, a, n: [g, g.reshape(-1, g.shape[-1]).sum(axis=0)],
    ),
    "leaky_relu": OpRule(
        shape=lambda s, a: s[0],
        forward=lambda v, a: kernels.leaky_relu(v[0], a["slope"]),
        backward=lambda g, v, y, a, n: [kernels.leaky_relu_backward(g, v[0], a["slope"])],
    ),
    "sigmoid": OpRule(
        shape=lambda s, a: s[0],
        forward=lambda v, a: kernels.sigmoid(v[0]),
        backward=lambda g, v, y, a, n: [kernels.sigmoid_backward(g, y)],
    ),
    "upsample": OpRule(
        shape=_upsample_shape,
        forward=lambda v, a: kernels.upsample(v[0], a["factors"], a["mode"]),
        backward=lambda g, v, y, a, n: [kernels.upsample_backward(g, v[0].shape, a["factors"], a["mode"])],
    ),
    "concat": OpRule(
        shape=_concat_shape,
        forward=lambda v, a: np.concatenate(v, axis=-1),
        backward=_concat_backward,
    ),
    "reshape": OpRule(
        shape=_reshape_shape,
        forward=lambda v, a: v[0].reshape(a["shape"]),
        backward=lambda g, v, y, a, n: [g.reshape(v[0].shape)],
    ),
    "add": OpRule(
        shape=_same_shape,
        forward=lambda v, a: v[0] + v[1],
        backward=lambda g, v, y, a, n: [g, g],
    ),
    "sub": OpRule(
        shape=_same_shape,
        forward=lambda v, a: v[0] - v[1],
        backward=lambda g, v, y, a, n: [g, -g],
    ),
    "mul": OpRule(
        shape=_same_shape,
        forward=lambda v, a: v[0] * v[1],
        backward=lambda g, v, y, a, n: [g * v[1], g * v[0]],
    ),
    "square": OpRule(
        shape=lambda s, a: s[0],
        forward=lambda v, a: v[0] * v[0],
        backward=lambda g, v, y, a, n: [2.0 * g * v[0]],
    ),
    "sum": OpRule(
        shape=lambda s, a: (),
        forward=lambda v, a: np.asarray(v[0].sum(), dtype=np.float64),
        backward=lambda g, v, y, a, n: [np.full(v[0].shape, float(g))],
    ),
    "mean": OpRule(
        shape=lambda s, a: (),
        forward=lambda v, a: np.asarray(v[0].mean(), dtype=np.float64),
        backward=lambda g, v, y, a, n: [np.full(v[0].shape, float(g) / v[0].size)],
    ),
    "scale": OpRule(
        shape=lambda s, a: s[0],
        forward=lambda v, a: v[0] * a["factor"],
        backward=lambda g, v, y, a, n: [g * a["factor"]],
    ),
    "block_mean": OpRule(
        shape=_block_mean_shape,
        forward=lambda v, a: kernels.block_mean(v[0], a["factor"]),
        backward=lambda g, v, y, a, n: [kernels.block_mean_backward(g, a["factor"])],
    ),
}

_LEAF_OPS = ("input", "param")


class Tape:
    """
    Append-only graph of :class:`Node` records with cached forward values.

    Node ids are list positions, and every op only references ids that
    already exist, so list order is a topological order.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.inputs: Dict[str, int] = {}
        self.params: Dict[str, int] = {}
        self.trainable: set = set()
        self._param_values: Dict[int, np.ndarray] = {}

    # -- construction -------------------------------------------------------

    def _append(self, op: str, inputs: Sequence[int], attrs: Dict[str, Any],
                shape: Shape, name: Optional[str], requires_grad: bool) -> int:
        node = Node(
            id=len(self.nodes), op=op, inputs=tuple(inputs), attrs=attrs,
            shape=tuple(int(n) for n in shape), name=name, requires_grad=requires_grad,
        )
        self.nodes.append(node)
        return node.id

    def input(self, name: str, shape: Sequence[int]) -> int:
        """Register a placeholder whose value is supplied to :meth:`run`."""
        if name in self.inputs:
            raise GraphError(f"Input '{name}' already defined", field=name)
        node_id = self._append("input", (), {}, tuple(shape), name, False)
        self.inputs[name] = node_id
        return node_id

    def param(self, name: str, value: np.ndarray, trainable: bool = True) -> int:
        """Register a parameter holding ``value`` (copied to float64)."""
        if name in self.params:
            raise GraphError(f"Parameter '{name}' already defined", field=name)
        array = np.array(value, dtype=np.float64)
        node_id = self._append("param", (), {}, array.shape, name, trainable)
        self.params[name] = node_id
        self._param_values[node_id] = array
        if trainable:
            self.trainable.add(node_id)
        return node_id

    def apply(self, op: str, *inputs: int, name: Optional[str] = None, **attrs) -> int:
        """Append an operation on existing nodes and return its id."""
        rule = OPS.get(op)
        if rule is None:
            raise GraphError(f"Unknown op '{op}'", field=op)
        for node_id in inputs:
            if not 0 <= node_id < len(self.nodes):
                raise GraphError(f"Op '{op}' references unknown node {node_id}", field=op)
        shape = rule.shape([self.nodes[i].shape for i in inputs], attrs)
        requires_grad = any(self.nodes[i].requires_grad for i in inputs)
        return self._append(op, inputs, attrs, shape, name, requires_grad)

    # Convenience wrappers used by the network builder and objectives.
    def conv(self, x: int, kernel: int, stride=1, pad=0, name: Optional[str] = None) -> int:
        spatial = len(self.nodes[x].shape) - 1
        stride = kernels._per_axis(stride, spatial, "stride")
        pad = kernels._per_axis(pad, spatial, "pad")
        return self.apply("conv", x, kernel, stride=stride, pad=pad, name=name)

    def leaky_relu(self, x: int, slope: float) -> int:
        return self.apply("leaky_relu", x, slope=float(slope))

    def upsample(self, x: int, factors: Sequence[int], mode: str = "nearest") -> int:
        if mode not in kernels.UPSAMPLE_MODES:
            raise GraphError(f"Unknown upsample mode '{mode}'", field="mode")
        return self.apply("upsample", x, factors=tuple(int(f) for f in factors), mode=mode)

    # -- parameters ---------------------------------------------------------

    def shape(self, node_id: int) -> Shape:
        return self.nodes[node_id].shape

    def get_param(self, name: str) -> np.ndarray:
        return self._param_values[self.params[name]]

    def set_param(self, name: str, value: np.ndarray) -> None:
        node_id = self.params[name]
        array = np.array(value, dtype=np.float64)
        if array.shape != self.nodes[node_id].shape:
            raise ShapeMismatchError(
                f"Parameter '{name}' has shape {self.nodes[node_id].shape}, got {array.shape}",
                field=name, expected=self.nodes[node_id].shape, actual=array.shape,
            )
        self._param_values[node_id] = array

    def trainable_params(self) -> Dict[str, np.ndarray]:
        """Current values of every trainable parameter, in build order."""
        return {name: self._param_values[i] for name, i in self.params.items() if i in self.trainable}

    def load_params(self, values: Dict[str, np.ndarray]) -> None:
        for name, value in values.items():
            self.set_param(name, value)

    @property
    def parameter_count(self) -> int:
        return sum(self._param_values[i].size for i in self.trainable)

    # -- evaluation ---------------------------------------------------------

    def run(self, feeds: Dict[str, np.ndarray], until: Optional[int] = None) -> None:
        """
        Evaluate every node in order.

        Args:
            feeds: Value per input name
            until: Stop after this node id (only its prefix needs feeds)

        Raises:
            ShapeMismatchError: a feed has the wrong shape
            NonFiniteError: a feed or an op produced NaN/Inf
        """
        last = len(self.nodes) - 1 if until is None else until
        needed = {name for name, i in self.inputs.items() if i <= last}
        missing = needed - set(feeds)
        if missing:
            raise GraphError(f"Missing feeds for inputs: {sorted(missing)}", field=sorted(missing)[0])
        for node in self.nodes[:last + 1]:
            if node.op == "input":
                value = np.asarray(feeds[node.name], dtype=np.float64)
                if value.shape != node.shape:
                    raise ShapeMismatchError(
                        f"Input '{node.name}' expects shape {node.shape}, got {value.shape}",
                        field=node.name, expected=node.shape, actual=value.shape,
                    )
            elif node.op == "param":
                value = self._param_values[node.id]
            else:
                args = [self.nodes[i].value for i in node.inputs]
                value = OPS[node.op].forward(args, node.attrs)
            if not np.all(np.isfinite(value)):
                raise NonFiniteError(
                    f"Non-finite values produced by '{node.op}' node {node.id}",
                    field=node.name or node.op,
                )
            node.value = value

    def value(self, node_id: int) -> np.ndarray:
        value = self.nodes[node_id].value
        if value is None:
            raise GraphError(f"Node {node_id} has not been evaluated; call run() first", field=str(node_id))
        return value

    def backward(self, loss: int) -> Dict[str, np.ndarray]:
        """
        Gradient of a scalar node with respect to every trainable parameter.

        Nodes are visited in reverse topological order and each node's
        inputs are accumulated left to right, so the summation order is fixed.

        Returns:
            dict: parameter name -> gradient array (zeros if unreachable)
        """
        loss_node = self.nodes[loss]
        if loss_node.shape != ():
            raise GraphError(f"Loss node must be scalar, got shape {loss_node.shape}", field="loss")
        if loss_node.value is None:
            raise GraphError("Forward pass has not been executed", field="loss")

        grads: Dict[int, np.ndarray] = {loss: np.asarray(1.0)}
        for node in reversed(self.nodes[:loss + 1]):
            if node.op in _LEAF_OPS:
                continue
            grad = grads.pop(node.id, None)
            if grad is None:
                continue
            if any(i >= node.id for i in node.inputs):
                raise GraphError(f"Node {node.id} references a later node; graph has a cycle", field=str(node.id))
            needs = tuple(self.nodes[i].requires_grad for i in node.inputs)
            if not any(needs):
                continue
            args = [self.nodes[i].value for i in node.inputs]
            input_grads = OPS[node.op].backward(grad, args, node.value, node.attrs, needs)
            for i, need, g in zip(node.inputs, needs, input_grads):
                if not need or g is None:
                    continue
                grads[i] = grads[i] + g if i in grads else np.array(g, dtype=np.float64)

        return {
            name: grads.get(node_id, np.zeros(self.nodes[node_id].shape))
            for name, node_id in self.params.items() if node_id in self.trainable
        }

    def activation_pattern(self) -> bytes:
        """Sign pattern of every LeakyReLU input from the last :meth:`run`."""
        parts = [
            np.packbits(self.value(node.inputs[0]) >= 0).tobytes()
            for node in self.nodes if node.op == "leaky_relu"
        ]
        return b"".join(parts)
