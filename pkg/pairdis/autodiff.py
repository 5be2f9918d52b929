"""Dense float64 tensor primitives recorded on a tape for reverse-mode gradients.

Values are plain ``torch.Tensor`` objects in float64. Every primitive checks its
operand shapes, refuses to return NaN/Inf, and records itself on the tape that
is active in the current thread. ``backward`` walks the tape in reverse, pulling
a gradient buffer per node back through each primitive's vector-Jacobian product
(computed by ``torch.autograd``), and returns one gradient per watched parameter.
"""

import builtins
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import torch

from pairdis.errors import ContractError, DimensionError, NonFiniteError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

Tensor = torch.Tensor

_local = threading.local()


def as_tensor(data, shape: Optional[Sequence[int]] = None) -> Tensor:
    """
    Build a float64 tensor from array-like data.

    Args:
        data: Nested sequence, numpy array or tensor.
        shape: Optional target shape; its product must equal the element count.

    Returns:
        A float64 tensor (no gradient tracking).
    """
    tensor = torch.as_tensor(data, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        numel = 1
        for extent in shape:
            numel *= extent
        if numel != tensor.numel():
            raise DimensionError(f"cannot view {tensor.numel()} values as shape {shape}")
        tensor = tensor.reshape(shape)
    return tensor


def parameter(data) -> Tensor:
    """Create a trainable leaf tensor."""
    return as_tensor(data).clone().detach().requires_grad_(True)


@dataclass(frozen=True)
class TapeEntry:
    """One recorded primitive call."""

    node_id: int
    """Id of the produced value."""
    op: str
    """Primitive name."""
    input_ids: Tuple[int, ...]
    """Ids of the operand values."""
    shape: Tuple[int, ...]
    """Shape of the produced value."""


class Tape:
    """
    Ordered record of primitive calls for one forward pass.

    A tape is built per minibatch and released by ``backward``. It is bound to
    the thread that entered it; separate threads use separate tapes.
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []
        # ops visited by the last backward, in visiting order
        self.replayed: List[str] = []
        self._parameters: Dict[str, Tensor] = {}
        self._ids: Dict[int, int] = {}
        # node id -> value; also keeps python ids from being reused mid-pass
        self._values: List[Tensor] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _local.stack.pop()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def parameters(self) -> Dict[str, Tensor]:
        """Watched parameters by name."""
        return dict(self._parameters)

    @property
    def num_values(self) -> int:
        """Forward values currently held by the tape."""
        return len(self._values)

    def watch(self, name: str, tensor: Tensor) -> Tensor:
        """
        Register a trainable leaf so ``backward`` reports its gradient.

        Args:
            name: Parameter name, unique on this tape.
            tensor: Leaf tensor with ``requires_grad`` set.

        Returns:
            The same tensor.
        """
        if not (tensor.is_leaf and tensor.requires_grad):
            raise ContractError(f"parameter '{name}' must be a leaf tensor requiring grad")
        if name in self._parameters:
            raise ContractError(f"parameter '{name}' is already watched")
        self._parameters[name] = tensor
        self._node(tensor)
        return tensor

    def watch_all(self, parameters: Mapping[str, Tensor]) -> None:
        """Watch every parameter of a name-to-tensor mapping."""
        for name, tensor in parameters.items():
            self.watch(name, tensor)

    def _node(self, tensor: Tensor) -> int:
        key = id(tensor)
        if key not in self._ids:
            self._ids[key] = len(self._ids)
            self._values.append(tensor)
        return self._ids[key]

    def node_id(self, tensor: Tensor) -> Optional[int]:
        """Node id of a recorded value, or None."""
        return self._ids.get(id(tensor))

    def value(self, node_id: int) -> Tensor:
        return self._values[node_id]

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor) -> None:
        """Append one primitive call."""
        input_ids = tuple(self._node(t) for t in inputs)
        node_id = self._node(output)
        self.entries.append(TapeEntry(node_id, op, input_ids, tuple(output.shape)))

    def reversed_entries(self) -> Iterator[TapeEntry]:
        """Entries in reverse recording order, a reverse topological order."""
        return reversed(self.entries)

    def release(self) -> None:
        """Drop recorded entries and forward values; watched parameters stay."""
        self.entries = []
        self._values = [self._parameters[n] for n in self._parameters]
        self._ids = {id(t): k for k, t in enumerate(self._values)}


def active_tape() -> Optional[Tape]:
    """Innermost tape entered by the current thread, if any."""
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def emit(op: str, inputs: Sequence[Tensor], out: Tensor) -> Tensor:
    """Finish a primitive: reject NaN/Inf and record the call on the active tape."""
    if not bool(torch.isfinite(out).all()):
        raise NonFiniteError(op)
    tape = active_tape()
    if tape is not None and torch.is_grad_enabled():
        tape.record(op, inputs, out)
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def _bias_compatible(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape:
        return
    if a.dim() == 2 and b.dim() == 1 and a.shape[1] == b.shape[0]:
        return
    raise DimensionError(
        f"{op}: shapes {tuple(a.shape)} and {tuple(b.shape)} are not broadcast-compatible"
    )


# Binary primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    if a.dim() != 2 or b.dim() != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {tuple(a.shape)} by {tuple(b.shape)}")
    return emit("matmul", (a, b), a @ b)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a bias row broadcast over the batch axis."""
    _bias_compatible("add", a, b)
    return emit("add", (a, b), a + b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference; ``b`` may be a bias row."""
    _bias_compatible("sub", a, b)
    return emit("sub", (a, b), a - b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    _same_shape("mul", a, b)
    return emit("mul", (a, b), a * b)


def sq_dist(a: Tensor, b: Tensor) -> Tensor:
    """Squared euclidean distance between matching rows: [b, d] x [b, d] -> [b]."""
    _same_shape("sq_dist", a, b)
    if a.dim() != 2:
        raise DimensionError(f"sq_dist: expected 2-D rows, got {tuple(a.shape)}")
    diff = a - b
    return emit("sq_dist", (a, b), (diff * diff).sum(dim=1))


# Unary primitives


def neg(a: Tensor) -> Tensor:
    return emit("neg", (a,), -a)


def square(a: Tensor) -> Tensor:
    return emit("square", (a,), a * a)


def affine(a: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """``a * scale + shift`` with python-scalar coefficients."""
    return emit("affine", (a,), a * scale + shift)


def exp(a: Tensor) -> Tensor:
    return emit("exp", (a,), torch.exp(a))


def expm1(a: Tensor) -> Tensor:
    return emit("expm1", (a,), torch.expm1(a))


def log(a: Tensor) -> Tensor:
    return emit("log", (a,), torch.log(a))


def log1p(a: Tensor) -> Tensor:
    return emit("log1p", (a,), torch.log1p(a))


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return emit("abs", (a,), torch.abs(a))


def sigmoid(a: Tensor) -> Tensor:
    return emit("sigmoid", (a,), torch.sigmoid(a))


def tanh(a: Tensor) -> Tensor:
    return emit("tanh", (a,), torch.tanh(a))


def softplus(a: Tensor) -> Tensor:
    """``log(1 + e^a)`` without overflow for large ``a``."""
    return emit("softplus", (a,), torch.logaddexp(a, torch.zeros_like(a)))


def log_sigmoid(a: Tensor) -> Tensor:
    """``log(sigmoid(a))`` as ``-softplus(-a)``."""
    return emit("log_sigmoid", (a,), -torch.logaddexp(-a, torch.zeros_like(a)))


def log1m_sigmoid(a: Tensor) -> Tensor:
    """``log(1 - sigmoid(a))`` as ``-softplus(a)``."""
    return emit("log1m_sigmoid", (a,), -torch.logaddexp(a, torch.zeros_like(a)))


def relu(a: Tensor) -> Tensor:
    return emit("relu", (a,), torch.relu(a))


def clamp(a: Tensor, low: float, high: float) -> Tensor:
    return emit("clamp", (a,), torch.clamp(a, low, high))


# Reductions and structure


def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    out = a.sum() if axis is None else a.sum(dim=axis)
    return emit("sum", (a,), out)


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    if a.numel() == 0:
        raise DimensionError("mean of an empty tensor")
    out = a.mean() if axis is None else a.mean(dim=axis)
    return emit("mean", (a,), out)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis; leading extents must agree."""
    if not tensors:
        raise DimensionError("concat of nothing")
    lead = tuple(tensors[0].shape[:-1])
    for t in tensors[1:]:
        if tuple(t.shape[:-1]) != lead:
            raise DimensionError(
                f"concat: leading shapes {lead} and {tuple(t.shape[:-1])} differ"
            )
    return emit("concat", tuple(tensors), torch.cat(list(tensors), dim=-1))


def split(a: Tensor, sizes: Sequence[int]) -> Tuple[Tensor, ...]:
    """Split along the last axis into blocks of the given sizes."""
    sizes = [int(s) for s in sizes]
    if builtins.sum(sizes) != a.shape[-1] or any(s < 0 for s in sizes):
        raise DimensionError(f"split: sizes {sizes} do not partition last axis {a.shape[-1]}")
    parts = torch.split(a, sizes, dim=-1)
    return tuple(emit("split", (a,), part) for part in parts)


def take_rows(a: Tensor, index: Tensor) -> Tensor:
    """Gather rows of a 2-D tensor by integer index."""
    index = torch.as_tensor(index, dtype=torch.long)
    if index.numel() and (int(index.min()) < 0 or int(index.max()) >= a.shape[0]):
        raise DimensionError(f"take_rows: index out of range for {a.shape[0]} rows")
    return emit("take_rows", (a,), a.index_select(0, index))


# Gradients


def backward(tape: Tape, root: Tensor) -> Dict[str, Tensor]:
    """
    Reverse-mode gradients of a scalar with respect to every watched parameter.

    Walks the tape from the last entry to the first, keeping one gradient
    buffer per node id. Each entry pulls its output buffer back to its operands
    with that primitive's vector-Jacobian product. A buffer left on a value no
    entry produced (glue arithmetic outside the primitives) is pushed straight
    to the parameters through ``torch.autograd``. The tape is released
    afterwards.

    Args:
        tape: Tape the forward pass was recorded on.
        root: Scalar output of that forward pass.

    Returns:
        Mapping from parameter name to ``d root / d parameter``; parameters not
        on a path to ``root`` get zeros.
    """
    if root.numel() != 1:
        raise ContractError(f"backward needs a scalar root, got shape {tuple(root.shape)}")
    watched = tape.parameters
    names = list(watched)
    params = [watched[n] for n in names]
    try:
        if not params:
            return {}
        out = {n: torch.zeros_like(p).detach() for n, p in zip(names, params)}
        if not root.requires_grad:
            return out
        param_ids = {tape.node_id(p): n for n, p in zip(names, params)}

        buffers: Dict[int, Tensor] = {}
        untracked: Dict[int, Tensor] = {}
        root_id = tape.node_id(root)
        if root_id is None:
            untracked[-1] = root
            buffers[-1] = torch.ones_like(root)
        else:
            buffers[root_id] = torch.ones_like(root)

        tape.replayed = []
        for entry in tape.reversed_entries():
            grad_out = buffers.pop(entry.node_id, None)
            if grad_out is None:
                continue
            tape.replayed.append(entry.op)
            output = tape.value(entry.node_id)
            input_ids = [k for k in dict.fromkeys(entry.input_ids) if tape.value(k).requires_grad]
            if not input_ids:
                continue
            grads = torch.autograd.grad(
                output,
                [tape.value(k) for k in input_ids],
                grad_outputs=grad_out,
                retain_graph=True,
                allow_unused=True,
            )
            for k, g in zip(input_ids, grads):
                if g is None:
                    continue
                if g.shape != tape.value(k).shape:
                    raise DimensionError(f"{entry.op}: gradient shape {tuple(g.shape)} mismatch")
                buffers[k] = buffers[k] + g if k in buffers else g

        for k, buf in buffers.items():
            if k in param_ids:
                out[param_ids[k]] = out[param_ids[k]] + buf.detach()
                continue
            value = untracked.get(k) if k == -1 else tape.value(k)
            if value is None or not value.requires_grad:
                continue
            grads = torch.autograd.grad(
                value, params, grad_outputs=buf, retain_graph=True, allow_unused=True
            )
            for name, g in zip(names, grads):
                if g is not None:
                    out[name] = out[name] + g.detach()
        return out
    finally:
        tape.release()


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> Tensor:
    """
    Central finite-difference gradient of a scalar function of ``param``.

    ``param`` is perturbed in place one coordinate at a time and restored.
    """
    grad = torch.zeros_like(param, dtype=DTYPE)
    flat = grad.view(-1)
    with torch.no_grad():
        values = param.view(-1)
        for k in range(values.numel()):
            saved = values[k].item()
            values[k] = saved + h
            up = float(fn())
            values[k] = saved - h
            down = float(fn())
            values[k] = saved
            flat[k] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic: Tensor, numeric: Tensor, floor: float = 1e-6) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all coordinates."""
    _same_shape("max_relative_error", analytic, numeric)
    if analytic.numel() == 0:
        return 0.0
    scale = torch.clamp(torch.maximum(analytic.abs(), numeric.abs()), min=floor)
    return float(((analytic - numeric).abs() / scale).max())
