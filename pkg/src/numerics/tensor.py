"""
Dense tensors and the reverse-mode tape.

A ``Tensor`` wraps a numpy array. Primitives in ``src.numerics.ops`` record
themselves on the tape that is active in the current context; ``backpropagate``
replays the tape in reverse and returns gradients for the named trainable
leaves that were watched.

The active tape and the default precision are context-local, so worker threads
each record their own tape.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import NonFiniteError, TapeStateError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_ACTIVE_TAPE: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)
_DEFAULT_DTYPE: ContextVar[type] = ContextVar("default_dtype", default=np.float32)


def get_default_dtype() -> type:
    """Floating dtype new tensors are cast to (float32 unless in a precision block)."""
    return _DEFAULT_DTYPE.get()


@contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """
    Temporarily switch the default tensor dtype.

    ``precision(np.float64)`` is the oracle / gradient-check mode.
    """
    resolved = np.dtype(dtype).type
    if resolved not in (np.float32, np.float64):
        raise ValueError(f"Unsupported precision: {dtype}")
    token = _DEFAULT_DTYPE.set(resolved)
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


class Tensor:
    """Row-major dense array with an optional name and trainable flag."""

    __slots__ = ("data", "name", "requires_grad")

    def __init__(self, data: Any, name: Optional[str] = None, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=get_default_dtype())
        self.name = name
        self.requires_grad = requires_grad

    @classmethod
    def wrap(cls, data: np.ndarray) -> "Tensor":
        """Wrap an op result without casting."""
        out = cls.__new__(cls)
        out.data = data
        out.name = None
        out.requires_grad = False
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{label})"


def parameter(data: Any, name: str) -> Tensor:
    """Create a named trainable leaf."""
    return Tensor(data, name=name, requires_grad=True)


def as_tensors(params: Mapping[str, np.ndarray], trainable: Optional[Sequence[str]] = None) -> Dict[str, Tensor]:
    """
    Wrap a flat parameter dict as tensors.

    Names listed in ``trainable`` become named trainable leaves; the rest are
    constants. ``trainable=None`` marks nothing trainable (inference).
    """
    wanted = set(trainable or ())
    return {
        name: Tensor(value, name=name, requires_grad=name in wanted) for name, value in params.items()
    }


@dataclass
class TapeEntry:
    """One primitive application recorded on the tape."""

    op: str
    inputs: Tuple[Optional[int], ...]
    output: int
    backward: BackwardFn


@dataclass
class Tape:
    """
    Ordered record of primitive applications.

    Node ids are assigned in creation order, so every input id precedes its
    consumer. Leaves are registered through ``watch``; op outputs through
    ``record``.
    """

    entries: List[TapeEntry] = field(default_factory=list)
    leaves: Dict[str, int] = field(default_factory=dict)
    terminal: Optional[Tensor] = None
    _node_of: Dict[int, int] = field(default_factory=dict)
    _keepalive: List[Tensor] = field(default_factory=list)
    _token: Any = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def _assign(self, tensor: Tensor) -> int:
        node_id = len(self._keepalive)
        self._node_of[id(tensor)] = node_id
        self._keepalive.append(tensor)
        return node_id

    def node(self, tensor: Tensor) -> Optional[int]:
        """Node id of a tensor on this tape, auto-watching trainable leaves."""
        node_id = self._node_of.get(id(tensor))
        if node_id is None and tensor.requires_grad:
            node_id = self.watch(tensor)
        return node_id

    def watch(self, tensor: Tensor) -> int:
        """Register a named trainable leaf."""
        existing = self._node_of.get(id(tensor))
        if existing is not None:
            return existing
        if tensor.name is None:
            raise TapeStateError(
                message="Trainable leaves must be named",
                error_code="UNNAMED_LEAF",
            )
        if tensor.name in self.leaves:
            raise TapeStateError(
                message=f"Duplicate leaf name: {tensor.name}",
                error_code="DUPLICATE_LEAF",
                details={"name": tensor.name},
            )
        node_id = self._assign(tensor)
        self.leaves[tensor.name] = node_id
        return node_id

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        """Append a primitive application if any input is tracked."""
        input_ids = tuple(self.node(t) for t in inputs)
        if all(i is None for i in input_ids):
            return
        out_id = self._assign(output)
        self.entries.append(TapeEntry(op=op, inputs=input_ids, output=out_id, backward=backward))

    def evaluate(self, fn: Callable[[Mapping[str, Tensor]], Tensor], inputs: Mapping[str, Tensor]) -> Tensor:
        """
        Run ``fn`` under this tape and keep its result as the terminal node.

        Args:
            fn: Function of the named inputs returning the terminal tensor
            inputs: Named tensors; trainable ones are watched as leaves

        Returns:
            Tensor: Terminal value

        Raises:
            NonFiniteError: If the terminal contains NaN or Inf
        """
        with self:
            for tensor in inputs.values():
                if tensor.requires_grad:
                    self.watch(tensor)
            out = fn(inputs)
        if not np.all(np.isfinite(out.data)):
            raise NonFiniteError("evaluate")
        self.terminal = out
        return out


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


def record(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward: BackwardFn) -> Tensor:
    """
    Wrap a primitive result and register it on the active tape.

    Raises:
        NonFiniteError: If the forward value contains NaN or Inf
    """
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteError(op, {"shape": list(np.shape(out_data))})
    out = Tensor.wrap(out_data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None:
        tape.record(op, inputs, out, backward)
    return out


def evaluate(tape: Tape, fn: Callable[[Mapping[str, Tensor]], Tensor], inputs: Mapping[str, Tensor]) -> Tensor:
    """Functional alias of ``Tape.evaluate``."""
    return tape.evaluate(fn, inputs)


def backpropagate(tape: Tape) -> Dict[str, np.ndarray]:
    """
    Gradients of the terminal scalar with respect to every watched leaf.

    Leaves the terminal does not depend on receive all-zero gradients.
    Accumulation order is fixed by the tape order.

    Args:
        tape: An evaluated tape

    Returns:
        dict: Leaf name -> gradient array

    Raises:
        TapeStateError: If the tape has not been evaluated or the terminal is not scalar
    """
    terminal = tape.terminal
    if terminal is None:
        raise TapeStateError(message="Tape has not been evaluated", error_code="TAPE_NOT_EVALUATED")
    if terminal.data.size != 1:
        raise TapeStateError(
            message=f"Terminal node must be scalar, got shape {terminal.shape}",
            error_code="NON_SCALAR_TERMINAL",
            details={"shape": list(terminal.shape)},
        )

    grads: Dict[int, np.ndarray] = {}
    terminal_id = tape._node_of.get(id(terminal))
    if terminal_id is not None:
        grads[terminal_id] = np.ones_like(terminal.data)

    for entry in reversed(tape.entries):
        upstream = grads.pop(entry.output, None)
        if upstream is None:
            continue
        for input_id, grad in zip(entry.inputs, entry.backward(upstream)):
            if input_id is None or grad is None:
                continue
            if input_id in grads:
                grads[input_id] = grads[input_id] + grad
            else:
                grads[input_id] = grad

    result: Dict[str, np.ndarray] = {}
    for name, node_id in tape.leaves.items():
        leaf = tape._keepalive[node_id]
        grad = grads.get(node_id)
        result[name] = np.zeros_like(leaf.data) if grad is None else grad.reshape(leaf.shape)
    return result
