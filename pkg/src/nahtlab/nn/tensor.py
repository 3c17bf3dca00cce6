"""Reverse-mode tape over numpy arrays, restricted to the composites we train.

Not a general autodiff system: the op vocabulary (see ops.py) is exactly what
the encoder-decoder, actor, critic and their losses need.  Gradients
accumulate into ``.grad`` buffers; parameter leaves keep persistent buffers
owned by the ParamStore, interior nodes allocate lazily during backward.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape construction inside the block (rollout / evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={tuple(self.data.shape)}, grad={self.requires_grad})"

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded tape."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        order = _toposort(self)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad[...] = 1.0
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def _toposort(root: Tensor):
    """Iterative postorder (inputs before outputs); avoids recursion limits
    on long GRU chains."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def accumulate(t: Tensor, g) -> None:
    """Add g into t's gradient buffer (no-op for constants)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def make_node(data, parents, backward) -> Tensor:
    """Create an interior tape node, or a constant if grads are off/unneeded."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._backward = backward
        return out
    return Tensor(data)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)
