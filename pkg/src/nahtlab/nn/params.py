"""Named parameter store with per-entry Adam state.

One store holds every parameter group of a learner (encoder, decoders,
actor, critic).  Updates select subsets by name prefix so the
encoder-decoder and RL groups can run on different learning rates and
cadences while bias correction stays exact per entry.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NonFiniteGradient
from .tensor import Tensor


class _Entry:
    __slots__ = ("value", "grad", "m", "v", "t", "leaf")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)
        self.t = 0
        leaf = Tensor(value, requires_grad=True)
        leaf.grad = self.grad
        self.leaf = leaf


class ParamStore:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._entries: dict[str, _Entry] = {}
        self.step_count = 0

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self):
        return list(self._entries)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._entries:
            raise ConfigError(f"duplicate parameter entry {name!r}")
        self._entries[name] = _Entry(np.ascontiguousarray(value, dtype=self.dtype))

    def value(self, name: str) -> np.ndarray:
        return self._entries[name].value

    def grad(self, name: str) -> np.ndarray:
        return self._entries[name].grad

    def leaf(self, name: str) -> Tensor:
        """Tape leaf for this entry; shares the value and grad buffers."""
        try:
            return self._entries[name].leaf
        except KeyError:
            raise ConfigError(f"unknown parameter entry {name!r}") from None

    def select(self, prefixes) -> list[str]:
        if isinstance(prefixes, str):
            prefixes = (prefixes,)
        return [n for n in self._entries if any(n.startswith(p) for p in prefixes)]

    def zero_grads(self, names=None) -> None:
        for n in names if names is not None else self._entries:
            self._entries[n].grad[...] = 0.0

    def grad_norm(self, names=None) -> float:
        total = 0.0
        for n in names if names is not None else self._entries:
            g = self._entries[n].grad
            total += float(g.ravel() @ g.ravel())
        return float(np.sqrt(total))

    def num_params(self) -> int:
        return sum(e.value.size for e in self._entries.values())

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8, names=None) -> None:
        """Bias-corrected Adam update on the selected entries.

        Gradients are checked for finiteness before anything mutates, so a
        bad minibatch aborts cleanly; on success gradients are zeroed and
        the store-wide step count goes up by exactly one.
        """
        from .. import kernels as K

        selected = list(names) if names is not None else list(self._entries)
        for n in selected:
            if not np.all(np.isfinite(self._entries[n].grad)):
                raise NonFiniteGradient(n)
        for n in selected:
            e = self._entries[n]
            e.t += 1
            K.adam_update(e.value, e.grad, e.m, e.v, e.t, lr, beta1, beta2, eps)
            e.grad[...] = 0.0
        self.step_count += 1

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: e.value.copy() for n, e in self._entries.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._entries) - set(state)
        extra = set(state) - set(self._entries)
        if missing or extra:
            raise ConfigError(
                f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}"
            )
        for n, arr in state.items():
            e = self._entries[n]
            if tuple(arr.shape) != tuple(e.value.shape):
                raise ConfigError(
                    f"shape mismatch for {n!r}: store {e.value.shape}, loaded {arr.shape}"
                )
            e.value[...] = arr.astype(self.dtype)


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float = 1.0) -> np.ndarray:
    """Orthogonal-ish init: QR of a Gaussian, sign-fixed, scaled by gain."""
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]
