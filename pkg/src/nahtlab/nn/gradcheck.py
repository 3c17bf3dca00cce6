"""Finite-difference verification of tape gradients.

The checker is the independent oracle for every composite loss in the
package: it never goes through the tape's backward pass itself.
"""

from __future__ import annotations

import numpy as np

from .params import ParamStore
from .tensor import no_grad


def finite_diff_check(f, store: ParamStore, probes: int, rng: np.random.Generator,
                      step: float = 1e-5, names=None) -> float:
    """Max relative error between tape gradients of f() and central differences.

    f must be a deterministic scalar function of the store's parameters.
    Probes are drawn uniformly over the selected entries' coordinates; the
    relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    selected = list(names) if names is not None else store.names()
    store.zero_grads()
    loss = f()
    loss.backward()
    analytic = {n: store.grad(n).copy() for n in selected}
    store.zero_grads()

    sizes = np.array([store.value(n).size for n in selected])
    total = int(sizes.sum())
    coords = rng.choice(total, size=min(probes, total), replace=False)
    bounds = np.cumsum(sizes)

    worst = 0.0
    with no_grad():
        for flat in coords:
            entry_i = int(np.searchsorted(bounds, flat, side="right"))
            offset = int(flat - (bounds[entry_i - 1] if entry_i else 0))
            value = store.value(selected[entry_i]).ravel()
            keep = value[offset]
            value[offset] = keep + step
            hi = f().item()
            value[offset] = keep - step
            lo = f().item()
            value[offset] = keep
            numeric = (hi - lo) / (2.0 * step)
            a = float(analytic[selected[entry_i]].ravel()[offset])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
