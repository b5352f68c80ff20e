"""Central finite differences with one level of Richardson extrapolation.

All stencils are fully central. The O(h^2) leading error of each stencil is
removed by combining step h with h/2.
"""

from __future__ import annotations

import math
from collections import Counter
from itertools import product
from typing import Callable, Sequence

import numpy as np

# offset, weight pairs for the O(h^2) central stencil of each derivative order
_STENCILS: dict[int, tuple[tuple[int, float], ...]] = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}


def steps_for(x: np.ndarray, base: float) -> np.ndarray:
    """Per-coordinate step ``base * max(1, |x_i|)``."""
    return base * np.maximum(1.0, np.abs(np.asarray(x, dtype=float)))


def richardson(coarse, fine, order: int = 2):
    """Eliminate the h**order error term from estimates at h and h/2."""
    return fine + (fine - coarse) / (2.0**order - 1.0)


def _partial(f: Callable[[np.ndarray], float], x: np.ndarray, index: Sequence[int], steps: np.ndarray) -> float:
    counts = Counter(index)
    axes = sorted(counts)
    stencils = [_STENCILS[counts[a]] for a in axes]
    denom = 1.0
    for a in axes:
        denom *= steps[a] ** counts[a]
    terms = []
    for combo in product(*stencils):
        dx = np.zeros_like(x)
        weight = 1.0
        for a, (offset, c) in zip(axes, combo):
            dx[a] = offset * steps[a]
            weight *= c
        if weight != 0.0:
            terms.append(weight * float(f(x + dx)))
    return math.fsum(terms) / denom


def mixed_partial(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    index: Sequence[int],
    steps: np.ndarray,
    extrapolate: bool = True,
) -> float:
    """Mixed partial derivative of a scalar function.

    ``index`` is the multiset of differentiation variables, e.g. ``(0, 0, 3)``
    for d^3 f / dx0^2 dx3. Each variable gets its own central stencil and the
    stencils are combined as a tensor product.
    """
    x = np.asarray(x, dtype=float)
    steps = np.asarray(steps, dtype=float)
    coarse = _partial(f, x, index, steps)
    if not extrapolate:
        return coarse
    fine = _partial(f, x, index, steps / 2.0)
    return richardson(coarse, fine)


def _jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, steps: np.ndarray) -> np.ndarray:
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = steps[i]
        cols.append((np.asarray(fn(x + e), dtype=float) - np.asarray(fn(x - e), dtype=float)) / (2.0 * steps[i]))
    return np.stack(cols)


def jacobian(fn: Callable[[np.ndarray], np.ndarray], x, steps) -> np.ndarray:
    """Derivative of an array-valued function; axis 0 is the derivative direction.

    ``out[i, ...] = d fn(x)[...] / d x_i``.
    """
    x = np.asarray(x, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), x.shape)
    return richardson(_jacobian(fn, x, steps), _jacobian(fn, x, steps / 2.0))
