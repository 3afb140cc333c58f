"""Central finite differences, used as the independent gradient oracle."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Parameter, no_grad


def finite_diff_grad(
    f: Callable[[], float], params: Iterable[Parameter], h: float = 1e-5
) -> dict[str, np.ndarray]:
    """(f(θ + h e_i) - f(θ - h e_i)) / 2h for every entry of every parameter.

    ``f`` reads the parameters' current values; they are restored afterwards.
    Keys are parameter names, so names must be unique.
    """
    out: dict[str, np.ndarray] = {}
    with no_grad():
        for p in params:
            flat = p.data.reshape(-1)
            grad = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                plus = float(f())
                flat[i] = orig - h
                minus = float(f())
                flat[i] = orig
                grad[i] = (plus - minus) / (2.0 * h)
            if p.name in out:
                raise ValueError(f"duplicate parameter name {p.name!r}")
            out[p.name] = grad.reshape(p.shape)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise |a - b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def max_relative_error(
    analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray], floor: float = 1e-6
) -> float:
    worst = 0.0
    for name, g in numeric.items():
        if g.size:
            worst = max(worst, float(relative_error(analytic[name], g, floor).max()))
    return worst
