"""Shared quadrature building blocks.

Graded panel meshes, Gauss-Legendre panel rules, and helpers for
integrands with power-law endpoint behaviour.  Everything here is plain
numpy; callers own the physics.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "gauss_rule",
    "panel_nodes",
    "geometric_edges",
    "capped_geometric_edges",
    "graded_mesh",
    "averaged_alternating_tail",
    "cosm1_comp",
    "sinm_comp",
]


def cosm1_comp(x: np.ndarray) -> np.ndarray:
    """cos(x) - 1 + x^2/2, evaluated without cancellation loss."""
    x = np.asarray(x, dtype=float)
    out = np.cos(x) - 1.0 + 0.5 * x * x
    small = np.abs(x) < 0.15
    if np.any(small):
        xs = x[small]
        q = xs * xs
        out[small] = (q * q / 24.0) * (1.0 - q / 30.0 * (1.0 - q / 56.0 * (1.0 - q / 90.0)))
    return out


def sinm_comp(x: np.ndarray) -> np.ndarray:
    """sin(x) - x, evaluated without cancellation loss."""
    x = np.asarray(x, dtype=float)
    out = np.sin(x) - x
    small = np.abs(x) < 0.15
    if np.any(small):
        xs = x[small]
        q = xs * xs
        out[small] = -(xs * q / 6.0) * (1.0 - q / 20.0 * (1.0 - q / 42.0 * (1.0 - q / 72.0)))
    return out

_GAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1], cached per order."""
    rule = _GAUSS_CACHE.get(order)
    if rule is None:
        rule = np.polynomial.legendre.leggauss(order)
        _GAUSS_CACHE[order] = rule
    return rule


def panel_nodes(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss nodes/weights for the panels given by `edges`.

    Returns flat arrays of length (len(edges)-1)*order.
    """
    x, w = gauss_rule(order)
    a = edges[:-1][:, None]
    b = edges[1:][:, None]
    half = 0.5 * (b - a)
    nodes = (a + half) + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def geometric_edges(lo: float, hi: float, ratio: float) -> np.ndarray:
    """Geometric panel edges from lo to hi (both > 0), ratio > 1."""
    if hi <= lo:
        return np.array([lo, hi]) if hi > lo else np.array([lo])
    n = max(1, int(np.ceil(np.log(hi / lo) / np.log(ratio))))
    edges = lo * (hi / lo) ** (np.arange(n + 1) / n)
    edges[0], edges[-1] = lo, hi
    return edges


def capped_geometric_edges(lo: float, hi: float, ratio: float, cap: float) -> np.ndarray:
    """Geometric edges whose panel widths never exceed `cap`.

    Used for integrands with an oscillatory factor: the geometric growth
    resolves the power-law part, the cap keeps the phase increment per
    panel bounded.
    """
    if hi <= lo:
        return np.array([lo])
    edges = [lo]
    x = lo
    while x < hi:
        step = min(x * (ratio - 1.0), cap)
        x = min(x + step, hi)
        edges.append(x)
    return np.asarray(edges)


def graded_mesh(t_min: float, t_max: float, count: int, grading: float) -> np.ndarray:
    """Strictly increasing mesh on [t_min, t_max] clustered toward t_min.

    Nodes follow t_min + (t_max - t_min) * (j/count)**grading, j = 1..count,
    with t_min prepended.
    """
    j = np.arange(1, count + 1, dtype=float)
    mesh = t_min + (t_max - t_min) * (j / count) ** grading
    mesh = np.concatenate([[t_min], mesh])
    return np.unique(mesh)


def averaged_alternating_tail(partial_sums: np.ndarray) -> tuple[float, float]:
    """Limit estimate for a sequence of partial sums of an alternating series.

    Repeated pairwise averaging (van Wijngaarden).  Returns (limit, error
    proxy = last averaging correction magnitude).  `partial_sums` may be a
    2-d array (..., n) in which case the averaging runs along the last axis
    and arrays are returned.
    """
    s = np.asarray(partial_sums, dtype=float)
    if s.shape[-1] == 1:
        return s[..., 0], np.abs(s[..., 0])
    prev_last = s[..., -1]
    while s.shape[-1] > 1:
        s = 0.5 * (s[..., 1:] + s[..., :-1])
    limit = s[..., 0]
    return limit, np.abs(limit - prev_last)
