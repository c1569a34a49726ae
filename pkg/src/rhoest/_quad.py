"""Gauss-Legendre quadrature for piecewise-smooth integrands on bounded segments."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import QuadratureError


@dataclass(frozen=True)
class QuadSettings:
    """Per-segment quadrature rule: node count and acceptance tolerance."""

    nodes: int = 32
    tol: float = 1e-9


@lru_cache(maxsize=8)
def _rule(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def fixed(f, a: float, b: float, nodes: int = 32) -> float:
    """Fixed-order Gauss-Legendre estimate of the integral of f on (a, b)."""
    x, w = _rule(nodes)
    half = 0.5 * (b - a)
    pts = 0.5 * (a + b) + half * x
    return half * float(w @ np.asarray(f(pts), dtype=float))

def segment(f, a: float, b: float, settings: QuadSettings = QuadSettings()) -> float:
    """Integrate f on a bounded (a, b) with one dyadic refinement pass.

    The error is estimated by comparing the coarse and refined values; an
    estimate above the configured tolerance is a hard ``QuadratureError``
    because integrands are expected to be smooth within a segment.
    """
    if not (np.isfinite(a) and np.isfinite(b)):
        raise QuadratureError(f"cannot integrate non-exact forms on infinite segment ({a}, {b})")
    if b <= a:
        return 0.0
    coarse = fixed(f, a, b, settings.nodes)
    mid = 0.5 * (a + b)
    refined = fixed(f, a, mid, settings.nodes) + fixed(f, mid, b, settings.nodes)
    err = abs(refined - coarse)
    if err > settings.tol * max(1.0, abs(refined)):
        raise QuadratureError(
            f"integral on ({a:.6g}, {b:.6g}) did not settle: |delta|={err:.3e} > tol={settings.tol:.1e}"
        )
    return refined


def adaptive(f, a: float, b: float, tol: float = 1e-11, max_depth: int = 48) -> float:
    """Adaptive bisection fallback; tolerates endpoint kinks (e.g. sqrt edges)."""
    if b <= a:
        return 0.0
    out = 0.0
    stack = [(a, b, fixed(f, a, b), tol, 0)]
    while stack:
        lo, hi, est, t, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left = fixed(f, lo, mid)
        right = fixed(f, mid, hi)
        if abs(left + right - est) <= t or depth >= max_depth:
            out += left + right
        else:
            stack.append((lo, mid, left, 0.5 * t, depth + 1))
            stack.append((mid, hi, right, 0.5 * t, depth + 1))
    return out
