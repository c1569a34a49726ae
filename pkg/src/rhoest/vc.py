"""Combinatorial checkers: level-set interval counting and brute-force shattering.

For a function that is monotone on each piece of a finite partition of the
line, every super-level set {f > a} is a union of few intervals: each piece
contributes at most one, and a partition endpoint contributes an isolated
singleton only in one specific sign pattern. The counter below computes the
maximal intervals analytically from the piece directions, one-sided limits
and explicit endpoint values (crossings are located by bisection, never by
grid scan). Shattering is checked by exhaustive enumeration on at most 20
points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetError, InputError

NONINCREASING = "nonincreasing"
NONDECREASING = "nondecreasing"

_BISECT_STEPS = 200


@dataclass(frozen=True)
class MonotonePieceFn:
    """One piece: evaluator, direction, one-sided limits at the piece ends."""

    fn: Callable[[float], float]
    direction: str
    limit_lo: float
    limit_hi: float

    def __post_init__(self):
        if self.direction not in (NONINCREASING, NONDECREASING):
            raise InputError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class PiecewiseMonotoneSpec:
    """Function monotone on each open piece of a partition of the line.

    ``endpoints`` are the k-1 partition endpoints for k pieces;
    ``endpoint_values`` are the (finite) function values at those points.
    """

    endpoints: tuple[float, ...]
    pieces: tuple[MonotonePieceFn, ...]
    endpoint_values: tuple[float, ...]

    def __post_init__(self):
        if len(self.pieces) != len(self.endpoints) + 1:
            raise InputError("need one piece per partition interval")
        if len(self.endpoint_values) != len(self.endpoints):
            raise InputError("need one value per partition endpoint")
        if any(not math.isfinite(v) for v in self.endpoint_values):
            raise InputError("endpoint values must be finite")
        if any(b <= a for a, b in zip(self.endpoints, self.endpoints[1:])):
            raise InputError("endpoints must be strictly increasing")

    @property
    def k(self) -> int:
        return len(self.pieces)

    def bounds(self) -> list[tuple[float, float]]:
        pts = (-math.inf,) + self.endpoints + (math.inf,)
        return list(zip(pts[:-1], pts[1:]))

    def interval_count_bound(self) -> int:
        """k + ceil((k-1)/2) upper bound on super-level-set components."""
        return self.k + math.ceil((self.k - 1) / 2)


@dataclass(frozen=True)
class RealInterval:
    """Interval with explicit endpoint membership; singletons allowed."""

    lo: float
    hi: float
    closed_lo: bool
    closed_hi: bool

    def is_singleton(self) -> bool:
        return self.lo == self.hi


def _finite_anchor(lo: float, hi: float) -> float:
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    if math.isfinite(lo):
        return lo + 1.0
    if math.isfinite(hi):
        return hi - 1.0
    return 0.0


def _bracket(piece: MonotonePieceFn, lo: float, hi: float, a: float,
             want_above_left: bool) -> tuple[float, float]:
    """Finite bracket [l, r] within (lo, hi) with f>a on one side of the crossing."""
    anchor = _finite_anchor(lo, hi)
    l = lo if math.isfinite(lo) else anchor - 1.0
    r = hi if math.isfinite(hi) else anchor + 1.0
    if not math.isfinite(lo):
        step = 1.0
        while piece.fn(l) <= a if want_above_left else piece.fn(l) > a:
            step *= 4.0
            l = anchor - step
            if step > 1e18:
                break
    if not math.isfinite(hi):
        step = 1.0
        while piece.fn(r) > a if want_above_left else piece.fn(r) <= a:
            step *= 4.0
            r = anchor + step
            if step > 1e18:
                break
    return l, r


def _crossing(piece: MonotonePieceFn, lo: float, hi: float, a: float,
              above_on_left: bool) -> float:
    """Boundary of {f > a} inside (lo, hi) for a monotone piece."""
    l, r = _bracket(piece, lo, hi, a, above_on_left)
    span = max(1.0, abs(l), abs(r))
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (l + r)
        if (piece.fn(mid) > a) == above_on_left:
            l = mid
        else:
            r = mid
        if r - l <= 1e-12 * span:
            break
    return 0.5 * (l + r)


def _piece_level_set(piece: MonotonePieceFn, lo: float, hi: float, a: float):
    """{f > a} on one open piece: None or (interval, touches_lo, touches_hi)."""
    if piece.direction == NONINCREASING:
        if not piece.limit_lo > a:
            return None
        if piece.limit_hi > a:
            return RealInterval(lo, hi, False, False), True, True
        x = _crossing(piece, lo, hi, a, above_on_left=True)
        closed = math.isfinite(x) and piece.fn(x) > a
        return RealInterval(lo, x, False, closed), True, False
    if not piece.limit_hi > a:
        return None
    if piece.limit_lo > a:
        return RealInterval(lo, hi, False, False), True, True
    x = _crossing(piece, lo, hi, a, above_on_left=False)
    closed = math.isfinite(x) and piece.fn(x) > a
    return RealInterval(x, hi, closed, False), False, True


def level_set_intervals(f: PiecewiseMonotoneSpec, a: float
                        ) -> tuple[list[RealInterval], int]:
    """Maximal intervals of {f > a}, including isolated endpoint singletons."""
    if not math.isfinite(a):
        raise InputError("threshold must be finite")
    out: list[RealInterval] = []
    current: RealInterval | None = None
    current_touches_right = False

    def flush():
        nonlocal current, current_touches_right
        if current is not None:
            out.append(current)
        current = None
        current_touches_right = False

    bounds = f.bounds()
    for i, piece in enumerate(f.pieces):
        lo, hi = bounds[i]
        res = _piece_level_set(piece, lo, hi, a)
        if res is None:
            flush()
        else:
            interval, touches_lo, touches_hi = res
            if current is not None and current_touches_right and touches_lo:
                current = RealInterval(current.lo, interval.hi, current.closed_lo,
                                       interval.closed_hi)
            else:
                flush()
                current = interval
            current_touches_right = touches_hi
        if i < len(f.endpoints):
            x_j = f.endpoints[i]
            if f.endpoint_values[i] > a:
                if current is not None and current_touches_right:
                    current = RealInterval(current.lo, x_j, current.closed_lo, True)
                else:
                    flush()
                    current = RealInterval(x_j, x_j, True, True)
                current_touches_right = True
            else:
                flush()
    flush()
    return out, len(out)


# ---------------------------------------------------------------------------
# Brute-force shattering
# ---------------------------------------------------------------------------

_MAX_SHATTER_POINTS = 20


@dataclass(frozen=True)
class SetClassOracle:
    """Finite family of membership predicates indexed by candidate id."""

    ids: tuple
    member: Callable[[object, float], bool]


def brute_shatter(oracle: SetClassOracle, points: Sequence[float]) -> bool:
    """True iff every subset of the points is cut out by some class member."""
    pts = [float(p) for p in points]
    if len(pts) > _MAX_SHATTER_POINTS:
        raise BudgetError(f"shattering check limited to {_MAX_SHATTER_POINTS} points")
    target = 1 << len(pts)
    seen = set()
    for cid in oracle.ids:
        mask = 0
        for bit, x in enumerate(pts):
            if oracle.member(cid, x):
                mask |= 1 << bit
        seen.add(mask)
        if len(seen) == target:
            return True
    return False


def _gap_grid(points: Sequence[float]) -> np.ndarray:
    """Separating coordinates around and between the sorted points."""
    pts = np.sort(np.asarray(points, dtype=float))
    mids = 0.5 * (pts[:-1] + pts[1:])
    return np.concatenate([[pts[0] - 1.0], mids, [pts[-1] + 1.0]])


def intervals_oracle(points: Sequence[float]) -> SetClassOracle:
    """All traces of open intervals on the given points (plus the empty set)."""
    grid = _gap_grid(points)
    ids = [("empty",)] + [(grid[i], grid[j]) for i, j in combinations(range(len(grid)), 2)]

    def member(cid, x):
        if cid[0] == "empty":
            return False
        return cid[0] < x < cid[1]

    return SetClassOracle(tuple(ids), member)


def interval_unions_oracle(points: Sequence[float], k: int) -> SetClassOracle:
    """All traces on the points of unions of at most k open intervals."""
    grid = _gap_grid(points)
    singles = list(combinations(range(len(grid)), 2))
    ids = [()]
    for r in range(1, k + 1):
        ids.extend(combinations(singles, r))

    def member(cid, x):
        return any(grid[i] < x < grid[j] for i, j in cid)

    return SetClassOracle(tuple(ids), member)


def power_set_oracle(points: Sequence[float]) -> SetClassOracle:
    pts = [float(p) for p in points]
    index = {p: i for i, p in enumerate(pts)}
    ids = tuple(range(1 << len(pts)))

    def member(cid, x):
        return bool(cid >> index[float(x)] & 1)

    return SetClassOracle(ids, member)


def predicates_oracle(predicates: Sequence[Callable[[float], bool]]) -> SetClassOracle:
    preds = tuple(predicates)
    return SetClassOracle(tuple(range(len(preds))), lambda cid, x: bool(preds[cid](x)))
