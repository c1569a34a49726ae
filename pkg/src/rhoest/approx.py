"""Variation functionals and constructive approximation operators.

Approximation quality of a density t by piecewise-constant or
piecewise-affine square roots is governed by functionals that aggregate,
over the pieces of a basing partition, the piece length and the variation
of sqrt(t) (order 0) or of its right derivative (order 1):

    order 0:  [ sum_j (len_j * V_j^2)^(1/3) ]^3
    order 1:  [ sum_j (len_j^3 * V_j^2)^(1/5) ]^5

with the convention (+inf) * 0 = 0 on the unbounded extremal pieces. The
operators in this module realize the matching constructive bounds: a
mean-value step approximation on a recursively chosen partition for
monotone pieces, and chords on a refined partition for convex/concave
pieces, followed by projection back to a normalized density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from ._quad import adaptive
from .density import (
    Constant,
    ExpAffine,
    Partition,
    PiecewiseDensity,
    PiecewiseSqrt,
    SqrtAffine,
    normalize_sqrt,
)
from .errors import InputError, ShapeViolationError

_PROBE_POINTS = 1000
_BISECT_TOL = 1e-12
_HUGE = 1e12

NONINCREASING = "nonincreasing"
NONDECREASING = "nondecreasing"


def _probe_grid(lo: float, hi: float, n: int = _PROBE_POINTS) -> np.ndarray:
    """Interior probe points; geometric fan-out on unbounded intervals."""
    if math.isfinite(lo) and math.isfinite(hi):
        return lo + (hi - lo) * (np.arange(1, n + 1) / (n + 1))
    tail = np.geomspace(1e-6, 1e6, n // 2)
    if math.isinf(lo) and math.isinf(hi):
        return np.sort(np.concatenate([-tail, tail]))
    if math.isinf(lo):
        return np.sort(hi - tail)
    return np.sort(lo + tail)


def _one_sided_limit(fn, x0: float, side: int, span: float) -> float:
    """Limit of a monotone fn at x0 from inside (side=+1: from the right)."""
    with np.errstate(all="ignore"):
        if math.isinf(x0):
            probes = np.sort(math.copysign(1.0, x0) * np.geomspace(1.0, 1e9, 40))
            vals = np.asarray(fn(probes), dtype=float)
            v = vals[0] if x0 < 0 else vals[-1]
        else:
            offs = span * 0.25 ** np.arange(1, 60)
            xs = x0 + side * offs
            xs = xs[xs != x0]  # offsets below float resolution collapse onto x0
            vals = np.asarray(fn(xs), dtype=float)
            v = vals[-1]
            if math.isnan(v):
                finite = vals[np.isfinite(vals)]
                if finite.size == 0:
                    return math.nan
                v = float(finite[-1])
    if math.isinf(v) or abs(v) > _HUGE:
        return math.copysign(math.inf, v)
    return float(v)


@dataclass
class MonotonePiece:
    """A function monotone on the open interval (lo, hi).

    The evaluator must accept numpy arrays. Direction and one-sided limits
    are derived from probes when not supplied; a probe that contradicts the
    declared direction is a hard error.
    """

    lo: float
    hi: float
    fn: Callable[[np.ndarray], np.ndarray]
    direction: str | None = None
    limit_lo: float | None = None
    limit_hi: float | None = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InputError("piece needs lo < hi")
        xs = _probe_grid(self.lo, self.hi)
        vals = np.asarray(self.fn(xs), dtype=float)
        diffs = np.diff(vals)
        scale = max(1.0, float(np.max(np.abs(vals[np.isfinite(vals)]), initial=0.0)))
        tol = 1e-9 * scale
        if self.direction is None:
            down = np.all(diffs <= tol)
            up = np.all(diffs >= -tol)
            if not (down or up):
                raise ShapeViolationError(
                    f"probe found no monotone direction on ({self.lo}, {self.hi})"
                )
            self.direction = NONINCREASING if down else NONDECREASING
        elif self.direction == NONINCREASING:
            if np.any(diffs > tol):
                raise ShapeViolationError("probe contradicts the non-increasing declaration")
        elif self.direction == NONDECREASING:
            if np.any(diffs < -tol):
                raise ShapeViolationError("probe contradicts the non-decreasing declaration")
        else:
            raise InputError(f"unknown direction {self.direction!r}")
        span = (self.hi - self.lo) if (math.isfinite(self.lo) and math.isfinite(self.hi)) else 1.0
        if self.limit_lo is None:
            self.limit_lo = _one_sided_limit(self.fn, self.lo, +1, span)
        if self.limit_hi is None:
            self.limit_hi = _one_sided_limit(self.fn, self.hi, -1, span)

    @property
    def length(self) -> float:
        return self.hi - self.lo


def variation(p: MonotonePiece) -> float:
    """sup - inf of the piece over the open interval, from one-sided limits."""
    if math.isinf(p.limit_lo) or math.isinf(p.limit_hi):
        return math.inf
    return abs(p.limit_lo - p.limit_hi)


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShapeFn:
    """Density shape description: support knots plus square-root evaluators.

    The density vanishes outside (knots[0], knots[-1]); interior knots split
    the support into the basing pieces. ``sqrt_fn`` evaluates sqrt(t);
    ``dsqrt_fn``, when given, evaluates its right derivative.
    """

    knots: tuple[float, ...]
    sqrt_fn: Callable[[np.ndarray], np.ndarray]
    dsqrt_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if len(self.knots) < 2:
            raise InputError("shape description needs at least the two support endpoints")
        Partition(self.knots)


def _density_dsqrt(d: PiecewiseDensity) -> Callable[[np.ndarray], np.ndarray]:
    knots_arr = np.asarray(d.knots)

    def fn(xs):
        xs = np.asarray(xs, dtype=float)
        idx = np.searchsorted(knots_arr, xs, side="left")
        out = np.zeros_like(xs)
        for i in np.unique(idx):
            mask = idx == i
            form = d.forms[i]
            if isinstance(form, SqrtAffine):
                out[mask] = np.where(form.p + form.q * xs[mask] > 0, form.q, 0.0)
            elif isinstance(form, ExpAffine):
                out[mask] = 0.5 * form.beta * np.exp(0.5 * (form.alpha + form.beta * xs[mask]))
            elif not isinstance(form, Constant):
                raise InputError("derivative evaluator needs closed-form segments")
        return out

    return fn


def _segment_direction(form, lo, hi) -> int:
    if isinstance(form, Constant):
        return 0
    if isinstance(form, SqrtAffine):
        if form.q == 0:
            return 0
        return 1 if form.q > 0 else -1
    if isinstance(form, ExpAffine):
        if form.beta == 0:
            return 0
        return 1 if form.beta > 0 else -1
    raise InputError("cannot derive monotone runs through mixture segments")


def monotone_basing_partition(d: PiecewiseDensity) -> Partition:
    """Partition on whose pieces sqrt(d) is monotone, derived from the segments.

    Knots are kept where the monotone direction breaks, plus the support
    boundary; the unbounded extremal pieces carry zero density.
    """
    bounds = (-math.inf,) + d.knots + (math.inf,)
    eps = 1e-9
    runs: list[float] = []
    lo_sup, hi_sup = d.support()
    if not (math.isfinite(lo_sup) and math.isfinite(hi_sup)):
        raise InputError("density must have bounded support")
    current_dir = 0
    prev_right = 0.0
    started = False
    for i, form in enumerate(d.forms):
        lo, hi = max(bounds[i], lo_sup), min(bounds[i + 1], hi_sup)
        if hi <= lo:
            continue
        seg_dir = _segment_direction(form, lo, hi)
        left_val = float(d.sqrt_array(np.asarray([lo + eps * (hi - lo)]))[0])
        right_val = float(d.sqrt_array(np.asarray([hi - eps * (hi - lo)]))[0])
        if not started:
            runs = [lo_sup]
            current_dir = seg_dir
            started = True
        else:
            jump = left_val - prev_right
            jump_dir = 0 if abs(jump) <= 1e-12 else (1 if jump > 0 else -1)
            dirs = {current_dir, jump_dir, seg_dir} - {0}
            if len(dirs) > 1:
                runs.append(bounds[i])
                current_dir = seg_dir
            else:
                current_dir = next(iter(dirs)) if dirs else 0
        prev_right = right_val
    runs.append(hi_sup)
    return Partition(tuple(runs))


@dataclass(frozen=True)
class FunctionalReport:
    """Per-piece lengths and variations plus the aggregated functional value."""

    lengths: tuple[float, ...]
    variations: tuple[float, ...]
    order: int
    value: float

    def recompute(self) -> float:
        return _aggregate(self.lengths, self.variations, self.order)

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "lengths": [float(v) for v in self.lengths],
            "variations": [float(v) for v in self.variations],
            "value": float(self.value),
        }


def _aggregate(lengths, variations, order: int) -> float:
    total = 0.0
    for l, v in zip(lengths, variations):
        if v == 0.0:
            continue  # (+inf) * 0 = 0
        if math.isinf(l) or math.isinf(v):
            return math.inf
        total += (l * v * v) ** (1.0 / 3.0) if order == 0 else (l ** 3 * v * v) ** 0.2
    return total ** 3 if order == 0 else total ** 5


def _as_shape(t: Union[PiecewiseDensity, ShapeFn], need_derivative: bool) -> ShapeFn:
    if isinstance(t, ShapeFn):
        if need_derivative and t.dsqrt_fn is None:
            raise InputError("order-1 operations need the sqrt derivative evaluator")
        return t
    if isinstance(t, PiecewiseDensity):
        knots = monotone_basing_partition(t).endpoints
        return ShapeFn(knots, t.sqrt_array, _density_dsqrt(t))
    raise InputError("expected a PiecewiseDensity or a ShapeFn")


def functional(t: Union[PiecewiseDensity, ShapeFn], partition: Partition,
               order: int = 0) -> FunctionalReport:
    """Variation functional of sqrt(t) (order 0) or of its derivative (order 1).

    The partition must base t: on each interval the relevant evaluator is
    monotone (probe-checked) and the density vanishes on the two unbounded
    extremal intervals whenever a finite value is expected.
    """
    if order not in (0, 1):
        raise InputError("order must be 0 or 1")
    shape = _as_shape(t, need_derivative=(order == 1))
    raw = shape.sqrt_fn if order == 0 else shape.dsqrt_fn
    lo_sup, hi_sup = shape.knots[0], shape.knots[-1]

    def fn(xs):
        xs = np.asarray(xs, dtype=float)
        inside = (xs > lo_sup) & (xs < hi_sup)
        out = np.zeros_like(xs)
        if np.any(inside):
            out[inside] = np.asarray(raw(xs[inside]), dtype=float)
        return out

    lengths, variations = [], []
    for lo, hi in partition.intervals():
        piece = MonotonePiece(lo, hi, fn)
        lengths.append(hi - lo)
        variations.append(variation(piece))
    value = _aggregate(lengths, variations, order)
    return FunctionalReport(tuple(lengths), tuple(variations), order, value)


# ---------------------------------------------------------------------------
# Mean-value step approximation on a recursively chosen partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseConstantFn:
    """Step function on the cells of a bounded knot vector; zero outside."""

    knots: tuple[float, ...]
    cell_values: tuple[float, ...]

    def __post_init__(self):
        if len(self.cell_values) != len(self.knots) - 1:
            raise InputError("need one value per cell")

    def values(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.searchsorted(np.asarray(self.knots), xs, side="left") - 1
        inside = (idx >= 0) & (idx < len(self.cell_values))
        out = np.zeros_like(xs)
        vals = np.asarray(self.cell_values)
        out[inside] = vals[idx[inside]]
        return out

    def integral(self) -> float:
        return float(np.dot(np.diff(self.knots), self.cell_values))

    def l2norm2(self) -> float:
        return float(np.dot(np.diff(self.knots), np.square(self.cell_values)))


@dataclass(frozen=True)
class DebaseResult:
    partition: Partition          # boundary knots of the chosen cells (incl. endpoints)
    step: PiecewiseConstantFn     # per-cell mean of the input
    refined: Partition            # subdivision with short, low-variation cells


def debase_approx(p: MonotonePiece, R: float, D: int) -> DebaseResult:
    """Step approximation of a monotone piece by cell means.

    The at most D cells are chosen recursively so each carries a value drop
    of at most R/D, which yields the L2 guarantee
    ||f - step|| <= R*sqrt(hi-lo)/(2D). The refined partition splits long
    cells so that every refined cell has length <= (hi-lo)/D (at most 2D of
    them), inheriting the variation bound R/D.
    """
    if not (math.isfinite(p.lo) and math.isfinite(p.hi)):
        raise InputError("step approximation needs a bounded interval")
    if D < 1:
        raise InputError("D must be >= 1")
    v = variation(p)
    if not R > v:
        raise InputError(f"need R > variation ({R} <= {v})")
    span = p.hi - p.lo
    flip = -1.0 if p.direction == NONDECREASING else 1.0

    def g(x: float) -> float:
        return flip * float(np.asarray(p.fn(np.asarray([x])), dtype=float)[0])

    g_lo = flip * p.limit_lo
    step_drop = R / D
    knots = [p.lo]
    level = g_lo
    g_hi = flip * p.limit_hi
    while knots[-1] < p.hi and len(knots) <= D:
        if g_hi >= level - step_drop or len(knots) == D:
            knots.append(p.hi)
            break
        lo_b, hi_b = knots[-1], p.hi
        # largest x with g(x) >= level - step_drop; g is non-increasing
        target = level - step_drop
        for _ in range(200):
            mid = 0.5 * (lo_b + hi_b)
            if g(mid) >= target:
                lo_b = mid
            else:
                hi_b = mid
            if hi_b - lo_b <= _BISECT_TOL * max(1.0, span):
                break
        nxt = 0.5 * (lo_b + hi_b)
        if nxt <= knots[-1]:
            knots.append(p.hi)
            break
        knots.append(nxt)
        level = g(min(nxt + 1e-13 * span, p.hi - 1e-14 * span))
    if knots[-1] < p.hi:
        knots.append(p.hi)

    means = []
    for a, b in zip(knots[:-1], knots[1:]):
        integral = adaptive(lambda xs: np.asarray(p.fn(xs), dtype=float), a, b, tol=1e-12)
        means.append(integral / (b - a))
    step = PiecewiseConstantFn(tuple(knots), tuple(means))

    refined = []
    max_len = span / D
    for a, b in zip(knots[:-1], knots[1:]):
        pieces = max(1, math.ceil(D * (b - a) / span))
        refined.extend(np.linspace(a, b, pieces + 1)[:-1])
    refined.append(p.hi)
    return DebaseResult(Partition(tuple(knots)), step, Partition(tuple(refined)))


# ---------------------------------------------------------------------------
# Chord approximation of convex/concave pieces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Affine:
    c0: float
    c1: float

    def value(self, x):
        return self.c0 + self.c1 * np.asarray(x, dtype=float)


@dataclass
class CurvedPiece:
    """A continuous convex-or-concave function on a bounded [lo, hi].

    ``dfn`` evaluates the (monotone) right derivative; the declared shape is
    probe-validated against the chord.
    """

    lo: float
    hi: float
    fn: Callable[[np.ndarray], np.ndarray]
    dfn: Callable[[np.ndarray], np.ndarray]
    shape: str | None = None

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise InputError("curved piece needs a bounded lo < hi")
        xs = _probe_grid(self.lo, self.hi, 400)
        vals = np.asarray(self.fn(xs), dtype=float)
        fa = float(np.asarray(self.fn(np.asarray([self.lo])))[0])
        fb = float(np.asarray(self.fn(np.asarray([self.hi])))[0])
        chord = fa + (fb - fa) * (xs - self.lo) / (self.hi - self.lo)
        gap = vals - chord
        tol = 1e-9 * max(1.0, float(np.max(np.abs(vals))))
        if self.shape is None:
            if np.all(gap >= -tol):
                self.shape = "concave"
            elif np.all(gap <= tol):
                self.shape = "convex"
            else:
                raise ShapeViolationError("probe found neither convex nor concave shape")
        elif self.shape == "concave":
            if np.any(gap < -tol):
                raise ShapeViolationError("probe contradicts the concave declaration")
        elif self.shape == "convex":
            if np.any(gap > tol):
                raise ShapeViolationError("probe contradicts the convex declaration")
        else:
            raise InputError(f"unknown shape {self.shape!r}")


def chord_approx(piece: CurvedPiece) -> tuple[Affine, float]:
    """Chord through the endpoint values, with the certified sup-error bound
    (hi - lo)/4 times the derivative's variation."""
    dpiece = MonotonePiece(piece.lo, piece.hi, piece.dfn)
    dvar = variation(dpiece)
    if math.isinf(dvar):
        raise InputError("derivative variation is infinite")
    fa = float(np.asarray(piece.fn(np.asarray([piece.lo])))[0])
    fb = float(np.asarray(piece.fn(np.asarray([piece.hi])))[0])
    slope = (fb - fa) / (piece.hi - piece.lo)
    bound = 0.25 * (piece.hi - piece.lo) * dvar
    return Affine(fa - slope * piece.lo, slope), bound


# ---------------------------------------------------------------------------
# Piece allocation and the two density approximation operators
# ---------------------------------------------------------------------------


def allocate_pieces(lengths: Sequence[float], variations: Sequence[float], D: int,
                    order: int = 0) -> tuple[list[int], bool]:
    """Proportional ceil-rounded budget split across pieces.

    Weights are (len*V^2)^(1/3) for order 0 and (len^3*V^2)^(1/5) for
    order 1; the total never exceeds D + k. All-zero weights are flagged as
    degenerate and every piece receives one cell.
    """
    lengths = [float(x) for x in lengths]
    variations = [float(v) for v in variations]
    if len(lengths) != len(variations) or not lengths:
        raise InputError("need matching, non-empty lengths and variations")
    if D < 1:
        raise InputError("D must be >= 1")
    if any(l <= 0 for l in lengths) or any(v < 0 for v in variations):
        raise InputError("lengths must be positive and variations nonnegative")
    if order not in (0, 1):
        raise InputError("order must be 0 or 1")
    if order == 0:
        weights = [(l * v * v) ** (1.0 / 3.0) for l, v in zip(lengths, variations)]
    else:
        weights = [(l ** 3 * v * v) ** 0.2 for l, v in zip(lengths, variations)]
    total = sum(weights)
    if total == 0.0:
        return [1] * len(lengths), True
    return [max(1, math.ceil(D * w / total)) for w in weights], False


def _support_pieces(shape: ShapeFn, partition: Partition | None) -> list[tuple[float, float]]:
    knots = partition.endpoints if partition is not None else shape.knots
    if len(knots) < 2:
        raise InputError("basing partition needs at least two endpoints")
    if not (knots[0] >= shape.knots[0] - 1e-12 and knots[-1] <= shape.knots[-1] + 1e-12):
        raise InputError("basing partition must stay inside the support")
    return list(zip(knots[:-1], knots[1:]))


def histogram_approx(t: Union[PiecewiseDensity, ShapeFn], D: int,
                     partition: Partition | None = None) -> PiecewiseDensity:
    """Piecewise-constant density approximation of t.

    Splits the cell budget across the basing pieces, runs the mean-value
    step approximation of sqrt(t) on each, and projects back to a density.
    The measured squared Hellinger error is bounded by the order-0
    functional over (2D)^2 (and by 1).
    """
    if D < 1:
        raise InputError("D must be >= 1")
    shape = _as_shape(t, need_derivative=False)
    pieces = _support_pieces(shape, partition)
    mono = [MonotonePiece(lo, hi, shape.sqrt_fn) for lo, hi in pieces]
    variations = [variation(p) for p in mono]
    if any(math.isinf(v) for v in variations):
        raise InputError("infinite variation: the order-0 functional diverges")
    lengths = [hi - lo for lo, hi in pieces]
    alloc, _ = allocate_pieces(lengths, variations, D, order=0)
    knots: list[float] = []
    cell_values: list[float] = []
    for p, v, d_j in zip(mono, variations, alloc):
        r = v * (1.0 + 1e-6) + 1e-12
        res = debase_approx(p, r, d_j)
        ks = list(res.step.knots)
        vs = list(res.step.cell_values)
        if knots and abs(ks[0] - knots[-1]) <= 1e-15:
            ks = ks[1:]
        else:
            knots.append(ks.pop(0))
        knots.extend(ks)
        cell_values.extend(vs)
    forms = [Constant(0.0)] + [Constant(max(v, 0.0) ** 2) for v in cell_values] + [Constant(0.0)]
    return normalize_sqrt(PiecewiseSqrt(tuple(knots), tuple(forms)))


def affine_approx(t: Union[PiecewiseDensity, ShapeFn], D: int,
                  partition: Partition | None = None) -> PiecewiseDensity:
    """Piecewise-affine-square-root density approximation of t.

    On each basing piece the derivative of sqrt(t) is tamed on a refined
    partition (short cells, small derivative variation) and sqrt(t) is
    replaced by its chords there. The measured squared Hellinger error is
    bounded by 16 times the order-1 functional over D^4.
    """
    if D < 1:
        raise InputError("D must be >= 1")
    shape = _as_shape(t, need_derivative=True)
    pieces = _support_pieces(shape, partition)
    dmono = [MonotonePiece(lo, hi, shape.dsqrt_fn) for lo, hi in pieces]
    variations = [variation(p) for p in dmono]
    if any(math.isinf(v) for v in variations):
        raise InputError("infinite derivative variation: the order-1 functional diverges")
    lengths = [hi - lo for lo, hi in pieces]
    alloc, _ = allocate_pieces(lengths, variations, D, order=1)
    xs_all: list[float] = []
    forms: list = [Constant(0.0)]
    for p, v, d_j in zip(dmono, variations, alloc):
        r = v * (1.0 + 1e-6) + 1e-12
        res = debase_approx(p, r, d_j)
        cell_knots = np.asarray(res.refined.endpoints)
        ys = np.asarray(shape.sqrt_fn(cell_knots), dtype=float)
        ys = np.maximum(ys, 0.0)
        for i in range(len(cell_knots) - 1):
            x0, x1, y0, y1 = cell_knots[i], cell_knots[i + 1], ys[i], ys[i + 1]
            q = (y1 - y0) / (x1 - x0)
            forms.append(SqrtAffine(y0 - q * x0, q))
        if xs_all and abs(cell_knots[0] - xs_all[-1]) <= 1e-15:
            xs_all.extend(cell_knots[1:])
        else:
            xs_all.extend(cell_knots)
    forms.append(Constant(0.0))
    return normalize_sqrt(PiecewiseSqrt(tuple(xs_all), tuple(forms)))
