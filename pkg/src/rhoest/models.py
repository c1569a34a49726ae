"""Shape models, candidate-set generation, degree bounds, and the risk-rate shape.

A shape model declares which segment forms its members may use and which
structural constraint they satisfy. Candidate generation is deterministic
given (sample, model, budget, seed): knots come from order statistics,
heights from empirical cell masses, and shape constraints are enforced by
projection (length-weighted pool-adjacent-violators for monotone kinds,
slope rearrangement for the log-concave kind).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .density import (
    Constant,
    ExpAffine,
    PiecewiseDensity,
    PiecewiseSqrt,
    Sample,
    SqrtAffine,
    normalize_sqrt,
)
from .errors import DegenerateInputError, InputError, ShapeViolationError

HISTOGRAM = "histogram"
MONOTONE = "monotone"
PIECEWISE_MONOTONE = "piecewise_monotone"
PIECEWISE_CONVEX_CONCAVE = "piecewise_convex_concave"
LOG_CONCAVE = "log_concave"

_KINDS = (HISTOGRAM, MONOTONE, PIECEWISE_MONOTONE, PIECEWISE_CONVEX_CONCAVE, LOG_CONCAVE)


@dataclass(frozen=True)
class ShapeModel:
    """Declarative model description.

    kind/pieces combinations:
      - histogram: piecewise constant with at most `pieces` (= D >= 1) cells;
      - monotone: non-increasing on an interval, zero elsewhere (no parameter);
      - piecewise_monotone: monotone on each of `pieces` (= k >= 2) intervals
        of a partition of the line;
      - piecewise_convex_concave: square root convex or concave on each of
        `pieces` (= k >= 3) intervals;
      - log_concave: exp of a concave function on an interval (no parameter).
    """

    kind: str
    pieces: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown model kind {self.kind!r}")
        if self.kind == HISTOGRAM:
            if self.pieces is None or self.pieces < 1:
                raise InputError("histogram model needs pieces >= 1")
        elif self.kind == PIECEWISE_MONOTONE:
            if self.pieces is None or self.pieces < 2:
                raise InputError("piecewise_monotone model needs pieces >= 2")
        elif self.kind == PIECEWISE_CONVEX_CONCAVE:
            if self.pieces is None or self.pieces < 3:
                raise InputError("piecewise_convex_concave model needs pieces >= 3")
        elif self.pieces is not None:
            raise InputError(f"{self.kind} model takes no pieces parameter")

    @staticmethod
    def histogram(D: int) -> "ShapeModel":
        return ShapeModel(HISTOGRAM, int(D))

    @staticmethod
    def monotone() -> "ShapeModel":
        return ShapeModel(MONOTONE)

    @staticmethod
    def piecewise_monotone(k: int) -> "ShapeModel":
        return ShapeModel(PIECEWISE_MONOTONE, int(k))

    @staticmethod
    def convex_concave(k: int) -> "ShapeModel":
        return ShapeModel(PIECEWISE_CONVEX_CONCAVE, int(k))

    @staticmethod
    def log_concave() -> "ShapeModel":
        return ShapeModel(LOG_CONCAVE)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.pieces is not None:
            out["pieces"] = self.pieces
        return out

    @staticmethod
    def from_json(obj: dict) -> "ShapeModel":
        if not isinstance(obj, dict):
            raise InputError("model: expected a JSON object")
        kind = obj.get("kind")
        if not isinstance(kind, str):
            raise InputError("model.kind: expected a string")
        pieces = obj.get("pieces")
        if pieces is not None and not isinstance(pieces, int):
            raise InputError("model.pieces: expected an integer")
        return ShapeModel(kind, pieces)


@dataclass(frozen=True)
class CandidateSet:
    """Finite candidate list for one model, with per-candidate provenance."""

    model: ShapeModel
    densities: tuple[PiecewiseDensity, ...]
    provenance: tuple[str, ...]

    def __post_init__(self):
        if len(self.densities) != len(self.provenance):
            raise InputError("need one provenance tag per candidate")

    def __len__(self):
        return len(self.densities)

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(),
            "densities": [d.to_json() for d in self.densities],
            "provenance": list(self.provenance),
        }


# ---------------------------------------------------------------------------
# Degree bounds and the rate shape
# ---------------------------------------------------------------------------


def extremal_degree(m: ShapeModel, D: int) -> int:
    """Upper bound on the combinatorial degree of a D-cell piecewise-constant
    (or, for the smooth kinds, D-piece structured) point inside model m."""
    if D < 1:
        raise InputError("D must be >= 1")
    if m.kind == HISTOGRAM:
        return 4 * (D + 1)
    if m.kind == MONOTONE:
        return 4 * (D + 2)
    if m.kind == PIECEWISE_MONOTONE:
        return 3 * (m.pieces + D + 1)
    if m.kind == PIECEWISE_CONVEX_CONCAVE:
        return 12 * (D + m.pieces + 1)
    if m.kind == LOG_CONCAVE:
        return 12 * (D + 2) + 4
    raise InputError(f"unsupported model kind {m.kind!r}")


def log_plus(x: float) -> float:
    """max(log x, 1)."""
    return max(math.log(x), 1.0)


def rate_bound(d: int, n: float) -> float:
    """Rate shape (d/n) * log_plus^3(n/d); no universal constant applied."""
    if d < 1:
        raise InputError("d must be >= 1")
    if n < 3:
        raise InputError("n must be >= 3")
    return (d / n) * log_plus(n / d) ** 3


# ---------------------------------------------------------------------------
# Isotonic projection
# ---------------------------------------------------------------------------


def pav_nonincreasing(values: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    """Weighted L2 projection onto non-increasing sequences (pool adjacent violators)."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.ndim != 1:
        raise InputError("values and weights must be 1-d arrays of equal length")
    if np.any(w <= 0):
        raise InputError("weights must be positive")
    # blocks of (mean, weight, count), pooled while the sequence increases
    means: list[float] = []
    wsum: list[float] = []
    count: list[int] = []
    for vi, wi in zip(v, w):
        means.append(float(vi))
        wsum.append(float(wi))
        count.append(1)
        while len(means) > 1 and means[-2] < means[-1]:
            m2, w2, c2 = means.pop(), wsum.pop(), count.pop()
            m1, w1, c1 = means.pop(), wsum.pop(), count.pop()
            means.append((m1 * w1 + m2 * w2) / (w1 + w2))
            wsum.append(w1 + w2)
            count.append(c1 + c2)
    return np.concatenate([np.full(c, m) for m, c in zip(means, count)])


def pav_nondecreasing(values: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    return -pav_nonincreasing(-np.asarray(values, dtype=float), weights)


# ---------------------------------------------------------------------------
# Shape validators (independent of the generators)
# ---------------------------------------------------------------------------


def _histogram_cells(d: PiecewiseDensity) -> tuple[np.ndarray, np.ndarray]:
    """(cell lengths, cell heights) for a piecewise-constant density; tails must vanish."""
    if not d.is_piecewise_constant():
        raise ShapeViolationError("expected a piecewise-constant density")
    if d.forms[0].value != 0.0 or d.forms[-1].value != 0.0:
        raise ShapeViolationError("histogram density must vanish on the unbounded segments")
    knots = np.asarray(d.knots)
    heights = np.asarray([f.value for f in d.forms[1:-1]])
    return np.diff(knots), heights


def monotone_piece_count(heights_with_tails: np.ndarray) -> int:
    """Minimal number of monotone pieces of a step function on the line.

    The input is the full value sequence including the two zero tails; a
    piece boundary is needed exactly where consecutive nonzero differences
    change sign.
    """
    diffs = np.diff(heights_with_tails)
    diffs = diffs[diffs != 0.0]
    if diffs.size == 0:
        return 1
    return 1 + int(np.count_nonzero(np.diff(np.sign(diffs)) != 0))


def validate_candidate(d: PiecewiseDensity, m: ShapeModel) -> None:
    """Raise ShapeViolationError unless d satisfies model m's constraint."""
    if abs(d.total_mass - 1.0) > 1e-9:
        raise ShapeViolationError("candidate is not normalized")
    if m.kind == HISTOGRAM:
        _, heights = _histogram_cells(d)
        blocks = _value_blocks(heights)
        if blocks == 0:
            raise ShapeViolationError("empty support")
        if blocks > m.pieces:
            raise ShapeViolationError(f"histogram candidate uses {blocks} cells > D = {m.pieces}")
        return
    if m.kind == MONOTONE:
        _, heights = _histogram_cells(d)
        nz = np.flatnonzero(heights > 0)
        if nz.size == 0:
            raise ShapeViolationError("empty support")
        tail = heights[nz[0]:]
        if np.any(np.diff(tail) > 1e-12):
            raise ShapeViolationError("heights increase within the support")
        if np.any(heights[: nz[0]] != 0.0):
            raise ShapeViolationError("mass below the support start")
        return
    if m.kind == PIECEWISE_MONOTONE:
        _, heights = _histogram_cells(d)
        full = np.concatenate([[0.0], heights, [0.0]])
        k = monotone_piece_count(full)
        if k > m.pieces:
            raise ShapeViolationError(f"needs {k} monotone pieces > k = {m.pieces}")
        return
    if m.kind == PIECEWISE_CONVEX_CONCAVE:
        _validate_convex_concave(d, m.pieces)
        return
    if m.kind == LOG_CONCAVE:
        _validate_log_concave(d)
        return
    raise InputError(f"unsupported model kind {m.kind!r}")


def _value_blocks(heights: np.ndarray) -> int:
    """Number of maximal constant blocks with positive height."""
    blocks = 0
    prev = 0.0
    for h in heights:
        if h > 0 and h != prev:
            blocks += 1
        prev = h
    return blocks


def _validate_convex_concave(d: PiecewiseDensity, k: int) -> None:
    slopes = []
    for f in d.forms[1:-1]:
        if isinstance(f, Constant) and f.value == 0.0:
            continue
        if not isinstance(f, SqrtAffine):
            raise ShapeViolationError("square-root pieces must be affine")
        slopes.append(f.q)
    if not slopes:
        raise ShapeViolationError("empty support")
    if not (isinstance(d.forms[0], Constant) and d.forms[0].value == 0.0
            and isinstance(d.forms[-1], Constant) and d.forms[-1].value == 0.0):
        raise ShapeViolationError("density must vanish on the unbounded segments")
    # pieces = maximal runs where consecutive slope differences keep one sign;
    # differences at floating-point noise level do not count as curvature
    slopes = np.asarray(slopes)
    delta = np.diff(slopes)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(slopes))))
    curv = np.sign(np.where(np.abs(delta) <= tol, 0.0, delta))
    curv = curv[curv != 0]
    runs = 1 + (int(np.count_nonzero(np.diff(curv) != 0)) if curv.size else 0)
    if runs > k - 2:
        raise ShapeViolationError(f"needs {runs} convex/concave pieces > {k - 2}")


def _validate_log_concave(d: PiecewiseDensity) -> None:
    interior = []
    bounds = (-math.inf,) + d.knots + (math.inf,)
    for i, f in enumerate(d.forms):
        if isinstance(f, Constant) and f.value == 0.0:
            continue
        if not isinstance(f, ExpAffine):
            raise ShapeViolationError("log-concave candidates must use exp-affine segments")
        interior.append((bounds[i], bounds[i + 1], f))
    if not interior:
        raise ShapeViolationError("empty support")
    for (l0, h0, f0), (l1, h1, f1) in zip(interior, interior[1:]):
        if h0 != l1:
            raise ShapeViolationError("support must be a single interval")
        gap = (f0.alpha + f0.beta * h0) - (f1.alpha + f1.beta * h0)
        if abs(gap) > 1e-9:
            raise ShapeViolationError("log density must be continuous inside the support")
        if f1.beta > f0.beta + 1e-12:
            raise ShapeViolationError("log-density slopes must be non-increasing")


# ---------------------------------------------------------------------------
# Candidate generation
# ---------------------------------------------------------------------------

_RESOLUTION_LADDER = (1, 2, 3, 4, 6, 8, 11, 16, 22, 32, 45, 64)


def _quantile_knots(x: np.ndarray, cells: int) -> np.ndarray:
    """cells+1 knots at equally spaced order statistics, spanning the data."""
    idx = np.round(np.linspace(0, x.size - 1, cells + 1)).astype(int)
    knots = x[idx]
    return np.unique(knots)


def _cell_counts(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    right = np.searchsorted(x, knots[1:], side="right")
    left = np.searchsorted(x, knots[:-1], side="right")
    counts = (right - left).astype(float)
    counts[0] += np.count_nonzero(x == knots[0])
    return counts


def _empirical_heights(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    counts = _cell_counts(x, knots)
    return counts / (x.size * np.diff(knots))


def _hist_candidate(knots: np.ndarray, heights: np.ndarray) -> PiecewiseDensity | None:
    if np.all(heights <= 0):
        return None
    return PiecewiseDensity.from_histogram(knots, heights)


def _dedupe_key(d: PiecewiseDensity) -> tuple:
    return (d.knots, tuple(repr(f) for f in d.forms))


class _Collector:
    def __init__(self, budget: int):
        self.budget = budget
        self.densities: list[PiecewiseDensity] = []
        self.tags: list[str] = []
        self.seen: set[tuple] = set()

    def add(self, d: PiecewiseDensity | None, tag: str) -> None:
        if d is None or len(self.densities) >= self.budget:
            return
        key = _dedupe_key(d)
        if key in self.seen:
            return
        self.seen.add(key)
        self.densities.append(d)
        self.tags.append(tag)

    @property
    def full(self) -> bool:
        return len(self.densities) >= self.budget


def _ladder(max_cells: int) -> list[int]:
    return [r for r in _RESOLUTION_LADDER if r <= max_cells]


def _histogram_candidates(x: np.ndarray, D: int, out: _Collector, rng) -> None:
    # base candidate: uniform on the sample range
    out.add(PiecewiseDensity.uniform(x[0], x[-1]), "uniform[x(1),x(n)]")
    sources = [("eqprob", _quantile_knots(x, D)),
               ("eqwidth", np.linspace(x[0], x[-1], D + 1))]
    for name, knots in sources:
        if len(knots) < 2:
            continue
        heights = _empirical_heights(x, knots)
        out.add(_hist_candidate(knots, heights), f"{name}(D={D})")
        if D >= 2:
            for r, rtag in ((0.8, "tilt-"), (1.25, "tilt+")):
                tilt = heights * r ** np.arange(len(heights))
                out.add(_hist_candidate(knots, tilt), f"{name}(D={D}){rtag}")
    attempts = 0
    while not out.full and attempts < 4 * out.budget:
        attempts += 1
        if D == 1:
            i, j = sorted(rng.integers(0, x.size, size=2))
            if x[i] < x[j]:
                out.add(PiecewiseDensity.uniform(x[i], x[j]), "jitter(D=1)")
            continue
        levels = np.sort(rng.uniform(0, 1, size=D - 1))
        knots = np.unique(np.concatenate(
            [[x[0]], np.quantile(x, levels, method="inverted_cdf"), [x[-1]]]))
        if len(knots) < 2:
            continue
        out.add(_hist_candidate(knots, _empirical_heights(x, knots)), f"jitter(D={D})")


def _monotone_candidates(x: np.ndarray, out: _Collector, max_cells: int) -> None:
    out.add(PiecewiseDensity.uniform(x[0], x[-1]), "uniform[x(1),x(n)]")
    for D in _ladder(max_cells):
        for name, knots in (("eqprob", _quantile_knots(x, D)),
                            ("eqwidth", np.linspace(x[0], x[-1], D + 1))):
            if len(knots) < 2 or out.full:
                continue
            heights = _empirical_heights(x, knots)
            iso = pav_nonincreasing(heights, np.diff(knots))
            out.add(_hist_candidate(knots, iso), f"{name}-pav(D={D})")


def _piecewise_monotone_candidates(x: np.ndarray, k: int, out: _Collector,
                                   max_cells: int) -> None:
    # interior monotone stretches; the zero tails merge into the outer pieces
    runs = max(1, k - 2)
    out.add(PiecewiseDensity.uniform(x[0], x[-1]), "uniform[x(1),x(n)]")
    for D in _ladder(max_cells):
        if D < runs or out.full:
            continue
        knots = _quantile_knots(x, D)
        if len(knots) < 2:
            continue
        heights = _empirical_heights(x, knots)
        lengths = np.diff(knots)
        cells = len(heights)
        splits = np.round(np.linspace(0, cells, runs + 1)).astype(int)
        for dirs_tag, dirs in _direction_variants(heights, splits, runs):
            proj = np.empty_like(heights)
            for r in range(runs):
                lo, hi = splits[r], splits[r + 1]
                if hi <= lo:
                    continue
                seg, wseg = heights[lo:hi], lengths[lo:hi]
                proj[lo:hi] = (pav_nonincreasing(seg, wseg) if dirs[r] < 0
                               else pav_nondecreasing(seg, wseg))
            out.add(_hist_candidate(knots, proj), f"pav{dirs_tag}(D={D})")


def _direction_variants(heights, splits, runs):
    data_dirs = []
    for r in range(runs):
        lo, hi = splits[r], splits[r + 1]
        seg = heights[lo:hi]
        trend = seg[-1] - seg[0] if len(seg) > 1 else 0.0
        data_dirs.append(1 if trend > 0 else -1)
    variants = [("", tuple(data_dirs))]
    unimodal = tuple(1 if r < runs // 2 else -1 for r in range(runs))
    variants.append(("-unimodal", unimodal))
    variants.append(("-dec", tuple(-1 for _ in range(runs))))
    seen = set()
    for tag, dirs in variants:
        if dirs not in seen:
            seen.add(dirs)
            yield tag, dirs


def _smoothed_heights(x: np.ndarray, knots: np.ndarray, floor: float) -> np.ndarray:
    counts = _cell_counts(x, knots)
    return (counts + floor) / (x.size * np.diff(knots))


def _convex_concave_candidates(x: np.ndarray, k: int, out: _Collector,
                               max_cells: int) -> None:
    for M in _ladder(max_cells):
        if M < 2 or out.full:
            continue
        knots = _quantile_knots(x, M)
        if len(knots) < 3:
            continue
        heights = _smoothed_heights(x, knots, 0.5)
        mids = 0.5 * (knots[:-1] + knots[1:])
        anchors_x = np.concatenate([[knots[0]], mids, [knots[-1]]])
        anchors_y = np.sqrt(np.concatenate([[heights[0]], heights, [heights[-1]]]))
        slopes = np.diff(anchors_y) / np.diff(anchors_x)
        for tag, proj in (("concave", pav_nonincreasing(slopes, np.diff(anchors_x))),
                          ("convex", pav_nondecreasing(slopes, np.diff(anchors_x)))):
            ys = anchors_y[0] + np.concatenate([[0.0], np.cumsum(proj * np.diff(anchors_x))])
            xs_t, ys_t = _trim_to_positive(anchors_x, ys)
            if xs_t is not None:
                out.add(_sqrt_interpolant(xs_t, ys_t), f"{tag}(M={M})")
        if k >= 5:
            out.add(_sqrt_interpolant(anchors_x, anchors_y), f"raw(M={M})")


def _trim_to_positive(xs: np.ndarray, ys: np.ndarray):
    """Restrict a piecewise-linear function to its positive region.

    Inserts exact zero crossings as new endpoints, so slope monotonicity is
    preserved. Returns (None, None) if the positive region is empty or split.
    """
    pos = ys > 0
    if not np.any(pos):
        return None, None
    first, last = int(np.argmax(pos)), int(len(ys) - 1 - np.argmax(pos[::-1]))
    if not np.all(pos[first:last + 1]):
        return None, None
    xs_out = list(xs[first:last + 1])
    ys_out = list(ys[first:last + 1])
    if first > 0:
        x0, x1, y0, y1 = xs[first - 1], xs[first], ys[first - 1], ys[first]
        xs_out.insert(0, x0 + (0.0 - y0) * (x1 - x0) / (y1 - y0))
        ys_out.insert(0, 0.0)
    if last < len(ys) - 1:
        x0, x1, y0, y1 = xs[last], xs[last + 1], ys[last], ys[last + 1]
        xs_out.append(x0 + (0.0 - y0) * (x1 - x0) / (y1 - y0))
        ys_out.append(0.0)
    return np.asarray(xs_out), np.asarray(ys_out)


def _sqrt_interpolant(xs: np.ndarray, ys: np.ndarray) -> PiecewiseDensity | None:
    """Density whose square root linearly interpolates (xs, ys), zero outside."""
    if np.all(ys <= 0):
        return None
    forms: list = [Constant(0.0)]
    for i in range(len(xs) - 1):
        x0, x1, y0, y1 = xs[i], xs[i + 1], ys[i], ys[i + 1]
        q = (y1 - y0) / (x1 - x0)
        forms.append(SqrtAffine(y0 - q * x0, q))
    forms.append(Constant(0.0))
    try:
        return normalize_sqrt(PiecewiseSqrt(tuple(xs), tuple(forms)))
    except DegenerateInputError:
        return None


def _log_concave_candidates(x: np.ndarray, out: _Collector, max_cells: int) -> None:
    for M in _ladder(max_cells):
        if M < 2 or out.full:
            continue
        knots = _quantile_knots(x, M)
        if len(knots) < 3:
            continue
        for floor in (0.5, 1.0):
            heights = _smoothed_heights(x, knots, floor)
            mids = 0.5 * (knots[:-1] + knots[1:])
            logs = np.log(heights)
            # chord slopes of the log histogram, extended to the sample range
            anchors_x = np.concatenate([[knots[0]], mids, [knots[-1]]])
            inner = np.diff(logs) / np.diff(mids)
            slopes = np.concatenate([inner[:1], inner, inner[-1:]])
            lengths = np.diff(anchors_x)
            order = np.argsort(-slopes, kind="stable")
            ys0 = logs[0] - slopes[0] * (mids[0] - knots[0])
            xs_new = anchors_x[0] + np.concatenate([[0.0], np.cumsum(lengths[order])])
            ys_new = ys0 + np.concatenate([[0.0], np.cumsum(slopes[order] * lengths[order])])
            forms: list = [Constant(0.0)]
            for i in range(len(xs_new) - 1):
                beta = slopes[order][i]
                alpha = ys_new[i] - beta * xs_new[i]
                forms.append(ExpAffine(alpha, beta))
            forms.append(Constant(0.0))
            out.add(PiecewiseDensity.build(tuple(xs_new), tuple(forms)),
                    f"logchord(M={M},floor={floor})")
            if out.full:
                return


def build_candidates(s: Sample, m: ShapeModel, budget: int = 64, seed: int = 0
                     ) -> CandidateSet:
    """Deterministic candidate set for model m from the sample's order statistics.

    Every candidate is normalized and passes the model's independent shape
    validator; the result never exceeds the budget.
    """
    if budget < 2:
        raise InputError("budget must be >= 2")
    x = s.values
    if x[0] == x[-1]:
        raise DegenerateInputError("degenerate sample: all points equal")
    rng = np.random.default_rng(seed)
    out = _Collector(budget)
    max_cells = max(1, min(_RESOLUTION_LADDER[-1], x.size // 3))
    if m.kind == HISTOGRAM:
        _histogram_candidates(x, m.pieces, out, rng)
    elif m.kind == MONOTONE:
        _monotone_candidates(x, out, max_cells)
    elif m.kind == PIECEWISE_MONOTONE:
        _piecewise_monotone_candidates(x, m.pieces, out, max_cells)
    elif m.kind == PIECEWISE_CONVEX_CONCAVE:
        _convex_concave_candidates(x, m.pieces, out, max_cells)
    elif m.kind == LOG_CONCAVE:
        _log_concave_candidates(x, out, max_cells)
    else:
        raise InputError(f"unsupported model kind {m.kind!r}")
    densities, tags = [], []
    for d, tag in zip(out.densities, out.tags):
        try:
            validate_candidate(d, m)
        except ShapeViolationError:
            continue
        densities.append(d)
        tags.append(tag)
    if not densities:
        raise DegenerateInputError(f"no valid candidates generated for {m.kind}")
    return CandidateSet(m, tuple(densities), tuple(tags))
