"""Piecewise densities on the real line.

A density is a finite, strictly increasing knot vector x_1 < ... < x_k plus
one closed-form segment per interval of the induced partition

    (-inf, x_1], (x_1, x_2], ..., (x_k, +inf).

Segments are left-open / right-closed: the value at a knot is the value of
the segment ending there. Three closed forms are supported (constant,
affine square root, exponential of affine) plus an internal weighted-sum
form produced by mixtures. Per-segment masses and several pairwise
integrals are exact; everything else falls back to Gauss-Legendre
quadrature on the joined partition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from ._quad import QuadSettings, fixed, segment as quad_segment
from .errors import DegenerateInputError, InputError, QuadratureError

NORMALIZATION_TOL = 1e-9
_INV_CDF_TOL = 1e-12


# ---------------------------------------------------------------------------
# Partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Strictly increasing finite endpoint set, possibly empty.

    The endpoints x_1 < ... < x_k induce the k+1 open intervals
    (-inf, x_1), (x_1, x_2), ..., (x_k, +inf).
    """

    endpoints: tuple[float, ...] = ()

    def __post_init__(self):
        pts = tuple(float(x) for x in self.endpoints)
        if any(not math.isfinite(x) for x in pts):
            raise InputError("partition endpoints must be finite")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise InputError("partition endpoints must be strictly increasing")
        object.__setattr__(self, "endpoints", pts)

    @property
    def size(self) -> int:
        """Number of intervals (endpoint count + 1)."""
        return len(self.endpoints) + 1

    def intervals(self) -> list[tuple[float, float]]:
        pts = (-math.inf,) + self.endpoints + (math.inf,)
        return list(zip(pts[:-1], pts[1:]))

    def join(self, other: "Partition") -> "Partition":
        """Partition whose endpoint set is the union of both endpoint sets."""
        return Partition(tuple(sorted(set(self.endpoints) | set(other.endpoints))))

    def refines(self, other: "Partition") -> bool:
        """True iff this partition's endpoints contain the other's."""
        return set(self.endpoints) >= set(other.endpoints)


# ---------------------------------------------------------------------------
# Segment forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    """t(x) = value on the segment."""

    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0.0):
            raise InputError(f"constant segment value must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class SqrtAffine:
    """sqrt(t)(x) = max(p + q*x, 0) on the segment, so t = max(p + q*x, 0)^2."""

    p: float
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.q)):
            raise InputError("sqrt_affine parameters must be finite")


@dataclass(frozen=True)
class ExpAffine:
    """t(x) = exp(alpha + beta*x) on the segment."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise InputError("exp_affine parameters must be finite")


@dataclass(frozen=True)
class FormSum:
    """Weighted sum of base forms; produced by mixtures, never serialized."""

    terms: tuple[tuple[float, Union[Constant, SqrtAffine, ExpAffine]], ...]

    def __post_init__(self):
        if not self.terms:
            raise InputError("form sum needs at least one term")
        for w, f in self.terms:
            if not (math.isfinite(w) and w > 0):
                raise InputError("form sum weights must be positive")
            if isinstance(f, FormSum):
                raise InputError("form sums must be flat")


Form = Union[Constant, SqrtAffine, ExpAffine, FormSum]

_FORM_NAMES = {Constant: "constant", SqrtAffine: "sqrt_affine", ExpAffine: "exp_affine"}


def form_values(form: Form, xs: np.ndarray) -> np.ndarray:
    """Density values t(x) of a segment form at the points xs."""
    xs = np.asarray(xs, dtype=float)
    if isinstance(form, Constant):
        return np.full_like(xs, form.value)
    if isinstance(form, SqrtAffine):
        root = np.maximum(form.p + form.q * xs, 0.0)
        return root * root
    if isinstance(form, ExpAffine):
        return np.exp(form.alpha + form.beta * xs)
    out = np.zeros_like(xs)
    for w, f in form.terms:
        out += w * form_values(f, xs)
    return out


def form_sqrt_values(form: Form, xs: np.ndarray) -> np.ndarray:
    """sqrt(t)(x) of a segment form at the points xs."""
    xs = np.asarray(xs, dtype=float)
    if isinstance(form, Constant):
        return np.full_like(xs, math.sqrt(form.value))
    if isinstance(form, SqrtAffine):
        return np.maximum(form.p + form.q * xs, 0.0)
    if isinstance(form, ExpAffine):
        return np.exp(0.5 * (form.alpha + form.beta * xs))
    return np.sqrt(form_values(form, xs))


def _exp_integral(c: float, d: float, a: float, b: float) -> float:
    """Integral of exp(c + d*x) over (a, b); a and/or b may be infinite."""
    if d == 0.0:
        if not (math.isfinite(a) and math.isfinite(b)):
            return math.inf
        return math.exp(c) * (b - a)
    va = math.exp(c + d * a) if math.isfinite(a) else (0.0 if d > 0 else math.inf)
    vb = math.exp(c + d * b) if math.isfinite(b) else (0.0 if d < 0 else math.inf)
    if math.isinf(va) or math.isinf(vb):
        return math.inf
    return (vb - va) / d


def form_mass(form: Form, a: float, b: float) -> float:
    """Exact integral of the segment form over (a, b)."""
    if b <= a:
        return 0.0
    if isinstance(form, Constant):
        if form.value == 0.0:
            return 0.0
        if not (math.isfinite(a) and math.isfinite(b)):
            return math.inf
        return form.value * (b - a)
    if isinstance(form, SqrtAffine):
        if not (math.isfinite(a) and math.isfinite(b)):
            p, q = form.p, form.q
            # only the identically-clamped case has finite (zero) mass
            probe_ok = (q == 0 and p <= 0)
            if not probe_ok:
                return math.inf
            return 0.0
        return _sqrt_affine_mass(form.p, form.q, a, b)
    if isinstance(form, ExpAffine):
        return _exp_integral(form.alpha, form.beta, a, b)
    return sum(w * form_mass(f, a, b) for w, f in form.terms)


def _sqrt_affine_mass(p: float, q: float, a: float, b: float) -> float:
    if q == 0.0:
        return max(p, 0.0) ** 2 * (b - a)
    root = -p / q
    if q > 0:
        lo, hi = max(a, root), b
    else:
        lo, hi = a, min(b, root)
    if hi <= lo:
        return 0.0
    return ((p + q * hi) ** 3 - (p + q * lo) ** 3) / (3.0 * q)


def form_scale(form: Form, c: float) -> Form:
    """Form of the density c * t; c > 0."""
    if isinstance(form, Constant):
        return Constant(form.value * c)
    if isinstance(form, SqrtAffine):
        r = math.sqrt(c)
        return SqrtAffine(form.p * r, form.q * r)
    if isinstance(form, ExpAffine):
        return ExpAffine(form.alpha + math.log(c), form.beta)
    return FormSum(tuple((w * c, f) for w, f in form.terms))


def form_is_zero_on(form: Form, a: float, b: float) -> bool:
    """True iff the form is identically zero on (a, b)."""
    if isinstance(form, Constant):
        return form.value == 0.0
    if isinstance(form, SqrtAffine):
        hi_end = max(form.p + form.q * a, form.p + form.q * b)
        if not math.isfinite(a) or not math.isfinite(b):
            return form.q == 0 and form.p <= 0
        return hi_end <= 0.0
    if isinstance(form, ExpAffine):
        return False
    return all(form_is_zero_on(f, a, b) for _, f in form.terms)


def _form_to_json(form: Form) -> dict:
    if isinstance(form, Constant):
        return {"form": "constant", "params": [form.value]}
    if isinstance(form, SqrtAffine):
        return {"form": "sqrt_affine", "params": [form.p, form.q]}
    if isinstance(form, ExpAffine):
        return {"form": "exp_affine", "params": [form.alpha, form.beta]}
    raise InputError("mixture (sum) segments have no JSON serialization")


def _form_from_json(obj: dict, where: str) -> Form:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected an object")
    kind = obj.get("form")
    params = obj.get("params")
    if kind not in ("constant", "sqrt_affine", "exp_affine"):
        raise InputError(f"{where}.form: unknown form {kind!r}")
    if not isinstance(params, list) or not all(isinstance(v, (int, float)) for v in params):
        raise InputError(f"{where}.params: expected a list of numbers")
    try:
        if kind == "constant":
            if len(params) != 1:
                raise InputError(f"{where}.params: constant takes 1 parameter")
            return Constant(float(params[0]))
        if kind == "sqrt_affine":
            if len(params) != 2:
                raise InputError(f"{where}.params: sqrt_affine takes 2 parameters")
            return SqrtAffine(float(params[0]), float(params[1]))
        if len(params) != 2:
            raise InputError(f"{where}.params: exp_affine takes 2 parameters")
        return ExpAffine(float(params[0]), float(params[1]))
    except InputError as exc:
        raise InputError(f"{where}: {exc}") from None


# ---------------------------------------------------------------------------
# PiecewiseDensity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """View of one segment: the half-open interval (lo, hi] and its form."""

    lo: float
    hi: float
    form: Form


class PiecewiseDensity:
    """Normalized piecewise density; immutable after construction.

    Use :meth:`build` (or the convenience constructors) rather than
    ``__init__``: construction computes exact per-segment masses and
    rescales so that the total mass is 1 within ``NORMALIZATION_TOL``.
    """

    __slots__ = ("knots", "forms", "total_mass", "_knots_arr", "_masses")

    def __init__(self, knots: tuple[float, ...], forms: tuple[Form, ...], total_mass: float,
                 masses: tuple[float, ...]):
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "forms", forms)
        object.__setattr__(self, "total_mass", total_mass)
        object.__setattr__(self, "_knots_arr", np.asarray(knots, dtype=float))
        object.__setattr__(self, "_masses", np.asarray(masses, dtype=float))

    def __setattr__(self, *_):
        raise AttributeError("PiecewiseDensity is immutable")

    # -- construction -------------------------------------------------------

    @staticmethod
    def build(knots: Sequence[float], forms: Sequence[Form]) -> "PiecewiseDensity":
        knots = tuple(float(x) for x in knots)
        forms = tuple(forms)
        Partition(knots)  # validates ordering / finiteness
        if len(forms) != len(knots) + 1:
            raise InputError(
                f"need {len(knots) + 1} segments for {len(knots)} knots, got {len(forms)}"
            )
        bounds = (-math.inf,) + knots + (math.inf,)
        masses = []
        for i, form in enumerate(forms):
            m = form_mass(form, bounds[i], bounds[i + 1])
            if math.isinf(m):
                raise InputError(
                    f"segment {i} on ({bounds[i]}, {bounds[i + 1]}] has infinite mass"
                )
            masses.append(m)
        total = float(sum(masses))
        if total <= 0.0:
            raise DegenerateInputError("density has zero total mass")
        if abs(total - 1.0) > NORMALIZATION_TOL:
            scale = 1.0 / total
            forms = tuple(form_scale(f, scale) for f in forms)
            masses = [m * scale for m in masses]
            total = float(sum(masses))
        return PiecewiseDensity(knots, forms, total, tuple(masses))

    @staticmethod
    def uniform(a: float, b: float) -> "PiecewiseDensity":
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise InputError("uniform density needs finite a < b")
        return PiecewiseDensity.build((a, b), (Constant(0.0), Constant(1.0 / (b - a)), Constant(0.0)))

    @staticmethod
    def from_histogram(knots: Sequence[float], heights: Sequence[float]) -> "PiecewiseDensity":
        """Piecewise-constant density on the cells of ``knots`` (zero outside)."""
        knots = tuple(float(x) for x in knots)
        heights = [float(h) for h in heights]
        if len(heights) != len(knots) - 1:
            raise InputError("need one height per cell (len(knots) - 1)")
        forms = [Constant(0.0)] + [Constant(h) for h in heights] + [Constant(0.0)]
        return PiecewiseDensity.build(knots, forms)

    # -- basic queries -------------------------------------------------------

    @property
    def partition(self) -> Partition:
        return Partition(self.knots)

    @property
    def segments(self) -> list[Segment]:
        bounds = (-math.inf,) + self.knots + (math.inf,)
        return [Segment(bounds[i], bounds[i + 1], f) for i, f in enumerate(self.forms)]

    @property
    def n_pieces(self) -> int:
        """Number of bounded segments carrying positive mass."""
        return int(np.count_nonzero(self._masses[1:-1] > 0.0))

    def segment_index(self, x: float) -> int:
        return int(np.searchsorted(self._knots_arr, x, side="left"))

    def eval(self, x: float) -> float:
        """Density value at x under the left-open/right-closed convention."""
        if not math.isfinite(x):
            raise InputError("evaluation point must be finite")
        return float(form_values(self.forms[self.segment_index(x)], np.asarray([x]))[0])

    def eval_array(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            raise InputError("evaluation points must be finite")
        idx = np.searchsorted(self._knots_arr, xs, side="left")
        out = np.empty_like(xs)
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = form_values(self.forms[i], xs[mask])
        return out

    def sqrt_array(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.searchsorted(self._knots_arr, xs, side="left")
        out = np.empty_like(xs)
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = form_sqrt_values(self.forms[i], xs[mask])
        return out

    def is_piecewise_constant(self) -> bool:
        return all(isinstance(f, Constant) for f in self.forms)

    def support(self) -> tuple[float, float]:
        """Smallest interval outside of which the density is zero."""
        bounds = (-math.inf,) + self.knots + (math.inf,)
        lo, hi = math.inf, -math.inf
        for i, m in enumerate(self._masses):
            if m > 0.0:
                lo = min(lo, bounds[i])
                hi = max(hi, bounds[i + 1])
        return lo, hi

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        return {"knots": list(self.knots), "segments": [_form_to_json(f) for f in self.forms]}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @staticmethod
    def from_json(obj: dict) -> "PiecewiseDensity":
        if not isinstance(obj, dict):
            raise InputError("density: expected a JSON object")
        knots = obj.get("knots")
        segs = obj.get("segments")
        if not isinstance(knots, list) or not all(isinstance(v, (int, float)) for v in knots):
            raise InputError("density.knots: expected a list of numbers")
        if not isinstance(segs, list):
            raise InputError("density.segments: expected a list")
        if len(segs) != len(knots) + 1:
            raise InputError(
                f"density.segments: expected {len(knots) + 1} entries for {len(knots)} knots"
            )
        forms = [_form_from_json(s, f"density.segments[{i}]") for i, s in enumerate(segs)]
        return PiecewiseDensity.build(tuple(knots), tuple(forms))

    @staticmethod
    def loads(text: str) -> "PiecewiseDensity":
        return PiecewiseDensity.from_json(json.loads(text))

    def __repr__(self):
        return f"PiecewiseDensity(knots={self.knots}, pieces={self.n_pieces})"


# ---------------------------------------------------------------------------
# Square-root-space piecewise functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseSqrt:
    """Nonnegative piecewise function f given through the squared forms.

    The stored forms describe f^2 using the density segment forms, so
    f(x) = sqrt(form value). The L2 norm of f is then exactly the total
    form mass, and projecting f to the density (f/||f||)^2 is exact.
    """

    knots: tuple[float, ...]
    forms: tuple[Form, ...]

    def __post_init__(self):
        Partition(self.knots)
        if len(self.forms) != len(self.knots) + 1:
            raise InputError("need one form per partition interval")

    @staticmethod
    def from_density(d: PiecewiseDensity) -> "PiecewiseSqrt":
        return PiecewiseSqrt(d.knots, d.forms)

    def values(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.searchsorted(np.asarray(self.knots), xs, side="left")
        out = np.empty_like(xs)
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = form_sqrt_values(self.forms[i], xs[mask])
        return out

    def l2norm2(self) -> float:
        bounds = (-math.inf,) + self.knots + (math.inf,)
        total = 0.0
        for i, form in enumerate(self.forms):
            m = form_mass(form, bounds[i], bounds[i + 1])
            if math.isinf(m):
                raise InputError(f"segment {i} has infinite squared norm")
            total += m
        return total


def normalize_sqrt(f: PiecewiseSqrt) -> PiecewiseDensity:
    """Density (f/||f||)^2 for a nonnegative piecewise f with ||f|| > 0.

    For any density t, h(t, normalize_sqrt(f)) <= ||sqrt(t) - f|| in L2.
    """
    norm2 = f.l2norm2()
    if norm2 <= 0.0:
        raise DegenerateInputError("cannot normalize an identically-zero function")
    return PiecewiseDensity.build(f.knots, f.forms)


# ---------------------------------------------------------------------------
# Hellinger distance and mixtures
# ---------------------------------------------------------------------------


def _joined_cells(t: PiecewiseDensity, u: PiecewiseDensity):
    """Yield (lo, hi, form_t, form_u) over the joined partition."""
    knots = np.asarray(sorted(set(t.knots) | set(u.knots)))
    bounds = np.concatenate(([-math.inf], knots, [math.inf]))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if math.isinf(lo):
            rep = hi - 1.0
        elif math.isinf(hi):
            rep = lo + 1.0
        else:
            rep = 0.5 * (lo + hi)
        yield lo, hi, t.forms[t.segment_index(rep)], u.forms[u.segment_index(rep)]


def _affinity_cell(lo, hi, ft, fu, settings: QuadSettings) -> float:
    """Integral of sqrt(t*u) over one joined cell; exact where possible."""
    if form_is_zero_on(ft, lo, hi) or form_is_zero_on(fu, lo, hi):
        return 0.0
    if isinstance(ft, Constant) and isinstance(fu, Constant):
        return math.sqrt(ft.value * fu.value) * (hi - lo)
    if isinstance(ft, ExpAffine) and isinstance(fu, ExpAffine):
        return _exp_integral(0.5 * (ft.alpha + fu.alpha), 0.5 * (ft.beta + fu.beta), lo, hi)
    def integrand(xs):
        return np.sqrt(form_values(ft, xs) * form_values(fu, xs))
    return quad_segment(integrand, lo, hi, settings)


def hellinger2(t: PiecewiseDensity, u: PiecewiseDensity,
               settings: QuadSettings = QuadSettings()) -> float:
    """Squared Hellinger distance h^2(t, u) = 1/2 * int (sqrt t - sqrt u)^2.

    Both densities being normalized, h^2 = 1 - int sqrt(t*u). The affinity
    integral is evaluated per joined segment: exactly when both forms are
    constant or both exponential-affine (or either vanishes), by quadrature
    otherwise. Symmetric in its arguments and clamped to [0, 1].
    """
    aff = 0.0
    for lo, hi, ft, fu in _joined_cells(t, u):
        aff += _affinity_cell(lo, hi, ft, fu, settings)
    return min(1.0, max(0.0, 1.0 - aff))


def mixture_half(t: PiecewiseDensity, u: PiecewiseDensity) -> PiecewiseDensity:
    """The midpoint density (t + u)/2 on the joined partition."""
    knots = tuple(sorted(set(t.knots) | set(u.knots)))
    forms: list[Form] = []
    for lo, hi, ft, fu in _joined_cells(t, u):
        if isinstance(ft, Constant) and isinstance(fu, Constant):
            forms.append(Constant(0.5 * (ft.value + fu.value)))
        elif form_is_zero_on(ft, lo, hi) and form_is_zero_on(fu, lo, hi):
            forms.append(Constant(0.0))
        else:
            terms = []
            for w, f in ((0.5, ft), (0.5, fu)):
                if form_is_zero_on(f, lo, hi):
                    continue
                if isinstance(f, FormSum):
                    terms.extend((w * wi, fi) for wi, fi in f.terms)
                else:
                    terms.append((w, f))
            forms.append(FormSum(tuple(terms)))
    return PiecewiseDensity.build(knots, tuple(forms))


def hellinger2_fn(sqrt_fn: Callable[[np.ndarray], np.ndarray], knots: Sequence[float],
                  d: PiecewiseDensity, tol: float = 1e-11) -> float:
    """h^2 between a density given by its square-root evaluator and d.

    ``sqrt_fn`` must be the square root of a normalized density vanishing
    outside (knots[0], knots[-1]); interior knots mark its kinks. Uses
    adaptive quadrature, so mild endpoint singularities are fine. This is
    the independent measurement path used by approximation audits.
    """
    from ._quad import adaptive

    cut = sorted(set(float(k) for k in knots) | {k for k in d.knots if knots[0] < k < knots[-1]})
    aff = 0.0
    for lo, hi in zip(cut[:-1], cut[1:]):
        aff += adaptive(lambda xs: sqrt_fn(xs) * d.sqrt_array(xs), lo, hi, tol)
    return min(1.0, max(0.0, 1.0 - aff))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    """Sorted i.i.d. sample; at least 3 observations."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        if v.size < 3:
            raise InputError(f"samples need n >= 3, got n = {v.size}")
        if not np.all(np.isfinite(v)):
            raise InputError("sample values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)


def _invert_in_form(form: Form, lo: float, hi: float, target: float) -> float:
    """x in (lo, hi] with integral of form over (lo, x) equal to target."""
    if isinstance(form, Constant):
        return lo + target / form.value
    if isinstance(form, ExpAffine):
        c, dcoef = form.alpha, form.beta
        if dcoef == 0.0:
            return lo + target * math.exp(-c)
        base = math.exp(c + dcoef * lo) if math.isfinite(lo) else 0.0
        return (math.log(dcoef * target + base) - c) / dcoef
    # cubic CDF of sqrt-affine segments is inverted by bisection
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if form_mass(form, lo, mid) < target:
            a = mid
        else:
            b = mid
        if b - a <= _INV_CDF_TOL:
            break
    return 0.5 * (a + b)


def inverse_cdf(d: PiecewiseDensity, us) -> np.ndarray:
    """Quantile transform of uniform variates us in [0, 1)."""
    us = np.asarray(us, dtype=float)
    cum = np.cumsum(d._masses)
    idx = np.searchsorted(cum, us * cum[-1], side="right")
    idx = np.minimum(idx, len(d.forms) - 1)
    bounds = (-math.inf,) + d.knots + (math.inf,)
    out = np.empty_like(us)
    for k, u in np.ndenumerate(us):
        i = idx[k]
        prev = cum[i - 1] if i > 0 else 0.0
        out[k] = _invert_in_form(d.forms[i], bounds[i], bounds[i + 1], u * cum[-1] - prev)
    return out


def sample(d: PiecewiseDensity, n: int, seed: int) -> Sample:
    """n i.i.d. draws from d by inverse CDF; bit-reproducible given the seed."""
    if n < 3:
        raise InputError(f"samples need n >= 3, got n = {n}")
    rng = np.random.default_rng(seed)
    return Sample(inverse_cdf(d, rng.random(n)))
