"""Pairwise-test criterion and estimator selection over a finite candidate set.

The criterion compares two candidate densities t, t' through

    T(X, t, t') = (n/2) * [h^2(t, (t+t')/2) - h^2(t', (t+t')/2)]
                  + (1/sqrt 2) * sum_i psi( sqrt(t'/t)(X_i) )

with psi(u) = (u - 1)/sqrt(1 + u^2), psi(+inf) = 1, and the ratio
conventions 0/0 = 1 and a/0 = +inf for a > 0. The selected density
minimizes Upsilon(S, t) = max_{t' in S} T(X, t, t') over the finite set S.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ._quad import QuadSettings
from .density import Constant, PiecewiseDensity, Sample, hellinger2, mixture_half
from .errors import BudgetError, InputError

DEFAULT_KAPPA = 35.7

SampleLike = Union[Sample, Sequence[float], np.ndarray]


def _sample_values(s: SampleLike) -> np.ndarray:
    if isinstance(s, Sample):
        return s.values
    v = np.asarray(s, dtype=float)
    if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
        raise InputError("sample must be a non-empty 1-d array of finite reals")
    return v


def psi(u):
    """Increasing map from [0, +inf] onto [-1, 1]: (u-1)/sqrt(1+u^2), psi(inf)=1.

    Satisfies psi(1/u) = -psi(u), including the convention pair (0, +inf).
    """
    arr = np.asarray(u, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise InputError("psi is defined on [0, +inf]")
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(arr), 1.0, (arr - 1.0) / np.sqrt(1.0 + arr * arr))
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


def sqrt_ratio(tprime: PiecewiseDensity, t: PiecewiseDensity, x: float) -> float:
    """sqrt(t'(x)/t(x)) with the conventions 0/0 = 1 and a/0 = +inf."""
    num = tprime.eval(x)
    den = t.eval(x)
    if den == 0.0:
        return 1.0 if num == 0.0 else math.inf
    return math.sqrt(num / den)


def _psi_of_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """psi(sqrt(num/den)) elementwise with the 0/0 and a/0 conventions."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
        root = np.sqrt(ratio)
        out = (root - 1.0) / np.sqrt(1.0 + ratio)
    out = np.where(np.isinf(ratio), 1.0, out)
    return np.where((den == 0.0) & (num == 0.0), 0.0, out)


def t_statistic(s: SampleLike, t: PiecewiseDensity, tprime: PiecewiseDensity,
                quad: QuadSettings = QuadSettings()) -> float:
    """Pairwise statistic T(X, t, t'); antisymmetric in (t, t')."""
    x = _sample_values(s)
    n = x.size
    mid = mixture_half(t, tprime)
    det = 0.5 * n * (hellinger2(t, mid, quad) - hellinger2(tprime, mid, quad))
    score = float(np.sum(_psi_of_ratio(tprime.eval_array(x), t.eval_array(x))))
    return det + score / math.sqrt(2.0)


def _candidate_list(S) -> list[PiecewiseDensity]:
    densities = list(getattr(S, "densities", S))
    if not densities:
        raise InputError("candidate set is empty")
    return densities


def upsilon(s: SampleLike, S, t: PiecewiseDensity,
            quad: QuadSettings = QuadSettings()) -> float:
    """Criterion value sup_{t' in S} T(X, t, t') over the finite set S."""
    return max(t_statistic(s, t, tp, quad) for tp in _candidate_list(S))


@dataclass(frozen=True)
class RhoConfig:
    """Selection settings: slack constant, quadrature, candidate-count cap."""

    kappa: float = DEFAULT_KAPPA
    quad: QuadSettings = field(default_factory=QuadSettings)
    candidate_budget: int = 256

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise InputError("kappa must be a positive real")
        if self.candidate_budget < 1:
            raise InputError("candidate_budget must be >= 1")


@dataclass
class RhoDiagnostics:
    """Per-candidate criterion values and the near-minimizer set."""

    upsilon_values: np.ndarray
    argmin_index: int
    near_minimizer_indices: tuple[int, ...]
    kappa: float
    t_matrix: np.ndarray | None = None

    def to_json(self) -> dict:
        return {
            "upsilon": [float(v) for v in self.upsilon_values],
            "argmin": int(self.argmin_index),
            "near_minimizers": [int(i) for i in self.near_minimizer_indices],
            "kappa": float(self.kappa),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def pairwise_csv(self) -> str:
        """CSV rendering of the pairwise T matrix (empty if not retained)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.t_matrix is not None:
            for row in self.t_matrix:
                writer.writerow([format(v, ".12g") for v in row])
        return buf.getvalue()


def _t_matrix_constant(x: np.ndarray, densities: list[PiecewiseDensity]) -> np.ndarray:
    """All-pairs T matrix when every candidate is piecewise constant.

    Works on the global joined grid, where every pairwise affinity integral
    is a finite sum; the score part reuses each candidate's values at the
    sample points.
    """
    n = x.size
    grid = np.asarray(sorted({k for d in densities for k in d.knots}))
    mids = 0.5 * (grid[:-1] + grid[1:])
    lengths = np.diff(grid)
    V = np.vstack([d.eval_array(mids) for d in densities])  # candidate values per cell
    E = np.vstack([d.eval_array(x) for d in densities])     # candidate values per sample point
    m = len(densities)
    T = np.zeros((m, m))
    for i in range(m):
        mix = 0.5 * (V[i] + V)                                   # (m, cells)
        aff_i = np.sqrt(V[i] * mix) @ lengths                    # int sqrt(t_i * mix_j)
        aff_j = np.sqrt(V * mix) @ lengths                       # int sqrt(t_j * mix_j)
        det = 0.5 * n * (aff_j - aff_i)                          # (n/2)(h2_i - h2_j)
        score = _psi_of_ratio(E, E[i][None, :]).sum(axis=1)
        T[i] = det + score / math.sqrt(2.0)
    np.fill_diagonal(T, 0.0)
    return T


def _t_matrix_general(x: np.ndarray, densities: list[PiecewiseDensity],
                      quad: QuadSettings) -> np.ndarray:
    n = x.size
    E = np.vstack([d.eval_array(x) for d in densities])
    m = len(densities)
    T = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            mid = mixture_half(densities[i], densities[j])
            det = 0.5 * n * (hellinger2(densities[i], mid, quad)
                             - hellinger2(densities[j], mid, quad))
            score = float(np.sum(_psi_of_ratio(E[j], E[i])))
            T[i, j] = det + score / math.sqrt(2.0)
            T[j, i] = -T[i, j]
    return T


def rho_estimate(s: SampleLike, S, cfg: RhoConfig | None = None
                 ) -> tuple[PiecewiseDensity, RhoDiagnostics]:
    """Exact minimizer of Upsilon over the finite candidate set S.

    Ties break toward the lowest candidate index. The diagnostics expose the
    whole near-minimizer set {Upsilon <= min + kappa}; any of its members is
    an admissible selection, the argmin is returned for determinism. The
    pairwise matrix is computed once (and mirrored by antisymmetry), which
    caps the work at |S|^2 / 2 pairs; candidate sets larger than the
    configured budget are refused before that pass.
    """
    cfg = cfg or RhoConfig()
    densities = _candidate_list(S)
    if len(densities) > cfg.candidate_budget:
        raise BudgetError(
            f"{len(densities)} candidates exceed the configured budget {cfg.candidate_budget}"
        )
    x = _sample_values(s)
    if all(d.is_piecewise_constant() for d in densities):
        T = _t_matrix_constant(x, densities)
    else:
        T = _t_matrix_general(x, densities, cfg.quad)
    ups = T.max(axis=1)
    argmin = int(np.argmin(ups))
    near = tuple(int(i) for i in np.flatnonzero(ups <= ups[argmin] + cfg.kappa))
    keep_matrix = T if len(densities) <= 64 else None
    diag = RhoDiagnostics(ups, argmin, near, cfg.kappa, keep_matrix)
    return densities[argmin], diag
