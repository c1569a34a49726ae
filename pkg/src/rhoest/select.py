"""Split-sample selection across families of fitted estimators.

The even-sized sample is split in half at random (seed-driven). The first
half fits one estimator per declared family; the second half then selects
among those fitted estimators by running the same pairwise-test criterion
with the estimator list as the candidate set. Family weights follow the
standard exp(-weight) summability budget and are carried through to the
report; they do not enter the selection rule itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .density import PiecewiseDensity, Sample
from .errors import InputError
from .models import ShapeModel, build_candidates
from .rho import RhoConfig, rho_estimate

WEIGHT_SUM_LIMIT = 2.0 / (math.e - 1.0)


def untruncated_weight_sum() -> float:
    """sum over both index families j,k >= 1 of exp(-j) + exp(-k)."""
    total = 0.0
    j = 1
    while True:
        term = 2.0 * math.exp(-j)
        total += term
        if term < 1e-20:
            return total
        j += 1


@dataclass(frozen=True)
class SelectionPlan:
    """Families to fit, their positive weights, and the per-family budget."""

    families: tuple[ShapeModel, ...]
    weights: tuple[float, ...]
    budget_per_family: int = 32

    def __post_init__(self):
        if not self.families:
            raise InputError("selection plan needs at least one family")
        if len(self.weights) != len(self.families):
            raise InputError("need one weight per family")
        if any(not (math.isfinite(w) and w > 0) for w in self.weights):
            raise InputError("weights must be positive reals")
        budget = sum(math.exp(-w) for w in self.weights)
        if budget > WEIGHT_SUM_LIMIT + 1e-12:
            raise InputError(
                f"exp(-weight) sum {budget:.6f} exceeds the {WEIGHT_SUM_LIMIT:.6f} budget"
            )
        if self.budget_per_family < 2:
            raise InputError("budget_per_family must be >= 2")

    @staticmethod
    def default(j_max: int = 8, k_max: int = 8, budget_per_family: int = 32) -> "SelectionPlan":
        """Piecewise-monotone families with j+2 pieces (weight j, j <= j_max) and
        convex-concave families with k+2 pieces (weight k, k <= k_max)."""
        families: list[ShapeModel] = []
        weights: list[float] = []
        for j in range(1, j_max + 1):
            families.append(ShapeModel.piecewise_monotone(j + 2))
            weights.append(float(j))
        for k in range(1, k_max + 1):
            families.append(ShapeModel.convex_concave(k + 2))
            weights.append(float(k))
        return SelectionPlan(tuple(families), tuple(weights), budget_per_family)

    def to_json(self) -> dict:
        return {
            "families": [m.to_json() for m in self.families],
            "weights": list(self.weights),
            "budget_per_family": self.budget_per_family,
        }

    @staticmethod
    def from_json(obj: dict) -> "SelectionPlan":
        if not isinstance(obj, dict):
            raise InputError("plan: expected a JSON object")
        fams = obj.get("families")
        if not isinstance(fams, list) or not fams:
            raise InputError("plan.families: expected a non-empty list")
        families = tuple(ShapeModel.from_json(f) for f in fams)
        weights = obj.get("weights")
        if weights is None:
            weights = tuple(float(i + 1) for i in range(len(families)))
        elif isinstance(weights, list) and all(isinstance(w, (int, float)) for w in weights):
            weights = tuple(float(w) for w in weights)
        else:
            raise InputError("plan.weights: expected a list of numbers")
        budget = obj.get("budget_per_family", 32)
        if not isinstance(budget, int):
            raise InputError("plan.budget_per_family: expected an integer")
        return SelectionPlan(families, weights, budget)


def _derived_seed(seed: int, index: int) -> int:
    return (seed * 1_000_003 + 7919 * index + 1) % (1 << 63)


def split_select(s: Sample, plan: SelectionPlan, cfg: RhoConfig | None = None,
                 seed: int = 0) -> tuple[PiecewiseDensity, dict]:
    """Fit one estimator per family on half the sample, select on the other half.

    Returns the selected density and a JSON-able report with the per-family
    fits, the hold-out criterion values, and the selected index.
    """
    cfg = cfg or RhoConfig()
    n = s.n
    if n % 2 != 0:
        raise InputError(f"split selection needs an even sample size, got n = {n}")
    if n < 6:
        raise InputError("split selection needs n >= 6")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    half = n // 2
    first = Sample(s.values[perm[:half]])
    second = Sample(s.values[perm[half:]])

    estimators: list[PiecewiseDensity] = []
    family_reports: list[dict] = []
    for i, model in enumerate(plan.families):
        cands = build_candidates(first, model, plan.budget_per_family, _derived_seed(seed, i))
        est, diag = rho_estimate(first, cands, cfg)
        estimators.append(est)
        family_reports.append({
            "family": model.to_json(),
            "weight": plan.weights[i],
            "candidates": len(cands),
            "fit_criterion": float(diag.upsilon_values[diag.argmin_index]),
            "fit_pieces": est.n_pieces,
        })

    if len(estimators) == 1:
        selected_index, holdout = 0, [0.0]
        selected = estimators[0]
    else:
        selected, diag2 = rho_estimate(second, estimators, cfg)
        selected_index = diag2.argmin_index
        holdout = [float(v) for v in diag2.upsilon_values]

    report = {
        "n": n,
        "split_size": half,
        "seed": seed,
        "selection_rule": "pairwise-test criterion over the fitted estimators, "
                          "evaluated on the held-out half",
        "families": family_reports,
        "holdout_criterion": holdout,
        "selected_index": int(selected_index),
        "selected_family": plan.families[selected_index].to_json(),
    }
    return selected, report
