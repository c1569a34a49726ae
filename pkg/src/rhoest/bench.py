"""Reproducible Monte Carlo experiments and audits.

Experiment kinds:
  contamination   robustness of the criterion-selected support against a
                  small contaminating bump, vs. the max-support uniform
                  baseline;
  rate            median squared Hellinger risk over an n grid with a
                  log-log slope fit;
  superminimax    the rate experiment run at a piecewise-constant truth and
                  at the triangular truth under the same estimator, with the
                  per-n ordering of the medians;
  approx_audit    certified approximation bounds vs. measured errors;
  vc_audit        level-set interval counts vs. the combinatorial bound,
                  plus the brute-force shattering facts.

Replicate streams derive from spec.seed XOR the global replicate index, so
any single replicate can be reproduced in isolation. CSV output is
byte-identical across reruns unless wall-clock timing is enabled.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._quad import adaptive
from .density import (
    Constant,
    ExpAffine,
    FormSum,
    PiecewiseDensity,
    Sample,
    SqrtAffine,
    hellinger2,
    hellinger2_fn,
    inverse_cdf,
)
from .approx import ShapeFn, functional, histogram_approx
from .errors import InputError
from .models import ShapeModel, build_candidates
from .rho import RhoConfig, rho_estimate
from .vc import (
    MonotonePieceFn,
    NONDECREASING,
    NONINCREASING,
    PiecewiseMonotoneSpec,
    brute_shatter,
    interval_unions_oracle,
    intervals_oracle,
    level_set_intervals,
    power_set_oracle,
)

CSV_HEADER = "experiment,kind,n,replicate,seed,h2,estimator_pieces,wall_ms"

KINDS = ("contamination", "rate", "superminimax", "approx_audit", "vc_audit")


# ---------------------------------------------------------------------------
# Truths
# ---------------------------------------------------------------------------


class _DensityTruth:
    """Truth backed by a PiecewiseDensity: exact sampling and exact-ish h2."""

    def __init__(self, d: PiecewiseDensity):
        self.density = d

    def draw(self, rng, n: int) -> Sample:
        return Sample(inverse_cdf(self.density, rng.random(n)))

    def h2_to(self, est: PiecewiseDensity) -> float:
        return hellinger2(self.density, est)


class TriangularTruth:
    """t(x) = 2(1 - x) on (0, 1]: exact inverse CDF and exact affinities.

    The square root has an algebraic kink at the right support edge, so the
    affinity against piecewise-constant or affine-square-root estimates is
    evaluated in closed form rather than by fixed-order quadrature.
    """

    knots = (0.0, 1.0)

    def draw(self, rng, n: int) -> Sample:
        return Sample(1.0 - np.sqrt(1.0 - rng.random(n)))

    @staticmethod
    def sqrt_values(xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        inside = (xs > 0.0) & (xs <= 1.0)
        return np.where(inside, np.sqrt(np.maximum(2.0 * (1.0 - xs), 0.0)), 0.0)

    def shape(self) -> ShapeFn:
        return ShapeFn(self.knots, lambda xs: np.sqrt(np.maximum(2.0 * (1.0 - np.asarray(xs)), 0.0)))

    @staticmethod
    def _aff_constant(c: float, lo: float, hi: float) -> float:
        # int sqrt(2(1-x) * c) over (lo, hi)
        return math.sqrt(2.0 * c) * (2.0 / 3.0) * ((1 - lo) ** 1.5 - (1 - hi) ** 1.5)

    @staticmethod
    def _aff_sqrt_affine(p: float, q: float, lo: float, hi: float) -> float:
        # int (p + q x) * sqrt(2(1-x)) over (lo, hi) for p + q x >= 0 there
        w_lo, w_hi = 1.0 - lo, 1.0 - hi

        def anti(w):  # antiderivative in w = 1 - x of ((p+q) - q w) sqrt(2) sqrt(w)
            return math.sqrt(2.0) * ((p + q) * (2.0 / 3.0) * w ** 1.5 - q * 0.4 * w ** 2.5)

        return anti(w_lo) - anti(w_hi)

    def h2_to(self, est: PiecewiseDensity) -> float:
        bounds = (-math.inf,) + est.knots + (math.inf,)
        aff = 0.0
        for i, form in enumerate(est.forms):
            lo, hi = max(bounds[i], 0.0), min(bounds[i + 1], 1.0)
            if hi <= lo:
                continue
            if isinstance(form, Constant):
                if form.value > 0.0:
                    aff += self._aff_constant(form.value, lo, hi)
            elif isinstance(form, SqrtAffine) and (form.p + form.q * lo >= 0.0
                                                   and form.p + form.q * hi >= 0.0):
                aff += self._aff_sqrt_affine(form.p, form.q, lo, hi)
            else:
                aff += adaptive(
                    lambda xs, f=form: self.sqrt_values(xs)
                    * np.sqrt(np.maximum(_form_vals(f, xs), 0.0)),
                    lo, hi, 1e-11,
                )
        return min(1.0, max(0.0, 1.0 - aff))


def _form_vals(form, xs):
    from .density import form_values

    return form_values(form, np.asarray(xs, dtype=float))


def make_truth(name_or_density):
    """Resolve a named truth or an inline density JSON object."""
    if isinstance(name_or_density, dict):
        return _DensityTruth(PiecewiseDensity.from_json(name_or_density))
    if name_or_density == "uniform01":
        return _DensityTruth(PiecewiseDensity.uniform(0.0, 1.0))
    if name_or_density == "triangular":
        return TriangularTruth()
    if name_or_density == "step2":
        return _DensityTruth(PiecewiseDensity.from_histogram((0.0, 0.5, 1.0), (1.2, 0.8)))
    if name_or_density == "laplace":
        return _DensityTruth(PiecewiseDensity.build(
            (0.0,), (ExpAffine(math.log(0.5), 1.0), ExpAffine(math.log(0.5), -1.0))))
    if name_or_density == "contamination":
        return _DensityTruth(PiecewiseDensity.from_histogram(
            (0.0, 1.0, 9.0, 10.0), (0.99, 0.0, 0.01)))
    raise InputError(f"truth: unknown name {name_or_density!r}")


# ---------------------------------------------------------------------------
# Spec and result
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    name: str
    seed: int = 0
    replicates: int = 200
    n_grid: tuple[int, ...] = (128, 512, 2048)
    truth: object = "uniform01"          # named truth or inline density JSON
    model: ShapeModel | None = None
    budget: int = 40
    kappa: float = 35.7
    out_dir: str | None = None
    timing: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"spec.kind: unknown kind {self.kind!r}")
        if self.replicates < 1:
            raise InputError("spec.replicates: must be >= 1")
        grid = tuple(int(n) for n in self.n_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InputError("spec.n_grid: must be strictly ascending")
        object.__setattr__(self, "n_grid", grid)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "name": self.name,
            "seed": self.seed,
            "replicates": self.replicates,
            "n_grid": list(self.n_grid),
            "truth": self.truth,
            "budget": self.budget,
            "kappa": self.kappa,
            "timing": self.timing,
        }
        if self.model is not None:
            out["model"] = self.model.to_json()
        if self.out_dir is not None:
            out["out_dir"] = self.out_dir
        return out

    @staticmethod
    def from_json(obj: dict) -> "ExperimentSpec":
        if not isinstance(obj, dict):
            raise InputError("spec: expected a JSON object")
        kind = obj.get("kind")
        if not isinstance(kind, str):
            raise InputError("spec.kind: expected a string")
        name = obj.get("name", kind)
        if not isinstance(name, str):
            raise InputError("spec.name: expected a string")
        for key, typ in (("seed", int), ("replicates", int), ("budget", int)):
            if key in obj and not isinstance(obj[key], int):
                raise InputError(f"spec.{key}: expected an integer")
        if "n_grid" in obj and not (isinstance(obj["n_grid"], list)
                                    and all(isinstance(v, int) for v in obj["n_grid"])):
            raise InputError("spec.n_grid: expected a list of integers")
        model = ShapeModel.from_json(obj["model"]) if "model" in obj else None
        kwargs = dict(kind=kind, name=name, model=model)
        for key in ("seed", "replicates", "budget", "kappa", "truth", "out_dir", "timing"):
            if key in obj:
                kwargs[key] = obj[key]
        if "n_grid" in obj:
            kwargs["n_grid"] = tuple(obj["n_grid"])
        return ExperimentSpec(**kwargs)

    def config_hash(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list[dict]
    summary: dict

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(",".join([
                str(r["experiment"]), str(r["kind"]), str(r["n"]), str(r["replicate"]),
                str(r["seed"]), format(r["h2"], ".12g"), str(r["estimator_pieces"]),
                str(r["wall_ms"]),
            ]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "fingerprint": {"seed": self.spec.seed, "config_hash": self.spec.config_hash()},
            "summary": self.summary,
            "row_count": len(self.rows),
        }

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.spec.name}.csv"
        json_path = out / f"{self.spec.name}.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n")
        return csv_path, json_path


def _summary_stats(values: list[float]) -> dict:
    arr = np.asarray(values)
    return {
        "mean": float(np.mean(arr)),
        "median": float(np.median(arr)),
        "q10": float(np.quantile(arr, 0.10)),
        "q90": float(np.quantile(arr, 0.90)),
    }


def loglog_slope(ns, medians) -> tuple[float, float]:
    """Least-squares slope of log(median) on log(n), with its standard error."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(medians, dtype=float))
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    resid = y - (y.mean() + slope * xc)
    dof = max(1, len(x) - 2)
    stderr = float(math.sqrt(np.dot(resid, resid) / dof / np.dot(xc, xc)))
    return slope, stderr


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------


def _contamination_candidates(x: np.ndarray) -> list[PiecewiseDensity]:
    """Uniform densities on (0, theta] with theta from order statistics and 10."""
    idx = np.unique(np.round(np.linspace(0, x.size - 1, 48)).astype(int))
    thetas = sorted({float(x[i]) for i in idx if x[i] > 0.0} | {10.0})
    return [PiecewiseDensity.build((0.0, th), (Constant(0.0), Constant(1.0 / th), Constant(0.0)))
            for th in thetas]


def _run_contamination(spec: ExperimentSpec) -> ExperimentResult:
    truth = make_truth(spec.truth if spec.truth != "uniform01" else "contamination")
    cfg = RhoConfig(kappa=spec.kappa, candidate_budget=max(64, spec.budget))
    n = spec.n_grid[0]
    rows = []
    exceed = 0
    rho_h2, base_h2 = [], []
    for rep in range(spec.replicates):
        rep_seed = spec.seed ^ rep
        rng = np.random.default_rng(rep_seed)
        t0 = time.perf_counter()
        smp = truth.draw(rng, n)
        x_max = float(smp.values[-1])
        exceed += x_max > 9.0
        baseline = PiecewiseDensity.uniform(0.0, x_max)
        h2_base = truth.h2_to(baseline)
        est, _ = rho_estimate(smp, _contamination_candidates(smp.values), cfg)
        h2_rho = truth.h2_to(est)
        wall = int(1000 * (time.perf_counter() - t0)) if spec.timing else 0
        rows.append(dict(experiment=f"{spec.name}:rho", kind=spec.kind, n=n, replicate=rep,
                         seed=rep_seed, h2=h2_rho, estimator_pieces=est.n_pieces, wall_ms=wall))
        rows.append(dict(experiment=f"{spec.name}:baseline", kind=spec.kind, n=n, replicate=rep,
                         seed=rep_seed, h2=h2_base, estimator_pieces=1, wall_ms=wall))
        rho_h2.append(h2_rho)
        base_h2.append(h2_base)
    summary = {
        "n": n,
        "replicates": spec.replicates,
        "exceed_fraction": exceed / spec.replicates,
        "rho": _summary_stats(rho_h2),
        "baseline": _summary_stats(base_h2),
        "baseline_h2_ge_0.1_fraction": float(np.mean(np.asarray(base_h2) >= 0.1)),
    }
    return ExperimentResult(spec, rows, summary)


def _run_rate(spec: ExperimentSpec, truth_name=None, label=None) -> ExperimentResult:
    truth = make_truth(truth_name if truth_name is not None else spec.truth)
    model = spec.model or ShapeModel.monotone()
    cfg = RhoConfig(kappa=spec.kappa, candidate_budget=max(64, spec.budget))
    label = label or spec.name
    rows = []
    per_n = {}
    for i_n, n in enumerate(spec.n_grid):
        h2s = []
        for rep in range(spec.replicates):
            gi = i_n * spec.replicates + rep
            rep_seed = spec.seed ^ gi
            rng = np.random.default_rng(rep_seed)
            t0 = time.perf_counter()
            smp = truth.draw(rng, n)
            cands = build_candidates(smp, model, spec.budget, rep_seed)
            est, _ = rho_estimate(smp, cands, cfg)
            h2 = truth.h2_to(est)
            wall = int(1000 * (time.perf_counter() - t0)) if spec.timing else 0
            rows.append(dict(experiment=label, kind=spec.kind, n=n, replicate=rep,
                             seed=rep_seed, h2=h2, estimator_pieces=est.n_pieces, wall_ms=wall))
            h2s.append(h2)
        per_n[n] = _summary_stats(h2s)
    medians = [per_n[n]["median"] for n in spec.n_grid]
    slope, stderr = (loglog_slope(spec.n_grid, medians) if len(spec.n_grid) >= 2
                     else (math.nan, math.nan))
    summary = {"per_n": {str(n): per_n[n] for n in spec.n_grid},
               "slope": slope, "slope_stderr": stderr, "model": model.to_json()}
    return ExperimentResult(spec, rows, summary)


def _run_superminimax(spec: ExperimentSpec) -> ExperimentResult:
    flat = _run_rate(spec, truth_name="step2", label=f"{spec.name}:step2")
    tri = _run_rate(spec, truth_name="triangular", label=f"{spec.name}:triangular")
    rows = flat.rows + tri.rows
    ordering = {}
    for n in spec.n_grid:
        m_flat = flat.summary["per_n"][str(n)]["median"]
        m_tri = tri.summary["per_n"][str(n)]["median"]
        ordering[str(n)] = {"step2_median": m_flat, "triangular_median": m_tri,
                            "step2_below": m_flat < m_tri}
    summary = {"step2": flat.summary, "triangular": tri.summary, "ordering": ordering}
    return ExperimentResult(spec, rows, summary)


_AUDIT_SHAPES = {
    "triangular": (ShapeFn((0.0, 1.0),
                           lambda xs: np.sqrt(np.maximum(2.0 * (1.0 - np.asarray(xs)), 0.0))),
                   lambda xs: np.sqrt(np.maximum(2.0 * (1.0 - np.asarray(xs)), 0.0))),
    "square_decay": (ShapeFn((0.0, 1.0),
                             lambda xs: math.sqrt(3.0) * (1.0 - np.asarray(xs))),
                     lambda xs: np.where((np.asarray(xs) > 0) & (np.asarray(xs) <= 1),
                                         math.sqrt(3.0) * (1.0 - np.asarray(xs)), 0.0)),
    "exp_decay": (ShapeFn((0.0, 1.0),
                          lambda xs: np.exp(-np.asarray(xs))
                          * math.sqrt(2.0 / (1.0 - math.exp(-2.0)))),
                  lambda xs: np.where((np.asarray(xs) > 0) & (np.asarray(xs) <= 1),
                                      np.exp(-np.asarray(xs))
                                      * math.sqrt(2.0 / (1.0 - math.exp(-2.0))), 0.0)),
}


def _run_approx_audit(spec: ExperimentSpec) -> ExperimentResult:
    from .density import Partition

    rows = []
    checks = []
    d_grid = (1, 2, 4, 8, 16)
    for rep, (label, (shape, sqrt_supported)) in enumerate(_AUDIT_SHAPES.items()):
        part = Partition(shape.knots)
        m_val = functional(shape, part, 0).value
        for d_cells in d_grid:
            t0 = time.perf_counter()
            est = histogram_approx(shape, d_cells)
            measured = hellinger2_fn(sqrt_supported, shape.knots, est)
            bound = min(m_val / (4.0 * d_cells * d_cells), 1.0)
            wall = int(1000 * (time.perf_counter() - t0)) if spec.timing else 0
            rows.append(dict(experiment=f"{spec.name}:{label}", kind=spec.kind, n=d_cells,
                             replicate=rep, seed=spec.seed, h2=measured,
                             estimator_pieces=est.n_pieces, wall_ms=wall))
            checks.append({"shape": label, "D": d_cells, "functional": m_val,
                           "bound": bound, "measured": measured,
                           "ok": measured <= bound + 1e-9})
    summary = {"checks": checks, "all_ok": all(c["ok"] for c in checks)}
    return ExperimentResult(spec, rows, summary)


def random_piecewise_monotone_spec(rng, k: int) -> PiecewiseMonotoneSpec:
    """Random k-piece monotone spec with finite limits on the unbounded pieces."""
    while True:
        endpoints = np.sort(rng.uniform(-3.0, 3.0, size=k - 1))
        if k == 1 or np.min(np.diff(endpoints), initial=math.inf) >= 0.3:
            break
    bounds = (-math.inf,) + tuple(float(e) for e in endpoints) + (math.inf,)
    pieces = []
    for i in range(k):
        lo, hi = bounds[i], bounds[i + 1]
        direction = NONINCREASING if rng.random() < 0.5 else NONDECREASING
        sgn = -1.0 if direction == NONINCREASING else 1.0
        level = float(rng.uniform(-1.5, 1.5))
        amp = float(rng.uniform(0.3, 2.0))
        if math.isinf(lo) or math.isinf(hi):
            shift = float(rng.uniform(-2.0, 2.0))

            def fn(x, s=sgn, c=level, a=amp, sh=shift):
                return c + s * a * (2.0 / math.pi) * np.arctan(np.asarray(x) - sh)

            lim_lo = level - sgn * amp if math.isinf(lo) else float(fn(lo))
            lim_hi = level + sgn * amp if math.isinf(hi) else float(fn(hi))
        else:
            kind = rng.choice(["affine", "exp", "flat"])
            if kind == "affine":
                slope = sgn * amp / (hi - lo)

                def fn(x, c=level, s=slope, l0=lo):
                    return c + s * (np.asarray(x) - l0)

            elif kind == "exp":
                rate = float(rng.uniform(0.5, 3.0))

                def fn(x, c=level, s=sgn, a=amp, r=rate, l0=lo, h0=hi):
                    u = (np.asarray(x) - l0) / (h0 - l0)
                    return c + s * a * (1.0 - np.exp(-r * u)) / (1.0 - math.exp(-r))

            else:

                def fn(x, c=level):
                    return c + 0.0 * np.asarray(x)

            lim_lo, lim_hi = float(fn(lo)), float(fn(hi))
        pieces.append(MonotonePieceFn(fn, direction, lim_lo, lim_hi))
    values = tuple(float(v) for v in rng.uniform(-2.5, 2.5, size=k - 1))
    return PiecewiseMonotoneSpec(tuple(float(e) for e in endpoints), tuple(pieces), values)


def _run_vc_audit(spec: ExperimentSpec) -> ExperimentResult:
    rng = np.random.default_rng(spec.seed)
    rows = []
    violations = 0
    total = 0
    for rep in range(spec.replicates):
        k = int(rng.integers(1, 7))
        f = random_piecewise_monotone_spec(rng, k)
        bound = f.interval_count_bound()
        worst = 0
        for _ in range(10):
            a = float(rng.uniform(-1.8, 1.8))
            _, count = level_set_intervals(f, a)
            worst = max(worst, count)
            total += 1
            if count > bound:
                violations += 1
        rows.append(dict(experiment=f"{spec.name}:levelsets", kind=spec.kind, n=k,
                         replicate=rep, seed=spec.seed, h2=worst / bound,
                         estimator_pieces=worst, wall_ms=0))
    pts5 = [1.0, 2.0, 3.0, 4.0, 5.0]
    facts = {
        "intervals_fail_3pts": not brute_shatter(intervals_oracle([1.0, 2.0, 3.0]),
                                                 [1.0, 2.0, 3.0]),
        "unions2_fail_5pts": not brute_shatter(interval_unions_oracle(pts5, 2), pts5),
        "powerset_shatters": brute_shatter(power_set_oracle(pts5), pts5),
    }
    summary = {"levelset_checks": total, "violations": violations,
               "shatter_facts": facts, "all_ok": violations == 0 and all(facts.values())}
    return ExperimentResult(spec, rows, summary)


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run the experiment; writes CSV and JSON next to out_dir when set."""
    if spec.kind == "contamination":
        result = _run_contamination(spec)
    elif spec.kind == "rate":
        result = _run_rate(spec)
    elif spec.kind == "superminimax":
        result = _run_superminimax(spec)
    elif spec.kind == "approx_audit":
        result = _run_approx_audit(spec)
    elif spec.kind == "vc_audit":
        result = _run_vc_audit(spec)
    else:
        raise InputError(f"spec.kind: unknown kind {spec.kind!r}")
    if spec.out_dir is not None:
        result.write(spec.out_dir)
    return result
