"""Command-line front end.

Subcommands: fit, hellinger, approx, vc-check, select, bench. Numeric
output is fixed at 12 decimals so golden-file comparisons are byte-stable.
Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .approx import affine_approx, functional, histogram_approx, monotone_basing_partition
from .bench import ExperimentSpec, run_experiment
from .density import PiecewiseDensity, Sample, hellinger2, hellinger2_fn
from .errors import RhoestError
from .models import ShapeModel, build_candidates
from .rho import RhoConfig, rho_estimate
from .select import SelectionPlan, split_select

_FMT = ".12f"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhoest",
        description="Robust shape-restricted density estimation utilities.",
    )
    parser.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with criterion settings (kappa, budget)")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--budget", type=int, default=64, help="candidate budget")
    parser.add_argument("--kappa", type=float, default=35.7,
                        help="near-minimizer slack constant (default 35.7)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a density to a sample file under a shape model")
    p_fit.add_argument("sample", type=Path, help="newline-separated floats")
    p_fit.add_argument("model", type=Path, help="model JSON ({kind, pieces})")

    p_h = sub.add_parser("hellinger", help="squared Hellinger distance of two density JSONs")
    p_h.add_argument("first", type=Path)
    p_h.add_argument("second", type=Path)

    p_a = sub.add_parser("approx", help="approximation bound vs. measured error")
    p_a.add_argument("density", type=Path, help="density JSON to approximate")
    p_a.add_argument("--pieces", type=int, default=4, help="cell budget D")
    p_a.add_argument("--order", type=int, choices=(0, 1), default=0,
                     help="0: piecewise-constant, 1: affine square root")

    sub.add_parser("vc-check", help="run the level-set and shattering audit suite")

    p_s = sub.add_parser("select", help="split-sample selection across model families")
    p_s.add_argument("sample", type=Path, help="newline-separated floats, even count")
    p_s.add_argument("--plan", type=Path, default=None, help="plan JSON (families, weights)")

    p_b = sub.add_parser("bench", help="run an experiment spec JSON")
    p_b.add_argument("spec", type=Path)
    return parser


def _read_json(path: Path, what: str) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise RhoestError(f"{what}: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise RhoestError(f"{what}: invalid JSON in {path}: {exc}") from None


def _read_sample(path: Path) -> Sample:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise RhoestError(f"sample: file not found: {path}") from None
    values = []
    for i, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise RhoestError(f"sample: line {i + 1} is not a float: {line!r}") from None
    return Sample(np.asarray(values))


def _rho_config(args) -> RhoConfig:
    kappa, budget = args.kappa, args.budget
    if args.config is not None:
        cfg = _read_json(args.config, "config")
        if "kappa" in cfg:
            if not isinstance(cfg["kappa"], (int, float)):
                raise RhoestError("config.kappa: expected a number")
            kappa = float(cfg["kappa"])
        if "budget" in cfg:
            if not isinstance(cfg["budget"], int):
                raise RhoestError("config.budget: expected an integer")
            budget = cfg["budget"]
    return RhoConfig(kappa=kappa, candidate_budget=max(budget, 256))


def _out_dir(args) -> Path:
    out = args.out or Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_fit(args) -> int:
    smp = _read_sample(args.sample)
    model = ShapeModel.from_json(_read_json(args.model, "model"))
    cfg = _rho_config(args)
    cands = build_candidates(smp, model, args.budget, args.seed)
    est, diag = rho_estimate(smp, cands, cfg)
    out = _out_dir(args)
    (out / "estimate.json").write_text(json.dumps(est.to_json()) + "\n")
    (out / "diagnostics.json").write_text(json.dumps(diag.to_json(), indent=2) + "\n")
    print(f"criterion {format(diag.upsilon_values[diag.argmin_index], _FMT)} "
          f"pieces {est.n_pieces} -> {out / 'estimate.json'}")
    return 0


def _cmd_hellinger(args) -> int:
    d1 = PiecewiseDensity.from_json(_read_json(args.first, "density"))
    d2 = PiecewiseDensity.from_json(_read_json(args.second, "density"))
    print(format(hellinger2(d1, d2), _FMT))
    return 0


def _cmd_approx(args) -> int:
    d = PiecewiseDensity.from_json(_read_json(args.density, "density"))
    part = monotone_basing_partition(d)
    if args.order == 0:
        rep = functional(d, part, 0)
        est = histogram_approx(d, args.pieces, part)
        bound = min(rep.value / (4.0 * args.pieces ** 2), 1.0)
    else:
        rep = functional(d, part, 1)
        est = affine_approx(d, args.pieces, part)
        bound = 16.0 * rep.value / args.pieces ** 4
    lo, hi = d.support()
    measured = hellinger2_fn(d.sqrt_array, (lo,) + tuple(k for k in d.knots if lo < k < hi) + (hi,), est)
    print(f"functional {format(rep.value, _FMT)}")
    print(f"bound {format(bound, _FMT)}")
    print(f"measured {format(measured, _FMT)}")
    return 0 if measured <= bound + 1e-9 else 1


def _cmd_vc_check(args) -> int:
    spec = ExperimentSpec(kind="vc_audit", name="vc-check", seed=args.seed, replicates=100,
                          n_grid=(128,))
    result = run_experiment(spec)
    ok = result.summary["all_ok"]
    print(f"level-set checks: {result.summary['levelset_checks']}, "
          f"violations: {result.summary['violations']}")
    for fact, value in result.summary["shatter_facts"].items():
        print(f"{'PASS' if value else 'FAIL'} {fact}")
    print(f"{'PASS' if ok else 'FAIL'} vc-check")
    return 0 if ok else 1


def _cmd_select(args) -> int:
    smp = _read_sample(args.sample)
    if args.plan is not None:
        plan = SelectionPlan.from_json(_read_json(args.plan, "plan"))
    else:
        plan = SelectionPlan.default()
    cfg = _rho_config(args)
    est, report = split_select(smp, plan, cfg, args.seed)
    out = _out_dir(args)
    (out / "selected.json").write_text(json.dumps(est.to_json()) + "\n")
    (out / "selection_report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"selected family {report['selected_family']} -> {out / 'selected.json'}")
    return 0


def _cmd_bench(args) -> int:
    spec = ExperimentSpec.from_json(_read_json(args.spec, "spec"))
    if args.out is not None:
        spec = ExperimentSpec.from_json({**spec.to_json(), "out_dir": str(args.out)})
    result = run_experiment(spec)
    if spec.out_dir is None:
        result.write(_out_dir(args))
    print(json.dumps(result.to_json()["summary"], sort_keys=True, default=str)[:2000])
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "hellinger": _cmd_hellinger,
    "approx": _cmd_approx,
    "vc-check": _cmd_vc_check,
    "select": _cmd_select,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (RhoestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
