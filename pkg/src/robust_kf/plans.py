"""Experiment plans: JSON schema, builtin sweeps, and the CSV/manifest runner."""

from __future__ import annotations

import csv
import json
import platform
import time
from pathlib import Path

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .sim import ScenarioConfig, run_monte_carlo

DEFAULT_SEED = 2020

CSV_HEADER = [
    "plan", "scenario", "kappa12", "lambda1", "lambda2", "filter",
    "component", "trmse", "mean_iterations", "excluded_runs",
]


class PlanError(Exception):
    pass


class ParseError(PlanError):
    pass


class ValidationError(PlanError):
    pass


class ExperimentPlan(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    seed: int = Field(DEFAULT_SEED, ge=0, lt=2**64)
    scenarios: tuple[ScenarioConfig, ...]
    output_path: str | None = None

    @field_validator("scenarios")
    @classmethod
    def _check_scenarios(cls, v):
        if not v:
            raise ValueError("a plan needs at least one scenario")
        names = [s.name for s in v]
        if len(set(names)) != len(names):
            raise ValueError(f"scenario names must be unique, got {names}")
        return v


def scenario_name(index: int, kappa12: float, lam) -> str:
    return f"s{index:02d}_k{kappa12:+.2f}_l{lam[0]:.2f}_{lam[1]:.2f}"


def _resolve(raw: dict) -> ExperimentPlan:
    """Apply the master seed and default names, then validate."""
    if not isinstance(raw, dict):
        raise ValidationError("plan must be a JSON object")
    raw = dict(raw)
    seed = raw.get("seed", DEFAULT_SEED)
    scenarios = []
    for i, s in enumerate(raw.get("scenarios") or []):
        if not isinstance(s, dict):
            scenarios.append(s)
            continue
        s = dict(s)
        s.setdefault("seed", seed)
        if s.get("name") is None and isinstance(s.get("lambda"), (list, tuple)) and len(s["lambda"]) == 2:
            try:
                s["name"] = scenario_name(i, float(s.get("kappa12", 0.0)), [float(x) for x in s["lambda"]])
            except (TypeError, ValueError):
                pass
        scenarios.append(s)
    raw["scenarios"] = scenarios
    try:
        return ExperimentPlan.model_validate(raw)
    except pydantic.ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ValidationError(problems) from None


def _lambda2_grid():
    return [round(0.05 * i, 2) for i in range(1, 11)]


def _builtin_fig1():
    scenarios = [
        {"kappa12": 0.0, "lambda": [l1, l2], "L": 200}
        for l1 in (0.0, 0.2)
        for l2 in _lambda2_grid()
    ]
    return {"name": "fig1", "scenarios": scenarios}


def _builtin_fig2():
    scenarios = [
        {"kappa12": k, "lambda": [0.2, l2], "L": 500, "filters": ["hckf", "mhckf"]}
        for k in (0.3, 0.5, 0.8)
        for l2 in _lambda2_grid()
    ]
    return {"name": "fig2", "scenarios": scenarios}


def _builtin_fig3():
    kappas = sorted({round(-0.9 + 0.2 * i, 1) for i in range(10)} | {0.0})
    scenarios = [
        {"kappa12": k, "lambda": [0.2, 0.2], "L": 500, "filters": ["hckf", "mhckf"]}
        for k in kappas
    ]
    return {"name": "fig3", "scenarios": scenarios}


BUILTIN_PLANS = {
    "fig1": ("TRMSE vs contamination, uncorrelated channels (kappa12 = 0)", _builtin_fig1),
    "fig2": ("TRMSE vs lambda2 at lambda1 = 0.2 for kappa12 in {0.3, 0.5, 0.8}", _builtin_fig2),
    "fig3": ("TRMSE vs kappa12 at lambda1 = lambda2 = 0.2", _builtin_fig3),
}


def builtin_plan(name: str) -> ExperimentPlan:
    return _resolve(BUILTIN_PLANS[name][1]())


def load_plan(source: str | Path) -> ExperimentPlan:
    """Load a builtin plan by name, a plan JSON file, or a run manifest.

    Raises
    ------
    ParseError
        The file is missing or is not valid JSON.
    ValidationError
        A field is out of range; the message names the offending field.
    """
    if str(source) in BUILTIN_PLANS:
        return builtin_plan(str(source))
    path = Path(source)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ParseError(f"no such plan file or builtin plan: {source}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    if isinstance(raw, dict) and "manifest_version" in raw:
        raw = raw["plan"]
    return _resolve(raw)


def apply_overrides(plan: ExperimentPlan, seed=None, runs=None, steps=None) -> ExperimentPlan:
    """Return ``plan`` with CLI overrides applied to every scenario."""
    update = {}
    if seed is not None:
        update["seed"] = seed
    if runs is not None:
        update["L"] = runs
    if steps is not None:
        update["T"] = steps
    if not update:
        return plan
    raw = plan.model_dump(by_alias=True, mode="json")
    if seed is not None:
        raw["seed"] = seed
    raw["scenarios"] = [{**s, **update} for s in raw["scenarios"]]
    return _resolve(raw)


def fmt(x) -> str:
    return f"{float(x):.9g}"


def _rows(plan: ExperimentPlan, results) -> list[list[str]]:
    rows = []
    for scen, res in results:
        for name in sorted(res.trmse):
            for c, value in enumerate(res.trmse[name], start=1):
                rows.append([
                    plan.name, scen.name, fmt(scen.kappa12), fmt(scen.lam[0]), fmt(scen.lam[1]),
                    name, str(c), fmt(value), fmt(res.mean_iterations[name]), str(res.excluded_runs),
                ])
    rows.sort(key=lambda r: (r[1], r[5], int(r[6])))
    return rows


def run_plan(plan: ExperimentPlan, out_dir: str | Path, threads: int = 0, echo=None):
    """Run every scenario and write ``results.csv`` and ``manifest.json``.

    Returns ``(exit_status, rows)``; the status is nonzero when some
    scenario lost all of its runs to numeric failures.
    """
    from . import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    results, per_scenario = [], []
    status = 0
    for scen in plan.scenarios:
        t0 = time.perf_counter()
        res = run_monte_carlo(scen, threads=threads)
        elapsed = time.perf_counter() - t0
        if res.excluded_runs == res.runs:
            status = 1
            if echo:
                echo(f"scenario {scen.name}: all {res.runs} runs failed numerically")
        results.append((scen, res))
        per_scenario.append({
            "name": scen.name, "seed": scen.seed, "runs": res.runs,
            "excluded_runs": res.excluded_runs, "wall_seconds": round(elapsed, 3),
        })

    rows = _rows(plan, results)
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)

    manifest = {
        "manifest_version": 1,
        "plan": plan.model_dump(by_alias=True, mode="json"),
        "master_seed": plan.seed,
        "scenarios": per_scenario,
        "wall_seconds": round(time.perf_counter() - start, 3),
        "versions": {
            "robust_kf": __version__,
            "numpy": np.__version__,
            "pydantic": pydantic.__version__,
            "python": platform.python_version(),
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return status, rows
