"""Outlier-contaminated simulation, Monte Carlo harness and TRMSE metric."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .costs import HUBER_GAMMA, RobustCost
from .filters import FilterStepError, GaussianBelief, RobustUpdateConfig, Strategy, filter_run
from .models import StateSpaceModel, build_benchmark_model
from .numerics import cholesky_lower

#: true initial state and initial-estimate spread of the benchmark study
X0 = np.array([0.5, 0.5])
P0 = np.diag([0.01, 0.01])

FILTERS: dict[str, Strategy] = {
    "ckf": Strategy.NONE,
    "hckf": Strategy.JOINT,
    "mhckf": Strategy.SEPARATE,
}

#: runs per filter batch; fixed so results never depend on the worker count
CHUNK_SIZE = 250


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class OutlierSpec:
    """Per-channel contamination probability ``lam`` and noise scale ``eta``."""

    lam: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if lam.shape != eta.shape or lam.ndim != 1:
            raise ValueError(f"lambda and eta must be vectors of equal length, got {lam.shape}, {eta.shape}")
        if np.any((lam < 0) | (lam > 1)):
            raise ValueError(f"lambda entries must lie in [0, 1], got {lam}")
        if np.any(eta <= 0):
            raise ValueError(f"eta entries must be positive, got {eta}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def clean(cls, m: int):
        return cls(np.zeros(m), np.ones(m))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    measurements: np.ndarray
    contamination_mask: np.ndarray


def sample_measurement_noise(r, spec: OutlierSpec, rng: np.random.Generator, size=None):
    """Draw contaminated noise ``w ~ N(0, D R D)``.

    Each channel ``i`` is independently contaminated with probability
    ``lam[i]``; contaminated channels are scaled by ``eta[i]`` (``D`` holds
    ``eta[i]`` or 1), so the correlation structure of ``r`` is kept. Returns
    ``(w, mask)`` of shape ``size + (m,)``.
    """
    chol = cholesky_lower(r)
    m = chol.shape[-1]
    shape = (() if size is None else tuple(np.atleast_1d(size))) + (m,)
    mask = rng.random(shape) < spec.lam
    z = rng.standard_normal(shape)
    w = np.where(mask, spec.eta, 1.0) * (z @ chol.T)
    return w, mask


def _draw_noise(model: StateSpaceModel, spec: OutlierSpec, steps: int, rng):
    v = rng.standard_normal((steps, model.n)) @ cholesky_lower(model.q).T
    w, mask = sample_measurement_noise(model.r, spec, rng, size=steps)
    return v, w, mask


def _propagate(model: StateSpaceModel, x0, v, w):
    # v, w: (..., T, dim); x0 broadcasts against (..., n)
    states = np.empty(v.shape)
    x = np.broadcast_to(np.asarray(x0, dtype=float), v.shape[:-2] + v.shape[-1:])
    for t in range(v.shape[-2]):
        x = model.f(x) + v[..., t, :]
        states[..., t, :] = x
    return states, model.h(states) + w


def simulate_trajectory(model: StateSpaceModel, spec: OutlierSpec, x0, steps: int, rng) -> Trajectory:
    """Simulate ``steps`` transitions from ``x0`` with contaminated measurements."""
    v, w, mask = _draw_noise(model, spec, steps, rng)
    if steps == 0:
        return Trajectory(np.empty((0, model.n)), np.empty((0, model.m)), mask)
    states, ys = _propagate(model, x0, v, w)
    return Trajectory(states, ys, mask)


def trmse(true_states, estimates):
    """Time average of the across-run RMSE, per state component.

    Both arrays are ``(L, T, n)``; the square root is taken at each time step
    before averaging over time.
    """
    true_states = np.asarray(true_states, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if true_states.shape != estimates.shape or true_states.ndim != 3:
        raise ShapeMismatch(f"expected matching (L, T, n) arrays, got {true_states.shape} and {estimates.shape}")
    rmse = np.sqrt(np.mean((true_states - estimates) ** 2, axis=0))
    return rmse.mean(axis=0)


class ScenarioConfig(BaseModel):
    """One point of an experiment grid."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    name: str | None = None
    kappa12: float = Field(0.0, gt=-1.0, lt=1.0)
    lam: tuple[float, float] = Field(alias="lambda")
    eta: tuple[float, float] = (10.0, 10.0)
    T: int = Field(100, ge=1)
    L: int = Field(200, ge=1)
    gamma: float = Field(HUBER_GAMMA, gt=0)
    epsilon: float = Field(1e-6, gt=0)
    max_iterations: int = Field(50, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    filters: tuple[Literal["ckf", "hckf", "mhckf"], ...] = ("ckf", "hckf", "mhckf")

    @field_validator("lam")
    @classmethod
    def _check_lambda(cls, v):
        if any(not 0.0 <= x <= 1.0 for x in v):
            raise ValueError(f"contamination probabilities must lie in [0, 1], got {v}")
        return v

    @field_validator("eta")
    @classmethod
    def _check_eta(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError(f"scale factors must be positive, got {v}")
        return v

    @field_validator("filters")
    @classmethod
    def _check_filters(cls, v):
        if not v:
            raise ValueError("at least one filter is required")
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate filter names in {v}")
        return v


@dataclass
class TrmseResult:
    trmse: dict[str, np.ndarray]
    mean_iterations: dict[str, float]
    excluded_runs: int
    runs: int


def _run_rng(seed: int, run: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run,)))


def _generate_runs(config: ScenarioConfig, model: StateSpaceModel, spec: OutlierSpec):
    p0_chol = cholesky_lower(P0)
    init, vs, ws = [], [], []
    for j in range(config.L):
        rng = _run_rng(config.seed, j)
        init.append(X0 + p0_chol @ rng.standard_normal(model.n))
        v, w, _ = _draw_noise(model, spec, config.T, rng)
        vs.append(v)
        ws.append(w)
    states, ys = _propagate(model, X0, np.stack(vs), np.stack(ws))
    return np.stack(init), states, ys


def _filter_batch(model, init, ys, cost, config):
    """Filter runs ``init`` (B, n) on ``ys`` (B, T, m); return means and iteration counts."""
    belief = GaussianBelief(init, np.broadcast_to(P0, init.shape[:-1] + P0.shape))
    beliefs, diags = filter_run(
        model, belief, np.moveaxis(ys, -2, 0), cost, config, return_diagnostics=True
    )
    means = np.stack([b.mean for b in beliefs], axis=-2)
    iters = np.stack([d.iterations for d in diags], axis=-1)
    return means, iters


def _filter_chunk(model, init, ys, cost, config):
    """Like :func:`_filter_batch`, but isolates failing runs instead of raising."""
    size, steps = ys.shape[0], ys.shape[1]
    try:
        means, iters = _filter_batch(model, init, ys, cost, config)
        return means, iters, np.zeros(size, dtype=bool)
    except FilterStepError:
        pass
    means = np.full((size, steps, model.n), np.nan)
    iters = np.zeros((size, steps), dtype=int)
    failed = np.zeros(size, dtype=bool)
    for i in range(size):
        try:
            means[i], iters[i] = _filter_batch(model, init[i : i + 1], ys[i : i + 1], cost, config)
        except FilterStepError:
            failed[i] = True
    return means, iters, failed


def run_monte_carlo(config: ScenarioConfig, threads: int = 0) -> TrmseResult:
    """Run every configured filter on the same ``L`` simulated trajectories.

    Run ``j`` draws its initial estimate and all noise from a child stream of
    ``config.seed`` keyed by ``j``. A run that fails numerically in any
    filter is dropped from every filter's statistics.
    """
    model = build_benchmark_model(config.kappa12)
    spec = OutlierSpec(config.lam, config.eta)
    cost = RobustCost("huber", config.gamma)
    init, states, ys = _generate_runs(config, model, spec)

    chunks = [slice(s, min(s + CHUNK_SIZE, config.L)) for s in range(0, config.L, CHUNK_SIZE)]
    tasks = []
    for name in config.filters:
        rcfg = RobustUpdateConfig(FILTERS[name], config.epsilon, config.max_iterations)
        for sl in chunks:
            tasks.append((name, sl, rcfg))

    workers = threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outputs = list(pool.map(lambda t: _filter_chunk(model, init[t[1]], ys[t[1]], cost, t[2]), tasks))

    means = {name: np.empty_like(states) for name in config.filters}
    iters = {name: np.zeros(states.shape[:-1], dtype=int) for name in config.filters}
    failed = np.zeros(config.L, dtype=bool)
    for (name, sl, _), (m, it, bad) in zip(tasks, outputs):
        means[name][sl] = m
        iters[name][sl] = it
        failed[sl] |= bad

    keep = ~failed
    result = TrmseResult(trmse={}, mean_iterations={}, excluded_runs=int(failed.sum()), runs=config.L)
    for name in config.filters:
        if keep.any():
            result.trmse[name] = trmse(states[keep], means[name][keep])
            result.mean_iterations[name] = float(iters[name][keep].mean())
        else:
            result.trmse[name] = np.full(model.n, np.nan)
            result.mean_iterations[name] = float("nan")
    return result
