"""Cubature Kalman filtering with robust measurement updates.

Three measurement-update strategies are available:

``none``
    the plain cubature Kalman update with the nominal measurement covariance.
``joint``
    whiten the residual with the Cholesky factor of ``R`` (``beta = L^-1 r``)
    and reweight the whitened channels, ``R_bar = L W^-1 L^T``. This is the
    usual Huber-CKF.
``separate``
    normalize each channel by its own marginal standard deviation
    (``delta_i = r_i / sigma_i``) and inflate the channel variances while
    keeping every correlation coefficient, ``R_tilde = Lam R Lam`` with
    ``Lam = diag(w^-1/2)``. An outlier in one channel then cannot inflate the
    variance of a clean, correlated channel.

Both robust strategies alternate between computing weights at the current
estimate and re-running the cubature update from the same predicted belief,
until the mean moves by less than ``epsilon``.

All functions broadcast over leading batch axes: a belief may hold a single
``(n,)`` mean or a stack ``(B, n)``, which is how the Monte Carlo harness runs
every trial at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .costs import RobustCost
from .models import StateSpaceModel, decompose_correlation
from .numerics import cholesky_lower, forward_substitute, spd_repair, symmetrize


class NonPositiveSigma(ValueError):
    pass


class FilterStepError(RuntimeError):
    """A numeric failure inside :func:`filter_run`; ``step`` is the measurement index."""

    def __init__(self, step: int, cause: Exception | str):
        super().__init__(f"filter failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        n = self.mean.shape[-1]
        if self.cov.shape[-2:] != (n, n):
            raise ValueError(f"cov shape {self.cov.shape} does not match mean shape {self.mean.shape}")

    @property
    def batch_shape(self):
        return self.mean.shape[:-1]


class Strategy(str, enum.Enum):
    NONE = "none"
    JOINT = "joint"
    SEPARATE = "separate"


@dataclass(frozen=True)
class RobustUpdateConfig:
    strategy: Strategy = Strategy.SEPARATE
    epsilon: float = 1e-6
    max_iterations: int = 50
    weight_floor: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 < self.weight_floor < 1:
            raise ValueError(f"weight_floor must lie in (0, 1), got {self.weight_floor}")


@dataclass
class UpdateDiagnostics:
    """Per-update loop statistics (arrays carry the belief's batch shape)."""

    iterations: np.ndarray
    final_weights: np.ndarray
    converged: np.ndarray


# -- cubature core -----------------------------------------------------------


def cubature_points(mean, cov):
    """Third-degree spherical-radial points ``mean +/- sqrt(n) L e_i``.

    Returns an array of shape ``(..., 2n, n)``; each point has weight ``1/2n``.
    """
    mean = np.asarray(mean, dtype=float)
    n = mean.shape[-1]
    chol = cholesky_lower(cov)
    offsets = np.sqrt(n) * np.swapaxes(chol, -1, -2)  # row i = sqrt(n) L[:, i]
    centre = mean[..., None, :]
    return np.concatenate([centre + offsets, centre - offsets], axis=-2)


def _scatter(a, b):
    # (1/N) sum_k a_k b_k^T over the point axis
    return np.swapaxes(a, -1, -2) @ b / a.shape[-2]


def ckf_predict(model: StateSpaceModel, posterior: GaussianBelief) -> GaussianBelief:
    """Cubature time update through ``model.f`` plus process noise."""
    points = model.f(cubature_points(posterior.mean, posterior.cov))
    mean = points.mean(axis=-2)
    dev = points - mean[..., None, :]
    cov = _scatter(dev, dev) + model.q
    return GaussianBelief(mean, spd_repair(cov))


@dataclass
class _MeasurementMoments:
    """Cubature moments of ``h`` at a predicted belief; independent of R."""

    mean: np.ndarray
    cov: np.ndarray
    y_hat: np.ndarray
    pyy: np.ndarray
    pxy: np.ndarray

    def take(self, idx):
        return _MeasurementMoments(
            self.mean[idx], self.cov[idx], self.y_hat[idx], self.pyy[idx], self.pxy[idx]
        )


def _moments(model, predicted):
    points = cubature_points(predicted.mean, predicted.cov)
    z = model.h(points)
    y_hat = z.mean(axis=-2)
    dz = z - y_hat[..., None, :]
    dx = points - predicted.mean[..., None, :]
    return _MeasurementMoments(
        predicted.mean, predicted.cov, y_hat, _scatter(dz, dz), _scatter(dx, dz)
    )


def _correct(mom: _MeasurementMoments, y, r_eff):
    s = mom.pyy + r_eff
    # K^T = S^-1 Pxy^T since S is symmetric
    gain = np.swapaxes(np.linalg.solve(s, np.swapaxes(mom.pxy, -1, -2)), -1, -2)
    innovation = y - mom.y_hat
    mean = mom.mean + (gain @ innovation[..., None])[..., 0]
    cov = mom.cov - gain @ s @ np.swapaxes(gain, -1, -2)
    return mean, spd_repair(cov)


def ckf_update(model: StateSpaceModel, predicted: GaussianBelief, y, r_eff) -> GaussianBelief:
    """Cubature measurement update using the effective covariance ``r_eff``."""
    mean, cov = _correct(_moments(model, predicted), np.asarray(y, dtype=float), r_eff)
    return GaussianBelief(mean, cov)


# -- residuals and reweighting ----------------------------------------------


def nmfe(y, y_hat, r):
    """Whitened residual ``L^-1 (y - y_hat)`` with ``L`` the Cholesky factor of ``r``."""
    return forward_substitute(cholesky_lower(r), np.asarray(y, float) - np.asarray(y_hat, float))


def separate_errors(y, y_hat, sigma):
    """Residual of each channel divided by its own standard deviation."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise NonPositiveSigma(f"channel standard deviations must be positive, got {sigma}")
    return (np.asarray(y, float) - np.asarray(y_hat, float)) / sigma


def robust_weights(cost, e, floor):
    """``max(psi(e), floor)``; the floor keeps reweighted covariances invertible."""
    return np.maximum(cost.psi(e), floor)


def _scale_rows_cols(r, w):
    lam = 1.0 / np.sqrt(w)
    return symmetrize(lam[..., :, None] * r * lam[..., None, :])


def _is_diagonal(chol):
    return not np.any(np.tril(chol, -1))


def _joint_cov(r, chol, w):
    if _is_diagonal(chol):
        # L W^-1 L^T == Lam R Lam here; share the expression with the
        # separate strategy so the two agree bit for bit
        return _scale_rows_cols(r, w)
    # R + L (W^-1 - I) L^T returns R exactly when every weight is 1
    a = chol * (1.0 / w - 1.0)[..., None, :]
    return symmetrize(r + a @ np.swapaxes(chol, -1, -2))


def _separate_cov(r, chol, w):
    return _scale_rows_cols(r, w)


def reweight_joint(r, beta, cost: RobustCost, floor: float = 1e-8):
    """``R_bar = L diag(w)^-1 L^T`` with ``w = max(psi(beta), floor)``."""
    r = np.asarray(r, dtype=float)
    return _joint_cov(r, cholesky_lower(r), robust_weights(cost, beta, floor))


def reweight_separate(r, delta, cost: RobustCost, floor: float = 1e-8):
    """``R_tilde = Lam R Lam`` with ``Lam = diag(w^-1/2)``; correlations are preserved."""
    r = np.asarray(r, dtype=float)
    return _separate_cov(r, cholesky_lower(r), robust_weights(cost, delta, floor))


# -- iterated robust update --------------------------------------------------


def robust_update(
    model: StateSpaceModel,
    predicted: GaussianBelief,
    y,
    cost: RobustCost,
    config: RobustUpdateConfig,
) -> tuple[GaussianBelief, UpdateDiagnostics]:
    """Measurement update under ``config.strategy``.

    The robust strategies start from the predicted mean, compute weights from
    the residual ``y - h(x_k)`` at the current iterate, and redo the cubature
    update from the same predicted belief with the reweighted covariance. Each
    batch element stops on its own once ``||x_{k+1} - x_k|| < epsilon`` or
    after ``max_iterations``; hitting the cap is reported, not raised.
    """
    batch = predicted.batch_shape
    n, m = model.n, model.m
    size = int(np.prod(batch, dtype=int))
    flat = GaussianBelief(predicted.mean.reshape(size, n), predicted.cov.reshape(size, n, n))
    y = np.broadcast_to(np.asarray(y, dtype=float), batch + (m,)).reshape(size, m)
    mom = _moments(model, flat)

    if config.strategy is Strategy.NONE:
        mean, cov = _correct(mom, y, model.r)
        diag = UpdateDiagnostics(
            iterations=np.ones(batch, dtype=int),
            final_weights=np.ones(batch + (m,)),
            converged=np.ones(batch, dtype=bool),
        )
        return GaussianBelief(mean.reshape(batch + (n,)), cov.reshape(batch + (n, n))), diag

    chol_r = cholesky_lower(model.r)
    if config.strategy is Strategy.JOINT:
        reweight = _joint_cov

        def residual(a):
            return forward_substitute(chol_r, a)

    else:
        reweight = _separate_cov
        sigma = decompose_correlation(model.r).sigma

        def residual(a):
            return separate_errors(a, 0.0, sigma)

    mean = flat.mean.copy()
    cov = flat.cov.copy()
    weights = np.ones((size, m))
    iterations = np.zeros(size, dtype=int)
    converged = np.zeros(size, dtype=bool)
    active = np.arange(size)
    x = flat.mean.copy()
    for k in range(config.max_iterations):
        xa = x[active]
        w = robust_weights(cost, residual(y[active] - model.h(xa)), config.weight_floor)
        new_mean, new_cov = _correct(mom.take(active), y[active], reweight(model.r, chol_r, w))
        step = np.linalg.norm(new_mean - xa, axis=-1)
        mean[active] = new_mean
        cov[active] = new_cov
        weights[active] = w
        iterations[active] = k + 1
        x[active] = new_mean
        done = step < config.epsilon
        converged[active[done]] = True
        # non-finite iterates cannot converge; stop them here and let the caller decide
        active = active[~done & np.isfinite(step)]
        if active.size == 0:
            break

    belief = GaussianBelief(mean.reshape(batch + (n,)), cov.reshape(batch + (n, n)))
    diag = UpdateDiagnostics(
        iterations=iterations.reshape(batch),
        final_weights=weights.reshape(batch + (m,)),
        converged=converged.reshape(batch),
    )
    return belief, diag


def filter_run(
    model: StateSpaceModel,
    init: GaussianBelief,
    measurements,
    cost: RobustCost | None = None,
    config: RobustUpdateConfig | None = None,
    *,
    return_diagnostics: bool = False,
):
    """Run predict / robust-update over ``measurements`` (shape ``(T, ..., m)``).

    Returns one posterior per measurement, or ``(beliefs, diagnostics)`` when
    ``return_diagnostics`` is set.

    Raises
    ------
    FilterStepError
        On any numeric failure, carrying the index of the failing step.
    """
    cost = cost or RobustCost()
    config = config or RobustUpdateConfig()
    beliefs, diags = [], []
    belief = init
    for t, y in enumerate(measurements):
        try:
            predicted = ckf_predict(model, belief)
            belief, diag = robust_update(model, predicted, y, cost, config)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise FilterStepError(t, exc) from exc
        if not (np.all(np.isfinite(belief.mean)) and np.all(np.isfinite(belief.cov))):
            raise FilterStepError(t, "non-finite posterior")
        beliefs.append(belief)
        diags.append(diag)
    if return_diagnostics:
        return beliefs, diags
    return beliefs
