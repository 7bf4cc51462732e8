"""Dense SPD matrix helpers shared by the filters.

Every function accepts a single ``(d, d)`` matrix or a stack ``(..., d, d)``.
"""

from __future__ import annotations

import numpy as np

#: relative tolerance used for symmetry / reconstruction checks
REL_TOL = 1e-10

#: number of jitter doublings attempted by :func:`spd_repair`
MAX_ESCALATIONS = 10


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Cholesky factorization hit a non-positive pivot."""


class RepairFailed(np.linalg.LinAlgError):
    """Jitter escalation could not make a matrix positive definite."""


def symmetrize(m):
    """Return ``(m + m^T) / 2``, with mirrored entries bit-identical."""
    m = np.asarray(m, dtype=float)
    # a + b == b + a exactly in IEEE arithmetic
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def cholesky_lower(m):
    """Lower Cholesky factor ``L`` with ``L @ L.T == m``.

    Raises
    ------
    NotPositiveDefinite
        If any matrix in the stack is not positive definite.
    """
    m = np.asarray(m, dtype=float)
    if m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def _repair_one(m, jitter):
    try:
        np.linalg.cholesky(m)
        return m
    except np.linalg.LinAlgError:
        pass
    d = m.shape[-1]
    if jitter <= 0:
        scale = np.trace(m) / d
        # a zero / negative trace gives no usable scale; fall back to absolute
        jitter = 1e-12 * (scale if scale > 0 else 1.0)
    eye = np.eye(d)
    for _ in range(MAX_ESCALATIONS):
        candidate = m + jitter * eye
        try:
            np.linalg.cholesky(candidate)
            return candidate
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise RepairFailed(f"matrix not SPD after {MAX_ESCALATIONS} jitter escalations")


def spd_repair(m, jitter: float = 0.0):
    """Symmetrize ``m`` and add diagonal jitter until Cholesky succeeds.

    The jitter starts at ``jitter`` (or ``1e-12 * trace(m) / d`` when zero)
    and doubles on every failed attempt. Matrices that are already SPD come
    back symmetrized and otherwise untouched.
    """
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    s = symmetrize(m)
    if not np.all(np.isfinite(s)):
        raise RepairFailed("matrix has non-finite entries")
    try:
        np.linalg.cholesky(s)
        return s
    except np.linalg.LinAlgError:
        pass
    if s.ndim == 2:
        return _repair_one(s, jitter)
    flat = s.reshape(-1, *s.shape[-2:]).copy()
    for i in range(flat.shape[0]):
        flat[i] = _repair_one(flat[i], jitter)
    return flat.reshape(s.shape)


def forward_substitute(lower, b):
    """Solve ``lower @ x = b`` for lower-triangular ``lower`` (broadcasting)."""
    lower = np.asarray(lower, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast_shapes(lower.shape[:-1], b.shape)
    x = np.empty(shape)
    for i in range(shape[-1]):
        acc = b[..., i]
        for j in range(i):
            acc = acc - lower[..., i, j] * x[..., j]
        x[..., i] = acc / lower[..., i, i]
    return x
