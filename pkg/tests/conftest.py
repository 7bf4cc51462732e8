import numpy as np
import pytest

from robust_kf import StateSpaceModel

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def kalman_predict(mean, cov, a, q):
    return a @ mean, a @ cov @ a.T + q


def kalman_update(mean, cov, y, h, r):
    s = h @ cov @ h.T + r
    k = cov @ h.T @ np.linalg.inv(s)
    return mean + k @ (y - h @ mean), cov - k @ s @ k.T


def random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T + d * np.eye(d))


def linear_model(a, hmat, q, r):
    a = np.asarray(a, dtype=float)
    hmat = np.asarray(hmat, dtype=float)
    return StateSpaceModel(
        n=a.shape[0],
        m=hmat.shape[0],
        f=lambda x: x @ a.T,
        h=lambda x: x @ hmat.T,
        q=q,
        r=r,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
