import mpmath
import numpy as np
import pytest

from pbj.model import Design

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): exit criterion, reported in the summary")
    config.addinivalue_line("markers", "slow: long-running Monte-Carlo study")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _ACCEPTANCE.append((marker.args[0], rep.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome, detail in _ACCEPTANCE:
        status = "PASS" if outcome == "passed" else outcome.upper()
        line = f"[{status}] {label}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_design(rng, n, m0=1, m1=1):
    """Intercept plus ``m0 - 1`` Gaussian nuisance columns and ``m1`` tested columns."""
    X0 = np.column_stack([np.ones(n), rng.standard_normal((n, m0 - 1))]) if m0 else np.empty((n, 0))
    X1 = rng.standard_normal((n, m1))
    return Design(X0=X0, X1=X1)


def dense_residual_maker(A):
    """Explicit ``I - A (A^T A)^{-1} A^T`` via the normal equations."""
    n = A.shape[0]
    if A.shape[1] == 0:
        return np.eye(n)
    return np.eye(n) - A @ np.linalg.solve(A.T @ A, A.T)


def _mp_residual_maker(A):
    n, k = A.shape
    I = mpmath.eye(n)
    if k == 0:
        return I
    A = mpmath.matrix(A.tolist())
    return I - A * mpmath.inverse(A.T * A) * A.T


def dense_f(Y, X0, X1, dps=50):
    """Brute-force F-statistics from explicit projection matrices.

    Evaluated in ``dps``-digit arithmetic so the oracle itself carries no
    cancellation error when the numerator is tiny.
    """
    X = np.hstack([X0, X1])
    n, m = X.shape
    m1 = X1.shape[1]
    Y = np.asarray(Y, float).reshape(n, -1)
    with mpmath.workdps(dps):
        R0 = _mp_residual_maker(X0)
        R = _mp_residual_maker(X)
        D = R0 - R
        out = []
        for v in range(Y.shape[1]):
            y = mpmath.matrix(Y[:, v].tolist())
            num = (y.T * D * y)[0]
            den = (y.T * R * y)[0]
            out.append(float((n - m) * num / (m1 * den)))
    return np.array(out)
