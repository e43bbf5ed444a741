from __future__ import annotations

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def central_difference_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def relative_grad_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||); the usual gradcheck metric."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


@pytest.fixture
def grad_check():
    def _check(f, grad_fn_or_value, x, tol=1e-4, h=1e-6):
        analytic = grad_fn_or_value(x) if callable(grad_fn_or_value) else grad_fn_or_value
        numeric = central_difference_grad(f, x, h=h)
        err = relative_grad_error(np.asarray(analytic), numeric)
        assert err <= tol, f"gradient mismatch: rel err {err:.3e} > {tol}"
        return err
    return _check
