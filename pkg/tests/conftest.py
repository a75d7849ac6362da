import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_hpd(rng, n, batch=(), cond_floor=0.1):
    """Random Hermitian positive definite matrix (batched)."""
    A = rng.standard_normal(batch + (n, n)) + 1j * rng.standard_normal(batch + (n, n))
    return A @ np.conj(np.swapaxes(A, -1, -2)) + cond_floor * n * np.eye(n)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# criterion number -> (passed, description); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {text}")
