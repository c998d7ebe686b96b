import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, pure=False):
    """Random qubit state from a Bloch vector inside (or on) the unit ball."""
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    r = 1.0 if pure else rng.uniform() ** (1 / 3)
    x, y, z = r * v
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


def random_unitary(rng):
    z = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / abs(np.diag(r)))


def random_effect(rng):
    """Random Hermitian 0 <= W <= I."""
    while True:
        c = rng.uniform(-1, 1, size=4)
        w = 0.5 * (c[0] * np.eye(2) + c[1] * np.array([[0, 1], [1, 0]])
                   + c[2] * np.array([[0, -1j], [1j, 0]]) + c[3] * np.diag([1, -1])) + 0.5 * np.eye(2)
        ev = np.linalg.eigvalsh(w)
        if ev[0] >= 0 and ev[1] <= 1:
            return w


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if passed else 'FAIL'}: {title}: {detail}")
