import numpy as np
import pytest
from hypothesis import settings

from urbench.channels import depolarizing, mixed_unitary, compose
from urbench.clifford import generate_group

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_mixture(rng: np.random.Generator, d: int, k: int | None = None):
    k = k or int(rng.integers(1, 4))
    w = rng.dirichlet(np.ones(k))
    w[-1] = 1.0 - w[:-1].sum()
    return mixed_unitary([(float(p), haar_unitary(rng, d)) for p in w])


def random_channel(rng: np.random.Generator, n: int):
    """A random trace-preserving channel: mixed unitary, depolarizing, or both composed."""
    kind = rng.integers(3)
    if kind == 0:
        return random_mixture(rng, 2**n)
    if kind == 1:
        return depolarizing(n, float(rng.uniform()))
    return compose(depolarizing(n, float(rng.uniform())), random_mixture(rng, 2**n))


@pytest.fixture(scope="session")
def group1():
    return generate_group(1)


@pytest.fixture(scope="session")
def group2():
    return generate_group(2)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def _report(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
