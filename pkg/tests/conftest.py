import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hybrideig.problems import (
    gen_laplacian_1d,
    gen_near_degenerate,
    gen_prescribed_spectrum,
    separated_spectrum,
)

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


class ShadowCounter:
    """Counts single-vector products independently of the solvers' own stats."""

    def __init__(self, A):
        self.A = A
        self.n = A.n
        self.count = 0
        self.widths = []

    def matvec(self, x):
        self.count += 1
        self.widths.append(1)
        return self.A.matvec(x)

    def matmat(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            return self.matvec(X)
        self.count += X.shape[1]
        self.widths.append(X.shape[1])
        return self.A.matmat(X)

    def diagonal(self):
        return self.A.diagonal()

    def frobenius_norm(self):
        return self.A.frobenius_norm()

    def norm_bound(self):
        return self.A.norm_bound()


@pytest.fixture
def shadow():
    return ShadowCounter


@pytest.fixture(scope="session")
def laplacian():
    return gen_laplacian_1d(400)


@pytest.fixture(scope="session")
def prescribed():
    return gen_prescribed_spectrum(separated_spectrum(1000), 4000, 0)


@pytest.fixture(scope="session")
def near_degenerate():
    return gen_near_degenerate(500)


@pytest.fixture(scope="session")
def fixtures(laplacian, prescribed, near_degenerate):
    return {"laplacian": laplacian, "prescribed": prescribed, "near-degenerate": near_degenerate}


@pytest.fixture(scope="session")
def dense_oracle(fixtures):
    """Lowest eigenpairs of every fixture from a dense diagonalization."""
    out = {}
    for name, A in fixtures.items():
        w, V = np.linalg.eigh(A.to_dense())
        out[name] = (w, V)
    return out


# acceptance reporting ------------------------------------------------------

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def acceptance():
    def record(criterion, passed, detail=""):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_RESULTS[criterion] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
