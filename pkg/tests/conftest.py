import numpy as np
import pytest

from hangstring.mesh import make_mesh


@pytest.fixture
def uniform():
    return make_mesh(256)


def smooth_family(mesh, seed=0, draws=20):
    """Smooth random profiles with a few cosine modes plus a linear part."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    s = mesh.centers
    out = []
    for _ in range(draws):
        a = rng.normal(size=4) / (1.0 + np.arange(4))
        out.append(sum(a[k] * np.cos((k + 0.5) * np.pi * s) for k in range(4)) + rng.normal() * (1 + s))
    return out


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record and print one acceptance line: verdict(tag, passed, detail)."""

    def _record(tag, passed, detail):
        line = f"{tag}: {'PASS' if passed else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
