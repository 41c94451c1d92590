import numpy as np
import pytest

from dickemix.model import ModelParams, SpinSubspace, enumerate_subspaces
from dickemix.subspace import SubspaceMoments


def random_cone_moments(n_atoms, rng):
    """One (<Sz>, <Sz^2>) pair per sector, uniformly inside the moment cone."""
    out = []
    for sub in enumerate_subspaces(n_atoms):
        s = sub.s
        sz = rng.uniform(-s, s)
        # for S <= 1/2 the cone collapses: Sz^2 = S^2 identically
        sz2 = s * s if sub.two_s <= 1 else rng.uniform(sz * sz, s * s)
        out.append(SubspaceMoments(sub.two_s, sz, sz2, n_atoms=n_atoms))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def params4():
    return ModelParams(n_atoms=4)


@pytest.fixture(scope="session")
def dm_moments4(params4):
    from dickemix.sweeps import subspace_moments
    return subspace_moments(params4, "dm")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.format_line(k))
