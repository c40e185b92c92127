import pytest

from sepdiff import build_kernel


@pytest.fixture
def nn1d():
    """Symmetric nearest-neighbour walk on Z."""
    return build_kernel(1, [((1,), 0.5), ((-1,), 0.5)])


@pytest.fixture
def meanzero1d():
    """Mean-zero but not symmetric: +2 w.p. 1/3, -1 w.p. 2/3."""
    return build_kernel(1, [((2,), "1/3"), ((-1,), "2/3")])


@pytest.fixture
def totally_asym1d():
    """All mass on +1."""
    return build_kernel(1, [((1,), 1.0)])


@pytest.fixture
def nn2d():
    """Symmetric nearest-neighbour walk on Z^2."""
    q = 0.25
    return build_kernel(
        2, [((1, 0), q), ((-1, 0), q), ((0, 1), q), ((0, -1), q)]
    )


NN1D = [((1,), 0.5), ((-1,), 0.5)]
MZ1D = [((2,), 1.0 / 3.0), ((-1,), 2.0 / 3.0)]
ASYM1D = [((1,), 1.0)]
NN2D = [((1, 0), 0.25), ((-1, 0), 0.25), ((0, 1), 0.25), ((0, -1), 0.25)]
