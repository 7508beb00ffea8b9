import mpmath
import pytest

from sawstrip.core.geometry import LatticeKind, Shape, StripSpec, WeightingMode


def pytest_addoption(parser):
    parser.addoption(
        "--run-acceptance",
        action="store_true",
        default=False,
        help="run the slow reproductions of published tables",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: slow comparison against published values")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-acceptance"):
        return
    skip = pytest.mark.skip(reason="needs --run-acceptance")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def _mp_precision():
    with mpmath.workdps(50):
        yield


@pytest.fixture
def strip():
    """Factory for small strip specs."""

    def make(lattice, T, L=4, mode=WeightingMode.ALL_SITE, M=20, **extra):
        return StripSpec(
            lattice=LatticeKind(lattice),
            width_T=T,
            half_length_L=L,
            mode=WeightingMode(mode),
            trunc_M=M,
            **extra,
        )

    return make


@pytest.fixture
def patch_spec():
    def make(T, L, **extra):
        return StripSpec(
            lattice=LatticeKind.HONEYCOMB,
            width_T=T,
            half_length_L=L,
            mode=WeightingMode.ALTERNATE_SITE,
            shape=Shape.PATCH,
            **extra,
        )

    return make
