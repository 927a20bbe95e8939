import time

import numpy as np
import pytest

from a1bellman.unweighted import UnweightedDP
from a1bellman.weighted import WeightedDP


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_udp():
    return UnweightedDP(n_u=17, n_z=33, n_alpha=17, n_beta=17, refine=1).run(3)


@pytest.fixture(scope="session")
def small_wdp():
    return WeightedDP(4.0, pattern="dyadic", n_s=17, n_b=5, n_u=9, n_a=7, n_g=5, n_t=5).run(2)


@pytest.fixture(scope="session")
def udp8():
    t0 = time.perf_counter()
    dp = UnweightedDP().run(8)
    dp.build_seconds = time.perf_counter() - t0
    return dp


@pytest.fixture(scope="session")
def wdp8_dyadic():
    return WeightedDP(8.0, pattern="dyadic").run(6)


@pytest.fixture(scope="session")
def wdp8_interval():
    return WeightedDP(8.0, pattern="interval").run(6)


@pytest.fixture
def report(capsys):
    """Print a line to the terminal even while output is captured."""
    def emit(line: str):
        with capsys.disabled():
            print(f"\n{line}")
    return emit


@pytest.fixture(scope="session")
def quad4():
    from a1bellman.remodel import build_extremal_quadruple
    return build_extremal_quadruple(4.0, 2, n_s=17, n_b=5, n_u=9, n_a=7, n_g=5, n_t=5)


@pytest.fixture(scope="session")
def quad8():
    from a1bellman.remodel import build_extremal_quadruple
    return build_extremal_quadruple(8.0, 3)
