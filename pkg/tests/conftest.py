import numpy as np
import pytest

from subrl.core import Smdp
from subrl.envs import GridSpec, build_grid
from subrl.gp import GpParams
from subrl.rewards import GpMutualInformation, ItemCollection, Modular, WeightedCoverage


def random_smdp(rng, V=3, A=2, H=2, deterministic=False, fixed_start=False) -> Smdp:
    """Small random SMDP with full-support (or one-hot) rows."""
    rng = np.random.default_rng(rng)
    if deterministic:
        P = np.zeros((H, V, A, V))
        nxt = rng.integers(0, V, size=(H, V, A))
        np.put_along_axis(P, nxt[..., None], 1.0, axis=-1)
    else:
        P = rng.dirichlet(np.ones(V), size=(H, V, A))
    if fixed_start:
        rho = np.eye(V)[rng.integers(V)]
    else:
        rho = rng.dirichlet(np.ones(V))
    return Smdp(V, A, H, rho, P)


def four_rewards(num_states=3, seed=0):
    """One instance of every reward kind on ``num_states`` states laid out as a 1 x n grid."""
    rng = np.random.default_rng(seed)
    n = num_states
    cov = WeightedCoverage(n, 1, rng.uniform(0.1, 1.0, size=(1, n)), footprint_radius=1)
    items = ItemCollection(n, [[v for v in range(0, n, 2)], [v for v in range(1, n, 2)]],
                           [1, max(1, (n // 2) // 2)])
    mod = Modular(rng.uniform(0, 1, n))
    mi = GpMutualInformation(GpParams.grid(n, 1, lengthscale=1.5))
    return {"coverage": cov, "items": items, "modular": mod, "mi": mi}


@pytest.fixture
def tiny():
    """|V|=3, |A|=2, H=2 stochastic SMDP."""
    return random_smdp(7)


@pytest.fixture
def grid5():
    return build_grid(GridSpec(5, 5, 6, start=(0, 0)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
