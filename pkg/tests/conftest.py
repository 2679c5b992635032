import numpy as np
import pytest

from beamforminglib.ChannelGenerator import generate_channels
from beamforminglib.ScenarioData import SystemParams, UserDrop, ChannelSet


def make_params(M: int = 2, K: int = 2, N_t: int = 4, P=1.0, P_c: float = 0.1, P_0: float = 1.0, zeta: float = 2.0,
                sigma2: float = 0.1, weights=1.0, rho: float = 0.0, bandwidth: float = 1.0) -> SystemParams:
    return SystemParams(M=M, K=K, N_t=N_t, P=P, P_c=P_c, P_0=P_0, zeta=zeta, sigma2=sigma2, weights=weights, rho=rho,
                        bandwidth=bandwidth)


def make_drop(params: SystemParams, epsilon=None) -> UserDrop:
    if epsilon is None:
        epsilon = np.ones((params.M, params.M, params.K))
    return UserDrop(positions=np.zeros((params.M, params.K, 2)),
                    bs_positions=np.zeros((params.M, 2)),
                    epsilon=epsilon)


def cross_cell_epsilon(params: SystemParams, own: float = 1.0, cross: float = 0.2) -> np.ndarray:
    """
    Pathlosses with strong own-cell links and weaker links from other cells' BSs.
    """
    epsilon = np.full((params.M, params.M, params.K), cross)
    for j in range(params.M):
        epsilon[j, j] = own
    return epsilon


def random_channels(params: SystemParams, seed: int, epsilon=None) -> ChannelSet:
    return generate_channels(make_drop(params, epsilon), params, seed)


@pytest.fixture
def small_params() -> SystemParams:
    return make_params()


@pytest.fixture
def small_channels(small_params) -> ChannelSet:
    return random_channels(small_params, 7, cross_cell_epsilon(small_params))
