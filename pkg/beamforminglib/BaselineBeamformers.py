import logging

import numpy as np

from beamforminglib.BeamDirections import equal_power_beams
from beamforminglib.ConventionalEeOptimizer import inner_solve, InnerSolveResult
from beamforminglib.ScenarioData import SystemParams, ChannelSet, BeamformerSet

_logger = logging.getLogger(__name__)


def _equal_power_scale(params: SystemParams) -> np.ndarray:
    return np.sqrt(params.P / params.K)[:, None, None]


def mrt(channels: ChannelSet, params: SystemParams) -> BeamformerSet:
    """
    Maximal ratio transmission, v_{j,k} = sqrt(P_j / K) h_{j,j,k} / ||h_{j,j,k}||.
    """
    own = np.einsum("jjka->jka", channels.h)
    norms = np.linalg.norm(own, axis=-1)
    if np.any(norms == 0):
        raise ValueError("MRT is undefined for an all-zero own channel")
    return BeamformerSet(own / norms[:, :, None] * _equal_power_scale(params))


def zfbf(channels: ChannelSet, params: SystemParams) -> BeamformerSet:
    """
    Zero-forcing across the whole cluster: the beam of user (j, k) is the column of the pseudo-inverse of the stacked
    channels from BS j to all MK users, scaled to P_j / K. With MK > N_t exact nulling is impossible; the least-squares
    solution is returned and the result is flagged dimension_deficient.
    """
    M, K, N_t = params.M, params.K, params.N_t
    deficient = M * K > N_t
    if deficient:
        _logger.warning("ZFBF is dimension deficient: " + str(M * K) + " users but only " + str(N_t) + " antennas")

    v = np.zeros((M, K, N_t), dtype=complex)
    for j in range(M):
        stacked = channels.local(j).reshape(M * K, N_t).conj()
        inverse = np.linalg.pinv(stacked)
        columns = inverse[:, j * K:(j + 1) * K].T
        norms = np.linalg.norm(columns, axis=-1)
        if np.any(norms == 0):
            raise ValueError("ZFBF found no direction for a user of BS " + str(j))
        v[j] = columns / norms[:, None]

    return BeamformerSet(v * _equal_power_scale(params), dimension_deficient=deficient)


def vsinr(channels: ChannelSet, params: SystemParams) -> BeamformerSet:
    """
    Virtual SINR beams: the parametrized directions with beta = 1 and lambda_j = sigma2 / P_j, equal power split.
    """
    return equal_power_beams(channels, params, np.ones((params.M, params.K)), params.sigma2 / params.P)


def wmmse_sum_rate_result(channels: ChannelSet,
                          params: SystemParams,
                          init: BeamformerSet | None = None,
                          tol: float = 1e-6,
                          max_iters: int = 200) -> InnerSolveResult:
    if init is None:
        init = vsinr(channels, params)
    return inner_solve(channels, params.weights, 0.0, params, init, tol=tol, max_iters=max_iters)


def wmmse_sum_rate(channels: ChannelSet,
                   params: SystemParams,
                   init: BeamformerSet | None = None,
                   tol: float = 1e-6,
                   max_iters: int = 200) -> BeamformerSet:
    """
    Weighted sum-rate maximization: the WMMSE inner loop with eta = 0, started from the VSINR beams by default.
    """
    return wmmse_sum_rate_result(channels, params, init, tol, max_iters).beams
