import numpy as np
import scipy.linalg

from beamforminglib.ScenarioData import SystemParams, ChannelSet, BeamformerSet


def normalized_beam_directions(channels: ChannelSet, beta: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """
    Unit-norm beam directions of the (beta, lambda) parametrized beam family,
    vbar_{j,k} ~ (sum_{m,n} beta_{m,n} h_{j,m,n} h_{j,m,n}^H + lambda_j I)^-1 h_{j,j,k}.
    Only the local CSI of BS j enters the directions of its users.
    :param beta: (M, K) nonnegative leakage weights.
    :param lam: (M,) positive regularizers.
    :return: (M, K, N_t) unit-norm directions. Users with an all-zero own channel get a zero direction.
    """
    beta = np.asarray(beta, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (channels.M,))
    if np.any(beta < 0):
        raise ValueError("beta must be nonnegative")
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive, got " + str(lam))

    directions = np.zeros((channels.M, channels.K, channels.N_t), dtype=complex)
    for j in range(channels.M):
        local = channels.local(j).reshape(-1, channels.N_t)
        loading = (local.T * beta.reshape(-1)) @ local.conj() + lam[j] * np.eye(channels.N_t)
        unnormalized = scipy.linalg.solve(loading, channels.h[j, j].T, assume_a="pos")
        norms = np.linalg.norm(unnormalized, axis=0)
        directions[j] = np.divide(unnormalized, norms, out=np.zeros_like(unnormalized), where=norms > 0).T
    return directions


def equal_power_beams(channels: ChannelSet, params: SystemParams, beta: np.ndarray, lam: np.ndarray) -> BeamformerSet:
    """
    Parametrized directions scaled with the equal power split P_j / K.
    """
    directions = normalized_beam_directions(channels, beta, lam)
    return BeamformerSet(directions * np.sqrt(params.P / params.K)[:, None, None])
