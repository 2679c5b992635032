import numpy as np

from beamforminglib.ScenarioData import SystemParams, ChannelSet, BeamformerSet


def _check_noise(sigma2: float):
    if not sigma2 > 0:
        raise ValueError("Noise power sigma2 must be positive, got " + str(sigma2))


def link_amplitudes(channels: ChannelSet, beams: BeamformerSet) -> np.ndarray:
    """
    Complex link amplitudes c[j, k, m, n] = h_{m,j,k}^H v_{m,n}, i.e. what user (j, k) receives of the stream of
    user (m, n).
    """
    return np.einsum("mjka,mna->jkmn", channels.h.conj(), beams.v)


def all_sinr(channels: ChannelSet, beams: BeamformerSet, sigma2: float) -> np.ndarray:
    """
    SINR of every user.
    :return: (M, K) array of linear SINR values.
    """
    _check_noise(sigma2)
    received = np.abs(link_amplitudes(channels, beams)) ** 2
    desired = np.einsum("jkjk->jk", received)
    interference = np.sum(received, axis=(2, 3)) - desired
    return desired / (np.clip(interference, 0.0, None) + sigma2)


def sinr(channels: ChannelSet, beams: BeamformerSet, user: tuple[int, int], sigma2: float) -> float:
    """
    SINR of a single user (j, k): |h_{j,j,k}^H v_{j,k}|^2 over the interference from all other streams plus noise.
    """
    j, k = user
    return float(all_sinr(channels, beams, sigma2)[j, k])


def weighted_sum_rate(channels: ChannelSet, beams: BeamformerSet, weights: np.ndarray, sigma2: float) -> float:
    """
    Weighted sum rate in bits per channel use, sum of w_{j,k} * log2(1 + SINR_{j,k}).
    """
    return float(np.sum(np.asarray(weights) * np.log2(1.0 + all_sinr(channels, beams, sigma2))))


def total_power(beams: BeamformerSet, params: SystemParams) -> float:
    """
    Consumed power in W: zeta * transmit power + M * N_t * P_c + M * P_0.
    """
    return params.zeta * beams.transmit_power() + params.static_power


def spectral_energy_efficiency(channels: ChannelSet, beams: BeamformerSet, weights: np.ndarray,
                               params: SystemParams) -> float:
    """
    EE per unit bandwidth in bits/s/Hz/W. This is the unit the optimizers work in.
    """
    return weighted_sum_rate(channels, beams, weights, params.sigma2) / total_power(beams, params)


def energy_efficiency(channels: ChannelSet, beams: BeamformerSet, weights: np.ndarray,
                      params: SystemParams) -> float:
    """
    EE in bits/Joule: the weighted sum rate converted to bits/s with the system bandwidth, divided by the total
    consumed power.
    """
    return params.bandwidth * spectral_energy_efficiency(channels, beams, weights, params)


def finite_gain_matrix(channels: ChannelSet, directions: np.ndarray) -> np.ndarray:
    """
    Normalized channel gain matrix of one realization. Row (j, k) and column (m, n) hold |h_{j,m,n}^H vbar_{j,k}|^2,
    the power user (m, n) receives from the unit-norm beam of user (j, k). The diagonal holds the desired gains.
    :param directions: (M, K, N_t) unit-norm beam directions.
    :return: The MK x MK gain matrix, indices flattened as j * K + k.
    """
    M, K = directions.shape[:2]
    gains = np.abs(np.einsum("jmna,jka->jkmn", channels.h.conj(), directions)) ** 2
    return gains.reshape(M * K, M * K)


def sinr_from_gains(gains: np.ndarray, p: np.ndarray, sigma2: float) -> np.ndarray:
    """
    SINR of every user for a gain matrix (finite or deterministic) and per-user powers.
    :param gains: MK x MK gain matrix in the layout of finite_gain_matrix.
    :param p: (M, K) transmit powers.
    :return: (M, K) SINR values.
    """
    _check_noise(sigma2)
    p = np.asarray(p, dtype=float)
    flat_p = p.reshape(-1)
    desired = np.diag(gains) * flat_p
    interference = gains.T @ flat_p - desired
    return (desired / (np.clip(interference, 0.0, None) + sigma2)).reshape(p.shape)
