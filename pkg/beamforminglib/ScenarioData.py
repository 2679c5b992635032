from dataclasses import dataclass, field

import numpy as np


def _frozen_array(value, dtype) -> np.ndarray:
    array = np.array(value, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SystemParams:
    """
    Static description of the multi-cell MISO scenario. All values are in linear SI units (W, Hz); conversions from
    dBm/dB happen once when the config is parsed.

    M: number of cells (one BS per cell), K: users per cell, N_t: transmit antennas per BS, P: per-BS power budgets
    (length M), P_c: circuit power per antenna, P_0: static power per BS, zeta: amplifier inefficiency, sigma2: noise
    power, weights: user weights (M x K), rho: exponential transmit correlation coefficient, bandwidth: system
    bandwidth used to report EE in bits/Joule.
    """
    M: int
    K: int
    N_t: int
    P: np.ndarray
    P_c: float
    P_0: float
    zeta: float
    sigma2: float
    weights: np.ndarray
    rho: float = 0.0
    bandwidth: float = 20e6

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.N_t < 1:
            raise ValueError("M, K and N_t must be at least 1, got " + str((self.M, self.K, self.N_t)))

        power = np.broadcast_to(np.asarray(self.P, dtype=float), (self.M,))
        weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (self.M, self.K))
        object.__setattr__(self, "P", _frozen_array(power, float))
        object.__setattr__(self, "weights", _frozen_array(weights, float))

        if np.any(self.P <= 0) or self.P_c <= 0 or self.P_0 <= 0:
            raise ValueError("All powers must be positive")
        if self.sigma2 <= 0:
            raise ValueError("Noise power sigma2 must be positive, got " + str(self.sigma2))
        if self.zeta < 1:
            raise ValueError("Amplifier inefficiency zeta must be >= 1, got " + str(self.zeta))
        if not 0 <= self.rho < 1:
            raise ValueError("Correlation coefficient rho must lie in [0, 1), got " + str(self.rho))
        if np.any(self.weights <= 0):
            raise ValueError("User weights must be strictly positive")
        if self.bandwidth <= 0:
            raise ValueError("Bandwidth must be positive, got " + str(self.bandwidth))

    @property
    def static_power(self) -> float:
        """
        Power consumed independently of the beamformers, M * N_t * P_c + M * P_0.
        """
        return self.M * (self.N_t * self.P_c + self.P_0)

    def with_power(self, power) -> "SystemParams":
        """
        Returns a copy of these params with the per-BS power budgets replaced (scalar or length M).
        """
        return SystemParams(M=self.M, K=self.K, N_t=self.N_t, P=power, P_c=self.P_c, P_0=self.P_0,
                            zeta=self.zeta, sigma2=self.sigma2, weights=self.weights, rho=self.rho,
                            bandwidth=self.bandwidth)


@dataclass(frozen=True)
class Geometry:
    """
    Cell layout used for user drops: hexagonal cells with circumradius cell_radius, users at least min_distance
    away from every BS, pathloss 10*log10(eps) = -10 * pathloss_exponent * log10(d) + pathloss_offset_db.
    """
    cell_radius: float = 500.0
    min_distance: float = 35.0
    pathloss_exponent: float = 3.8
    pathloss_offset_db: float = -34.5

    def __post_init__(self):
        if not self.cell_radius > self.min_distance > 0:
            raise ValueError("Geometry requires cell_radius > min_distance > 0, got "
                             + str((self.cell_radius, self.min_distance)))


@dataclass(frozen=True)
class UserDrop:
    """
    One placement of users. positions: (M, K, 2) user coordinates in meters, bs_positions: (M, 2), epsilon: (M, M, K)
    linear pathloss where epsilon[m, j, k] belongs to the link from BS m to user (j, k).
    """
    positions: np.ndarray
    bs_positions: np.ndarray
    epsilon: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen_array(self.positions, float))
        object.__setattr__(self, "bs_positions", _frozen_array(self.bs_positions, float))
        object.__setattr__(self, "epsilon", _frozen_array(self.epsilon, float))


@dataclass(frozen=True)
class ChannelSet:
    """
    One channel realization. h: (M, M, K, N_t) complex where h[m, j, k] is the channel from BS m to user (j, k),
    R: (N_t, N_t) transmit correlation matrix, epsilon: (M, M, K) pathlosses.
    """
    h: np.ndarray
    R: np.ndarray
    epsilon: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen_array(self.h, complex))
        object.__setattr__(self, "R", _frozen_array(self.R, complex))
        object.__setattr__(self, "epsilon", _frozen_array(self.epsilon, float))
        if self.h.ndim != 4 or self.h.shape[:3] != self.epsilon.shape:
            raise ValueError("Channel array shape " + str(self.h.shape) + " does not match pathloss shape "
                             + str(self.epsilon.shape))

    @property
    def M(self) -> int:
        return self.h.shape[0]

    @property
    def K(self) -> int:
        return self.h.shape[2]

    @property
    def N_t(self) -> int:
        return self.h.shape[3]

    def local(self, j: int) -> np.ndarray:
        """
        Local CSI of BS j: the (M, K, N_t) channels from BS j to every user.
        """
        return self.h[j]


@dataclass(frozen=True)
class BeamformerSet:
    """
    Beamforming vectors v: (M, K, N_t) complex where v[j, k] serves user (j, k). dimension_deficient is set by
    zero-forcing when exact nulling is impossible.
    """
    v: np.ndarray
    dimension_deficient: bool = field(default=False)

    def __post_init__(self):
        object.__setattr__(self, "v", _frozen_array(self.v, complex))

    def per_bs_power(self) -> np.ndarray:
        return np.sum(np.abs(self.v) ** 2, axis=(1, 2))

    def transmit_power(self) -> float:
        return float(np.sum(np.abs(self.v) ** 2))

    def is_feasible(self, params: SystemParams, rel_tol: float = 1e-9) -> bool:
        return bool(np.all(self.per_bs_power() <= params.P * (1 + rel_tol)))

    @staticmethod
    def zeros(params: SystemParams) -> "BeamformerSet":
        return BeamformerSet(np.zeros((params.M, params.K, params.N_t), dtype=complex))
