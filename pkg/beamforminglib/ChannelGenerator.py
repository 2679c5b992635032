import logging
import math

import numpy as np
import scipy.linalg

from beamforminglib.ScenarioData import SystemParams, Geometry, UserDrop, ChannelSet

_logger = logging.getLogger(__name__)

SeedLike = int | np.random.SeedSequence | np.random.Generator | None


def correlation_matrix(rho: float, N_t: int) -> np.ndarray:
    """
    Exponential transmit correlation model, [R]_{i,j} = rho^|i-j|.
    :param rho: Correlation coefficient in [0, 1).
    :param N_t: Number of transmit antennas.
    :return: The Hermitian, positive definite N_t x N_t correlation matrix with unit diagonal.
    """
    if not 0 <= rho < 1:
        raise ValueError("Correlation coefficient rho must lie in [0, 1), got " + str(rho))
    if N_t < 1:
        raise ValueError("N_t must be at least 1, got " + str(N_t))

    indices = np.arange(N_t)
    return np.power(float(rho), np.abs(indices[:, None] - indices[None, :])).astype(complex)


def hermitian_sqrt(matrix: np.ndarray) -> np.ndarray:
    """
    Hermitian square root of a Hermitian PSD matrix via its eigendecomposition. Tiny negative eigenvalues caused by
    round-off are clipped to zero.
    """
    eigenvalues, eigenvectors = scipy.linalg.eigh(matrix)
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.conj().T


def hexagonal_bs_positions(M: int, cell_radius: float) -> np.ndarray:
    """
    BS positions of a cluster of M adjacent pointy-top hexagonal cells. Cells are taken ring by ring around the
    origin and counter-clockwise within a ring, so the first three cells are mutually adjacent.
    """
    rings = 0
    while 3 * rings * (rings + 1) + 1 < M:
        rings += 1

    cells: list[tuple[int, float, float, float]] = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            ring = (abs(q) + abs(r) + abs(q + r)) // 2
            if ring > rings:
                continue
            x = math.sqrt(3.0) * cell_radius * (q + r / 2.0)
            y = 1.5 * cell_radius * r
            angle = math.atan2(y, x) % (2 * math.pi)
            cells.append((ring, round(angle, 9), x, y))

    cells.sort(key=lambda cell: (cell[0], cell[1]))
    return np.array([[x, y] for (_, _, x, y) in cells[:M]])


def _is_inside_hexagon(offset: np.ndarray, cell_radius: float) -> bool:
    x = abs(offset[0])
    y = abs(offset[1])
    return x <= math.sqrt(3.0) / 2.0 * cell_radius and y <= cell_radius - x / math.sqrt(3.0)


def pathloss(distance, geometry: Geometry) -> np.ndarray:
    """
    Linear pathloss for the given distance(s) in meters.
    """
    distance = np.asarray(distance, dtype=float)
    pathloss_db = -10.0 * geometry.pathloss_exponent * np.log10(distance) + geometry.pathloss_offset_db
    return np.power(10.0, pathloss_db / 10.0)


def generate_user_drop(geometry: Geometry, M: int, K: int, rng_seed: SeedLike) -> UserDrop:
    """
    Places K users uniformly inside each of the M hexagonal cells by rejection sampling. A candidate is re-drawn if it
    falls outside its serving hexagon or closer than the minimum distance to any BS of the cluster.
    :return: The user drop, including the pathloss from every BS to every user.
    """
    rng = np.random.default_rng(rng_seed)
    bs_positions = hexagonal_bs_positions(M, geometry.cell_radius)
    half_width = math.sqrt(3.0) / 2.0 * geometry.cell_radius

    positions = np.zeros((M, K, 2))
    for j in range(M):
        for k in range(K):
            while True:
                offset = rng.uniform((-half_width, -geometry.cell_radius), (half_width, geometry.cell_radius))
                if not _is_inside_hexagon(offset, geometry.cell_radius):
                    continue
                candidate = bs_positions[j] + offset
                if np.min(np.linalg.norm(bs_positions - candidate, axis=1)) < geometry.min_distance:
                    continue
                positions[j, k] = candidate
                break

    # distances[m, j, k] between BS m and user (j, k)
    distances = np.linalg.norm(positions[None, :, :, :] - bs_positions[:, None, None, :], axis=-1)

    return UserDrop(positions=positions, bs_positions=bs_positions, epsilon=pathloss(distances, geometry))


def generate_channels(drop: UserDrop, params: SystemParams, rng_seed: SeedLike) -> ChannelSet:
    """
    Draws one flat-fading realization h_{m,j,k} = sqrt(eps_{m,j,k}) R^(1/2) z with z ~ CN(0, I).
    :param drop: The user drop providing the (M, M, K) pathlosses.
    :param params: The system params, providing N_t and the correlation coefficient.
    :param rng_seed: Seed (or seed sequence / generator) of this realization.
    """
    rng = np.random.default_rng(rng_seed)
    epsilon = np.asarray(drop.epsilon, dtype=float)
    R = correlation_matrix(params.rho, params.N_t)
    R_half = hermitian_sqrt(R)

    shape = epsilon.shape + (params.N_t,)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    h = np.sqrt(epsilon)[..., None] * np.einsum("ab,...b->...a", R_half, z)

    return ChannelSet(h=h, R=R, epsilon=epsilon)
