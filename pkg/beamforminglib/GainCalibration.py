import logging
import time
from dataclasses import dataclass

import numpy as np

from beamforminglib.BeamDirections import normalized_beam_directions
from beamforminglib.ChannelGenerator import generate_channels
from beamforminglib.DeterministicEquivalents import build_det_gain_matrix
from beamforminglib.PerformanceMetrics import finite_gain_matrix
from beamforminglib.ScenarioData import SystemParams, UserDrop

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationReport:
    """
    Comparison of the deterministic gain matrix with the Monte Carlo mean of the finite gain matrices.
    relative_error holds |G_circ - G_mean| / G_mean entrywise.
    """
    G_circ: np.ndarray
    G_mean: np.ndarray
    relative_error: np.ndarray
    draws: int

    @property
    def median_relative_error(self) -> float:
        return float(np.median(self.relative_error))

    @property
    def max_relative_error(self) -> float:
        return float(np.max(self.relative_error))

    @property
    def diagonal_median_relative_error(self) -> float:
        return float(np.median(np.diag(self.relative_error)))


def calibration_drop(params: SystemParams) -> UserDrop:
    """
    Unit-pathloss drop: every link has epsilon = 1, positions are placeholders.
    """
    return UserDrop(positions=np.zeros((params.M, params.K, 2)),
                    bs_positions=np.zeros((params.M, 2)),
                    epsilon=np.ones((params.M, params.M, params.K)))


def calibrate_gain_matrix(params: SystemParams,
                          drop: UserDrop,
                          beta: np.ndarray,
                          lam: np.ndarray,
                          draws: int,
                          rng_seed: int) -> CalibrationReport:
    """
    Samples the finite-dimension gain matrix of the (beta, lambda) beam family over independent channel draws and
    compares its mean with the deterministic equivalent.
    """
    if draws < 1:
        raise ValueError("At least one channel draw is required, got " + str(draws))

    start_time = time.time()
    seeds = np.random.SeedSequence(rng_seed).spawn(draws)

    G_sum = np.zeros((params.M * params.K, params.M * params.K))
    for seed in seeds:
        channels = generate_channels(drop, params, seed)
        G_sum += finite_gain_matrix(channels, normalized_beam_directions(channels, beta, lam))
    G_mean = G_sum / draws

    G_circ = build_det_gain_matrix(beta, lam, drop.epsilon, params).G_circ
    relative_error = np.abs(G_circ - G_mean) / G_mean

    _logger.info("Calibrated the deterministic gain matrix against " + str(draws) + " draws in "
                 + str(time.time() - start_time) + " seconds.")
    return CalibrationReport(G_circ=G_circ, G_mean=G_mean, relative_error=relative_error, draws=draws)
