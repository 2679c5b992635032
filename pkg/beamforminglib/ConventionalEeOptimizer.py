import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

import utils
from beamforminglib.BeamDirections import equal_power_beams
from beamforminglib.PerformanceMetrics import link_amplitudes, weighted_sum_rate
from beamforminglib.ScenarioData import SystemParams, ChannelSet, BeamformerSet

_logger = logging.getLogger(__name__)


@dataclass
class WmmseState:
    """
    Iterate of the WMMSE alternating minimization. u: (M, K) complex receivers, s: (M, K) MSE weights (>= 1),
    v: the beamformers, mu: (M,) power constraint multipliers, eta: EE parameter in bits/s/Hz/W.
    """
    u: np.ndarray
    s: np.ndarray
    v: BeamformerSet
    mu: np.ndarray
    eta: float


@dataclass(frozen=True)
class InnerSolveResult:
    beams: BeamformerSet
    # F(eta) = G(v) - eta * static power, F >= 0 iff the EE of beams is >= eta
    F_value: float
    objective_trace: list[float]
    iterations: int
    converged: bool
    # last WMMSE iterate, state.v are the returned beams
    state: WmmseState


@dataclass(frozen=True)
class DinkelbachResult:
    """
    Outcome of the EE bisection. eta_star is the midpoint of the final bracket [eta_min, eta_max] in bits/s/Hz/W,
    beams belong to the last feasible eta. trace rows: (iteration, eta_min, eta_max, eta, F, inner objective).
    """
    eta_star: float
    beams: BeamformerSet
    eta_min: float
    eta_max: float
    outer_iterations: int
    inner_iterations: int
    trace: list[tuple[int, float, float, float, float, float]] = field(default_factory=list)


def _nat_weights(weights: np.ndarray) -> np.ndarray:
    # rates are in bits, the MMSE surrogate works in nats
    return np.asarray(weights, dtype=float) / math.log(2.0)


def update_receivers(channels: ChannelSet, v: BeamformerSet, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    """
    MMSE receivers and the optimal MSE weights for fixed beamformers.
    u_{j,k} = h_{j,j,k}^H v_{j,k} / (sum_{m,n} |h_{m,j,k}^H v_{m,n}|^2 + sigma2) and s_{j,k} = 1 / (1 - conj(u) h^H v),
    which equals 1 + SINR_{j,k} for these receivers.
    :return: Tuple (u, s), both of shape (M, K).
    """
    if not sigma2 > 0:
        raise ValueError("Noise power sigma2 must be positive, got " + str(sigma2))
    if not np.all(np.isfinite(v.v)):
        raise ValueError("Beamformers must be finite")

    amplitudes = link_amplitudes(channels, v)
    desired = np.einsum("jkjk->jk", amplitudes)
    received = np.sum(np.abs(amplitudes) ** 2, axis=(2, 3)) + sigma2

    u = desired / received
    # 1 / (1 - |d|^2 / T) written without the cancellation
    s = received / (received - np.abs(desired) ** 2)
    assert np.all(np.isfinite(s)), "MSE weights are not finite"
    return u, s


def _multiplier_power_model(local: np.ndarray, own: np.ndarray, beta: np.ndarray, numerators: np.ndarray):
    """
    Eigen-decomposes the loading of one BS so the transmit power can be evaluated for any regularizer.
    :return: Tuple (eigenvalues, eigenvectors, projected right-hand sides, trace of the loading).
    """
    loading = (local.T * beta) @ local.conj()
    eigenvalues, eigenvectors = scipy.linalg.eigh(loading)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    rhs = own.T * numerators
    return eigenvalues, eigenvectors, eigenvectors.conj().T @ rhs, float(np.real(np.trace(loading)))


def update_beamformers(channels: ChannelSet,
                       u: np.ndarray,
                       s: np.ndarray,
                       weights: np.ndarray,
                       eta: float,
                       params: SystemParams,
                       mu_tol: float = 1e-12) -> tuple[BeamformerSet, np.ndarray]:
    """
    Optimal beamformers for fixed receivers and MSE weights, decoupled per BS:
    v_{j,k} = w s u (sum_{m,n} w s |u|^2 h_{j,m,n} h_{j,m,n}^H + (eta * zeta + mu_j) I)^-1 h_{j,j,k}.
    mu_j is 0 if the unconstrained solution meets the budget P_j, otherwise it is found by bisection.
    :return: Tuple (beamformers, multipliers mu of shape (M,)).
    """
    if np.any(s <= 0):
        raise ValueError("MSE weights s must be positive")

    nat_weights = _nat_weights(weights)
    beta = (nat_weights * s * np.abs(u) ** 2).reshape(-1)
    numerators = nat_weights * s * u

    v = np.zeros((params.M, params.K, params.N_t), dtype=complex)
    mu = np.zeros(params.M)
    for j in range(params.M):
        eigenvalues, eigenvectors, projected, trace = _multiplier_power_model(
            channels.local(j).reshape(-1, params.N_t), channels.h[j, j], beta, numerators[j])

        base = eta * params.zeta
        if base <= 0:
            base = max(1e-12 * trace / params.N_t, np.finfo(float).tiny)

        projected_power = np.sum(np.abs(projected) ** 2, axis=1)

        def power_of_multiplier(multiplier: float) -> float:
            return float(np.sum(projected_power / (eigenvalues + base + multiplier) ** 2))

        mu[j] = utils.bisect_power_multiplier(power_of_multiplier, float(params.P[j]), tol=mu_tol)
        v[j] = (eigenvectors @ (projected / (eigenvalues + base + mu[j])[:, None])).T

    return BeamformerSet(v), mu


def inner_objective(channels: ChannelSet, v: BeamformerSet, weights: np.ndarray, eta: float,
                    params: SystemParams) -> float:
    """
    G(v) = sum w_{j,k} R_{j,k} - eta * zeta * sum ||v_{j,k}||^2.
    """
    return weighted_sum_rate(channels, v, weights, params.sigma2) - eta * params.zeta * v.transmit_power()


def inner_solve(channels: ChannelSet,
                weights: np.ndarray,
                eta: float,
                params: SystemParams,
                init: BeamformerSet,
                tol: float = 1e-6,
                max_iters: int = 200) -> InnerSolveResult:
    """
    WMMSE alternating minimization for a fixed EE parameter eta.
    :param init: Feasible starting beamformers.
    :param tol: Stop once the relative change of the inner objective is below this value.
    :return: The final beams and F(eta) = G(v) - eta * static power.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative, got " + str(eta))
    if not np.all(np.isfinite(channels.h)):
        raise ValueError("Channels contain non-finite values")

    state = WmmseState(u=np.zeros((params.M, params.K), dtype=complex), s=np.ones((params.M, params.K)), v=init,
                       mu=np.zeros(params.M), eta=eta)
    objective = inner_objective(channels, init, weights, eta, params)
    trace = [objective]
    converged = False
    iterations = 0

    for iterations in range(1, max_iters + 1):
        u, s = update_receivers(channels, state.v, params.sigma2)
        beams, mu = update_beamformers(channels, u, s, weights, eta, params)
        state = WmmseState(u=u, s=s, v=beams, mu=mu, eta=eta)
        new_objective = inner_objective(channels, beams, weights, eta, params)
        trace.append(new_objective)

        change = abs(new_objective - objective)
        objective = new_objective
        if change <= tol * max(abs(new_objective), 1e-12):
            converged = True
            break

    if not converged:
        _logger.warning("WMMSE inner loop hit the iteration cap of " + str(max_iters) + " at eta=" + str(eta))

    return InnerSolveResult(beams=state.v,
                            F_value=objective - eta * params.static_power,
                            objective_trace=trace,
                            iterations=iterations,
                            converged=converged,
                            state=state)


def eta_max_finite(channels: ChannelSet, weights: np.ndarray, params: SystemParams) -> float:
    """
    Upper bound of the achievable EE of one realization in bits/s/Hz/W: every user gets the full budget of its BS
    without interference, and only the static power is consumed.
    """
    own_gains = np.sum(np.abs(np.einsum("jjka->jka", channels.h)) ** 2, axis=-1)
    rate_bound = np.sum(np.asarray(weights) * np.log2(1.0 + params.P[:, None] * own_gains / params.sigma2))
    return float(rate_bound / params.static_power)


def dinkelbach_solve(channels: ChannelSet,
                     weights: np.ndarray,
                     params: SystemParams,
                     delta: float | None = None,
                     init: BeamformerSet | None = None,
                     relative_delta: float = 1e-4,
                     tol: float = 1e-6,
                     max_iters: int = 200,
                     max_outer_iters: int = 60) -> DinkelbachResult:
    """
    Maximizes the EE of one channel realization by bisection on eta over [0, eta_max] using the sign of F(eta).
    :param delta: Final bracket width, defaults to relative_delta * eta_max.
    :param init: Starting beamformers of every inner solve, defaults to the VSINR solution.
    """
    if init is None:
        init = equal_power_beams(channels, params, np.ones((params.M, params.K)), params.sigma2 / params.P)

    eta_min = 0.0
    eta_max = eta_max_finite(channels, weights, params)
    if delta is None:
        delta = relative_delta * eta_max
    if not delta > 0:
        raise ValueError("Bisection tolerance delta must be positive, got " + str(delta))

    best_beams = init
    trace = []
    inner_iterations = 0
    outer = 0
    while eta_max - eta_min > delta and outer < max_outer_iters:
        outer += 1
        eta = 0.5 * (eta_min + eta_max)
        result = inner_solve(channels, weights, eta, params, init, tol=tol, max_iters=max_iters)
        inner_iterations += result.iterations
        trace.append((outer, eta_min, eta_max, eta, result.F_value, result.objective_trace[-1]))

        if result.F_value >= 0:
            eta_min = eta
            best_beams = result.beams
        else:
            eta_max = eta

    return DinkelbachResult(eta_star=0.5 * (eta_min + eta_max),
                            beams=best_beams,
                            eta_min=eta_min,
                            eta_max=eta_max,
                            outer_iterations=outer,
                            inner_iterations=inner_iterations,
                            trace=trace)
