import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

import utils
from beamforminglib.BeamDirections import normalized_beam_directions
from beamforminglib.DeterministicEquivalents import build_det_gain_matrix, det_performance, DetGainMatrix, \
    FIXED_POINT_TOL, FIXED_POINT_MAX_ITERS
from beamforminglib.ScenarioData import SystemParams, ChannelSet, BeamformerSet

_logger = logging.getLogger(__name__)

# lambda_j never drops below this fraction of sigma2 / P_j, the deterministic equivalents need rho > 0
LAMBDA_FLOOR = 1e-9
# a BS is power limited once its total power is within this relative distance of P_j
BUDGET_ACTIVE_TOL = 1e-6


@dataclass(frozen=True)
class AsymptoticParams:
    """
    Long-term beamforming parameters. beta: (M, K) leakage weights, lam: (M,) regularizers lambda_j = eta * zeta + mu_j,
    p: (M, K) transmit powers in W. eta is the EE parameter the params were computed for and eta_circ their
    deterministic EE, both in bits/s/Hz/W.
    """
    beta: np.ndarray
    lam: np.ndarray
    p: np.ndarray
    eta: float = 0.0
    eta_circ: float = 0.0

    def __post_init__(self):
        for name in ("beta", "lam", "p"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if np.any(self.beta < 0) or np.any(self.p < 0):
            raise ValueError("beta and p must be nonnegative")
        if np.any(self.lam <= 0):
            raise ValueError("lambda must be positive, got " + str(self.lam))

    def params_hash(self) -> str:
        """
        SHA-256 over the raw bytes of (beta, lambda, p). Bitwise identical params hash identically.
        """
        digest = hashlib.sha256()
        for array in (self.beta, self.lam, self.p):
            digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        return digest.hexdigest()

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "lambda": self.lam.tolist(),
            "p": self.p.tolist(),
            "eta": self.eta,
            "eta_circ": self.eta_circ,
            "params_hash": self.params_hash(),
        }

    @staticmethod
    def from_dict(data: dict) -> "AsymptoticParams":
        return AsymptoticParams(beta=np.array(data["beta"]),
                                lam=np.array(data["lambda"]),
                                p=np.array(data["p"]),
                                eta=float(data.get("eta", 0.0)),
                                eta_circ=float(data.get("eta_circ", 0.0)))


@dataclass(frozen=True)
class InnerLayerResult:
    params: AsymptoticParams
    F_circ: float
    objective_trace: list[float]
    iterations: int
    converged: bool
    # set when the deterministic objective decreased and the best iterate was kept
    stopped_non_monotone: bool
    gains: DetGainMatrix


@dataclass(frozen=True)
class OuterLayerResult:
    """
    trace rows: (iteration, eta_min, eta_max, eta, F_circ, inner iterations).
    """
    params: AsymptoticParams
    eta_min: float
    eta_max: float
    outer_iterations: int
    inner_iterations: int
    trace: list[tuple[int, float, float, float, float, int]] = field(default_factory=list)


def _nat_weights(weights: np.ndarray) -> np.ndarray:
    return np.asarray(weights, dtype=float) / math.log(2.0)


def eta_max_det(epsilon: np.ndarray, params: SystemParams) -> float:
    """
    Upper end of the EE bisection of the large-system optimizer in bits/s/Hz/W,
    sum w_{j,k} log2(1 + P_j N_t / sigma2) / sum_j (N_t P_c + P_0).
    """
    rate_bound = np.sum(params.weights * np.log2(1.0 + params.P[:, None] * params.N_t / params.sigma2))
    return float(rate_bound / params.static_power)


def det_update_receivers(G_circ: np.ndarray, p: np.ndarray, sigma2: float,
                         weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Receivers and MSE weights on the deterministic gains,
    u_{j,k} = sqrt(g_{jk,jk} p_{j,k}) / (sum_{m,n} g_{mn,jk} p_{m,n} + sigma2), s_{j,k} = 1 + SINR_{j,k},
    and the leakage weights beta = w s u^2 (weights taken per nat).
    :return: Tuple (u, s, beta), each of shape (M, K).
    """
    if not sigma2 > 0:
        raise ValueError("Noise power sigma2 must be positive, got " + str(sigma2))
    p = np.asarray(p, dtype=float)
    flat_p = p.reshape(-1)
    amplitude = np.sqrt(np.diag(G_circ) * flat_p)
    received = G_circ.T @ flat_p + sigma2

    u = amplitude / received
    s = received / (received - amplitude ** 2)
    beta = _nat_weights(weights).reshape(-1) * s * u ** 2
    return u.reshape(p.shape), s.reshape(p.shape), beta.reshape(p.shape)


def det_update_power(G_circ: np.ndarray,
                     u: np.ndarray,
                     s: np.ndarray,
                     weights: np.ndarray,
                     eta: float,
                     params: SystemParams,
                     tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """
    Optimal powers p_{j,k} = a_{j,k}^2 for fixed receivers, with the amplitudes
    a_{j,k} = w s u sqrt(g_{jk,jk}) / (sum_{m,n} w_{m,n} s_{m,n} u_{m,n}^2 g_{jk,mn} + eta * zeta + mu_j).
    mu_j is 0 if the budget P_j is met without it, otherwise found by bisection.
    :return: Tuple (p of shape (M, K), lambda_j = eta * zeta + mu_j of shape (M,)).
    """
    M, K = params.M, params.K
    nat_weights = _nat_weights(weights).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    s = np.asarray(s, dtype=float).reshape(-1)

    numerators = (nat_weights * s * u * np.sqrt(np.diag(G_circ))).reshape(M, K)
    leakage = (G_circ @ (nat_weights * s * u ** 2)).reshape(M, K)
    base = eta * params.zeta

    p = np.zeros((M, K))
    lam = np.zeros(M)
    for j in range(M):
        def amplitudes(multiplier: float) -> np.ndarray:
            denominator = leakage[j] + base + multiplier
            return np.divide(numerators[j], denominator, out=np.zeros(K), where=numerators[j] != 0)

        def power_of_multiplier(multiplier: float) -> float:
            return float(np.sum(amplitudes(multiplier) ** 2))

        mu = utils.bisect_power_multiplier(power_of_multiplier, float(params.P[j]), tol=tol)
        p[j] = amplitudes(mu) ** 2
        lam[j] = max(base + mu, LAMBDA_FLOOR * params.sigma2 / params.P[j])

    return p, lam


def _power_objective(G_circ: np.ndarray, p: np.ndarray, nat_weights: np.ndarray, sigma2: float,
                     price: float) -> tuple[float, np.ndarray]:
    """
    Value and gradient in p of sum w log2(1 + SINR) - price * sum p on fixed deterministic gains, all flattened.
    """
    own = np.diag(G_circ)
    cross = G_circ - np.diag(own)
    received = G_circ.T @ p + sigma2
    interference = cross.T @ p + sigma2
    value = float(np.sum(nat_weights * (np.log(received) - np.log(interference)))) - price * float(np.sum(p))
    gradient = G_circ @ (nat_weights / received) - cross @ (nat_weights / interference) - price
    return value, gradient


def _stationary_multipliers(G_circ: np.ndarray, p: np.ndarray, weights: np.ndarray, eta: float,
                            params: SystemParams) -> np.ndarray:
    """
    Multipliers mu_j of the power budgets read off the stationarity conditions at p: zero for BSs below budget,
    otherwise the power-weighted mean of the marginal objective of the users of the BS.
    """
    M, K = params.M, params.K
    _, gradient = _power_objective(G_circ, p.reshape(-1), _nat_weights(weights).reshape(-1), params.sigma2,
                                   eta * params.zeta)
    gradient = gradient.reshape(M, K)
    mu = np.zeros(M)
    for j in range(M):
        total = float(np.sum(p[j]))
        if total >= params.P[j] * (1.0 - BUDGET_ACTIVE_TOL) and total > 0:
            mu[j] = max(float(np.sum(p[j] * gradient[j])) / total, 0.0)
    return mu


def refine_power(G_circ: np.ndarray,
                 p_start: np.ndarray,
                 weights: np.ndarray,
                 eta: float,
                 params: SystemParams,
                 max_iters: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """
    Solves the power subproblem max sum w log2(1 + SINR) - eta * zeta * sum p s.t. sum_k p_{j,k} <= P_j on fixed
    deterministic gains with SLSQP, starting from p_start. p_start is kept if the solver does not improve on it.
    :return: Tuple (p of shape (M, K), lambda_j = eta * zeta + mu_j of shape (M,)).
    """
    M, K = params.M, params.K
    nat_weights = _nat_weights(weights).reshape(-1)
    price = eta * params.zeta
    scale = np.repeat(params.P, K)
    start = np.asarray(p_start, dtype=float).reshape(-1)
    start_value, _ = _power_objective(G_circ, start, nat_weights, params.sigma2, price)
    norm = max(abs(start_value), 1.0)

    def negative_objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        value, gradient = _power_objective(G_circ, x * scale, nat_weights, params.sigma2, price)
        return -value / norm, -gradient * scale / norm

    budget_rows = np.kron(np.eye(M), np.ones((1, K)))
    result = scipy.optimize.minimize(negative_objective, start / scale, jac=True, method="SLSQP",
                                     bounds=[(0.0, 1.0)] * (M * K),
                                     constraints=[{"type": "ineq",
                                                   "fun": lambda x: 1.0 - budget_rows @ x,
                                                   "jac": lambda x: -budget_rows}],
                                     options={"ftol": 1e-15, "maxiter": max_iters})

    candidate = (np.clip(result.x, 0.0, 1.0) * scale).reshape(M, K)
    totals = np.sum(candidate, axis=1)
    over = totals > params.P
    candidate[over] *= (params.P[over] / totals[over])[:, None]

    candidate_value, _ = _power_objective(G_circ, candidate.reshape(-1), nat_weights, params.sigma2, price)
    p = candidate if np.all(np.isfinite(candidate)) and candidate_value > start_value else start.reshape(M, K)

    mu = _stationary_multipliers(G_circ, p, weights, eta, params)
    lam = np.maximum(price + mu, LAMBDA_FLOOR * params.sigma2 / params.P)
    return p, lam


def _objective(gains: DetGainMatrix, p: np.ndarray, eta: float, params: SystemParams) -> float:
    _, rate, _ = det_performance(gains.G_circ, p, params.weights, params)
    return rate - eta * params.zeta * float(np.sum(p))


def inner_layer(eta: float,
                epsilon: np.ndarray,
                params: SystemParams,
                tol: float = 1e-6,
                max_iters: int = 100,
                fixed_point_tol: float = FIXED_POINT_TOL,
                fixed_point_max_iters: int = FIXED_POINT_MAX_ITERS) -> InnerLayerResult:
    """
    WMMSE-style ascent of G(beta, lambda, p) = R_sum - eta * zeta * sum p on the deterministic gains.
    Starts from beta = w, lambda_j = eta * zeta (sigma2 / P_j for eta = 0) and p = P_j / K. Each iteration updates the
    receivers, rebuilds the gains for the new beta, updates the powers in closed form, refines them with
    refine_power on the same gains, reads lambda off the refined powers and evaluates the objective on the gains of the
    new (beta, lambda). Stops once the objective changes by at most tol relative. If the objective drops
    by more than tol the best iterate is kept.
    :return: The params of the best iterate and F(eta) = G - eta * static power.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative, got " + str(eta))

    def build(beta: np.ndarray, lam: np.ndarray) -> DetGainMatrix:
        return build_det_gain_matrix(beta, lam, epsilon, params, tol=fixed_point_tol,
                                     max_iters=fixed_point_max_iters)

    beta = np.array(params.weights, dtype=float)
    lam = np.full(params.M, eta * params.zeta) if eta > 0 else params.sigma2 / params.P
    p = np.repeat((params.P / params.K)[:, None], params.K, axis=1)

    gains = build(beta, lam)
    objective = _objective(gains, p, eta, params)
    trace = [objective]
    best = (objective, beta, lam, p, gains)
    converged = False
    stopped_non_monotone = False
    iterations = 0

    for iterations in range(1, max_iters + 1):
        u, s, beta = det_update_receivers(gains.G_circ, p, params.sigma2, params.weights)
        G_circ = build(beta, lam).G_circ
        p, _ = det_update_power(G_circ, u, s, params.weights, eta, params)
        p, lam = refine_power(G_circ, p, params.weights, eta, params)
        gains = build(beta, lam)
        new_objective = _objective(gains, p, eta, params)
        trace.append(new_objective)

        if new_objective < best[0] - tol * abs(best[0]):
            _logger.warning("Deterministic inner loop objective decreased at iteration " + str(iterations)
                            + " (eta=" + str(eta) + "), keeping the best iterate")
            stopped_non_monotone = True
            break

        change = abs(new_objective - objective)
        objective = new_objective
        if new_objective >= best[0]:
            best = (new_objective, beta, lam, p, gains)
        if change <= tol * max(abs(new_objective), 1e-12):
            converged = True
            break

    if not converged and not stopped_non_monotone:
        _logger.warning("Deterministic inner loop hit the iteration cap of " + str(max_iters) + " at eta=" + str(eta))

    best_objective, beta, lam, p, gains = best
    _, _, eta_circ = det_performance(gains.G_circ, p, params.weights, params)
    return InnerLayerResult(params=AsymptoticParams(beta=beta, lam=lam, p=p, eta=eta, eta_circ=eta_circ),
                            F_circ=best_objective - eta * params.static_power,
                            objective_trace=trace,
                            iterations=iterations,
                            converged=converged,
                            stopped_non_monotone=stopped_non_monotone,
                            gains=gains)


def outer_layer(epsilon: np.ndarray,
                params: SystemParams,
                delta: float | None = None,
                relative_delta: float = 1e-4,
                tol: float = 1e-6,
                max_iters: int = 100,
                max_outer_iters: int = 60,
                fixed_point_tol: float = FIXED_POINT_TOL,
                fixed_point_max_iters: int = FIXED_POINT_MAX_ITERS) -> OuterLayerResult:
    """
    Bisection on eta using the sign of the deterministic F(eta). The bracket starts at [0, eta_max_det] and its top is
    doubled while F(eta_max) > 0.
    :param delta: Final bracket width, defaults to relative_delta * eta_max_det.
    :return: The params of the last eta with F(eta) >= 0.
    """
    def solve(eta: float) -> InnerLayerResult:
        return inner_layer(eta, epsilon, params, tol=tol, max_iters=max_iters, fixed_point_tol=fixed_point_tol,
                           fixed_point_max_iters=fixed_point_max_iters)

    eta_min = 0.0
    eta_max = eta_max_det(epsilon, params)
    if delta is None:
        delta = relative_delta * eta_max
    if not delta > 0:
        raise ValueError("Bisection tolerance delta must be positive, got " + str(delta))

    inner_iterations = 0
    best: AsymptoticParams | None = None

    top = solve(eta_max)
    inner_iterations += top.iterations
    while top.F_circ > 0:
        _logger.warning("F(eta_max) > 0 at eta_max=" + str(eta_max) + ", doubling the bracket")
        eta_min = eta_max
        best = top.params
        eta_max *= 2.0
        top = solve(eta_max)
        inner_iterations += top.iterations

    trace = []
    outer = 0
    while eta_max - eta_min > delta and outer < max_outer_iters:
        outer += 1
        eta = 0.5 * (eta_min + eta_max)
        result = solve(eta)
        inner_iterations += result.iterations
        trace.append((outer, eta_min, eta_max, eta, result.F_circ, result.iterations))
        if result.F_circ >= 0:
            eta_min = eta
            best = result.params
        else:
            eta_max = eta

    if best is None:
        result = solve(0.0)
        inner_iterations += result.iterations
        best = result.params

    return OuterLayerResult(params=best,
                            eta_min=eta_min,
                            eta_max=eta_max,
                            outer_iterations=outer,
                            inner_iterations=inner_iterations,
                            trace=trace)


def reconstruct_beamformers(channels: ChannelSet, params_asym: AsymptoticParams) -> BeamformerSet:
    """
    Beamformers of the current realization from the long-term params, v_{j,k} = sqrt(p_{j,k}) vbar_{j,k}, where the
    directions only use the local CSI of BS j.
    """
    directions = normalized_beam_directions(channels, params_asym.beta, params_asym.lam)
    return BeamformerSet(directions * np.sqrt(params_asym.p)[:, :, None])
