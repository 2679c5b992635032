"""
Deterministic equivalents of the quadratic forms that make up the normalized channel gain matrix.

All traces are normalized, tr_N(X) = tr(X) / N_t:
    phi(S, rho)   = ((1/N_t) sum_i s_i R / (1 + e_i) + rho I)^-1,   e_i = s_i tr_N(R phi)
    phi'_C(S, rho) = phi (C + (1/N_t) sum_i s_i e'_i R / (1 + e_i)^2) phi,   e' = (I - J)^-1 v_C
    [J]_il = s_i s_l tr_N(R phi R phi) / (N_t (1 + e_l)^2),   [v_C]_i = s_i tr_N(R phi C phi)
C = I gives the plain derivative phi', C = R is needed for the cross terms. This normalization is the one under which
the deterministic gains match Monte Carlo averages of the finite-dimension gains.

Every loading set of one gain matrix shares R, so phi is diagonal in the eigenbasis of R and only depends on the
scalar c = (1/N_t) sum_i s_i / (1 + e_i). Leave-out sets are the full set with the removed loadings set to zero, which
lets all sets of one gain matrix be solved as a single vectorized batch.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from beamforminglib.ChannelGenerator import correlation_matrix
from beamforminglib.PerformanceMetrics import sinr_from_gains
from beamforminglib.ScenarioData import SystemParams
from beamforminglib.SolverErrors import FixedPointConvergenceError, InvalidRegimeError

_logger = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITERS = 10000
FIXED_POINT_DAMPING = 0.5


@dataclass(frozen=True)
class LoadingSet:
    """
    Nonnegative loadings s_i = eps_{j,m,n} * beta_{m,n} of one BS (or a leave-out variant), the regularizer
    rho = lambda_j / N_t and the shared correlation matrix R.
    """
    s: np.ndarray
    rho: float
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float).reshape(-1))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=complex))
        if np.any(self.s < 0):
            raise ValueError("Loadings must be nonnegative")
        if not self.rho > 0:
            raise ValueError("Regularizer rho must be positive, got " + str(self.rho))

    @property
    def N_t(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True)
class ResolventSolution:
    e: np.ndarray
    e_prime: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray


@dataclass(frozen=True)
class DetGainMatrix:
    """
    Deterministic gain matrix in the layout of PerformanceMetrics.finite_gain_matrix together with the quantities it
    is built from. m_circ, psi_circ: (M, K) direct terms. m_cross, psi_cross: MK x MK cross terms, zero on the
    diagonal. direct_e, direct_e_prime: (M, K, MK) fixed-point values of the leave-one-out set of every user, where
    the removed loading and those of other BSs are reported in the column of the user they belong to.
    """
    G_circ: np.ndarray
    m_circ: np.ndarray
    psi_circ: np.ndarray
    m_cross: np.ndarray
    psi_cross: np.ndarray
    direct_e: np.ndarray
    direct_e_prime: np.ndarray


def _spectrum(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eigenvalues, eigenvectors = scipy.linalg.eigh(R)
    return np.clip(eigenvalues, 0.0, None), eigenvectors


def _iterate_fixed_point(s: np.ndarray, rho: np.ndarray, r: np.ndarray, tol: float,
                         max_iters: int) -> tuple[np.ndarray, np.ndarray, int]:
    """
    Solves the fixed-point equations of a batch of loading sets.
    :param s: (B, L) loadings.
    :param rho: (B,) regularizers.
    :param r: (N_t,) eigenvalues of R.
    :return: Tuple (e of shape (B, L), c of shape (B,), iterations used).
    """
    N_t = r.shape[0]
    e = np.ones_like(s)
    damping = np.ones(s.shape[0])
    previous_residual = np.full(s.shape[0], np.inf)

    for iteration in range(max_iters + 1):
        c = np.sum(s / (1.0 + e), axis=1) / N_t
        normalized_trace = np.mean(r[None, :] / (c[:, None] * r[None, :] + rho[:, None]), axis=1)
        rhs = s * normalized_trace[:, None]

        residual = np.max(np.abs(e - rhs) / (1.0 + e), axis=1, initial=0.0)
        if np.max(residual, initial=0.0) <= tol:
            return e, c, iteration
        if iteration == max_iters:
            raise FixedPointConvergenceError(float(np.max(residual)), iteration)

        # oscillating sets switch to damped updates for good
        damping = np.where(residual > previous_residual, FIXED_POINT_DAMPING, damping)
        previous_residual = residual
        e = (1.0 - damping[:, None]) * e + damping[:, None] * rhs

    raise FixedPointConvergenceError(float("nan"), max_iters)


def solve_fixed_point(loading: LoadingSet, tol: float = FIXED_POINT_TOL,
                      max_iters: int = FIXED_POINT_MAX_ITERS) -> np.ndarray:
    """
    Unique nonnegative solution e of e_i = s_i tr_N(R phi(S, rho)), iterated from e = 1.
    :raise: FixedPointConvergenceError If the residual is still above tol after max_iters iterations.
    """
    r, _ = _spectrum(loading.R)
    e, _, _ = _iterate_fixed_point(loading.s[None, :], np.array([loading.rho]), r, tol, max_iters)
    return e[0]


def phi_matrix(loading: LoadingSet, e: np.ndarray) -> np.ndarray:
    N_t = loading.N_t
    loading_term = np.sum(loading.s / (1.0 + e)) / N_t * loading.R
    return scipy.linalg.inv(loading_term + loading.rho * np.eye(N_t))


def solve_e_prime(loading: LoadingSet, e: np.ndarray, C: np.ndarray | None = None) -> np.ndarray:
    """
    Solves (I - J) e' = v_C explicitly.
    :param C: The matrix of the derivative, defaults to the identity.
    :raise: InvalidRegimeError If the spectral radius of J is not below one.
    """
    size = loading.s.shape[0]
    if size == 0:
        return np.zeros(0)

    N_t = loading.N_t
    C = np.eye(N_t) if C is None else C
    phi = phi_matrix(loading, e)
    R_phi = loading.R @ phi
    tr_R_phi_R_phi = np.real(np.trace(R_phi @ R_phi)) / N_t

    J = np.outer(loading.s, loading.s / (1.0 + e) ** 2) * tr_R_phi_R_phi / N_t
    v = loading.s * np.real(np.trace(R_phi @ C @ phi)) / N_t

    if np.max(np.abs(np.linalg.eigvals(J))) >= 1.0:
        raise InvalidRegimeError("Spectral radius of J is not below one")
    system = np.eye(size) - J
    if np.linalg.cond(system) > 1e12:
        raise InvalidRegimeError("Derivative system is ill-conditioned")
    return scipy.linalg.solve(system, v)


def phi_prime_matrix(loading: LoadingSet, e: np.ndarray, e_prime: np.ndarray, C: np.ndarray | None = None) -> np.ndarray:
    N_t = loading.N_t
    C = np.eye(N_t) if C is None else C
    phi = phi_matrix(loading, e)
    correction = np.sum(loading.s * e_prime / (1.0 + e) ** 2) / N_t * loading.R
    return phi @ (C + correction) @ phi


def solve_resolvent(loading: LoadingSet, tol: float = FIXED_POINT_TOL,
                    max_iters: int = FIXED_POINT_MAX_ITERS) -> ResolventSolution:
    e = solve_fixed_point(loading, tol, max_iters)
    e_prime = solve_e_prime(loading, e)
    return ResolventSolution(e=e,
                             e_prime=e_prime,
                             phi=phi_matrix(loading, e),
                             phi_prime=phi_prime_matrix(loading, e, e_prime))


def build_det_gain_matrix(beta: np.ndarray,
                          lam: np.ndarray,
                          epsilon: np.ndarray,
                          params: SystemParams,
                          R: np.ndarray | None = None,
                          tol: float = FIXED_POINT_TOL,
                          max_iters: int = FIXED_POINT_MAX_ITERS) -> DetGainMatrix:
    """
    Deterministic equivalent of the normalized gain matrix of the (beta, lambda) beam family.
    Diagonal: D_{j,k} = N_t m_{j,k}^2 / psi_{j,k}. Off-diagonal (j,k),(m,n):
    psi_{j,k,m,n} / ((1 + beta_{m,n} m_{j,k,m,n})^2 psi_{j,k}).
    :param beta: (M, K) nonnegative leakage weights.
    :param lam: (M,) positive regularizers.
    :param epsilon: (M, M, K) pathlosses.
    :param R: Correlation matrix, built from params.rho if not given.
    """
    M, K, N_t = params.M, params.K, params.N_t
    size = M * K
    beta = np.asarray(beta, dtype=float).reshape(M, K)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (M,))
    epsilon = np.asarray(epsilon, dtype=float)
    if np.any(beta < 0):
        raise ValueError("beta must be nonnegative")
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive, got " + str(lam))

    R = correlation_matrix(params.rho, N_t) if R is None else R
    r, _ = _spectrum(R)

    # eps_flat[j, b]: pathloss from BS j to user b = m * K + n
    eps_flat = epsilon.reshape(M, size)
    full_loadings = eps_flat * beta.reshape(1, size)

    # one set per (BS j, own user k, removed user b); b == own user gives the leave-one-out set
    own = np.arange(M)[:, None] * K + np.arange(K)[None, :]
    loadings = np.broadcast_to(full_loadings[:, None, None, :], (M, K, size, size)).copy()
    removed = np.arange(size)
    loadings[np.arange(M)[:, None, None], np.arange(K)[None, :, None], removed[None, None, :],
             own[:, :, None]] = 0.0
    loadings[:, :, removed, removed] = 0.0

    flat_loadings = loadings.reshape(-1, size)
    rho = np.repeat(lam / N_t, K * size)
    e, c, iterations = _iterate_fixed_point(flat_loadings, rho, r, tol, max_iters)
    _logger.debug("Solved " + str(flat_loadings.shape[0]) + " fixed points in " + str(iterations) + " iterations")

    denominator = c[:, None] * r[None, :] + rho[:, None]
    tr_R_phi = np.mean(r / denominator, axis=1)
    tr_R_phi2 = np.mean(r / denominator ** 2, axis=1)
    tr_R_phi_R_phi = np.mean(r ** 2 / denominator ** 2, axis=1)

    # J is rank one: J = (tr_R_phi_R_phi / N_t) s (s / (1 + e)^2)^T
    spectral_radius = tr_R_phi_R_phi / N_t * np.sum(flat_loadings ** 2 / (1.0 + e) ** 2, axis=1)
    if np.any(spectral_radius >= 1.0 - 1e-12):
        raise InvalidRegimeError("Spectral radius of J is not below one: " + str(float(np.max(spectral_radius))))
    e_prime_identity = flat_loadings * (tr_R_phi2 / (1.0 - spectral_radius))[:, None]
    e_prime_corr = flat_loadings * (tr_R_phi_R_phi / (1.0 - spectral_radius))[:, None]

    def derivative_loading(e_prime: np.ndarray) -> np.ndarray:
        return np.sum(flat_loadings * e_prime / (1.0 + e) ** 2, axis=1) / N_t

    tr_R_phi_prime_identity = np.mean(r * (1.0 + derivative_loading(e_prime_identity)[:, None] * r)
                                      / denominator ** 2, axis=1)
    tr_R_phi_prime_corr = np.mean(r ** 2 * (1.0 + derivative_loading(e_prime_corr)[:, None])
                                  / denominator ** 2, axis=1)

    tr_R_phi = tr_R_phi.reshape(M, K, size)
    tr_R_phi_prime_identity = tr_R_phi_prime_identity.reshape(M, K, size)
    tr_R_phi_prime_corr = tr_R_phi_prime_corr.reshape(M, K, size)

    m_circ = np.zeros((M, K))
    psi_circ = np.zeros((M, K))
    m_cross = np.zeros((size, size))
    psi_cross = np.zeros((size, size))
    G_circ = np.zeros((size, size))
    for j in range(M):
        for k in range(K):
            a = own[j, k]
            eps_own = eps_flat[j, a]
            m_circ[j, k] = eps_own * tr_R_phi[j, k, a]
            psi_circ[j, k] = eps_own * tr_R_phi_prime_identity[j, k, a]

            others = removed != a
            m_cross[a, others] = eps_flat[j, others] * tr_R_phi[j, k, others]
            psi_cross[a, others] = eps_own * eps_flat[j, others] * tr_R_phi_prime_corr[j, k, others]

            if psi_circ[j, k] > 0:
                G_circ[a, a] = N_t * m_circ[j, k] ** 2 / psi_circ[j, k]
                G_circ[a, others] = psi_cross[a, others] / (
                        (1.0 + beta.reshape(-1)[others] * m_cross[a, others]) ** 2 * psi_circ[j, k])

    direct = removed.reshape(M, K)
    direct_e = e.reshape(M, K, size, size)[np.arange(M)[:, None], np.arange(K)[None, :], direct]
    direct_e_prime = e_prime_identity.reshape(M, K, size, size)[np.arange(M)[:, None], np.arange(K)[None, :], direct]

    return DetGainMatrix(G_circ=np.clip(G_circ, 0.0, None),
                         m_circ=m_circ,
                         psi_circ=psi_circ,
                         m_cross=m_cross,
                         psi_cross=psi_cross,
                         direct_e=direct_e,
                         direct_e_prime=direct_e_prime)


def det_performance(G_circ: np.ndarray, p: np.ndarray, weights: np.ndarray,
                    params: SystemParams) -> tuple[np.ndarray, float, float]:
    """
    Deterministic SINR of every user, weighted sum rate R_sum (bits/s/Hz) and EE eta (bits/s/Hz/W) for the powers p.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("Transmit powers must be nonnegative")

    sinr = sinr_from_gains(G_circ, p, params.sigma2)
    rate = float(np.sum(np.asarray(weights) * np.log2(1.0 + sinr)))
    return sinr, rate, rate / (params.zeta * float(np.sum(p)) + params.static_power)


def debug_rows(gains: DetGainMatrix, beta: np.ndarray, epsilon: np.ndarray) -> list[dict]:
    """
    Flattens the direct deterministic quantities into one row per (user (j, k), loading i) for CSV dumps.
    """
    M, K = gains.m_circ.shape
    loadings = np.asarray(epsilon).reshape(M, M * K) * np.asarray(beta).reshape(1, M * K)
    rows = []
    for j in range(M):
        for k in range(K):
            for i in range(M * K):
                rows.append({
                    "j": j,
                    "k": k,
                    "i": i,
                    "s": float(loadings[j, i]) if i != j * K + k else 0.0,
                    "e": float(gains.direct_e[j, k, i]),
                    "e_prime": float(gains.direct_e_prime[j, k, i]),
                    "m_circ": float(gains.m_circ[j, k]),
                    "psi_circ": float(gains.psi_circ[j, k]),
                })
    return rows
