"""Closed-form performance metrics: SINR, rate, SCNR, per-AP power."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hermitian import hermitian
from .scenario import ScenarioRealization, SystemConfig, steering_vector

POWER_RTOL = 1e-6


@dataclass
class BeamformingSolution:
    """Stacked beamformers ``v`` of shape ``(K, M_t * N)``, one row per stream."""

    v: np.ndarray
    scheme: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.v.shape[0]

    def grams(self) -> np.ndarray:
        """``V_k = v_k v_k^H`` stacked as ``(K, n, n)``."""
        return np.einsum("ki,kj->kij", self.v, self.v.conj())

    def aggregate(self) -> np.ndarray:
        """``sum_k v_k v_k^H``."""
        return self.v.T @ self.v.conj()


@dataclass
class SensingMatrix:
    E: np.ndarray
    per_target_blocks: list = field(default_factory=list)


def selection_matrix(m: int, M: int, N: int) -> np.ndarray:
    """Diagonal 0/1 matrix selecting the antennas of AP ``m`` (1-based)."""
    if not 1 <= m <= M:
        raise IndexError(f"AP index {m} outside 1..{M}")
    d = np.zeros(M * N)
    d[(m - 1) * N:m * N] = 1.0
    return np.diag(d)


def ap_slice(m: int, N: int) -> slice:
    """Stacked-vector slice of AP ``m`` (0-based)."""
    return slice(m * N, (m + 1) * N)


def sinr_all(h: np.ndarray, v: np.ndarray, sigma_sq) -> np.ndarray:
    """SINR of every user; ``h`` and ``v`` are ``(K, n)``."""
    sigma_sq = np.broadcast_to(np.asarray(sigma_sq, dtype=float), (h.shape[0],))
    if np.any(sigma_sq <= 0):
        raise ValueError("noise power must be > 0")
    g = np.abs(h.conj() @ v.T) ** 2              # g[k, j] = |h_k^H v_j|^2
    signal = np.diag(g)
    interference = g.sum(axis=1) - signal
    return signal / (interference + sigma_sq)


def user_sinr(h_k: np.ndarray, solution: BeamformingSolution, k: int, sigma_k_sq: float) -> float:
    """SINR of user ``k`` served by stream ``k`` of ``solution``."""
    if sigma_k_sq <= 0:
        raise ValueError("noise power must be > 0")
    v = solution.v
    if h_k.shape[-1] != v.shape[1]:
        raise ValueError("channel and beamformer lengths differ")
    g = np.abs(v.conj() @ h_k) ** 2
    return float(g[k] / (g.sum() - g[k] + sigma_k_sq))


def sinr_trace_form(H_k: np.ndarray, V: np.ndarray, k: int, sigma_k_sq: float) -> float:
    """SINR written with Grams ``H_k`` and ``V`` (``(K, n, n)``)."""
    t = np.real(np.einsum("ij,kji->k", H_k, V))
    return float(t[k] / (t.sum() - t[k] + sigma_k_sq))


def rate(gamma):
    """Achievable rate ``log2(1 + gamma)`` in bit/s/Hz."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be >= 0")
    return np.log2(1.0 + gamma)


def sinr_threshold(r_min):
    """SINR needed for rate ``r_min``: ``2^r - 1``."""
    r_min = np.asarray(r_min, dtype=float)
    if np.any(r_min < 0):
        raise ValueError("rate must be >= 0")
    return 2.0 ** r_min - 1.0


def stacked_steering(angles: np.ndarray, N: int) -> np.ndarray:
    """Concatenate ``a(phi_m)`` over transmit APs."""
    return np.concatenate([steering_vector(phi, N) for phi in angles])


def build_E(realization: ScenarioRealization, config: SystemConfig) -> SensingMatrix:
    """Sensing matrix ``E``, block-diagonal by transmit AP."""
    M_t, N, Q = config.M_t, config.N, config.Q
    aod = np.asarray(realization.aod)
    if aod.shape != (M_t, Q) or not np.all(np.isfinite(aod)):
        raise ValueError("realization is missing departure angles")
    p = np.asarray(realization.presence_prob, dtype=float)
    weight = p[None, :] * realization.sens_var.sum(axis=2)        # (M_t, Q)

    n = M_t * N
    E = np.zeros((n, n), dtype=complex)
    blocks = []
    for q in range(Q):
        a_bar = stacked_steering(aod[:, q], N)
        blocks.append(np.outer(a_bar, a_bar.conj()))
        for m in range(M_t):
            s = ap_slice(m, N)
            # A_m E_q A_m^H keeps only the (m, m) block
            E[s, s] += weight[m, q] * blocks[-1][s, s]
    return SensingMatrix(hermitian(E), blocks)


def scnr_from_aggregate(V_bar: np.ndarray, E: np.ndarray, config: SystemConfig) -> float:
    denom = float(np.sum(config.sigma_w_sq))
    if denom <= 0:
        raise ValueError("zero disturbance power")
    return float(np.real(np.sum(E * V_bar.T))) / denom


def scnr_trace(solution: BeamformingSolution, E, config: SystemConfig) -> float:
    """``Tr(E sum_k v_k v_k^H) / sum_r sigma_w_r^2``."""
    E = E.E if isinstance(E, SensingMatrix) else E
    if E.shape[0] != solution.v.shape[1]:
        raise ValueError("E and beamformer dimensions differ")
    return scnr_from_aggregate(solution.aggregate(), E, config)


def scnr_empirical(solution: BeamformingSolution, realization: ScenarioRealization,
                   config: SystemConfig, n_draws: int, rng: np.random.Generator,
                   rx_response: str = "element", chunk: int = 5000) -> float:
    """Monte Carlo estimate of the expected echo-to-disturbance energy ratio.

    Every draw takes fresh symbols ``X`` (``K x L``, CN(0, 1)), bistatic gains
    ``g ~ CN(0, zeta^2)`` per (tx AP, target, rx AP) and presences
    ``alpha_q ~ Bernoulli(p_q)``, and accumulates ``sum_r |Y_r|_F^2``.  The
    total is divided by the expected disturbance energy ``N L sum_r sigma_w^2``.

    ``rx_response="element"`` models the receive array with unit-modulus
    element responses (``|b|^2 = N``), under which the estimate converges to
    :func:`scnr_trace`.  ``"normalized"`` uses the unit-norm steering vector at
    the receiver as well and converges to ``scnr_trace / N``.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    M_t, M_r, N, Q, L = config.M_t, config.M_r, config.N, config.Q, config.L
    K = solution.K
    v = solution.v.reshape(K, M_t, N)
    # w[m, q, k] = a(phi_{m,q})^H v_{mk}
    a_t = np.array([[steering_vector(realization.aod[m, q], N) for q in range(Q)] for m in range(M_t)])
    w = np.einsum("mqn,kmn->mqk", a_t.conj(), v)
    b_r = np.array([[steering_vector(realization.aoa[r, q], N) for q in range(Q)] for r in range(M_r)])
    if rx_response == "element":
        b_r = b_r * np.sqrt(N)
    elif rx_response != "normalized":
        raise ValueError(f"unknown rx_response {rx_response!r}")
    zeta = np.sqrt(realization.sens_var)                           # (M_t, Q, M_r)
    p = np.asarray(realization.presence_prob, dtype=float)

    total = 0.0
    done = 0
    while done < n_draws:
        B = min(chunk, n_draws - done)
        g = zeta * (rng.standard_normal((B, M_t, Q, M_r)) + 1j * rng.standard_normal((B, M_t, Q, M_r))) / np.sqrt(2)
        alpha = (rng.uniform(size=(B, Q)) < p).astype(float)
        X = (rng.standard_normal((B, K, L)) + 1j * rng.standard_normal((B, K, L))) / np.sqrt(2)
        # u[b, q, r, k] = alpha_q sum_m g_{mqr} a^H v_{mk}
        u = alpha[:, :, None, None] * np.einsum("bmqr,mqk->bqrk", g, w)
        z = np.einsum("bqrk,bkl->bqrl", u, X)                       # (B, Q, M_r, L)
        Y = np.einsum("rqn,bqrl->brnl", b_r, z)                     # (B, M_r, N, L)
        total += float(np.sum(np.abs(Y) ** 2))
        done += B
    return total / n_draws / (N * L * float(np.sum(config.sigma_w_sq)))


def per_ap_power(solution: BeamformingSolution, m: int, N: int) -> float:
    """Total power of AP ``m`` (0-based) across all streams."""
    return float(np.sum(np.abs(solution.v[:, ap_slice(m, N)]) ** 2))


def ap_powers(v: np.ndarray, M_t: int, N: int) -> np.ndarray:
    return np.sum(np.abs(v.reshape(v.shape[0], M_t, N)) ** 2, axis=(0, 2))


def fronthaul_overhead(config: SystemConfig) -> int:
    """Complex coefficients sent from the CPU per coherence interval."""
    return config.M_t * config.K * config.N


def evaluate(solution: BeamformingSolution, realization: ScenarioRealization,
             E: np.ndarray, config: SystemConfig) -> dict:
    """Physical metrics of a set of beamformers."""
    sinr = sinr_all(realization.h, solution.v, config.sigma_k_sq)
    rates = rate(sinr)
    return {
        "sinr": sinr,
        "rates": rates,
        "min_rate": float(rates.min()),
        "scnr": scnr_trace(solution, E, config),
        "ap_power": ap_powers(solution.v, config.M_t, config.N),
    }
