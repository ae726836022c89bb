"""Benchmark beamformers and their lambda-weighted combinations.

Communication beams: regularized channel inversion (RCI) and max-min SINR
(MMSO); plain conjugate beamforming on the user channels is kept for
reference.  Sensing beams steer the dominant direction of ``E``: either
projected onto the null space of the user channels (NSP) or sent as a
conjugate beam from every AP (CBP).  A scheme mixes one of each per stream as
``lambda * v_sens + (1 - lambda) * v_comm`` and picks lambda from a grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .metrics import (BeamformingSolution, ap_powers, ap_slice, build_E, rate,
                      scnr_from_aggregate, sinr_all)
from .scenario import ScenarioRealization, SystemConfig
from .sdr import (P2Instance, bisect_max, extract_rank_one, formulate_p2, p2_problem,
                  sinr_upper_bound)

log = logging.getLogger(__name__)

LAMBDA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 21), 10))
BISECTION_RTOL = 1e-4
MMSO_SOLVE_TOL = 1e-8
EIG_TIE_RTOL = 1e-9


def _blocks(v: np.ndarray, M_t: int, N: int) -> np.ndarray:
    """View ``(K, M_t * N)`` beams as ``(K, M_t, N)``."""
    return v.reshape(v.shape[0], M_t, N)


def rescale_per_ap(v: np.ndarray, P_m, N: int) -> np.ndarray:
    """Scale every AP's slice so that its total power equals ``P_m``.

    APs radiating nothing stay silent.
    """
    P_m = np.asarray(P_m, dtype=float)
    M_t = P_m.size
    b = _blocks(np.array(v, dtype=complex), M_t, N)
    pw = np.sum(np.abs(b) ** 2, axis=(0, 2))
    scale = np.where(pw > 0, np.sqrt(P_m / np.where(pw > 0, pw, 1.0)), 0.0)
    return (b * scale[None, :, None]).reshape(v.shape)


def global_scale(v: np.ndarray, P_m, N: int) -> np.ndarray:
    """Largest single scalar keeping every AP within budget; the binding AP ends at ``P_m``."""
    P_m = np.asarray(P_m, dtype=float)
    pw = ap_powers(v, P_m.size, N)
    active = pw > 0
    if not np.any(active):
        return np.zeros_like(v)
    c = float(np.min(np.sqrt(P_m[active] / pw[active])))
    return c * v


# ---------------------------------------------------------------- communication

def cbp_beamformer(realization: ScenarioRealization, config: SystemConfig) -> np.ndarray:
    """Conjugate beams, each AP's budget split equally over the streams it can serve."""
    M_t, N = config.M_t, config.N
    hb = _blocks(realization.h, M_t, N)
    norms = np.linalg.norm(hb, axis=2)                       # (K, M_t)
    v = np.zeros_like(hb)
    for m in range(M_t):
        live = norms[:, m] > 0
        n_live = int(np.sum(live))
        if n_live == 0:
            continue
        amp = np.sqrt(config.P_m[m] / n_live)
        v[live, m] = amp * hb[live, m] / norms[live, m][:, None]
    return v.reshape(realization.h.shape)


def rci_beamformer(realization: ScenarioRealization, config: SystemConfig) -> np.ndarray:
    """Regularized channel inversion with ``delta = K * mean(sigma_k^2) / sum(P_m)``."""
    h = realization.h
    K = h.shape[0]
    P_tot = float(np.sum(config.P_m))
    if P_tot <= 0:
        return np.zeros_like(h)
    delta = K * float(np.mean(config.sigma_k_sq)) / P_tot
    Hc = h.T                                                 # columns h_1, ..., h_K
    W = Hc @ np.linalg.inv(Hc.conj().T @ Hc + delta * np.eye(K))
    return global_scale(W.T.copy(), config.P_m, config.N)


def _mmso_problem(inst: P2Instance, t: float) -> sdp.SdpProblem:
    return p2_problem(inst, np.full(inst.K, t), objective=False)


def mmso_feasible(inst: P2Instance, t: float, tol: float = MMSO_SOLVE_TOL):
    """Solve the max-min feasibility SDP at common SINR target ``t``.

    Returns the solver output when feasible, ``None`` otherwise.  A solve that
    stops at its numerical limit counts as infeasible.
    """
    sol = sdp.solve(_mmso_problem(inst, t), tol=tol)
    return sol if sol.status == sdp.OPTIMAL else None


@dataclass
class BisectionResult:
    t: float
    upper: float
    v: np.ndarray
    steps: int
    trace: list = field(default_factory=list)


def mmso_bisection(inst: P2Instance, config: SystemConfig, rtol: float = BISECTION_RTOL,
                   tol: float = MMSO_SOLVE_TOL) -> BisectionResult:
    """Bisection on the common SINR target until ``hi - lo <= rtol * lo``."""
    hi = sinr_upper_bound(inst.h, inst.P_m, inst.sigma_k_sq, config.N)
    if not hi > 0:
        raise ValueError("all channels are zero; no positive SINR is reachable")
    lo = hi * 1e-6
    trace = []
    best = mmso_feasible(inst, lo, tol)
    trace.append((lo, best is not None))
    while best is None:
        lo *= 1e-3
        if lo < hi * 1e-15:
            raise ValueError("max-min SINR problem infeasible at every tested target")
        best = mmso_feasible(inst, lo, tol)
        trace.append((lo, best is not None))
    lo, hi, found, more = bisect_max(lambda t: mmso_feasible(inst, t, tol), lo, hi, rtol)
    trace += more
    best = found or best
    steps = len(more)
    red = sdp.reduce_rank(_mmso_problem(inst, lo), best.X)
    v = extract_rank_one(np.stack(red.X), inst.h)
    return BisectionResult(lo, hi, v, steps, trace)


def mmso_beamformer(realization: ScenarioRealization, config: SystemConfig) -> np.ndarray:
    inst, _ = formulate_p2(realization, config)
    return mmso_bisection(inst, config).v


# ---------------------------------------------------------------- sensing

def principal_direction(E: np.ndarray, P_m, N: int) -> np.ndarray:
    """Unit principal eigenvector of a block-diagonal ``E``.

    Ties between AP blocks are broken by the member of the top eigenspace
    with AP amplitudes ``sqrt(P_m)``, which is the single beam that radiates
    the most energy toward the targets under per-AP budgets.
    """
    P_m = np.asarray(P_m, dtype=float)
    M_t = P_m.size
    vals, vecs = [], []
    for m in range(M_t):
        s = ap_slice(m, N)
        w, u = np.linalg.eigh(E[s, s])
        vals.append(float(w[-1]))
        vecs.append(u[:, -1])
    vals = np.array(vals)
    top = float(vals.max())
    u = np.zeros(M_t * N, dtype=complex)
    if top <= 0:
        return u
    for m in range(M_t):
        if vals[m] >= top * (1.0 - EIG_TIE_RTOL):
            u[ap_slice(m, N)] = np.sqrt(P_m[m]) * vecs[m]
    norm = np.linalg.norm(u)
    if norm == 0:
        # every tied block has zero budget; fall back to the plain eigenvector
        w, U = np.linalg.eigh(E)
        return U[:, -1]
    return u / norm


def cbp_sensing_beamformer(realization: ScenarioRealization, E, config: SystemConfig) -> np.ndarray:
    """Conjugate beam toward the targets from every AP, budget split equally over streams.

    AP ``m`` transmits the principal eigenvector of its block of ``E`` with
    power ``P_m / K`` per stream.
    """
    E = getattr(E, "E", E)
    M_t, N, K = config.M_t, config.N, realization.h.shape[0]
    v = np.zeros((K, M_t, N), dtype=complex)
    for m in range(M_t):
        s = ap_slice(m, N)
        w, u = np.linalg.eigh(E[s, s])
        if w[-1] <= 0:
            continue
        v[:, m] = np.sqrt(config.P_m[m] / K) * u[:, -1]
    return v.reshape(K, M_t * N)


def null_space_projector(h: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """``I - H H^+`` for ``H = [h_1, ..., h_K]``."""
    K, n = h.shape
    if K >= n:
        raise ValueError(f"null space is empty: K={K} >= M_t*N={n}")
    U, s, _ = np.linalg.svd(h.T, full_matrices=False)
    keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros(s.size, dtype=bool)
    Ur = U[:, keep]
    return np.eye(n) - Ur @ Ur.conj().T


def nsp_sensing_beamformer(realization: ScenarioRealization, E, config: SystemConfig) -> np.ndarray:
    """Sensing beam orthogonal to every user channel, one copy per stream.

    A single global scalar brings the binding AP to its budget; per-AP scaling
    would break the orthogonality.
    """
    E = getattr(E, "E", E)
    h = realization.h
    K = h.shape[0]
    P = null_space_projector(h)
    u = principal_direction(E, config.P_m, config.N)
    s = P @ u
    norm = np.linalg.norm(s)
    if norm == 0:
        return np.zeros_like(h)
    s = s / norm
    return global_scale(np.tile(s, (K, 1)), config.P_m, config.N)


def nsp_leakage(h: np.ndarray, v_sens: np.ndarray) -> float:
    """``max_{k, j} |h_k^H v_sens_j| / |h_k|``."""
    norms = np.linalg.norm(h, axis=1)
    g = np.abs(h.conj() @ v_sens.T) / np.where(norms > 0, norms, 1.0)[:, None]
    return float(g.max()) if g.size else 0.0


# ---------------------------------------------------------------- combination

@dataclass
class LambdaSweepResult:
    lambda_grid: tuple
    min_rate: np.ndarray
    scnr: np.ndarray
    feasible: np.ndarray
    selected_lambda: float
    selection_rule: str

    @property
    def selected_index(self) -> int:
        return int(np.argmin(np.abs(np.asarray(self.lambda_grid) - self.selected_lambda)))


def combine_and_select(v_sens: np.ndarray, v_comm: np.ndarray, realization: ScenarioRealization,
                       E, config: SystemConfig, grid=LAMBDA_GRID, scheme: str = "",
                       rate_tol: float = 1e-9):
    """Sweep ``lambda`` and keep the best combined beam.

    Rule: highest SCNR among grid points meeting every rate target, otherwise
    the highest minimum rate.  Ties go to the smaller ``lambda``.
    """
    E = getattr(E, "E", E)
    grid = tuple(float(x) for x in grid)
    r_min = config.R_min
    beams, mins, scnrs = [], [], []
    for lam in grid:
        v = rescale_per_ap(lam * v_sens + (1.0 - lam) * v_comm, config.P_m, config.N)
        r = rate(sinr_all(realization.h, v, config.sigma_k_sq))
        beams.append(v)
        mins.append(float(r.min()))
        scnrs.append(scnr_from_aggregate(v.T @ v.conj(), E, config))
    mins = np.array(mins)
    scnrs = np.array(scnrs)
    feasible = mins >= r_min - rate_tol
    if np.any(feasible):
        idx = int(np.argmax(np.where(feasible, scnrs, -np.inf)))
        rule = "max-scnr-subject-to-rates"
    else:
        idx = int(np.argmax(mins))
        rule = "max-min-rate"
    sweep = LambdaSweepResult(grid, mins, scnrs, feasible, grid[idx], rule)
    sol = BeamformingSolution(beams[idx], scheme, {"lambda": sweep, "selected_lambda": grid[idx],
                                                   "rates_met": bool(feasible[idx])})
    return sol, sweep


# ---------------------------------------------------------------- schemes

SCHEMES = ("SDR-MCBF", "NSP-MMSO", "CBP-MMSO", "NSP-RCI")
CLI_NAMES = {"sdr-mcbf": "SDR-MCBF", "nsp-mmso": "NSP-MMSO", "cbp-mmso": "CBP-MMSO",
             "nsp-rci": "NSP-RCI"}


class BaselineCache:
    """Per-realization memo so schemes that share a component build it once."""

    def __init__(self, realization: ScenarioRealization, config: SystemConfig):
        self.realization = realization
        self.config = config
        self._memo = {}

    def get(self, key: str):
        if key not in self._memo:
            r, c = self.realization, self.config
            if key == "E":
                self._memo[key] = build_E(r, c)
            elif key == "nsp":
                self._memo[key] = nsp_sensing_beamformer(r, self.get("E"), c)
            elif key == "cbp":
                self._memo[key] = cbp_sensing_beamformer(r, self.get("E"), c)
            elif key == "rci":
                self._memo[key] = rci_beamformer(r, c)
            elif key == "mmso":
                self._memo[key] = mmso_beamformer(r, c)
            else:
                raise KeyError(key)
        return self._memo[key]


def run_baseline(name: str, realization: ScenarioRealization, config: SystemConfig,
                 cache: BaselineCache | None = None) -> BeamformingSolution:
    """Build one of ``NSP-MMSO``, ``CBP-MMSO``, ``NSP-RCI``."""
    cache = cache or BaselineCache(realization, config)
    E = cache.get("E")
    if name == "NSP-MMSO":
        sens, comm = cache.get("nsp"), cache.get("mmso")
    elif name == "CBP-MMSO":
        sens, comm = cache.get("cbp"), cache.get("mmso")
    elif name == "NSP-RCI":
        sens, comm = cache.get("nsp"), cache.get("rci")
    else:
        raise ValueError(f"unknown baseline {name!r}")
    sol, _ = combine_and_select(sens, comm, realization, E, config, scheme=name)
    if name.startswith("NSP"):
        sol.diagnostics["nsp_leakage"] = nsp_leakage(realization.h, sens)
    sol.diagnostics["scnr"] = scnr_from_aggregate(sol.aggregate(), E.E, config)
    sol.diagnostics["rates"] = rate(sinr_all(realization.h, sol.v, config.sigma_k_sq))
    return sol
