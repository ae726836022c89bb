"""SDR-based multi-AP cooperative beamforming (SDR-MCBF).

Pipeline: SINR thresholds -> relaxed SDP over per-stream Grams ``V_k`` ->
optional rank reduction inside the optimal face -> rank-one reconstruction
``v_k = V_k h_k / sqrt(h_k^H V_k h_k)`` -> runtime check of what the
reconstruction preserves.

An interior-point solver returns a point in the relative interior of the
optimal face, which is typically of high rank even when rank-one optima
exist.  Rank reduction keeps every constraint value and the objective, and
with ``M_t <= 2`` transmit APs it always ends at rank one per stream, where
the reconstruction is exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import sdp
from .hermitian import eig_ratio, outer
from .metrics import (BeamformingSolution, SensingMatrix, ap_powers, build_E, rate,
                      scnr_from_aggregate, selection_matrix, sinr_all, sinr_threshold)
from .scenario import ScenarioRealization, SystemConfig

log = logging.getLogger(__name__)

SCHEME = "SDR-MCBF"
SOLVE_TOL = 1e-9
TIE_BREAK_SLACK = 1e-6
TIE_BREAK_RTOL = 1e-3


class InfeasibleError(RuntimeError):
    """Rate targets are unreachable within the power budgets."""

    def __init__(self, message, solution: sdp.SdpSolution | None = None):
        super().__init__(message)
        self.solution = solution
        self.certificate = solution.certificate if solution is not None else None


class DegenerateExtractionError(ValueError):
    def __init__(self, user: int, value: float):
        super().__init__(f"user {user}: h^H V h = {value:.3e} is numerically zero")
        self.user = user


@dataclass
class P2Instance:
    h: np.ndarray
    H: np.ndarray                 # (K, n, n) rank-one Grams
    E: SensingMatrix
    power_matrices: list
    P_m: np.ndarray
    thresholds: np.ndarray
    sigma_k_sq: np.ndarray
    sigma_w_total: float

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def dim(self) -> int:
        return self.H.shape[1]


@dataclass
class TightnessReport:
    objective_relaxed: float
    objective_reconstructed: float
    signal_before: np.ndarray
    signal_after: np.ndarray
    rate_violations: np.ndarray
    power_before: np.ndarray
    power_after: np.ndarray
    eig_ratios: np.ndarray
    scnr_relaxed: float
    scnr_physical: float
    budgets: np.ndarray
    interference_relaxed: np.ndarray
    interference_physical: np.ndarray

    @property
    def signal_rel_error(self) -> float:
        den = np.maximum(np.abs(self.signal_before), 1e-300)
        return float(np.max(np.abs(self.signal_after - self.signal_before) / den))

    @property
    def max_rate_violation(self) -> float:
        return float(np.max(self.rate_violations, initial=0.0))

    @property
    def power_excess(self) -> np.ndarray:
        """Relative excess of reconstructed per-AP power over ``P_m`` (<= 0 when met)."""
        P = self.budgets
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(P > 0, (self.power_after - P) / np.where(P > 0, P, 1.0),
                            np.where(self.power_after > 0, np.inf, 0.0))

    @property
    def scnr_gap(self) -> float:
        """Relative loss of the physical SCNR against the relaxed bound."""
        if self.scnr_relaxed <= 0:
            return 0.0
        return float((self.scnr_relaxed - self.scnr_physical) / self.scnr_relaxed)

    def flags(self, rate_tol: float = 1e-6, power_rtol: float = 1e-6, signal_rtol: float = 1e-8) -> dict:
        return {
            "signal_preserved": self.signal_rel_error <= signal_rtol,
            "rates_met": self.max_rate_violation <= rate_tol,
            "power_met": bool(np.all(self.power_excess <= power_rtol)),
        }

    def ok(self, **kw) -> bool:
        return all(self.flags(**kw).values())


def formulate_p2(realization: ScenarioRealization, config: SystemConfig):
    """Build the relaxed problem: one PSD block per stream, ``sum_k V_k`` substituted for ``V_bar``."""
    h = realization.h
    K, n = h.shape
    E = build_E(realization, config)
    H = np.stack([outer(h[k]) for k in range(K)])
    A = [selection_matrix(m + 1, config.M_t, config.N) for m in range(config.M_t)]
    gamma = np.full(K, float(sinr_threshold(config.R_min)))
    sig = np.asarray(config.sigma_k_sq, dtype=float)
    inst = P2Instance(h, H, E, A, np.asarray(config.P_m, dtype=float), gamma, sig,
                      float(np.sum(config.sigma_w_sq)))
    return inst, p2_problem(inst, gamma)


def p2_problem(inst: P2Instance, gamma, objective: bool = True) -> sdp.SdpProblem:
    """Rate constraints ``Tr(H_k V_k) - G_k sum_{j != k} Tr(H_k V_j) >= G_k sigma_k^2`` plus per-AP power.

    The rate rows are exactly ``SINR_k >= G_k``; at ``G_k = 1`` they coincide
    with ``(1 + G_k) Tr(H_k V_k) - Tr(H_k V_bar) >= sigma_k^2``.
    """
    K, n = inst.K, inst.dim
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    zero = np.zeros((n, n), dtype=complex)
    obj = tuple(inst.E.E if objective else zero for _ in range(K))
    cons = []
    for k in range(K):
        coeffs = tuple(inst.H[k] if j == k else -gamma[k] * inst.H[k] for j in range(K))
        cons.append(sdp.SdpConstraint(coeffs, ">=", gamma[k] * inst.sigma_k_sq[k]))
    for m, Am in enumerate(inst.power_matrices):
        cons.append(sdp.SdpConstraint(tuple(Am for _ in range(K)), "<=", inst.P_m[m]))
    return sdp.SdpProblem(tuple(n for _ in range(K)), obj, tuple(cons))


def solve_relaxation(problem: sdp.SdpProblem, tol: float = SOLVE_TOL) -> sdp.SdpSolution:
    sol = sdp.solve(problem, tol=tol)
    if sol.status == sdp.INFEASIBLE:
        raise InfeasibleError("rate targets unreachable under the per-AP power budgets", sol)
    if sol.status != sdp.OPTIMAL:
        raise RuntimeError(f"relaxation solve ended with status {sol.status}")
    return sol


def extract_rank_one(V, h, eps: float = 1e-12) -> np.ndarray:
    """Rank-one beamformers ``v_k = V_k h_k / sqrt(h_k^H V_k h_k)``.

    Keeps ``|h_k^H v_k|^2 = h_k^H V_k h_k`` exactly and gives
    ``v_k v_k^H <= V_k`` in the PSD order.
    """
    V = np.asarray(V)
    h = np.asarray(h)
    out = np.zeros(h.shape, dtype=complex)
    for k in range(h.shape[0]):
        Vh = V[k] @ h[k]
        q = float(np.real(np.vdot(h[k], Vh)))
        floor = eps * np.linalg.norm(V[k], 2) * np.real(np.vdot(h[k], h[k]))
        if not q > floor:
            raise DegenerateExtractionError(k, q)
        out[k] = Vh / np.sqrt(q)
    return out


def extract_with_fallback(V, h, thresholds, eps: float = 1e-12) -> np.ndarray:
    """:func:`extract_rank_one`, silencing users with a zero rate target and no signal."""
    out = np.zeros(np.asarray(h).shape, dtype=complex)
    for k in range(len(out)):
        try:
            out[k] = extract_rank_one(V[k:k + 1], h[k:k + 1], eps)[0]
        except DegenerateExtractionError:
            if thresholds[k] > 0:
                raise DegenerateExtractionError(k, 0.0) from None
            log.warning("user %d has zero rate target and no signal; stream set to zero", k)
    return out


def verify_tightness(inst: P2Instance, V_relaxed, v_reconstructed) -> TightnessReport:
    """Compare the relaxed Grams with the reconstructed beamformers."""
    V = np.asarray(V_relaxed)
    v = np.asarray(v_reconstructed)
    H = inst.H
    K = inst.K
    V2 = np.einsum("ki,kj->kij", v, v.conj())
    t_rel = np.real(np.einsum("aij,bji->ab", H, V))      # t[k, j] = Tr(H_k V_j)
    t_phy = np.real(np.einsum("aij,bji->ab", H, V2))
    sig_b, sig_a = np.diag(t_rel).copy(), np.diag(t_phy).copy()
    intf_rel = t_rel.sum(axis=1) - sig_b
    intf_phy = t_phy.sum(axis=1) - sig_a
    # (1 + G) S - (S + I) >= sigma^2, measured on the physical beamformers
    required = inst.thresholds * (intf_phy + inst.sigma_k_sq)
    viol = np.maximum(0.0, required - sig_a) / np.maximum(required, inst.sigma_k_sq)
    M_t = len(inst.power_matrices)
    N = inst.dim // M_t
    Vbar = V.sum(axis=0)
    p_before = np.array([np.real(np.trace(Am @ Vbar)) for Am in inst.power_matrices])
    p_after = ap_powers(v, M_t, N)
    obj_rel = float(np.real(np.sum(inst.E.E * Vbar.T)))
    obj_phy = float(np.real(np.sum(inst.E.E * V2.sum(axis=0).T)))
    rep = TightnessReport(
        objective_relaxed=obj_rel,
        objective_reconstructed=obj_phy,
        signal_before=sig_b,
        signal_after=sig_a,
        rate_violations=viol,
        power_before=p_before,
        power_after=p_after,
        eig_ratios=np.array([eig_ratio(V[k]) for k in range(K)]),
        scnr_relaxed=obj_rel / inst.sigma_w_total,
        scnr_physical=obj_phy / inst.sigma_w_total,
        budgets=inst.P_m,
        interference_relaxed=intf_rel,
        interference_physical=intf_phy,
    )
    return rep


def sinr_upper_bound(h: np.ndarray, P_m, sigma_sq, N: int) -> float:
    """Interference-free SINR bound ``min_k (sum_m sqrt(P_m) |h_mk|)^2 / sigma_k^2``."""
    P_m = np.asarray(P_m, dtype=float)
    norms = np.linalg.norm(h.reshape(h.shape[0], P_m.size, N), axis=2)
    g = (norms @ np.sqrt(P_m)) ** 2
    return float(np.min(g / np.asarray(sigma_sq, dtype=float)))


def bisect_max(feasible, lo: float, hi: float, rtol: float):
    """Largest ``t`` in ``[lo, hi]`` with ``feasible(t)`` truthy, to relative width ``rtol``.

    ``feasible(lo)`` is assumed true.  Midpoints are geometric while the
    bracket spans more than a factor of two.  Returns ``(lo, hi, last
    feasible result, trace)``.
    """
    best, trace = None, []
    while hi - lo > rtol * lo:
        mid = np.sqrt(lo * hi) if hi / lo > 2.0 else 0.5 * (lo + hi)
        res = feasible(mid)
        trace.append((float(mid), res is not None))
        if res is None:
            hi = mid
        else:
            lo, best = mid, res
    return lo, hi, best, trace


def _with_scnr_floor(problem: sdp.SdpProblem, E: np.ndarray, floor: float) -> sdp.SdpProblem:
    row = sdp.SdpConstraint(tuple(E for _ in problem.block_dims), ">=", floor)
    return sdp.SdpProblem(problem.block_dims, problem.objective, problem.constraints + (row,))


def sinr_tie_break(inst: P2Instance, objective: float, config: SystemConfig,
                   rel_slack: float = TIE_BREAK_SLACK, rtol: float = TIE_BREAK_RTOL,
                   tol: float = SOLVE_TOL) -> tuple[float, list]:
    """Largest common SINR target keeping ``Tr(E V_bar)`` within ``rel_slack`` of ``objective``.

    Returns the target (never below the users' own thresholds) and the
    bisection trace.
    """
    floor = (1.0 - rel_slack) * objective if objective > 0 else 0.0
    lo = float(np.max(inst.thresholds))
    hi = sinr_upper_bound(inst.h, inst.P_m, inst.sigma_k_sq, config.N)
    if lo <= 0:
        lo = hi * 1e-6
    if hi <= lo:
        return lo, []

    def feasible(t):
        gam = np.maximum(inst.thresholds, t)
        prob = _with_scnr_floor(p2_problem(inst, gam, objective=False), inst.E.E, floor)
        sol = sdp.solve(prob, tol=tol)
        return sol if sol.status == sdp.OPTIMAL else None

    if feasible(lo) is None:
        return float(np.max(inst.thresholds)), [(lo, False)]
    t, _, _, trace = bisect_max(feasible, lo, hi, rtol)
    return t, trace


def sdr_mcbf(realization: ScenarioRealization, config: SystemConfig, tol: float = SOLVE_TOL,
             extractor=extract_with_fallback, reduce_rank: bool = True,
             tie_break: bool = False) -> BeamformingSolution:
    """Run SDR-MCBF on one realization.

    The relaxation usually has a whole face of optimal points with very
    different SINRs.  With ``tie_break=True`` the rate thresholds are then
    raised to the largest common SINR target that keeps the sensing objective
    within ``TIE_BREAK_SLACK`` of its optimum, and the relaxation is solved
    again at those thresholds.  With ``reduce_rank=False`` the reconstruction
    is applied directly to the solver's Grams.  Raises
    :class:`InfeasibleError` (with the solver's certificate) when the rate
    targets cannot be met.
    """
    inst, problem = formulate_p2(realization, config)
    first = sol = solve_relaxation(problem, tol=tol)
    target = None
    if tie_break:
        target, _ = sinr_tie_break(inst, first.objective_value, config, tol=tol)
        gam = np.maximum(inst.thresholds, target)
        if np.any(gam > inst.thresholds):
            problem = p2_problem(inst, gam)
            try:
                sol = solve_relaxation(problem, tol=tol)
            except (InfeasibleError, RuntimeError):
                log.warning("re-solve at the raised SINR target failed; keeping the first optimum")
                problem, sol = formulate_p2(realization, config)[1], first
    V = np.stack(sol.X)
    raw_ratios = np.array([eig_ratio(x) for x in V])
    ranks = None
    if reduce_rank:
        red = sdp.reduce_rank(problem, list(V))
        V = np.stack(red.X)
        ranks = red.ranks_after
    v = extractor(V, inst.h, inst.thresholds)
    rep = verify_tightness(inst, V, v)
    sinr = sinr_all(inst.h, v, inst.sigma_k_sq)
    diagnostics = {
        "duality_gap": sol.gap,
        "solver_status": sol.status,
        "iterations": sol.iterations,
        "solve_time": sol.solve_time,
        "relaxed_objective": first.objective_value,
        "scnr_relaxed": first.objective_value / inst.sigma_w_total,
        "sinr_target": target,
        "eig_ratios_solver": raw_ratios,
        "ranks": ranks,
        "scnr": rep.scnr_physical,
        "scnr_gap": 1.0 - rep.scnr_physical * inst.sigma_w_total / first.objective_value
        if first.objective_value > 0 else 0.0,
        "eig_ratios": rep.eig_ratios,
        "rates": rate(sinr),
        "sinr": sinr,
        "signal_rel_error": rep.signal_rel_error,
        "max_rate_violation": rep.max_rate_violation,
        "tightness_ok": rep.ok(),
        "report": rep,
        "sdp": sol,
        "sdp_first": first,
        "problem": problem,
    }
    return BeamformingSolution(v, SCHEME, diagnostics)


def relaxed_scnr(realization: ScenarioRealization, config: SystemConfig, tol: float = SOLVE_TOL) -> float:
    """Optimal value of the relaxation, in SCNR units."""
    inst, problem = formulate_p2(realization, config)
    sol = solve_relaxation(problem, tol=tol)
    return scnr_from_aggregate(np.sum(sol.X, axis=0), inst.E.E, config)
