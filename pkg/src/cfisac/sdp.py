"""Dense block SDP solver.

Problems are posed as

    maximize    sum_b Tr(C_b X_b)
    subject to  sum_b Tr(A_ib X_b)  (<= | >= | ==)  b_i,    X_b >= 0

with complex Hermitian (or real symmetric) blocks.  Complex blocks are solved
through their real symmetric embedding; inequalities get a 1x1 slack block.
The core is a homogeneous self-dual primal-dual interior-point method with
Nesterov-Todd scaling and a Mehrotra predictor-corrector, so infeasible and
unbounded problems come back with a certificate instead of a stalled iterate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .hermitian import embed, hermitian, unembed

SENSES = ("<=", ">=", "==")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_LIMIT = "numerical-limit"
STALL_ITERS = 15


@dataclass(frozen=True)
class SdpConstraint:
    """``sum_b Tr(coeffs[b] X_b)  sense  rhs``; a ``None`` coefficient means zero."""

    coeffs: tuple
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}, got {self.sense!r}")
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        object.__setattr__(self, "rhs", float(self.rhs))


@dataclass(frozen=True)
class SdpProblem:
    block_dims: tuple
    objective: tuple
    constraints: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.block_dims)
        object.__setattr__(self, "block_dims", dims)
        obj = []
        for b, (n, c) in enumerate(zip(dims, self.objective)):
            obj.append(_check_block(c, n, f"objective block {b}"))
        if len(obj) != len(dims):
            raise ValueError("objective needs one matrix per block")
        object.__setattr__(self, "objective", tuple(obj))
        cons = []
        for i, con in enumerate(self.constraints):
            if len(con.coeffs) != len(dims):
                raise ValueError(f"constraint {i} needs one coefficient per block")
            coeffs = tuple(None if a is None else _check_block(a, n, f"constraint {i} block {b}")
                           for b, (n, a) in enumerate(zip(dims, con.coeffs)))
            cons.append(SdpConstraint(coeffs, con.sense, con.rhs))
        if not cons:
            raise ValueError("an SDP needs at least one constraint")
        object.__setattr__(self, "constraints", tuple(cons))

    @property
    def is_real(self) -> bool:
        mats = list(self.objective) + [a for c in self.constraints for a in c.coeffs if a is not None]
        return all(np.isrealobj(a) or not np.any(np.imag(a)) for a in mats)


def _check_block(a, n, what):
    if a is None:
        return None
    a = np.asarray(a)
    if a.shape != (n, n):
        raise ValueError(f"{what}: expected shape {(n, n)}, got {a.shape}")
    if np.iscomplexobj(a):
        return hermitian(a)
    a = a.astype(float)
    return 0.5 * (a + a.T)


@dataclass
class SdpSolution:
    X: list
    objective_value: float
    dual_objective: float
    dual_values: np.ndarray
    status: str
    gap: float
    residuals: dict
    iterations: int = 0
    certificate: dict | None = None
    history: list = field(default_factory=list)
    solve_time: float = 0.0


class _Std:
    """Standard-form data, ``min <C, X>  s.t.  A(X) = b``, grouped by block size."""

    def __init__(self, problem: SdpProblem, use_embedding: bool):
        self.problem = problem
        self.embedded = use_embedding
        m = len(problem.constraints)
        self.m = m
        blocks_C, blocks_A, dims = [], [], []
        for b, n in enumerate(problem.block_dims):
            def conv(a, n=n):
                if a is None:
                    return np.zeros((2 * n, 2 * n) if use_embedding else (n, n))
                # Tr(C X) = Tr(embed(C) X_real) / 2 under unembed
                return 0.5 * embed(a) if use_embedding else np.real(a).astype(float)
            blocks_C.append(-conv(problem.objective[b]))
            col = []
            for con in problem.constraints:
                s = -1.0 if con.sense == ">=" else 1.0
                col.append(s * conv(con.coeffs[b]))
            blocks_A.append(np.stack(col))
            dims.append(2 * n if use_embedding else n)
        self.n_user = len(dims)
        # slack blocks
        self.slack_rows = [i for i, c in enumerate(problem.constraints) if c.sense != "=="]
        for i in self.slack_rows:
            blocks_C.append(np.zeros((1, 1)))
            a = np.zeros((m, 1, 1))
            a[i, 0, 0] = 1.0
            blocks_A.append(a)
            dims.append(1)
        self.sign = np.array([-1.0 if c.sense == ">=" else 1.0 for c in problem.constraints])
        self.b = self.sign * np.array([c.rhs for c in problem.constraints])
        self.dims = dims

        # group blocks of equal size for batched linear algebra
        self.groups = []
        for n in sorted(set(dims)):
            idx = [j for j, d in enumerate(dims) if d == n]
            C = np.stack([blocks_C[j] for j in idx])
            A = np.stack([blocks_A[j] for j in idx], axis=1)        # (m, c, n, n)
            self.groups.append({"n": n, "idx": idx, "C": C, "A": A})

        # equilibrate on the user blocks only; a unit slack coefficient would
        # otherwise swamp rows whose data is tiny
        row = np.sqrt(sum(np.sum(blocks_A[j] ** 2, axis=(1, 2)) for j in range(self.n_user)))
        row[row == 0] = 1.0
        self.row_scale = row
        bn = self.b / row
        self.x_scale = float(np.max(np.abs(bn))) if np.any(bn) else 1.0
        cn = np.sqrt(sum(np.sum(g["C"] ** 2) for g in self.groups))
        self.c_scale = float(cn) if cn > 0 else 1.0
        for g in self.groups:
            user = np.array([j < self.n_user for j in g["idx"]])
            g["A"][:, user] = g["A"][:, user] / row[:, None, None, None]
            g["C"] = g["C"] / self.c_scale
        self.bh = bn / self.x_scale
        self.nu = int(sum(dims))

    def A_op(self, Xs):
        return sum(np.einsum("icab,cab->i", g["A"], X) for g, X in zip(self.groups, Xs))

    def A_adj(self, y):
        return [np.einsum("i,icab->cab", y, g["A"]) for g in self.groups]

    def C_list(self):
        return [g["C"] for g in self.groups]


def _inner(Xs, Ys) -> float:
    return float(sum(np.sum(X * Y) for X, Y in zip(Xs, Ys)))


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _max_step(lam_list, D_list):
    """Largest alpha with ``Lambda + alpha D >= 0`` for every group."""
    emin = np.inf
    for lam, D in zip(lam_list, D_list):
        s = 1.0 / np.sqrt(lam)
        e = np.linalg.eigvalsh(_sym(s[:, :, None] * D * s[:, None, :]))
        emin = min(emin, float(e.min()))
    return np.inf if emin >= 0 else -1.0 / emin


def _is_empty(con: SdpConstraint) -> bool:
    return all(a is None or not np.any(a) for a in con.coeffs)


def _empty_row_holds(con: SdpConstraint) -> bool:
    return {"==": con.rhs == 0.0, "<=": con.rhs >= 0.0, ">=": con.rhs <= 0.0}[con.sense]


def _trivial_solution(problem: SdpProblem, status, X, y, cert) -> SdpSolution:
    val = float(sum(np.real(np.sum(c * x.T)) for c, x in zip(problem.objective, X)))
    gap = 0.0 if status == OPTIMAL else np.inf
    return SdpSolution(X, val, val if status == OPTIMAL else np.nan, y, status, gap,
                       {"primal": 0.0, "dual": 0.0}, 0, cert)


def solve(problem: SdpProblem, tol: float = 1e-8, max_iter: int = 200,
          use_embedding: bool | None = None, step_fraction: float = 0.99) -> SdpSolution:
    """Solve ``problem`` to relative duality gap ``tol``.

    ``use_embedding=None`` embeds unless every coefficient is real.  Rows with
    all-zero coefficients are settled here: a violated one makes the problem
    infeasible, a satisfied one is dropped and gets a zero multiplier.
    """
    if not 0 < tol <= 1e-2:
        raise ValueError("tol must lie in (0, 1e-2]")
    cons = problem.constraints
    empty = [i for i, c in enumerate(cons) if _is_empty(c)]
    if not empty:
        return _solve(problem, tol, max_iter, use_embedding, step_fraction)
    m = len(cons)
    zeros = [np.zeros((n, n), dtype=c.dtype) for n, c in zip(problem.block_dims, problem.objective)]
    for i in empty:
        if not _empty_row_holds(cons[i]):
            y = np.zeros(m)
            # sum_j y_j s_j b_j = -1 with s = -1 on >= rows
            y[i] = 1.0 / abs(cons[i].rhs) if cons[i].sense != "==" else -1.0 / cons[i].rhs
            return _trivial_solution(problem, INFEASIBLE, zeros, y, {"kind": "dual-ray", "y": y})
    keep = [i for i in range(m) if i not in empty]
    if not keep:
        # only X >= 0 remains: bounded iff every C_b is negative semidefinite
        for b, c in enumerate(problem.objective):
            w, u = np.linalg.eigh(c)
            if w[-1] > 0:
                ray = [z.copy() for z in zeros]
                ray[b] = np.outer(u[:, -1], u[:, -1].conj()) / w[-1]
                return _trivial_solution(problem, UNBOUNDED, zeros, np.zeros(m),
                                         {"kind": "primal-ray", "X": ray})
        return _trivial_solution(problem, OPTIMAL, zeros, np.zeros(m), None)
    reduced = SdpProblem(problem.block_dims, problem.objective, tuple(cons[i] for i in keep))
    sol = _solve(reduced, tol, max_iter, use_embedding, step_fraction)
    y = np.zeros(m)
    y[keep] = sol.dual_values
    sol.dual_values = y
    if sol.certificate is not None and sol.certificate.get("kind") == "dual-ray":
        ray = np.zeros(m)
        ray[keep] = sol.certificate["y"]
        sol.certificate = {**sol.certificate, "y": ray}
    return sol


def _solve(problem: SdpProblem, tol: float, max_iter: int, use_embedding: bool | None,
           step_fraction: float) -> SdpSolution:
    t0 = time.perf_counter()
    if use_embedding is None:
        use_embedding = not problem.is_real
    sf = _Std(problem, use_embedding)
    groups = sf.groups
    bh = sf.bh
    C = sf.C_list()
    nu = sf.nu

    # iterate: X = G Lambda G^T, S = Ginv_T Lambda Ginv_T^T
    G = [np.tile(np.eye(g["n"]), (len(g["idx"]), 1, 1)) for g in groups]
    Git = [x.copy() for x in G]
    lam = [np.ones((len(g["idx"]), g["n"])) for g in groups]
    y = np.zeros(sf.m)
    tau, kappa = 1.0, 1.0
    history = []
    status = NUMERICAL_LIMIT
    cert = None
    best = None
    it = 0

    def unpack():
        X = [Gi @ (l[:, :, None] * np.swapaxes(Gi, -1, -2)) for Gi, l in zip(G, lam)]
        S = [Gt @ (l[:, :, None] * np.swapaxes(Gt, -1, -2)) for Gt, l in zip(Git, lam)]
        return X, S

    for it in range(max_iter + 1):
        X, S = unpack()
        AX = sf.A_op(X)
        ATy = sf.A_adj(y)
        p = AX - bh * tau
        d = [a + s - c * tau for a, s, c in zip(ATy, S, C)]
        cx = _inner(C, X)
        by = float(bh @ y)
        g_res = cx - by + kappa
        xs = _inner(X, S)
        mu = (xs + tau * kappa) / (nu + 1)
        if not tau > 1e-150:
            # tau collapsed: only a certificate can be read off this iterate
            tau = max(tau, 1e-150)

        pres = float(np.linalg.norm(p)) / tau / max(1.0, float(np.linalg.norm(bh)))
        dres = float(np.sqrt(_inner(d, d))) / tau
        pcost, dcost = cx / tau, by / tau
        rel_gap = abs(xs) / tau ** 2 / max(1.0, abs(pcost), abs(dcost))
        history.append({"iter": it, "pobj": -pcost, "dobj": -dcost, "pres": pres, "dres": dres,
                        "gap": rel_gap, "mu": mu, "tau": tau, "kappa": kappa})
        merit = max(pres, dres, rel_gap)
        if best is None or merit < 0.9 * best[0]:
            best = (merit, it, [x.copy() for x in X], y.copy(), tau, [s.copy() for s in S])

        if pres <= tol and dres <= tol and rel_gap <= tol:
            status = OPTIMAL
            break
        # infeasibility certificates of the homogeneous model
        if by > 0:
            ATy_S = [a + s for a, s in zip(ATy, S)]
            if np.sqrt(_inner(ATy_S, ATy_S)) / by <= tol:
                status = INFEASIBLE
                cert = {"y": -y / by}
                break
        if cx < 0:
            if np.linalg.norm(AX) / max(1.0, float(np.linalg.norm(bh))) / (-cx) <= tol:
                status = UNBOUNDED
                cert = {"X": [x / (-cx) for x in X]}
                break
        if it == max_iter:
            break
        if it - best[1] >= STALL_ITERS:
            # no real progress for a while: near-infeasible or ill-posed
            break

        # scaled data
        Gt_ = [np.swapaxes(Gi, -1, -2) for Gi in G]
        At = [Gtr[None] @ g["A"] @ Gi[None] for g, Gi, Gtr in zip(groups, G, Gt_)]
        Ct = [Gtr @ c @ Gi for c, Gi, Gtr in zip(C, G, Gt_)]
        dt = [Gtr @ dd @ Gi for dd, Gi, Gtr in zip(d, G, Gt_)]
        # QR of the stacked scaled constraints: M = R^T R without forming M
        F = np.concatenate([a.reshape(sf.m, -1) for a in At], axis=1).T
        Cflat = np.concatenate([c.ravel() for c in Ct])
        Qf, Rf = np.linalg.qr(F)
        if np.min(np.abs(np.diag(Rf))) <= 1e-14 * np.max(np.abs(np.diag(Rf))):
            break

        def msolve(r):
            return sla.solve_triangular(Rf, sla.solve_triangular(Rf, r, trans="T"))

        def A_flat(Z):
            return F.T @ np.concatenate([z.ravel() for z in Z])

        def unflat(v):
            out, pos = [], 0
            for a in At:
                size = a[0].size
                out.append(v[pos:pos + size].reshape(a.shape[1:]))
                pos += size
            return out

        cA = F.T @ Cflat
        c_perp = Cflat - Qf @ (Qf.T @ Cflat)
        rb = sla.solve_triangular(Rf, bh, trans="T")
        den = -float(c_perp @ c_perp) - float(rb @ rb) - kappa / tau
        dy1 = msolve(cA + bh)

        def solve_kkt(rp, rd, rg, R, r_tk):
            Q = [2.0 * r / (l[:, :, None] + l[:, None, :]) for r, l in zip(R, lam)]
            QD = [q - r for q, r in zip(Q, rd)]
            qd = np.concatenate([z.ravel() for z in QD])
            dy0 = msolve(rp - F.T @ qd)
            num = rg - float(c_perp @ qd) - float(cA @ msolve(rp)) + float(bh @ dy0) - r_tk / tau
            dtau = num / den
            dy = dy0 + dy1 * dtau
            dS = [r - z + c * dtau for r, z, c in zip(rd, unflat(F @ dy), Ct)]
            dX = [q - ds for q, ds in zip(Q, dS)]
            dkappa = (r_tk - kappa * dtau) / tau
            return dX, dS, dy, dtau, dkappa

        def newton(eta, R, r_tk):
            rp, rd, rg = -eta * p, [-eta * z for z in dt], -eta * g_res
            dX, dS, dy, dtau, dkappa = solve_kkt(rp, rd, rg, R, r_tk)
            # one round of iterative refinement on the equations that carry solve error
            e1 = rp - (A_flat(dX) - bh * dtau)
            e3 = rg - (_inner(Ct, dX) - float(bh @ dy) + dkappa)
            zero = [np.zeros_like(z) for z in dt]
            cX, cS, cy, ct, ck = solve_kkt(e1, zero, e3, zero, 0.0)
            return ([a + b for a, b in zip(dX, cX)], [a + b for a, b in zip(dS, cS)],
                    dy + cy, dtau + ct, dkappa + ck)

        def step_length(dX, dS, dtau, dkappa):
            a = min(_max_step(lam, dX), _max_step(lam, dS))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        lam2 = [np.einsum("cn,nm->cnm", l ** 2, np.eye(l.shape[1])) for l in lam]
        try:
            with np.errstate(invalid="raise", divide="raise", over="raise"):
                # predictor
                dXa, dSa, _, dta, dka = newton(1.0, [-x for x in lam2], -tau * kappa)
                a_aff = min(1.0, step_length(dXa, dSa, dta, dka))
                sigma = (1.0 - a_aff) ** 3
                # corrector
                R = []
                for l2, dx, ds in zip(lam2, dXa, dSa):
                    n = l2.shape[-1]
                    R.append(sigma * mu * np.eye(n)[None] - l2 - _sym(dx @ ds))
                dX, dS, dy, dtau, dkappa = newton(1.0 - sigma, R, sigma * mu - tau * kappa - dta * dka)
                alpha = min(1.0, step_fraction * step_length(dX, dS, dtau, dkappa))
        except (FloatingPointError, ValueError, np.linalg.LinAlgError):
            break
        if not np.isfinite(alpha) or alpha < 1e-10:
            break

        # update iterate and NT scaling from the scaled variables
        try:
            newG, newGit, newlam = [], [], []
            for Gi, Gti, l, dx, ds in zip(G, Git, lam, dX, dS):
                Xp = _sym(np.einsum("cn,nm->cnm", l, np.eye(l.shape[1])) + alpha * dx)
                Sp = _sym(np.einsum("cn,nm->cnm", l, np.eye(l.shape[1])) + alpha * ds)
                L1 = np.linalg.cholesky(Xp)
                L2 = np.linalg.cholesky(Sp)
                U, s, Vt = np.linalg.svd(np.swapaxes(L2, -1, -2) @ L1)
                isq = 1.0 / np.sqrt(s)
                newG.append(Gi @ L1 @ (np.swapaxes(Vt, -1, -2) * isq[:, None, :]))
                newGit.append(Gti @ L2 @ (U * isq[:, None, :]))
                newlam.append(s)
        except np.linalg.LinAlgError:
            break
        G, Git, lam = newG, newGit, newlam
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa

    if status == NUMERICAL_LIMIT and best is not None:
        _, _, X, y, tau, _ = best
    return _finish(sf, status, X, y, tau, cert, history, it, time.perf_counter() - t0)


def _user_blocks(sf: _Std, Xs, scale):
    out = [None] * sf.n_user
    for g, X in zip(sf.groups, Xs):
        for pos, j in enumerate(g["idx"]):
            if j < sf.n_user:
                x = scale * X[pos]
                out[j] = unembed(x) if sf.embedded else _sym(x)
    return out


def _finish(sf: _Std, status, X, y, tau, cert, history, iters, elapsed) -> SdpSolution:
    problem = sf.problem
    certificate = None
    if status == INFEASIBLE:
        # Farkas ray in the original senses: y >= 0, sum y_i s_i A_i >= 0, sum y_i s_i b_i < 0
        z = cert["y"] / sf.row_scale
        yr = z / max(abs(float(sf.b @ z)), 1e-300)
        certificate = {"kind": "dual-ray", "y": yr}
    elif status == UNBOUNDED:
        Xr = _user_blocks(sf, cert["X"], 1.0)
        val = sum(np.real(np.sum(c * x.T)) for c, x in zip(problem.objective, Xr))
        certificate = {"kind": "primal-ray", "X": [x / val for x in Xr] if val > 0 else Xr}

    Xu = _user_blocks(sf, X, sf.x_scale / tau)
    yv = -sf.c_scale * y / (sf.row_scale * tau)
    pobj = float(sum(np.real(np.sum(c * x.T)) for c, x in zip(problem.objective, Xu)))
    dobj = float(yv @ sf.b)
    last = history[-1] if history else {}
    return SdpSolution(
        X=Xu,
        objective_value=pobj,
        dual_objective=dobj,
        dual_values=yv,
        status=status,
        gap=float(last.get("gap", np.inf)),
        residuals={"primal": float(last.get("pres", np.inf)), "dual": float(last.get("dres", np.inf))},
        iterations=iters,
        certificate=certificate,
        history=history,
        solve_time=elapsed,
    )


@dataclass
class CertificateReport:
    primal_residual: float
    psd_residual: float
    dual_residual: float
    complementarity: float
    rel_gap: float
    tol: float
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def verify_certificate(problem: SdpProblem, solution: SdpSolution, tol: float = 1e-7) -> CertificateReport:
    """Recheck optimality of ``solution`` from the raw problem data.

    Residuals are relative: constraint rows are measured in units of their
    Frobenius norm times the natural primal scale ``max_i |b_i| / |A_i|``,
    dual quantities in units of ``|C|``.
    """
    X = [np.asarray(x) for x in solution.X]
    y = np.asarray(solution.dual_values, dtype=float)
    cons = problem.constraints
    row = np.array([np.sqrt(sum(np.sum(np.abs(a) ** 2) for a in c.coeffs if a is not None))
                    for c in cons])
    row[row == 0] = 1.0
    rhs = np.array([c.rhs for c in cons])
    x_scale = float(np.max(np.abs(rhs) / row)) if np.any(rhs) else 1.0
    c_norm = np.sqrt(sum(np.sum(np.abs(c) ** 2) for c in problem.objective))
    c_scale = float(c_norm) if c_norm > 0 else 1.0
    sign = np.array([-1.0 if c.sense == ">=" else 1.0 for c in cons])

    def tr(a, x):
        return 0.0 if a is None else float(np.real(np.sum(a * x.T)))

    ax = np.array([sum(tr(a, x) for a, x in zip(c.coeffs, X)) for c in cons])
    slack = sign * (rhs - ax)                      # >= 0 when feasible
    viol = np.where(np.array([c.sense == "==" for c in cons]), np.abs(slack), np.maximum(0.0, -slack))
    primal = float(np.max(viol / (row * x_scale)))

    psd = 0.0
    for x in X:
        psd = max(psd, max(0.0, -float(np.linalg.eigvalsh(x)[0])) / x_scale)

    ineq = np.array([c.sense != "==" for c in cons])
    dual = float(np.max(np.where(ineq, np.maximum(0.0, -y) * row, 0.0))) / c_scale if y.size else 0.0
    comp = 0.0
    for b, x in enumerate(X):
        S = -np.asarray(problem.objective[b], dtype=complex)
        for i, c in enumerate(cons):
            if c.coeffs[b] is not None:
                S = S + y[i] * sign[i] * c.coeffs[b]
        S = hermitian(S)
        dual = max(dual, max(0.0, -float(np.linalg.eigvalsh(S)[0])) / c_scale)
        comp += abs(float(np.real(np.sum(x * S.T))))
    comp += float(np.sum(np.abs(np.where(ineq, y * slack, 0.0))))
    pobj = float(sum(tr(c, x) for c, x in zip(problem.objective, X)))
    dobj = float(np.sum(y * sign * rhs))
    denom = max(c_scale * x_scale, abs(pobj), abs(dobj))
    comp_rel = comp / denom
    gap = abs(dobj - pobj) / denom
    checks = {
        "primal_feasibility": primal <= tol,
        "psd": psd <= tol,
        "dual_feasibility": dual <= tol,
        "complementarity": comp_rel <= tol,
        "duality_gap": gap <= tol,
    }
    return CertificateReport(primal, psd, dual, comp_rel, gap, tol, checks)


def dump_problem(problem: SdpProblem, path) -> None:
    """Write ``problem`` in a plain text format readable by :func:`load_problem`.

    Matrices are written row-major, one ``re im`` pair per entry.
    """
    lines = ["# block SDP: maximize sum_b Tr(C_b X_b)",
             "blocks " + " ".join(str(n) for n in problem.block_dims),
             f"constraints {len(problem.constraints)}"]

    def mat(a, n):
        a = np.zeros((n, n)) if a is None else np.asarray(a)
        return [" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in np.asarray(r, dtype=complex)) for r in a]

    for b, n in enumerate(problem.block_dims):
        lines.append(f"objective {b}")
        lines += mat(problem.objective[b], n)
    for i, c in enumerate(problem.constraints):
        lines.append(f"constraint {i} {c.sense} {float(c.rhs)!r}")
        for b, n in enumerate(problem.block_dims):
            if c.coeffs[b] is None:
                lines.append(f"zero {b}")
            else:
                lines.append(f"block {b}")
                lines += mat(c.coeffs[b], n)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path) -> SdpProblem:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    pos = 0

    def take():
        nonlocal pos
        pos += 1
        return lines[pos - 1]

    dims = [int(t) for t in take().split()[1:]]
    n_con = int(take().split()[1])

    def read(n):
        rows = []
        for _ in range(n):
            v = np.array(take().split(), dtype=float)
            rows.append(v[0::2] + 1j * v[1::2])
        return np.array(rows)

    obj = []
    for n in dims:
        take()
        obj.append(read(n))
    cons = []
    for _ in range(n_con):
        _, _, sense, rhs = take().split()
        coeffs = []
        for n in dims:
            tag = take().split()[0]
            coeffs.append(None if tag == "zero" else read(n))
        cons.append(SdpConstraint(tuple(coeffs), sense, float(rhs)))
    return SdpProblem(tuple(dims), tuple(obj), tuple(cons))


def _hermitian_basis(r: int, complex_: bool) -> list:
    basis = []
    for i in range(r):
        e = np.zeros((r, r), dtype=complex if complex_ else float)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(r):
        for j in range(i + 1, r):
            e = np.zeros((r, r), dtype=complex if complex_ else float)
            e[i, j] = e[j, i] = 1.0
            basis.append(e)
            if complex_:
                e = np.zeros((r, r), dtype=complex)
                e[i, j], e[j, i] = 1j, -1j
                basis.append(e)
    return basis


@dataclass
class RankReduction:
    X: list
    ranks_before: list
    ranks_after: list
    steps: int


def reduce_rank(problem: SdpProblem, X, rank_tol: float = 1e-7, max_steps: int = 100) -> RankReduction:
    """Move a feasible point to a face of lower rank with every constraint value kept.

    Each step writes ``X_b = U_b U_b^H``, finds a nonzero direction
    ``D_b`` with ``sum_b Tr(U_b^H A_ib U_b D_b) = 0`` for all ``i`` and sets
    ``X_b <- U_b (I + t D_b) U_b^H`` with the largest ``t`` that keeps every
    block PSD, which drops at least one rank.  Applied to an optimal point it
    stays optimal up to the solve accuracy; the loop stops once the total
    number of real rank parameters ``sum_b r_b^2`` (``r_b (r_b + 1) / 2`` for
    real blocks) no longer exceeds the number of constraints.  Eigenvalues
    below ``rank_tol`` times the block's largest one are treated as zero.
    """
    cplx = not problem.is_real
    X = [np.asarray(x, dtype=complex if cplx else float) for x in X]
    cons = problem.constraints
    m = len(cons)

    def factor(x):
        w, u = np.linalg.eigh(x)
        top = max(float(w[-1]), 0.0)
        keep = w > rank_tol * top if top > 0 else np.zeros(w.size, dtype=bool)
        return u[:, keep] * np.sqrt(w[keep])[None, :]

    Us = [factor(x) for x in X]
    before = [u.shape[1] for u in Us]
    steps = 0
    while steps < max_steps:
        bases = [_hermitian_basis(u.shape[1], cplx) for u in Us]
        n_par = sum(len(b) for b in bases)
        if n_par <= m:
            break
        cols = []
        for b, (u, basis) in enumerate(zip(Us, bases)):
            if not basis:
                continue
            proj = np.zeros((m, len(basis)))
            for i, c in enumerate(cons):
                a = c.coeffs[b]
                if a is None:
                    continue
                B = u.conj().T @ a @ u
                proj[i] = [np.real(np.sum(B * e.T)) for e in basis]
            cols.append(proj)
        Amat = np.concatenate(cols, axis=1)
        _, _, vt = np.linalg.svd(Amat)
        z = vt[-1]
        D, pos, lmax = [], 0, -np.inf
        for basis in bases:
            k = len(basis)
            d = sum(zi * e for zi, e in zip(z[pos:pos + k], basis)) if k else None
            pos += k
            D.append(d)
            if d is not None:
                w = np.linalg.eigvalsh(d)
                lmax = max(lmax, float(w[-1]), float(-w[0]))
        if not lmax > 0:
            break
        # pick the sign whose extreme eigenvalue is largest, then step to the boundary
        emax = max(float(np.linalg.eigvalsh(d)[-1]) for d in D if d is not None)
        emin = min(float(np.linalg.eigvalsh(d)[0]) for d in D if d is not None)
        t = -1.0 / emax if emax >= -emin else 1.0 / (-emin)
        newU = []
        for u, d in zip(Us, D):
            if d is None:
                newU.append(u)
                continue
            x = u @ (np.eye(u.shape[1]) + t * d) @ u.conj().T
            newU.append(factor(0.5 * (x + x.conj().T)))
        Us = newU
        steps += 1
    Xout = [u @ u.conj().T for u in Us]
    return RankReduction(Xout, before, [u.shape[1] for u in Us], steps)
