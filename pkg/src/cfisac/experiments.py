"""Monte Carlo sweeps along one system axis at a time.

Every trial draws its geometry and channels from ``trial_rng(seed, trial)``,
so all axis values see the same random stream and any worker count gives the
same numbers.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import SCHEMES, BaselineCache, run_baseline
from .metrics import BeamformingSolution, build_E, rate, sinr_all, sinr_threshold
from .scenario import (Geometry, LayoutSpec, ScenarioRealization, SystemConfig, build_geometry,
                       sample_realization, trial_rng)
from .sdr import InfeasibleError, sdr_mcbf

log = logging.getLogger(__name__)

AXES = ("antennas", "power", "distance")
CSV_HEADER = ("axis", "axis_value", "scheme", "trials", "feasible_trials", "mean_sinr_db",
              "stderr_sinr_db", "mean_min_rate", "stderr_min_rate", "mean_scnr_db",
              "stderr_scnr_db", "mean_solve_ms")
DB_FLOOR = -300.0
REFERENCE_USER = (0.0, 20.0)

DEFAULT_VALUES = {
    "antennas": (4, 8, 12, 16),
    "power": (-10.0, -5.0, 0.0, 5.0, 10.0),
    "distance": (0.0, 10.0, 20.0, 40.0, 60.0),
}


def desk_config(R_min: float = 1.0, **kw) -> SystemConfig:
    """Small profile for CI: four antennas per AP and two users."""
    return SystemConfig(R_min=R_min, **{"M_t": 2, "M_r": 2, "N": 4, "K": 2, "Q": 1, **kw})


def full_config(R_min: float = 1.0, **kw) -> SystemConfig:
    """Full-size profile with sixteen antennas per AP."""
    return SystemConfig(R_min=R_min, **{"M_t": 2, "M_r": 2, "N": 16, "K": 5, "Q": 2, **kw})


PRESET_TRIALS = {"desk": 200, "full": 1000}


def db(x) -> float:
    x = float(x)
    return 10.0 * math.log10(x) if x > 0 else DB_FLOOR


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    trials: int
    schemes: tuple = SCHEMES
    base_config: SystemConfig = field(default_factory=desk_config)
    layout: LayoutSpec = field(default_factory=LayoutSpec)
    timing: bool = False

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}; expected one of {AXES}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("a sweep needs at least one value")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if self.axis == "antennas" and any(v != int(v) or v < 1 for v in vals):
            raise ValueError("antenna counts must be positive integers")
        if self.axis == "distance" and min(vals) < 0:
            raise ValueError("distances must be >= 0")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown schemes {unknown}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "schemes", tuple(self.schemes))


@dataclass(frozen=True)
class TrialResult:
    axis_value: float
    trial: int
    scheme: str
    feasible: bool
    sinr_db: float = float("nan")
    min_rate: float = float("nan")
    scnr_db: float = float("nan")
    scnr: float = float("nan")
    scnr_bound: float = float("nan")
    rates_met: bool = False
    solve_ms: float = float("nan")
    diagnostics: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class AggregateRecord:
    axis: str
    axis_value: float
    scheme: str
    trials: int
    feasible_trials: int
    mean_sinr_db: float
    stderr_sinr_db: float
    mean_min_rate: float
    stderr_min_rate: float
    mean_scnr_db: float
    stderr_scnr_db: float
    mean_solve_ms: float
    rates_met_fraction: float = float("nan")
    mean_scnr: float = float("nan")

    @property
    def infeasibility_rate(self) -> float:
        return 1.0 - self.feasible_trials / self.trials


def config_for(spec: SweepSpec, value: float) -> SystemConfig:
    base = spec.base_config
    if spec.axis == "antennas":
        return base.with_antennas(int(value))
    if spec.axis == "power":
        return base.with_power(10.0 ** (value / 10.0))
    return base


def distance_sweep_geometry(d: float, base: Geometry) -> Geometry:
    """Put one user at the reference spot and the target cluster ``d`` meters above it.

    The user closest to ``x = 0`` is replaced; targets keep their offsets from
    the cluster center.
    """
    if d < 0:
        raise ValueError("distance must be >= 0")
    users = np.array(base.user_positions, dtype=float)
    ref = np.asarray(REFERENCE_USER)
    users[int(np.argmin(np.abs(users[:, 0] - ref[0])))] = ref
    center = ref + np.array([0.0, float(d)])
    targets = np.asarray(base.target_positions, dtype=float) - base.target_center + center
    for aps in (base.tx_ap_positions, base.rx_ap_positions):
        if np.any(np.linalg.norm(aps[:, None] - targets[None], axis=-1) == 0):
            raise ValueError("a target coincides with an AP")
    return replace(base, user_positions=users, target_positions=targets, target_center=center)


def draw_trial(spec: SweepSpec, value: float, trial: int) -> tuple[SystemConfig, ScenarioRealization]:
    cfg = config_for(spec, value)
    rng = trial_rng(cfg.seed, trial)
    geo = build_geometry(cfg, spec.layout, rng)
    if spec.axis == "distance":
        geo = distance_sweep_geometry(value, geo)
    return cfg, sample_realization(cfg, geo, rng)


def _metrics(sol: BeamformingSolution, realization: ScenarioRealization, cfg: SystemConfig, E) -> dict:
    sinr = sinr_all(realization.h, sol.v, cfg.sigma_k_sq)
    rates = rate(sinr)
    scnr = float(np.real(np.sum(E * sol.aggregate().T))) / float(np.sum(cfg.sigma_w_sq))
    return {
        "sinr_db": float(np.mean([db(s) for s in sinr])),
        "min_rate": float(rates.min()),
        "scnr": scnr,
        "scnr_db": db(scnr),
        "rates_met": bool(np.all(rates >= cfg.R_min - 1e-6)),
    }


def run_trial(spec: SweepSpec, value: float, trial: int) -> list[TrialResult]:
    """All requested schemes on one realization; failures become infeasible records."""
    cfg, real = draw_trial(spec, value, trial)
    E = build_E(real, cfg).E
    cache = BaselineCache(real, cfg)
    out = []
    for scheme in spec.schemes:
        t0 = time.perf_counter()
        diag = {}
        try:
            if scheme == "SDR-MCBF":
                sol = sdr_mcbf(real, cfg)
                bound = sol.diagnostics["scnr_relaxed"]
                diag = {k: sol.diagnostics[k] for k in ("duality_gap", "tightness_ok", "ranks",
                                                          "signal_rel_error", "max_rate_violation")}
            else:
                sol = run_baseline(scheme, real, cfg, cache)
                bound = float("nan")
                diag = {k: sol.diagnostics[k] for k in ("selected_lambda", "nsp_leakage")
                        if k in sol.diagnostics}
        except (InfeasibleError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.info("trial %d, %s=%g, %s: %s", trial, spec.axis, value, scheme, exc)
            out.append(TrialResult(value, trial, scheme, False, diagnostics={"error": str(exc)}))
            continue
        ms = (time.perf_counter() - t0) * 1e3 if spec.timing else float("nan")
        m = _metrics(sol, real, cfg, E)
        out.append(TrialResult(value, trial, scheme, True, m["sinr_db"], m["min_rate"], m["scnr_db"],
                               m["scnr"], bound, m["rates_met"], ms, diag))
    return out


def _run_chunk(args):
    spec, tasks = args
    return [r for value, trial in tasks for r in run_trial(spec, value, trial)]


def run_trials(spec: SweepSpec, workers: int = 1) -> list[TrialResult]:
    """Every (value, trial) pair; the returned list is sorted and worker-independent."""
    tasks = [(v, t) for v in spec.values for t in range(spec.trials)]
    if workers <= 1:
        results = _run_chunk((spec, tasks))
    else:
        n = max(1, len(tasks) // (4 * workers))
        chunks = [(spec, tasks[i:i + n]) for i in range(0, len(tasks), n)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]
    order = {s: i for i, s in enumerate(spec.schemes)}
    return sorted(results, key=lambda r: (r.axis_value, order[r.scheme], r.trial))


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size))


def aggregate(spec: SweepSpec, results: list[TrialResult]) -> list[AggregateRecord]:
    """Per (value, scheme) means over feasible trials, ordered by value then scheme name."""
    records = []
    for value in spec.values:
        for scheme in sorted(spec.schemes):
            rows = sorted((r for r in results if r.axis_value == value and r.scheme == scheme),
                          key=lambda r: r.trial)
            ok = [r for r in rows if r.feasible]
            cols = {name: np.array([getattr(r, name) for r in ok], dtype=float)
                    for name in ("sinr_db", "min_rate", "scnr_db", "solve_ms", "scnr")}
            ms, ss = _mean_stderr(cols["sinr_db"])
            mr, sr = _mean_stderr(cols["min_rate"])
            mc, sc = _mean_stderr(cols["scnr_db"])
            t = float(np.mean(cols["solve_ms"])) if ok and spec.timing else float("nan")
            met = float(np.mean([r.rates_met for r in ok])) if ok else float("nan")
            lin = float(np.mean(cols["scnr"])) if ok else float("nan")
            records.append(AggregateRecord(spec.axis, value, scheme, len(rows), len(ok),
                                           ms, ss, mr, sr, mc, sc, t, met, lin))
    return records


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[AggregateRecord]:
    return aggregate(spec, run_trials(spec, workers))


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".9g")


def csv_rows(records: list[AggregateRecord]) -> list[list[str]]:
    ordered = sorted(records, key=lambda r: (r.axis_value, r.scheme))
    return [[_fmt(getattr(r, name)) for name in CSV_HEADER] for r in ordered]


def export_csv(records: list[AggregateRecord], path) -> Path:
    """Write the sweep table; rows sorted by axis value then scheme name."""
    if not records:
        raise ValueError("no records to export")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            w.writerows(csv_rows(records))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------- oracle

class OracleError(RuntimeError):
    pass


def brute_force_oracle(realization: ScenarioRealization, config: SystemConfig, samples: int,
                       rng: np.random.Generator, chunk: int = 100_000) -> BeamformingSolution:
    """Random search over beam directions for the best rate-feasible SCNR.

    Each draw takes one direction per stream, uniform on the complex unit
    sphere, and applies the single largest scalar that keeps every AP within
    budget.  Meant for a handful of unknowns only.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    h = realization.h
    K, n = h.shape
    E = build_E(realization, config).E
    P_m = np.asarray(config.P_m, dtype=float)
    sigma = np.asarray(config.sigma_k_sq, dtype=float)
    gamma = float(sinr_threshold(config.R_min))
    denom = float(np.sum(config.sigma_w_sq))
    best_val, best_v, n_ok, done = -np.inf, None, 0, 0
    while done < samples:
        B = min(chunk, samples - done)
        z = rng.standard_normal((B, K, n)) + 1j * rng.standard_normal((B, K, n))
        z /= np.linalg.norm(z, axis=2, keepdims=True)
        pw = np.sum(np.abs(z.reshape(B, K, config.M_t, config.N)) ** 2, axis=(1, 3))   # (B, M_t)
        with np.errstate(divide="ignore"):
            c = np.min(np.sqrt(P_m[None, :] / pw), axis=1)
        v = z * c[:, None, None]
        g = np.abs(np.einsum("kn,bjn->bkj", h.conj(), v)) ** 2
        sig = np.einsum("bkk->bk", g)
        sinr = sig / (g.sum(axis=2) - sig + sigma[None, :])
        ok = np.all(sinr >= gamma * (1 - 1e-12), axis=1)
        val = np.real(np.einsum("bkn,nm,bkm->b", v.conj(), E, v)) / denom
        n_ok += int(ok.sum())
        if np.any(ok):
            i = int(np.argmax(np.where(ok, val, -np.inf)))
            if val[i] > best_val:
                best_val, best_v = float(val[i]), v[i].copy()
        done += B
    if best_v is None:
        raise OracleError(f"no rate-feasible draw among {samples}; use more samples or lower R_min")
    return BeamformingSolution(best_v, "oracle", {"scnr": best_val, "feasible_draws": n_ok,
                                                  "samples": samples})
