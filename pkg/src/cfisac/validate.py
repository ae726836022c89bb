"""Built-in oracle suite run by ``cfisac validate``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import sdp
from .experiments import brute_force_oracle, desk_config
from .hermitian import embed, is_psd, unembed
from .metrics import BeamformingSolution, build_E, scnr_empirical, scnr_trace
from .scenario import LayoutSpec, SystemConfig, build_geometry, sample_realization, trial_rng
from .sdr import extract_with_fallback, formulate_p2, sdr_mcbf

VALIDATE_SEED = 20240


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _realization(config: SystemConfig, *key):
    rng = trial_rng(VALIDATE_SEED, *key)
    return sample_realization(config, build_geometry(config, LayoutSpec(), rng), rng)


def perturbed_extractor(V, h, thresholds):
    """Fault injection: reconstruct, then tilt every stream off its optimal ray."""
    v = extract_with_fallback(V, h, thresholds)
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
    return v + 1e-2 * np.linalg.norm(v, axis=1, keepdims=True) * noise / np.linalg.norm(noise, axis=1, keepdims=True)


def check_embedding(trials: int = 50) -> CheckResult:
    rng = np.random.default_rng(VALIDATE_SEED)
    worst = 0.0
    psd_ok = True
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        b = rng.standard_normal((n, 2 * n))
        A = a + a.conj().T
        Xc = b[:, :n] + 1j * b[:, n:]
        X = Xc @ Xc.conj().T
        lhs = np.real(np.trace(A @ X))
        rhs = np.trace(embed(A) @ embed(X)) / 2
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        worst = max(worst, float(np.max(np.abs(unembed(embed(X)) - X))) / max(1.0, np.abs(X).max()))
        psd_ok &= is_psd(embed(X)) and is_psd(unembed(embed(X)))
    ok = worst <= 1e-12 and psd_ok
    return CheckResult("embedding identities", ok, f"max rel error {worst:.1e}, PSD preserved {psd_ok}")


def check_scnr_consistency(instances: int, draws: int) -> CheckResult:
    worst = 0.0
    for i in range(instances):
        cfg = desk_config(Q=2 if i == 0 else 1)
        real = _realization(cfg, 1, i)
        rng = trial_rng(VALIDATE_SEED, 2, i)
        v = rng.standard_normal((cfg.K, cfg.dim)) + 1j * rng.standard_normal((cfg.K, cfg.dim))
        sol = BeamformingSolution(v / np.linalg.norm(v) * np.sqrt(sum(cfg.P_m)))
        mc = scnr_empirical(sol, real, cfg, draws, rng)
        tr = scnr_trace(sol, build_E(real, cfg), cfg)
        worst = max(worst, abs(mc - tr) / tr)
    return CheckResult("echo energy vs trace formula", worst <= 0.02,
                       f"{instances} instances, {draws} draws, max rel deviation {worst:.3%}")


def check_micro_oracle(instances: int, samples: int) -> CheckResult:
    cfg = SystemConfig(R_min=1.0, M_t=1, N=2, K=1, Q=1)
    worst = -np.inf
    dominated = True
    for i in range(instances):
        real = _realization(cfg, 3, i)
        s = sdr_mcbf(real, cfg)
        o = brute_force_oracle(real, cfg, samples, trial_rng(VALIDATE_SEED, 4, i))
        so = o.diagnostics["scnr"]
        worst = max(worst, (so - s.diagnostics["scnr"]) / so)
        dominated &= s.diagnostics["scnr_relaxed"] >= so * (1 - 1e-9)
    ok = worst <= 0.01 and dominated
    return CheckResult("micro-instance SDR vs random search", ok,
                       f"{instances} instances, worst shortfall {max(worst, 0):.3%}, bound holds {dominated}")


def check_tightness(instances: int, extractor=extract_with_fallback) -> CheckResult:
    cfg = desk_config()
    bad, certs = 0, 0
    for i in range(instances):
        real = _realization(cfg, 5, i)
        s = sdr_mcbf(real, cfg, extractor=extractor)
        if not s.diagnostics["tightness_ok"]:
            bad += 1
        _, prob = formulate_p2(real, cfg)
        if not sdp.verify_certificate(prob, s.diagnostics["sdp"]).passed:
            certs += 1
    ok = bad == 0 and certs == 0
    return CheckResult("reconstruction tightness", ok,
                       f"{instances} desk instances, {bad} tightness failures, {certs} certificate failures")


def run_checks(quick: bool = False, perturb_extraction: bool = False) -> list[CheckResult]:
    extractor = perturbed_extractor if perturb_extraction else extract_with_fallback
    plan = [
        (check_embedding, {}),
        (check_tightness, {"instances": 10 if quick else 100, "extractor": extractor}),
        (check_scnr_consistency, {"instances": 3 if quick else 10, "draws": 50_000 if quick else 100_000}),
        (check_micro_oracle, {"instances": 3 if quick else 20, "samples": 200_000 if quick else 1_000_000}),
    ]
    out = []
    for fn, kw in plan:
        t0 = time.perf_counter()
        res = fn(**kw)
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
