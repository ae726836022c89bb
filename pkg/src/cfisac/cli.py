"""Command-line entry point: ``solve-once``, ``sweep``, ``validate`` and ``config``.

Exit codes: 0 success, 1 usage or config error, 2 infeasible problem,
3 validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import CLI_NAMES
from .config import ConfigError, parse_config, serialize_config
from .experiments import AXES, DEFAULT_VALUES, SweepSpec, export_csv, run_sweep
from .metrics import ap_powers, fronthaul_overhead
from .scenario import build_geometry, sample_realization, trial_rng
from .sdr import InfeasibleError, sdr_mcbf

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("cfisac")


def git_blob_sha1(data: bytes) -> str:
    """Content hash in the format used by ``git hash-object``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(path: Path, config, layout, outputs: list, extra: dict | None = None) -> Path:
    resolved = serialize_config(config, layout)
    manifest = {
        "tool": "cfisac",
        "version": __version__,
        "config_sha1": git_blob_sha1(resolved.encode()),
        "seed": config.seed,
        "config": {"system": asdict(config), "layout": asdict(layout)},
        "outputs": [str(p) for p in outputs],
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        **(extra or {}),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def write_beams(path: Path, v: np.ndarray, config) -> int:
    """Dump beams as ``re im`` lines: stream, then AP, then antenna."""
    lines = [str(config.M_t), str(config.K), str(config.N), str(config.seed)]
    lines += [f"{float(z.real)!r} {float(z.imag)!r}" for z in v.reshape(-1)]
    path.write_text("\n".join(lines) + "\n")
    return v.size


def _load(path):
    try:
        return parse_config(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return None


def cmd_solve_once(args) -> int:
    loaded = _load(args.config)
    if loaded is None:
        return EXIT_CONFIG
    config, layout = loaded
    rng = trial_rng(config.seed, args.trial)
    try:
        real = sample_realization(config, build_geometry(config, layout, rng), rng)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sol = sdr_mcbf(real, config)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}")
        cert = exc.certificate
        if cert is not None and cert.get("kind") == "dual-ray":
            y = np.asarray(cert["y"])
            print("certificate: dual ray y >= 0 with sum_i y_i s_i b_i = -1")
            print("  y = " + " ".join(f"{x:.3e}" for x in y))
        return EXIT_INFEASIBLE
    d = sol.diagnostics
    rep = d["report"]
    print(f"scheme: {sol.scheme}")
    print(f"solver: {d['solver_status']}, {d['iterations']} iterations, duality gap {d['duality_gap']:.2e}")
    for k, r in enumerate(d["rates"]):
        print(f"user {k}: rate {r:.6f} bit/s/Hz (target {config.R_min:g})")
    print(f"SCNR: {d['scnr']:.6e} ({10 * np.log10(max(d['scnr'], 1e-300)):.3f} dB), "
          f"relaxed bound {d['scnr_relaxed']:.6e}")
    for m, p in enumerate(ap_powers(sol.v, config.M_t, config.N)):
        print(f"AP {m}: power {p:.9g} W of {config.P_m[m]:g} W")
    flags = rep.flags()
    print("tightness: " + ", ".join(f"{k}={'yes' if v else 'NO'}" for k, v in flags.items())
          + f", signal rel error {rep.signal_rel_error:.1e}")
    if args.dump_beams:
        n = write_beams(Path(args.dump_beams), sol.v, config)
        print(f"wrote {n} beam coefficients (fronthaul {fronthaul_overhead(config)}) to {args.dump_beams}")
    return EXIT_OK


def _parse_values(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot read values from {text!r}") from None


def _parse_schemes(text: str) -> tuple:
    names = [s.strip().lower() for s in text.split(",") if s.strip()]
    unknown = [n for n in names if n not in CLI_NAMES]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown schemes {unknown}; choose from {sorted(CLI_NAMES)}")
    return tuple(CLI_NAMES[n] for n in names)


def cmd_sweep(args) -> int:
    loaded = _load(args.config)
    if loaded is None:
        return EXIT_CONFIG
    config, layout = loaded
    values = args.values or DEFAULT_VALUES[args.axis]
    schemes = args.schemes or tuple(CLI_NAMES.values())
    try:
        spec = SweepSpec(args.axis, values, args.trials, schemes, config, layout, timing=args.timing)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    records = run_sweep(spec, workers=args.workers)
    export_csv(records, out)
    manifest = out.with_suffix(".manifest.json")
    write_manifest(manifest, config, layout, [out],
                   {"sweep": {"axis": spec.axis, "values": list(spec.values), "trials": spec.trials,
                              "schemes": list(spec.schemes)}})
    for r in records:
        print(f"{r.axis}={r.axis_value:g} {r.scheme}: SINR {r.mean_sinr_db:.3f} dB, "
              f"min rate {r.mean_min_rate:.4f}, SCNR {r.mean_scnr_db:.3f} dB "
              f"({r.feasible_trials}/{r.trials} feasible)")
    print(f"wrote {out} and {manifest}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import run_checks

    results = run_checks(quick=args.quick, perturb_extraction=args.perturb_extraction)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "validation FAILED")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_config(args) -> int:
    loaded = _load(args.config)
    if loaded is None:
        return EXIT_CONFIG
    print(serialize_config(*loaded), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfisac", description="Multi-AP cooperative ISAC beamforming.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve-once", help="solve one realization with SDR-MCBF")
    s.add_argument("config")
    s.add_argument("--trial", type=int, default=0, help="trial index of the random stream")
    s.add_argument("--dump-beams", metavar="PATH", help="write the beamformers as text")
    s.set_defaults(func=cmd_solve_once)

    s = sub.add_parser("sweep", help="Monte Carlo sweep over one axis")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=AXES)
    s.add_argument("--values", type=_parse_values, help="comma separated; power in dBW, distance in m")
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--schemes", type=_parse_schemes, help=f"comma separated subset of {','.join(CLI_NAMES)}")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default="sweep.csv")
    s.add_argument("--timing", action="store_true", help="record solve times (makes output non-reproducible)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("validate", help="run the built-in oracle suite")
    s.add_argument("--quick", action="store_true", help="reduced suite, under a minute")
    s.add_argument("--perturb-extraction", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("config", help="print the fully resolved configuration")
    s.add_argument("config")
    s.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
