"""Shared driver for the sweep scripts in this directory."""

from __future__ import annotations

import argparse
import logging
import time
from pathlib import Path

from cfisac.baselines import SCHEMES
from cfisac.cli import write_manifest
from cfisac.config import parse_config
from cfisac.experiments import DEFAULT_VALUES, PRESET_TRIALS, SweepSpec, export_csv, run_sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main(axis: str, description: str) -> None:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--config", help="config file; overrides --preset")
    p.add_argument("--values", help="comma separated axis values")
    p.add_argument("--trials", type=int, help="default 200 (desk) or 1000 (full)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV path, default results/<axis>_<preset>.csv")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)

    config, layout = parse_config(args.config or CONFIGS / f"{args.preset}.ini")
    values = tuple(float(v) for v in args.values.split(",")) if args.values else DEFAULT_VALUES[axis]
    trials = args.trials or PRESET_TRIALS[args.preset]
    out = Path(args.out or f"results/{axis}_{args.preset}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)

    spec = SweepSpec(axis, values, trials, SCHEMES, config, layout)
    t0 = time.perf_counter()
    records = run_sweep(spec, workers=args.workers)
    export_csv(records, out)
    write_manifest(out.with_suffix(".manifest.json"), config, layout, [out],
                   {"sweep": {"axis": axis, "values": list(values), "trials": trials}})
    for r in records:
        print(f"{axis}={r.axis_value:g} {r.scheme:9s} SINR {r.mean_sinr_db:8.3f} dB  "
              f"SCNR {r.mean_scnr_db:8.3f} dB  min rate {r.mean_min_rate:.3f}  "
              f"feasible {r.feasible_trials}/{r.trials}")
    print(f"wrote {out} in {time.perf_counter() - t0:.0f} s")
