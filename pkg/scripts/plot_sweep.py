"""Plot a sweep CSV: mean SINR and mean SCNR per scheme with stderr bars.

Needs matplotlib (``pip install artifact[plot]``).
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABELS = {"antennas": "antennas per AP", "power": "per-AP power (dBW)", "distance": "user-target distance (m)"}


def load(path):
    series = defaultdict(lambda: defaultdict(list))
    axis = None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            axis = row["axis"]
            s = series[row["scheme"]]
            for key in ("axis_value", "mean_sinr_db", "stderr_sinr_db", "mean_scnr_db", "stderr_scnr_db"):
                s[key].append(float(row[key]))
    return axis, series


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("csv")
    p.add_argument("--out", help="image path, default next to the CSV")
    args = p.parse_args()
    axis, series = load(args.csv)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    for name, s in sorted(series.items()):
        a1.errorbar(s["axis_value"], s["mean_scnr_db"], s["stderr_scnr_db"], marker="o", capsize=3, label=name)
        a2.errorbar(s["axis_value"], s["mean_sinr_db"], s["stderr_sinr_db"], marker="s", capsize=3, label=name)
    a1.set_ylabel("mean SCNR (dB)")
    a2.set_ylabel("mean user SINR (dB)")
    for a in (a1, a2):
        a.set_xlabel(LABELS.get(axis, axis))
        a.grid(alpha=0.3)
    a1.legend()
    fig.tight_layout()
    out = Path(args.out or Path(args.csv).with_suffix(".png"))
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
