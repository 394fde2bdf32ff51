"""MSE-vs-SNR curves for several channel families and speeds, one CSV per scenario.

    python3 scripts/sweep_scenarios.py --classifier runs/stock/model.bin --out runs/curves

The last column of the printed summary is the OTFS/OFDM MSE ratio per SNR point.
"""

import argparse
import csv
from pathlib import Path

from wavesel.chanmodels import STOCK_SNR_DB, stock_model
from wavesel.classifier import load_model
from wavesel.modem import CURVE_COLUMNS, sweep_curves
from wavesel.transforms import GridConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--classifier", required=True)
    ap.add_argument("--models", default="EVA,ETU")
    ap.add_argument("--speeds", default="20,250")
    ap.add_argument("--qam", type=int, default=16)
    ap.add_argument("--draws", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/curves")
    args = ap.parse_args()

    grid = GridConfig.stock()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.classifier)
    for name in args.models.split(","):
        for speed in (float(v) for v in args.speeds.split(",")):
            spec = stock_model(name, v_max=speed, fc=grid.fc)
            rows = sweep_curves(model, spec, grid, args.qam, STOCK_SNR_DB, draws=args.draws, seed=args.seed)
            path = out / f"{name.lower()}_{speed:g}kmh_{args.qam}qam.csv"
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
                w.writeheader()
                w.writerows(rows)
            print(f"{path}: " + "  ".join(f"{r['snr_db']:g}dB {r['mse_otfs'] / r['mse_ofdm']:.3f}" for r in rows))


if __name__ == "__main__":
    main()
