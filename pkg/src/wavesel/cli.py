"""Command-line entry point: gen-dataset, train, eval, sweep, inspect."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .chanmodels import STOCK_QAM, STOCK_SNR_DB, STOCK_SPEEDS_KMH, ScenarioConfig, load_model_spec, stock_model
from .classifier import ArchConfig, TrainConfig, evaluate_accuracy, init_model, load_model, save_model, train
from .dataset import generate_split, load_dataset, read_manifest, save_dataset
from .errors import DatasetFormatError
from .modem import CURVE_COLUMNS, compare_policies, realize_samples, sweep_curves
from .transforms import GridConfig

log = logging.getLogger("wavesel")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID = 4


class ConfigError(ValueError):
    pass


def parse_range(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(round((b - a) / step))
            return [a + i * step for i in range(n + 1)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"invalid range {text!r}; expected start:stop:step or a comma list") from None


def parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"invalid integer list {text!r}") from None


def _model_entry(name: str):
    p = Path(name)
    if p.suffix == ".json":
        if not p.exists():
            raise FileNotFoundError(name)
        return load_model_spec(p)
    if name.upper() not in ("EPA", "EVA", "ETU"):
        raise ConfigError(f"unknown channel model {name!r}; use EPA, EVA, ETU or a .json spec file")
    return name.upper()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sidecar_log(path: Path, argv, **extra):
    entry = {"time": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "argv": list(argv), "version": __version__, **extra}
    with open(path, "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def cmd_gen_dataset(args, argv) -> int:
    models = tuple(_model_entry(m) for m in args.models.split(",") if m)
    scenario = ScenarioConfig(
        grid=GridConfig.make(args.N, args.M, T0=args.T0, fc=args.fc),
        models=models,
        speeds_kmh=tuple(parse_range(args.speeds)),
        snr_set_db=tuple(parse_range(args.snr)),
        qam_set=tuple(parse_ints(args.qam)),
    )
    if args.train < 1 or args.test < 1:
        raise ConfigError("--train and --test must be >= 1")
    train_set, test_set, manifest = generate_split(scenario, args.train, args.test, args.seed, workers=args.workers)
    out = save_dataset(args.out, train_set, test_set, manifest)
    _sidecar_log(out / "run.log", argv)
    labels = [s.label for s in train_set]
    print(f"wrote {len(train_set)} train / {len(test_set)} test samples to {out} "
          f"(train OFDM fraction {sum(labels) / len(labels):.3f})")
    return EXIT_OK


def cmd_train(args, argv) -> int:
    manifest, train_set, _ = load_dataset(args.data)
    arch = ArchConfig(height=manifest.grid.N + 1, width=manifest.grid.M, residual=not args.no_residual)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                      validation_fraction=args.validation_fraction)

    def report(epoch, hist):
        log.info("epoch %d loss %.4f acc %.4f", epoch + 1, hist.loss[-1], hist.accuracy[-1])

    model, hist = train(init_model(arch, seed=args.seed), train_set, cfg, verbose=report)
    out = Path(args.out)
    save_model(model, out)
    summary = {"arch": asdict(arch), "train_config": asdict(cfg), "data": str(args.data),
               "history": {"loss": hist.loss, "accuracy": hist.accuracy, "val_accuracy": hist.val_accuracy}}
    Path(str(out) + ".train.json").write_text(_dump(summary))
    _sidecar_log(Path(str(out) + ".log"), argv)
    print(f"trained {args.epochs} epochs: final loss {hist.loss[-1]:.4f}, train accuracy {hist.accuracy[-1]:.4f}")
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    manifest, _, test_set = load_dataset(args.data)
    model = load_model(args.model)
    acc, conf = evaluate_accuracy(model, test_set)
    report = compare_policies(realize_samples(model, test_set))
    out = {
        "data": str(args.data),
        "model": str(args.model),
        "test_count": len(test_set),
        "accuracy": acc,
        "confusion": {"rows": "true label (0=OTFS, 1=OFDM)", "cols": "predicted", "matrix": conf.tolist()},
        "policies": report.to_dict(),
    }
    out_path = Path(args.out) if args.out else Path(args.data) / "eval.json"
    out_path.write_text(_dump(out))
    print(f"accuracy {acc:.4f}")
    print(f"confusion [[{conf[0, 0]}, {conf[0, 1]}], [{conf[1, 0]}, {conf[1, 1]}]]")
    for k in ("switched", "always_otfs", "always_ofdm", "oracle"):
        print(f"mean MSE {k:12s} {report.mean_mse[k]:.6e}  regret {report.mean_regret[k]:.3e}")
    print(f"report written to {out_path}")
    return EXIT_OK


def cmd_sweep(args, argv) -> int:
    entry = _model_entry(args.model)
    spec = stock_model(entry, fc=args.fc) if isinstance(entry, str) else entry
    spec = spec.with_speed(args.speed)
    if args.qam not in STOCK_QAM:
        raise ConfigError(f"--qam must be one of {STOCK_QAM}")
    grid = GridConfig.make(args.N, args.M, T0=args.T0, fc=args.fc)
    model = load_model(args.classifier)
    snrs = parse_range(args.snr)
    rows = sweep_curves(model, spec, grid, args.qam, snrs, draws=args.draws, seed=args.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in rows:
        w.writerow([f"{r['snr_db']:g}"] + [f"{r[c]:.9e}" for c in CURVE_COLUMNS[1:]])
    out = Path(args.out)
    out.write_text(buf.getvalue())
    config = {"model": spec.to_dict(), "speed_kmh": args.speed, "qam": args.qam, "snr_db": snrs,
              "draws": args.draws, "seed": args.seed, "classifier": str(args.classifier),
              "grid": asdict(grid)}
    Path(str(out) + ".config.json").write_text(_dump(config))
    _sidecar_log(Path(str(out) + ".log"), argv)
    print(f"wrote {len(rows)} SNR points to {out}")
    return EXIT_OK


def cmd_inspect(args, argv) -> int:
    manifest = read_manifest(args.path)
    print(_dump(manifest.to_dict()), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavesel", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def grid_flags(sp):
        sp.add_argument("--N", type=int, default=9, help="Doppler bins / OFDM symbols")
        sp.add_argument("--M", type=int, default=135, help="delay bins / subcarriers")
        sp.add_argument("--T0", type=float, default=9e-6, help="symbol duration [s]")
        sp.add_argument("--fc", type=float, default=4e9, help="carrier frequency [Hz]")

    g = sub.add_parser("gen-dataset", help="generate train/test sets")
    g.add_argument("--models", default="epa,eva,etu")
    g.add_argument("--speeds", default=",".join(f"{v:g}" for v in STOCK_SPEEDS_KMH), help="km/h list or range")
    g.add_argument("--snr", default=f"{STOCK_SNR_DB[0]}:{STOCK_SNR_DB[-1]}:5", help="dB list or range")
    g.add_argument("--qam", default=",".join(map(str, STOCK_QAM)))
    g.add_argument("--train", type=int, default=1000)
    g.add_argument("--test", type=int, default=100)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", required=True)
    grid_flags(g)
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="train the CNN classifier")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--validation-fraction", type=float, default=0.0)
    t.add_argument("--no-residual", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy and policy comparison on the test set")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="MSE-vs-SNR curves for one scenario")
    s.add_argument("--model", required=True, help="EPA, EVA, ETU or a .json spec")
    s.add_argument("--speed", type=float, required=True, help="km/h")
    s.add_argument("--qam", type=int, required=True)
    s.add_argument("--snr", default="-20:30:5")
    s.add_argument("--classifier", required=True)
    s.add_argument("--draws", type=int, default=25)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    grid_flags(s)
    s.set_defaults(func=cmd_sweep)

    i = sub.add_parser("inspect", help="print a dataset manifest")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return p


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, argv)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (ConfigError, DatasetFormatError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
