"""Command-line entry point: ``xbarsim <verb> [options]``.

Exit status is 2 for configuration errors, 1 for other failures and 0
otherwise. Grid points that fail inside a sweep are recorded as error rows
and only reported as a warning count.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, XbarError

log = logging.getLogger("xbarsim")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def _cmd_run(args) -> int:
    from .experiments import emit_hysteresis, load_config, run_experiment

    cfg = load_config(args.config, seed=args.seed)
    if cfg.experiment == "hysteresis":
        rows = emit_hysteresis(cfg, args.out)
        for r in rows:
            print(f"f={r.frequency:g} Hz  A={r.amplitude:g} V  area={r.loop_area:.6g}  pinched={r.pinched}")
        return EXIT_OK
    rows = run_experiment(cfg, args.out, threads=args.threads, timing=args.timing)
    failed = sum(1 for r in rows if r.error)
    print(f"{cfg.experiment}: {len(rows)} rows -> {Path(args.out) / cfg.output_name}")
    if failed:
        print(f"warning: {failed} grid point(s) failed; see the error column", file=sys.stderr)
    return EXIT_OK


def _cmd_hysteresis(args) -> int:
    from .experiments import ExperimentConfig, emit_hysteresis, load_config

    if args.config:
        cfg = load_config(args.config)
        if cfg.experiment != "hysteresis":
            raise ConfigError("config is not a hysteresis experiment", field="experiment")
    else:
        grid = {}
        if args.frequency:
            grid["frequency"] = args.frequency
        if args.amplitude is not None:
            grid["amplitude"] = [args.amplitude]
        cfg = ExperimentConfig("hysteresis", device={"preset": args.preset}, grid=grid)
    for r in emit_hysteresis(cfg, args.out):
        print(f"f={r.frequency:g} Hz  A={r.amplitude:g} V  area={r.loop_area:.6g}  pinched={r.pinched}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .io import load_dataset, save_network
    from .train import train_fixture

    ds = load_dataset(args.dataset)
    net = train_fixture(ds, args.arch, args.epochs, args.lr, args.seed)
    out = save_network(net, args.out)
    print(f"trained {args.arch}: final loss {net.meta['final_loss']:.5f} -> {out}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    from .experiments import build_point, load_config
    from .io import load_dataset, load_network
    from .crossbar import write_tile_layout
    from .nn import patch_network

    cfg = load_config(args.config, seed=args.seed)
    params = cfg.points()[0] if cfg.grid else {}
    engine, nonideal = build_point(cfg, params)
    net = load_network(cfg.network)
    calib = load_dataset(cfg.calibration).take(cfg.calibration_samples).images
    patched = patch_network(net, cfg.device_params(), engine, nonideal, calib)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for idx, layer in patched.analog_layers():
        mapped = layer.mapped
        write_tile_layout(mapped, out / f"layer{idx}_tiles.csv")
        layer.faults.to_csv(mapped, out / f"layer{idx}_faults.csv")
        print(f"layer {idx}: {mapped.in_features}x{mapped.out_features} weights, "
              f"{2 * len(mapped.placements)} tiles, K={mapped.k:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xbarsim", description="Memristor crossbar inference simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run a sweep described by a TOML config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--timing", action="store_true",
                     help="fill runtime_s (makes the CSV run-dependent)")
    run.set_defaults(func=_cmd_run)

    hyst = sub.add_parser("hysteresis", help="sine sweeps through one device")
    hyst.add_argument("--config")
    hyst.add_argument("--preset", default="pt_hf_ti")
    hyst.add_argument("--frequency", type=float, nargs="+")
    hyst.add_argument("--amplitude", type=float)
    hyst.add_argument("--out", default=".")
    hyst.set_defaults(func=_cmd_hysteresis)

    train = sub.add_parser("train-fixture", help="train a small network with full-batch GD")
    train.add_argument("--dataset", default="fixture:digits-train")
    train.add_argument("--arch", default="mlp", choices=["linear", "mlp", "cnn"])
    train.add_argument("--epochs", type=int, default=1000)
    train.add_argument("--lr", type=float, default=0.5)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", required=True, help="weight container directory")
    train.set_defaults(func=_cmd_train)

    insp = sub.add_parser("inspect-tiles", help="write tile layouts and fault maps per layer")
    insp.add_argument("--config", required=True)
    insp.add_argument("--seed", type=int, default=None)
    insp.add_argument("--out", default=".")
    insp.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except XbarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
