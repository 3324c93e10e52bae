"""Command-line interface.

Exit status: 0 on success, 1 on usage or configuration errors, 2 on
numerical failure. Every command writes ``manifest.json`` to ``--out``.
"""

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels, io
from .baselines import BaselineConfig, BaselineResult, run_baseline
from .config import ConfigError, load_config
from .encoder import forward_propagate
from .experiment import (build_models, initial_params, make_test_data, make_training_data,
                         resolve_alpha, run_experiment)
from .metrics import SWEEP_FIELDS, SWEEP_KINDS, MetricsReport, evaluate, sweep
from .training import EpochRecord, NumericalError, TrainConfig, train

log = logging.getLogger("usar")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML experiment config (defaults: reference setup)")
    p.add_argument("--seed", type=_u64, help="overrides training.seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--penalty", choices=("l1", "l0"))
    p.add_argument("--layers", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="usar", description="Unsupervised deep-learning passive SAR imaging")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("make-model", parents=[common],
                   help="build the forward models and write the initial checkpoint")
    sub.add_parser("gen-data", parents=[common],
                   help="write training scenes/measurements and noisy test measurements")

    p = sub.add_parser("train", parents=[common], help="train the encoder")
    p.add_argument("--checkpoint", help="start from this checkpoint instead of the config")
    p.add_argument("--data", help="directory of training measurements (from gen-data)")

    p = sub.add_parser("reconstruct", parents=[common], help="run a trained encoder")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--measurement", required=True)
    p.add_argument("--name", default="image", help="output file stem")

    p = sub.add_parser("baseline", parents=[common], help="ISTA (l1) or IHTA (l0)")
    p.add_argument("--measurement", required=True)
    p.add_argument("--model", help="forward model file (default: initial model from config)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--name", default="baseline", help="output file stem")

    p = sub.add_parser("evaluate", parents=[common], help="score a method on noisy phantoms")
    p.add_argument("--checkpoint", help="evaluate this network (default: train one first)")
    p.add_argument("--method", choices=("dl", "ista", "ihta", "untrained"), default="dl")
    p.add_argument("--realizations", type=int)

    p = sub.add_parser("sweep", parents=[common], help="train and evaluate over a value list")
    p.add_argument("--kind", choices=SWEEP_KINDS, required=True)
    p.add_argument("--values", required=True, help="comma-separated list")
    return parser


def _config(args):
    cfg = load_config(args.config)
    if args.layers is not None and args.layers < 1:
        raise UsageError("--layers must be >= 1")
    if args.lam is not None and args.lam < 0:
        raise UsageError("--lambda must be nonnegative")
    cfg = cfg.with_overrides(args.penalty, args.layers, args.lam)
    if args.seed is not None:
        cfg.training.seed = args.seed
    return cfg


def _write_manifest(out, args, argv, cfg, extra=None):
    manifest = {
        "command": args.command,
        "argv": list(argv) if argv is not None else sys.argv[1:],
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "seed": cfg.training.seed,
        "versions": {
            "usar": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "backend": _kernels.BACKEND,
        },
    }
    if _kernels.BACKEND == "numba":
        import numba
        manifest["versions"]["numba"] = numba.__version__
    if extra:
        manifest.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_history(path, history):
    io.write_csv(path, EpochRecord.CSV_FIELDS, [h.row() for h in history])


def _write_metrics(path, report):
    io.write_csv(path, MetricsReport.CSV_FIELDS, report.rows())


def _read_dir(path):
    files = sorted(Path(path).glob("d_*.bin"))
    if not files:
        raise UsageError(f"no measurements (d_*.bin) in {path}")
    return [io.read_measurement(f) for f in files]


def cmd_make_model(args, cfg, out):
    models = build_models(cfg)
    io.write_forward_model(out / "forward_true.bin", models.true)
    io.write_forward_model(out / "forward_init.bin", models.init)
    io.write_checkpoint(out / "checkpoint.bin", initial_params(cfg, models.init))
    return {}


def cmd_gen_data(args, cfg, out):
    models = build_models(cfg)
    seed = cfg.training.seed
    scenes, ms = make_training_data(cfg, models.true, seed)
    (out / "train").mkdir(exist_ok=True)
    for t, (s, m) in enumerate(zip(scenes, ms)):
        io.write_scene(out / "train" / f"scene_{t:04d}.txt", s)
        io.write_measurement(out / "train" / f"d_{t:04d}.bin", m)
    phantom, tests = make_test_data(cfg, models.true, seed)
    io.write_scene(out / "phantom.txt", phantom)
    (out / "test").mkdir(exist_ok=True)
    for r, m in enumerate(tests):
        io.write_measurement(out / "test" / f"d_{r:04d}.bin", m)
    return {"training_samples": len(ms), "test_realizations": len(tests)}


def _train_config(cfg):
    t = cfg.training
    return TrainConfig(t.epochs, t.eta_Q, t.eta_F, t.eta_tau, t.early_stop)


def cmd_train(args, cfg, out):
    if args.checkpoint:
        params = io.read_checkpoint(args.checkpoint, cfg.network.c)
        models = None
    else:
        models = build_models(cfg)
        params = initial_params(cfg, models.init)
    if args.data:
        ms = _read_dir(args.data)
    else:
        models = models or build_models(cfg)
        _, ms = make_training_data(cfg, models.true, cfg.training.seed)
    result = train(params, ms, _train_config(cfg))
    io.write_checkpoint(out / "checkpoint.bin", result.params)
    _write_history(out / "history.csv", result.history)
    return {"best_epoch": result.best_epoch, "stopped_early": result.stopped_early}


def cmd_reconstruct(args, cfg, out):
    params = io.read_checkpoint(args.checkpoint, cfg.network.c)
    m = io.read_measurement(args.measurement)
    if m.N != params.F.N:
        raise UsageError(f"measurement length {m.N} does not match checkpoint N={params.F.N}")
    rho_star, cache = forward_propagate(params, m)
    if cache.degenerate:
        log.warning("all-zero representation; writing a zero image")
    io.export_image(rho_star, cfg.geometry.grid, out / args.name)
    return {"degenerate": bool(cache.degenerate)}


def cmd_baseline(args, cfg, out):
    models = None
    if args.model:
        F = io.read_forward_model(args.model)
    else:
        models = build_models(cfg)
        F = models.init
    m = io.read_measurement(args.measurement)
    if m.N != F.N:
        raise UsageError(f"measurement length {m.N} does not match model N={F.N}")
    iters = args.iterations or cfg.evaluation.baseline_iterations
    bc = BaselineConfig(alpha=resolve_alpha(cfg, F), lam=cfg.network.lam,
                        penalty=cfg.network.penalty, iterations=iters)
    res = run_baseline(F, m, bc)
    peak = float(res.rho.max()) if res.rho.size else 0.0
    io.export_image(res.rho / peak if peak > 0 else res.rho, cfg.geometry.grid,
                    out / args.name)
    io.write_csv(out / f"{args.name}_trace.csv", BaselineResult.CSV_FIELDS,
                 [[i, repr(a), repr(b), repr(c)] for i, a, b, c in res.trace])
    return {"method": "ista" if cfg.network.penalty == "l1" else "ihta"}


def cmd_evaluate(args, cfg, out):
    R = args.realizations
    if R is not None and R < 1:
        raise UsageError("--realizations must be >= 1")
    if args.checkpoint:
        params = io.read_checkpoint(args.checkpoint, cfg.network.c)
        models = build_models(cfg)
        phantom, tests = make_test_data(cfg, models.true, cfg.training.seed, R)
        report = evaluate(lambda d: forward_propagate(params, d)[0], phantom, tests, params.F)
    else:
        result = run_experiment(cfg, method=args.method, realizations=R)
        report = result.report
        if result.train_result is not None:
            io.write_checkpoint(out / "checkpoint.bin", result.params)
            _write_history(out / "history.csv", result.train_result.history)
    _write_metrics(out / "metrics.csv", report)
    return {"realizations": report.realizations,
            "undefined_contrast": report.undefined_contrast}


def cmd_sweep(args, cfg, out):
    try:
        raw = [v for v in args.values.split(",") if v.strip()]
        values = [int(v) if args.kind != "lambda" else float(v) for v in raw]
    except ValueError:
        raise UsageError(f"cannot parse --values {args.values!r}") from None
    if not values:
        raise UsageError("--values is empty")
    rows = sweep(args.kind, values, cfg, seed=cfg.training.seed)
    fmt = lambda v: "undefined" if v is None else repr(float(v))  # noqa: E731
    io.write_csv(out / "sweep.csv", SWEEP_FIELDS,
                 [[v, fmt(a), fmt(b), fmt(c)] for v, a, b, c in rows])
    return {"kind": args.kind, "values": values}


COMMANDS = {
    "make-model": cmd_make_model,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, cfg, out)
        _write_manifest(out, args, argv, cfg, extra)
    except (ConfigError, UsageError) as exc:
        print(f"usar: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, FloatingPointError) as exc:
        print(f"usar: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"usar: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
