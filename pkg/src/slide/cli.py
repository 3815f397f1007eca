"""Command-line entry point: simulate, gen, eigen, train, train-ee, infer, bench.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import config as config_mod
from . import dynamics, formats, models, pipeline
from .engine import assemble_input_rows, predict_with_error, sliding_inference
from .errors import (
    ConfigError,
    ConstraintDegeneracyError,
    EigenError,
    FormatError,
    IntegrationDivergedError,
    KinematicsError,
    LinearizationError,
    NoDampedModeError,
    SlideError,
    TrainingDivergedError,
    WindowError,
)
from .linearization import linearize, trajectory_mean_decay
from .neuralnet import forward

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_NUMERIC_ERRORS = (IntegrationDivergedError, ConstraintDegeneracyError,
                   TrainingDivergedError, LinearizationError, EigenError,
                   NoDampedModeError)
_DATA_ERRORS = (FormatError, WindowError, KinematicsError)

SYSTEM_CHOICES = ("linear_oscillator", "duffing", "two_mass_constrained",
                  "slider_crank_lumped")


def _load_cfg(args) -> config_mod.ExperimentConfig:
    if getattr(args, "config", None):
        cfg = config_mod.run_config(args.config)
        if getattr(args, "system", None) and args.system != cfg.system:
            raise ConfigError(
                f"--system {args.system} conflicts with config system {cfg.system}"
            )
    else:
        name = getattr(args, "system", None)
        if not name:
            raise ConfigError("supply --config or --system")
        cfg = config_mod.preset(name)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    if cfg.system == "two_mass_constrained":
        system = models.make_two_mass_constrained(x0=(0.1, 0.1))
        h = args.h or 0.01
        n_steps = args.steps or 200
        drive = dynamics.gen_random_step_force((0.0, 0.0), n_steps, cfg.seed)
        traj = dynamics.integrate_dae(system, drive, h, n_steps)
    else:
        n_steps = args.steps or (cfg.window.n_in if cfg.window else 100)
        if args.h:
            raise ConfigError("override h via a config file, not --h, "
                              "for systems with a window preset")
        _, _, traj = pipeline.make_trajectory(cfg, cfg.seed, n_steps=n_steps)
    dynamics.trajectory_to_csv(traj, args.out)
    print(f"wrote {len(traj)} samples (h = {traj.h} s) to {args.out}")
    return 0


def _cmd_gen(args) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ds, _, _ = pipeline.generate_dataset(cfg, cfg.n_train, cfg.seed)
    val_ds, _, _ = pipeline.generate_dataset(cfg, cfg.n_val, cfg.seed + cfg.n_train)
    formats.save_dataset(train_ds, out_dir / "train.slds")
    formats.save_dataset(val_ds, out_dir / "val.slds")
    print(f"wrote {len(train_ds)} train / {len(val_ds)} val windows to {out_dir}")
    return 0


def _cmd_eigen(args) -> int:
    cfg = _load_cfg(args)
    system = models.make_system(cfg.system)
    a_rel = args.arel

    if args.samples:
        n_steps = args.samples
        _, _, traj = (pipeline.make_trajectory(cfg, cfg.seed, n_steps=n_steps)
                      if cfg.window is not None else (None, None, None))
        if traj is None:
            raise ConfigError(f"system {cfg.system!r} has no trajectory generator")
        report = trajectory_mean_decay(system, traj, a_rel=a_rel,
                                       stride=args.stride)
        print(f"sampled {len(report.samples)} states "
              f"(stride {args.stride}, A_rel = {a_rel})")
        print(f"mean Re(v) slowest damped mode: {report.re_mean:.6g} 1/s")
        print(f"t_d mean: {report.t_d_mean:.6g} s   t_d max: {report.t_d_max:.6g} s")
        rows = [(s.step, v) for s in report.samples for v in s.eigenvalues]
    else:
        rep = linearize(system, a_rel=a_rel)
        print(f"eigenvalues of {cfg.system} at the initial state "
              f"(A_rel = {a_rel}):")
        print(f"{'Re [1/s]':>14} {'Im [1/s]':>14} {'f [Hz]':>10} "
              f"{'damping':>10} {'t_d [s]':>12}")
        for v, td in zip(rep.eigenvalues, rep.decay_times):
            freq = abs(v.imag) / (2.0 * math.pi)
            mag = abs(v)
            zeta = -v.real / mag if mag > 0 else 0.0
            td_text = f"{td:12.5g}" if math.isfinite(td) else "         inf"
            print(f"{v.real:14.6g} {v.imag:14.6g} {freq:10.4g} "
                  f"{zeta:10.4g} {td_text}")
        rows = [(0, v) for v in rep.eigenvalues]

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "re", "im"])
            for step, v in rows:
                writer.writerow([step, repr(v.real), repr(v.imag)])
        print(f"wrote eigenvalues to {args.csv}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    if args.arch:
        cfg.arch = tuple(int(v) for v in args.arch.split(","))
    if args.act:
        cfg.activation = args.act
    if args.lr:
        cfg.lr = args.lr
    if args.batch:
        cfg.batch = args.batch
    if args.epochs:
        cfg.epochs = args.epochs
    if args.val_every:
        cfg.val_every = args.val_every
    if args.precision:
        cfg.precision = args.precision
    if args.no_bias:
        cfg.bias_free = True
    cfg.validate()

    data_dir = Path(args.data)
    train_ds = formats.load_dataset(data_dir / "train.slds")
    val_ds = formats.load_dataset(data_dir / "val.slds")
    model, report = pipeline.train_surrogate(cfg, train_ds, val_ds)
    formats.save_model(model, args.out)
    print(f"trained {cfg.epochs} epochs "
          f"({report.iterations_per_epoch} iterations each)")
    print(f"best validation RMSE {report.best_val_rmse:.6g} "
          f"at epoch {report.best_epoch}")
    print(f"wrote model to {args.out}")
    if args.curves:
        with open(args.curves, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_mse", "val_rmse"])
            vals = dict(report.validations)
            for i, loss in enumerate(report.epoch_loss, 1):
                writer.writerow([i, repr(loss),
                                 repr(vals[i]) if i in vals else ""])
        print(f"wrote training curves to {args.curves}")
    return 0


def _cmd_train_ee(args) -> int:
    cfg = _load_cfg(args)
    if args.eps_lo is not None:
        cfg.eps_minus = args.eps_lo
    if args.eps_hi is not None:
        cfg.eps_plus = args.eps_hi
    if args.augment:
        cfg.augment = tuple(float(v) for v in args.augment.split(","))
    if args.epochs:
        cfg.est_epochs = args.epochs
    cfg.validate()

    surrogate = formats.load_model(args.surrogate)
    window = formats.extract_window_meta(surrogate.meta)
    if window is not None:
        cfg.window = window
    systems, drives = [], []
    for i in range(args.n_base or cfg.n_train):
        system, drive, _ = pipeline.make_trajectory(cfg, cfg.seed + i)
        systems.append(system)
        drives.append(drive)
    estimator, report, _ = pipeline.train_estimator(cfg, surrogate, systems, drives)
    formats.save_model(estimator, args.out)
    print(f"trained estimator on {len(drives)} base drives x "
          f"{len(cfg.augment)} multipliers")
    print(f"best validation RMSE {report.best_val_rmse:.6g} "
          f"(log-error units) at epoch {report.best_epoch}")
    print(f"wrote estimator to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    surrogate = formats.load_model(args.model)
    window = formats.extract_window_meta(surrogate.meta)
    if window is None:
        raise ConfigError(f"model {args.model} carries no window config")
    traj = dynamics.trajectory_from_csv(args.input)
    rows = assemble_input_rows(traj, window)

    estimator = None
    if args.estimator:
        estimator = formats.load_model(args.estimator)

    if window.with_initial_conditions:
        # initial-condition models predict a single window anchored at t = 0
        vec = np.concatenate([traj.q[0], traj.qdot[0],
                              rows[: window.n_in].ravel()])
        raw = forward(surrogate, vec.astype(surrogate.dtype))
        n_ch = len(window.outputs)
        scaled = np.asarray(raw, dtype=float).reshape(window.n_out, n_ch)
        outputs = np.column_stack([
            (scaled[:, j] - ch.offset) / ch.gain
            for j, ch in enumerate(window.outputs)])
        start = window.n_in - window.n_out + 1
        win_idx = np.zeros(window.n_out, dtype=int)
        e_hat = None
    else:
        if estimator is not None:
            pred, e_hat = predict_with_error(surrogate, estimator, window, rows)
        else:
            pred = sliding_inference(surrogate, window, rows)
            e_hat = None
        outputs = pred.unscaled()
        start = pred.start_step
        win_idx = pred.window_index

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        names = [ch.name or f"y{ch.index}" for ch in window.outputs]
        writer.writerow(["t", *[f"{n}_pred" for n in names],
                         "window_index", "e_hat"])
        for j in range(outputs.shape[0]):
            t = (start + j) * window.h
            e_txt = ""
            if e_hat is not None:
                e_txt = repr(float(e_hat[win_idx[j]]))
            writer.writerow([repr(float(t)),
                             *[repr(float(v)) for v in outputs[j]],
                             int(win_idx[j]), e_txt])
    print(f"wrote {outputs.shape[0]} predicted samples to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    model = formats.load_model(args.model)
    window = formats.extract_window_meta(model.meta)
    if window is not None:
        cfg.window = window
    if args.batch_sizes:
        cfg.bench_batch_sizes = tuple(int(v) for v in args.batch_sizes.split(","))
    if args.reps:
        cfg.bench_repetitions = args.reps

    n_windows = max(cfg.bench_batch_sizes)
    systems, drives = [], []
    for i in range(n_windows):
        system, drive, _ = pipeline.make_trajectory(cfg, cfg.seed + i)
        systems.append(system)
        drives.append(drive)
    report = bench_mod.bench_speedup(
        model, systems[0], cfg.window, drives,
        batch_sizes=cfg.bench_batch_sizes,
        repetitions=cfg.bench_repetitions, warmup=cfg.bench_warmup,
        substeps=cfg.substeps)
    print(f"t_sim (median of {report.repetitions}): {report.t_sim:.6g} s "
          f"for an {report.n_in}-step horizon")
    print(f"{'batch':>6} {'t_pass [s]':>12} {'per window [s]':>15} {'speedup':>10}")
    for bt in report.batches:
        s = bench_mod.speedup_from(report.t_sim, bt.per_window,
                                   report.n_in, report.n_out)
        print(f"{bt.batch:6d} {bt.t_pass_median:12.4g} "
              f"{bt.per_window:15.4g} {s:10.4g}")
    print(f"headline speedup (batch 1): {report.speedup:.4g}")
    if args.out:
        report.to_csv(args.out)
        print(f"wrote sweep to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slide",
        description="surrogate-window toolkit: simulate, window, train, "
                    "estimate errors, and benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, system=True):
        p.add_argument("--config", help="run-config file")
        if system:
            p.add_argument("--system", choices=SYSTEM_CHOICES)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", help="integrate a system and export CSV")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("gen", help="generate windowed train/val datasets")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("eigen", help="eigenvalues and decay times")
    common(p)
    p.add_argument("--arel", type=float, default=0.01)
    p.add_argument("--samples", type=int, default=None,
                   help="simulate this many steps and sample along the way")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--csv", default=None)
    p.set_defaults(fn=_cmd_eigen)

    p = sub.add_parser("train", help="train a surrogate on generated datasets")
    common(p)
    p.add_argument("--data", required=True, help="directory with train/val .slds")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--arch", help="hidden widths, e.g. 100,100")
    p.add_argument("--act", choices=("relu", "elu", "tanh", "identity"))
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--val-every", dest="val_every", type=int)
    p.add_argument("--precision", choices=("f32", "f64"))
    p.add_argument("--no-bias", dest="no_bias", action="store_true")
    p.add_argument("--curves", help="CSV of training/validation curves")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("train-ee", help="train the error estimator")
    common(p)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eps-lo", dest="eps_lo", type=float,
                   help="log10 floor of the error map")
    p.add_argument("--eps-hi", dest="eps_hi", type=float,
                   help="log10 ceiling of the error map")
    p.add_argument("--augment", help="amplitude multipliers, e.g. 0,0.5,1,1.5,2")
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-base", dest="n_base", type=int,
                   help="number of base drives (default n_train)")
    p.set_defaults(fn=_cmd_train_ee)

    p = sub.add_parser("infer", help="sliding-window prediction over a CSV sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--estimator")
    p.add_argument("--input", required=True, help="trajectory CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("bench", help="speedup benchmark")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--batch-sizes", dest="batch_sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SlideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
