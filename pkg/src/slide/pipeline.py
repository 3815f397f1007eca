"""End-to-end helpers tying systems, data generation, and training together.

Per-trajectory randomness is derived as base_seed + trajectory_index, so
trajectories are reproducible independently of generation order (and could
be produced concurrently).
"""

from __future__ import annotations

import numpy as np

from . import dynamics, formats, models
from .config import ExperimentConfig
from .dynamics import DriveSignal
from .engine import WindowedDataset, build_estimator_dataset, build_windows
from .errors import ConfigError
from .neuralnet import DTYPES, MlpModel, TrainConfig, build_mlp, train


def make_trajectory(cfg: ExperimentConfig, seed: int, n_steps: int | None = None):
    """Simulate one trajectory for the configured system.

    Returns (system, drive, trajectory); the drive and system together are
    enough to re-simulate (the error-estimator pipeline relies on that).
    For the slider-crank the configured startup phase is simulated and then
    stripped from the returned trajectory, and the returned drive is the
    corresponding tail of the generated one.
    """
    if cfg.window is None:
        raise ConfigError(f"system {cfg.system!r} has no data pipeline")
    if n_steps is None:
        n_steps = cfg.window.n_in
    rng = np.random.default_rng(seed)
    h = cfg.window.h

    if cfg.system in ("linear_oscillator", "duffing"):
        x_lo, x_hi = cfg.ic_ranges["x0"]
        v_lo, v_hi = cfg.ic_ranges["v0"]
        x0 = float(rng.uniform(x_lo, x_hi))
        v0 = float(rng.uniform(v_lo, v_hi))
        params = models.DUFFING if cfg.system == "duffing" else models.LINEAR_OSCILLATOR
        system = models.make_oscillator(params, x0=x0, v0=v0)
        drive = dynamics.gen_random_step_force(
            (cfg.drive["lo"], cfg.drive["hi"]), n_steps, rng)
        drive.seed = seed
        traj = dynamics.integrate_ode(system, drive, h, n_steps,
                                      substeps=cfg.substeps)
        traj.seed = seed
        return system, drive, traj

    if cfg.system == "slider_crank_lumped":
        total = cfg.startup_steps + n_steps
        full = dynamics.gen_accel_trajectory(
            total, h, rng,
            omega_max=cfg.drive["omega_max"], accel_max=cfg.drive["accel_max"],
            phase_steps=(cfg.drive["phase_lo"], cfg.drive["phase_hi"]),
            p_zero=cfg.drive["p_zero"])
        full.seed = seed
        system = models.make_slider_crank_lumped(phi0=float(full.u[0, 0]))
        traj_full = dynamics.integrate_dae(system, full, h, total,
                                           substeps=cfg.substeps)
        traj = traj_full.tail(cfg.startup_steps)
        traj.seed = seed
        # tail drive + system restarted at the tail state re-simulates the kept part
        drive = DriveSignal(full.kind, full.u[cfg.startup_steps:], seed=seed,
                            params=dict(full.params))
        system_tail = models.make_slider_crank_lumped(phi0=float(full.u[0, 0]))
        system_tail.q0 = traj.q[0].copy()
        system_tail.qdot0 = traj.qdot[0].copy()
        return system_tail, drive, traj

    raise ConfigError(f"no trajectory generator for system {cfg.system!r}")


def generate_dataset(cfg: ExperimentConfig, n: int, base_seed: int,
                     stride=None, n_steps=None, decay=None):
    """Simulate n trajectories (seeds base_seed + i) and window them.

    By default each trajectory is exactly one window long; pass `n_steps`
    and `stride` to cut several sliding windows per (longer) trajectory,
    which buys training windows at a fraction of the simulation cost.

    Returns (dataset, systems, drives) so callers can re-simulate, e.g. for
    estimator training data.
    """
    systems = []
    drives = []
    trajectories = []
    for i in range(n):
        system, drive, traj = make_trajectory(cfg, base_seed + i, n_steps=n_steps)
        systems.append(system)
        drives.append(drive)
        trajectories.append(traj)
    dtype = DTYPES[cfg.precision]
    dataset = build_windows(trajectories, cfg.window, stride=stride,
                            dtype=dtype, decay=decay)
    dataset.provenance["base_seed"] = str(base_seed)
    dataset.provenance["n_trajectories"] = str(n)
    return dataset, systems, drives


def train_surrogate(cfg: ExperimentConfig, train_ds: WindowedDataset,
                    val_ds: WindowedDataset, seed: int | None = None):
    """Build and train the surrogate network for a windowed dataset."""
    seed = cfg.seed if seed is None else seed
    dtype = DTYPES[cfg.precision]
    ic_width = train_ds.input_width - cfg.window.window_input_width
    model = build_mlp(
        (train_ds.input_width, *cfg.arch, train_ds.output_width),
        activation=cfg.activation, seed=seed, bias_free=cfg.bias_free,
        dtype=dtype,
        in_scale=cfg.window.input_scaling(ic_width),
        out_scale=cfg.window.output_scaling(),
    )
    tc = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs,
                     val_every=cfg.val_every, seed=seed)
    best, report = train(model, train_ds.as_pair(), val_ds.as_pair(), tc)
    best.meta = formats.embed_window_meta({
        "system": cfg.system,
        "role": "surrogate",
        "seed": str(seed),
        "epochs": str(cfg.epochs),
        "best_epoch": str(report.best_epoch),
        "best_val_rmse": repr(report.best_val_rmse),
    }, cfg.window)
    return best, report


def train_estimator(cfg: ExperimentConfig, surrogate: MlpModel,
                    systems, drives, seed: int | None = None,
                    val_fraction=0.125):
    """Train the error-estimator network against a frozen surrogate.

    The estimator dataset is built from the supplied base drives augmented
    by the configured amplitude multipliers; a deterministic slice is held
    out for validation.
    """
    seed = cfg.seed if seed is None else seed
    emap = cfg.error_map()
    dataset = build_estimator_dataset(
        surrogate, systems, drives, cfg.window, emap,
        multipliers=cfg.augment, substeps=cfg.substeps,
        dtype=DTYPES[cfg.precision])

    n = len(dataset)
    n_val = max(1, int(n * val_fraction))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    model = build_mlp(
        (dataset.input_width, *cfg.est_arch, 1),
        activation=cfg.est_activation, seed=seed + 1,
        dtype=DTYPES[cfg.precision],
        in_scale=surrogate.in_scale,
        out_scale=emap.target_scaling(),
    )
    tc = TrainConfig(lr=cfg.est_lr, batch_size=max(1, len(train_idx) // 8),
                     epochs=cfg.est_epochs, val_every=cfg.val_every, seed=seed)
    best, report = train(model,
                         (dataset.inputs[train_idx], dataset.outputs[train_idx]),
                         (dataset.inputs[val_idx], dataset.outputs[val_idx]),
                         tc)
    best.meta = formats.embed_window_meta({
        "system": cfg.system,
        "role": "error-estimator",
        "seed": str(seed),
        "epochs": str(cfg.est_epochs),
        "best_epoch": str(report.best_epoch),
        "best_val_rmse": repr(report.best_val_rmse),
        "eps_plus": repr(emap.eps_plus),
        "eps_minus": repr(emap.eps_minus),
    }, cfg.window)
    return best, report, dataset


def make_long_sequence(cfg: ExperimentConfig, k: int, seed: int):
    """One long trajectory covering n_in + k*n_out steps (plus any startup)."""
    n_steps = cfg.window.n_in + k * cfg.window.n_out
    return make_trajectory(cfg, seed, n_steps=n_steps)
