"""Experiment presets and run-configuration files.

A run config is `key = value` text in [section] blocks. The [system] name
selects a preset that carries the window geometry, channel maps, drive
parameters, and network/training defaults; any other key overrides the
preset. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .engine import Channel, ErrorMap, OutputChannel, SlideConfig
from .errors import ConfigError

GENERAL_DEFAULTS = {
    "lr": 1e-3,
    "val_every": 20,
    "precision": "f32",
}


@dataclass
class ExperimentConfig:
    """Fully-resolved settings for one system's data/train/bench pipeline."""

    system: str
    seed: int = 0
    window: SlideConfig | None = None

    # data generation
    n_train: int = 1024
    n_val: int = 128
    drive: dict = field(default_factory=dict)       # kind plus generator params
    ic_ranges: dict = field(default_factory=dict)   # e.g. {"x0": (-1, 1), "v0": (-1, 1)}
    startup_steps: int = 0
    substeps: int = 8

    # surrogate network and training
    arch: tuple = (100, 100)
    activation: str = "relu"
    precision: str = "f32"
    bias_free: bool = False
    lr: float = 1e-3
    batch: int | None = None
    epochs: int = 2000
    val_every: int = 20

    # error estimator
    est_arch: tuple = (100, 100)
    est_activation: str = "relu"
    est_epochs: int = 500
    est_lr: float = 1e-3
    eps_plus: float = -1.5
    eps_minus: float = -4.5
    augment: tuple = (0.0, 0.5, 1.0, 1.5, 2.0)

    # benchmark
    bench_batch_sizes: tuple = (1, 4, 16, 64, 256)
    bench_repetitions: int = 20
    bench_warmup: int = 3

    @property
    def batch_size(self) -> int:
        return self.batch if self.batch is not None else max(1, self.n_train // 8)

    def error_map(self) -> ErrorMap:
        return ErrorMap(eps_plus=self.eps_plus, eps_minus=self.eps_minus)

    def validate(self):
        if self.batch_size > self.n_train:
            raise ConfigError(
                f"training.batch = {self.batch_size} exceeds n_train = {self.n_train}"
            )
        if self.n_train < 1 or self.n_val < 1:
            raise ConfigError("n_train and n_val must be positive")
        if self.lr <= 0.0 or self.est_lr <= 0.0:
            raise ConfigError("learning rates must be positive")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, not {self.precision!r}")
        return self


def _oscillator_preset(duffing: bool) -> ExperimentConfig:
    if duffing:
        window = SlideConfig(
            h=0.025, n_in=96, n_out=40,
            inputs=(Channel("u", 0, "linear", 1e-3, 0.0, "force"),),
            outputs=(OutputChannel(0, 1.0, 0.0, "x"),),
        )
        return ExperimentConfig(
            system="duffing", window=window,
            n_train=4096, n_val=512,
            drive={"kind": "random-step-force", "lo": -1000.0, "hi": 1000.0},
            ic_ranges={"x0": (-1.0, 1.0), "v0": (-4.0, 4.0)},
            arch=(100, 100), activation="relu", epochs=2000,
            est_arch=(100, 100), est_activation="relu", est_epochs=500,
            eps_plus=-0.5, eps_minus=-3.5,
        )
    window = SlideConfig(
        h=0.015625, n_in=64, n_out=64,
        inputs=(Channel("u", 0, "linear", 5e-4, 0.0, "force"),),
        outputs=(OutputChannel(0, 1.0, 0.0, "x"),),
        with_initial_conditions=True,
    )
    return ExperimentConfig(
        system="linear_oscillator", window=window,
        n_train=1024, n_val=256,
        drive={"kind": "random-step-force", "lo": -2000.0, "hi": 2000.0},
        ic_ranges={"x0": (-1.0, 1.0), "v0": (-1.0, 1.0)},
        arch=(128,), activation="identity", bias_free=True,
        epochs=3000, lr=2e-3,
    )


def _slider_crank_preset() -> ExperimentConfig:
    window = SlideConfig(
        h=0.03125, n_in=128, n_out=32,
        inputs=(Channel("u", 0, "director", name="phi_des"),),
        outputs=(OutputChannel(1, 1000.0, 0.0, "d_mid_mm"),),
    )
    return ExperimentConfig(
        system="slider_crank_lumped", window=window,
        n_train=2048, n_val=256,
        drive={"kind": "piecewise-constant-acceleration", "omega_max": 8.0,
               "accel_max": 20.0, "phase_lo": 20, "phase_hi": 60, "p_zero": 0.10},
        startup_steps=32,
        substeps=32,  # h/8 underresolves the Baumgarte dynamics on this system
        arch=(192,) * 6, activation="elu", epochs=2000, lr=1.5e-3,
        est_arch=(192, 192), est_activation="relu", est_epochs=500,
        est_lr=1.5e-3, eps_plus=0.5, eps_minus=-3.5,
    )


def preset(name: str) -> ExperimentConfig:
    """Default experiment configuration for a named system."""
    if name == "linear_oscillator":
        return _oscillator_preset(duffing=False)
    if name == "duffing":
        return _oscillator_preset(duffing=True)
    if name == "slider_crank_lumped":
        return _slider_crank_preset()
    if name == "two_mass_constrained":
        # validation fixture: simulate/eigen only, no training pipeline
        return ExperimentConfig(system=name, window=None,
                                drive={"kind": "random-step-force",
                                       "lo": 0.0, "hi": 0.0})
    raise ConfigError(f"no preset for system {name!r}")


# ---------------------------------------------------------------------------
# run-config files
# ---------------------------------------------------------------------------

def _parse_int(text):
    return int(text)


def _parse_float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _parse_bool(text):
    if text in ("True", "true", "1", "yes"):
        return True
    if text in ("False", "false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_ints(text):
    return tuple(int(v.strip()) for v in text.split(",") if v.strip())


def _parse_floats(text):
    return tuple(float(v.strip()) for v in text.split(",") if v.strip())


def _parse_str(text):
    return text


_SCHEMA = {
    "system": {"name": _parse_str, "seed": _parse_int},
    "windows": {"h": _parse_float, "n_in": _parse_int, "n_out": _parse_int,
                "with_initial_conditions": _parse_bool},
    "network": {"arch": _parse_ints, "activation": _parse_str,
                "precision": _parse_str, "bias_free": _parse_bool},
    "training": {"lr": _parse_float, "batch": _parse_int, "epochs": _parse_int,
                 "val_every": _parse_int, "n_train": _parse_int, "n_val": _parse_int},
    "estimator": {"arch": _parse_ints, "activation": _parse_str,
                  "epochs": _parse_int, "lr": _parse_float,
                  "eps_plus": _parse_float, "eps_minus": _parse_float,
                  "augment": _parse_floats},
    "bench": {"batch_sizes": _parse_ints, "repetitions": _parse_int,
              "warmup": _parse_int},
}


def _read_sections(path) -> dict:
    sections = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith(";"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                sections.setdefault(current, {})
                continue
            if "=" not in line or current is None:
                raise ConfigError(f"{path}:{lineno}: malformed line {line!r}")
            key, _, value = line.partition("=")
            sections[current][key.strip()] = value.strip()
    return sections


def run_config(path) -> ExperimentConfig:
    """Load, validate, and resolve a run-config file against its preset."""
    sections = _read_sections(path)
    for section, items in sections.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}] in {path}")
        for key in items:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key} in {path}")

    parsed = {}
    for section, items in sections.items():
        parsed[section] = {}
        for key, text in items.items():
            try:
                parsed[section][key] = _SCHEMA[section][key](text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {text!r} ({exc})"
                ) from exc

    name = parsed.get("system", {}).get("name")
    if not name:
        raise ConfigError(f"{path}: missing required key system.name")
    cfg = preset(name)

    if "seed" in parsed.get("system", {}):
        cfg.seed = parsed["system"]["seed"]
    win = parsed.get("windows", {})
    if win:
        if cfg.window is None:
            raise ConfigError(f"system {name!r} has no window pipeline to configure")
        cfg.window = replace(cfg.window, **{
            {"h": "h", "n_in": "n_in", "n_out": "n_out",
             "with_initial_conditions": "with_initial_conditions"}[k]: v
            for k, v in win.items()
        })
    net = parsed.get("network", {})
    if "arch" in net:
        cfg.arch = net["arch"]
    if "activation" in net:
        cfg.activation = net["activation"]
    if "precision" in net:
        cfg.precision = net["precision"]
    if "bias_free" in net:
        cfg.bias_free = net["bias_free"]
    tr = parsed.get("training", {})
    for key in ("lr", "batch", "epochs", "val_every", "n_train", "n_val"):
        if key in tr:
            setattr(cfg, key, tr[key])
    est = parsed.get("estimator", {})
    if "arch" in est:
        cfg.est_arch = est["arch"]
    if "activation" in est:
        cfg.est_activation = est["activation"]
    if "epochs" in est:
        cfg.est_epochs = est["epochs"]
    if "lr" in est:
        cfg.est_lr = est["lr"]
    if "eps_plus" in est:
        cfg.eps_plus = est["eps_plus"]
    if "eps_minus" in est:
        cfg.eps_minus = est["eps_minus"]
    if "augment" in est:
        cfg.augment = est["augment"]
    bench = parsed.get("bench", {})
    if "batch_sizes" in bench:
        cfg.bench_batch_sizes = bench["batch_sizes"]
    if "repetitions" in bench:
        cfg.bench_repetitions = bench["repetitions"]
    if "warmup" in bench:
        cfg.bench_warmup = bench["warmup"]

    return cfg.validate()
