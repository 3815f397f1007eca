"""Windowed dataset construction, sliding-window inference, and the error
estimator pipeline.

An input window of n_in per-step vectors maps to an output window of the
last n_out output samples, shifted one step past the input start so outputs
never include the window's initial sample. The gap (n_in - n_out)*h is the
truncated transient; when a decay estimate is available, window geometry is
validated against it. Long sequences are processed by sliding both windows
in strides of n_out and concatenating the outputs, which tiles the timeline
exactly.

Dataset construction parallelizes per trajectory and inference windows are
independent; the surrogate and error estimator consume identical inputs and
can be evaluated concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics
from .dynamics import SystemModel, Trajectory
from .errors import ConfigError, ShapeError, WindowError
from .neuralnet import AffineScaling, MlpModel, forward


@dataclass(frozen=True)
class Channel:
    """One per-step input channel pulled from a trajectory.

    source selects the trajectory field (u, q, qdot, or y) and index the
    column. Linear channels contribute gain*value + offset; director
    channels encode an angle as (cos, sin) and ignore gain/offset since
    they are unit-bounded already.
    """

    source: str
    index: int
    encoding: str = "linear"
    gain: float = 1.0
    offset: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.source not in ("u", "q", "qdot", "y"):
            raise ConfigError(f"unknown channel source {self.source!r}")
        if self.encoding not in ("linear", "director"):
            raise ConfigError(f"unknown channel encoding {self.encoding!r}")

    @property
    def width(self):
        return 2 if self.encoding == "director" else 1


@dataclass(frozen=True)
class OutputChannel:
    """One predicted output: column `index` of y, scaled by gain/offset."""

    index: int
    gain: float = 1.0
    offset: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class SlideConfig:
    """Window geometry plus the channel maps for inputs and outputs."""

    h: float
    n_in: int
    n_out: int
    inputs: tuple
    outputs: tuple
    with_initial_conditions: bool = False

    def __post_init__(self):
        if self.h <= 0.0:
            raise ConfigError("step size h must be positive")
        if not (1 <= self.n_out <= self.n_in):
            raise ConfigError(
                f"need 1 <= n_out <= n_in, got n_out={self.n_out}, n_in={self.n_in}"
            )
        if not self.inputs or not self.outputs:
            raise ConfigError("need at least one input and one output channel")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    @property
    def r_width(self):
        """Entries contributed by one time step of the input window."""
        return sum(ch.width for ch in self.inputs)

    @property
    def window_input_width(self):
        """Input width excluding any initial-condition slots."""
        return self.n_in * self.r_width

    @property
    def output_width(self):
        return self.n_out * len(self.outputs)

    @property
    def truncation_time(self):
        return (self.n_in - self.n_out) * self.h

    def output_scaling(self) -> AffineScaling:
        """Per-entry scaling of the stacked output vector."""
        gains = np.tile([ch.gain for ch in self.outputs], self.n_out)
        offsets = np.tile([ch.offset for ch in self.outputs], self.n_out)
        return AffineScaling(gains, offsets)

    def input_scaling(self, ic_width=0) -> AffineScaling:
        """Per-entry scaling of the stacked input vector.

        Initial-condition slots and director entries pass through unscaled
        (gain 1, offset 0).
        """
        step_gain = []
        step_offset = []
        for ch in self.inputs:
            if ch.encoding == "director":
                step_gain += [1.0, 1.0]
                step_offset += [0.0, 0.0]
            else:
                step_gain.append(ch.gain)
                step_offset.append(ch.offset)
        gains = np.concatenate([np.ones(ic_width), np.tile(step_gain, self.n_in)])
        offsets = np.concatenate([np.zeros(ic_width), np.tile(step_offset, self.n_in)])
        return AffineScaling(gains, offsets)


@dataclass
class WindowedDataset:
    """Input/output training pairs plus the config and provenance they came from."""

    inputs: np.ndarray
    outputs: np.ndarray
    config: SlideConfig
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ShapeError("input and output row counts differ")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def input_width(self):
        return self.inputs.shape[1]

    @property
    def output_width(self):
        return self.outputs.shape[1]

    def normalization_health(self, bound=1.5) -> float:
        """Fraction of scaled input entries inside [-bound, bound]."""
        return float(np.mean(np.abs(self.inputs) <= bound))

    def as_pair(self):
        return self.inputs, self.outputs


def assemble_input_rows(traj: Trajectory, config: SlideConfig) -> np.ndarray:
    """Per-step scaled/encoded input vectors r_i for a whole trajectory."""
    cols = []
    for ch in config.inputs:
        source = getattr(traj, ch.source)
        if ch.index >= source.shape[1]:
            raise ConfigError(
                f"channel {ch.source}[{ch.index}] missing: trajectory has "
                f"{source.shape[1]} {ch.source}-columns"
            )
        raw = source[:, ch.index]
        if ch.encoding == "director":
            cols.append(np.cos(raw))
            cols.append(np.sin(raw))
        else:
            cols.append(ch.gain * raw + ch.offset)
    return np.column_stack(cols)


def encode_signal_rows(raw, config: SlideConfig) -> np.ndarray:
    """Like assemble_input_rows, but from a raw (n_samples, n_channels) array
    whose columns follow config.inputs order (director channels take the angle)."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if raw.shape[1] != len(config.inputs):
        raise ShapeError(
            f"signal has {raw.shape[1]} columns, config declares {len(config.inputs)} channels"
        )
    cols = []
    for j, ch in enumerate(config.inputs):
        if ch.encoding == "director":
            cols.append(np.cos(raw[:, j]))
            cols.append(np.sin(raw[:, j]))
        else:
            cols.append(ch.gain * raw[:, j] + ch.offset)
    return np.column_stack(cols)


def _decay_value(decay) -> float:
    if decay is None:
        return 0.0
    if hasattr(decay, "t_d_mean"):
        return float(decay.t_d_mean)
    if hasattr(decay, "slowest_decay"):
        return float(decay.slowest_decay)
    return float(decay)


def _scaled_targets(traj: Trajectory, config: SlideConfig, lo: int, hi: int):
    """Stacked scaled outputs for samples lo..hi inclusive."""
    block = np.empty((hi - lo + 1, len(config.outputs)))
    for j, ch in enumerate(config.outputs):
        if ch.index >= traj.y.shape[1]:
            raise ConfigError(
                f"output channel y[{ch.index}] missing: trajectory has "
                f"{traj.y.shape[1]} outputs"
            )
        block[:, j] = ch.gain * traj.y[lo:hi + 1, ch.index] + ch.offset
    return block.ravel()


def build_windows(trajectories, config: SlideConfig,
                  with_initial_conditions=None, stride=None,
                  dtype=np.float32, decay=None) -> WindowedDataset:
    """Cut (input window, truncated output window) pairs from trajectories.

    By default one window per trajectory, anchored at its start; pass a
    `stride` to slide additional windows during data generation. When
    `with_initial_conditions` is set (default: the config's flag), the raw
    q and qdot at the window start are prepended to the input vector.

    Supplying `decay` (a decay report or a plain t_d in seconds) enforces
    the truncation condition (n_in - n_out)*h >= t_d.
    """
    if with_initial_conditions is None:
        with_initial_conditions = config.with_initial_conditions
    t_d = _decay_value(decay)
    if decay is not None and config.truncation_time < t_d:
        raise ConfigError(
            f"truncated window of {config.truncation_time:.6g} s is shorter than "
            f"the decay time {t_d:.6g} s; increase n_in - n_out"
        )

    traj_list = [trajectories] if isinstance(trajectories, Trajectory) else list(trajectories)
    if not traj_list:
        raise WindowError("no trajectories supplied")

    inputs = []
    outputs = []
    seeds = []
    for traj in traj_list:
        rows = assemble_input_rows(traj, config)
        n_samples = rows.shape[0]
        if n_samples < config.n_in + 1:
            raise WindowError(
                f"trajectory of {n_samples} samples is too short for "
                f"n_in={config.n_in} (+1 output sample)"
            )
        anchors = [0]
        if stride is not None:
            if stride < 1:
                raise ConfigError("stride must be >= 1")
            anchors = list(range(0, n_samples - config.n_in, stride))
        for w in anchors:
            vec = rows[w:w + config.n_in].ravel()
            if with_initial_conditions:
                vec = np.concatenate([traj.q[w], traj.qdot[w], vec])
            inputs.append(vec)
            lo = w + config.n_in - config.n_out + 1
            outputs.append(_scaled_targets(traj, config, lo, w + config.n_in))
        if traj.seed is not None:
            seeds.append(traj.seed)

    provenance = {"system": traj_list[0].system, "h": repr(config.h)}
    if seeds:
        provenance["base_seed"] = str(min(seeds))
    return WindowedDataset(
        inputs=np.asarray(inputs, dtype=dtype),
        outputs=np.asarray(outputs, dtype=dtype),
        config=config,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# sliding-window inference
# ---------------------------------------------------------------------------

@dataclass
class SlidePrediction:
    """Concatenated sliding-window outputs.

    outputs is ((k+1)*n_out, n_channels) in scaled units; sample j of the
    concatenation corresponds to global step start_step + j, and
    window_index[j] names the window that produced it.
    """

    outputs: np.ndarray
    start_step: int
    window_index: np.ndarray
    n_windows: int
    config: SlideConfig

    @property
    def steps(self):
        return self.start_step + np.arange(self.outputs.shape[0])

    def unscaled(self) -> np.ndarray:
        out = np.asarray(self.outputs, dtype=float).copy()
        for j, ch in enumerate(self.config.outputs):
            out[:, j] = (out[:, j] - ch.offset) / ch.gain
        return out


def window_matrix(rows, config: SlideConfig):
    """Stack sliding window inputs: window j covers steps [j*n_out, j*n_out + n_in).

    Returns (matrix, k) with k+1 windows; an incomplete tail is dropped
    with a warning rather than padded.
    """
    rows = np.atleast_2d(np.asarray(rows))
    if rows.shape[1] != config.r_width:
        raise ShapeError(
            f"rows have width {rows.shape[1]}, config expects {config.r_width}"
        )
    length = rows.shape[0]
    if length < config.n_in:
        raise WindowError(f"sequence of {length} samples is shorter than n_in={config.n_in}")
    k = (length - config.n_in) // config.n_out
    tail = (length - config.n_in) % config.n_out
    if tail:
        warnings.warn(
            f"dropping incomplete tail of {tail} samples "
            f"(sequence length {length}, n_in={config.n_in}, n_out={config.n_out})",
            stacklevel=2,
        )
    mat = np.empty((k + 1, config.n_in * rows.shape[1]), dtype=rows.dtype)
    for j in range(k + 1):
        mat[j] = rows[j * config.n_out:j * config.n_out + config.n_in].ravel()
    return mat, k


def sliding_inference(model: MlpModel, config: SlideConfig, rows,
                      batched=True) -> SlidePrediction:
    """Slide the input window in strides of n_out and concatenate the outputs.

    `rows` are per-step encoded inputs (see assemble_input_rows /
    encode_signal_rows). Batched and one-window-at-a-time evaluation give
    bitwise-identical results.
    """
    if config.with_initial_conditions:
        raise ConfigError(
            "sliding inference needs input windows free of initial-condition "
            "slots; this config prepends them"
        )
    mat, k = window_matrix(rows, config)
    if model.input_width != mat.shape[1]:
        raise ShapeError(
            f"model expects input width {model.input_width}, "
            f"windows have width {mat.shape[1]}"
        )
    if batched:
        raw = forward(model, mat)
    else:
        raw = np.stack([forward(model, mat[j]) for j in range(k + 1)])
    n_ch = len(config.outputs)
    outputs = raw.reshape(k + 1, config.n_out, n_ch).reshape(-1, n_ch)
    return SlidePrediction(
        outputs=outputs,
        start_step=config.n_in - config.n_out + 1,
        window_index=np.repeat(np.arange(k + 1), config.n_out),
        n_windows=k + 1,
        config=config,
    )


def window_rmse(model: MlpModel, dataset: WindowedDataset) -> np.ndarray:
    """Per-sample RMSE between model prediction and target, in unscaled
    output units, averaged over all n_y * n_out output entries."""
    pred = forward(model, dataset.inputs)
    scale = dataset.config.output_scaling()
    diff = scale.invert(np.asarray(pred, dtype=float)) \
        - scale.invert(np.asarray(dataset.outputs, dtype=float))
    return np.sqrt(np.mean(diff * diff, axis=1))


# ---------------------------------------------------------------------------
# logarithmic error mapping and the estimator pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorMap:
    """Log mapping of window RMSE onto [-1, 1].

    Errors between 10**eps_minus and 10**eps_plus map monotonically onto
    [-1, 1] via eps = (log10(e) - mid) / half_range; errors below the floor
    clamp to -1, errors above the ceiling extend beyond +1.
    """

    eps_plus: float = -1.5
    eps_minus: float = -4.5

    def __post_init__(self):
        if not self.eps_plus > self.eps_minus:
            raise ConfigError("need eps_plus > eps_minus")

    @property
    def half_range(self):
        return 0.5 * (self.eps_plus - self.eps_minus)

    @property
    def mid(self):
        return 0.5 * (self.eps_plus + self.eps_minus)

    @property
    def floor(self):
        return 10.0 ** self.eps_minus

    def encode(self, e):
        e = np.asarray(e, dtype=float)
        clamped = np.maximum(e, self.floor)
        return (np.log10(clamped) - self.mid) / self.half_range

    def encode_flagged(self, e):
        """encode plus a mask of entries clamped at the floor (e <= 10**eps_minus)."""
        e = np.asarray(e, dtype=float)
        return self.encode(e), e <= self.floor

    def decode(self, eps):
        eps = np.asarray(eps, dtype=float)
        return 10.0 ** (self.half_range * eps + self.mid)

    def target_scaling(self) -> AffineScaling:
        """Scaling descriptor for a 1-wide estimator output, so that
        unscaling an encoded value yields log10(e)."""
        return AffineScaling(np.array([1.0 / self.half_range]),
                             np.array([-self.mid / self.half_range]))

    @classmethod
    def from_target_scaling(cls, scaling: AffineScaling) -> "ErrorMap":
        half = 1.0 / float(scaling.gain[0])
        mid = -float(scaling.offset[0]) * half
        return cls(eps_plus=mid + half, eps_minus=mid - half)


def log_error_encode(e, error_map: ErrorMap):
    return error_map.encode(e)


def log_error_decode(eps, error_map: ErrorMap):
    return error_map.decode(eps)


DEFAULT_AUGMENT = (0.0, 0.5, 1.0, 1.5, 2.0)


def build_estimator_dataset(surrogate: MlpModel, system, drives,
                            config: SlideConfig, error_map: ErrorMap,
                            multipliers=DEFAULT_AUGMENT,
                            substeps=dynamics.DEFAULT_SUBSTEPS,
                            n_steps=None, dtype=np.float32) -> WindowedDataset:
    """Training data for the error estimator.

    Each base drive is amplitude-scaled by every multiplier and re-simulated;
    the multiplier-1 copies keep the surrogate's own training inputs in the
    set while the others push it out of its trained range. Targets are the
    encoded log errors of the (frozen) surrogate on each window; inputs are
    exactly the surrogate's inputs.

    `system` is a single model reused for every drive, or one model per
    drive (so per-trajectory random initial conditions can be reproduced).
    """
    if n_steps is None:
        n_steps = config.n_in
    systems = ([system] * len(drives) if isinstance(system, SystemModel)
               else list(system))
    if len(systems) != len(drives):
        raise ConfigError(f"{len(systems)} systems for {len(drives)} drives")
    inputs = []
    targets = []
    for model, drive in zip(systems, drives):
        for mult in multipliers:
            scaled = drive.scaled(mult)
            if model.n_a == 0:
                traj = dynamics.integrate_ode(model, scaled, config.h, n_steps,
                                              substeps=substeps)
            else:
                traj = dynamics.integrate_dae(model, scaled, config.h, n_steps,
                                              substeps=substeps)
            ds = build_windows([traj], config, dtype=dtype)
            eps = error_map.encode(window_rmse(surrogate, ds))
            inputs.append(ds.inputs)
            targets.append(eps)
    est_config = replace(config, outputs=(
        OutputChannel(index=0,
                      gain=float(error_map.target_scaling().gain[0]),
                      offset=float(error_map.target_scaling().offset[0]),
                      name="log10_rmse"),
    ), n_out=1)
    return WindowedDataset(
        inputs=np.concatenate(inputs).astype(dtype),
        outputs=np.concatenate(targets)[:, None].astype(dtype),
        config=est_config,
        provenance={"system": systems[0].name, "role": "error-estimator",
                    "multipliers": ",".join(repr(float(m)) for m in multipliers)},
    )


def predict_with_error(surrogate: MlpModel, estimator: MlpModel,
                       config: SlideConfig, rows, batched=True):
    """Sliding-window prediction plus a decoded error estimate per window.

    Both networks consume the identical window inputs; they are independent
    and could be evaluated concurrently. Returns (SlidePrediction, e_hat)
    with one estimate per window.
    """
    if estimator.input_width != surrogate.input_width:
        raise ConfigError(
            f"estimator input width {estimator.input_width} does not match "
            f"surrogate input width {surrogate.input_width}"
        )
    if estimator.output_width != 1:
        raise ConfigError("error estimator must have a single output")
    if estimator.out_scale is None:
        raise ConfigError("estimator lacks the log-error scaling descriptor")

    prediction = sliding_inference(surrogate, config, rows, batched=batched)
    mat, _ = window_matrix(rows, config)
    eps_hat = np.asarray(forward(estimator, mat), dtype=float)[:, 0]
    error_map = ErrorMap.from_target_scaling(estimator.out_scale)
    return prediction, error_map.decode(eps_hat)
