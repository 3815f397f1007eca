"""Wall-clock speedup benchmark: simulation of an input-window horizon versus
surrogate forward passes, swept over inference batch sizes.

Timing uses the monotonic clock with warm-up runs discarded and the median
of the repetitions as the representative value (medians resist scheduler
noise); means and standard deviations are recorded alongside. The headline
speedup S = (t_sim / t_nn) * (n_out / n_in) compares the simulation of one
n_in-step horizon against one batch-1 forward pass that yields n_out steps,
and recomputes exactly from the stored fields.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import SystemModel
from .engine import SlideConfig, window_matrix
from .errors import ConfigError
from .neuralnet import MlpModel, forward


def speedup_from(t_sim: float, t_nn: float, n_in: int, n_out: int) -> float:
    """S = (t_sim / t_nn) * (n_out / n_in)."""
    return (t_sim / t_nn) * (n_out / n_in)


@dataclass
class BatchTiming:
    batch: int
    t_pass_median: float
    t_pass_mean: float
    t_pass_std: float

    @property
    def per_window(self):
        return self.t_pass_median / self.batch


@dataclass
class BenchReport:
    system: str
    n_in: int
    n_out: int
    h: float
    repetitions: int
    warmup: int
    t_sim_median: float
    t_sim_mean: float
    t_sim_std: float
    batches: list = field(default_factory=list)

    @property
    def t_sim(self):
        return self.t_sim_median

    @property
    def t_nn(self):
        """Batch-1 forward-pass time (median)."""
        for bt in self.batches:
            if bt.batch == 1:
                return bt.t_pass_median
        raise ConfigError("benchmark did not include batch size 1")

    @property
    def speedup(self):
        return speedup_from(self.t_sim, self.t_nn, self.n_in, self.n_out)

    def speedup_at(self, batch: int) -> float:
        for bt in self.batches:
            if bt.batch == batch:
                return speedup_from(self.t_sim, bt.per_window, self.n_in, self.n_out)
        raise ConfigError(f"benchmark did not include batch size {batch}")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["batch", "t_pass_median_s", "t_pass_mean_s",
                             "t_pass_std_s", "per_window_s", "speedup"])
            for bt in self.batches:
                writer.writerow([bt.batch, repr(bt.t_pass_median),
                                 repr(bt.t_pass_mean), repr(bt.t_pass_std),
                                 repr(bt.per_window),
                                 repr(speedup_from(self.t_sim, bt.per_window,
                                                   self.n_in, self.n_out))])


def _timed(fn, repetitions, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return (statistics.median(samples), statistics.fmean(samples),
            statistics.pstdev(samples))


def bench_speedup(model: MlpModel, system: SystemModel, config: SlideConfig,
                  drives, batch_sizes=(1, 4, 16, 64, 256), repetitions=20,
                  warmup=3, substeps=dynamics.DEFAULT_SUBSTEPS) -> BenchReport:
    """Benchmark simulation versus surrogate inference.

    `drives` supplies at least max(batch_sizes) independent input windows;
    the first one also drives the timed simulation of an n_in-step horizon.
    Batch-1 timing runs a single-window forward pass.
    """
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    batch_sizes = tuple(int(b) for b in batch_sizes)
    n_windows = max(batch_sizes)
    if len(drives) < n_windows:
        raise ConfigError(f"need {n_windows} drives, got {len(drives)}")

    from .engine import encode_signal_rows

    for ch in config.inputs:
        if ch.source != "u":
            raise ConfigError(
                "bench windows are assembled from drive signals; config uses "
                f"channel source {ch.source!r}"
            )

    # pre-assemble the window inputs outside the timed region
    rows_per_drive = []
    for drive in drives[:n_windows]:
        raw = np.column_stack([drive.u[: config.n_in, ch.index]
                               for ch in config.inputs])
        rows_per_drive.append(encode_signal_rows(raw, config))
    mats = [window_matrix(rows, config)[0][0] for rows in rows_per_drive]
    window_bank = np.ascontiguousarray(np.stack(mats), dtype=model.dtype)

    integrate = dynamics.integrate_ode if system.n_a == 0 else dynamics.integrate_dae

    def run_sim():
        integrate(system, drives[0], config.h, config.n_in, substeps=substeps)

    t_sim_median, t_sim_mean, t_sim_std = _timed(run_sim, repetitions, warmup)

    report = BenchReport(system=system.name, n_in=config.n_in, n_out=config.n_out,
                         h=config.h, repetitions=repetitions, warmup=warmup,
                         t_sim_median=t_sim_median, t_sim_mean=t_sim_mean,
                         t_sim_std=t_sim_std)
    for b in batch_sizes:
        batch = window_bank[:b]

        def run_nn(batch=batch):
            forward(model, batch)

        med, mean, std = _timed(run_nn, repetitions, warmup)
        report.batches.append(BatchTiming(batch=b, t_pass_median=med,
                                          t_pass_mean=mean, t_pass_std=std))
    return report
