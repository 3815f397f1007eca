"""Sliding-window surrogate modelling for damped mechanical and multibody systems.

Subpackages:
    dynamics       system abstraction, RK4/DAE integrators, drive signals
    models         oscillators, constrained two-mass fixture, slider-crank
    linearization  tangent matrices, nullspace projection, eigen decay times
    neuralnet      from-scratch MLP engine with ADAM training
    engine         windowed datasets, sliding inference, error estimation
    formats        binary dataset/model files
    config         presets and run-config files
    pipeline       data generation and training orchestration
    bench          wall-clock speedup benchmark
    cli            the `slide` command
"""

from .dynamics import (
    DriveSignal,
    SystemModel,
    Trajectory,
    gen_accel_trajectory,
    gen_ptp,
    gen_random_step_force,
    integrate_dae,
    integrate_ode,
    pd_torque,
)
from .engine import (
    Channel,
    ErrorMap,
    OutputChannel,
    SlideConfig,
    WindowedDataset,
    build_estimator_dataset,
    build_windows,
    log_error_decode,
    log_error_encode,
    predict_with_error,
    sliding_inference,
    window_rmse,
)
from .linearization import (
    LinearizationReport,
    complex_eigenvalues,
    decay_time,
    linearize,
    nullspace_basis,
    project_system,
    tangent_matrices,
    trajectory_mean_decay,
)
from .models import (
    DUFFING,
    LINEAR_OSCILLATOR,
    OscillatorParams,
    SliderCrankParams,
    director_encode,
    make_oscillator,
    make_slider_crank_lumped,
    make_system,
    make_two_mass_constrained,
    rigid_slider_position,
)
from .neuralnet import (
    AffineScaling,
    MlpModel,
    TrainConfig,
    TrainReport,
    adam_step,
    backward,
    build_mlp,
    forward,
    load_model,
    mse_loss,
    rmse,
    save_model,
    train,
    xavier_init,
)

__version__ = "0.1.0"
