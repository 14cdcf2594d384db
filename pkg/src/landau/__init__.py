"""Particle solvers for the spatially homogeneous Fokker-Planck-Landau
equation: a neural score-transport solver and the kernel blob solver on a
shared pairwise collision velocity field, with analytic references and
conservation/entropy diagnostics.
"""

from ._backend import BACKEND
from .analytic import (
    BkwSolution,
    GaussianSolution,
    MaxwellianCoefficients,
    bkw_density,
    bkw_score,
    gaussian_score,
    maxwellian_convolution,
    maxwellian_drift,
    second_moment_evolution,
)
from .config import ExperimentConfig, load_config, load_preset, parse_config, preset_names, render_config
from .core import (
    CollisionKernel,
    MomentState,
    ParticleEnsemble,
    covariance,
    ensemble_moments,
    kernel_eval,
)
from .diagnostics import (
    covariance_frobenius_error,
    kde_density,
    l2_density_error,
    lemma3_bound_check,
    normalized_score_error,
    weighted_score_loss,
)
from .dynamics import (
    BlobSolver,
    EntropyLedger,
    SbtmSolver,
    VelocityField,
    compute_velocity,
    entropy_increment,
    entropy_rate,
    euler_step,
    run_simulation,
)
from .runner import run_experiment, run_sweep, run_to_files
from .sampling import Rng, sample_bkw, sample_gaussian
from .scores import (
    AdamState,
    AnalyticScore,
    BlobScore,
    Mlp,
    NeuralScore,
    blob_score,
    denoising_loss,
    implicit_loss,
    initialize_score,
    load_mlp,
    mlp_eval,
    mlp_gradient,
    save_mlp,
    silverman_bandwidth,
    train_step,
)

__version__ = "0.1.0"
