"""Neural-operator surrogates with deep generative priors for inverse design."""

from .fields import Boundary, Field, Grid, SpectralField, fft2, ifft2, resample_spectral
from .rng import RngStream
from .grf import GrfHyperPrior, GrfSpec, PsiMode, apply_psi, sample_grf
from .fno import (
    FnoConfig,
    FnoParams,
    GradientBundle,
    HeadLoss,
    SquaredL2Loss,
    SumLoss,
    fno_forward,
    fno_grad,
    grad_check,
    init_params,
)
from .data import Dataset, Normalization, Task, gen_darcy, gen_litho, gen_ns, load_dataset, save_dataset
from .training import AdamState, PriorModel, TrainConfig, adam_step, cosine_lr, gp_penalty_fd, train_prior, train_surrogate
from .inverse import BoundDiagnostics, CandidateSolution, InverseConfig, LatentState, bound_diagnostics, langevin_step, run_inverse
from .mala import mala_chain, sample_chain
from .metrics import EpeConfig, EvalRecord, epe_violations, max_error, relative_error, write_report

__all__ = [name for name in dir() if not name.startswith("_")]
