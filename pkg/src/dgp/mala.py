"""Metropolis-adjusted Langevin sampling.

The field-level chain perturbs the conditioning observation: the latent is a
perturbation eps with prior N(0, I); the candidate design is G(q0, u* + eps)
and the Gaussian likelihood compares F of that design with u*.  Proposals are
x' = x + step * grad logpi(x) + sqrt(2 step) * xi with the exact
Metropolis-Hastings correction including both proposal densities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Normalization
from .fields import Field
from .fno import FnoParams, _forward, _vjp
from .rng import RngStream


def log_proposal_density(y: np.ndarray, x: np.ndarray, grad_x: np.ndarray, step: float) -> float:
    """log q(y | x) up to the state-independent Gaussian normalizer."""
    d = y - x - step * grad_x
    return -float((d * d).sum()) / (4.0 * step)


def log_acceptance(
    logp_x: float,
    grad_x: np.ndarray,
    x: np.ndarray,
    logp_y: float,
    grad_y: np.ndarray,
    y: np.ndarray,
    step: float,
) -> float:
    return (logp_y - logp_x) + log_proposal_density(x, y, grad_y, step) - log_proposal_density(y, x, grad_x, step)


@dataclass
class MalaResult:
    samples: np.ndarray  # (n_kept, *state_shape), post burn-in, one per step
    acceptance_rate: float
    n_nonfinite: int
    final_state: np.ndarray


def sample_chain(
    logpost_and_grad,
    x0: np.ndarray,
    step_size: float,
    n_steps: int,
    burn_in: int,
    rng: RngStream,
    thinning: int = 1,
) -> MalaResult:
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    if burn_in >= n_steps:
        raise ValueError("burn_in must be smaller than n_steps")
    x = np.array(x0, dtype=np.float64)
    logp, grad = logpost_and_grad(x)
    if not (np.isfinite(logp) and np.isfinite(grad).all()):
        raise ValueError("log-posterior is not finite at the initial state")
    kept = []
    accepted = 0
    nonfinite = 0
    for step in range(1, n_steps + 1):
        xi = rng.standard_normal(x.shape)
        y = x + step_size * grad + math.sqrt(2.0 * step_size) * xi
        logp_y, grad_y = logpost_and_grad(y)
        if np.isfinite(logp_y) and np.isfinite(grad_y).all():
            la = log_acceptance(logp, grad, x, logp_y, grad_y, y, step_size)
            if math.log(float(rng.uniform(0.0, 1.0))) < la:
                x, logp, grad = y, logp_y, grad_y
                accepted += 1
        else:
            nonfinite += 1  # rejected sample, chain continues
        if step > burn_in and (step - burn_in - 1) % thinning == 0:
            kept.append(x.copy())
    samples = np.stack(kept) if kept else np.empty((0,) + x.shape)
    return MalaResult(samples, accepted / n_steps, nonfinite, x)


@dataclass
class MalaChainResult:
    mean_design: Field
    designs: np.ndarray  # (n_kept, H, W, Ca), denormalized
    eps_samples: np.ndarray
    acceptance_rate: float
    n_nonfinite: int


def mala_chain(
    u_star: Field,
    F: FnoParams,
    G: FnoParams,
    obs_sigma: float,
    step_size: float,
    n_steps: int,
    burn_in: int,
    rng: RngStream,
    norm: Normalization | None = None,
    thinning: int = 1,
    prior_only: bool = False,
) -> MalaChainResult:
    """Posterior over observation perturbations; returns the posterior-mean design."""
    if obs_sigma <= 0:
        raise ValueError("obs_sigma must be positive")
    u_phys = u_star.values
    norm = norm or Normalization.identity(u_channels=u_phys.shape[-1])
    u_norm = norm.normalize_u(u_phys)
    h, w, cu = u_norm.shape
    q_channels = G.config.in_channels - cu
    if q_channels < 1:
        raise ValueError("generator input channels inconsistent with observation")
    q0 = RngStream(rng.seed, stream_id=rng.stream_id + 1).standard_normal((h, w, q_channels))
    inv_two_sigma2 = 1.0 / (2.0 * obs_sigma * obs_sigma)

    def logpost_and_grad(eps):
        prior = -0.5 * float((eps * eps).sum())
        if prior_only:
            return prior, -eps
        gin = np.concatenate([q0, u_norm + eps], axis=-1)[None]
        a_norm, tape_g = _forward(G, gin, want_tape=True)
        pred, tape_f = _forward(F, a_norm, want_tape=True)
        diff = u_norm[None] - pred
        like = -float((diff * diff).sum()) * inv_two_sigma2
        cot = 2.0 * diff * inv_two_sigma2  # d like / d pred
        _, d_a = _vjp(F, tape_f, cot)
        _, d_gin = _vjp(G, tape_g, d_a)
        return prior + like, d_gin[0][..., q_channels:] - eps

    res = sample_chain(logpost_and_grad, np.zeros((h, w, cu)), step_size, n_steps, burn_in, rng, thinning)

    def decode(eps_batch):
        n = eps_batch.shape[0]
        gin = np.concatenate(
            [np.broadcast_to(q0, (n, h, w, q_channels)), u_norm[None] + eps_batch], axis=-1
        )
        return norm.denormalize_a(_forward(G, gin))

    designs = decode(res.samples) if res.samples.size else np.empty((0, h, w, G.config.out_channels))
    mean = Field(u_star.grid, designs.mean(axis=0)) if designs.size else Field(u_star.grid, decode(np.zeros((1, h, w, cu)))[0])
    return MalaChainResult(mean, designs, res.samples, res.acceptance_rate, res.n_nonfinite)
