"""Desk-scale study recipes shared by the CLI and the acceptance suite.

These wire datasets, training, inversion, and true-solver scoring together.
Inversion over a batch of test targets runs vectorized (each target keeps its
own independent latent and objective; parameters are frozen).
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Task
from .fields import Boundary, Field, Grid
from .fno import FnoConfig, FnoParams, _forward, _vjp
from .inverse import InverseConfig
from .metrics import EvalRecord, max_error, relative_error
from .rng import RngStream
from .solvers import DarcyProblem, LithoConfig, NsConfig, default_forcing, litho_forward, solve_darcy, solve_ns
from .training import PriorModel, TrainConfig, train_prior, train_surrogate

PERM_FLOOR = 1e-3  # adversarial candidates may leave the elliptic range; floor to score them


@dataclass
class StudyModels:
    surrogate: FnoParams
    prior: PriorModel
    ds: Dataset
    surrogate_final_loss: float


def default_arch(ds: Dataset, width: int = 12, modes: int = 8, layers: int = 3, q_channels: int = 1):
    ca, cu = ds.a.shape[-1], ds.u.shape[-1]
    f_cfg = FnoConfig(in_channels=ca, out_channels=cu, layers=layers, width=width, modes=modes)
    g_cfg = FnoConfig(in_channels=q_channels + cu, out_channels=ca, layers=layers, width=width, modes=modes)
    d_cfg = FnoConfig(in_channels=ca + cu, out_channels=1, layers=max(2, layers - 1), width=width, modes=modes, head="scalar")
    return f_cfg, g_cfg, d_cfg


def train_study_models(
    ds: Dataset,
    seed: int,
    surrogate_epochs: int = 20,
    prior_epochs: int = 6,
    batch: int = 16,
    width: int = 12,
    modes: int = 8,
    layers: int = 3,
) -> StudyModels:
    f_cfg, g_cfg, d_cfg = default_arch(ds, width, modes, layers)
    sur_cfg = TrainConfig(epochs=surrogate_epochs, batch=batch, lr0=1e-3, seed=seed)
    sur = train_surrogate(ds, sur_cfg, f_cfg)
    pri_cfg = TrainConfig(epochs=prior_epochs, batch=batch, lr0=1e-3, seed=seed)
    pri = train_prior(ds, pri_cfg, g_cfg, d_cfg)
    return StudyModels(sur.params, pri.model, ds, sur.final_loss)


# ---------------------------------------------------------------------------
# true forward operators for scoring


def true_forward_fn(ds: Dataset):
    """Maps a design value array (H, W, Ca) to the true response (H, W, Cu)."""
    n = ds.resolution
    if ds.task in (Task.DARCY_CLIPPED, Task.DARCY_CONTINUOUS):
        grid = Grid(n, n, Boundary.DIRICHLET_ZERO)

        def fn(a):
            perm = Field(grid, np.maximum(a, PERM_FLOOR))
            return solve_darcy(DarcyProblem(perm)).values

        return fn
    if ds.task is Task.NS2D:
        grid = Grid(n, n, Boundary.PERIODIC)
        cfg = NsConfig(
            nu=ds.extra["nu"],
            T=ds.extra["T"],
            dt=ds.extra["dt"],
            n_snapshots=ds.extra.get("n_snapshots", 10),
            forcing=default_forcing(grid),
        )

        def fn(a):
            return solve_ns(Field(grid, a), cfg).final().values

        return fn
    grid = Grid(n, n, Boundary.PERIODIC)
    litho = LithoConfig(
        sigma_optical=ds.extra["sigma_optical"],
        sigma_resist=ds.extra["sigma_resist"],
        tau_resist=ds.extra["tau_resist"],
        beta=ds.extra["beta"],
    )

    def fn(a):
        return litho_forward(Field(grid, np.clip(a, 0.0, 1.0)), litho).values

    return fn


# ---------------------------------------------------------------------------
# batched Langevin inversion over test targets


@dataclass
class BatchInverseResult:
    a_norm: np.ndarray  # (T, H, W, Ca) decoded normalized designs
    a_phys: np.ndarray
    surrogate_loss: np.ndarray  # (T,) final cell-weighted data loss
    q_final: np.ndarray
    seconds_per_design: float
    trajectory: list | None = None


_LD_BETAS = (0.9, 0.999)
_LD_EPS = 1e-8


def batched_invert(
    models: StudyModels,
    u_star_phys: np.ndarray,  # (T, H, W, Cu)
    cfg: InverseConfig,
    collect_trajectory: bool = False,
):
    """Run one inverse variant on all targets at once; posterior mode returns
    (T, n_samples, ...) decoded designs from each target's chain."""
    ds = models.ds
    F, prior = models.surrogate, models.prior
    G = prior.generator
    u_norm = ds.norm.normalize_u(u_star_phys)
    t_sz, h, w, _ = u_norm.shape
    n_cells = h * w
    init_rng = RngStream(cfg.seed, stream_id=0)
    noise_rng = RngStream(cfg.seed, stream_id=1)
    t0 = time.time()

    def decode(q):
        return _forward(G, np.concatenate([q, u_norm], axis=-1))

    def chain_grad(q):
        gin = np.concatenate([q, u_norm], axis=-1)
        a_norm, tape_g = _forward(G, gin, want_tape=True)
        pred, tape_f = _forward(F, a_norm, want_tape=True)
        diff = pred - u_norm
        loss = (diff * diff).sum(axis=(1, 2, 3)) / n_cells
        _, d_a = _vjp(F, tape_f, 2.0 * diff / n_cells)
        _, d_gin = _vjp(G, tape_g, d_a)
        return loss, d_gin[..., : prior.q_channels]

    def direct_grad(a):
        pred, tape_f = _forward(F, a, want_tape=True)
        diff = pred - u_norm
        loss = (diff * diff).sum(axis=(1, 2, 3)) / n_cells
        _, d_a = _vjp(F, tape_f, 2.0 * diff / n_cells)
        return loss, d_a

    def surrogate_loss_of(a_norm):
        pred = _forward(F, a_norm)
        return ((pred - u_norm) ** 2).sum(axis=(1, 2, 3)) / n_cells

    if cfg.variant == "with_prior":
        latent = init_rng.standard_normal((t_sz, h, w, prior.q_channels))
        grad_fn = chain_grad
    elif cfg.variant == "prior_only":
        q0 = init_rng.standard_normal((t_sz, h, w, prior.q_channels))
        a_norm = decode(q0)
        dt = (time.time() - t0) / t_sz
        return BatchInverseResult(a_norm, ds.norm.denormalize_a(a_norm), surrogate_loss_of(a_norm), q0, dt)
    elif cfg.variant == "no_prior_random":
        latent = init_rng.standard_normal((t_sz, h, w, F.config.in_channels))
        grad_fn = direct_grad
    else:  # no_prior_condition
        q0 = init_rng.standard_normal((t_sz, h, w, prior.q_channels))
        latent = decode(q0)
        grad_fn = direct_grad

    noise_on = cfg.mode == "posterior"
    m = v = None
    collected = []
    traj = []
    for s in range(1, cfg.steps + 1):
        loss, g = grad_fn(latent)
        drift = n_cells * g + 2.0 * cfg.l2_lambda * latent
        if cfg.preconditioned:
            b1, b2 = _LD_BETAS
            m = b1 * (m if m is not None else 0.0) + (1 - b1) * drift
            v = b2 * (v if v is not None else 0.0) + (1 - b2) * drift * drift
            drift = (m / (1 - b1**s)) / (np.sqrt(v / (1 - b2**s)) + _LD_EPS)
        latent = latent - cfg.gamma * drift
        if noise_on and cfg.gamma > 0:
            latent = latent + np.sqrt(2.0 * cfg.gamma) * noise_rng.standard_normal(latent.shape)
        if collect_trajectory:
            traj.append(float(loss.mean()))
        if noise_on and s >= cfg.burn_in and (s - cfg.burn_in) % cfg.thinning == 0:
            collected.append(latent.copy())
            if len(collected) == cfg.n_samples:
                break

    if noise_on:
        qs = np.stack(collected[: cfg.n_samples], axis=1)  # (T, S, H, W, qc)
        a_norm = np.stack([decode(qs[:, j]) for j in range(qs.shape[1])], axis=1)
        a_phys = ds.norm.denormalize_a(a_norm)
        sloss = np.stack([surrogate_loss_of(a_norm[:, j]) for j in range(qs.shape[1])], axis=1)
        dt = (time.time() - t0) / (t_sz * qs.shape[1])
        return BatchInverseResult(a_norm, a_phys, sloss, qs, dt)

    a_norm = decode(latent) if cfg.variant == "with_prior" else latent
    dt = (time.time() - t0) / t_sz
    res = BatchInverseResult(a_norm, ds.norm.denormalize_a(a_norm), surrogate_loss_of(a_norm), latent, dt)
    if collect_trajectory:
        res.trajectory = traj
    return res


# ---------------------------------------------------------------------------
# scoring


@dataclass
class ScoredRun:
    records: list[EvalRecord]
    true_rel: np.ndarray
    surr_rel: np.ndarray  # surrogate-implied relative error per candidate


def score_candidates(
    models: StudyModels,
    a_phys: np.ndarray,  # (T, H, W, Ca)
    u_star_phys: np.ndarray,
    method: str,
    seed: int,
) -> ScoredRun:
    ds = models.ds
    true_fn = true_forward_fn(ds)
    a_norm = ds.norm.normalize_a(a_phys)
    pred_phys = ds.norm.denormalize_u(_forward(models.surrogate, a_norm))
    records, true_rel, surr_rel = [], [], []
    for i in range(a_phys.shape[0]):
        u_true = true_fn(a_phys[i])
        tr = relative_error(u_true, u_star_phys[i])
        mx = max_error(u_true, u_star_phys[i])
        sr = relative_error(pred_phys[i], u_star_phys[i])
        true_rel.append(tr)
        surr_rel.append(sr)
        records.append(EvalRecord(ds.task.value, method, seed, tr, mx, 0.0))
    return ScoredRun(records, np.array(true_rel), np.array(surr_rel))


def run_variant_and_score(models: StudyModels, cfg: InverseConfig, method: str) -> ScoredRun:
    _, u_test = models.ds.test_arrays()
    res = batched_invert(models, u_test, cfg)
    run = score_candidates(models, res.a_phys, u_test, method, cfg.seed)
    for r in run.records:
        r.seconds_per_design = res.seconds_per_design
    return run


DARCY_VARIANT_CFGS = {
    "ld_with_prior": dict(variant="with_prior", mode="map", gamma=0.05, l2_lambda=1e-2, steps=100),
    "ld_no_prior_condition": dict(variant="no_prior_condition", mode="map", gamma=0.05, l2_lambda=1e-2, steps=100),
    "ld_no_prior_random": dict(variant="no_prior_random", mode="map", gamma=0.05, l2_lambda=1e-2, steps=100),
    "prior_only": dict(variant="prior_only", mode="map", steps=0),
}


def darcy_desk_study(models: StudyModels, seed: int, variants=None) -> dict[str, ScoredRun]:
    out = {}
    for method, kw in (variants or DARCY_VARIANT_CFGS).items():
        cfg = InverseConfig(seed=seed, **kw)
        out[method] = run_variant_and_score(models, cfg, method)
    return out
