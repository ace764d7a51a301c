"""Inverse design by Langevin dynamics in the latent space of a generative prior.

The update is  q <- q - gamma * d/dq( sum((u* - F(G(q,u*)))^2) + lambda * sum(q^2) )
                + sqrt(2 gamma) * N(0, I)        (noise only in posterior mode),
equivalently gradient flow of the cell-weighted loss under the cell-weighted
inner product, so the regularizer drift is 2*lambda*q pointwise.  No-prior
baselines run the same update directly on the normalized design field.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Normalization
from .fields import Field
from .fno import FnoParams, _forward, _vjp
from .rng import RngStream

_LD_BETAS = (0.9, 0.999)
_LD_EPS = 1e-8

VARIANTS = ("with_prior", "no_prior_random", "no_prior_condition", "prior_only")
MODES = ("map", "posterior")


@dataclass(frozen=True)
class InverseConfig:
    gamma: float = 0.01
    l2_lambda: float = 1e-2
    steps: int = 100
    mode: str = "map"
    variant: str = "with_prior"
    n_samples: int = 1
    burn_in: int = 0
    thinning: int = 1
    precondition: bool | None = None  # None: on for map, off for posterior
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0 or self.l2_lambda < 0 or self.steps < 0:
            raise ValueError("gamma, l2_lambda, steps must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.mode == "posterior":
            if self.variant != "with_prior":
                raise ValueError("posterior sampling requires the with_prior variant")
            if self.n_samples < 1 or self.thinning < 1 or self.burn_in < 0:
                raise ValueError("invalid posterior schedule")
            if self.steps < self.burn_in:
                raise ValueError("posterior needs steps >= burn_in")
            if self.steps < self.burn_in + (self.n_samples - 1) * self.thinning:
                raise ValueError("steps too small for n_samples at this burn_in/thinning")

    @property
    def preconditioned(self) -> bool:
        if self.precondition is not None:
            return self.precondition
        return self.mode == "map"


@dataclass
class LatentState:
    q: np.ndarray
    rng: RngStream
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


@dataclass
class CandidateSolution:
    a: Field
    surrogate_loss: float
    q_final: np.ndarray


def _values(u) -> np.ndarray:
    arr = u.values if isinstance(u, Field) else np.asarray(u, dtype=np.float64)
    return arr if arr.ndim == 3 else arr[:, :, None]


def _data_loss_grad_chain(F: FnoParams, G: FnoParams, q: np.ndarray, u_norm: np.ndarray):
    """Cell-weighted data loss and its gradient wrt q through F(G(q,u))."""
    gin = np.concatenate([q, u_norm], axis=-1)[None]
    a_norm, tape_g = _forward(G, gin, want_tape=True)
    pred, tape_f = _forward(F, a_norm, want_tape=True)
    n_cells = u_norm.shape[0] * u_norm.shape[1]
    diff = pred - u_norm[None]
    loss = float((diff * diff).sum()) / n_cells
    cot = 2.0 * diff / n_cells
    _, d_a = _vjp(F, tape_f, cot)
    _, d_gin = _vjp(G, tape_g, d_a)
    return loss, d_gin[0][..., : q.shape[-1]], a_norm[0]


def _data_loss_grad_direct(F: FnoParams, a_norm: np.ndarray, u_norm: np.ndarray):
    pred, tape_f = _forward(F, a_norm[None], want_tape=True)
    n_cells = u_norm.shape[0] * u_norm.shape[1]
    diff = pred - u_norm[None]
    loss = float((diff * diff).sum()) / n_cells
    cot = 2.0 * diff / n_cells
    _, d_a = _vjp(F, tape_f, cot)
    return loss, d_a[0]


def _ld_update(state: LatentState, loss_grad_fn, cfg: InverseConfig, noise: bool) -> LatentState:
    q = state.q
    n_cells = q.shape[0] * q.shape[1]
    loss_cw, g_cw = loss_grad_fn(q)
    if not np.isfinite(g_cw).all():
        raise FloatingPointError(f"non-finite latent gradient at step {state.step + 1}")
    drift = n_cells * g_cw + 2.0 * cfg.l2_lambda * q
    step = state.step + 1
    m, v = state.m, state.v
    if cfg.preconditioned:
        b1, b2 = _LD_BETAS
        m = b1 * (m if m is not None else 0.0) + (1 - b1) * drift
        v = b2 * (v if v is not None else 0.0) + (1 - b2) * drift * drift
        drift_eff = (m / (1 - b1**step)) / (np.sqrt(v / (1 - b2**step)) + _LD_EPS)
    else:
        drift_eff = drift
    del loss_cw
    rng = state.rng.clone()
    q_new = q - cfg.gamma * drift_eff
    if noise and cfg.gamma > 0.0:
        q_new = q_new + np.sqrt(2.0 * cfg.gamma) * rng.standard_normal(q.shape)
    return LatentState(q_new, rng, step, m, v)


def langevin_step(
    state: LatentState,
    u_star,
    F: FnoParams,
    G: FnoParams,
    cfg: InverseConfig,
    noise: bool = False,
) -> LatentState:
    """One latent-space update; u_star must already be in the models' units."""
    u_norm = _values(u_star)

    def fn(q):
        loss, g, _ = _data_loss_grad_chain(F, G, q, u_norm)
        return loss, g

    return _ld_update(state, fn, cfg, noise)


def run_inverse(
    u_star: Field,
    F: FnoParams,
    G: FnoParams | None,
    cfg: InverseConfig,
    norm: Normalization | None = None,
) -> list[CandidateSolution]:
    """Run one inverse solve; returns one candidate (MAP/no-prior/prior-only) or
    n_samples candidates (posterior)."""
    if cfg.variant in ("with_prior", "no_prior_condition", "prior_only") and G is None:
        raise ValueError(f"variant {cfg.variant} needs a generator")
    u_phys = _values(u_star)
    norm = norm or Normalization.identity(u_channels=u_phys.shape[-1])
    u_norm = norm.normalize_u(u_phys)
    h, w = u_norm.shape[:2]
    init_rng = RngStream(cfg.seed, stream_id=0)
    ld_rng = RngStream(cfg.seed, stream_id=1)
    grid = u_star.grid

    q_channels = None
    if G is not None:
        q_channels = G.config.in_channels - u_norm.shape[-1]
        if q_channels < 1:
            raise ValueError("generator input channels inconsistent with observation")

    def decode_prior(q):
        gin = np.concatenate([q, u_norm], axis=-1)[None]
        return _forward(G, gin)[0]

    def candidate_from(a_norm, q_final):
        loss, _ = _data_loss_grad_direct(F, a_norm, u_norm)
        a_phys = norm.denormalize_a(a_norm)
        return CandidateSolution(Field(grid, a_phys), loss, q_final)

    if cfg.variant == "prior_only":
        q0 = init_rng.standard_normal((h, w, q_channels))
        return [candidate_from(decode_prior(q0), q0)]

    if cfg.variant == "with_prior":
        q0 = init_rng.standard_normal((h, w, q_channels))
        state = LatentState(q0, ld_rng)

        def fn(q):
            loss, g, _ = _data_loss_grad_chain(F, G, q, u_norm)
            return loss, g

        if cfg.mode == "map":
            for _ in range(cfg.steps):
                state = _ld_update(state, fn, cfg, noise=False)
            return [candidate_from(decode_prior(state.q), state.q)]
        collected = []
        if cfg.burn_in == 0:
            collected.append(state.q.copy())
        for s in range(1, cfg.steps + 1):
            state = _ld_update(state, fn, cfg, noise=True)
            due = s >= cfg.burn_in and (s - cfg.burn_in) % cfg.thinning == 0
            if due and len(collected) < cfg.n_samples:
                collected.append(state.q.copy())
            if len(collected) == cfg.n_samples:
                break
        return [candidate_from(decode_prior(q), q) for q in collected[: cfg.n_samples]]

    # no-prior variants: the latent is the normalized design itself
    if cfg.variant == "no_prior_random":
        a0 = init_rng.standard_normal((h, w, F.config.in_channels))
    else:
        q0 = init_rng.standard_normal((h, w, q_channels))
        a0 = decode_prior(q0)
    state = LatentState(a0, ld_rng)

    def fn_direct(a):
        return _data_loss_grad_direct(F, a, u_norm)

    for _ in range(cfg.steps):
        state = _ld_update(state, fn_direct, cfg, noise=(cfg.mode == "posterior"))
    return [candidate_from(state.q, state.q)]


# ---------------------------------------------------------------------------
# Lemma-style bound diagnostics


@dataclass
class BoundDiagnostics:
    eps_F_hat: float
    L_F_hat: float
    eps_G_hat: float | None = None
    bound_value: float | None = None
    loss_ref: float | None = None
    residual_inner: float | None = None

    def __post_init__(self):
        if self.eps_F_hat < 0 or self.L_F_hat < 0:
            raise ValueError("diagnostics must be nonnegative")


def _cw_norm(x: np.ndarray) -> float:
    return float(np.sqrt((x * x).sum() / (x.shape[0] * x.shape[1])))


def bound_diagnostics(
    true_fn,
    surrogate_fn,
    sample_fn,
    u_star,
    a_ref=None,
    candidate=None,
    n_probes: int = 8,
    rng: RngStream | None = None,
) -> BoundDiagnostics:
    """Empirical Lemma-1 quantities: max surrogate gap over generator probes,
    max pairwise slope of the surrogate (a lower bound on its Lipschitz
    constant), latent-restart distance to a reference design when given."""
    if true_fn is None:
        raise ValueError("bound diagnostics need the true solver")
    rng = rng or RngStream(0, stream_id=7)
    u_vals = _values(u_star)
    probes = [np.asarray(sample_fn(rng), dtype=np.float64) for _ in range(n_probes)]

    eps_f = 0.0
    surr = []
    for a in probes:
        s = np.asarray(surrogate_fn(a))
        surr.append(s)
        eps_f = max(eps_f, _cw_norm(np.asarray(true_fn(a)) - s))

    l_f = 0.0
    for i in range(len(probes)):
        for j in range(i + 1, len(probes)):
            da = _cw_norm(probes[i] - probes[j])
            if da > 1e-14:
                l_f = max(l_f, _cw_norm(surr[i] - surr[j]) / da)

    eps_g = bound = loss_ref = None
    if a_ref is not None:
        ref = _values(a_ref)
        eps_g = min(_cw_norm(a - ref) for a in probes)
        loss_ref = _cw_norm(np.asarray(true_fn(ref)) - u_vals)
        bound = loss_ref + l_f * eps_g + 2.0 * eps_f

    residual = None
    if candidate is not None:
        c = _values(candidate)
        s = np.asarray(surrogate_fn(c))
        delta = np.asarray(true_fn(c)) - s
        n_cells = c.shape[0] * c.shape[1]
        residual = float(((s - u_vals) * delta).sum()) / n_cells

    return BoundDiagnostics(eps_f, l_f, eps_g, bound, loss_ref, residual)
