"""Training: supervised surrogate (relative L2) and conditional Wasserstein prior.

The critic penalty is the finite-difference directional form of WGAN-GP: the
derivative of the critic along the real<->fake line at an interpolate is pushed
toward 1.  It needs only first-order critic gradients at two shifted points, so
no nested differentiation is required.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Normalization
from .fields import Field
from .fno import FnoConfig, FnoParams, HeadLoss, _forward, _vjp, init_params, real_view
from .rng import RngStream


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch: int = 16
    lr0: float = 1e-3
    seed: int = 0
    n_critic: int = 5
    gp_lambda: float = 10.0
    gp_h: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_betas_adversarial: tuple[float, float] = (0.5, 0.9)
    adam_eps: float = 1e-8
    q_channels: int = 1

    def __post_init__(self):
        if self.lr0 < 0 or self.batch < 1 or self.epochs < 1:
            raise ValueError("invalid TrainConfig")


def cosine_lr(lr0: float, t: int, t_total: int) -> float:
    """lr0 * 0.5 * (1 + cos(pi t / t_total)); lr(0) = lr0, lr(t_total) = 0."""
    if t_total <= 0:
        return lr0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * min(t, t_total) / t_total))


# ---------------------------------------------------------------------------
# Adam on parameter leaves (complex leaves update as independent re/im pairs)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @staticmethod
    def init(params: FnoParams) -> "AdamState":
        shapes = [real_view(a).shape for _, a in params.leaves()]
        return AdamState([np.zeros(s) for s in shapes], [np.zeros(s) for s in shapes])


def adam_step(
    params: FnoParams,
    grads: FnoParams,
    state: AdamState,
    step_index: int,
    cfg: TrainConfig,
    t_total: int,
    betas: tuple[float, float] | None = None,
) -> tuple[FnoParams, AdamState]:
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    for name, g in grads.leaves():
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient in {name}")
    b1, b2 = betas if betas is not None else cfg.adam_betas
    lr = cosine_lr(cfg.lr0, step_index - 1, t_total)
    new = params.copy()
    new_m, new_v = [], []
    bc1 = 1.0 - b1**step_index
    bc2 = 1.0 - b2**step_index
    for (name, p), (_, g), m, v in zip(new.leaves(), grads.leaves(), state.m, state.v):
        pv, gv = real_view(p), real_view(g)
        m = b1 * m + (1.0 - b1) * gv
        v = b2 * v + (1.0 - b2) * gv * gv
        pv -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        new_m.append(m)
        new_v.append(v)
    return new, AdamState(new_m, new_v)


# ---------------------------------------------------------------------------
# surrogate training


@dataclass
class TrainResult:
    params: FnoParams
    curve: list[tuple[int, float, float]]  # (step, loss, lr)
    initial_loss: float
    final_loss: float


def _relative_l2_batch(pred: np.ndarray, target: np.ndarray):
    """Mean over the batch of ||pred - u|| / ||u||; returns (loss, cotangent)."""
    b = pred.shape[0]
    diff = pred - target
    num = np.sqrt((diff * diff).sum(axis=(1, 2, 3)))
    den = np.sqrt((target * target).sum(axis=(1, 2, 3)))
    den = np.maximum(den, 1e-300)
    loss = float((num / den).mean())
    safe = np.maximum(num * den, 1e-300)
    cot = diff / safe[:, None, None, None] / b
    cot[num == 0.0] = 0.0
    return loss, cot


def _eval_relative_l2(params: FnoParams, a: np.ndarray, u: np.ndarray, chunk: int = 32) -> float:
    total, n = 0.0, a.shape[0]
    for i in range(0, n, chunk):
        pred = _forward(params, a[i : i + chunk])
        loss, _ = _relative_l2_batch(pred, u[i : i + chunk])
        total += loss * min(chunk, n - i)
    return total / n


def train_surrogate(ds: Dataset, cfg: TrainConfig, fno_cfg: FnoConfig | None = None) -> TrainResult:
    a_tr, u_tr = ds.train_arrays()
    if a_tr.shape[0] == 0:
        raise ValueError("empty training set")
    a = ds.norm.normalize_a(a_tr)
    u = ds.norm.normalize_u(u_tr)
    if fno_cfg is None:
        fno_cfg = FnoConfig(in_channels=a.shape[-1], out_channels=u.shape[-1])
    params = init_params(fno_cfg, RngStream(cfg.seed, stream_id=0))
    shuffle_rng = RngStream(cfg.seed, stream_id=1)
    state = AdamState.init(params)

    n = a.shape[0]
    batches_per_epoch = max(1, n // cfg.batch)
    t_total = cfg.epochs * batches_per_epoch
    initial_loss = _eval_relative_l2(params, a, u)
    curve = []
    step = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for bi in range(batches_per_epoch):
            idx = order[bi * cfg.batch : (bi + 1) * cfg.batch]
            step += 1
            out, tape = _forward(params, a[idx], want_tape=True)
            loss, cot = _relative_l2_batch(out, u[idx])
            grads, _ = _vjp(params, tape, cot)
            params, state = adam_step(params, grads, state, step, cfg, t_total)
            curve.append((step, loss, cosine_lr(cfg.lr0, step - 1, t_total)))
    final_loss = _eval_relative_l2(params, a, u)
    return TrainResult(params, curve, initial_loss, final_loss)


# ---------------------------------------------------------------------------
# gradient penalty (finite-difference directional form)


def _cw_norm(x: np.ndarray) -> float:
    return math.sqrt(float((x * x).sum()) / (x.shape[0] * x.shape[1]))


def _critic_value_and_grad(critic, a: np.ndarray, u: np.ndarray):
    """Critic score and its parameter gradient; accepts FnoParams or a duck critic."""
    if isinstance(critic, FnoParams):
        x = np.concatenate([a, u], axis=-1)
        out, tape = _forward(critic, x[None], want_tape=True)
        grads, _ = _vjp(critic, tape, np.ones(1))
        return float(out[0]), grads
    return critic.value_and_grad(a, u)


def _grad_axpy(acc, ga, ca, gb, cb):
    """acc = ca*ga + cb*gb over matching gradient structures."""
    if isinstance(ga, FnoParams):
        out = ga.zeros_like()
        for (_, o), (_, x), (_, y) in zip(out.leaves(), ga.leaves(), gb.leaves()):
            o[...] = ca * x + cb * y
        return out
    if isinstance(ga, np.ndarray):
        return ca * ga + cb * gb
    return [ca * x + cb * y for x, y in zip(ga, gb)]


def gp_penalty_fd(critic, a_real, a_fake, u, r: float, h: float, gp_lambda: float = 1.0):
    """Penalty gp_lambda*(D - 1)^2 with D the FD directional derivative of the
    critic along the unit real-fake direction at the interpolate; returns
    (penalty, critic-parameter gradient of the penalty)."""
    if not 0.0 <= r <= 1.0:
        raise ValueError("interpolation r must lie in [0, 1]")
    av = a_real.values if isinstance(a_real, Field) else np.asarray(a_real)
    fv = a_fake.values if isinstance(a_fake, Field) else np.asarray(a_fake)
    uv = u.values if isinstance(u, Field) else np.asarray(u)
    direction = av - fv
    norm = _cw_norm(direction)
    if norm < 1e-14:
        raise ValueError("a_real and a_fake coincide: zero penalty direction")
    v = direction / norm
    a_hat = r * fv + (1.0 - r) * av
    h_eff = h * max(1.0, _cw_norm(a_hat))
    d_plus, g_plus = _critic_value_and_grad(critic, a_hat + h_eff * v, uv)
    d_minus, g_minus = _critic_value_and_grad(critic, a_hat - h_eff * v, uv)
    slope = (d_plus - d_minus) / (2.0 * h_eff)
    penalty = gp_lambda * (slope - 1.0) ** 2
    scale = gp_lambda * 2.0 * (slope - 1.0) / (2.0 * h_eff)
    grads = _grad_axpy(None, g_plus, scale, g_minus, -scale)
    return penalty, grads


# ---------------------------------------------------------------------------
# adversarial prior training


@dataclass
class PriorModel:
    generator: FnoParams
    critic: FnoParams
    q_channels: int = 1


@dataclass
class PriorResult:
    model: PriorModel
    curve: list[tuple[int, float, float]]  # (outer step, critic objective, gen loss)
    monotone_frac: float | None = None


def _critic_batch_grad(critic, a_real, a_fake, u, rs, cfg: TrainConfig, n_gp: int | None = None):
    """One critic minimization step's gradient over a batch, incl. the FD penalty
    evaluated on the first n_gp pairs (all pairs by default)."""
    b = a_real.shape[0]
    g = b if n_gp is None else min(n_gp, b)
    direction = a_real[:g] - a_fake[:g]
    norms = np.sqrt((direction * direction).sum(axis=(1, 2, 3)) / (a_real.shape[1] * a_real.shape[2]))
    norms = np.maximum(norms, 1e-14)
    v = direction / norms[:, None, None, None]
    r = rs[:g, None, None, None]
    a_hat = r * a_fake[:g] + (1.0 - r) * a_real[:g]
    hat_norms = np.sqrt((a_hat * a_hat).sum(axis=(1, 2, 3)) / (a_hat.shape[1] * a_hat.shape[2]))
    h_eff = cfg.gp_h * np.maximum(1.0, hat_norms)
    plus = a_hat + h_eff[:, None, None, None] * v
    minus = a_hat - h_eff[:, None, None, None] * v

    big = np.concatenate(
        [
            np.concatenate([a_real, u], axis=-1),
            np.concatenate([a_fake, u], axis=-1),
            np.concatenate([plus, u[:g]], axis=-1),
            np.concatenate([minus, u[:g]], axis=-1),
        ],
        axis=0,
    )
    y, tape = _forward(critic, big, want_tape=True)
    y_real, y_fake = y[:b], y[b : 2 * b]
    slope = (y[2 * b : 2 * b + g] - y[2 * b + g :]) / (2.0 * h_eff)
    penalty = cfg.gp_lambda * ((slope - 1.0) ** 2).mean()
    cot = np.empty(2 * b + 2 * g)
    cot[:b] = -1.0 / b
    cot[b : 2 * b] = 1.0 / b
    gp_scale = cfg.gp_lambda * 2.0 * (slope - 1.0) / (2.0 * h_eff) / g
    cot[2 * b : 2 * b + g] = gp_scale
    cot[2 * b + g :] = -gp_scale
    grads, _ = _vjp(critic, tape, cot)
    objective = float(y_real.mean() - y_fake.mean())
    return grads, objective, float(penalty)


def _gen_batch_grad(gen, critic, u, q):
    """Generator gradient of -mean(d(G(q,u), u)) chained through the critic input."""
    b = u.shape[0]
    gin = np.concatenate([q, u], axis=-1)
    fake, tape_g = _forward(gen, gin, want_tape=True)
    din = np.concatenate([fake, u], axis=-1)
    y, tape_d = _forward(critic, din, want_tape=True)
    _, d_in = _vjp(critic, tape_d, np.full(b, -1.0 / b))
    g_grads, _ = _vjp(gen, tape_g, d_in[..., : fake.shape[-1]])
    return g_grads, fake, float(-y.mean())


def train_prior(
    ds: Dataset,
    cfg: TrainConfig,
    gen_cfg: FnoConfig | None = None,
    critic_cfg: FnoConfig | None = None,
    probe_monotonicity: bool = False,
) -> PriorResult:
    a_tr, u_tr = ds.train_arrays()
    if a_tr.shape[0] == 0:
        raise ValueError("empty training set")
    a = ds.norm.normalize_a(a_tr)
    u = ds.norm.normalize_u(u_tr)
    ca, cu = a.shape[-1], u.shape[-1]
    if gen_cfg is None:
        gen_cfg = FnoConfig(in_channels=cfg.q_channels + cu, out_channels=ca)
    if critic_cfg is None:
        critic_cfg = FnoConfig(in_channels=ca + cu, out_channels=1, head="scalar")
    if critic_cfg.head != "scalar":
        raise ValueError("critic needs the scalar head")

    gen = init_params(gen_cfg, RngStream(cfg.seed, stream_id=10))
    critic = init_params(critic_cfg, RngStream(cfg.seed, stream_id=11))
    shuffle_rng = RngStream(cfg.seed, stream_id=12)
    q_rng = RngStream(cfg.seed, stream_id=13)
    r_rng = RngStream(cfg.seed, stream_id=14)

    n = a.shape[0]
    bsz = min(cfg.batch, n)
    outer_total = cfg.epochs * max(1, n // bsz)
    state_g = AdamState.init(gen)
    state_d = AdamState.init(critic)
    betas = cfg.adam_betas_adversarial

    probe_q = q_rng.standard_normal((bsz, a.shape[1], a.shape[2], cfg.q_channels))
    probe_idx = np.arange(bsz)

    def probe_objective():
        gin = np.concatenate([probe_q, u[probe_idx]], axis=-1)
        fake = _forward(gen, gin)
        y_r = _forward(critic, np.concatenate([a[probe_idx], u[probe_idx]], axis=-1))
        y_f = _forward(critic, np.concatenate([fake, u[probe_idx]], axis=-1))
        return float(y_r.mean() - y_f.mean())

    curve = []
    monotone_hits = 0
    d_step = g_step = 0
    for outer in range(1, outer_total + 1):
        inner_values = [probe_objective()] if probe_monotonicity else None
        obj = 0.0
        for _ in range(cfg.n_critic):
            idx = shuffle_rng.permutation(n)[:bsz]
            q = q_rng.standard_normal((bsz, a.shape[1], a.shape[2], cfg.q_channels))
            gin = np.concatenate([q, u[idx]], axis=-1)
            fake = _forward(gen, gin)
            rs = r_rng.uniform(0.0, 1.0, (bsz,))
            grads, obj, _ = _critic_batch_grad(critic, a[idx], fake, u[idx], rs, cfg, n_gp=max(2, bsz // 4))
            d_step += 1
            critic, state_d = adam_step(
                critic, grads, state_d, d_step, cfg, outer_total * cfg.n_critic, betas=betas
            )
            if probe_monotonicity:
                inner_values.append(probe_objective())
        if probe_monotonicity and all(
            b >= a_ - 1e-12 for a_, b in zip(inner_values, inner_values[1:])
        ):
            monotone_hits += 1
        idx = shuffle_rng.permutation(n)[:bsz]
        q = q_rng.standard_normal((bsz, a.shape[1], a.shape[2], cfg.q_channels))
        g_grads, _, g_loss = _gen_batch_grad(gen, critic, u[idx], q)
        g_step += 1
        gen, state_g = adam_step(gen, g_grads, state_g, g_step, cfg, outer_total, betas=betas)
        curve.append((outer, obj, g_loss))
    frac = monotone_hits / outer_total if probe_monotonicity else None
    return PriorResult(PriorModel(gen, critic, cfg.q_channels), curve, frac)


def sample_prior(model: PriorModel, u_norm: np.ndarray, rng: RngStream, n: int = 1) -> np.ndarray:
    """Draw n normalized designs G(q, u) for one normalized observation."""
    h, w = u_norm.shape[:2]
    q = rng.standard_normal((n, h, w, model.q_channels))
    gin = np.concatenate([q, np.broadcast_to(u_norm, (n,) + u_norm.shape)], axis=-1)
    return _forward(model.generator, gin)
