"""Fourier neural operator: forward evaluation and hand-derived reverse-mode gradients.

Architecture: pointwise lift of (input, x, y) to `width` channels, then `layers`
spectral blocks v <- act(Re(ifft2(R . trunc(fft2 v))) + v W + b), then two
pointwise linear projection maps width -> 128 -> out_channels.  The scalar head
takes the cell-weighted spatial mean of the output followed by a linear map to
one real.

Retained modes are the four corners of the full spectrum: frequencies
0..m-1 and -m..-1 per axis, with m clamped to floor(n/2) at evaluation time.
Outputs are exactly real because the inverse transform takes the real part,
i.e. the effective spectral weights are the Hermitian symmetrization of R.

Adjoint rules under the fixed convention (unnormalized forward fft, 1/N inverse):
for s = Re(ifft2(scatter(R . gather(fft2 v)))) with cotangent c,
    cot(R)  = fft2(c)|_modes . conj(fft2(v)|_modes) / N
    cot(v)  = Re(ifft2(scatter(fft2(c)|_modes . conj(R))))
(the 1/N and N factors of the two transforms cancel in cot(v)).

Both transforms run as real-to-complex halves: the negative-kx corners are
reconstructed from Hermitian symmetry after rfft2, and Re(ifft2(scatter(.)))
is evaluated as irfft2 of the Hermitian projection folded onto kx >= 0.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .fields import Field, Grid
from .rng import RngStream
from . import tensor_io

PROJ_HIDDEN = 128
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# configuration and parameters


@dataclass(frozen=True)
class FnoConfig:
    in_channels: int
    out_channels: int
    layers: int = 4
    width: int = 32
    modes: int = 25
    activation: str = "gelu"  # "gelu" | "identity"
    head: str = "field"  # "field" | "scalar"

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.layers, self.width, self.modes) < 1:
            raise ValueError("all FnoConfig sizes must be positive")
        if self.activation not in ("gelu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in ("field", "scalar"):
            raise ValueError(f"unknown head {self.head!r}")


@dataclass
class SpectralBlock:
    r: np.ndarray  # (2m, 2m, width, width) complex
    w: np.ndarray  # (width, width)
    b: np.ndarray  # (width,)


@dataclass
class FnoParams:
    config: FnoConfig
    lift_w: np.ndarray
    lift_b: np.ndarray
    blocks: list[SpectralBlock]
    proj1_w: np.ndarray
    proj1_b: np.ndarray
    proj2_w: np.ndarray
    proj2_b: np.ndarray
    head_w: np.ndarray | None = None
    head_b: np.ndarray | None = None

    def leaves(self) -> list[tuple[str, np.ndarray]]:
        out = [("lift_w", self.lift_w), ("lift_b", self.lift_b)]
        for i, blk in enumerate(self.blocks):
            out += [(f"block{i}.r", blk.r), (f"block{i}.w", blk.w), (f"block{i}.b", blk.b)]
        out += [
            ("proj1_w", self.proj1_w),
            ("proj1_b", self.proj1_b),
            ("proj2_w", self.proj2_w),
            ("proj2_b", self.proj2_b),
        ]
        if self.config.head == "scalar":
            out += [("head_w", self.head_w), ("head_b", self.head_b)]
        return out

    def copy(self) -> "FnoParams":
        return FnoParams(
            self.config,
            self.lift_w.copy(),
            self.lift_b.copy(),
            [SpectralBlock(b.r.copy(), b.w.copy(), b.b.copy()) for b in self.blocks],
            self.proj1_w.copy(),
            self.proj1_b.copy(),
            self.proj2_w.copy(),
            self.proj2_b.copy(),
            None if self.head_w is None else self.head_w.copy(),
            None if self.head_b is None else self.head_b.copy(),
        )

    def zeros_like(self) -> "FnoParams":
        z = self.copy()
        for _, arr in z.leaves():
            arr[...] = 0
        return z

    def n_scalars(self) -> int:
        return sum(a.size * (2 if np.iscomplexobj(a) else 1) for _, a in self.leaves())


def real_view(arr: np.ndarray) -> np.ndarray:
    """Flat float64 view; complex entries appear as (re, im) pairs."""
    if np.iscomplexobj(arr):
        return arr.view(np.float64).reshape(-1)
    return arr.reshape(-1)


def init_params(cfg: FnoConfig, rng: RngStream) -> FnoParams:
    def linear(fan_in, fan_out):
        s = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-s, s, (fan_in, fan_out)), rng.uniform(-s, s, (fan_out,))

    w = cfg.width
    lift_w, lift_b = linear(cfg.in_channels + 2, w)
    blocks = []
    r_scale = 1.0 / (w * w)
    for _ in range(cfg.layers):
        m2 = 2 * cfg.modes
        r = r_scale * (rng.standard_normal((m2, m2, w, w)) + 1j * rng.standard_normal((m2, m2, w, w)))
        ww, wb = linear(w, w)
        blocks.append(SpectralBlock(r, ww, wb))
    proj1_w, proj1_b = linear(w, PROJ_HIDDEN)
    proj2_w, proj2_b = linear(PROJ_HIDDEN, cfg.out_channels)
    head_w = head_b = None
    if cfg.head == "scalar":
        head_w = rng.uniform(-1.0, 1.0, (cfg.out_channels,)) / math.sqrt(cfg.out_channels)
        head_b = rng.uniform(-1.0, 1.0, ())
    return FnoParams(cfg, lift_w, lift_b, blocks, proj1_w, proj1_b, proj2_w, proj2_b, head_w, head_b)


# ---------------------------------------------------------------------------
# activations (phi = Gaussian cdf term, cached on the tape for the backward pass)


def _act_and_phi(cfg: FnoConfig, x: np.ndarray):
    if cfg.activation == "identity":
        return x, None
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * phi, phi


def _act_deriv_from_phi(cfg: FnoConfig, x: np.ndarray, phi) -> np.ndarray:
    if cfg.activation == "identity":
        return np.ones_like(x)
    return phi + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


# ---------------------------------------------------------------------------
# spectral corner gather/scatter via the real-to-complex half spectrum


def _mode_index(n: int, m: int) -> np.ndarray:
    return np.r_[0:m, n - m : n]


def _storage_index(modes: int, m_eff: int) -> np.ndarray:
    return np.r_[0:m_eff, 2 * modes - m_eff : 2 * modes]


def effective_modes(cfg: FnoConfig, h: int, w: int) -> int:
    return min(cfg.modes, h // 2, w // 2)


def _coords(h: int, w: int) -> np.ndarray:
    gx = (np.arange(w) / w)[None, :].repeat(h, axis=0)
    gy = (np.arange(h) / h)[:, None].repeat(w, axis=1)
    return np.stack([gx, gy], axis=-1)


class _CornerIndex:
    """Index bookkeeping for the retained corners at one (H, W, m)."""

    def __init__(self, h: int, w: int, m: int):
        self.h, self.w, self.m = h, w, m
        self.rows = _mode_index(h, m)
        self.mirror_rows = (h - self.rows) % h
        self.cols_desc = np.arange(m, 0, -1)  # half-spectrum cols for the -kx corner


def _gather_corners(ci: _CornerIndex, x_half: np.ndarray) -> np.ndarray:
    """Full-spectrum corner block (B, 2m, 2m, C) of a real field from its rfft2."""
    a = x_half[:, ci.rows[:, None], np.arange(ci.m)[None, :], :]
    b = x_half[:, ci.mirror_rows[:, None], ci.cols_desc[None, :], :].conj()
    return np.concatenate([a, b], axis=2)


def _scatter_corners_irfft(ci: _CornerIndex, yc: np.ndarray) -> np.ndarray:
    """Re(ifft2(scatter(yc))) computed as irfft2 of the Hermitian fold of yc."""
    b_sz, _, _, c = yc.shape
    m, h, w = ci.m, ci.h, ci.w
    z = np.zeros((b_sz, h, w // 2 + 1, c), dtype=np.complex128)
    z[:, ci.rows[:, None], np.arange(m)[None, :], :] = 0.5 * yc[:, :, :m, :]
    z[:, ci.mirror_rows[:, None], ci.cols_desc[None, :], :] += 0.5 * yc[:, :, m:, :].conj()
    z[:, ci.mirror_rows, 0, :] += 0.5 * yc[:, :, 0, :].conj()
    if 2 * m == w:  # -kx corner sits on the Nyquist column: keep its direct term too
        z[:, ci.rows, m, :] += 0.5 * yc[:, :, m, :]
    return np.fft.irfft2(z, s=(h, w), axes=(1, 2))


def _spectral_apply(r_eff: np.ndarray, xc: np.ndarray) -> np.ndarray:
    # xc (B, M, M, i), r_eff (M, M, i, o) -> (B, M, M, o)
    b_sz, m1, m2, ci = xc.shape
    xm = xc.transpose(1, 2, 0, 3).reshape(m1 * m2, b_sz, ci)
    ym = xm @ r_eff.reshape(m1 * m2, ci, -1)
    return ym.reshape(m1, m2, b_sz, -1).transpose(2, 0, 1, 3)


# ---------------------------------------------------------------------------
# forward / vjp on raw batched arrays (B, H, W, C)


class _Tape:
    __slots__ = ("aug", "block_in", "block_xc", "block_t", "block_phi", "proj_in", "h1", "pooled", "shape")


def _forward(params: FnoParams, x: np.ndarray, want_tape: bool = False):
    """x: (B, H, W, Cin) -> (B, H, W, Cout) or (B,) for the scalar head."""
    cfg = params.config
    b_sz, h, w, cin = x.shape
    if cin != cfg.in_channels:
        raise ValueError(f"input has {cin} channels, model expects {cfg.in_channels}")
    m_eff = effective_modes(cfg, h, w)
    ci = _CornerIndex(h, w, m_eff)
    sidx = _storage_index(cfg.modes, m_eff)

    tape = _Tape() if want_tape else None
    aug = np.concatenate([x, np.broadcast_to(_coords(h, w), (b_sz, h, w, 2))], axis=-1)
    v = aug @ params.lift_w + params.lift_b
    if want_tape:
        tape.aug = aug
        tape.block_in, tape.block_xc, tape.block_t, tape.block_phi = [], [], [], []
        tape.shape = (b_sz, h, w)

    for blk in params.blocks:
        r_eff = blk.r[np.ix_(sidx, sidx)]
        xc = _gather_corners(ci, np.fft.rfft2(v, axes=(1, 2)))
        s = _scatter_corners_irfft(ci, _spectral_apply(r_eff, xc))
        t = v @ blk.w + blk.b + s
        out_v, phi = _act_and_phi(cfg, t)
        if want_tape:
            tape.block_in.append(v)
            tape.block_xc.append(xc)
            tape.block_t.append(t)
            tape.block_phi.append(phi)
        v = out_v

    if cfg.head == "scalar":
        # affine projections commute with the cell-weighted mean: pool first
        vp = v.mean(axis=(1, 2))
        h1 = vp @ params.proj1_w + params.proj1_b
        pooled = h1 @ params.proj2_w + params.proj2_b
        y = pooled @ params.head_w + params.head_b
        if want_tape:
            tape.proj_in = vp
            tape.h1 = h1
            tape.pooled = pooled
            return y, tape
        return y
    h1 = v @ params.proj1_w + params.proj1_b
    out = h1 @ params.proj2_w + params.proj2_b
    if want_tape:
        tape.proj_in = v
        tape.h1 = h1
        return out, tape
    return out


def _vjp(params: FnoParams, tape: _Tape, cot) -> tuple[FnoParams, np.ndarray]:
    """Reverse pass; cot matches the forward output shape."""
    cfg = params.config
    b_sz, h, w = tape.shape
    n_cells = h * w
    m_eff = effective_modes(cfg, h, w)
    ci = _CornerIndex(h, w, m_eff)
    sidx = _storage_index(cfg.modes, m_eff)
    grads = params.zeros_like()

    flat = lambda a: a.reshape(-1, a.shape[-1])
    if cfg.head == "scalar":
        cy = np.asarray(cot, dtype=np.float64).reshape(b_sz)
        grads.head_w[...] = cy @ tape.pooled
        grads.head_b[...] = cy.sum()
        d_pooled = cy[:, None] * params.head_w[None, :]
        grads.proj2_w[...] = tape.h1.T @ d_pooled
        grads.proj2_b[...] = d_pooled.sum(axis=0)
        d_h1 = d_pooled @ params.proj2_w.T
        grads.proj1_w[...] = tape.proj_in.T @ d_h1
        grads.proj1_b[...] = d_h1.sum(axis=0)
        d_vp = d_h1 @ params.proj1_w.T
        d_v = np.broadcast_to(d_vp[:, None, None, :] / n_cells, (b_sz, h, w, d_vp.shape[-1])).copy()
    else:
        d_out = np.asarray(cot, dtype=np.float64)
        grads.proj2_w[...] = flat(tape.h1).T @ flat(d_out)
        grads.proj2_b[...] = flat(d_out).sum(axis=0)
        d_h1 = d_out @ params.proj2_w.T
        grads.proj1_w[...] = flat(tape.proj_in).T @ flat(d_h1)
        grads.proj1_b[...] = flat(d_h1).sum(axis=0)
        d_v = d_h1 @ params.proj1_w.T

    for i in range(len(params.blocks) - 1, -1, -1):
        blk, gblk = params.blocks[i], grads.blocks[i]
        d_t = d_v * _act_deriv_from_phi(cfg, tape.block_t[i], tape.block_phi[i])
        v_in = tape.block_in[i]
        gblk.w[...] = flat(v_in).T @ flat(d_t)
        gblk.b[...] = flat(d_t).sum(axis=0)
        d_v = d_t @ blk.w.T
        # spectral path adjoint
        zc = _gather_corners(ci, np.fft.rfft2(d_t, axes=(1, 2)))
        xc = tape.block_xc[i]
        m1 = 2 * m_eff
        zm = zc.transpose(1, 2, 0, 3).reshape(m1 * m1, b_sz, -1)
        xm_h = xc.conj().transpose(1, 2, 3, 0).reshape(m1 * m1, xc.shape[-1], b_sz)
        r_grad = (xm_h @ zm).reshape(m1, m1, xc.shape[-1], -1) / n_cells
        gblk.r[np.ix_(sidx, sidx)] = r_grad
        r_eff = blk.r[np.ix_(sidx, sidx)]
        d_xc = _spectral_apply(r_eff.conj().transpose(0, 1, 3, 2), zc)
        d_v = d_v + _scatter_corners_irfft(ci, d_xc)

    grads.lift_w[...] = flat(tape.aug).T @ flat(d_v)
    grads.lift_b[...] = flat(d_v).sum(axis=0)
    d_aug = d_v @ params.lift_w.T
    return grads, np.ascontiguousarray(d_aug[..., : cfg.in_channels])


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class SquaredL2Loss:
    """Cell-weighted squared distance: sum((out - target)^2) / (nx*ny)."""

    target: np.ndarray
    weight: float = 1.0


@dataclass(frozen=True)
class HeadLoss:
    """The scalar-head output itself (times weight)."""

    weight: float = 1.0


@dataclass(frozen=True)
class SumLoss:
    terms: tuple

    def __init__(self, terms):
        object.__setattr__(self, "terms", tuple(terms))


LossSpec = SquaredL2Loss | HeadLoss | SumLoss


def _loss_terms(loss: LossSpec):
    if isinstance(loss, SumLoss):
        for t in loss.terms:
            if isinstance(t, SumLoss):
                raise ValueError("nested SumLoss is not supported")
            yield t
    else:
        yield loss


def loss_value_and_cotangent(cfg: FnoConfig, loss: LossSpec, out: np.ndarray):
    """Loss of a single sample's output; returns (value, cotangent of out)."""
    value = 0.0
    cot = np.zeros_like(out, dtype=np.float64)
    for term in _loss_terms(loss):
        if isinstance(term, SquaredL2Loss):
            if cfg.head != "field":
                raise ValueError("SquaredL2Loss requires a field head")
            tgt = term.target.values if isinstance(term.target, Field) else np.asarray(term.target)
            if tgt.shape != out.shape[1:]:
                raise ValueError(f"target shape {tgt.shape} does not match output {out.shape[1:]}")
            n_cells = out.shape[1] * out.shape[2]
            diff = out - tgt[None]
            value += term.weight * float((diff * diff).sum()) / n_cells
            cot += term.weight * 2.0 * diff / n_cells
        elif isinstance(term, HeadLoss):
            if cfg.head != "scalar":
                raise ValueError("HeadLoss requires a scalar head")
            value += term.weight * float(out.sum())
            cot += term.weight
        else:
            raise ValueError(f"unsupported loss term {term!r}")
    return value, cot


# ---------------------------------------------------------------------------
# public operations


@dataclass
class GradientBundle:
    d_params: FnoParams
    d_input: np.ndarray
    loss_value: float


def fno_forward(params: FnoParams, f: Field):
    """Evaluate the operator on one field; returns a Field, or a float for the scalar head."""
    f.grid.require_periodic("fno_forward")
    out = _forward(params, f.values[None])
    if params.config.head == "scalar":
        return float(out[0])
    return Field(f.grid, out[0])


def fno_grad(params: FnoParams, f: Field, loss: LossSpec) -> GradientBundle:
    f.grid.require_periodic("fno_grad")
    out, tape = _forward(params, f.values[None], want_tape=True)
    value, cot = loss_value_and_cotangent(params.config, loss, out)
    d_params, d_input = _vjp(params, tape, cot)
    return GradientBundle(d_params, d_input[0], value)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    n_checked: int
    worst: str

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"grad-check {status}: max rel err {self.max_rel_err:.3e} over {self.n_checked} coords (worst: {self.worst})"


def compare_gradients(analytic, fd, names, tolerance: float, atol: float = 1e-8) -> GradCheckReport:
    floor = atol / tolerance
    max_rel, worst = 0.0, "none"
    n = 0
    for a, f, name in zip(analytic, fd, names):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        rel = np.abs(a - f) / denom
        n += rel.size
        idx = int(np.argmax(rel))
        if rel.flat[idx] > max_rel:
            max_rel = float(rel.flat[idx])
            worst = f"{name}[{idx}]"
    return GradCheckReport(max_rel <= tolerance, max_rel, n, worst)


def grad_check(
    params: FnoParams,
    f: Field,
    loss: LossSpec,
    epsilon: float = 1e-5,
    tolerance: float = 1e-5,
    max_coords: int = 2000,
    rng: RngStream | None = None,
    atol: float = 1e-8,
) -> GradCheckReport:
    """Compare fno_grad against central finite differences on sampled coordinates."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    bundle = fno_grad(params, f, loss)

    work = params.copy()
    x = f.values.copy()
    grid = f.grid

    def eval_loss():
        out = _forward(work, x[None])
        return loss_value_and_cotangent(params.config, loss, out)[0]

    views = [(name, real_view(arr)) for name, arr in work.leaves()]
    views.append(("input", x.reshape(-1)))
    a_views = [real_view(arr) for _, arr in bundle.d_params.leaves()]
    a_views.append(bundle.d_input.reshape(-1))

    coords = [(i, j) for i, (_, v) in enumerate(views) for j in range(v.size)]
    if len(coords) > max_coords:
        rng = rng or RngStream(0, stream_id=97)
        pick = rng.permutation(len(coords))[:max_coords]
        coords = [coords[int(k)] for k in pick]

    analytic, fd, names = [], [], []
    for leaf_i, j in coords:
        name, v = views[leaf_i]
        old = v[j]
        v[j] = old + epsilon
        lp = eval_loss()
        v[j] = old - epsilon
        lm = eval_loss()
        v[j] = old
        fd.append(np.array([(lp - lm) / (2.0 * epsilon)]))
        analytic.append(np.array([a_views[leaf_i][j]]))
        names.append(f"{name}:{j}")
    _ = grid
    return compare_gradients(analytic, fd, names, tolerance, atol)


# ---------------------------------------------------------------------------
# serialization: tensor files plus a JSON config sidecar


def save_fno(dirpath, params: FnoParams, extra: dict | None = None) -> None:
    os.makedirs(dirpath, exist_ok=True)
    meta = {"config": params.config.__dict__, "extra": extra or {}}
    with open(os.path.join(dirpath, "config.json"), "w") as fh:
        json.dump(meta, fh, indent=1, default=float)
    for name, arr in params.leaves():
        path = os.path.join(dirpath, name.replace(".", "_") + ".dgpt")
        if np.iscomplexobj(arr):
            tensor_io.write_complex_array(path, arr)
        else:
            tensor_io.write_array(path, np.atleast_1d(arr))


def load_fno(dirpath) -> tuple[FnoParams, dict]:
    with open(os.path.join(dirpath, "config.json")) as fh:
        meta = json.load(fh)
    cfg = FnoConfig(**{k: v for k, v in meta["config"].items()})
    params = init_params(cfg, RngStream(0))
    for name, arr in params.leaves():
        path = os.path.join(dirpath, name.replace(".", "_") + ".dgpt")
        if np.iscomplexobj(arr):
            loaded = tensor_io.read_complex_array(path)
        else:
            loaded = tensor_io.read_array(path).reshape(arr.shape)
        arr[...] = loaded.reshape(arr.shape)
    return params, meta["extra"]
