"""Subcommand front-end: dataset generation, training, inversion, evaluation,
diagnostics, and PGM heatmap rendering.

Exit codes: 0 success, 1 usage error, 2 runtime error.  `--config <path>` loads
a JSON experiment config; individual flags override its values.  DGP_SEED in
the environment overrides the seed.  Progress goes to stderr; results go to
files, and every subcommand echoes its resolved configuration into the output
directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data as data_mod
from . import tensor_io
from .data import Dataset, Normalization, Task, load_dataset, save_dataset
from .fields import Field
from .fno import FnoConfig, HeadLoss, SquaredL2Loss, grad_check, init_params, load_fno, save_fno
from .inverse import InverseConfig, bound_diagnostics, run_inverse
from .mala import mala_chain
from .metrics import EpeConfig, EvalRecord, epe_violations, max_error, relative_error, write_report
from .rng import RngStream
from .solvers import LithoConfig
from .training import TrainConfig, train_prior, train_surrogate


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


SUBCOMMANDS = (
    "gen-darcy",
    "gen-ns",
    "gen-litho",
    "train-surrogate",
    "train-prior",
    "invert",
    "mcmc",
    "eval",
    "diag-bound",
    "grad-check",
    "render",
)


def render_pgm(f, path, value_range=None) -> None:
    """8-bit binary PGM; values map linearly from [lo, hi] to [0, 255] with
    clamping and round-half-up; a degenerate range renders mid-gray 128."""
    vals = f.values if isinstance(f, Field) else np.asarray(f, dtype=np.float64)
    if vals.ndim == 3:
        if vals.shape[2] != 1:
            raise ValueError("render_pgm takes a single-channel field")
        vals = vals[:, :, 0]
    lo, hi = value_range if value_range is not None else (float(vals.min()), float(vals.max()))
    if lo == hi:
        pix = np.full(vals.shape, 128, dtype=np.uint8)
    else:
        unit = np.clip((vals - lo) / (hi - lo), 0.0, 1.0)
        pix = np.clip(np.floor(unit * 255.0 + 0.5), 0, 255).astype(np.uint8)
    header = f"P5\n{vals.shape[1]} {vals.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pix.tobytes())


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _merged(args, config: dict, section: str, key: str, default):
    """Flag > config[section][key] > default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    return config.get(section, {}).get(key, default)


def _resolve_seed(args, config) -> int:
    env = os.environ.get("DGP_SEED")
    if env is not None:
        return int(env)
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(config.get("seed", 0))


def _echo_config(out_dir, resolved: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
        json.dump(resolved, fh, indent=1, sort_keys=True, default=str)


def _log(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_gen(ns, config, task: Task) -> int:
    section = "darcy" if task in (Task.DARCY_CLIPPED, Task.DARCY_CONTINUOUS) else task.value
    kw = dict(
        n_train=_merged(ns, config, section, "n_train", 100),
        n_test=_merged(ns, config, section, "n_test", 10),
        resolution=_merged(ns, config, section, "resolution", 32),
        seed=_resolve_seed(ns, config),
    )
    if task is Task.NS2D:
        kw.update(
            nu=_merged(ns, config, "ns", "nu", 1e-2),
            T=_merged(ns, config, "ns", "T", 2.0),
            dt=_merged(ns, config, "ns", "dt", 1e-3),
            n_snapshots=_merged(ns, config, "ns", "n_snapshots", 10),
        )
    if task is Task.LITHO_TOY:
        kw["litho"] = LithoConfig(
            sigma_optical=_merged(ns, config, "litho", "sigma_optical", 2.0),
            sigma_resist=_merged(ns, config, "litho", "sigma_resist", 1.0),
            tau_resist=_merged(ns, config, "litho", "tau_resist", 0.4),
            beta=_merged(ns, config, "litho", "beta", 0.05),
        )
    _log(f"generating {task.value}: {kw['n_train']}+{kw['n_test']} samples at {kw['resolution']}^2")
    ds = data_mod.generate(task, **kw)
    save_dataset(ns.out, ds)
    _echo_config(ns.out, {"command": f"gen-{task.value}", **{k: v for k, v in kw.items() if k != "litho"}})
    return 0


def _train_cfg(ns, config) -> TrainConfig:
    return TrainConfig(
        epochs=_merged(ns, config, "train", "epochs", 20),
        batch=_merged(ns, config, "train", "batch", 16),
        lr0=_merged(ns, config, "train", "lr0", 1e-3),
        seed=_resolve_seed(ns, config),
        n_critic=_merged(ns, config, "train", "n_critic", 5),
        gp_lambda=_merged(ns, config, "train", "gp_lambda", 10.0),
        gp_h=_merged(ns, config, "train", "gp_h", 1e-3),
        q_channels=_merged(ns, config, "train", "q_channels", 1),
    )


def _arch(ns, config, ds: Dataset, role: str) -> FnoConfig:
    width = _merged(ns, config, "train", "width", 16)
    layers = _merged(ns, config, "train", "layers", 4)
    modes = _merged(ns, config, "train", "modes", 12)
    ca, cu = ds.a.shape[-1], ds.u.shape[-1]
    qc = _merged(ns, config, "train", "q_channels", 1)
    if role == "surrogate":
        return FnoConfig(ca, cu, layers=layers, width=width, modes=modes)
    if role == "generator":
        return FnoConfig(qc + cu, ca, layers=layers, width=width, modes=modes)
    return FnoConfig(ca + cu, 1, layers=max(2, layers - 1), width=width, modes=modes, head="scalar")


def _write_curve(path, rows, header) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def _cmd_train_surrogate(ns, config) -> int:
    ds = load_dataset(ns.data)
    cfg = _train_cfg(ns, config)
    _log(f"training surrogate on {ds.task.value} ({ds.n_train} samples)")
    result = train_surrogate(ds, cfg, _arch(ns, config, ds, "surrogate"))
    save_fno(ns.out, result.params, extra={"normalization": ds.norm.to_dict(), "task": ds.task.value})
    _write_curve(os.path.join(ns.out, "training_curve.csv"), result.curve, "step,loss,lr")
    _echo_config(ns.out, {"command": "train-surrogate", "train": cfg.__dict__, "data": str(ns.data)})
    _log(f"surrogate relative L2: init {result.initial_loss:.4f} -> final {result.final_loss:.4f}")
    return 0


def _cmd_train_prior(ns, config) -> int:
    ds = load_dataset(ns.data)
    cfg = _train_cfg(ns, config)
    _log(f"training prior on {ds.task.value} ({ds.n_train} samples)")
    result = train_prior(ds, cfg, _arch(ns, config, ds, "generator"), _arch(ns, config, ds, "critic"))
    save_fno(
        os.path.join(ns.out, "generator"),
        result.model.generator,
        extra={"normalization": ds.norm.to_dict(), "q_channels": cfg.q_channels, "task": ds.task.value},
    )
    save_fno(os.path.join(ns.out, "critic"), result.model.critic, extra={})
    _write_curve(os.path.join(ns.out, "training_curve.csv"), result.curve, "outer_step,critic_objective,gen_loss")
    _echo_config(ns.out, {"command": "train-prior", "train": cfg.__dict__, "data": str(ns.data)})
    return 0


def _load_models(ns):
    surrogate, extra_f = load_fno(ns.surrogate)
    norm = Normalization.from_dict(extra_f["normalization"])
    generator = None
    q_channels = 1
    if getattr(ns, "prior", None):
        generator, extra_g = load_fno(os.path.join(ns.prior, "generator"))
        q_channels = int(extra_g.get("q_channels", 1))
    return surrogate, generator, norm, q_channels


def _load_target(ns) -> Field:
    if ns.target:
        return tensor_io.read_tensor(ns.target)
    if not ns.data:
        raise UsageError("need --target or --data")
    ds = load_dataset(ns.data)
    _, u_test = ds.test_arrays()
    return Field(ds.grid(), u_test[ns.test_index])


def _cmd_invert(ns, config) -> int:
    surrogate, generator, norm, _ = _load_models(ns)
    try:
        cfg = InverseConfig(
            gamma=_merged(ns, config, "inverse", "gamma", 0.01),
            l2_lambda=_merged(ns, config, "inverse", "l2_lambda", 1e-2),
            steps=_merged(ns, config, "inverse", "steps", 100),
            mode=_merged(ns, config, "inverse", "mode", "map"),
            variant=_merged(ns, config, "inverse", "variant", "with_prior"),
            n_samples=_merged(ns, config, "inverse", "n_samples", 1),
            burn_in=_merged(ns, config, "inverse", "burn_in", 0),
            thinning=_merged(ns, config, "inverse", "thinning", 1),
            seed=_resolve_seed(ns, config),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    u_star = _load_target(ns)
    _log(f"inverting ({cfg.variant}, {cfg.mode}, {cfg.steps} steps)")
    candidates = run_inverse(u_star, surrogate, generator, cfg, norm)
    os.makedirs(ns.out, exist_ok=True)
    results = []
    for i, cand in enumerate(candidates):
        name = f"candidate_{i:03d}.dgpt"
        tensor_io.write_tensor(os.path.join(ns.out, name), cand.a)
        results.append({"file": name, "surrogate_loss": cand.surrogate_loss})
    with open(os.path.join(ns.out, "results.json"), "w") as fh:
        json.dump(results, fh, indent=1)
    _echo_config(ns.out, {"command": "invert", "inverse": cfg.__dict__})
    return 0


def _cmd_mcmc(ns, config) -> int:
    surrogate, generator, norm, _ = _load_models(ns)
    if generator is None:
        raise UsageError("mcmc requires --prior")
    u_star = _load_target(ns)
    seed = _resolve_seed(ns, config)
    obs_sigma = _merged(ns, config, "mcmc", "obs_sigma", None)
    if obs_sigma is None:
        obs_sigma = 0.01 * float(np.sqrt((u_star.values**2).mean()))
    step_size = _merged(ns, config, "mcmc", "step_size", 1e-3)
    n_steps = _merged(ns, config, "mcmc", "n_steps", 2000)
    burn_in = _merged(ns, config, "mcmc", "burn_in", 500)
    _log(f"MALA chain: {n_steps} steps, burn-in {burn_in}, obs_sigma {obs_sigma:.4g}")
    result = mala_chain(
        u_star, surrogate, generator, obs_sigma, step_size, n_steps, burn_in, RngStream(seed, stream_id=3), norm
    )
    os.makedirs(ns.out, exist_ok=True)
    tensor_io.write_tensor(os.path.join(ns.out, "posterior_mean.dgpt"), result.mean_design)
    with open(os.path.join(ns.out, "results.json"), "w") as fh:
        json.dump(
            {"acceptance_rate": result.acceptance_rate, "n_nonfinite": result.n_nonfinite, "n_samples": int(result.designs.shape[0])},
            fh,
            indent=1,
        )
    _echo_config(ns.out, {"command": "mcmc", "obs_sigma": obs_sigma, "step_size": step_size, "n_steps": n_steps, "burn_in": burn_in, "seed": seed})
    return 0


def _cmd_eval(ns, config) -> int:
    from .experiments import true_forward_fn

    ds = load_dataset(ns.data)
    true_fn = true_forward_fn(ds)
    _, u_test = ds.test_arrays()
    u_star = u_test[ns.test_index]
    records = []
    for fname in sorted(os.listdir(ns.candidates)):
        if not fname.endswith(".dgpt") or not fname.startswith("candidate"):
            continue
        cand = tensor_io.read_array(os.path.join(ns.candidates, fname))
        u_pred = true_fn(cand)
        records.append(
            EvalRecord(
                ds.task.value,
                _merged(ns, config, "eval", "method", "candidate"),
                _resolve_seed(ns, config),
                relative_error(u_pred, u_star),
                max_error(u_pred, u_star),
                0.0,
            )
        )
    if not records:
        raise UsageError(f"no candidate tensors found in {ns.candidates}")
    os.makedirs(ns.out, exist_ok=True)
    write_report(records, os.path.join(ns.out, "report.csv"))
    _echo_config(ns.out, {"command": "eval", "candidates": str(ns.candidates), "test_index": ns.test_index})
    return 0


def _cmd_diag_bound(ns, config) -> int:
    from .experiments import true_forward_fn
    from .fno import _forward

    surrogate, generator, norm, q_channels = _load_models(ns)
    if generator is None:
        raise UsageError("diag-bound requires --prior")
    ds = load_dataset(ns.data)
    true_fn = true_forward_fn(ds)
    a_test, u_test = ds.test_arrays()
    u_star = u_test[ns.test_index]
    a_ref = a_test[ns.test_index]
    u_norm = ds.norm.normalize_u(u_star)

    def surrogate_fn(a):
        return ds.norm.denormalize_u(_forward(surrogate, ds.norm.normalize_a(a)[None]))[0]

    def sample_fn(rng):
        q = rng.standard_normal(u_norm.shape[:2] + (q_channels,))
        gin = np.concatenate([q, u_norm], axis=-1)[None]
        return ds.norm.denormalize_a(_forward(generator, gin))[0]

    diag = bound_diagnostics(
        true_fn, surrogate_fn, sample_fn, u_star, a_ref=a_ref, candidate=a_ref,
        n_probes=_merged(ns, config, "diag", "n_probes", 8), rng=RngStream(_resolve_seed(ns, config), stream_id=7),
    )
    os.makedirs(ns.out, exist_ok=True)
    with open(os.path.join(ns.out, "bound_diagnostics.json"), "w") as fh:
        json.dump(diag.__dict__, fh, indent=1)
    _echo_config(ns.out, {"command": "diag-bound", "test_index": ns.test_index})
    return 0


def _cmd_grad_check(ns, config) -> int:
    seed = _resolve_seed(ns, config)
    rng = RngStream(seed, stream_id=5)
    n = _merged(ns, config, "gradcheck", "grid", 8)
    cfg = FnoConfig(
        in_channels=1,
        out_channels=1,
        layers=_merged(ns, config, "gradcheck", "layers", 2),
        width=_merged(ns, config, "gradcheck", "width", 4),
        modes=_merged(ns, config, "gradcheck", "modes", 3),
        head="scalar" if ns.scalar_head else "field",
    )
    params = init_params(cfg, rng)
    from .fields import Grid

    f = Field(Grid(n, n), rng.standard_normal((n, n, 1)))
    loss = HeadLoss() if ns.scalar_head else SquaredL2Loss(rng.standard_normal((n, n, 1)))
    report = grad_check(params, f, loss, epsilon=ns.epsilon, tolerance=ns.tolerance, max_coords=ns.max_coords)
    _log(str(report))
    return 0 if report.passed else 2


def _cmd_render(ns, config) -> int:
    f = tensor_io.read_tensor(ns.input)
    if f.channels > 1:
        f = Field(f.grid, f.values[:, :, ns.channel : ns.channel + 1])
    value_range = None
    if ns.lo is not None or ns.hi is not None:
        if ns.lo is None or ns.hi is None:
            raise UsageError("--lo and --hi must be given together")
        value_range = (ns.lo, ns.hi)
    render_pgm(f, ns.output, value_range)
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    p = _Parser(prog="dgp", description="Neural-operator inverse design with deep generative priors")
    p.add_argument("--config", default=None, help="JSON experiment config")
    sub = p.add_subparsers(dest="command")

    def add(name, **kw):
        sp = sub.add_parser(name, **kw)
        sp.add_argument("--seed", type=int, default=None)
        return sp

    for name in ("gen-darcy", "gen-ns", "gen-litho"):
        sp = add(name)
        sp.add_argument("--out", required=True)
        sp.add_argument("--n-train", dest="n_train", type=int, default=None)
        sp.add_argument("--n-test", dest="n_test", type=int, default=None)
        sp.add_argument("--resolution", type=int, default=None)
        if name == "gen-darcy":
            sp.add_argument("--psi", choices=("clip", "exp"), default="clip")
        if name == "gen-ns":
            sp.add_argument("--nu", type=float, default=None)
            sp.add_argument("--time", dest="T", type=float, default=None)
            sp.add_argument("--dt", type=float, default=None)
            sp.add_argument("--n-snapshots", dest="n_snapshots", type=int, default=None)

    for name in ("train-surrogate", "train-prior"):
        sp = add(name)
        sp.add_argument("--data", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--epochs", type=int, default=None)
        sp.add_argument("--batch", type=int, default=None)
        sp.add_argument("--lr0", type=float, default=None)
        sp.add_argument("--width", type=int, default=None)
        sp.add_argument("--layers", type=int, default=None)
        sp.add_argument("--modes", type=int, default=None)
        if name == "train-prior":
            sp.add_argument("--n-critic", dest="n_critic", type=int, default=None)
            sp.add_argument("--gp-lambda", dest="gp_lambda", type=float, default=None)
            sp.add_argument("--q-channels", dest="q_channels", type=int, default=None)

    sp = add("invert")
    sp.add_argument("--surrogate", required=True)
    sp.add_argument("--prior", default=None)
    sp.add_argument("--data", default=None)
    sp.add_argument("--target", default=None)
    sp.add_argument("--test-index", dest="test_index", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--variant", choices=("with-prior", "no-prior-random", "no-prior-condition", "prior-only"), default=None)
    sp.add_argument("--mode", choices=("map", "posterior"), default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--l2-lambda", dest="l2_lambda", type=float, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    sp.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    sp.add_argument("--thinning", type=int, default=None)

    sp = add("mcmc")
    sp.add_argument("--surrogate", required=True)
    sp.add_argument("--prior", required=True)
    sp.add_argument("--data", default=None)
    sp.add_argument("--target", default=None)
    sp.add_argument("--test-index", dest="test_index", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--obs-sigma", dest="obs_sigma", type=float, default=None)
    sp.add_argument("--step-size", dest="step_size", type=float, default=None)
    sp.add_argument("--n-steps", dest="n_steps", type=int, default=None)
    sp.add_argument("--burn-in", dest="burn_in", type=int, default=None)

    sp = add("eval")
    sp.add_argument("--data", required=True)
    sp.add_argument("--candidates", required=True)
    sp.add_argument("--test-index", dest="test_index", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--method", default=None)

    sp = add("diag-bound")
    sp.add_argument("--surrogate", required=True)
    sp.add_argument("--prior", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--test-index", dest="test_index", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("grad-check")
    sp.add_argument("--grid", type=int, default=None)
    sp.add_argument("--width", type=int, default=None)
    sp.add_argument("--layers", type=int, default=None)
    sp.add_argument("--modes", type=int, default=None)
    sp.add_argument("--epsilon", type=float, default=1e-5)
    sp.add_argument("--tolerance", type=float, default=1e-5)
    sp.add_argument("--max-coords", dest="max_coords", type=int, default=500)
    sp.add_argument("--scalar-head", dest="scalar_head", action="store_true")

    sp = add("render")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--lo", type=float, default=None)
    sp.add_argument("--hi", type=float, default=None)
    sp.add_argument("--channel", type=int, default=0)
    return p


_HANDLERS = {
    "gen-darcy": lambda ns, cfg: _cmd_gen(ns, cfg, Task.DARCY_CLIPPED if ns.psi == "clip" else Task.DARCY_CONTINUOUS),
    "gen-ns": lambda ns, cfg: _cmd_gen(ns, cfg, Task.NS2D),
    "gen-litho": lambda ns, cfg: _cmd_gen(ns, cfg, Task.LITHO_TOY),
    "train-surrogate": _cmd_train_surrogate,
    "train-prior": _cmd_train_prior,
    "invert": _cmd_invert,
    "mcmc": _cmd_mcmc,
    "eval": _cmd_eval,
    "diag-bound": _cmd_diag_bound,
    "grad-check": _cmd_grad_check,
    "render": _cmd_render,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError(f"missing subcommand; expected one of: {', '.join(SUBCOMMANDS)}")
        config = _load_config(ns.config)
        if getattr(ns, "variant", None):
            ns.variant = ns.variant.replace("-", "_")
        return _HANDLERS[ns.command](ns, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
