"""Dataset generation, on-disk manifests, and per-channel normalization.

A dataset is a directory of tensor files (one per field) plus manifest.json
recording the task, per-sample GRF hyperparameters and seeds, and the
training-set normalization statistics.  FNO consumers treat all samples as
values on a periodic grid of the same resolution regardless of the PDE
boundary they were generated under.
"""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor_io
from .fields import Boundary, Field, Grid
from .grf import GrfHyperPrior, GrfSpec, PsiMode, apply_psi, sample_grf
from .rng import RngStream
from .solvers import DarcyProblem, LithoConfig, NsConfig, default_forcing, litho_forward, solve_darcy, solve_ns

MANIFEST_NAME = "manifest.json"


class Task(enum.Enum):
    DARCY_CONTINUOUS = "darcy_continuous"
    DARCY_CLIPPED = "darcy_clipped"
    NS2D = "ns2d"
    LITHO_TOY = "litho_toy"


@dataclass(frozen=True)
class Normalization:
    a_mean: np.ndarray
    a_std: np.ndarray
    u_mean: np.ndarray
    u_std: np.ndarray

    @staticmethod
    def from_arrays(a: np.ndarray, u: np.ndarray) -> "Normalization":
        def stats(x):
            mean = x.mean(axis=(0, 1, 2))
            std = x.std(axis=(0, 1, 2))
            return mean, np.maximum(std, 1e-8)

        am, asd = stats(a)
        um, usd = stats(u)
        return Normalization(am, asd, um, usd)

    @staticmethod
    def identity(a_channels: int = 1, u_channels: int = 1) -> "Normalization":
        return Normalization(
            np.zeros(a_channels), np.ones(a_channels), np.zeros(u_channels), np.ones(u_channels)
        )

    def normalize_a(self, x: np.ndarray) -> np.ndarray:
        return (x - self.a_mean) / self.a_std

    def denormalize_a(self, x: np.ndarray) -> np.ndarray:
        return x * self.a_std + self.a_mean

    def normalize_u(self, x: np.ndarray) -> np.ndarray:
        return (x - self.u_mean) / self.u_std

    def denormalize_u(self, x: np.ndarray) -> np.ndarray:
        return x * self.u_std + self.u_mean

    def to_dict(self) -> dict:
        return {
            "a_mean": self.a_mean.tolist(),
            "a_std": self.a_std.tolist(),
            "u_mean": self.u_mean.tolist(),
            "u_std": self.u_std.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Normalization":
        return Normalization(*(np.asarray(d[k], dtype=np.float64) for k in ("a_mean", "a_std", "u_mean", "u_std")))


@dataclass
class Dataset:
    task: Task
    a: np.ndarray  # (N, H, W, Ca)
    u: np.ndarray  # (N, H, W, Cu)
    n_train: int
    n_test: int
    sample_meta: list[dict]
    norm: Normalization
    extra: dict = field(default_factory=dict)
    trajectories: np.ndarray | None = None  # NS only: (N, H, W, n_snapshots)

    def __post_init__(self):
        if self.a.shape[0] != self.n_train + self.n_test:
            raise ValueError("sample count does not match n_train + n_test")
        if not (np.isfinite(self.norm.a_std).all() and (self.norm.a_std > 0).all()):
            raise ValueError("normalization stats must be finite with std > 0")

    @property
    def resolution(self) -> int:
        return self.a.shape[1]

    def train_arrays(self):
        return self.a[: self.n_train], self.u[: self.n_train]

    def test_arrays(self):
        return self.a[self.n_train :], self.u[self.n_train :]

    def grid(self, boundary: Boundary = Boundary.PERIODIC) -> Grid:
        return Grid(self.a.shape[2], self.a.shape[1], boundary)


def _finalize(task, a_list, u_list, n_train, n_test, meta, extra, trajectories=None) -> Dataset:
    a = np.stack(a_list)
    u = np.stack(u_list)
    norm = Normalization.from_arrays(a[:n_train], u[:n_train])
    traj = np.stack(trajectories) if trajectories else None
    return Dataset(task, a, u, n_train, n_test, meta, norm, extra, traj)


def gen_darcy(
    n_train: int,
    n_test: int,
    resolution: int,
    psi: PsiMode,
    seed: int,
    alpha_range=(1.0, 2.5),
    tau_range=(0.5, 1.5),
) -> Dataset:
    """Clipped or exponentiated Darcy pairs (a, u) with f = 1 on a Dirichlet grid."""
    task = Task.DARCY_CLIPPED if psi is PsiMode.CLIP else Task.DARCY_CONTINUOUS
    hyper = GrfHyperPrior(alpha_range, tau_range, psi)
    grid = Grid(resolution, resolution, Boundary.DIRICHLET_ZERO)
    a_list, u_list, meta = [], [], []
    for i in range(n_train + n_test):
        rng = RngStream(seed, stream_id=i)
        spec = hyper.draw(rng)
        perm = sample_grf(spec, grid, rng)
        pressure = solve_darcy(DarcyProblem(perm))
        a_list.append(perm.values)
        u_list.append(pressure.values)
        meta.append(
            {
                "split": "train" if i < n_train else "test",
                "index": i,
                "alpha": spec.alpha,
                "tau": spec.tau,
                "psi": psi.value,
                "seed": seed,
            }
        )
    extra = {"source": 1.0, "boundary": "dirichlet_zero", "psi": psi.value}
    return _finalize(task, a_list, u_list, n_train, n_test, meta, extra)


def gen_ns(
    n_train: int,
    n_test: int,
    resolution: int,
    seed: int,
    nu: float = 1e-2,
    T: float = 2.0,
    dt: float = 1e-3,
    n_snapshots: int = 10,
    alpha_range=(2.0, 2.5),
    tau: float = 7.0,
) -> Dataset:
    """NS vorticity pairs (w0, w(T)); all snapshots kept in `trajectories`."""
    grid = Grid(resolution, resolution, Boundary.PERIODIC)
    forcing = default_forcing(grid)
    cfg = NsConfig(nu=nu, T=T, dt=dt, n_snapshots=n_snapshots, forcing=forcing)
    hyper = GrfHyperPrior(alpha_range, (tau, tau), PsiMode.IDENTITY)
    a_list, u_list, meta, trajs = [], [], [], []
    times = None
    for i in range(n_train + n_test):
        rng = RngStream(seed, stream_id=i)
        spec = hyper.draw(rng)
        w0 = sample_grf(spec, grid, rng)
        traj = solve_ns(w0, cfg)
        times = traj.times
        a_list.append(w0.values)
        u_list.append(traj.final().values)
        trajs.append(np.concatenate([s.values for s in traj.snapshots], axis=-1))
        meta.append(
            {
                "split": "train" if i < n_train else "test",
                "index": i,
                "alpha": spec.alpha,
                "tau": spec.tau,
                "psi": "identity",
                "seed": seed,
            }
        )
    extra = {"nu": nu, "T": T, "dt": dt, "n_snapshots": n_snapshots, "snapshot_times": times}
    return _finalize(Task.NS2D, a_list, u_list, n_train, n_test, meta, extra, trajs)


def gen_litho(
    n_train: int,
    n_test: int,
    resolution: int,
    seed: int,
    litho: LithoConfig | None = None,
    alpha_range=(2.0, 3.0),
    tau_range=(3.0, 6.0),
) -> Dataset:
    """Toy masks (thresholded GRFs) paired with their hard printed patterns."""
    litho = litho or LithoConfig()
    grid = Grid(resolution, resolution, Boundary.PERIODIC)
    hyper = GrfHyperPrior(alpha_range, tau_range, PsiMode.IDENTITY)
    a_list, u_list, meta = [], [], []
    for i in range(n_train + n_test):
        rng = RngStream(seed, stream_id=i)
        spec = hyper.draw(rng)
        g = sample_grf(spec, grid, rng)
        mask = Field(grid, (g.values >= 0.0).astype(np.float64))
        printed = litho_forward(mask, litho, soft=False)
        a_list.append(mask.values)
        u_list.append(printed.values)
        meta.append(
            {
                "split": "train" if i < n_train else "test",
                "index": i,
                "alpha": spec.alpha,
                "tau": spec.tau,
                "psi": "threshold",
                "seed": seed,
            }
        )
    extra = {
        "sigma_optical": litho.sigma_optical,
        "sigma_resist": litho.sigma_resist,
        "tau_resist": litho.tau_resist,
        "beta": litho.beta,
    }
    return _finalize(Task.LITHO_TOY, a_list, u_list, n_train, n_test, meta, extra)


def generate(task: Task, **kwargs) -> Dataset:
    if task in (Task.DARCY_CLIPPED, Task.DARCY_CONTINUOUS):
        psi = PsiMode.CLIP if task is Task.DARCY_CLIPPED else PsiMode.EXP
        return gen_darcy(psi=psi, **kwargs)
    if task is Task.NS2D:
        return gen_ns(**kwargs)
    return gen_litho(**kwargs)


# ---------------------------------------------------------------------------
# on-disk layout


def save_dataset(dirpath, ds: Dataset) -> None:
    os.makedirs(dirpath, exist_ok=True)
    samples = []
    for i, meta in enumerate(ds.sample_meta):
        a_name, u_name = f"a_{i:05d}.dgpt", f"u_{i:05d}.dgpt"
        tensor_io.write_array(os.path.join(dirpath, a_name), ds.a[i])
        tensor_io.write_array(os.path.join(dirpath, u_name), ds.u[i])
        entry = dict(meta, a=a_name, u=u_name)
        if ds.trajectories is not None:
            t_name = f"traj_{i:05d}.dgpt"
            tensor_io.write_array(os.path.join(dirpath, t_name), ds.trajectories[i])
            entry["traj"] = t_name
        samples.append(entry)
    manifest = {
        "task": ds.task.value,
        "resolution": ds.resolution,
        "n_train": ds.n_train,
        "n_test": ds.n_test,
        "samples": samples,
        "normalization": ds.norm.to_dict(),
        "extra": ds.extra,
    }
    with open(os.path.join(dirpath, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=1, default=float)


def load_dataset(dirpath) -> Dataset:
    with open(os.path.join(dirpath, MANIFEST_NAME)) as fh:
        manifest = json.load(fh)
    samples = manifest["samples"]
    n = manifest["n_train"] + manifest["n_test"]
    if len(samples) != n:
        raise ValueError(f"manifest lists {len(samples)} samples, expected {n}")
    a = np.stack([tensor_io.read_array(os.path.join(dirpath, s["a"])) for s in samples])
    u = np.stack([tensor_io.read_array(os.path.join(dirpath, s["u"])) for s in samples])
    traj = None
    if all("traj" in s for s in samples):
        traj = np.stack([tensor_io.read_array(os.path.join(dirpath, s["traj"])) for s in samples])
    return Dataset(
        Task(manifest["task"]),
        a,
        u,
        manifest["n_train"],
        manifest["n_test"],
        [{k: v for k, v in s.items() if k not in ("a", "u", "traj")} for s in samples],
        Normalization.from_dict(manifest["normalization"]),
        manifest.get("extra", {}),
        traj,
    )
