"""Scoring and report assembly: relative/max error, EPE violations, CSV+JSON reports."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from .fields import Field


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=np.float64)


def relative_error(pred, truth) -> float:
    """||pred - truth||_2 / ||truth||_2 (uniform cell weights cancel)."""
    p, t = _values(pred), _values(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    den = float(np.sqrt((t * t).sum()))
    if den == 0.0:
        raise ValueError("relative_error undefined for zero-norm truth")
    return float(np.sqrt(((p - t) ** 2).sum())) / den


def max_error(pred, truth) -> float:
    p, t = _values(pred), _values(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    return float(np.abs(p - t).max())


# ---------------------------------------------------------------------------
# edge placement error


@dataclass(frozen=True)
class EpeConfig:
    tol: int = 2
    spacing: int = 4
    window: int = 8

    def __post_init__(self):
        if not (0 < self.tol < self.window) or self.spacing < 1:
            raise ValueError("EPE config needs 0 < tol < window and spacing >= 1")


def _require_binary(x: np.ndarray, what: str) -> np.ndarray:
    x = x[:, :, 0] if x.ndim == 3 else x
    if not np.isin(x, (0.0, 1.0)).all():
        raise ValueError(f"{what} must be exactly binary")
    return x


def _horizontal_edges(x: np.ndarray) -> np.ndarray:
    """edge[y, x] true when rows y and y+1 differ; shape (H-1, W)."""
    return x[:-1, :] != x[1:, :]


def _vertical_edges(x: np.ndarray) -> np.ndarray:
    return x[:, :-1] != x[:, 1:]


def _runs(mask_1d: np.ndarray):
    """Maximal runs of consecutive True entries as (start, stop) pairs."""
    idx = np.flatnonzero(mask_1d)
    if idx.size == 0:
        return
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([0], breaks + 1))
    stops = np.concatenate((breaks, [idx.size - 1]))
    for s, e in zip(starts, stops):
        yield int(idx[s]), int(idx[e])


def _nearest_edge_distance(edge_line: np.ndarray, pos: int, window: int) -> int | None:
    """Smallest |d| <= window with an edge at pos + d on the normal line."""
    n = edge_line.shape[0]
    for d in range(window + 1):
        if pos - d >= 0 and edge_line[pos - d]:
            return d
        if d > 0 and pos + d < n and edge_line[pos + d]:
            return d
    return None


def epe_violations(printed, target, cfg: EpeConfig = EpeConfig()):
    """Sample target edges every `spacing` pixels along each run and march along
    the axis-aligned normal for the matching printed edge; a sample violates if
    no printed edge lies within `window` or the nearest lies beyond `tol`.
    Returns (violations, samples, fraction)."""
    p = _require_binary(_values(printed), "printed")
    t = _require_binary(_values(target), "target")
    if p.shape != t.shape:
        raise ValueError("printed and target shapes differ")

    t_h, t_v = _horizontal_edges(t), _vertical_edges(t)
    p_h, p_v = _horizontal_edges(p), _vertical_edges(p)
    if not (t_h.any() or t_v.any()):
        raise ValueError("target has no boundary")

    samples = violations = 0
    for y in range(t_h.shape[0]):  # horizontal edges: normal along y
        for start, stop in _runs(t_h[y]):
            for x in range(start, stop + 1, cfg.spacing):
                samples += 1
                d = _nearest_edge_distance(p_h[:, x], y, cfg.window)
                if d is None or d > cfg.tol:
                    violations += 1
    for x in range(t_v.shape[1]):  # vertical edges: normal along x
        for start, stop in _runs(t_v[:, x]):
            for y in range(start, stop + 1, cfg.spacing):
                samples += 1
                d = _nearest_edge_distance(p_v[y, :], x, cfg.window)
                if d is None or d > cfg.tol:
                    violations += 1
    return violations, samples, violations / samples


# ---------------------------------------------------------------------------
# evaluation records and reports


@dataclass
class EvalRecord:
    task: str
    method: str
    seed: int
    rel_error: float
    max_error: float
    seconds_per_design: float

    def __post_init__(self):
        vals = (self.rel_error, self.max_error, self.seconds_per_design)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("EvalRecord metrics must be finite and nonnegative")


CSV_COLUMNS = ("task", "method", "seed", "rel_error", "max_error", "seconds_per_design")


def write_report(records: list[EvalRecord], csv_path, json_path=None) -> None:
    """CSV with fixed column order plus a JSON summary of per-method medians."""
    if not records:
        raise ValueError("no records to report")
    if json_path is None:
        json_path = os.path.splitext(str(csv_path))[0] + ".json"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            d = asdict(r)
            writer.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in CSV_COLUMNS])
    methods = sorted({r.method for r in records})
    summary = {}
    for m in methods:
        rs = [r for r in records if r.method == m]
        summary[m] = {
            "n": len(rs),
            "median_rel_error": float(np.median([r.rel_error for r in rs])),
            "median_max_error": float(np.median([r.max_error for r in rs])),
            "median_seconds_per_design": float(np.median([r.seconds_per_design for r in rs])),
        }
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
