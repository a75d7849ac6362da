"""Evaluation metrics and run reports."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .scm import herm

CSV_COLUMNS = ("frame", "algorithm", "mse_d", "snr_db", "filter_gap")


def mse_d(d_hat, d, frame: int | None = None, frame_size: int | None = None) -> float:
    """Frame MSE ``1/(KJB) sum_k sum_n ||d_hat_k[n] - d_k[n]||^2``.

    ``d_hat`` and ``d`` are ``(K, ..., J, n)`` arrays (or per-node lists).
    With ``frame`` and ``frame_size`` the samples ``[lB, (l+1)B)`` are
    evaluated; otherwise the whole input counts as one frame. Extra
    leading axes (frequency bins) are averaged like samples.
    """
    d_hat = np.asarray(d_hat)
    d = np.asarray(d)
    if d_hat.shape != d.shape:
        raise ValueError(f"estimate shape {d_hat.shape} != target shape {d.shape}")
    if frame is not None:
        if frame_size is None:
            raise ValueError("frame_size is required with frame")
        lo, hi = frame * frame_size, (frame + 1) * frame_size
        if hi > d.shape[-1]:
            raise ValueError("frame extends past the end of the signals")
        d_hat, d = d_hat[..., lo:hi], d[..., lo:hi]
    return float(np.mean(np.abs(d_hat - d) ** 2))


def expected_mse(W: np.ndarray, R_yy: np.ndarray, R_ss: np.ndarray, E: np.ndarray) -> float:
    """``E||E^T s - W^H y||^2`` for filter ``W`` and selection ``E`` (summed over J)."""
    R_sd = R_ss @ E
    val = (np.trace(herm(E) @ R_sd, axis1=-2, axis2=-1)
           - 2 * np.real(np.trace(herm(W) @ R_sd, axis1=-2, axis2=-1))
           + np.trace(herm(W) @ R_yy @ W, axis1=-2, axis2=-1))
    return float(np.mean(np.real(val)))


def snr_first_channel(desired_out: Sequence[np.ndarray],
                      residual_out: Sequence[np.ndarray]) -> float:
    """Mean over nodes of the first-channel SNR in dB.

    ``desired_out[k]`` and ``residual_out[k]`` are node k's filter outputs
    driven by the desired component only and by the noise component only,
    shape ``(..., J, n)``. Zero residual power gives ``inf``.
    """
    vals = []
    for ds, dn in zip(desired_out, residual_out):
        ps = np.mean(np.abs(np.asarray(ds)[..., 0, :]) ** 2)
        pn = np.mean(np.abs(np.asarray(dn)[..., 0, :]) ** 2)
        if pn == 0:
            return math.inf
        vals.append(10 * np.log10(ps / pn) if ps > 0 else -math.inf)
    return float(np.mean(vals))


@dataclass
class Trace:
    mse_d: list[float] = field(default_factory=list)
    snr_db: list[float] = field(default_factory=list)
    filter_gap: list[float] = field(default_factory=list)
    expected_mse_d: list[float] = field(default_factory=list)


@dataclass
class RunReport:
    """Per-frame traces of every algorithm in one run."""

    algorithms: list[str]
    n_frames: int
    traces: dict[str, Trace]
    config: dict = field(default_factory=dict)
    seed: int = 0
    summary: dict = field(default_factory=dict)

    def rows(self):
        for l in range(self.n_frames):
            for name in self.algorithms:
                t = self.traces[name]
                yield (l, name, t.mse_d[l], t.snr_db[l], t.filter_gap[l])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for l, name, m, s, g in self.rows():
                w.writerow([l, name, repr(float(m)), repr(float(s)), repr(float(g))])

    def to_json(self, path: str | Path) -> None:
        doc = {"config": self.config, "seed": self.seed, "algorithms": self.algorithms,
               "n_frames": self.n_frames, "summary": self.summary}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")


def read_csv(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    """Load a report CSV back into ``{algorithm: {column: array}}``."""
    out: dict[str, dict[str, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for row in reader:
            cols = out.setdefault(row["algorithm"], {c: [] for c in CSV_COLUMNS[2:]})
            for c in CSV_COLUMNS[2:]:
                cols[c].append(float(row[c]))
    return {a: {c: np.array(v) for c, v in cols.items()} for a, cols in out.items()}
