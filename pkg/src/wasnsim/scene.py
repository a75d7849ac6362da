"""Synthetic WASN scenes with global and node-local latent sources.

Every node observes the global sources (desired and noise) through its
rows of a dense steering matrix, and its own local sources through a
block of a block-diagonal steering matrix. Latent signals and steering
entries are circularly-symmetric complex standard normal draws.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .scm import (ALL_ACTIVE, GLOBAL_ONLY, LABEL_NAMES, NOISE_ONLY, ScmSet, herm,
                  node_slices)


class ConfigurationError(ValueError):
    pass


def _per_node(value, n_nodes: int, name: str) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * n_nodes
    value = tuple(int(v) for v in value)
    if len(value) != n_nodes:
        raise ConfigurationError(f"{name} has {len(value)} entries, expected {n_nodes}")
    return value


@dataclass(frozen=True)
class SceneConfig:
    """Scene dimensions and realization settings.

    Per-node counts (``n_sensors``, ``n_local_desired``, ``n_local_noise``)
    accept either one int shared by all nodes or one entry per node.
    ``n_channels`` is the target/fused channel count J.
    """

    n_nodes: int = 4
    n_sensors: tuple[int, ...] | int = 4
    n_global_desired: int = 1
    n_local_desired: tuple[int, ...] | int = 2
    n_global_noise: int = 1
    n_local_noise: tuple[int, ...] | int = 1
    n_channels: int = 2
    target_snr_db: float | None = 0.0
    sensor_noise_frac: float = 0.1
    seed: int = 0
    frame_size: int = 250
    n_frames: int = 1000
    activity_pattern: tuple[str, ...] = ("all", "global", "noise")

    def __post_init__(self):
        K = int(self.n_nodes)
        if K < 1:
            raise ConfigurationError("n_nodes must be >= 1")
        for name in ("n_sensors", "n_local_desired", "n_local_noise"):
            object.__setattr__(self, name, _per_node(getattr(self, name), K, name))
        object.__setattr__(self, "activity_pattern", tuple(self.activity_pattern))
        counts = (self.n_global_desired, self.n_global_noise,
                  *self.n_local_desired, *self.n_local_noise)
        if min(counts) < 0:
            raise ConfigurationError("source counts must be non-negative")
        if self.n_channels < 1:
            raise ConfigurationError("n_channels must be >= 1")
        if self.n_channels > min(self.n_sensors):
            raise ConfigurationError(
                f"n_channels={self.n_channels} exceeds the smallest node "
                f"({min(self.n_sensors)} sensors)")
        if self.sensor_noise_frac < 0:
            raise ConfigurationError("sensor_noise_frac must be >= 0")
        if self.frame_size < 1 or self.n_frames < 1:
            raise ConfigurationError("frame_size and n_frames must be >= 1")
        bad = [p for p in self.activity_pattern if p not in LABEL_NAMES]
        if bad or not self.activity_pattern:
            raise ConfigurationError(f"invalid activity pattern entries: {bad}")

    @property
    def n_total_sensors(self) -> int:
        return sum(self.n_sensors)

    @property
    def theorem1_regime(self) -> bool:
        """Whether J covers the global latent subspace (iDANSE optimal)."""
        return self.n_channels >= self.n_global_desired + self.n_global_noise

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown scene keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def load_config_file(path: str | Path) -> dict:
    """Read a JSON document, or ``key = value`` lines with JSON values."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def selection_matrix(n_sensors: int, n_channels: int) -> np.ndarray:
    """E_kk: selects the first ``n_channels`` sensors of a node."""
    if n_channels > n_sensors:
        raise ConfigurationError("cannot select more channels than sensors")
    return np.eye(n_sensors, n_channels)


def network_selection(sizes: Sequence[int], k: int, n_channels: int) -> np.ndarray:
    """E_k: the M x J network-level extension of node k's selection matrix."""
    E = np.zeros((sum(sizes), n_channels))
    E[node_slices(sizes)[k]] = selection_matrix(sizes[k], n_channels)
    return E


@dataclass
class Components:
    """Per-source-group sensor contributions of one frame, shape ``(..., M, B)``.

    Sensor noise is part of ``n_loc``.
    """

    s_glob: np.ndarray
    s_loc: np.ndarray
    n_glob: np.ndarray
    n_loc: np.ndarray

    @property
    def desired(self) -> np.ndarray:
        return self.s_glob + self.s_loc

    @property
    def noise(self) -> np.ndarray:
        return self.n_glob + self.n_loc

    @property
    def total(self) -> np.ndarray:
        return self.desired + self.noise

    @property
    def global_component(self) -> np.ndarray:
        return self.s_glob + self.n_glob

    def observed(self, label: int) -> np.ndarray:
        """Sensor signal when only the groups active under ``label`` emit."""
        if label == ALL_ACTIVE:
            return self.total
        if label == GLOBAL_ONLY:
            return self.global_component
        if label == NOISE_ONLY:
            return self.noise
        raise ValueError(f"unknown activity label {label!r}")

    @staticmethod
    def concatenate(parts: Sequence["Components"]) -> "Components":
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts], axis=-1)
        return Components(cat("s_glob"), cat("s_loc"), cat("n_glob"), cat("n_loc"))


def _cnormal(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def _block_steering(rng, sizes, counts) -> np.ndarray:
    A = np.zeros((sum(sizes), sum(counts)), dtype=complex)
    rows = node_slices(sizes)
    cols = node_slices(counts)
    for r, c in zip(rows, cols):
        A[r, c] = _cnormal(rng, r.stop - r.start, c.stop - c.start)
    return A


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable realization of a scene configuration.

    Steering matrices are fixed at construction. Latent samples are drawn
    lazily per frame from a generator keyed by ``(seed, frame index)``, so
    any frame can be regenerated bit-exactly without storing the stream.
    ``B_glob``/``B_loc`` already include the SNR-calibrating gain.
    """

    config: SceneConfig
    A_glob: np.ndarray
    A_loc: np.ndarray
    B_glob: np.ndarray
    B_loc: np.ndarray
    sensor_var: np.ndarray
    noise_gain: float
    schedule: np.ndarray = field(repr=False)

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.config.n_sensors

    @property
    def n_frames(self) -> int:
        return self.config.n_frames

    def latent_frame(self, index: int, n_samples: int | None = None) -> dict[str, np.ndarray]:
        """Latent source samples of one frame (unit-power, mutually independent)."""
        cfg = self.config
        B = cfg.frame_size if n_samples is None else n_samples
        rng = np.random.default_rng([cfg.seed, 1, int(index)])
        return {
            "s_glob": _cnormal(rng, self.A_glob.shape[1], B),
            "s_loc": _cnormal(rng, self.A_loc.shape[1], B),
            "n_glob": _cnormal(rng, self.B_glob.shape[1], B),
            "n_loc": _cnormal(rng, self.B_loc.shape[1], B),
            "sensor": _cnormal(rng, cfg.n_total_sensors, B) * np.sqrt(self.sensor_var)[:, None],
        }

    def components(self, index: int, n_samples: int | None = None) -> Components:
        lat = self.latent_frame(index, n_samples)
        return Components(
            s_glob=self.A_glob @ lat["s_glob"],
            s_loc=self.A_loc @ lat["s_loc"],
            n_glob=self.B_glob @ lat["n_glob"],
            n_loc=self.B_loc @ lat["n_loc"] + lat["sensor"],
        )

    def block(self, start: int, n_frames: int) -> Components:
        """Contiguous frames ``start .. start+n_frames-1`` joined along time."""
        return Components.concatenate([self.components(i) for i in range(start, start + n_frames)])

    def label(self, index: int) -> int:
        return int(self.schedule[index % len(self.schedule)])

    def node_snr_db(self) -> np.ndarray:
        """Expected per-node SNR: mean desired power over mean noise power."""
        R = true_scms(self)
        out = []
        for k in range(len(self.sizes)):
            ps = np.real(np.diagonal(R.ss_local(k))).mean()
            pn = np.real(np.diagonal(R.local(R.R_nn, k))).mean()
            out.append(10 * np.log10(ps / pn) if ps > 0 and pn > 0 else np.nan)
        return np.array(out)


def _powers(A_glob, A_loc, B_glob, B_loc, sizes):
    """Expected per-node (mean, first-sensor) powers of desired and noise sources."""
    pd = np.sum(np.abs(A_glob) ** 2, axis=1) + np.sum(np.abs(A_loc) ** 2, axis=1)
    pn = np.sum(np.abs(B_glob) ** 2, axis=1) + np.sum(np.abs(B_loc) ** 2, axis=1)
    sl = node_slices(sizes)
    mean = lambda p: np.array([p[s].mean() for s in sl])
    first = lambda p: np.array([p[s.start] for s in sl])
    return mean(pd), first(pd), mean(pn), first(pn)


def calibrate_noise(des_mean, des_first, nz_mean, nz_first, frac, target_db):
    """Solve for the noise-source power gain g^2 hitting the mean per-node SNR.

    Sensor noise per node is ``frac`` times the first sensor's signal power
    (desired plus noise sources). Returns ``(g2, sensor_var_per_node)``.
    """
    sensor = lambda g2: frac * (des_first + g2 * nz_first)
    valid = des_mean > 0
    if target_db is None or not np.any(valid) or not np.any(nz_mean > 0):
        return 1.0, sensor(1.0)

    def mean_snr_db(log_g2):
        g2 = 10.0 ** log_g2
        noise = g2 * nz_mean + sensor(g2)
        with np.errstate(divide="ignore"):
            return np.mean(10 * np.log10(des_mean[valid] / noise[valid]))

    lo, hi = -15.0, 15.0
    f = lambda x: mean_snr_db(x) - target_db
    if f(lo) < 0:
        raise ConfigurationError(
            f"target SNR {target_db} dB unreachable with sensor_noise_frac={frac}")
    if f(hi) > 0:
        raise ConfigurationError(f"target SNR {target_db} dB too low to reach")
    g2 = 10.0 ** brentq(f, lo, hi, xtol=1e-12)
    return g2, sensor(g2)


def generate_scene(config: SceneConfig) -> Scene:
    """Draw steering matrices and calibrate noise powers for ``config``."""
    cfg = config
    sizes = cfg.n_sensors
    rng = np.random.default_rng([cfg.seed, 0])
    M = cfg.n_total_sensors
    A_glob = _cnormal(rng, M, cfg.n_global_desired)
    A_loc = _block_steering(rng, sizes, cfg.n_local_desired)
    B_glob = _cnormal(rng, M, cfg.n_global_noise)
    B_loc = _block_steering(rng, sizes, cfg.n_local_noise)

    g2, sensor_node = calibrate_noise(*_powers(A_glob, A_loc, B_glob, B_loc, sizes),
                                      cfg.sensor_noise_frac, cfg.target_snr_db)
    gain = math.sqrt(g2)
    sensor_var = np.concatenate([np.full(m, v) for m, v in zip(sizes, sensor_node)])
    codes = np.array([LABEL_NAMES[p] for p in cfg.activity_pattern], dtype=np.int8)
    schedule = np.resize(codes, cfg.n_frames)
    return Scene(cfg, A_glob, A_loc, gain * B_glob, gain * B_loc, sensor_var, gain, schedule)


def true_scms(scene: Scene) -> ScmSet:
    """Analytic SCMs implied by the steering matrices (unit-power latents)."""
    outer = lambda A: A @ herm(A)
    R_ss = outer(scene.A_glob) + outer(scene.A_loc)
    R_nn = outer(scene.B_glob) + outer(scene.B_loc) + np.diag(scene.sensor_var).astype(complex)
    R_glob = outer(scene.A_glob) + outer(scene.B_glob)
    return ScmSet(R_ss + R_nn, R_nn, R_ss, scene.sizes, R_glob, provenance="true")
