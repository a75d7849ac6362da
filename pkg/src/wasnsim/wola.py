"""Weighted overlap-add filterbank and anechoic multichannel scenes.

Analysis and synthesis both use a square-root periodic Hann window, whose
product is constant-overlap-add at 50 % overlap.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from .scene import (Components, ConfigurationError, SceneConfig, _powers,
                    calibrate_noise)
from .scm import LABEL_NAMES, node_slices

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class WolaConfig:
    frame_length: int = 1024
    overlap: float = 0.5
    window: str = "sqrt-hann"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.frame_length < 2 or self.frame_length % 2:
            raise ConfigurationError("frame_length must be even and >= 2")
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigurationError("overlap must lie in [0, 1)")
        if self.window not in ("sqrt-hann", "rect"):
            raise ConfigurationError(f"unknown window {self.window!r}")
        self.windows()

    @property
    def hop(self) -> int:
        return int(round(self.frame_length * (1 - self.overlap)))

    @property
    def n_bins(self) -> int:
        return self.frame_length // 2 + 1

    def windows(self) -> tuple[np.ndarray, np.ndarray]:
        """(analysis, synthesis) window pair."""
        L, H = self.frame_length, self.hop
        if self.window == "sqrt-hann":
            w = np.sqrt(get_window("hann", L, fftbins=True))
        else:
            w = np.ones(L)
        # scale synthesis so the overlapped window products sum to one
        ola = (w * w).reshape(-1, H).sum(axis=0) if L % H == 0 else None
        if ola is None or np.ptp(ola) > 1e-12 * ola.max():
            raise ConfigurationError(
                f"{self.window} window is not overlap-add constant at hop {H}")
        return w, w / ola[0]

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.frame_length) // self.hop


def analyze(signal: np.ndarray, cfg: WolaConfig = WolaConfig()) -> np.ndarray:
    """STFT of a real ``(C, n)`` signal, returned as ``(n_bins, n_frames, C)``."""
    x = np.atleast_2d(np.asarray(signal, dtype=float))
    L, H = cfg.frame_length, cfg.hop
    if x.shape[-1] < L:
        raise ValueError(f"signal of {x.shape[-1]} samples is shorter than one frame ({L})")
    wa, _ = cfg.windows()
    n_frames = cfg.n_frames(x.shape[-1])
    idx = np.arange(n_frames)[:, None] * H + np.arange(L)[None, :]
    frames = x[:, idx] * wa                  # (C, n_frames, L)
    X = np.fft.rfft(frames, axis=-1)        # (C, n_frames, F)
    return np.transpose(X, (2, 1, 0))


def synthesize(spec: np.ndarray, cfg: WolaConfig = WolaConfig(),
               n_samples: int | None = None) -> np.ndarray:
    """Inverse of :func:`analyze` for ``(n_bins, n_frames, C)`` input."""
    spec = np.asarray(spec)
    if spec.ndim != 3:
        raise ValueError("expected (n_bins, n_frames, channels)")
    if spec.shape[0] != cfg.n_bins:
        raise ValueError(f"expected {cfg.n_bins} bins, got {spec.shape[0]}")
    L, H = cfg.frame_length, cfg.hop
    _, ws = cfg.windows()
    n_frames, C = spec.shape[1], spec.shape[2]
    frames = np.fft.irfft(np.transpose(spec, (2, 1, 0)), n=L, axis=-1) * ws
    n_out = (n_frames - 1) * H + L
    out = np.zeros((C, n_out))
    for l in range(n_frames):
        out[:, l * H:l * H + L] += frames[:, l]
    if n_samples is not None:
        out = out[:, :n_samples] if n_samples <= n_out else np.pad(out, ((0, 0), (0, n_samples - n_out)))
    return out


def write_wav(path: str | Path, signal: np.ndarray, sample_rate: int) -> None:
    """32-bit float WAV, channels interleaved in row order of ``signal``."""
    wavfile.write(str(path), int(sample_rate), np.asarray(signal, dtype=np.float32).T)


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    fs, data = wavfile.read(str(path))
    data = np.asarray(data)
    if data.ndim == 1:
        data = data[:, None]
    if np.issubdtype(data.dtype, np.integer):
        data = data / float(np.iinfo(data.dtype).max)
    return data.T.astype(float), int(fs)


def delay_and_attenuate(source: np.ndarray, gains: np.ndarray, delays: np.ndarray,
                        n_samples: int) -> np.ndarray:
    """Render one source at every sensor with gain and fractional delay (samples)."""
    n_fft = 1 << int(np.ceil(np.log2(n_samples + np.max(delays, initial=0) + 2)))
    S = np.fft.rfft(source, n_fft)
    f = np.arange(S.shape[-1]) / n_fft
    H = gains[:, None] * np.exp(-2j * np.pi * f[None, :] * delays[:, None])
    return np.fft.irfft(H * S[None, :], n_fft, axis=-1)[:, :n_samples]


@dataclass(frozen=True, eq=False)
class AnechoicScene:
    """Real-valued multichannel scene rendered with delay-attenuation paths.

    ``components`` hold time-domain arrays ``(M, n)``; ``schedule`` carries
    one activity label per WOLA frame.
    """

    config: SceneConfig
    wola: WolaConfig
    components: Components
    schedule: np.ndarray
    node_positions: np.ndarray
    sensor_var: np.ndarray

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.config.n_sensors

    def stft_components(self) -> Components:
        c = self.components
        return Components(*(analyze(getattr(c, n), self.wola)
                            for n in ("s_glob", "s_loc", "n_glob", "n_loc")))

    def label(self, index: int) -> int:
        return int(self.schedule[index % len(self.schedule)])


def anechoic_scene(config: SceneConfig, wola: WolaConfig = WolaConfig(),
                   duration_s: float = 10.0, room_size=(5.0, 5.0, 3.0),
                   array_radius: float = 0.05, local_distance=(0.3, 1.0)) -> AnechoicScene:
    """Place nodes and sources in a box and render white Gaussian sources.

    Each node is a circular array of ``array_radius`` in the horizontal
    plane. Global sources are placed anywhere in the room and reach every
    sensor; local sources sit ``local_distance`` metres from their node and
    reach only that node. Gains are ``1/distance``, delays
    ``distance / c``. Noise-source gains are then calibrated to the target
    SNR exactly as for the latent-model scenes.
    """
    cfg = config
    rng = np.random.default_rng([cfg.seed, 2])
    fs = wola.sample_rate
    n = int(round(duration_s * fs))
    room = np.asarray(room_size, dtype=float)
    K, sizes = cfg.n_nodes, cfg.n_sensors
    rows = node_slices(sizes)

    centers = rng.uniform(0.5, room - 0.5, size=(K, 3))
    mics = []
    for k in range(K):
        phi = 2 * np.pi * np.arange(sizes[k]) / sizes[k]
        mics.append(centers[k] + array_radius * np.stack(
            [np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=1))
    mics = np.concatenate(mics)

    def place_global(count):
        return rng.uniform(0.3, room - 0.3, size=(count, 3))

    def place_local(counts):
        out = []
        for k, c in enumerate(counts):
            for _ in range(c):
                v = rng.normal(size=3)
                v[2] *= 0.2
                v /= np.linalg.norm(v)
                r = rng.uniform(*local_distance)
                out.append((k, np.clip(centers[k] + r * v, 0.1, room - 0.1)))
        return out

    def paths(positions, owners=None):
        d = np.linalg.norm(mics[:, None, :] - positions[None, :, :], axis=-1)
        G = 1.0 / np.maximum(d, 0.05)
        if owners is not None:
            mask = np.zeros_like(G, dtype=bool)
            for j, k in enumerate(owners):
                mask[rows[k], j] = True
            G = np.where(mask, G, 0.0)
        return G, d / SPEED_OF_SOUND * fs

    groups = {}
    groups["s_glob"] = paths(place_global(cfg.n_global_desired))
    loc = place_local(cfg.n_local_desired)
    groups["s_loc"] = paths(np.array([p for _, p in loc]).reshape(-1, 3), [k for k, _ in loc])
    groups["n_glob"] = paths(place_global(cfg.n_global_noise))
    loc = place_local(cfg.n_local_noise)
    groups["n_loc"] = paths(np.array([p for _, p in loc]).reshape(-1, 3), [k for k, _ in loc])

    g2, sensor_node = calibrate_noise(
        *_powers(groups["s_glob"][0], groups["s_loc"][0], groups["n_glob"][0],
                 groups["n_loc"][0], sizes),
        cfg.sensor_noise_frac, cfg.target_snr_db)
    sensor_var = np.concatenate([np.full(m, v) for m, v in zip(sizes, sensor_node)])

    sig_rng = np.random.default_rng([cfg.seed, 3])
    rendered = {}
    for name in ("s_glob", "s_loc", "n_glob", "n_loc"):
        G, D = groups[name]
        gain = np.sqrt(g2) if name.startswith("n") else 1.0
        acc = np.zeros((len(mics), n))
        for j in range(G.shape[1]):
            src = sig_rng.standard_normal(n)
            acc += delay_and_attenuate(src, gain * G[:, j], D[:, j], n)
        rendered[name] = acc
    rendered["n_loc"] = rendered["n_loc"] + sig_rng.standard_normal((len(mics), n)) * np.sqrt(
        sensor_var)[:, None]

    codes = np.array([LABEL_NAMES[p] for p in cfg.activity_pattern], dtype=np.int8)
    schedule = np.resize(codes, wola.n_frames(n))
    comps = Components(rendered["s_glob"], rendered["s_loc"], rendered["n_glob"], rendered["n_loc"])
    return AnechoicScene(cfg, wola, comps, schedule, centers, sensor_var)
