"""Spatial covariance matrices: containers, batch and online estimation.

All matrices carry optional leading batch axes (one per frequency bin in
WOLA mode), so an SCM is an array of shape ``(..., C, C)`` and a frame of
samples is ``(..., C, B)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

# Oracle activity labels, one per frame.
ALL_ACTIVE = 0
GLOBAL_ONLY = 1
NOISE_ONLY = 2
LABEL_NAMES = {"all": ALL_ACTIVE, "global": GLOBAL_ONLY, "noise": NOISE_ONLY}


class ScmNotReady(RuntimeError):
    """Raised when an SCM is requested before enough frames contributed."""


def herm(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(R: np.ndarray) -> np.ndarray:
    return 0.5 * (R + herm(R))


def node_slices(sizes: Sequence[int]) -> list[slice]:
    """Row slices of each node's sensors in the stacked network vector."""
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def floor_psd(R: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues of a Hermitian matrix (batched) to zero."""
    vals, vecs = np.linalg.eigh(hermitize(R))
    vals = np.clip(vals, 0.0, None)
    return hermitize((vecs * vals[..., None, :]) @ herm(vecs))


@dataclass(frozen=True, eq=False)
class ScmSet:
    """Network-level SCMs of one scene (or one frequency bin batch).

    ``R_glob`` is the SCM of the global component (global desired plus
    global noise sources), needed by the iDANSE local fusion filters.
    Per-node blocks are sliced out on demand.
    """

    R_yy: np.ndarray
    R_nn: np.ndarray
    R_ss: np.ndarray
    sizes: tuple[int, ...]
    R_glob: np.ndarray | None = None
    provenance: str = "true"

    def local(self, R: np.ndarray, k: int) -> np.ndarray:
        s = node_slices(self.sizes)[k]
        return R[..., s, s]

    def yy_local(self, k: int) -> np.ndarray:
        return self.local(self.R_yy, k)

    def ss_local(self, k: int) -> np.ndarray:
        return self.local(self.R_ss, k)

    def glob_local(self, k: int) -> np.ndarray:
        if self.R_glob is None:
            raise ScmNotReady("global-component SCM unavailable")
        return self.local(self.R_glob, k)


def batch_scm(samples: np.ndarray) -> np.ndarray:
    """Sample SCM ``(1/n) sum_t y[t] y[t]^H`` of a ``(..., C, n)`` array."""
    samples = np.asarray(samples)
    n = samples.shape[-1]
    if n == 0:
        raise ValueError("cannot estimate an SCM from zero samples")
    return hermitize(samples @ herm(samples) / n)


@dataclass
class OnlineScm:
    """Exponentially averaged SCM, ``R <- lam R + (1 - lam) frame_scm``.

    The raw recursion starts from zero and is therefore biased by
    ``1 - lam**frames_seen``; :attr:`corrected` removes that factor.
    """

    estimate: np.ndarray
    forgetting: float = 0.995
    frame_size: int = 250
    frames_seen: int = 0
    min_frames: int | None = None

    @classmethod
    def zeros(cls, n_channels: int, forgetting: float = 0.995,
              frame_size: int = 250, batch_shape: tuple[int, ...] = (),
              min_frames: int | None = None) -> "OnlineScm":
        if not 0.0 <= forgetting < 1.0:
            raise ValueError(f"forgetting factor must lie in [0, 1), got {forgetting}")
        est = np.zeros(batch_shape + (n_channels, n_channels), dtype=complex)
        return cls(est, forgetting, frame_size, 0, min_frames)

    @property
    def n_channels(self) -> int:
        return self.estimate.shape[-1]

    def ready(self, min_frames: int | None = None) -> bool:
        if min_frames is None:
            min_frames = self.min_frames
        need = self.n_channels if min_frames is None else min_frames
        return self.frames_seen >= max(need, 1)

    @property
    def corrected(self) -> np.ndarray:
        if self.frames_seen == 0:
            raise ScmNotReady("no frames observed yet")
        return self.estimate / (1.0 - self.forgetting ** self.frames_seen)

    def update(self, frame: np.ndarray) -> None:
        """In-place version of :func:`update_online`."""
        frame = np.asarray(frame)
        if frame.shape[-2] != self.n_channels:
            raise ValueError(
                f"frame has {frame.shape[-2]} channels, estimator expects {self.n_channels}")
        lam = self.forgetting
        self.estimate = hermitize(lam * self.estimate + (1.0 - lam) * batch_scm(frame))
        self.frames_seen += 1


def update_online(state: OnlineScm, frame: np.ndarray) -> OnlineScm:
    new = replace(state, estimate=state.estimate.copy())
    new.update(frame)
    return new


@dataclass
class SegmentedScm:
    """Online SCMs split by oracle activity label.

    ``R_yy`` is fed by all-active frames, ``R_nn`` by noise-only frames and
    the global-component SCM by global-only frames.
    """

    n_channels: int
    sizes: tuple[int, ...] = ()
    forgetting: float = 0.995
    frame_size: int = 250
    batch_shape: tuple[int, ...] = ()
    track_global: bool = True
    min_frames: int | None = None
    yy: OnlineScm = field(init=False)
    nn: OnlineScm = field(init=False)
    glob: OnlineScm | None = field(init=False)
    _cache: ScmSet | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        mk = lambda: OnlineScm.zeros(self.n_channels, self.forgetting, self.frame_size,
                                     self.batch_shape, self.min_frames)
        self.yy, self.nn = mk(), mk()
        self.glob = mk() if self.track_global else None
        if not self.sizes:
            self.sizes = (self.n_channels,)

    def update(self, frame: np.ndarray, label: int) -> None:
        self._cache = None
        if label == ALL_ACTIVE:
            self.yy.update(frame)
        elif label == NOISE_ONLY:
            self.nn.update(frame)
        elif label == GLOBAL_ONLY:
            if self.glob is not None:
                self.glob.update(frame)
        else:
            raise ValueError(f"unknown activity label {label!r}")

    @property
    def ready(self) -> bool:
        ok = self.yy.ready() and self.nn.ready()
        if self.glob is not None:
            ok = ok and self.glob.ready()
        return ok

    @property
    def desired_ready(self) -> bool:
        return self.yy.ready() and self.nn.ready()

    def scms(self) -> ScmSet:
        """Current estimates; raises :class:`ScmNotReady` if a segment is empty."""
        if not self.desired_ready:
            raise ScmNotReady("R_yy or R_nn has not seen enough frames")
        if self._cache is not None:
            return self._cache
        R_yy = self.yy.corrected
        R_nn = self.nn.corrected
        R_ss = floor_psd(R_yy - R_nn)
        R_glob = None
        if self.glob is not None and self.glob.ready():
            R_glob = self.glob.corrected
        self._cache = ScmSet(R_yy, R_nn, R_ss, tuple(self.sizes), R_glob, provenance="online")
        return self._cache


def segmented_scms(frames: Iterable[np.ndarray], schedule: Sequence[int],
                   forgetting: float = 0.995, frame_size: int = 250,
                   sizes: Sequence[int] = ()) -> ScmSet:
    """Run a :class:`SegmentedScm` over a whole frame stream.

    ``frames`` yields observed frames ``(..., C, B)`` already gated by the
    activity label of the matching ``schedule`` entry.
    """
    seg = None
    n = 0
    for frame, label in zip(frames, schedule):
        frame = np.asarray(frame)
        if seg is None:
            seg = SegmentedScm(frame.shape[-2], tuple(sizes), forgetting, frame_size,
                               frame.shape[:-2])
        seg.update(frame, int(label))
        n += 1
    if seg is None:
        raise ValueError("empty frame stream")
    if n != len(schedule):
        raise ValueError("schedule and frame stream lengths differ")
    return seg.scms()
