"""DANSE with sequential (round-robin) node updating in a fully connected WASN.

Node k broadcasts ``z_k = P_k^H y_k`` and solves an LMMSE problem on its
stacked observation ``[y_k; z_q (q != k, ascending)]``. After an update the
node's fusion matrix becomes the block of its filter applied to ``y_k``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .filters import solve_mwf
from .scene import network_selection, selection_matrix
from .scm import ScmNotReady, ScmSet, SegmentedScm, herm, node_slices


def fuse(P: np.ndarray, y_k: np.ndarray) -> np.ndarray:
    """Fused signal ``P^H y_k`` (J channels)."""
    if P.shape[-2] != y_k.shape[-2]:
        raise ValueError(f"fusion matrix expects {P.shape[-2]} channels, got {y_k.shape[-2]}")
    return herm(P) @ y_k


def assemble_observation(y_k: np.ndarray, fused: Mapping[int, np.ndarray], k: int,
                         n_nodes: int) -> np.ndarray:
    """Stack ``y_k`` with the other nodes' fused signals in ascending node order."""
    parts = [y_k]
    for q in range(n_nodes):
        if q == k:
            continue
        if q not in fused:
            raise KeyError(f"node {k} is missing the fused signal of node {q}")
        parts.append(fused[q])
    return np.concatenate(parts, axis=-2)


def tilde_dim(sizes: Sequence[int], k: int, n_channels: int) -> int:
    return sizes[k] + n_channels * (len(sizes) - 1)


def tilde_embedding(fusion: Sequence[np.ndarray], sizes: Sequence[int], k: int) -> np.ndarray:
    """Matrix C_k with ``y_tilde_k = C_k^H y``.

    Columns of node k's own sensors hold an identity block, the columns of
    neighbor q hold ``P_q`` at q's rows. A tilde-domain filter ``W`` thus
    acts on the raw network signal as ``C_k W``.
    """
    J = fusion[0].shape[-1]
    batch = np.broadcast_shapes(*(P.shape[:-2] for P in fusion))
    rows = node_slices(sizes)
    C = np.zeros(batch + (sum(sizes), tilde_dim(sizes, k, J)), dtype=complex)
    C[..., rows[k], :sizes[k]] = np.eye(sizes[k])
    col = sizes[k]
    for q in range(len(sizes)):
        if q == k:
            continue
        C[..., rows[q], col:col + J] = fusion[q]
        col += J
    return C


def tilde_true_scms(scms: ScmSet, fusion: Sequence[np.ndarray], k: int,
                    n_channels: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(R~_yy, R~_yd)`` of node k obtained by propagating network SCMs."""
    C = tilde_embedding(fusion, scms.sizes, k)
    E = network_selection(scms.sizes, k, n_channels)
    return herm(C) @ scms.R_yy @ C, herm(C) @ (scms.R_ss @ E)


def check_span_condition(config, n_channels: int | None = None) -> bool:
    """Whether J spans the desired latent subspace of every node.

    Necessary but not sufficient for DANSE optimality; used to label runs,
    never to block them. ``n_channels`` defaults to ``config.n_channels``.
    """
    J = config.n_channels if n_channels is None else n_channels
    return J >= config.n_global_desired + max(config.n_local_desired, default=0)


@dataclass(frozen=True, eq=False)
class DanseState:
    fusion: tuple[np.ndarray, ...]
    tilde: tuple[np.ndarray, ...]
    sizes: tuple[int, ...]
    iteration: int = 0

    @property
    def n_channels(self) -> int:
        return self.fusion[0].shape[-1]

    @property
    def next_node(self) -> int:
        return self.iteration % len(self.sizes)

    def split(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """``(W_kk, G_{k,-k})`` partition of node k's tilde filter."""
        W = self.tilde[k]
        return W[..., :self.sizes[k], :], W[..., self.sizes[k]:, :]

    def network_wide(self, k: int) -> np.ndarray:
        return tilde_embedding(self.fusion, self.sizes, k) @ self.tilde[k]


def init_danse_state(sizes: Sequence[int], n_channels: int, batch_shape=()) -> DanseState:
    """Fusion matrices start as the target selections, tilde filters pass y_k through."""
    sizes = tuple(sizes)
    shape = lambda a: np.broadcast_to(a, tuple(batch_shape) + a.shape).astype(complex)
    P = tuple(shape(selection_matrix(m, n_channels)) for m in sizes)
    W = tuple(shape(selection_matrix(tilde_dim(sizes, k, n_channels), n_channels))
              for k in range(len(sizes)))
    return DanseState(P, W, sizes, 0)


def danse_update(state: DanseState, k: int, R_tilde_yy: np.ndarray,
                 R_tilde_yd: np.ndarray) -> DanseState:
    """Node k solves its tilde-domain LMMSE problem and refreshes ``P_k``."""
    W = solve_mwf(R_tilde_yy, R_tilde_yd).W
    tilde = list(state.tilde)
    fusion = list(state.fusion)
    tilde[k] = W
    fusion[k] = W[..., :state.sizes[k], :]
    return DanseState(tuple(fusion), tuple(tilde), state.sizes, state.iteration + 1)


def skip_turn(state: DanseState) -> DanseState:
    return replace(state, iteration=state.iteration + 1)


def danse_true_updates(scms: ScmSet, n_channels: int, n_updates: int,
                       state: DanseState | None = None):
    """Yield the state after each of ``n_updates`` sequential updates (true SCMs)."""
    if state is None:
        state = init_danse_state(scms.sizes, n_channels, scms.R_yy.shape[:-2])
    for _ in range(n_updates):
        k = state.next_node
        state = danse_update(state, k, *tilde_true_scms(scms, state.fusion, k, n_channels))
        yield state


class DanseEstimator:
    """Frame-by-frame sequential DANSE, one node update per frame.

    With ``true_scms`` the updating node uses exact tilde SCMs; otherwise
    every node keeps label-segmented online estimates of its tilde SCMs,
    fed with the fused signals current at each frame.
    """

    kind = "danse"

    def __init__(self, sizes, n_channels: int, true_scms: ScmSet | None = None,
                 forgetting: float = 0.995, frame_size: int = 250, batch_shape=(),
                 min_frames: int | None = None):
        self.sizes = tuple(sizes)
        self.J = n_channels
        self._true = true_scms
        self.state = init_danse_state(self.sizes, n_channels, batch_shape)
        self._slices = node_slices(self.sizes)
        self.tilde_scms = [
            SegmentedScm(tilde_dim(self.sizes, k, n_channels), forgetting=forgetting,
                         frame_size=frame_size, batch_shape=tuple(batch_shape),
                         track_global=False, min_frames=min_frames)
            for k in range(len(self.sizes))
        ]

    @property
    def label(self) -> str:
        return f"DANSE_{self.J}"

    def observe(self, y: np.ndarray) -> list[np.ndarray]:
        """Tilde-domain observations of all nodes for a network frame ``y``."""
        K = len(self.sizes)
        z = {q: fuse(self.state.fusion[q], y[..., s, :]) for q, s in enumerate(self._slices)}
        return [assemble_observation(y[..., s, :], z, k, K) for k, s in enumerate(self._slices)]

    def step(self, net, observed: np.ndarray, label: int) -> None:
        k = self.state.next_node
        if self._true is not None:
            R = tilde_true_scms(self._true, self.state.fusion, k, self.J)
            self.state = danse_update(self.state, k, *R)
            return
        for seg, yt in zip(self.tilde_scms, self.observe(observed)):
            seg.update(yt, label)
        try:
            t = self.tilde_scms[k].scms()
        except ScmNotReady:
            self.state = skip_turn(self.state)
            return
        E = selection_matrix(t.R_yy.shape[-1], self.J)
        self.state = danse_update(self.state, k, t.R_yy, t.R_ss @ E)

    def estimate(self, y: np.ndarray) -> list[np.ndarray]:
        return [herm(W) @ yt for W, yt in zip(self.state.tilde, self.observe(y))]

    def network_wide(self) -> list[np.ndarray]:
        return [self.state.network_wide(k) for k in range(len(self.sizes))]
