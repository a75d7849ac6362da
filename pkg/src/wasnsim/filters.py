"""Closed-form LMMSE (multichannel Wiener) filters.

Everything here is batched over leading axes: ``R`` of shape ``(..., n, n)``
and right-hand sides ``(..., n, J)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .scene import network_selection, selection_matrix
from .scm import ScmSet, herm, hermitize, node_slices

HERMITIAN_TOL = 1e-8
PIVOT_RATIO = 1e-12
EPS_START = 1e-12
EPS_MAX = 1e-4


class NotHermitianError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass
class MwfFilter:
    """Solution ``W`` of ``(R + eps*I) W = R_yd``.

    ``eps`` holds the absolute diagonal loading used per batch item (0 when
    the unregularized factorization was accepted).
    """

    W: np.ndarray
    eps: np.ndarray
    system: np.ndarray = field(repr=False)

    @cached_property
    def condition(self) -> np.ndarray:
        n = self.system.shape[-1]
        return np.linalg.cond(self.system + self.eps[..., None, None] * np.eye(n))


def _chol_solve(R: np.ndarray, b: np.ndarray, check_pivots: bool) -> np.ndarray | None:
    try:
        L = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        return None
    if check_pivots:
        d = np.abs(np.diagonal(L, axis1=-2, axis2=-1)) ** 2
        if np.any(d.min(axis=-1) <= PIVOT_RATIO * d.max(axis=-1)):
            return None
    return np.linalg.solve(herm(L), np.linalg.solve(L, b))


def _solve_one(R: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    n = R.shape[-1]
    load = np.real(np.trace(R)) / n
    if load <= 0:
        load = 1.0
    rel = EPS_START
    while rel <= EPS_MAX * (1 + 1e-9):
        W = _chol_solve(R + rel * load * np.eye(n), b, check_pivots=False)
        if W is not None:
            return W, rel * load
        rel *= 10
    eps = EPS_MAX * load
    try:
        return np.linalg.solve(R + eps * np.eye(n), b), eps
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("MWF system singular after maximal regularization") from exc


def solve_mwf(R_yy: np.ndarray, R_yd: np.ndarray) -> MwfFilter:
    """Hermitian solve of the Wiener-Hopf equations ``R_yy W = R_yd``.

    The unloaded Cholesky factorization is tried first and accepted when
    its smallest pivot is not negligible. Otherwise diagonal loading starts
    at ``1e-12 * trace/n`` and grows tenfold up to ``1e-4 * trace/n``; a
    pivoted LU solve at maximal loading is the last resort.
    """
    R = np.asarray(R_yy, dtype=complex)
    b = np.asarray(R_yd, dtype=complex)
    if R.shape[-1] != R.shape[-2]:
        raise ValueError(f"R_yy must be square, got {R.shape}")
    if b.shape[-2] != R.shape[-1]:
        raise ValueError(f"R_yd has {b.shape[-2]} rows, R_yy is {R.shape[-1]}x{R.shape[-1]}")
    scale = np.max(np.abs(R)) if R.size else 0.0
    if R.size and np.max(np.abs(R - herm(R))) > HERMITIAN_TOL * max(scale, 1e-300):
        raise NotHermitianError("R_yy is not Hermitian")
    R = hermitize(R)
    batch = np.broadcast_shapes(R.shape[:-2], b.shape[:-2])
    R = np.broadcast_to(R, batch + R.shape[-2:])
    b = np.broadcast_to(b, batch + b.shape[-2:])

    W = _chol_solve(R, b, check_pivots=True)
    eps = np.zeros(batch)
    if W is None:
        n, J = R.shape[-1], b.shape[-1]
        Rf, bf = R.reshape(-1, n, n), b.reshape(-1, n, J)
        Wf = np.empty_like(bf)
        ef = eps.reshape(-1)
        for i in range(Rf.shape[0]):
            w = _chol_solve(Rf[i], bf[i], check_pivots=True)
            if w is None:
                w, ef[i] = _solve_one(Rf[i], bf[i])
            Wf[i] = w
        W = Wf.reshape(batch + (n, J))
        eps = ef.reshape(batch)
    return MwfFilter(W, eps, R)


def centralized_filter(scms: ScmSet, E_k: np.ndarray) -> MwfFilter:
    """Network-wide MWF ``R_yy^{-1} R_ss E_k`` for one node's target."""
    return solve_mwf(scms.R_yy, scms.R_ss @ E_k)


def centralized_filters(scms: ScmSet, n_channels: int) -> list[np.ndarray]:
    """Centralized filters of all nodes from a single factorization."""
    sizes = scms.sizes
    E = np.concatenate([network_selection(sizes, k, n_channels) for k in range(len(sizes))],
                       axis=1)
    W = solve_mwf(scms.R_yy, scms.R_ss @ E).W
    return [W[..., k * n_channels:(k + 1) * n_channels] for k in range(len(sizes))]


def local_filter(scms: ScmSet, k: int, n_channels: int) -> MwfFilter:
    """Node-only MWF estimating d_k from the node's own sensors."""
    E = selection_matrix(scms.sizes[k], n_channels)
    return solve_mwf(scms.yy_local(k), scms.ss_local(k) @ E)


def local_global_fusion_filter(scms: ScmSet, k: int, n_channels: int) -> MwfFilter:
    """iDANSE fusion filter: LMMSE estimate of the global component target g_k.

    ``g_k`` is the selected channels of the node's global component, so the
    cross-correlation reduces to ``R_glob_kk E_kk``.
    """
    E = selection_matrix(scms.sizes[k], n_channels)
    return solve_mwf(scms.yy_local(k), scms.glob_local(k) @ E)


def embed_local(W_local: np.ndarray, sizes, k: int) -> np.ndarray:
    """Zero-pad a node filter to the network dimension (network-wide view)."""
    out = np.zeros(W_local.shape[:-2] + (sum(sizes), W_local.shape[-1]), dtype=complex)
    out[..., node_slices(sizes)[k], :] = W_local
    return out


def unprocessed_filters(sizes, n_channels: int, batch_shape=()) -> list[np.ndarray]:
    """Network-wide filters that pass each node's target channels through."""
    M = sum(sizes)
    return [np.broadcast_to(embed_local(selection_matrix(s, n_channels), sizes, k),
                            tuple(batch_shape) + (M, n_channels)).copy()
            for k, s in enumerate(sizes)]


class CentralizedEstimator:
    """Centralized MWF as a frame-by-frame estimator (fusion center view)."""

    kind = "centralized"

    def __init__(self, sizes, n_channels: int, true_scms: ScmSet | None = None,
                 batch_shape=()):
        self.sizes = tuple(sizes)
        self.J = n_channels
        self._true = true_scms
        self.filters = unprocessed_filters(self.sizes, n_channels, batch_shape)
        if true_scms is not None:
            self.filters = centralized_filters(true_scms, n_channels)

    @property
    def label(self) -> str:
        return "centralized"

    def step(self, net, observed, label) -> None:
        if self._true is not None or not net.desired_ready:
            return
        self.filters = centralized_filters(net.scms(), self.J)

    def estimate(self, y: np.ndarray) -> list[np.ndarray]:
        return [herm(W) @ y for W in self.filters]

    def network_wide(self) -> list[np.ndarray]:
        return list(self.filters)


class LocalEstimator(CentralizedEstimator):
    """Each node filters its own sensors only."""

    kind = "local"

    def __init__(self, sizes, n_channels: int, true_scms: ScmSet | None = None,
                 batch_shape=()):
        super().__init__(sizes, n_channels, None, batch_shape)
        self._true = true_scms
        if true_scms is not None:
            self._set(true_scms)

    @property
    def label(self) -> str:
        return "local"

    def _set(self, scms: ScmSet) -> None:
        self.filters = [embed_local(local_filter(scms, k, self.J).W, self.sizes, k)
                        for k in range(len(self.sizes))]

    def step(self, net, observed, label) -> None:
        if self._true is not None or not net.desired_ready:
            return
        self._set(net.scms())
