"""Blind delay search between two base stations by maximizing the first
canonical correlation over candidate offsets."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import cca
from .analysis import theoretical_rho_max
from .errors import DimensionError

__all__ = [
    "PowerResult",
    "SyncTrace",
    "first_canonical_correlation",
    "peak_threshold",
    "cca_sync",
    "align_and_extract",
]

ABSOLUTE_PEAK_THRESHOLD = 0.4


@dataclass(frozen=True)
class PowerResult:
    rho1: float
    q1: np.ndarray
    q2: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class SyncTrace:
    """First canonical correlation per candidate view-2 offset."""

    offsets: np.ndarray
    rho1: np.ndarray
    tau_star: int
    window: tuple[int, int]
    tau1_anchor: int
    n_solves: int
    peak_found: bool
    threshold: float

    def peak_ratio(self) -> float:
        """Peak ρ₁ over the median off-peak ρ₁."""
        off = self.rho1[self.offsets != self.tau_star]
        if off.size == 0:
            return float("inf")
        med = float(np.median(off))
        return float(np.max(self.rho1)) / med if med > 0 else float("inf")


def _whitened_operator(y1, y2, ridge):
    corr = cca.sample_correlations(y1, y2)
    if ridge is None:
        ridge = cca.default_ridge(corr)
    l1 = cca._regularized_cholesky(corr.r11, ridge, 1)
    l2 = cca._regularized_cholesky(corr.r22, ridge, 2)
    tmp = linalg.solve_triangular(l1, corr.r12, lower=True)
    c = linalg.solve_triangular(l2, tmp.conj().T, lower=True).conj().T
    return c, l1, l2


def first_canonical_correlation(y1_window, y2_window, ridge: float | None = None,
                                max_iters: int = 200, tol: float = 1e-6,
                                start: np.ndarray | None = None) -> PowerResult:
    """Dominant canonical pair by power iteration on the whitened operator.

    Alternates ``v <- C^H u``, ``u <- C v`` on ``C = L1^{-1} R12 L2^{-H}`` and
    stops once the singular-pair residual ``||C v - rho u||`` drops below
    `tol`.  Hitting `max_iters` first is reported through ``converged=False``
    rather than raised.

    Parameters
    ----------
    y1_window, y2_window : array_like
        Views with equal column counts.
    start : ndarray, optional
        Initial whitened view-1 direction (warm start).
    """
    y1 = np.asarray(y1_window)
    y2 = np.asarray(y2_window)
    if y1.shape[1] != y2.shape[1]:
        raise DimensionError(f"windows must have equal length, got {y1.shape[1]} and {y2.shape[1]}")
    c, l1, l2 = _whitened_operator(y1, y2, ridge)
    d1 = c.shape[0]
    if start is None or start.shape != (d1,):
        # deterministic start with weight on every coordinate
        u = np.ones(d1, dtype=c.dtype) / np.sqrt(d1)
    else:
        u = start / np.linalg.norm(start)
    rho, converged, it = 0.0, False, 0
    v = np.zeros(c.shape[1], dtype=c.dtype)
    for it in range(1, max_iters + 1):
        v = c.conj().T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            converged = True
            break
        v /= nv
        w = c @ v
        rho = float(np.linalg.norm(w))
        if rho == 0.0:
            converged = True
            break
        resid = np.linalg.norm(w - rho * u)
        u = w / rho
        if resid <= tol:
            converged = True
            break
    q1 = linalg.solve_triangular(l1.conj().T, u, lower=False)
    q2 = linalg.solve_triangular(l2.conj().T, v, lower=False)
    if not np.iscomplexobj(y1) and not np.iscomplexobj(y2):
        q1, q2 = q1.real, q2.real
    return PowerResult(rho1=rho, q1=q1, q2=q2, iterations=it, converged=converged)


def peak_threshold(gamma_e: float | None = None) -> float:
    """ρ₁ level below which a search reports no peak."""
    if gamma_e is None:
        return ABSOLUTE_PEAK_THRESHOLD
    return 0.5 * theoretical_rho_max(gamma_e)


def _rho_at(y1_win, y2_long, tau, t_block, ridge):
    y2_win = y2_long[:, tau: tau + t_block]
    res = first_canonical_correlation(y1_win, y2_win, ridge)
    if res.converged:
        return res.rho1
    # clustered top singular values: fall back to the dense solver
    c, _, _ = _whitened_operator(y1_win, y2_win, ridge)
    return float(np.linalg.svd(c, compute_uv=False)[0])


def cca_sync(y1_long, y2_long, t_block: int, window: tuple[int, int] | None = None,
             tau1_anchor: int = 0, *, ridge: float | None = None,
             gamma_e: float | None = None, workers: int = 1) -> SyncTrace:
    """Search the view-2 offset that maximizes ρ₁ against a fixed view-1 window.

    Parameters
    ----------
    y1_long, y2_long : array_like, shape (dims, T_tilde)
        Received blocks longer than the transmitted block.
    t_block : int
        Transmitted block length T.
    window : (w_L, w_R), optional
        Inclusive range of candidate offsets; defaults to ``(0, T_tilde - T)``.
    tau1_anchor : int
        Start column of the view-1 window.
    gamma_e : float, optional
        Linear edge SNR; sets the no-peak threshold via :func:`peak_threshold`.
    workers : int
        Threads used to evaluate offsets; the result does not depend on it.
    """
    y1_long = np.asarray(y1_long)
    y2_long = np.asarray(y2_long)
    t_tilde = min(y1_long.shape[1], y2_long.shape[1])
    if t_block < 1:
        raise ValueError(f"t_block must be positive, got {t_block}")
    if window is None:
        window = (0, y2_long.shape[1] - t_block)
    w_l, w_r = int(window[0]), int(window[1])
    if w_l < 0 or w_r < w_l or w_r + t_block > y2_long.shape[1]:
        raise ValueError(
            f"window [{w_l}, {w_r}] with T={t_block} does not fit in {y2_long.shape[1]} columns "
            f"(need 0 <= w_L <= w_R <= T_tilde - T)"
        )
    if not 0 <= tau1_anchor <= y1_long.shape[1] - t_block:
        raise ValueError(f"tau1_anchor={tau1_anchor} leaves no full view-1 window of {t_block} columns")
    del t_tilde
    y1_win = y1_long[:, tau1_anchor: tau1_anchor + t_block]
    offsets = np.arange(w_l, w_r + 1)

    def solve(tau):
        return _rho_at(y1_win, y2_long, int(tau), t_block, ridge)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rho = np.array(list(pool.map(solve, offsets)))
    else:
        rho = np.array([solve(tau) for tau in offsets])
    best = int(np.argmax(rho))  # first maximum, i.e. the smallest offset on ties
    thr = peak_threshold(gamma_e)
    return SyncTrace(offsets=offsets, rho1=rho, tau_star=int(offsets[best]), window=(w_l, w_r),
                     tau1_anchor=int(tau1_anchor), n_solves=int(offsets.size),
                     peak_found=bool(rho[best] >= thr), threshold=thr)


def align_and_extract(y1_long, y2_long, trace: SyncTrace, t_block: int):
    """The two T-column blocks selected by a sync trace."""
    y1_long = np.asarray(y1_long)
    y2_long = np.asarray(y2_long)
    t1, t2 = trace.tau1_anchor, trace.tau_star
    if t1 + t_block > y1_long.shape[1] or t2 + t_block > y2_long.shape[1] or min(t1, t2) < 0:
        raise ValueError(f"offsets ({t1}, {t2}) with T={t_block} exceed the received blocks")
    return y1_long[:, t1: t1 + t_block], y2_long[:, t2: t2 + t_block]
