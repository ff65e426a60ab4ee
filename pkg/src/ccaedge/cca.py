"""Two-view canonical correlation analysis.

Views are passed as 2-D arrays laid out ``(dims, T)``: one row per (real or
complex) sensor dimension, one column per time sample.  Real views are the
normal case for detection; complex views are accepted everywhere so that the
complex-domain form of the problem (``R12 = Y1 Y2^H / T``) can be solved with
the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, SingularCorrelationError

__all__ = [
    "CorrelationSet",
    "CanonicalSolution",
    "center_rows",
    "sample_correlations",
    "default_ridge",
    "solve_cca",
    "count_above",
    "project",
    "maxvar_objective",
    "MAX_CONDITION",
]

#: Largest condition number accepted for a regularized autocorrelation.
MAX_CONDITION = 1e12

#: Relative ridge used when the caller does not pass one.
DEFAULT_RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class CorrelationSet:
    """Sample auto- and cross-correlations of a pair of views."""

    r11: np.ndarray
    r22: np.ndarray
    r12: np.ndarray

    @property
    def dims(self) -> tuple[int, int]:
        return self.r11.shape[0], self.r22.shape[0]


@dataclass(frozen=True)
class CanonicalSolution:
    """Canonical directions ``q1``, ``q2`` (one column per pair) and
    correlations ``rho`` sorted in descending order."""

    q1: np.ndarray
    q2: np.ndarray
    rho: np.ndarray
    ridge: float

    @property
    def n_components(self) -> int:
        return self.rho.shape[0]


def _as_view(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 2:
        raise DimensionError(f"{name} must be 2-D (dims x T), got shape {y.shape}")
    if not np.iscomplexobj(y):
        y = y.astype(float, copy=False)
    return y


def center_rows(y) -> np.ndarray:
    """Return a copy of `y` with each row's sample mean removed."""
    y = _as_view(y)
    if y.shape[1] < 1:
        raise DimensionError("center_rows needs at least one column")
    return y - y.mean(axis=1, keepdims=True)


def sample_correlations(y1, y2) -> CorrelationSet:
    """Sample correlations ``R_ll = Y_l Y_l^H / T`` and ``R_12 = Y_1 Y_2^H / T``.

    No centering is applied; call :func:`center_rows` first if the views are
    not zero-mean.
    """
    y1 = _as_view(y1, "y1")
    y2 = _as_view(y2, "y2")
    if y1.shape[1] != y2.shape[1]:
        raise DimensionError(
            f"views must share the sample count: y1 {y1.shape} vs y2 {y2.shape}"
        )
    t = y1.shape[1]
    if t < 1:
        raise DimensionError("views must contain at least one sample")
    r11 = y1 @ y1.conj().T / t
    r22 = y2 @ y2.conj().T / t
    r12 = y1 @ y2.conj().T / t
    # enforce exact (Hermitian) symmetry lost to rounding
    r11 = (r11 + r11.conj().T) / 2
    r22 = (r22 + r22.conj().T) / 2
    return CorrelationSet(r11=r11, r22=r22, r12=r12)


def default_ridge(corr: CorrelationSet) -> float:
    """``1e-8`` times the mean diagonal of both autocorrelations."""
    d1, d2 = corr.dims
    scale = (np.trace(corr.r11).real + np.trace(corr.r22).real) / (d1 + d2)
    return DEFAULT_RIDGE_SCALE * float(scale)


def _regularized_cholesky(r: np.ndarray, ridge: float, view: int) -> np.ndarray:
    reg = r + ridge * np.eye(r.shape[0])
    eigs = np.linalg.eigvalsh(reg)
    top = eigs[-1]
    if top <= 0 or eigs[0] <= 0 or top / eigs[0] > MAX_CONDITION:
        cond = np.inf if eigs[0] <= 0 else top / eigs[0]
        raise SingularCorrelationError(
            f"autocorrelation of view {view} is singular after ridge={ridge:g} "
            f"(condition number {cond:.3g} > {MAX_CONDITION:g}); use a larger ridge"
        )
    return np.linalg.cholesky(reg)


def _fix_signs(q1: np.ndarray) -> np.ndarray:
    """Phase per column that makes the largest-magnitude entry of q1 real positive."""
    idx = np.argmax(np.abs(q1), axis=0)
    lead = q1[idx, np.arange(q1.shape[1])]
    mag = np.abs(lead)
    mag[mag == 0] = 1.0
    phase = lead / mag
    phase[phase == 0] = 1.0
    return phase.conj()


def solve_cca(corr: CorrelationSet, n_components: int, ridge: float | None = None
              ) -> CanonicalSolution:
    """Top `n_components` canonical pairs of two views.

    Solves ``R12 R22^{-1} R21 q1 = rho^2 R11 q1`` by Cholesky whitening of the
    (ridge-regularized) autocorrelations followed by an SVD of the whitened
    cross-correlation.  The view-2 directions are recovered from the view-1
    directions as ``q2 = R22^{-1} R21 q1 / rho`` and renormalized to unit
    variance.  Each q1 column is sign-normalized so that its largest-magnitude
    entry is positive (for complex views: real positive).

    Parameters
    ----------
    corr : CorrelationSet
        Output of :func:`sample_correlations`.
    n_components : int
        Number of canonical pairs to return.
    ridge : float, optional
        Non-negative diagonal loading added to both autocorrelations.  Defaults
        to :func:`default_ridge`.

    Returns
    -------
    CanonicalSolution
    """
    d1, d2 = corr.dims
    if not 0 <= n_components <= min(d1, d2):
        raise DimensionError(
            f"n_components={n_components} exceeds min(view dims)={min(d1, d2)}"
        )
    if corr.r12.shape != (d1, d2):
        raise DimensionError(f"r12 shape {corr.r12.shape} does not match ({d1}, {d2})")
    if ridge is None:
        ridge = default_ridge(corr)
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge}")

    l1 = _regularized_cholesky(corr.r11, ridge, 1)
    l2 = _regularized_cholesky(corr.r22, ridge, 2)
    # C = L1^{-1} R12 L2^{-H}
    tmp = linalg.solve_triangular(l1, corr.r12, lower=True)
    c = linalg.solve_triangular(l2, tmp.conj().T, lower=True).conj().T
    u, s, _ = np.linalg.svd(c)
    n = n_components
    rho = np.clip(s[:n], 0.0, None)
    q1 = linalg.solve_triangular(l1.conj().T, u[:, :n], lower=False)
    q1 = q1 * _fix_signs(q1)

    # q2 from q1, then unit variance under the regularized view-2 metric
    r22_reg = corr.r22 + ridge * np.eye(d2)
    q2 = linalg.cho_solve((l2, True), corr.r12.conj().T @ q1)
    norms = np.sqrt(np.abs(np.einsum("ij,ij->j", q2.conj(), r22_reg @ q2)))
    tiny = norms <= 1e-300
    norms[tiny] = 1.0
    q2 = q2 / norms
    if np.any(tiny):
        # zero correlation: no coupling information, fall back to the SVD partner
        _, _, vh = np.linalg.svd(c)
        fallback = linalg.solve_triangular(l2.conj().T, vh.conj().T[:, :n], lower=False)
        q2[:, tiny] = fallback[:, tiny]
    if not np.iscomplexobj(corr.r11) and not np.iscomplexobj(corr.r12):
        q1, q2 = q1.real, q2.real
    return CanonicalSolution(q1=q1, q2=q2, rho=rho, ridge=float(ridge))


def count_above(rho, rho_min: float = 0.5) -> int:
    """Number of canonical correlations at or above `rho_min`."""
    return int(np.count_nonzero(np.asarray(rho) >= rho_min))


def project(y, q) -> np.ndarray:
    """Canonical variates ``Y^H Q`` (T x N)."""
    y = _as_view(y)
    q = np.asarray(q)
    if q.ndim == 1:
        q = q[:, None]
    if q.shape[0] != y.shape[0]:
        raise DimensionError(f"q has {q.shape[0]} rows but the view has {y.shape[0]}")
    return y.conj().T @ q


def maxvar_objective(g, projections) -> float:
    """Sum of squared Frobenius distances between each projection and `g`."""
    g = np.asarray(g)
    total = 0.0
    for i, p in enumerate(projections):
        p = np.asarray(p)
        if p.shape != g.shape:
            raise DimensionError(f"projection {i} has shape {p.shape}, expected {g.shape}")
        total += float(np.sum(np.abs(p - g) ** 2))
    return total
