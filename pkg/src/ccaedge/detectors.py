"""Cell-edge detectors: blind CCA + RACMA and the oracle-CSI SIC baselines."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import cca
from .errors import DimensionError, EnumerationLimitError, NonIdentifiableError
from .racma import UnmixResult, project_rows, racma_factorize, resolve_ambiguity
from .signal import complex_to_real_stack

__all__ = [
    "DETECTORS",
    "DetectionRecord",
    "CcaRacmaOutput",
    "SicOutput",
    "detect_cca_racma",
    "zf_detect",
    "zf_sic_cancel",
    "ml_sic_cancel",
    "zf_sic_edge_detect",
    "ml_sic_edge_detect",
    "bit_error_rate",
    "dominant_mixture",
]

DETECTORS = ("cca_racma", "zf_sic", "ml_sic", "zf_sic_best", "ml_sic_best")


@dataclass(frozen=True)
class DetectionRecord:
    """Bit-error count of one detector on one block, after ambiguity
    resolution against the transmitted edge-user symbols."""

    detector_id: str
    bit_errors: int
    bits_total: int
    per_user_errors: np.ndarray
    aux: dict = field(default_factory=dict)

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_total if self.bits_total else 0.0


@dataclass(frozen=True)
class CcaRacmaOutput:
    s_hat: np.ndarray  # (T, K_e)
    canonical: cca.CanonicalSolution
    unmix: UnmixResult


@dataclass(frozen=True)
class SicOutput:
    """Edge estimates from the jointly processed residuals and from each BS
    residual on its own."""

    joint: np.ndarray
    per_bs: tuple[np.ndarray, np.ndarray]


def detect_cca_racma(y1, y2, k_e: int, ridge: float | None = None, *,
                     sweeps: int = 1) -> CcaRacmaOutput:
    """Blind edge-user detection from two synchronized real-stacked views.

    Solves CCA for the top `k_e` pairs, forms ``G = [Y1^T Q1; Y2^T Q2]``
    (2T x k_e) and unmixes it with RACMA.  The two halves of the stacked
    output are fused into one T x k_e decision with the fitted mixing matrix
    (least-squares +/-1 fit of the averaged canonical variates).
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if y1.shape[1] != y2.shape[1]:
        raise DimensionError(f"views must be aligned: {y1.shape} vs {y2.shape}")
    t = y1.shape[1]
    sol = cca.solve_cca(cca.sample_correlations(y1, y2), k_e, ridge)
    g1 = cca.project(y1, sol.q1)
    g2 = cca.project(y2, sol.q2)
    unmix = racma_factorize(np.concatenate([g1, g2], axis=0), sweeps=sweeps)
    if k_e == 0:
        s_hat = np.zeros((t, 0))
    else:
        s_hat = project_rows((g1 + g2) / 2.0, unmix.mixing_hat)
    return CcaRacmaOutput(s_hat=s_hat, canonical=sol, unmix=unmix)


def _hard(x):
    return np.where(x >= 0, 1.0, -1.0)


def zf_detect(y, h_known) -> np.ndarray:
    """Zero-forcing BPSK decisions ``sign(Re(pinv(H) Y))^T``, shape (T, K)."""
    y = y.y if hasattr(y, "y") else np.asarray(y)
    h = np.asarray(h_known)
    if h.ndim != 2 or h.shape[0] != y.shape[0]:
        raise DimensionError(f"channel {h.shape} does not match received block {y.shape}")
    if np.linalg.matrix_rank(h) < h.shape[1]:
        raise NonIdentifiableError("channel matrix is rank deficient; zero-forcing undefined")
    return _hard(np.real(np.linalg.pinv(h) @ y)).T


def zf_sic_cancel(y, h_center) -> tuple[np.ndarray, np.ndarray]:
    """Ordered ZF-SIC of known users; returns (residual, decisions T x K).

    Users are detected in decreasing order of ``||h_k||^2``; each is
    zero-forced against the not-yet-cancelled users, re-encoded and
    subtracted.
    """
    y = np.array(y.y if hasattr(y, "y") else y, dtype=complex)
    h = np.asarray(h_center)
    k = h.shape[1]
    decisions = np.zeros((y.shape[1], k))
    remaining = list(np.argsort(-np.sum(np.abs(h) ** 2, axis=0), kind="stable"))
    while remaining:
        sub = h[:, remaining]
        if np.linalg.matrix_rank(sub) < len(remaining):
            raise NonIdentifiableError("center-user channels are rank deficient")
        first = remaining[0]
        w = np.linalg.pinv(sub)[0]
        s = _hard(np.real(w @ y))
        decisions[:, first] = s
        y -= np.outer(h[:, first], s)
        remaining.pop(0)
    return y, decisions


def ml_sic_cancel(y, h_center, max_enum_users: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample ML detection of the known users, then cancellation.

    Every sample is matched against all ``2^K`` sign hypotheses of the known
    users; anything else in the block is treated as noise.
    """
    y = np.array(y.y if hasattr(y, "y") else y, dtype=complex)
    h = np.asarray(h_center)
    k = h.shape[1]
    if k > max_enum_users:
        raise EnumerationLimitError(
            f"ML-SIC enumerates 2^K hypotheses; K={k} exceeds max_enum_users={max_enum_users}"
        )
    if k == 0:
        return y, np.zeros((y.shape[1], 0))
    hyp = np.array(list(itertools.product((1.0, -1.0), repeat=k)))  # (2^k, k)
    pred = h @ hyp.T  # (M, 2^k)
    cost = np.sum(np.abs(pred) ** 2, axis=0)[None, :] - 2.0 * np.real(y.conj().T @ pred)
    decisions = hyp[np.argmin(cost, axis=1)]
    return y - h @ decisions.T, decisions


def dominant_mixture(x_real: np.ndarray, k: int) -> np.ndarray:
    """T x k mixture spanning the dominant k-dimensional row space of a
    (dims x T) real block."""
    u, s, vt = np.linalg.svd(x_real, full_matrices=False)
    return vt[:k].T * s[:k]


def _racma_on(blocks, k_e: int, sweeps: int) -> np.ndarray:
    stacked = np.concatenate([complex_to_real_stack(b) for b in blocks], axis=0)
    g = dominant_mixture(stacked, k_e)
    return racma_factorize(g, sweeps=sweeps).s_hat


def _sic_edge(cancel, y1, y2, h_center_1, h_center_2, k_e, sweeps):
    r1, _ = cancel(y1, h_center_1)
    r2, _ = cancel(y2, h_center_2)
    joint = _racma_on([r1, r2], k_e, sweeps)
    per_bs = (_racma_on([r1], k_e, sweeps), _racma_on([r2], k_e, sweeps))
    return SicOutput(joint=joint, per_bs=per_bs)


def zf_sic_edge_detect(y1, y2, h_center_1, h_center_2, k_e: int, *, sweeps: int = 1) -> SicOutput:
    """Oracle ZF-SIC baseline for the edge users.

    Each BS cancels its own center users with ordered ZF-SIC using their true
    channels.  The residuals are real-stacked, reduced to their dominant
    `k_e`-dimensional subspace and unmixed with RACMA, both jointly (both
    BS residuals stacked along the antenna axis) and per BS.
    """
    return _sic_edge(zf_sic_cancel, y1, y2, h_center_1, h_center_2, k_e, sweeps)


def ml_sic_edge_detect(y1, y2, h_center_1, h_center_2, k_e: int, max_enum_users: int = 4, *,
                       sweeps: int = 1) -> SicOutput:
    """Oracle ML-SIC baseline: like :func:`zf_sic_edge_detect` with per-sample
    exhaustive ML detection of the center users."""
    def cancel(y, h):
        return ml_sic_cancel(y, h, max_enum_users)
    return _sic_edge(cancel, y1, y2, h_center_1, h_center_2, k_e, sweeps)


def bit_error_rate(estimate, truth, detector_id: str = "", aux: dict | None = None) -> DetectionRecord:
    """Count bit errors after aligning the estimate's columns (permutation
    and sign) to the truth."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise DimensionError(f"estimate {estimate.shape} vs truth {truth.shape}")
    aligned = resolve_ambiguity(estimate, truth).aligned
    per_user = np.sum(aligned != truth, axis=0).astype(int)
    return DetectionRecord(detector_id=detector_id, bit_errors=int(per_user.sum()),
                           bits_total=int(truth.size), per_user_errors=per_user, aux=aux or {})
