"""Unmixing of binary (+/-1) sources from a linear mixture ``G = S P``.

:func:`racma_factorize` is the analytical constant-modulus algorithm for real
binary sources: the constant-modulus conditions ``(g_t w)^2 = 1`` are
linearized in the symmetric matrix ``w w^T``, the solution space is found as a
null space, and the individual unmixing vectors come out of a simultaneous
diagonalization of a basis of that space.
:func:`cm_oracle_factorize` solves the same problem exactly by exhaustive
search for tiny instances and serves as its test oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError, EnumerationLimitError, NonIdentifiableError

__all__ = [
    "UnmixResult",
    "Alignment",
    "min_rows",
    "racma_factorize",
    "project_rows",
    "cm_oracle_factorize",
    "resolve_ambiguity",
]

#: Row-wise projection enumerates all sign patterns up to this many sources.
ENUM_MAX_SOURCES = 8

ORACLE_MAX_ROWS = 16
ORACLE_MAX_SOURCES = 2


@dataclass(frozen=True)
class UnmixResult:
    """Binary estimate ``s_hat`` (+/-1 entries), fitted mixing matrix and the
    Frobenius residual ``||G - s_hat @ mixing_hat||``."""

    s_hat: np.ndarray
    mixing_hat: np.ndarray
    residual: float

    @property
    def condition(self) -> float:
        if self.mixing_hat.size == 0:
            return 1.0
        return float(np.linalg.cond(self.mixing_hat))


@dataclass(frozen=True)
class Alignment:
    """``aligned[:, j] = signs[j] * s_hat[:, permutation[j]]`` best matches
    column ``j`` of the reference."""

    aligned: np.ndarray
    permutation: tuple[int, ...]
    signs: tuple[int, ...]


def min_rows(k_e: int) -> int:
    """Smallest row count accepted by :func:`racma_factorize`."""
    return max(k_e * (k_e + 1), 8)


def _hard(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0, -1.0)


def _sign_patterns(k: int) -> np.ndarray:
    return np.array(list(itertools.product((1.0, -1.0), repeat=k)))


def project_rows(g: np.ndarray, mixing: np.ndarray) -> np.ndarray:
    """Per-row least-squares +/-1 fit: ``argmin_s ||g_t - s @ mixing||``.

    Exact enumeration for up to ``ENUM_MAX_SOURCES`` sources; beyond that the
    zero-forcing estimate ``sign(g pinv(mixing))``.
    """
    k = mixing.shape[0]
    if k > ENUM_MAX_SOURCES:
        return _hard(g @ np.linalg.pinv(mixing))
    hyp = _sign_patterns(k)
    pred = hyp @ mixing
    cost = np.sum(pred**2, axis=1)[None, :] - 2.0 * g @ pred.T
    return hyp[np.argmin(cost, axis=1)]


def _fit_mixing(s: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(s, g, rcond=None)[0]


def _sym_from_vec(vec: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((k, k))
    ii, jj = np.triu_indices(k)
    out[ii, jj] = vec
    out[jj, ii] = vec
    return out


def _simultaneous_diagonalizer(mats, rng: np.random.Generator) -> np.ndarray:
    """Columns w_k with ``mats[i] = W diag(.) W^T`` for every basis matrix.

    Right eigenvectors of ``B A^{-1}`` for two random combinations A, B of the
    basis.  Redrawn once if the eigenvalues come out complex or clustered; if
    that happens again the symmetric combination A is diagonalized instead.
    """
    k = mats[0].shape[0]
    stack = np.stack(mats)
    for _ in range(2):
        a, b = rng.standard_normal((2, len(mats)))
        ma = np.tensordot(a, stack, axes=1)
        mb = np.tensordot(b, stack, axes=1)
        try:
            pencil = np.linalg.solve(ma.T, mb.T).T
        except np.linalg.LinAlgError:
            continue
        evals, evecs = np.linalg.eig(pencil)
        scale = np.max(np.abs(evals)) or 1.0
        gaps = np.abs(evals[:, None] - evals[None, :]) + np.eye(k) * scale
        if np.max(np.abs(evals.imag)) <= 1e-8 * scale and np.min(gaps) > 1e-6 * scale:
            return evecs.real
    a = rng.standard_normal(len(mats))
    return np.linalg.eigh(np.tensordot(a, stack, axes=1))[1]


def racma_factorize(g, *, sweeps: int = 1, rng: np.random.Generator | None = None) -> UnmixResult:
    """Factor ``G ~ S P`` with +/-1 entries in ``S``.

    Parameters
    ----------
    g : array_like, shape (rows, k_e)
        Mixture; columns are the mixed sources' coordinates.
    sweeps : int
        Alternating least-squares refinement sweeps after the analytical step
        (re-fit P, re-project S row by row).
    rng : numpy.random.Generator, optional
        Source of the random combination coefficients used for the
        diagonalization.  A fixed internal seed is used when omitted, so the
        result is a deterministic function of `g`.

    Returns
    -------
    UnmixResult
        ``s_hat`` equals the true S up to column permutation and sign for
        noiseless, well-conditioned mixtures.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim != 2:
        raise DimensionError(f"mixture must be 2-D, got shape {g.shape}")
    rows, k = g.shape
    if k == 0:
        return UnmixResult(s_hat=np.zeros((rows, 0)), mixing_hat=np.zeros((0, 0)), residual=0.0)
    if rows < min_rows(k):
        raise NonIdentifiableError(f"{rows} rows are too few to unmix {k} sources (need {min_rows(k)})")
    rng = np.random.default_rng(0x5EED) if rng is None else rng

    u, sv, _ = np.linalg.svd(g, full_matrices=False)
    if sv[-1] <= sv[0] * max(rows, k) * np.finfo(float).eps:
        raise NonIdentifiableError(f"mixture rank is below the {k} requested sources")
    x = u * np.sqrt(rows)

    if k == 1:
        w = np.ones((1, 1))
    else:
        ii, jj = np.triu_indices(k)
        lin = x[:, ii] * x[:, jj] * np.where(ii == jj, 1.0, 2.0)
        lin -= lin.mean(axis=0)
        _, _, vt = np.linalg.svd(lin, full_matrices=False)
        basis = [_sym_from_vec(v, k) for v in vt[-k:]]
        w = _simultaneous_diagonalizer(basis, rng)

    s_hat = _hard(x @ w)
    mixing = _fit_mixing(s_hat, g)
    for _ in range(sweeps):
        s_hat = project_rows(g, mixing)
        mixing = _fit_mixing(s_hat, g)
    residual = float(np.linalg.norm(g - s_hat @ mixing))
    return UnmixResult(s_hat=s_hat, mixing_hat=mixing, residual=residual)


def cm_oracle_factorize(g, k_e: int, chunk: int = 256) -> UnmixResult:
    """Globally optimal +/-1 factorization by exhaustive search.

    Every +/-1 matrix S (up to the signed-permutation symmetry) is scored by
    the energy of G captured in its column space, so the least-squares P never
    has to be formed per candidate.  Limited to ``rows <= 16`` and
    ``k_e <= 2``.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    rows = g.shape[0]
    if rows > ORACLE_MAX_ROWS or k_e > ORACLE_MAX_SOURCES:
        raise EnumerationLimitError(
            f"oracle limited to rows <= {ORACLE_MAX_ROWS} and k_e <= {ORACLE_MAX_SOURCES}, "
            f"got rows={rows}, k_e={k_e}"
        )
    if k_e == 0:
        return UnmixResult(s_hat=np.zeros((rows, 0)), mixing_hat=np.zeros((0, g.shape[1])),
                           residual=float(np.linalg.norm(g)))
    # first entry fixed to +1: the other sign gives the same column space
    tails = _sign_patterns(rows - 1)
    cands = np.concatenate([np.ones((tails.shape[0], 1)), tails], axis=1)
    proj = cands @ g
    energy = np.sum(proj**2, axis=1)

    if k_e == 1:
        best = int(np.argmax(energy))
        s_hat = cands[best][:, None]
    else:
        n = cands.shape[0]
        best_score, best_pair = -np.inf, (0, 0)
        for start in range(0, n, chunk):
            sl = slice(start, min(start + chunk, n))
            c = cands[sl] @ cands.T
            cross = proj[sl] @ proj.T
            det = rows**2 - c**2
            rank1 = det <= 0.5
            with np.errstate(divide="ignore", invalid="ignore"):
                score = (rows * (energy[sl, None] + energy[None, :]) - 2.0 * c * cross) / det
            score = np.where(rank1, energy[sl, None] / rows, score)
            flat = int(np.argmax(score))
            if score.flat[flat] > best_score:
                best_score = float(score.flat[flat])
                best_pair = (start + flat // n, flat % n)
        s_hat = cands[list(best_pair)].T
    mixing = _fit_mixing(s_hat, g)
    residual = float(np.linalg.norm(g - s_hat @ mixing))
    return UnmixResult(s_hat=s_hat, mixing_hat=mixing, residual=residual)


def resolve_ambiguity(s_hat, s_reference) -> Alignment:
    """Column permutation and signs of `s_hat` that best match the reference.

    The assignment maximizes the total absolute correlation (Hungarian
    method); each column's sign is the sign of its correlation with the
    matched reference column.
    """
    s_hat = np.asarray(s_hat, dtype=float)
    ref = np.asarray(s_reference, dtype=float)
    if s_hat.ndim != 2 or ref.ndim != 2 or s_hat.shape != ref.shape:
        raise DimensionError(f"shape mismatch: estimate {s_hat.shape} vs reference {ref.shape}")
    k = ref.shape[1]
    if k == 0:
        return Alignment(aligned=s_hat.copy(), permutation=(), signs=())
    corr = s_hat.T @ ref  # corr[i, j]: estimate column i vs reference column j
    rows, cols = linear_sum_assignment(-np.abs(corr))
    perm = np.empty(k, dtype=int)
    perm[cols] = rows
    signs = np.where(corr[perm, np.arange(k)] < 0, -1, 1)
    aligned = s_hat[:, perm] * signs
    return Alignment(aligned=aligned, permutation=tuple(int(p) for p in perm),
                     signs=tuple(int(s) for s in signs))
