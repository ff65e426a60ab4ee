"""Large-sample predictions for the canonical correlations of the two-cell
model and a Monte Carlo comparator against them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from . import cca
from .errors import DimensionError
from .signal import complex_noise, complex_to_real_stack, generate_symbols

__all__ = [
    "SnrTriple",
    "RhoScenario",
    "RhoReport",
    "theoretical_rho_max",
    "snr_matrices",
    "build_f_matrix",
    "random_gram_inverse",
    "empirical_rho_vs_theory",
    "CommonPrivateViews",
    "common_private_views",
]


@dataclass(frozen=True)
class SnrTriple:
    """Linear SNRs of one user.

    Edge users only use `gamma_e` (same power at both BSs); center users use
    `gamma_p` at their serving BS and `gamma_f` at the other one.
    """

    gamma_e: float = 0.0
    gamma_p: float = 0.0
    gamma_f: float = 0.0

    def __post_init__(self):
        if min(self.gamma_e, self.gamma_p, self.gamma_f) < 0:
            raise ValueError(f"SNRs must be non-negative: {self}")


def theoretical_rho_max(gamma_e):
    """Asymptotic top canonical correlation ``gamma_e / (gamma_e + 1)``."""
    g = np.asarray(gamma_e, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma_e must be non-negative")
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(g), 1.0, g / (g + 1.0))
    return float(out) if out.ndim == 0 else out


def snr_matrices(snrs, k_e: int, serving=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-user SNR diagonals seen at BS 0 and BS 1.

    The first `k_e` entries of `snrs` are edge users; the rest are center
    users whose serving BS is given by `serving` (default: BS 0 for all).
    """
    snrs = list(snrs)
    k_s = len(snrs)
    if not 0 <= k_e <= k_s:
        raise DimensionError(f"k_e={k_e} outside [0, {k_s}]")
    if serving is None:
        serving = [0] * (k_s - k_e)
    serving = list(serving)
    if len(serving) != k_s - k_e:
        raise DimensionError(f"serving has {len(serving)} entries for {k_s - k_e} center users")
    g0 = np.empty(k_s)
    g1 = np.empty(k_s)
    for j, s in enumerate(snrs):
        if j < k_e:
            g0[j] = g1[j] = s.gamma_e
        elif serving[j - k_e] == 0:
            g0[j], g1[j] = s.gamma_p, s.gamma_f
        else:
            g0[j], g1[j] = s.gamma_f, s.gamma_p
    return g0, g1


def build_f_matrix(snrs, k_e: int, gram_inverses=None, serving=None) -> np.ndarray:
    """The K_s x K_s matrix whose eigenvalues are the squared canonical
    correlations in the large-T limit.

    ``F = (G0 + Ginv0)^{-1} G01 (G1 + Ginv1)^{-1} G01`` with ``G_l`` the
    per-BS SNR diagonals, ``G01 = (G0 G1)^{1/2}`` and ``Ginv_l`` the inverse
    channel Gram matrices ``(H_l^H H_l)^{-1}``.  Without `gram_inverses` both
    are taken as identity, which makes F diagonal.
    """
    g0, g1 = snr_matrices(snrs, k_e, serving)
    k_s = g0.size
    if gram_inverses is None:
        gram_inverses = (np.eye(k_s), np.eye(k_s))
    a0, a1 = (np.asarray(g) for g in gram_inverses)
    if a0.shape != (k_s, k_s) or a1.shape != (k_s, k_s):
        raise DimensionError(f"Gram inverses must be {k_s} x {k_s}, got {a0.shape}, {a1.shape}")
    g01 = np.diag(np.sqrt(g0 * g1))
    f = np.linalg.solve(np.diag(g0) + a0, g01 @ np.linalg.solve(np.diag(g1) + a1, g01))
    return f.real if np.allclose(f.imag, 0.0) else f


def random_gram_inverse(m: int, k_s: int, rng: np.random.Generator) -> np.ndarray:
    """``(H^H H)^{-1}`` for H with i.i.d. CN(0, 1/m) entries."""
    h = complex_noise((m, k_s), rng, 1.0 / m)
    return np.linalg.inv(h.conj().T @ h)


@dataclass(frozen=True)
class RhoScenario:
    """Synthetic two-BS model with i.i.d. CN(0, 1/M) channels and unit noise.

    Cell 0 holds the `k_edge` edge users plus ``k_users[0] - k_edge`` center
    users; cell 1 holds ``k_users[1]`` center users.  Every edge user has
    the same SNR at both BSs.  With ``noiseless=True`` the noise is dropped
    and the SNRs act as received powers.
    """

    m_antennas: tuple[int, int] = (64, 64)
    k_users: tuple[int, int] = (2, 2)
    k_edge: int = 1
    gamma_e: float = 1.0
    gamma_p: float = 100.0
    gamma_f: float = 0.01
    t_symbols: int = 4000
    noiseless: bool = False

    def __post_init__(self):
        k_s = self.k_users[0] + self.k_users[1]
        if not 0 < self.k_edge <= self.k_users[0]:
            raise ValueError(f"need 0 < k_edge <= k_users[0], got {self.k_edge}, {self.k_users}")
        if min(self.m_antennas) <= k_s:
            raise ValueError(f"each BS needs more than {k_s} antennas, got {self.m_antennas}")

    @property
    def k_s(self) -> int:
        return self.k_users[0] + self.k_users[1]

    @property
    def serving(self) -> list[int]:
        return [0] * (self.k_users[0] - self.k_edge) + [1] * self.k_users[1]

    def snrs(self) -> list[SnrTriple]:
        edge = [SnrTriple(gamma_e=self.gamma_e)] * self.k_edge
        center = [SnrTriple(gamma_p=self.gamma_p, gamma_f=self.gamma_f)] * (self.k_s - self.k_edge)
        return edge + center


@dataclass(frozen=True)
class RhoReport:
    """Empirical vs. predicted canonical correlations over trials.

    `rho` has shape (trials, k_edge); `angles` holds the largest principal
    angle (radians) between the projected views and the edge symbols, per
    trial and BS.
    """

    scenario: RhoScenario
    rho_theory: float
    rho: np.ndarray
    angles: np.ndarray

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.rho - self.rho_theory)

    def to_record(self) -> dict:
        err = self.abs_error
        return {
            "gamma_e": self.scenario.gamma_e,
            "m_antennas": self.scenario.m_antennas[0],
            "trials": int(self.rho.shape[0]),
            "rho_theory": self.rho_theory,
            "rho1_mean": float(np.mean(self.rho[:, 0])),
            "abs_err_mean": float(np.mean(err)),
            "abs_err_median": float(np.median(err)),
            "abs_err_max": float(np.max(err)),
            "angle_median": float(np.median(self.angles)),
            "angle_max": float(np.max(self.angles)),
        }


def _one_trial(sc: RhoScenario, rng: np.random.Generator):
    g0, g1 = snr_matrices(sc.snrs(), sc.k_edge, sc.serving)
    t = sc.t_symbols
    b = generate_symbols(t, sc.k_s, rng)
    views = []
    for m, gam in zip(sc.m_antennas, (g0, g1)):
        h = complex_noise((m, sc.k_s), rng, 1.0 / m)
        y = (h * np.sqrt(gam)) @ b.T
        if not sc.noiseless:
            y = y + complex_noise(y.shape, rng)
        views.append(y)
    sol = cca.solve_cca(cca.sample_correlations(*views), sc.k_edge)
    s_c = b[:, : sc.k_edge]
    angles = [np.max(subspace_angles(cca.project(y, q), s_c.astype(complex)))
              for y, q in zip(views, (sol.q1, sol.q2))]
    return sol.rho, angles


def empirical_rho_vs_theory(scenario: RhoScenario, trials: int,
                            rng: np.random.Generator) -> RhoReport:
    """Run complex-domain CCA on synthesized blocks and compare the top
    `k_edge` correlations with :func:`theoretical_rho_max`."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rho = np.empty((trials, scenario.k_edge))
    angles = np.empty((trials, 2))
    for i in range(trials):
        rho[i], angles[i] = _one_trial(scenario, rng)
    theory = 1.0 if scenario.noiseless else theoretical_rho_max(scenario.gamma_e)
    return RhoReport(scenario=scenario, rho_theory=float(theory), rho=rho, angles=angles)


@dataclass(frozen=True)
class CommonPrivateViews:
    """Two noiseless real-stacked views sharing only the edge users."""

    y: tuple[np.ndarray, np.ndarray]  # (2 M_l, T) each
    s_common: np.ndarray  # (T, K_e)
    s_private: tuple[np.ndarray, np.ndarray]
    h: tuple[np.ndarray, np.ndarray]  # complex (M_l, K_e + K_p,l); common columns first

    def full_rank(self) -> bool:
        """Channel and symbol matrices of every view have full column rank."""
        for l in (0, 1):
            s = np.concatenate([self.s_common, self.s_private[l]], axis=1)
            hr = np.concatenate([self.h[l].real, self.h[l].imag], axis=0)
            if np.linalg.matrix_rank(hr) < hr.shape[1] or np.linalg.matrix_rank(s) < s.shape[1]:
                return False
        return True


def common_private_views(m_antennas, n_private, k_e: int, t: int,
                         rng: np.random.Generator) -> CommonPrivateViews:
    """``Y_l = H_lc S_c^T + H_lp S_lp^T`` with CN(0, 1/M) channels and no noise,
    realified as ``[Re; Im]``."""
    s_c = generate_symbols(t, k_e, rng)
    s_p, hs, ys = [], [], []
    for m, k_p in zip(m_antennas, n_private):
        s_l = generate_symbols(t, k_p, rng)
        h = complex_noise((m, k_e + k_p), rng, 1.0 / m)
        ys.append(complex_to_real_stack(h @ np.concatenate([s_c, s_l], axis=1).T))
        s_p.append(s_l)
        hs.append(h)
    return CommonPrivateViews(y=(ys[0], ys[1]), s_common=s_c, s_private=(s_p[0], s_p[1]), h=(hs[0], hs[1]))
