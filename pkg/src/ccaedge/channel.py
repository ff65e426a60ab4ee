"""Two-cell geometry, TR 38.901 UMa large-scale fading and ULA multipath channels.

Base stations are indexed 0 and 1.  BS 0 sits at the origin and BS 1 at
``(sqrt(3) R, 0)`` so that the two hexagonal cells of circumradius ``R`` share
the edge that bisects the segment between them.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import NamedTuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "Geometry",
    "UserDrop",
    "ChannelRealization",
    "PathGain",
    "uma_constants",
    "drop_users",
    "los_probability",
    "uma_path_loss_db",
    "uma_path_gain",
    "array_response",
    "draw_channel",
]


@lru_cache(maxsize=None)
def uma_constants() -> dict:
    """The bundled TR 38.901 UMa constants (see ``data/uma_38901.toml``)."""
    text = resources.files("ccaedge.data").joinpath("uma_38901.toml").read_text()
    return tomllib.loads(text)


@dataclass(frozen=True)
class Geometry:
    """Two adjacent hexagonal cells.

    `edge_band` is the interval of serving-BS distances (as fractions of the
    radius) where cell-edge users are dropped, `center_spread_z` the radius
    fraction bounding cell-center users.  Edge users are restricted to
    bearings within `edge_sector_deg` of the direction pointing at the other
    BS (90 degrees is the whole half-plane facing it).
    """

    cell_radius_m: float = 500.0
    edge_band: tuple[float, float] = (0.95, 1.05)
    center_spread_z: float = 0.3
    edge_sector_deg: float = 90.0

    def __post_init__(self):
        if not 0 < self.center_spread_z < 1:
            raise ValueError(f"center_spread_z must lie in (0, 1), got {self.center_spread_z}")
        lo, hi = self.edge_band
        if not 0 < lo < hi:
            raise ValueError(f"edge_band must satisfy 0 < lower < upper, got {self.edge_band}")
        if not 0 < self.edge_sector_deg <= 180:
            raise ValueError(f"edge_sector_deg must lie in (0, 180], got {self.edge_sector_deg}")

    @property
    def bs_positions(self) -> np.ndarray:
        return np.array([[0.0, 0.0], [math.sqrt(3.0) * self.cell_radius_m, 0.0]])


@dataclass(frozen=True)
class UserDrop:
    """User positions in canonical column order.

    Users are ordered edge users of cell 0, edge users of cell 1, center users
    of cell 0, center users of cell 1; this matches the common / private
    column partition of :class:`ccaedge.signal.SymbolBlock`.
    """

    positions: np.ndarray  # (K, 2)
    is_edge: np.ndarray  # (K,) bool
    serving_bs: np.ndarray  # (K,) int in {0, 1}

    @property
    def n_users(self) -> int:
        return self.positions.shape[0]

    @property
    def edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.is_edge)

    def center_ids(self, bs: int) -> np.ndarray:
        return np.flatnonzero(~self.is_edge & (self.serving_bs == bs))

    @property
    def roles(self) -> list[str]:
        return ["edge" if e else f"center{b}" for e, b in zip(self.is_edge, self.serving_bs)]


@dataclass(frozen=True)
class ChannelRealization:
    """Per-BS channel matrices with one column per user (canonical order).

    ``h[l][:, u]`` is the channel of user ``u`` at BS ``l``, ``alpha[l, u]``
    its large-scale power gain (transmit power included) and ``los[l, u]``
    whether the link was drawn line-of-sight.
    """

    h: tuple[np.ndarray, np.ndarray]
    alpha: np.ndarray
    los: np.ndarray
    clamped: np.ndarray = field(default_factory=lambda: np.zeros((2, 0), bool))

    def link(self, bs: int, user: int) -> np.ndarray:
        return self.h[bs][:, user]


class PathGain(NamedTuple):
    gain: float
    loss_db: float
    clamped: bool


def _positions_in_annulus(rng, n, r_lo, r_hi, center, bearing, half_width):
    r = np.sqrt(rng.uniform(r_lo**2, r_hi**2, size=n))
    phi = bearing + rng.uniform(-half_width, half_width, size=n)
    return center + np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def drop_users(geometry: Geometry, counts, rng: np.random.Generator) -> UserDrop:
    """Drop users for both cells.

    Parameters
    ----------
    geometry : Geometry
    counts : sequence of 4 ints
        ``(K_0, K_1, Ke_0, Ke_1)``: users per cell and edge users per cell.
    rng : numpy.random.Generator
    """
    k0, k1, ke0, ke1 = (int(c) for c in counts)
    if min(k0, k1, ke0, ke1) < 0:
        raise ValueError(f"user counts must be non-negative, got {counts}")
    for k, ke in ((k0, ke0), (k1, ke1)):
        if k > 0 and ke >= k:
            raise ValueError(f"edge users per cell must be fewer than users per cell: {ke} >= {k}")
        if k == 0 and ke > 0:
            raise ValueError("a cell without users cannot have edge users")

    radius = geometry.cell_radius_m
    bs = geometry.bs_positions
    lo, hi = geometry.edge_band
    half = math.radians(geometry.edge_sector_deg)
    bearings = (0.0, math.pi)  # direction from each BS towards the other one

    parts, edge, serving = [], [], []
    for b, ke in ((0, ke0), (1, ke1)):
        parts.append(_positions_in_annulus(rng, ke, lo * radius, hi * radius, bs[b], bearings[b], half))
        edge += [True] * ke
        serving += [b] * ke
    for b, kc in ((0, k0 - ke0), (1, k1 - ke1)):
        parts.append(_positions_in_annulus(rng, kc, 0.0, geometry.center_spread_z * radius, bs[b], 0.0, math.pi))
        edge += [False] * kc
        serving += [b] * kc
    positions = np.concatenate(parts, axis=0) if parts else np.zeros((0, 2))
    return UserDrop(positions=positions.reshape(-1, 2), is_edge=np.array(edge, bool),
                    serving_bs=np.array(serving, int))


def los_probability(d2d_m, h_ut_m: float | None = None):
    """UMa line-of-sight probability as a function of 2-D distance."""
    consts = uma_constants()
    d = np.asarray(d2d_m, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    h_ut = consts["defaults"]["h_ut_m"] if h_ut_m is None else h_ut_m
    d_flat = consts["los_probability"]["d_flat_m"]
    d_decay = consts["los_probability"]["d_decay_m"]
    safe = np.maximum(d, d_flat)
    p = d_flat / safe + np.exp(-safe / d_decay) * (1 - d_flat / safe)
    if h_ut > 13.0:
        c_prime = ((h_ut - 13.0) / 10.0) ** 1.5
        p = p * (1 + c_prime * 1.25 * (safe / 100.0) ** 3 * np.exp(-safe / 150.0))
    p = np.where(d <= d_flat, 1.0, np.clip(p, 0.0, 1.0))
    return float(p) if p.ndim == 0 else p


def uma_path_loss_db(d3d_m: float, fc_ghz: float | None = None, los: bool = False,
                     heights: tuple[float, float] | None = None) -> tuple[float, bool]:
    """UMa path loss in dB and whether the distance had to be clamped.

    `heights` is ``(h_bs, h_ut)`` in metres.  Distances whose 2-D projection
    falls outside the formula's validity range are clamped to it.
    """
    consts = uma_constants()
    dflt = consts["defaults"]
    fc = dflt["fc_ghz"] if fc_ghz is None else fc_ghz
    h_bs, h_ut = (dflt["h_bs_m"], dflt["h_ut_m"]) if heights is None else heights
    if d3d_m <= 0:
        raise ValueError(f"d3d must be positive, got {d3d_m}")
    dh = h_bs - h_ut
    d2d = math.sqrt(max(d3d_m**2 - dh**2, 0.0))
    lo, hi = consts["range"]["d2d_min_m"], consts["range"]["d2d_max_m"]
    clamped = not lo <= d2d <= hi
    d2d = min(max(d2d, lo), hi)
    d3d = math.hypot(d2d, dh)

    c_los = consts["pathloss"]["los"]
    h_e = dflt["h_e_m"]
    d_bp = 4 * (h_bs - h_e) * (h_ut - h_e) * fc * 1e9 / dflt["c_mps"]
    if d2d <= d_bp:
        pl_los = c_los["const_db"] + c_los["near_slope"] * math.log10(d3d) + c_los["freq_slope"] * math.log10(fc)
    else:
        pl_los = (c_los["const_db"] + c_los["far_slope"] * math.log10(d3d) + c_los["freq_slope"] * math.log10(fc)
                  - c_los["bp_slope"] * math.log10(d_bp**2 + dh**2))
    if los:
        return pl_los, clamped
    c_nlos = consts["pathloss"]["nlos"]
    pl_nlos = (c_nlos["const_db"] + c_nlos["dist_slope"] * math.log10(d3d)
               + c_nlos["freq_slope"] * math.log10(fc) - c_nlos["hut_slope"] * (h_ut - c_nlos["hut_ref_m"]))
    return max(pl_los, pl_nlos), clamped


def uma_path_gain(d3d_m: float, fc_ghz: float | None = None, los: bool = False,
                  heights: tuple[float, float] | None = None) -> PathGain:
    """Linear power gain ``10^(-PL/10)`` of the UMa model (no shadowing)."""
    pl, clamped = uma_path_loss_db(d3d_m, fc_ghz, los, heights)
    return PathGain(gain=10.0 ** (-pl / 10.0), loss_db=pl, clamped=clamped)


def array_response(theta, m: int) -> np.ndarray:
    """Half-wavelength ULA response ``exp(i pi n cos(theta))``, n = 0..m-1.

    A scalar `theta` gives a length-`m` vector; an array of angles gives an
    array of shape ``(m,) + theta.shape``.
    """
    if m < 1:
        raise ValueError(f"antenna count must be >= 1, got {m}")
    theta = np.asarray(theta, dtype=float)
    n = np.arange(m).reshape((m,) + (1,) * theta.ndim)
    return np.exp(1j * np.pi * n * np.cos(theta))


def draw_channel(drop: UserDrop, geometry: Geometry, m_antennas, l_paths: int = 8,
                 fc_ghz: float | None = None, rng: np.random.Generator | None = None, *,
                 tx_power_dbm: float = 25.0, heights: tuple[float, float] | None = None,
                 shadowing: bool = False) -> ChannelRealization:
    """Draw one multipath channel realization for every user/BS link.

    Each link gets `l_paths` paths with azimuths uniform on ``[-pi, pi]`` and
    i.i.d. unit complex Gaussian gains; the link's UMa power (transmit power
    included, in mW) is split equally across the paths and the sum is scaled
    by ``1/sqrt(M)`` so that ``E||h||^2`` equals the large-scale gain.  Edge
    users are always NLOS; other links are LOS with the UMa probability.
    """
    if l_paths < 1:
        raise ValueError(f"l_paths must be >= 1, got {l_paths}")
    rng = np.random.default_rng() if rng is None else rng
    consts = uma_constants()
    dflt = consts["defaults"]
    h_bs, h_ut = (dflt["h_bs_m"], dflt["h_ut_m"]) if heights is None else heights
    m_antennas = tuple(int(m) for m in m_antennas)
    k = drop.n_users

    hs, alpha, los, clamped = [], np.zeros((2, k)), np.zeros((2, k), bool), np.zeros((2, k), bool)
    for b in range(2):
        d2d = np.linalg.norm(drop.positions - geometry.bs_positions[b], axis=1)
        p_los = los_probability(d2d, h_ut) if k else np.zeros(0)
        draws = rng.random(k)
        for u in range(k):
            los[b, u] = (not drop.is_edge[u]) and draws[u] < p_los[u]
            d3d = math.hypot(d2d[u], h_bs - h_ut)
            pg = uma_path_gain(d3d, fc_ghz, bool(los[b, u]), (h_bs, h_ut))
            gain_db = tx_power_dbm - pg.loss_db
            if shadowing:
                sigma = consts["shadowing"]["los_sigma_db" if los[b, u] else "nlos_sigma_db"]
                gain_db += sigma * rng.standard_normal()
            alpha[b, u] = 10.0 ** (gain_db / 10.0)
            clamped[b, u] = pg.clamped

        m = m_antennas[b]
        theta = rng.uniform(-np.pi, np.pi, size=(k, l_paths))
        phasor = (rng.standard_normal((k, l_paths)) + 1j * rng.standard_normal((k, l_paths))) / np.sqrt(2)
        steer = array_response(theta, m)  # (m, k, L)
        amp = np.sqrt(alpha[b] / l_paths)[:, None] * phasor  # (k, L)
        hs.append(np.einsum("mkl,kl->mk", steer, amp) / np.sqrt(m))
    return ChannelRealization(h=(hs[0], hs[1]), alpha=alpha, los=los, clamped=clamped)
