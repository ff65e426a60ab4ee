"""BPSK sources, uplink received-signal synthesis, noise calibration and
real-domain stacking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .errors import DimensionError

__all__ = [
    "SymbolBlock",
    "ReceivedBlock",
    "generate_symbols",
    "complex_noise",
    "synthesize_received",
    "edge_power",
    "calibrate_noise",
    "complex_to_real_stack",
    "real_to_complex_unstack",
    "apply_delay",
    "continuation_padding",
]


@dataclass(frozen=True)
class SymbolBlock:
    """T x K matrix of +/-1 symbols.

    Columns are partitioned as ``n_common`` edge users followed by the
    private (cell-center) users of cell 0 and then of cell 1.
    """

    s: np.ndarray
    n_common: int
    n_private: tuple[int, int]

    def __post_init__(self):
        if self.s.shape[1] != self.n_common + sum(self.n_private):
            raise DimensionError(
                f"symbol block has {self.s.shape[1]} columns, partition says "
                f"{self.n_common} + {self.n_private}"
            )

    @property
    def common(self) -> np.ndarray:
        return self.s[:, : self.n_common]

    def private(self, cell: int) -> np.ndarray:
        start = self.n_common + (self.n_private[0] if cell == 1 else 0)
        return self.s[:, start: start + self.n_private[cell]]


@dataclass(frozen=True)
class ReceivedBlock:
    """Complex baseband samples ``y`` (antennas x T) observed at one BS."""

    y: np.ndarray
    bs: int
    sigma2: float

    @property
    def n_samples(self) -> int:
        return self.y.shape[1]


def generate_symbols(t: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. equiprobable BPSK symbols, shape (t, k)."""
    if t < 1 or k < 0:
        raise ValueError(f"need t >= 1 and k >= 0, got t={t}, k={k}")
    return 2.0 * rng.integers(0, 2, size=(t, k)) - 1.0


def complex_noise(shape, rng: np.random.Generator, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with the given total variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_received(channels: ChannelRealization, symbols, sigma2: float, bs: int,
                        rng: np.random.Generator | None = None, *,
                        unit_noise: np.ndarray | None = None) -> ReceivedBlock:
    """Received block ``Y = H S^T + W`` at base station `bs`.

    ``W`` has i.i.d. circular entries of variance `sigma2`.  Pass a pre-drawn
    unit-variance `unit_noise` instead of `rng` to reuse one noise realization
    across noise levels.
    """
    s = symbols.s if isinstance(symbols, SymbolBlock) else np.asarray(symbols, dtype=float)
    h = channels.h[bs]
    if s.ndim != 2 or s.shape[1] != h.shape[1]:
        raise DimensionError(f"symbols {s.shape} do not match channel matrix {h.shape}")
    y = h @ s.T
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if sigma2 > 0:
        if unit_noise is None:
            if rng is None:
                raise ValueError("need rng or unit_noise to add noise")
            unit_noise = complex_noise(y.shape, rng)
        elif unit_noise.shape != y.shape:
            raise DimensionError(f"unit_noise shape {unit_noise.shape} != {y.shape}")
        y = y + np.sqrt(sigma2) * unit_noise
    return ReceivedBlock(y=y, bs=bs, sigma2=float(sigma2))


def edge_power(channels: ChannelRealization, edge_user_ids, per_antenna: bool = False) -> float:
    """Average received edge-user power over edge users and both BS links.

    With ``per_antenna=True`` each link's ``||h||^2`` is divided by the BS's
    antenna count, i.e. the power seen at a single antenna.
    """
    ids = np.asarray(edge_user_ids, dtype=int)
    if ids.size == 0:
        raise ValueError("noise calibration needs at least one edge user")
    powers = []
    for h in channels.h:
        p = np.sum(np.abs(h[:, ids]) ** 2, axis=0)
        powers.append(p / h.shape[0] if per_antenna else p)
    return float(np.mean(np.concatenate(powers)))


def calibrate_noise(target_snr_db: float, channels: ChannelRealization, edge_user_ids,
                    per_antenna: bool = False) -> float:
    """Noise variance giving ``P_e / sigma^2`` equal to the target SNR."""
    return edge_power(channels, edge_user_ids, per_antenna) / 10.0 ** (target_snr_db / 10.0)


def complex_to_real_stack(y) -> np.ndarray:
    """``[Re(Y); Im(Y)]``, shape (2M, T)."""
    y = y.y if isinstance(y, ReceivedBlock) else np.asarray(y)
    return np.concatenate([y.real, y.imag], axis=0)


def real_to_complex_unstack(y_real) -> np.ndarray:
    """Inverse of :func:`complex_to_real_stack`."""
    y_real = np.asarray(y_real)
    if y_real.shape[0] % 2:
        raise DimensionError(f"stacked view needs an even row count, got {y_real.shape[0]}")
    m = y_real.shape[0] // 2
    return y_real[:m] + 1j * y_real[m:]


def apply_delay(y: ReceivedBlock, tau: int, total_len: int,
                padding: np.ndarray | None = None) -> ReceivedBlock:
    """Embed a T-column block at column offset `tau` of a longer block.

    `padding` supplies the ``total_len - T`` surrounding columns: the first
    `tau` go before the block, the rest after it.  Without padding the
    surrounding columns are zero.
    """
    m, t = y.y.shape
    if tau < 0 or tau + t > total_len:
        raise ValueError(f"block of {t} columns at offset {tau} overflows length {total_len}")
    n_pad = total_len - t
    if padding is None:
        padding = np.zeros((m, n_pad), dtype=complex)
    elif padding.shape != (m, n_pad):
        raise DimensionError(f"padding must have shape {(m, n_pad)}, got {padding.shape}")
    long = np.concatenate([padding[:, :tau], y.y, padding[:, tau:]], axis=1)
    return ReceivedBlock(y=long, bs=y.bs, sigma2=y.sigma2)


def continuation_padding(channels: ChannelRealization, bs: int, n_cols: int, sigma2: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Fresh traffic from the same users through the same channel, plus noise."""
    if n_cols == 0:
        return np.zeros((channels.h[bs].shape[0], 0), dtype=complex)
    s = generate_symbols(n_cols, channels.h[bs].shape[1], rng)
    return synthesize_received(channels, s, sigma2, bs, rng).y
