"""
Core numeric types and primitives.

Holds the OFDM configuration, waveform/spectrum containers, the unitary DFT
pair, root-raised-cosine taps and Gray-labelled QAM constellations. Everything
here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError

SUPPORTED_ORDERS = (2, 4, 8, 16, 32, 64, 128, 256, 512)


@dataclass(frozen=True)
class OfdmConfig:
    """
    Frame and waveform parameters of one DCO-OFDM link.

    Attributes:
        fft_size: Number of subcarriers K (power of two, >= 4).
        cp_length: Cyclic prefix length in symbol-rate samples.
        rolloff: RRC roll-off factor.
        clip_level: Clipping threshold in units of the waveform standard
            deviation. ``math.inf`` disables clipping.
        oversampling: Waveform samples per symbol period.
        bandwidth: Modulation bandwidth B in Hz. The symbol rate is 2B.
        rrc_span: RRC filter span in symbols.
    """

    fft_size: int = 1024
    cp_length: int = 20
    rolloff: float = 0.1
    clip_level: float = 3.2
    oversampling: int = 4
    bandwidth: float = 2.67e9
    rrc_span: int = 16

    def __post_init__(self):
        K = self.fft_size
        if not isinstance(K, (int, np.integer)) or K < 4 or K & (K - 1):
            raise ConfigurationError(f"fft_size must be a power of two >= 4, got {K!r}")
        if not 0 <= self.cp_length < K:
            raise ConfigurationError(f"cp_length must be in [0, fft_size), got {self.cp_length}")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigurationError(f"rolloff must be in [0, 1], got {self.rolloff}")
        if not self.clip_level > 0:
            raise ConfigurationError(f"clip_level must be positive, got {self.clip_level}")
        if self.oversampling < 1:
            raise ConfigurationError(f"oversampling must be positive, got {self.oversampling}")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ConfigurationError(f"bandwidth must be a positive finite value, got {self.bandwidth}")
        if self.rrc_span < 4:
            raise ConfigurationError(f"rrc_span must be >= 4 symbols, got {self.rrc_span}")

    @property
    def symbol_rate(self) -> float:
        return 2.0 * self.bandwidth

    @property
    def sample_rate(self) -> float:
        return self.oversampling * self.symbol_rate

    @property
    def subcarrier_spacing(self) -> float:
        return self.symbol_rate / self.fft_size

    @property
    def frame_length(self) -> int:
        return self.fft_size + self.cp_length

    @property
    def frame_rate(self) -> float:
        return self.symbol_rate / self.frame_length

    @property
    def n_data(self) -> int:
        """Number of information-carrying subcarriers, K/2 - 1."""
        return self.fft_size // 2 - 1

    @property
    def data_subcarriers(self) -> np.ndarray:
        return np.arange(1, self.fft_size // 2)

    @property
    def data_frequencies(self) -> np.ndarray:
        return self.data_subcarriers * self.subcarrier_spacing


@dataclass
class TimeWaveform:
    """Real-valued sample stream plus the metadata needed to reproduce it."""

    samples: np.ndarray
    sample_rate: float
    origin: str = "tx"
    sigma: float | None = None  # std recorded at clipping time

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ConfigurationError("waveform samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ConfigurationError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)


@dataclass
class FrameSpectrum:
    """One OFDM frame in the frequency domain, X[k] for k = 0..K-1."""

    symbols: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=complex)
        if self.symbols.ndim != 1:
            raise ConfigurationError("frame spectrum must be one-dimensional")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def is_hermitian(self, atol: float = 1e-9) -> bool:
        return is_hermitian(self.symbols, atol)


def is_hermitian(X: np.ndarray, atol: float = 1e-9) -> bool:
    """True when X[k] = conj(X[K-k]) along the last axis and X[0], X[K/2] are real."""
    X = np.asarray(X)
    K = X.shape[-1]
    mirror = np.conj(X[..., (-np.arange(K)) % K])
    return bool(np.all(np.abs(X - mirror) <= atol))


def unitary_dft(x, direction: str = "forward", size: int | None = None) -> np.ndarray:
    """
    DFT scaled by 1/sqrt(K) in both directions, along the last axis.

    ``inverse`` computes x[n] = K^{-1/2} sum_k X[k] exp(+2j pi n k / K).
    """
    x = np.asarray(x, dtype=complex)
    K = x.shape[-1]
    if size is not None and K != size:
        raise ConfigurationError(f"expected length {size}, got {K}")
    if direction == "forward":
        return np.fft.fft(x, axis=-1, norm="ortho")
    if direction == "inverse":
        return np.fft.ifft(x, axis=-1, norm="ortho")
    raise ConfigurationError(f"unknown DFT direction {direction!r}")


def rrc_taps(rolloff: float, oversampling: int, span_symbols: int) -> np.ndarray:
    """
    Root-raised-cosine impulse response sampled at ``oversampling`` per symbol.

    Returns ``span_symbols * oversampling + 1`` taps normalized to unit energy.
    The points t = +-T/(4 alpha) use the analytic limit.
    """
    if not 0.0 <= rolloff <= 1.0:
        raise ConfigurationError(f"rolloff must be in [0, 1], got {rolloff}")
    if span_symbols < 4:
        raise ConfigurationError("span must be at least 4 symbols")
    if oversampling < 1:
        raise ConfigurationError("oversampling must be positive")
    n = span_symbols * oversampling + 1
    if n % 2 == 0:
        raise ConfigurationError("RRC tap count must be odd")
    a = rolloff
    t = (np.arange(n) - (n - 1) / 2) / oversampling
    h = np.empty(n)
    for i, ti in enumerate(t):
        if ti == 0.0:
            h[i] = 1.0 - a + 4.0 * a / np.pi
        elif a > 0 and abs(abs(ti) - 1.0 / (4.0 * a)) < 1e-9:
            h[i] = (a / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * a))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * a))
            )
        else:
            h[i] = (np.sin(np.pi * ti * (1.0 - a)) + 4.0 * a * ti * np.cos(np.pi * ti * (1.0 + a))) / (
                np.pi * ti * (1.0 - (4.0 * a * ti) ** 2)
            )
    return h / np.sqrt(np.sum(h**2))


def _gray(i):
    return i ^ (i >> 1)


class Constellation:
    """
    Gray-labelled QAM alphabet with unit average energy.

    ``points[label]`` is the complex point carrying ``label``; labels are read
    MSB first from the bit stream.
    """

    def __init__(self, order: int):
        if order not in SUPPORTED_ORDERS:
            raise ConfigurationError(f"unsupported constellation order {order}")
        self.order = order
        self.bits_per_symbol = int(np.log2(order))
        pts = _build_points(order)
        self.points = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
        self._tree = cKDTree(np.column_stack([self.points.real, self.points.imag]))
        self._weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)

    def __repr__(self):
        return f"Constellation({self.order})"

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.order)

    def bits_to_labels(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        m = self.bits_per_symbol
        if bits.shape[-1] % m:
            raise ConfigurationError(f"bit count {bits.shape[-1]} is not a multiple of {m}")
        groups = bits.reshape(bits.shape[:-1] + (-1, m))
        return groups @ self._weights

    def labels_to_bits(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        bits = (labels[..., None] >> np.arange(self.bits_per_symbol - 1, -1, -1)) & 1
        return bits.reshape(labels.shape[:-1] + (-1,)) if labels.ndim else bits

    def map(self, bits) -> np.ndarray:
        return self.points[self.bits_to_labels(bits)]

    def nearest(self, symbols) -> np.ndarray:
        """Label of the minimum-Euclidean-distance point for every symbol."""
        s = np.asarray(symbols, dtype=complex)
        _, idx = self._tree.query(np.column_stack([s.ravel().real, s.ravel().imag]))
        return idx.reshape(s.shape)

    def demap(self, symbols) -> np.ndarray:
        s = np.asarray(symbols, dtype=complex)
        return self.labels_to_bits(self.nearest(s).reshape(s.shape))


def _build_points(order: int) -> np.ndarray:
    if order == 2:
        return np.array([-1.0 + 0j, 1.0 + 0j])
    if order == 8:
        return _cross8()
    m = int(np.log2(order))
    mi = (m + 1) // 2
    mq = m // 2
    ni, nq = 1 << mi, 1 << mq
    # rectangular Gray grid: label = (gray_I << mq) | gray_Q
    pts = np.empty(order, dtype=complex)
    for ii in range(ni):
        for qq in range(nq):
            label = (_gray(ii) << mq) | _gray(qq)
            pts[label] = complex(2 * ii - ni + 1, 2 * qq - nq + 1)
    if m % 2 == 1 and m >= 5:
        pts = _fold_cross(pts, ni, nq)
    return pts


def _cross8() -> np.ndarray:
    """
    Four inner points (+-1 +-1j) and four outer points on the axes at 1 + sqrt(3).

    Bit 2 selects the ring; bits 1..0 run Gray around the circle, and each
    outer point shares its low bits with the inner point 45 degrees before it.
    """
    r = 1.0 + np.sqrt(3.0)
    pts = np.empty(8, dtype=complex)
    for i, g in enumerate((0, 1, 3, 2)):
        pts[g] = np.sqrt(2.0) * np.exp(1j * np.pi * (0.25 + 0.5 * i))
        pts[4 | g] = r * np.exp(1j * np.pi * 0.5 * (i + 1))
    return np.round(pts.real, 12) + 1j * np.round(pts.imag, 12)


def _fold_cross(pts: np.ndarray, ni: int, nq: int) -> np.ndarray:
    """Move the outer I columns of an ni x nq grid to the top/bottom to form a cross."""
    c = 3 * ni // 4 - 1
    out = pts.copy()
    for label, p in enumerate(pts):
        I, Q = int(p.real), int(p.imag)
        if abs(I) > c:
            d = abs(I) - c
            out[label] = complex(np.sign(I) * (nq - abs(Q)), np.sign(Q) * (nq - 1 + d))
    return out


@lru_cache(maxsize=None)
def get_constellation(order: int) -> Constellation:
    return Constellation(order)


def qam_map(bits, constellation: Constellation | int) -> np.ndarray:
    if not isinstance(constellation, Constellation):
        constellation = get_constellation(constellation)
    return constellation.map(bits)


def qam_demap(symbols, constellation: Constellation | int) -> np.ndarray:
    if not isinstance(constellation, Constellation):
        constellation = get_constellation(constellation)
    return constellation.demap(symbols)
