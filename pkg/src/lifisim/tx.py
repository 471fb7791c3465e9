"""
Transmit chain: bits -> QAM -> Hermitian frames -> CP -> RRC -> clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import upfirdn

from .dsp import (
    FrameSpectrum,
    OfdmConfig,
    TimeWaveform,
    get_constellation,
    is_hermitian,
    rrc_taps,
    unitary_dft,
)
from .errors import ConfigurationError, FramingError

PILOT_ORDER = 4


@dataclass(frozen=True)
class TxScaling:
    """
    Drive-level scaling applied after clipping.

    The waveform is peak-normalized to ``peak_amplitude`` and shifted by
    ``dc_offset``. ``vpp_mv``/``bias_ma`` keep the hardware settings the
    scaling stands in for; they do not enter the arithmetic.
    """

    peak_amplitude: float = 1.0
    dc_offset: float = 0.0
    vpp_mv: float | None = None
    bias_ma: float | None = None


def _plan_arrays(plan, config: OfdmConfig):
    bits = np.asarray(plan.bits, dtype=int)
    energy = np.asarray(plan.energy, dtype=float)
    if bits.shape != (config.n_data,) or energy.shape != (config.n_data,):
        raise FramingError(f"loading plan must cover {config.n_data} data subcarriers")
    return bits, energy


def assemble_frames(bits, plan, config: OfdmConfig) -> np.ndarray:
    """
    Map a bit matrix onto Hermitian OFDM spectra.

    Args:
        bits: Array of shape (n_frames, sum(plan.bits)); a 1-D array is
            treated as a single frame.
        plan: Object with per-data-subcarrier ``bits`` and ``energy`` arrays.
        config: Frame configuration.

    Returns:
        Complex array of shape (n_frames, K).
    """
    b, e = _plan_arrays(plan, config)
    bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
    total = int(b.sum())
    if bits.shape[1] != total:
        raise FramingError(f"frame needs {total} bits, got {bits.shape[1]}")
    K = config.fft_size
    n_frames = bits.shape[0]
    X = np.zeros((n_frames, K), dtype=complex)
    offsets = np.concatenate([[0], np.cumsum(b)[:-1]])
    for nb in np.unique(b[b > 0]):
        idx = np.flatnonzero(b == nb)
        cols = offsets[idx, None] + np.arange(nb)
        const = get_constellation(1 << int(nb))
        labels = bits[:, cols] @ const._weights
        X[:, idx + 1] = const.points[labels] * np.sqrt(e[idx])
    X[:, K // 2 + 1 :] = np.conj(X[:, K // 2 - 1 : 0 : -1])
    return X


def assemble_frame(bits, plan, config: OfdmConfig) -> FrameSpectrum:
    return FrameSpectrum(assemble_frames(np.asarray(bits)[None, :], plan, config)[0])


def pilot_frames(rng: np.random.Generator, config: OfdmConfig, n_frames: int):
    """Unit-variance 4-QAM on every data subcarrier. Returns (spectra, bits)."""
    const = get_constellation(PILOT_ORDER)
    bits = rng.integers(0, 2, size=(n_frames, 2 * config.n_data))
    X = np.zeros((n_frames, config.fft_size), dtype=complex)
    X[:, 1 : config.fft_size // 2] = const.map(bits)
    X[:, config.fft_size // 2 + 1 :] = np.conj(X[:, config.fft_size // 2 - 1 : 0 : -1])
    return X, bits


def ofdm_modulate(frames, config: OfdmConfig, atol: float = 1e-9) -> np.ndarray:
    """IFFT each Hermitian frame and prepend the cyclic prefix."""
    if isinstance(frames, FrameSpectrum):
        frames = [frames]
    if isinstance(frames, (list, tuple)):
        frames = np.array([f.symbols if isinstance(f, FrameSpectrum) else f for f in frames], dtype=complex)
    X = np.atleast_2d(np.asarray(frames, dtype=complex))
    if X.shape[1] != config.fft_size:
        raise ConfigurationError(f"frames must have {config.fft_size} subcarriers")
    if not is_hermitian(X, atol):
        raise FramingError("frame is not Hermitian-symmetric; output would be complex")
    body = unitary_dft(X, "inverse").real
    cp = config.cp_length
    out = np.concatenate([body[:, body.shape[1] - cp :], body], axis=1) if cp else body
    return out.ravel()


def pulse_shape(symbols, config: OfdmConfig) -> TimeWaveform:
    """
    Upsample by the oversampling factor and filter with the RRC pulse.

    Output length is (N - 1) * oversampling + n_taps (full convolution).
    """
    x = np.asarray(symbols, dtype=float)
    taps = rrc_taps(config.rolloff, config.oversampling, config.rrc_span)
    y = upfirdn(taps, x, up=config.oversampling) if len(x) else np.zeros(0)
    return TimeWaveform(y, config.sample_rate, origin="tx")


def clip_waveform(x: TimeWaveform, kappa: float, sigma: float | None = None) -> TimeWaveform:
    """
    Hard-clip at +-sigma*kappa.

    ``sigma`` defaults to the empirical standard deviation of ``x`` and is
    recorded on the result so the operation can be replayed exactly.
    """
    if not kappa > 0:
        raise ConfigurationError(f"clip level must be positive, got {kappa}")
    s = np.asarray(x.samples)
    if sigma is None:
        sigma = float(np.std(s)) if len(s) else 0.0
    if sigma == 0.0 or math.isinf(kappa):
        return TimeWaveform(s.copy(), x.sample_rate, x.origin, sigma)
    lim = sigma * kappa
    return TimeWaveform(np.clip(s, -lim, lim), x.sample_rate, x.origin, sigma)


def scale_waveform(x: TimeWaveform, scaling: TxScaling) -> TimeWaveform:
    """Peak-normalize to the drive amplitude and add the DC offset."""
    s = np.asarray(x.samples)
    peak = np.max(np.abs(s)) if len(s) else 0.0
    g = scaling.peak_amplitude / peak if peak > 0 else 0.0
    return TimeWaveform(s * g + scaling.dc_offset, x.sample_rate, x.origin, x.sigma)


def papr(x: TimeWaveform, sigma: float | None = None) -> float:
    """Peak power over mean power; ``sigma`` substitutes the recorded std for the mean."""
    s = np.asarray(x.samples)
    mean_power = sigma**2 if sigma is not None else np.mean(s**2)
    return float(np.max(s**2) / mean_power)


def transmit(frames: np.ndarray, config: OfdmConfig, scaling: TxScaling | None = None):
    """
    Full transmit chain for a burst of spectra.

    Returns:
        (symbol-rate sequence before shaping, clipped and scaled waveform)
    """
    sym = ofdm_modulate(frames, config)
    wav = clip_waveform(pulse_shape(sym, config), config.clip_level)
    if scaling is not None:
        wav = scale_waveform(wav, scaling)
    return sym, wav
