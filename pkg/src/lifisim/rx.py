"""
Receive chain: matched filter, CP removal + FFT, one-tap equalization, BER.
The Volterra equalizer sits between the matched filter and the FFT and lives
in ``lifisim.volterra``.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import oaconvolve

from .dsp import OfdmConfig, TimeWaveform, rrc_taps, unitary_dft
from .errors import ConfigurationError, EqualizationError

H_FLOOR = 1e-6


def matched_filter(y: TimeWaveform | np.ndarray, config: OfdmConfig, n_symbols: int | None = None) -> np.ndarray:
    """
    Filter with the transmit RRC and sample at the symbol instants.

    Sampling starts after both filters' group delay, so a loopback returns the
    pre-shaping sequence (up to the RRC truncation ISI). ``n_symbols`` defaults
    to the count implied by a full-length transmit waveform.
    """
    samples = y.samples if isinstance(y, TimeWaveform) else np.asarray(y, dtype=float)
    taps = rrc_taps(config.rolloff, config.oversampling, config.rrc_span)
    os_ = config.oversampling
    if n_symbols is None:
        n_symbols = (len(samples) - len(taps)) // os_ + 1
    if n_symbols < config.frame_length:
        raise ConfigurationError("waveform is shorter than one OFDM frame")
    full = oaconvolve(samples, taps) if len(samples) else np.zeros(0)
    idx = len(taps) - 1 + os_ * np.arange(n_symbols)
    out = np.zeros(n_symbols)
    ok = idx < len(full)
    out[ok] = full[idx[ok]]
    return out


def ofdm_demodulate(z, config: OfdmConfig) -> np.ndarray:
    """Drop each frame's CP and take the unitary FFT. Returns (n_frames, K)."""
    z = np.asarray(z, dtype=float)
    L = config.frame_length
    if len(z) % L:
        raise ConfigurationError(f"input length {len(z)} is not a multiple of the frame length {L}")
    frames = z.reshape(-1, L)[:, config.cp_length :]
    return unitary_dft(frames, "forward")


def one_tap_equalize(Y, H, bits=None, eps: float = H_FLOOR) -> np.ndarray:
    """
    Divide by the channel response per subcarrier.

    Subcarriers with |H| <= eps are unusable and come back as zero; if
    ``bits`` marks one of them as loaded an EqualizationError names it.
    """
    Y = np.asarray(Y, dtype=complex)
    H = np.asarray(H, dtype=complex)
    bad = np.abs(H) <= eps
    if bits is not None:
        loaded_bad = np.flatnonzero(bad & (np.asarray(bits) > 0))
        if loaded_bad.size:
            raise EqualizationError(int(loaded_bad[0]))
    Hs = np.where(bad, 1.0, H)
    return np.where(bad, 0.0, Y / Hs)


def count_bit_errors(decoded, reference) -> int:
    decoded = np.asarray(decoded).ravel()
    reference = np.asarray(reference).ravel()
    if decoded.shape != reference.shape:
        raise ConfigurationError(f"bit streams differ in length ({decoded.size} vs {reference.size})")
    return int(np.count_nonzero(decoded != reference))


def measure_ber(decoded, reference) -> float:
    n = np.asarray(reference).size
    errors = count_bit_errors(decoded, reference)
    return errors / n if n else 0.0
