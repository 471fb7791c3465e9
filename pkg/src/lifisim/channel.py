"""
Impaired-channel emulation.

A ChannelModel stacks a memory-polynomial nonlinearity, a linear FIR, a
single echo and additive white Gaussian noise. Reference channels are built
from a small set of versioned analytic parameters so they can be regenerated
at any waveform rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError

REFERENCE_VERSION = "1"
REFERENCE_NAMES = ("ideal", "lowpass-1g4", "nonlinear-echo", "longrange-apd")
DEFAULT_SAMPLE_RATE = 4 * 2 * 2.67e9
MIN_PROFILE_POINTS = 4


@dataclass(frozen=True)
class ChannelModel:
    """
    Parametric impairment stack.

    Attributes:
        linear_fir: Real FIR taps at ``sample_rate``.
        echo_delay: Echo delay in samples.
        echo_gain: Echo amplitude, |gain| < 1.
        nonlinearity: Memory-polynomial coefficients c[q-1, l] for order q and
            memory l, or None for a linear channel.
        noise_std: Per-sample AWGN standard deviation.
        seed: Noise seed.
        sample_rate: Rate the taps were designed for; None accepts any rate.
        nonlinearity_first: Apply the polynomial before the FIR (default) or after.
        name: Reference name, if any.
    """

    linear_fir: tuple = (1.0,)
    echo_delay: int = 0
    echo_gain: float = 0.0
    nonlinearity: tuple | None = None
    noise_std: float = 0.0
    seed: int = 0
    sample_rate: float | None = None
    nonlinearity_first: bool = True
    name: str = "custom"
    version: str = REFERENCE_VERSION

    def __post_init__(self):
        fir = np.asarray(self.linear_fir, dtype=float).ravel()
        if fir.size == 0 or not np.all(np.isfinite(fir)):
            raise ConfigurationError("linear_fir must be a non-empty finite sequence")
        object.__setattr__(self, "linear_fir", tuple(float(v) for v in fir))
        if not abs(self.echo_gain) < 1:
            raise ConfigurationError(f"|echo_gain| must be < 1, got {self.echo_gain}")
        if self.echo_delay < 0:
            raise ConfigurationError("echo_delay must be non-negative")
        if not self.noise_std >= 0:
            raise ConfigurationError("noise_std must be >= 0")
        if self.nonlinearity is not None:
            c = np.atleast_2d(np.asarray(self.nonlinearity, dtype=float))
            if not np.all(np.isfinite(c)):
                raise ConfigurationError("nonlinearity coefficients must be finite")
            object.__setattr__(self, "nonlinearity", tuple(tuple(float(v) for v in row) for row in c))

    @property
    def fir(self) -> np.ndarray:
        return np.asarray(self.linear_fir)

    @property
    def coefficients(self) -> np.ndarray | None:
        return None if self.nonlinearity is None else np.asarray(self.nonlinearity)

    def with_seed(self, seed: int) -> "ChannelModel":
        return replace(self, seed=int(seed))

    def energy_gain_bound(self, peak: float) -> float:
        """
        Upper bound on output/input energy for noise-free inputs with |x| <= peak.

        Product of the FIR l1-norm squared, the echo factor (1+|g|)^2 and the
        polynomial bound (sum |c_ql| p^(q-1))^2, where p is the peak the
        polynomial sees: ``peak`` itself, or the filtered peak when the
        polynomial follows the linear part.
        """
        l1 = float(np.sum(np.abs(self.fir)))
        echo = 1 + abs(self.echo_gain)
        c = self.coefficients
        if c is None:
            g_nl = 1.0
        else:
            p = peak if self.nonlinearity_first else peak * l1 * echo
            q = np.arange(1, c.shape[0] + 1)[:, None]
            g_nl = float(np.sum(np.abs(c) * p ** (q - 1))) ** 2
        return float(l1**2 * echo**2 * g_nl)


def memory_polynomial(x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """y[n] = sum_q sum_l c[q-1, l] x[n-l]^q with zero history."""
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x)
    n_order, n_mem = coeffs.shape
    for q in range(n_order):
        xq = x ** (q + 1)
        for l in range(n_mem):
            c = coeffs[q, l]
            if c == 0.0:
                continue
            if l == 0:
                y += c * xq
            else:
                y[l:] += c * xq[:-l]
    return y


def apply_channel(x, model: ChannelModel, rng: np.random.Generator | None = None):
    """
    Pass a waveform through the impairment stack.

    Deterministic for a fixed ``model.seed``; the output keeps the input length.
    """
    from .dsp import TimeWaveform

    if isinstance(x, TimeWaveform):
        if model.sample_rate is not None and not math.isclose(
            x.sample_rate, model.sample_rate, rel_tol=1e-9
        ):
            raise ConfigurationError(
                f"waveform rate {x.sample_rate:g} Hz does not match channel rate {model.sample_rate:g} Hz"
            )
        samples, rate = x.samples, x.sample_rate
    else:
        samples, rate = np.asarray(x, dtype=float), model.sample_rate
    y = np.array(samples, dtype=float)
    c = model.coefficients

    def linear(v):
        if model.linear_fir != (1.0,):
            v = lfilter(model.fir, [1.0], v)
        if model.echo_gain != 0.0 and model.echo_delay > 0:
            v = v.copy()
            v[model.echo_delay :] += model.echo_gain * v[: len(v) - model.echo_delay]
        return v

    if model.nonlinearity_first:
        if c is not None:
            y = memory_polynomial(y, c)
        y = linear(y)
    else:
        y = linear(y)
        if c is not None:
            y = memory_polynomial(y, c)
    if model.noise_std > 0:
        rng = rng or np.random.default_rng(model.seed)
        y = y + rng.normal(0.0, model.noise_std, size=y.shape)
    if isinstance(x, TimeWaveform):
        return TimeWaveform(y, rate, origin="channel-out")
    return y


def one_pole_fir(f3db: float, sample_rate: float, tol: float = 1e-12) -> np.ndarray:
    """
    Truncated impulse response of h[n] = (1-a) a^n with its -3 dB point at f3db.

    ``a`` solves |1 - a e^{-jw}|^2 = 2 (1-a)^2 exactly at w = 2 pi f3db / fs.
    """
    w = 2 * np.pi * f3db / sample_rate
    if not 0 < w < np.pi:
        raise ConfigurationError("f3db must lie strictly between 0 and Nyquist")
    b = 2.0 - np.cos(w)
    a = b - np.sqrt(b * b - 1.0)
    n = int(np.ceil(np.log(tol) / np.log(a))) + 1
    h = (1.0 - a) * a ** np.arange(n)
    return h / h.sum()


# Analytic parameters of the reference channels. Delays in seconds are rounded
# to samples at the requested rate.
_REFERENCE_PARAMS = {
    "ideal": dict(),
    "lowpass-1g4": dict(f3db=1.4e9, noise_std=0.004),
    "nonlinear-echo": dict(
        nonlinearity_first=False,
        f3db=1.4e9,
        echo_delay_s=0.28e-9,
        echo_gain=0.25,
        nonlinearity=((1.0, 0.15, -0.05), (0.45, 0.15, 0.0), (-0.25, -0.08, 0.0)),
        noise_std=0.02,
    ),
    "longrange-apd": dict(f3db=1.0e9, noise_std=0.03),
}


def reference_channel(name: str, sample_rate: float = DEFAULT_SAMPLE_RATE, seed: int = 0) -> ChannelModel:
    """Fixed, versioned impairment models used by presets and tests."""
    if name not in _REFERENCE_PARAMS:
        raise ConfigurationError(f"unknown reference channel {name!r}; choose from {REFERENCE_NAMES}")
    p = _REFERENCE_PARAMS[name]
    if name == "ideal":
        return ChannelModel(name=name, seed=seed, sample_rate=sample_rate)
    fir = one_pole_fir(p["f3db"], sample_rate)
    delay = int(round(p.get("echo_delay_s", 0.0) * sample_rate))
    return ChannelModel(
        linear_fir=tuple(fir),
        echo_delay=delay,
        echo_gain=p.get("echo_gain", 0.0) if delay > 0 else 0.0,
        nonlinearity=p.get("nonlinearity"),
        nonlinearity_first=p.get("nonlinearity_first", True),
        noise_std=p["noise_std"],
        seed=seed,
        sample_rate=sample_rate,
        name=name,
    )


@dataclass
class MeasuredProfile:
    """Frequency grid with either a complex response or an SNR in dB."""

    freq_hz: np.ndarray
    response: np.ndarray | None = None
    snr_db: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.freq_hz = np.asarray(self.freq_hz, dtype=float)
        if (self.response is None) == (self.snr_db is None):
            raise ConfigurationError("profile needs exactly one of response or snr_db")
        vals = self.response if self.response is not None else self.snr_db
        vals = np.asarray(vals, dtype=complex if self.response is not None else float)
        if self.response is not None:
            self.response = vals
        else:
            self.snr_db = vals
        if len(self.freq_hz) == 0:
            raise ConfigurationError("profile is empty")
        if len(vals) != len(self.freq_hz):
            raise ConfigurationError("profile columns differ in length")
        if not (np.all(np.isfinite(self.freq_hz)) and np.all(np.isfinite(vals))):
            raise ConfigurationError("profile contains NaN or infinite entries")
        if np.any(np.diff(self.freq_hz) <= 0):
            raise ConfigurationError("profile frequencies must be strictly increasing")
        if len(self.freq_hz) < MIN_PROFILE_POINTS:
            raise ConfigurationError(
                f"profile has {len(self.freq_hz)} points; at least {MIN_PROFILE_POINTS} are needed"
            )

    @property
    def kind(self) -> str:
        return "response" if self.response is not None else "snr"

    def magnitude(self) -> np.ndarray:
        if self.response is not None:
            return np.abs(self.response)
        return np.sqrt(10 ** (self.snr_db / 10))


def load_profile(path) -> MeasuredProfile:
    """Read a ``freq_hz,re,im`` or ``freq_hz,snr_db`` CSV."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigurationError(f"{path}: empty profile file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigurationError(f"{path}: profile has no data rows")
    try:
        data = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if header == ["freq_hz", "re", "im"]:
        return MeasuredProfile(data[:, 0], response=data[:, 1] + 1j * data[:, 2])
    if header == ["freq_hz", "snr_db"]:
        return MeasuredProfile(data[:, 0], snr_db=data[:, 1])
    raise ConfigurationError(f"{path}: unrecognised header {','.join(header)}")


def save_profile(path, profile: MeasuredProfile) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if profile.kind == "response":
            w.writerow(["freq_hz", "re", "im"])
            for f, h in zip(profile.freq_hz, profile.response):
                w.writerow([repr(float(f)), repr(float(h.real)), repr(float(h.imag))])
        else:
            w.writerow(["freq_hz", "snr_db"])
            for f, s in zip(profile.freq_hz, profile.snr_db):
                w.writerow([repr(float(f)), repr(float(s))])


def fir_response(taps, freqs, sample_rate) -> np.ndarray:
    n = np.arange(len(taps))
    return np.exp(-2j * np.pi * np.outer(freqs, n) / sample_rate) @ np.asarray(taps, dtype=float)


def fir_from_profile(profile: MeasuredProfile, num_taps: int, sample_rate: float, density: int = 4):
    """
    Least-squares real FIR matching the profile.

    Complex profiles are matched as given (causal fit). SNR profiles supply a
    magnitude sqrt(10^(snr/10)), normalized to a peak of one, with a linear
    phase centred on the middle tap.

    Returns:
        (taps, residual) where residual is the RMS complex error of the fitted
        response on the profile grid.
    """
    if num_taps < 1 or num_taps % 2 == 0:
        raise ConfigurationError("num_taps must be a positive odd integer")
    f = profile.freq_hz
    if f[-1] > sample_rate / 2:
        raise ConfigurationError("profile extends beyond the Nyquist frequency")
    if profile.kind == "response":
        target_at = lambda ff: (
            np.interp(ff, f, profile.response.real) + 1j * np.interp(ff, f, profile.response.imag)
        )
    else:
        mag = profile.magnitude()
        mag = mag / mag.max()
        centre = (num_taps - 1) / 2
        target_at = lambda ff: np.interp(ff, f, mag) * np.exp(-2j * np.pi * ff * centre / sample_rate)
    # dense grid so the system is overdetermined regardless of profile size
    grid = np.union1d(f, np.linspace(f[0], f[-1], density * num_taps))
    A = np.exp(-2j * np.pi * np.outer(grid, np.arange(num_taps)) / sample_rate)
    t = target_at(grid)
    A_r = np.vstack([A.real, A.imag])
    t_r = np.concatenate([t.real, t.imag])
    taps, *_ = np.linalg.lstsq(A_r, t_r, rcond=None)
    resid = fir_response(taps, f, sample_rate) - target_at(f)
    return taps, float(np.sqrt(np.mean(np.abs(resid) ** 2)))


def channel_with_profile(model: ChannelModel, profile: MeasuredProfile, num_taps: int = 255):
    """Replace the linear FIR of ``model`` by a fit to a measured profile."""
    if model.sample_rate is None:
        raise ConfigurationError("model needs a sample rate to fit a profile")
    taps, _ = fir_from_profile(profile, num_taps, model.sample_rate)
    return replace(model, linear_fir=tuple(taps), name=f"{model.name}+profile")
