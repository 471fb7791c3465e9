"""
End-to-end single-link simulation.

One run trains the Volterra equalizer on a dedicated burst, estimates the
per-subcarrier SNR from a pilot burst, loads bits with Hughes-Hartogs and then
adapts the loading margin on payload bursts until the BER target is met.
Every burst draws bits and noise from streams keyed on (seed, stage, round).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelModel, apply_channel, reference_channel
from .dsp import OfdmConfig, get_constellation
from .errors import ConfigurationError
from .loading import (
    FEC_BER_THRESHOLD,
    LoadingPlan,
    SubcarrierStats,
    achievable_rate,
    adapt_to_target,
    estimate_channel,
    hughes_hartogs,
)
from .rx import count_bit_errors, matched_filter, ofdm_demodulate, one_tap_equalize
from .tx import TxScaling, assemble_frames, pilot_frames, transmit
from .volterra import (
    DEFAULT_BETA,
    VolterraConfig,
    VolterraEqualizer,
    build_term_set,
    feature_matrix,
    rls_train,
    solve_normal_equations,
    volterra_apply,
)

_TRAIN, _PROBE, _DATA = 1, 2, 3
CONSTELLATION_SAMPLES = 200


@dataclass(frozen=True)
class LinkConfig:
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    channel: str | ChannelModel = "nonlinear-echo"
    volterra: VolterraConfig | None = None
    scaling: TxScaling = field(default_factory=TxScaling)
    target_ber: float = FEC_BER_THRESHOLD
    n_pilot: int = 20
    n_train_frames: int = 20
    beta: float = DEFAULT_BETA
    max_rounds: int = 10
    margin_db: float = 0.0
    label: str = "link"

    def __post_init__(self):
        if self.n_pilot < 2:
            raise ConfigurationError("n_pilot must be at least 2")
        if self.volterra is not None and self.n_train_frames < 1:
            raise ConfigurationError("n_train_frames must be positive when an equalizer is configured")

    @classmethod
    def from_dict(cls, d: dict) -> "LinkConfig":
        """
        Inverse of ``to_dict``. Missing keys take the defaults; unknown keys and
        bad values raise ConfigurationError naming the field.
        """
        if not isinstance(d, dict):
            raise ConfigurationError("link block must be a JSON object")
        unknown = sorted(set(d) - _LINK_FIELDS)
        if unknown:
            raise ConfigurationError(f"unknown field {unknown[0]!r} in link block")
        base = OfdmConfig()
        ofdm_kw = {}
        for key, attr in _OFDM_KEYS.items():
            if key in d:
                val = d[key]
                if key == "clip_level" and val is None:
                    val = math.inf
                ofdm_kw[attr] = _typed(key, val, type(getattr(base, attr)))
        scale_kw = {}
        for key in ("peak_amplitude", "dc_offset", "vpp_mv", "bias_ma"):
            if d.get(key) is not None:
                scale_kw[key] = _typed(key, d[key], float)
        kw = {}
        for key, typ in (("target_ber", float), ("n_pilot", int), ("n_train_frames", int), ("beta", float),
                         ("max_rounds", int), ("margin_db", float), ("label", str)):
            if key in d:
                kw[key] = _typed(key, d[key], typ)
        if "target_ber" in kw and not 0 < kw["target_ber"] < 0.5:
            raise ConfigurationError(f"field 'target_ber' must lie in (0, 0.5), got {kw['target_ber']}")
        if "beta" in kw and not 0 < kw["beta"] <= 1:
            raise ConfigurationError(f"field 'beta' must lie in (0, 1], got {kw['beta']}")
        channel = d.get("channel", "nonlinear-echo")
        if not isinstance(channel, str):
            raise ConfigurationError("field 'channel' must be a reference channel name")
        try:
            ofdm = OfdmConfig(**{**_asdict(base), **ofdm_kw})
        except ConfigurationError as exc:
            raise ConfigurationError(f"OFDM field: {exc}") from None
        try:
            model = reference_channel(channel, ofdm.sample_rate)
        except ConfigurationError as exc:
            raise ConfigurationError(f"field 'channel': {exc}") from None
        if d.get("noise_std") is not None:
            noise = _typed("noise_std", d["noise_std"], float)
            if noise < 0:
                raise ConfigurationError("field 'noise_std' must be non-negative")
            model = replace(model, noise_std=noise)
        vol = d.get("volterra")
        if vol is not None:
            try:
                vol = _volterra_from(vol)
            except (ConfigurationError, KeyError, TypeError, ValueError) as exc:
                raise ConfigurationError(f"field 'volterra': {exc}") from None
        return cls(ofdm=ofdm, channel=model, volterra=vol, scaling=TxScaling(**scale_kw), **kw)

    def channel_model(self) -> ChannelModel:
        if isinstance(self.channel, ChannelModel):
            return self.channel
        return reference_channel(self.channel, self.ofdm.sample_rate)

    def to_dict(self) -> dict:
        model = self.channel_model()
        return {
            "label": self.label,
            "fft_size": self.ofdm.fft_size,
            "cp_length": self.ofdm.cp_length,
            "rolloff": self.ofdm.rolloff,
            "clip_level": self.ofdm.clip_level if math.isfinite(self.ofdm.clip_level) else None,
            "oversampling": self.ofdm.oversampling,
            "bandwidth_hz": self.ofdm.bandwidth,
            "rrc_span": self.ofdm.rrc_span,
            "channel": model.name,
            "noise_std": model.noise_std,
            "volterra": None if self.volterra is None else self.volterra.to_dict(),
            "peak_amplitude": self.scaling.peak_amplitude,
            "dc_offset": self.scaling.dc_offset,
            "vpp_mv": self.scaling.vpp_mv,
            "bias_ma": self.scaling.bias_ma,
            "target_ber": self.target_ber,
            "n_pilot": self.n_pilot,
            "n_train_frames": self.n_train_frames,
            "beta": self.beta,
            "max_rounds": self.max_rounds,
            "margin_db": self.margin_db,
        }


@dataclass
class BurstResult:
    ber: float
    n_bits: int
    n_errors: int
    stats: SubcarrierStats
    constellation: dict = field(default_factory=dict, repr=False)


@dataclass
class LinkReport:
    label: str
    seed: int
    rate_bps: float
    ber: float
    n_bits: int
    n_errors: int
    plan: LoadingPlan
    stats: SubcarrierStats
    stats_linear: SubcarrierStats | None
    trace: list
    converged: bool
    frequencies: np.ndarray
    constellation: dict
    equalizer: VolterraEqualizer | None
    config: LinkConfig
    frame_rate: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "seed": self.seed,
            "rate_bps": self.rate_bps,
            "ber": self.ber,
            "n_bits": self.n_bits,
            "n_errors": self.n_errors,
            "bits_per_frame": self.plan.total_bits,
            "frame_rate_hz": self.frame_rate,
            "margin_db": self.plan.margin_db,
            "converged": self.converged,
            "trace": self.trace,
            "mean_snr_db": float(np.mean(10 * np.log10(np.maximum(self.stats.snr, 1e-30)))),
            "equalizer": None
            if self.equalizer is None
            else {"n_terms": self.equalizer.n_terms, "training_mse": self.equalizer.training_mse},
            "config": self.config.to_dict(),
        }


_OFDM_KEYS = {
    "fft_size": "fft_size",
    "cp_length": "cp_length",
    "rolloff": "rolloff",
    "clip_level": "clip_level",
    "oversampling": "oversampling",
    "bandwidth_hz": "bandwidth",
    "rrc_span": "rrc_span",
}
_LINK_FIELDS = set(_OFDM_KEYS) | {
    "label", "channel", "noise_std", "volterra", "peak_amplitude", "dc_offset", "vpp_mv", "bias_ma",
    "target_ber", "n_pilot", "n_train_frames", "beta", "max_rounds", "margin_db",
}  # fmt: skip


def _asdict(cfg: OfdmConfig) -> dict:
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}


def _typed(name, value, typ):
    if typ is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif typ is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, typ)
    if not ok:
        raise ConfigurationError(f"field {name!r} must be {typ.__name__}, got {value!r}")
    return typ(value)


def _volterra_from(v) -> VolterraConfig:
    # {"q_max": n} alone selects the Table-I windows up to order n
    if isinstance(v, dict) and set(v) == {"q_max"}:
        from .wdm import table1_volterra

        return table1_volterra(_typed("q_max", v["q_max"], int))
    if not isinstance(v, dict):
        raise ConfigurationError("expected an object")
    return VolterraConfig.from_dict(v)


def _seed_int(*key) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


class LinkSimulator:
    """
    Stateful runner for one link; also usable as the ``runner`` callable of
    ``adapt_to_target`` (calling it with a plan returns the measured BER).
    """

    def __init__(self, config: LinkConfig, seed: int = 0, payload_bits: int = 200_000):
        self.config = config
        self.seed = int(seed)
        self.payload_bits = int(payload_bits)
        self.channel = config.channel_model()
        self.equalizer: VolterraEqualizer | None = None
        self.rx_gain: float | None = None
        self.last_burst: BurstResult | None = None
        self._round = 0

    def _rng(self, stage, rnd=0):
        return np.random.default_rng([self.seed, stage, rnd])

    def _through(self, frames, stage, rnd=0) -> tuple[np.ndarray, np.ndarray]:
        """Transmit spectra, pass the channel, matched-filter. Returns (tx symbols, rx symbols)."""
        cfg = self.config.ofdm
        tx_sym, wav = transmit(frames, cfg, self.config.scaling)
        ch = self.channel.with_seed(_seed_int(self.seed, stage, rnd, 7))
        rx = apply_channel(wav, ch)
        y = matched_filter(rx, cfg, n_symbols=len(tx_sym))
        y = y - y.mean()  # AC coupling
        if self.rx_gain is None:
            sd = float(np.std(y))
            self.rx_gain = 1.0 / sd if sd > 0 else 1.0
        return tx_sym, y * self.rx_gain

    def _equalize(self, y):
        return y if self.equalizer is None else volterra_apply(self.equalizer, y)

    def train(self) -> VolterraEqualizer | None:
        """Fit the Volterra equalizer on a dedicated 4-QAM burst."""
        if self.config.volterra is None:
            return None
        X, _ = pilot_frames(self._rng(_TRAIN), self.config.ofdm, self.config.n_train_frames)
        x_ref, y = self._through(X, _TRAIN)
        terms = build_term_set(self.config.volterra)
        self.equalizer = rls_train(terms, y, x_ref, beta=self.config.beta)
        return self.equalizer

    def probe(self) -> tuple[SubcarrierStats, SubcarrierStats | None]:
        """Pilot burst SNR estimate, with and (when an equalizer exists) without equalization."""
        cfg = self.config.ofdm
        X, _ = pilot_frames(self._rng(_PROBE), cfg, self.config.n_pilot)
        _, y = self._through(X, _PROBE)
        d = slice(1, cfg.fft_size // 2)
        stats = estimate_channel(ofdm_demodulate(self._equalize(y), cfg)[:, d], X[:, d])
        lin = None
        if self.equalizer is not None:
            lin = estimate_channel(ofdm_demodulate(y, cfg)[:, d], X[:, d])
        return stats, lin

    def transmit_payload(self, plan: LoadingPlan, n_bits: int | None = None, rnd: int | None = None) -> BurstResult:
        """One burst of pilots plus payload frames loaded by ``plan``."""
        cfg = self.config.ofdm
        if rnd is None:
            self._round += 1
            rnd = self._round
        n_bits = self.payload_bits if n_bits is None else n_bits
        bpf = plan.total_bits
        if bpf == 0:
            self.last_burst = BurstResult(0.0, 0, 0, None)
            return self.last_burst
        n_frames = max(1, math.ceil(n_bits / bpf))
        rng = self._rng(_DATA, rnd)
        Xp, _ = pilot_frames(rng, cfg, self.config.n_pilot)
        bits = rng.integers(0, 2, size=(n_frames, bpf))
        Xd = assemble_frames(bits, plan, cfg)
        _, y = self._through(np.vstack([Xp, Xd]), _DATA, rnd)
        Y = ofdm_demodulate(self._equalize(y), cfg)
        d = slice(1, cfg.fft_size // 2)
        stats = estimate_channel(Y[: self.config.n_pilot, d], Xp[:, d])
        Xe = one_tap_equalize(Y[self.config.n_pilot :, d], stats.H, plan.bits)
        n_err = 0
        offsets = np.concatenate([[0], np.cumsum(plan.bits)[:-1]])
        constellation = {}
        for nb in np.unique(plan.bits[plan.bits > 0]):
            idx = np.flatnonzero(plan.bits == nb)
            const = get_constellation(1 << int(nb))
            rx = Xe[:, idx] / np.sqrt(plan.energy[idx])
            cols = offsets[idx, None] + np.arange(nb)
            sent = bits[:, cols].reshape(n_frames, -1)
            got = const.demap(rx).reshape(n_frames, -1)
            n_err += count_bit_errors(got, sent)
            tx = Xd[:, idx + 1] / np.sqrt(plan.energy[idx])
            m = min(CONSTELLATION_SAMPLES, tx.size)
            constellation[1 << int(nb)] = (tx.ravel()[:m], rx.ravel()[:m])
        total = bits.size
        self.last_burst = BurstResult(n_err / total, total, n_err, stats, constellation)
        return self.last_burst

    def __call__(self, plan: LoadingPlan) -> float:
        return self.transmit_payload(plan).ber

    def run(self, n_bits: int | None = None, plan: LoadingPlan | None = None, adapt: bool = True) -> LinkReport:
        """
        Full link run.

        Args:
            n_bits: Payload bits per burst (default: ``payload_bits``).
            plan: Fixed loading plan; skips Hughes-Hartogs when given.
            adapt: Run the BER-target adaptation loop.
        """
        cfg = self.config
        if n_bits is not None:
            self.payload_bits = int(n_bits)
        self.train()
        stats, lin = self.probe()
        if plan is None:
            plan = hughes_hartogs(stats, cfg.target_ber, margin_db=cfg.margin_db)
        if adapt and plan.snr is not None:
            res = adapt_to_target(self, plan, cfg.target_ber, cfg.max_rounds)
            final_plan, trace, converged = res.plan, res.trace, res.converged
            if self.last_burst is None or trace[-1]["bits_per_frame"] != final_plan.total_bits:
                self.transmit_payload(final_plan)
        else:
            final_plan = plan
            burst = self.transmit_payload(final_plan)
            trace = [{"round": 1, "margin_db": plan.margin_db, "bits_per_frame": plan.total_bits, "ber": burst.ber}]
            converged = burst.ber <= cfg.target_ber
        burst = self.last_burst
        for row in trace:
            row["rate_bps"] = row["bits_per_frame"] * cfg.ofdm.frame_rate
        return LinkReport(
            label=cfg.label,
            seed=self.seed,
            rate_bps=achievable_rate(final_plan, cfg.ofdm),
            ber=burst.ber,
            n_bits=burst.n_bits,
            n_errors=burst.n_errors,
            plan=final_plan,
            stats=stats,
            stats_linear=lin,
            trace=trace,
            converged=converged,
            frequencies=cfg.ofdm.data_frequencies,
            constellation=burst.constellation,
            equalizer=self.equalizer,
            config=cfg,
            frame_rate=cfg.ofdm.frame_rate,
        )


@dataclass
class EqualizerComparison:
    mse_volterra: float
    mse_linear: float
    n_terms: int
    n_samples: int

    @property
    def gain_db(self) -> float:
        return 10 * math.log10(self.mse_linear / self.mse_volterra)

    def to_dict(self) -> dict:
        return {
            "mse_volterra": self.mse_volterra,
            "mse_linear": self.mse_linear,
            "gain_db": self.gain_db,
            "n_terms": self.n_terms,
            "n_samples": self.n_samples,
        }


def compare_equalizers(config: LinkConfig, seed: int = 0, n_samples: int = 100_000) -> EqualizerComparison:
    """
    Residual MSE of the configured Volterra equalizer (RLS) against the best
    linear equalizer over the same order-1 window (least squares), both fitted
    on one record and scored on a second, independent record.
    """
    if config.volterra is None:
        raise ConfigurationError("equalizer comparison needs a Volterra configuration")
    cfg = config.ofdm
    n_frames = max(1, math.ceil(n_samples / cfg.frame_length))
    sim = LinkSimulator(config, seed)
    X, _ = pilot_frames(sim._rng(_TRAIN), cfg, n_frames)
    x_fit, y_fit = sim._through(X, _TRAIN)
    X, _ = pilot_frames(sim._rng(_PROBE), cfg, n_frames)
    x_val, y_val = sim._through(X, _PROBE)

    terms = build_term_set(config.volterra)
    eq = rls_train(terms, y_fit, x_fit, beta=config.beta)
    mse_v = float(np.mean((volterra_apply(eq, y_val) - x_val) ** 2))

    lin = [t for t in terms if len(t) == 1]
    w = solve_normal_equations(feature_matrix(lin, y_fit), x_fit)
    mse_l = float(np.mean((feature_matrix(lin, y_val) @ w - x_val) ** 2))
    return EqualizerComparison(mse_v, mse_l, len(terms), len(x_fit))


def run_link(config: LinkConfig, seed: int = 0, n_bits: int = 200_000, **kw) -> LinkReport:
    return LinkSimulator(config, seed).run(n_bits, **kw)


def with_channel(config: LinkConfig, channel) -> LinkConfig:
    return replace(config, channel=channel)
