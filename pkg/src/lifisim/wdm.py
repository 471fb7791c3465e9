"""
Multi-wavelength orchestration: presets, independent per-channel runs and
rate/BER aggregation.
"""

from __future__ import annotations

import hashlib
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dsp import OfdmConfig
from .errors import ConfigurationError
from .link import LinkConfig, LinkReport, LinkSimulator
from .loading import FEC_BER_THRESHOLD
from .tx import TxScaling
from .volterra import VolterraConfig

MAX_CHANNELS = 16

# Table I equalizer: window lengths for orders 1..5 (order 1 is our choice;
# orders 2..5 are the listed tap counts) and delay differences.
TABLE1_WINDOWS = (33, 16, 7, 3, 2)
TABLE1_DELAY_DIFF = (0, 1, 0, 0, 0)


def table1_volterra(q_max: int = 5) -> VolterraConfig:
    if not 1 <= q_max <= len(TABLE1_WINDOWS):
        raise ConfigurationError(f"q_max must be in 1..{len(TABLE1_WINDOWS)}, got {q_max}")
    return VolterraConfig.from_window_lengths(TABLE1_WINDOWS[:q_max], TABLE1_DELAY_DIFF[:q_max])


@dataclass(frozen=True)
class WdmPlan:
    channels: tuple
    target_ber: float = FEC_BER_THRESHOLD
    name: str = "custom"

    def __post_init__(self):
        labels = [c.label for c in self.channels]
        if not 1 <= len(labels) <= MAX_CHANNELS:
            raise ConfigurationError(f"a WDM plan needs 1..{MAX_CHANNELS} channels, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise ConfigurationError("wavelength labels must be unique")

    def reordered(self, order) -> "WdmPlan":
        return replace(self, channels=tuple(self.channels[i] for i in order))


def _table1_channel(target_ber=FEC_BER_THRESHOLD) -> LinkConfig:
    return LinkConfig(
        ofdm=OfdmConfig(fft_size=1024, cp_length=20, rolloff=0.1, clip_level=3.2, bandwidth=2.67e9),
        channel="nonlinear-echo",
        volterra=table1_volterra(5),
        scaling=TxScaling(1.0, 0.0, vpp_mv=140.0, bias_ma=1171.0),
        target_ber=target_ber,
        label="905nm",
    )


# wavelength, Vpp [mV], bias [mA], bandwidth [GHz], clipping level, highest equalizer order
TABLE2_ROWS = (
    ("405nm", 280, 930, 1.33, 3.4, 5),
    ("450nm", 450, 1000, 1.6, 3.2, 0),
    ("455nm", 320, 1050, 1.6, 3.3, 3),
    ("850nm", 200, 1000, 2.67, 3.2, 0),
    ("900nm", 100, 1100, 3.0, 3.9, 3),
    ("905nm", 140, 1171, 2.67, 3.2, 5),
    ("940nm", 140, 1450, 2.67, 3.2, 0),
    ("955nm", 140, 1450, 2.67, 3.2, 0),
    ("980nm", 130, 1300, 2.67, 3.2, 0),
    ("1064nm", 175, 1050, 3.0, 3.4, 3),
)
TABLE2_RATES_GBPS = (4.62, 7.44, 6.97, 9.65, 14.2, 14.48, 11.4, 12, 11.4, 13.2)
TABLE2_BERS = (0.015, 0.016, 0.014, 0.016, 0.015, 0.028, 0.009, 0.007, 0.007, 0.018)

# wavelength, Vpp [mV], bias [mA], bandwidth [GHz]
TABLE3_ROWS = (("450nm", 700, 850, 1.33), ("905nm", 450, 850, 1.14))
TABLE3_RATES_GBPS = (2.41, 2.43)
TABLE3_BERS = (0.0028, 0.0035)

PRESETS = ("table1-905nm", "table2-ten-channel", "table3-500m")


def preset(name: str, target_ber: float = FEC_BER_THRESHOLD) -> WdmPlan:
    """
    Channel plans carrying the published settings.

    FFT size, CP length and roll-off follow Table I on every channel. Drive
    levels are recorded as metadata; each channel runs at the reference
    channel's normalized operating point.
    """
    if name == "table1-905nm":
        return WdmPlan((_table1_channel(target_ber),), target_ber, name)
    if name == "table2-ten-channel":
        chans = []
        for label, vpp, bias, bw, kappa, order in TABLE2_ROWS:
            chans.append(
                LinkConfig(
                    ofdm=OfdmConfig(1024, 20, 0.1, kappa, 4, bw * 1e9),
                    channel="nonlinear-echo" if order else "lowpass-1g4",
                    volterra=table1_volterra(order) if order else None,
                    scaling=TxScaling(1.0, 0.0, vpp_mv=float(vpp), bias_ma=float(bias)),
                    target_ber=target_ber,
                    label=label,
                )
            )
        return WdmPlan(tuple(chans), target_ber, name)
    if name == "table3-500m":
        chans = [
            LinkConfig(
                ofdm=OfdmConfig(1024, 20, 0.1, 3.2, 4, bw * 1e9),
                channel="longrange-apd",
                volterra=None,
                scaling=TxScaling(1.0, 0.0, vpp_mv=float(vpp), bias_ma=float(bias)),
                target_ber=target_ber,
                label=label,
            )
            for label, vpp, bias, bw in TABLE3_ROWS
        ]
        return WdmPlan(tuple(chans), target_ber, name)
    raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def channel_seed(master_seed: int, label: str) -> int:
    """Seed that depends only on the master seed and the wavelength label."""
    digest = hashlib.sha256(f"{int(master_seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def aggregate(rates, bers) -> tuple[float, float]:
    """Total rate and rate-weighted mean BER."""
    rates = np.asarray(list(rates), dtype=float)
    bers = np.asarray(list(bers), dtype=float)
    if rates.size == 0:
        raise ConfigurationError("nothing to aggregate")
    if rates.shape != bers.shape:
        raise ConfigurationError("rates and BERs differ in length")
    if np.any(rates <= 0):
        raise ConfigurationError("rates must be positive")
    total = float(np.sum(rates))
    return total, float(np.sum(rates * bers) / total)


@dataclass
class ChannelResult:
    label: str
    seed: int
    report: LinkReport | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass
class AggregateReport:
    plan_name: str
    seed: int
    channels: list = field(default_factory=list)

    @property
    def completed(self):
        return [c for c in self.channels if c.ok]

    @property
    def failed(self):
        return [c for c in self.channels if not c.ok]

    @property
    def aggregate_rate(self) -> float:
        return float(sum(c.report.rate_bps for c in self.completed))

    @property
    def effective_ber(self) -> float | None:
        done = [c for c in self.completed if c.report.rate_bps > 0]
        if not done:
            return None
        return aggregate([c.report.rate_bps for c in done], [c.report.ber for c in done])[1]

    def to_dict(self) -> dict:
        return {
            "plan": self.plan_name,
            "seed": self.seed,
            "channels": [
                {"label": c.label, "seed": c.seed, "status": "ok", **c.report.to_dict()}
                if c.ok
                else {"label": c.label, "seed": c.seed, "status": "failed", "error": c.error}
                for c in self.channels
            ],
            "aggregate": {
                "rate_bps": self.aggregate_rate,
                "effective_ber": self.effective_ber,
                "n_completed": len(self.completed),
                "n_failed": len(self.failed),
            },
        }


def _run_channel(cfg: LinkConfig, seed: int, n_bits: int) -> ChannelResult:
    try:
        rep = LinkSimulator(cfg, seed).run(n_bits)
        return ChannelResult(cfg.label, seed, rep)
    except Exception as exc:  # reported per channel, never aborts siblings
        return ChannelResult(cfg.label, seed, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}")


def run_wdm(plan: WdmPlan, seed: int = 0, n_bits: int = 200_000, workers: int = 1) -> AggregateReport:
    """
    Run every channel independently and aggregate.

    Each channel's seed is derived from (seed, label), so its result does not
    depend on channel order, N or scheduling.
    """
    jobs = [(c, channel_seed(seed, c.label), n_bits) for c in plan.channels]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_channel, *zip(*jobs)))
    else:
        results = [_run_channel(*j) for j in jobs]
    return AggregateReport(plan.name, int(seed), results)
