"""
Pilot-based SNR estimation, Hughes-Hartogs bit/energy loading and the
BER-target adaptation loop.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from .dsp import SUPPORTED_ORDERS, OfdmConfig, get_constellation
from .errors import ConfigurationError, EstimationError

SNR_CAP_DB = 60.0
MAX_BITS = 9
MARGIN_STEP_DB = 0.5
NOISE_SMOOTHING = 8
FEC_BER_THRESHOLD = 5.6e-2


def qfunc(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


@dataclass
class SubcarrierStats:
    """Per-data-subcarrier channel estimate and linear SNR."""

    H: np.ndarray
    snr: np.ndarray
    n_frames: int
    usable: np.ndarray = field(default=None)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        self.snr = np.asarray(self.snr, dtype=float)
        if self.usable is None:
            self.usable = self.snr > 0
        self.usable = np.asarray(self.usable, dtype=bool)
        if np.any(self.snr < 0):
            raise EstimationError("SNR estimates must be non-negative")

    @property
    def snr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.snr)


def estimate_channel(Y, X, noise_smoothing: int = NOISE_SMOOTHING, snr_cap_db: float = SNR_CAP_DB) -> SubcarrierStats:
    """
    Least-squares channel and SNR estimate from pilot frames.

    H[k] is the mean over frames of Y[k]/X[k]. The residual Y - H X gives an
    unbiased noise variance per subcarrier, averaged over the usable
    subcarriers within ``noise_smoothing`` bins either side (0 keeps the raw
    per-bin estimate). SNR = |H|^2 / noise variance, capped at ``snr_cap_db``.

    Args:
        Y: Received pilot symbols, shape (n_frames, n_subcarriers).
        X: Transmitted pilot symbols, same shape.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    if Y.shape != X.shape:
        raise EstimationError("received and transmitted pilots differ in shape")
    F = Y.shape[0]
    if F < 2:
        raise EstimationError(f"need at least 2 pilot frames, got {F}")
    usable = np.all(np.abs(X) > 1e-12, axis=0)
    Xs = np.where(usable, X, 1.0)
    H = np.where(usable, np.mean(Y / Xs, axis=0), 0.0)
    resid = Y - H * X
    var = np.sum(np.abs(resid - resid.mean(axis=0)) ** 2, axis=0) / (F - 1)
    if noise_smoothing > 0:
        var = _smooth(var, usable, noise_smoothing)
    cap = 10 ** (snr_cap_db / 10)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(var > 0, np.abs(H) ** 2 / var, cap)
    snr = np.where(usable, np.minimum(snr, cap), 0.0)
    return SubcarrierStats(H, snr, F, usable)


def _smooth(v, mask, half_width):
    idx = np.flatnonzero(mask)
    out = v.copy()
    if idx.size == 0:
        return out
    vals = v[idx]
    c = np.concatenate([[0.0], np.cumsum(vals)])
    n = len(vals)
    i = np.arange(n)
    lo = np.maximum(i - half_width, 0)
    hi = np.minimum(i + half_width + 1, n)
    out[idx] = (c[hi] - c[lo]) / (hi - lo)
    return out


def ber_square_qam(order: int, snr):
    """Gray-coded square QAM approximation (exact for M = 4)."""
    m = math.log2(order)
    return (4 / m) * (1 - 1 / math.sqrt(order)) * qfunc(np.sqrt(3 * np.asarray(snr, dtype=float) / (order - 1)))


def ber_bpsk(snr):
    return qfunc(np.sqrt(2 * np.asarray(snr, dtype=float)))


# Table points below this BER rest on too few errors; the tail is analytic.
TABLE_RELIABLE_BER = 1e-4


@lru_cache(maxsize=1)
def _tables():
    text = resources.files("lifisim").joinpath("data/ber_tables.json").read_text(encoding="utf-8")
    doc = json.loads(text)
    grid = np.asarray(doc["snr_db"], dtype=float)
    out = {}
    for k, bers in doc["ber"].items():
        b = np.minimum.accumulate(np.asarray(bers, dtype=float))
        s = grid[: len(b)]
        keep = b >= TABLE_RELIABLE_BER
        out[int(k)] = (s[keep], b[keep])
    return out


@lru_cache(maxsize=None)
def _tail(order: int) -> tuple[float, float]:
    """
    Nearest-neighbour tail A * Q(d_min * sqrt(snr / 2)) for a unit-energy
    alphabet, with A matched to the last reliable table point.
    """
    pts = get_constellation(order).points
    dist = np.abs(pts[:, None] - pts[None, :])
    d_min = float(np.min(dist[dist > 0]))
    s, b = _tables()[order]
    q = float(qfunc(d_min * math.sqrt(10 ** (s[-1] / 10) / 2)))
    return d_min, float(b[-1]) / q


def ber_from_table(order: int, snr):
    """Interpolated Monte Carlo BER (log-linear in dB) with an analytic high-SNR tail."""
    s, b = _tables()[order]
    snr = np.maximum(np.asarray(snr, dtype=float), 1e-30)
    snr_db = 10 * np.log10(snr)
    d_min, a = _tail(order)
    tail = a * qfunc(d_min * np.sqrt(snr / 2))
    return np.where(snr_db > s[-1], tail, 10 ** np.interp(snr_db, s, np.log10(b)))


def _raw_required_snr(order: int, target_ber: float) -> float:
    if order == 2:
        f = ber_bpsk
        if target_ber >= 0.5:
            return 0.0
    elif order in (4, 16, 64, 256):
        f = lambda g: ber_square_qam(order, g)
        if target_ber >= f(0.0):
            return 0.0
    else:
        s, b = _tables()[order]
        if target_ber >= b[0]:
            return 10 ** (s[0] / 10)
        if target_ber >= b[-1]:
            # interp needs increasing x: reverse the (decreasing) log BER axis
            lb = np.log10(b)
            return 10 ** (float(np.interp(math.log10(target_ber), lb[::-1], s[::-1])) / 10)
        f = lambda g: ber_from_table(order, g)
    hi = 1.0
    while f(hi) > target_ber:
        hi *= 2
    return float(brentq(lambda g: f(g) - target_ber, 0.0, hi, xtol=1e-14, rtol=1e-13))


@lru_cache(maxsize=4096)
def _ladder(target_ber: float) -> tuple:
    raw = [0.0] + [_raw_required_snr(1 << b, target_ber) for b in range(1, MAX_BITS + 1)]
    return tuple(np.maximum.accumulate(raw))


def required_snr(order: int, target_ber: float) -> float:
    """
    Linear symbol SNR at which ``order``-QAM reaches ``target_ber``.

    Square orders invert the Gray approximation, BPSK is exact and the other
    orders interpolate the committed Monte Carlo table. Values are made
    non-decreasing along the order ladder 2, 4, ..., 512.
    """
    if order not in SUPPORTED_ORDERS:
        raise ConfigurationError(f"unsupported constellation order {order}")
    if not 0 < target_ber < 0.5:
        raise ConfigurationError(f"target BER must lie in (0, 0.5), got {target_ber}")
    return _ladder(float(target_ber))[int(math.log2(order))]


def snr_ladder(target_ber: float, max_bits: int = MAX_BITS) -> np.ndarray:
    """required SNR indexed by bit count 0..max_bits (0 bits -> 0)."""
    if not 0 < target_ber < 0.5:
        raise ConfigurationError(f"target BER must lie in (0, 0.5), got {target_ber}")
    return np.asarray(_ladder(float(target_ber))[: max_bits + 1])


@dataclass
class LoadingPlan:
    """
    Bits and energies per data subcarrier (index 0 is subcarrier k = 1).

    ``snr`` and ``energy_budget`` are kept so the plan can be reloaded at a
    different margin.
    """

    bits: np.ndarray
    energy: np.ndarray
    target_ber: float
    margin_db: float = 0.0
    snr: np.ndarray | None = field(default=None, repr=False)
    energy_budget: float | None = None
    max_bits: int = MAX_BITS

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=int)
        self.energy = np.asarray(self.energy, dtype=float)
        if self.bits.shape != self.energy.shape:
            raise ConfigurationError("bits and energy differ in length")
        if np.any(self.bits < 0) or np.any(self.bits > MAX_BITS):
            raise ConfigurationError("bits per subcarrier must lie in 0..9")
        if np.any(self.energy < 0) or np.any(self.energy[self.bits == 0] != 0):
            raise ConfigurationError("energy must be >= 0 and zero on unloaded subcarriers")

    @property
    def total_bits(self) -> int:
        return int(self.bits.sum())

    @property
    def n_subcarriers(self) -> int:
        return len(self.bits)

    @classmethod
    def flat(cls, n_subcarriers: int, bits: int = 2, target_ber: float = FEC_BER_THRESHOLD) -> "LoadingPlan":
        """Same order and unit energy on every subcarrier."""
        b = np.full(n_subcarriers, bits, dtype=int)
        return cls(b, (b > 0).astype(float), target_ber, 0.0, None, float(n_subcarriers))

    def reload(self, margin_db: float) -> "LoadingPlan":
        if self.snr is None:
            raise ConfigurationError("plan carries no SNR estimate to reload from")
        return hughes_hartogs(self.snr, self.target_ber, self.energy_budget, self.max_bits, margin_db)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "bits", "energy"])
            for k, (b, e) in enumerate(zip(self.bits, self.energy), start=1):
                w.writerow([k, int(b), repr(float(e))])

    @classmethod
    def from_csv(cls, path, target_ber: float = FEC_BER_THRESHOLD) -> "LoadingPlan":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["k", "bits", "energy"]:
                raise ConfigurationError(f"{path}: expected header k,bits,energy")
            rows = [r for r in reader if r]
        ks = [int(r[0]) for r in rows]
        if ks != list(range(1, len(rows) + 1)):
            raise ConfigurationError(f"{path}: subcarrier indices must run 1..n")
        return cls([int(r[1]) for r in rows], [float(r[2]) for r in rows], target_ber)


def _increment(ladder, b, gain, k):
    # Heap entry for granting bit b+1 on subcarrier k. Costs equal to 12
    # digits count as ties (0->1 and 1->2 bits cost the same exactly) and go
    # to the subcarrier with fewer bits, then the lower index.
    dE = (ladder[b + 1] - ladder[b]) / gain
    return (float(f"{dE:.12g}"), b, k, dE)


def hughes_hartogs(
    stats,
    target_ber: float,
    energy_budget: float | None = None,
    max_bits: int = MAX_BITS,
    margin_db: float = 0.0,
) -> LoadingPlan:
    """
    Greedy bit/energy loading.

    Repeatedly grants the one-bit increment with the smallest extra energy
    (required_snr(next) - required_snr(current)) / snr_k, ties to the
    subcarrier with fewer bits and then the lowest index, until the cheapest increment no longer fits the budget. SNRs are
    derated by ``margin_db`` first. Each loaded subcarrier gets exactly the
    energy its order needs at the derated SNR.

    Args:
        stats: SubcarrierStats or an array of linear SNRs.
        target_ber: BER each subcarrier is loaded for.
        energy_budget: Total energy; defaults to the subcarrier count.
        max_bits: Highest bit count per subcarrier.
        margin_db: SNR derating in dB.
    """
    snr = stats.snr if isinstance(stats, SubcarrierStats) else np.asarray(stats, dtype=float)
    snr = np.asarray(snr, dtype=float)
    if snr.size == 0:
        raise ConfigurationError("no subcarriers to load")
    if not 1 <= max_bits <= MAX_BITS:
        raise ConfigurationError(f"max_bits must be in 1..{MAX_BITS}")
    if energy_budget is None:
        energy_budget = float(snr.size)
    if energy_budget < 0:
        raise ConfigurationError("energy budget must be non-negative")
    ladder = snr_ladder(target_ber, max_bits)
    gain = snr * 10 ** (-margin_db / 10)
    n = snr.size
    bits = np.zeros(n, dtype=int)
    heap = [_increment(ladder, 0, gain[k], k) for k in range(n) if gain[k] > 0]
    heapq.heapify(heap)
    used = 0.0
    while heap:
        _, _, k, dE = heap[0]
        if used + dE > energy_budget:
            break
        heapq.heappop(heap)
        used += dE
        bits[k] += 1
        if bits[k] < max_bits:
            heapq.heappush(heap, _increment(ladder, bits[k], gain[k], k))
    energy = np.zeros(n)
    on = bits > 0
    energy[on] = ladder[bits[on]] / gain[on]
    return LoadingPlan(bits, energy, float(target_ber), float(margin_db), snr.copy(), float(energy_budget), max_bits)


def brute_force_loading(snr, target_ber: float, energy_budget: float, max_bits: int):
    """
    Exhaustive search for the allocation with the most bits, then least energy.

    Only for small instances; used as an independent check of the greedy.
    """
    import itertools

    snr = np.asarray(snr, dtype=float)
    ladder = snr_ladder(target_ber, max_bits)
    best = (-1, math.inf, None)
    for combo in itertools.product(range(max_bits + 1), repeat=snr.size):
        b = np.array(combo)
        if np.any((b > 0) & (snr <= 0)):
            continue
        on = b > 0
        E = float(np.sum(ladder[b[on]] / snr[on]))
        if E > energy_budget:
            continue
        tb = int(b.sum())
        if tb > best[0] or (tb == best[0] and E < best[1]):
            best = (tb, E, b)
    return best


def achievable_rate(plan: LoadingPlan | np.ndarray, config: OfdmConfig) -> float:
    """Bits per frame times the frame rate 2B / (K + CP), in bit/s."""
    bits = plan.bits if isinstance(plan, LoadingPlan) else np.asarray(plan)
    return float(np.sum(bits)) * config.frame_rate


@dataclass
class AdaptationResult:
    plan: LoadingPlan
    trace: list
    converged: bool

    @property
    def final_ber(self) -> float | None:
        return self.trace[-1]["ber"] if self.trace else None


def adapt_to_target(
    runner: Callable[[LoadingPlan], float],
    plan: LoadingPlan,
    target_ber: float,
    max_rounds: int = 10,
    step_db: float = MARGIN_STEP_DB,
    relax: bool = False,
) -> AdaptationResult:
    """
    Nudge the loading margin until the measured BER meets the target.

    Each round measures ``runner(plan)``. Above target the margin grows by
    ``step_db`` and the plan is reloaded; at or below target the loop stops.
    With ``relax`` a BER more than 4x under target instead lowers the margin
    by ``step_db / 2`` and continues; if that overshoots, the last compliant
    plan is returned.
    """
    trace = []
    if max_rounds <= 0:
        return AdaptationResult(plan, trace, False)
    best = None
    for r in range(1, max_rounds + 1):
        ber = float(runner(plan))
        trace.append({"round": r, "margin_db": plan.margin_db, "bits_per_frame": plan.total_bits, "ber": ber})
        if ber <= target_ber:
            best = plan
            if relax and ber < target_ber / 4 and r < max_rounds:
                plan = plan.reload(plan.margin_db - step_db / 2)
                continue
            return AdaptationResult(plan, trace, True)
        if best is not None:
            return AdaptationResult(best, trace, True)
        if r < max_rounds:
            plan = plan.reload(plan.margin_db + step_db)
    if best is not None:
        return AdaptationResult(best, trace, True)
    return AdaptationResult(plan, trace, False)


def write_snr_csv(path, freqs, snr) -> None:
    """``freq_hz,snr_db`` export, readable by ``channel.load_profile``."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "snr_db"])
        with np.errstate(divide="ignore"):
            sdb = 10 * np.log10(np.maximum(np.asarray(snr, dtype=float), 1e-30))
        for f, s in zip(freqs, sdb):
            w.writerow([repr(float(f)), repr(float(s))])
