"""
Command-line entry point.

    lifisim run --preset table1-905nm --seed 42 --bits 1000000 --out out/
    lifisim wdm --preset table2-ten-channel --seed 1 --out out/
    lifisim sweep --preset table1-905nm --param margin_db --values 0,1,2 --out out/
    lifisim loading --profile snr.csv --out out/
    lifisim aggregate --rates 2.41,2.43 --bers 0.0028,0.0035

Exit status: 0 on success, 2 on a bad configuration, 3 when some WDM
channels failed (the others are still reported).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .channel import channel_with_profile, load_profile
from .dsp import OfdmConfig
from .errors import ConfigurationError, LifiSimError
from .link import LinkConfig, LinkReport, LinkSimulator, compare_equalizers
from .loading import (
    FEC_BER_THRESHOLD,
    LoadingPlan,
    achievable_rate,
    hughes_hartogs,
)
from .wdm import PRESETS, WdmPlan, aggregate, preset, run_wdm, table1_volterra

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3
MODES = ("single", "wdm", "loading-only", "equalizer-bench")
SWEEP_PARAMS = ("margin_db", "noise_std", "clip_level", "q_max")
DEFAULT_SEED = 0
DEFAULT_BITS = 200_000
_RUN_FIELDS = {"mode", "preset", "link", "channels", "seed", "bits", "out", "profile", "target_ber", "name"}


@dataclass
class RunConfig:
    """
    One invocation's parameters. Exactly one of ``preset`` and an inline
    block (``link`` for single/equalizer-bench/loading-only runs, ``channels``
    for WDM) is set.
    """

    mode: str
    seed: int
    bits: int
    out: Path | None = None
    preset: str | None = None
    link: dict | None = None
    channels: list | None = None
    profile: Path | None = None
    target_ber: float = FEC_BER_THRESHOLD
    name: str = "custom"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"field 'mode' must be one of {', '.join(MODES)}, got {self.mode!r}")
        inline = self.link if self.mode != "wdm" else self.channels
        if (self.preset is None) == (inline is None):
            block = "channels" if self.mode == "wdm" else "link"
            raise ConfigurationError(f"give exactly one of field 'preset' and field '{block}'")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigurationError(f"field 'preset': unknown preset {self.preset!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigurationError(f"field 'seed' must be a non-negative integer, got {self.seed!r}")
        if isinstance(self.bits, bool) or not isinstance(self.bits, int) or self.bits < 1:
            raise ConfigurationError(f"field 'bits' must be a positive integer, got {self.bits!r}")
        if not 0 < self.target_ber < 0.5:
            raise ConfigurationError(f"field 'target_ber' must lie in (0, 0.5), got {self.target_ber}")

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigurationError("config file must hold a JSON object")
        unknown = sorted(set(doc) - _RUN_FIELDS)
        if unknown:
            raise ConfigurationError(f"unknown field {unknown[0]!r} in config file")
        for key in ("mode", "seed", "bits"):
            if key not in doc:
                raise ConfigurationError(f"field {key!r} is required in a config file")
        return cls(
            mode=doc["mode"],
            seed=doc["seed"],
            bits=doc["bits"],
            out=Path(doc["out"]) if doc.get("out") else None,
            preset=doc.get("preset"),
            link=doc.get("link"),
            channels=doc.get("channels"),
            profile=Path(path).parent / doc["profile"] if doc.get("profile") else None,
            target_ber=float(doc.get("target_ber", FEC_BER_THRESHOLD)),
            name=str(doc.get("name", "custom")),
        )

    def plan(self) -> WdmPlan:
        """Channel plan: the preset, or the inline block(s)."""
        if self.preset is not None:
            plan = preset(self.preset, self.target_ber)
        elif self.mode == "wdm":
            if not isinstance(self.channels, list):
                raise ConfigurationError("field 'channels' must be a list of link blocks")
            chans = []
            for i, c in enumerate(self.channels):
                try:
                    chans.append(LinkConfig.from_dict({"target_ber": self.target_ber, **c}))
                except ConfigurationError as exc:
                    raise ConfigurationError(f"channels[{i}]: {exc}") from None
                except TypeError:
                    raise ConfigurationError(f"channels[{i}] must be an object") from None
            plan = WdmPlan(tuple(chans), self.target_ber, self.name)
        else:
            if not isinstance(self.link, dict):
                raise ConfigurationError("field 'link' must be an object")
            plan = WdmPlan((LinkConfig.from_dict({"target_ber": self.target_ber, **self.link}),), self.target_ber, self.name)
        if self.profile is not None:
            chans = []
            for c in plan.channels:
                model = channel_with_profile(c.channel_model(), load_profile(self.profile))
                chans.append(replace(c, channel=model))
            plan = replace(plan, channels=tuple(chans))
        return plan


# ----------------------------------------------------------------- output


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps(doc) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats, LF endings."""
    return json.dumps(_clean(json.loads(json.dumps(doc, default=_jsonable))), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, doc) -> None:
    path.write_text(dumps(doc), encoding="utf-8", newline="\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_metadata(out: Path, argv) -> None:
    write_json(
        out / "metadata.json",
        {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "version": __version__,
            "kernel_backend": kernels.BACKEND,
            "argv": list(argv),
        },
    )


def write_link_csvs(out: Path, rep: LinkReport) -> None:
    snr_lin = rep.stats_linear.snr_db if rep.stats_linear is not None else [None] * len(rep.frequencies)
    write_csv(
        out / "snr_vs_freq.csv",
        ["k", "freq_hz", "snr_db", "snr_db_linear_only"],
        zip(range(1, len(rep.frequencies) + 1), rep.frequencies, rep.stats.snr_db, snr_lin),
    )
    write_csv(
        out / "ber_vs_rate.csv",
        ["round", "margin_db", "bits_per_frame", "rate_bps", "ber"],
        ([r["round"], r["margin_db"], r["bits_per_frame"], r["rate_bps"], r["ber"]] for r in rep.trace),
    )
    write_loading_csv(out / "loading.csv", rep.plan, rep.frequencies)
    rows = []
    for order in sorted(rep.constellation):
        tx, rx = rep.constellation[order]
        rows.extend([order, i, t.real, t.imag, r.real, r.imag] for i, (t, r) in enumerate(zip(tx, rx)))
    write_csv(out / "constellations.csv", ["order", "index", "tx_re", "tx_im", "rx_re", "rx_im"], rows)


def write_loading_csv(path: Path, plan: LoadingPlan, freqs) -> None:
    write_csv(
        path,
        ["k", "freq_hz", "bits", "energy"],
        zip(range(1, plan.n_subcarriers + 1), freqs, plan.bits.tolist(), plan.energy),
    )


# --------------------------------------------------------------- commands


def _out_dir(path) -> Path:
    if path is None:
        raise ConfigurationError("missing output directory (--out)")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _header(cfg: RunConfig) -> dict:
    return {"mode": cfg.mode, "preset": cfg.preset, "seed": cfg.seed, "bits": cfg.bits, "target_ber": cfg.target_ber}


def cmd_single(cfg: RunConfig, argv) -> int:
    plan = cfg.plan()
    if len(plan.channels) != 1:
        raise ConfigurationError(f"field 'preset': {cfg.preset} has {len(plan.channels)} channels; use the wdm command")
    out = _out_dir(cfg.out)
    rep = LinkSimulator(plan.channels[0], cfg.seed).run(cfg.bits)
    write_json(out / "report.json", {**_header(cfg), "link": rep.to_dict()})
    write_link_csvs(out, rep)
    write_metadata(out, argv)
    print(f"{rep.label}: {rep.rate_bps / 1e9:.2f} Gbps, BER {rep.ber:.4g} ({'converged' if rep.converged else 'not converged'})")
    return EXIT_OK


def cmd_wdm(cfg: RunConfig, argv, workers: int = 1) -> int:
    plan = cfg.plan()
    out = _out_dir(cfg.out)
    agg = run_wdm(plan, cfg.seed, cfg.bits, workers=workers)
    write_json(out / "report.json", {**_header(cfg), **agg.to_dict()})
    for c in agg.completed:
        sub = out / c.label
        sub.mkdir(exist_ok=True)
        write_link_csvs(sub, c.report)
    write_metadata(out, argv)
    for c in agg.channels:
        if c.ok:
            print(f"{c.label}: {c.report.rate_bps / 1e9:.2f} Gbps, BER {c.report.ber:.4g}")
        else:
            print(f"{c.label}: FAILED ({c.error.splitlines()[0]})", file=sys.stderr)
    eb = agg.effective_ber
    print(f"aggregate: {agg.aggregate_rate / 1e9:.2f} Gbps, effective BER {'n/a' if eb is None else f'{eb:.4g}'}")
    return EXIT_PARTIAL if agg.failed else EXIT_OK


def cmd_equalizer_bench(cfg: RunConfig, argv) -> int:
    plan = cfg.plan()
    out = _out_dir(cfg.out)
    res = compare_equalizers(plan.channels[0], cfg.seed, cfg.bits)
    write_json(out / "report.json", {**_header(cfg), "equalizer": res.to_dict()})
    write_metadata(out, argv)
    print(f"Volterra MSE {res.mse_volterra:.4g}, linear MSE {res.mse_linear:.4g}, gain {res.gain_db:.2f} dB")
    return EXIT_OK


def loading_from_profile(profile_path, ofdm: OfdmConfig, target_ber: float, margin_db: float = 0.0) -> LoadingPlan:
    """Hughes-Hartogs plan for an SNR profile interpolated onto the data subcarriers."""
    prof = load_profile(profile_path)
    if prof.kind != "snr":
        raise ConfigurationError("field 'profile': loading needs an SNR profile (freq_hz,snr_db)")
    f = ofdm.data_frequencies
    snr_db = np.interp(f, prof.freq_hz, prof.snr_db)
    return hughes_hartogs(10 ** (snr_db / 10), target_ber, margin_db=margin_db)


def cmd_loading(cfg: RunConfig, argv) -> int:
    if cfg.profile is None:
        raise ConfigurationError("missing SNR profile (--profile)")
    out = _out_dir(cfg.out)
    link = (preset(cfg.preset, cfg.target_ber) if cfg.preset else WdmPlan((LinkConfig.from_dict(cfg.link),))).channels[0]
    plan = loading_from_profile(cfg.profile, link.ofdm, cfg.target_ber, link.margin_db)
    rate = achievable_rate(plan, link.ofdm)
    write_loading_csv(out / "loading.csv", plan, link.ofdm.data_frequencies)
    write_json(
        out / "report.json",
        {
            **_header(cfg),
            "profile": str(cfg.profile),
            "bits_per_frame": plan.total_bits,
            "rate_bps": rate,
            "energy": float(plan.energy.sum()),
            "energy_budget": plan.energy_budget,
        },
    )
    write_metadata(out, argv)
    print(f"{plan.total_bits} bits/frame, {rate / 1e9:.2f} Gbps")
    return EXIT_OK


def apply_param(link: LinkConfig, param: str, value) -> LinkConfig:
    """Copy of ``link`` with one sweep parameter set."""
    if param == "margin_db":
        return replace(link, margin_db=float(value))
    if param == "noise_std":
        if value < 0:
            raise ConfigurationError("noise_std values must be non-negative")
        return replace(link, channel=replace(link.channel_model(), noise_std=float(value)))
    if param == "clip_level":
        return replace(link, ofdm=replace(link.ofdm, clip_level=float(value)))
    if param == "q_max":
        q = int(value)
        if q != value:
            raise ConfigurationError("q_max values must be integers")
        return replace(link, volterra=None if q == 0 else table1_volterra(q))
    raise ConfigurationError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")


def sweep(param: str, values, base: LinkConfig, seed: int = 0, n_bits: int = DEFAULT_BITS) -> list[dict]:
    """
    One single-burst run per value, all with the same seed.

    ``margin_db`` reloads Hughes-Hartogs from the base run's SNR estimate at
    each margin. The physical parameters keep the base run's loading fixed, so
    the rows show how the impairment alone moves the BER. Rows follow the
    order of ``values``.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    values = list(values)
    if not values:
        return []
    for v in values:
        apply_param(base, param, v)  # validate before any run
    base_sim = LinkSimulator(base, seed)
    base_sim.train()
    stats, _ = base_sim.probe()
    fixed = hughes_hartogs(stats, base.target_ber, margin_db=base.margin_db)
    rows = []
    for v in values:
        cfg = apply_param(base, param, v)
        if param == "margin_db":
            plan = hughes_hartogs(stats, base.target_ber, margin_db=float(v))
        else:
            plan = fixed
        rep = LinkSimulator(cfg, seed).run(n_bits, plan=plan, adapt=False)
        rows.append({"param": param, "value": v, "bits_per_frame": plan.total_bits, "rate_bps": rep.rate_bps, "ber": rep.ber})
    return rows


def cmd_sweep(cfg: RunConfig, param: str, values, argv) -> int:
    plan = cfg.plan()
    if len(plan.channels) != 1:
        raise ConfigurationError("field 'preset': sweeps need a single-channel configuration")
    out = _out_dir(cfg.out)
    rows = sweep(param, values, plan.channels[0], cfg.seed, cfg.bits)
    write_json(out / "report.json", {**_header(cfg), "param": param, "values": list(values), "rows": rows})
    write_csv(
        out / "ber_vs_rate.csv",
        ["param", "value", "bits_per_frame", "rate_bps", "ber"],
        ([r["param"], r["value"], r["bits_per_frame"], r["rate_bps"], r["ber"]] for r in rows),
    )
    write_metadata(out, argv)
    for r in rows:
        print(f"{param}={r['value']}: {r['rate_bps'] / 1e9:.2f} Gbps, BER {r['ber']:.4g}")
    return EXIT_OK


def cmd_aggregate(rates, bers) -> int:
    total, eff = aggregate(rates, bers)
    print(f"{total:.2f} Gbps, {eff:.4f}")
    return EXIT_OK


# ----------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _floats(text: str, name: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigurationError(f"{name} must be a comma-separated list of numbers") from None
    if any(not math.isfinite(v) for v in vals):
        raise ConfigurationError(f"{name} must be finite")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lifisim", description="LiFi DCO-OFDM link simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, need_source=True):
        if need_source:
            g = sp.add_mutually_exclusive_group(required=True)
            g.add_argument("--preset", choices=PRESETS)
            g.add_argument("--config", type=Path, help="RunConfig JSON file")
        sp.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED})")
        sp.add_argument("--bits", type=int, default=None, help=f"payload bits per burst (default {DEFAULT_BITS})")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--profile", type=Path, default=None, help="measured response or SNR profile CSV")
        sp.add_argument("--target-ber", type=float, default=None)

    common(sub.add_parser("run", help="single link (or the mode named in --config)"))
    w = sub.add_parser("wdm", help="multi-wavelength run")
    common(w)
    w.add_argument("--workers", type=int, default=1)
    s = sub.add_parser("sweep", help="one run per parameter value")
    common(s)
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated values (may be empty)")
    lo = sub.add_parser("loading", help="Hughes-Hartogs loading from an SNR profile")
    g = lo.add_mutually_exclusive_group()
    g.add_argument("--preset", choices=PRESETS)
    g.add_argument("--config", type=Path)
    common(lo, need_source=False)
    a = sub.add_parser("aggregate", help="total rate and effective BER")
    a.add_argument("--rates", required=True, help="Gbps, comma-separated")
    a.add_argument("--bers", required=True, help="comma-separated")
    return p


def _run_config(args, mode: str) -> RunConfig:
    if getattr(args, "config", None) is not None:
        cfg = RunConfig.from_json(args.config)
        if args.command != "run" and cfg.mode != mode:
            raise ConfigurationError(f"field 'mode' is {cfg.mode!r} but the {args.command} command needs {mode!r}")
        over = {}
        for key in ("seed", "bits", "out", "profile", "target_ber"):
            v = getattr(args, key)
            if v is not None:
                over[key] = v
        return replace(cfg, **over)
    return RunConfig(
        mode=mode,
        seed=DEFAULT_SEED if args.seed is None else args.seed,
        bits=DEFAULT_BITS if args.bits is None else args.bits,
        out=args.out,
        preset=getattr(args, "preset", None) or ("table1-905nm" if mode == "loading-only" else None),
        profile=args.profile,
        target_ber=FEC_BER_THRESHOLD if args.target_ber is None else args.target_ber,
    )


def run_cli(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command == "aggregate":
            return cmd_aggregate(_floats(args.rates, "--rates"), _floats(args.bers, "--bers"))
        if args.command == "run":
            cfg = _run_config(args, "single")
            if cfg.mode == "wdm":
                return cmd_wdm(cfg, argv)
            if cfg.mode == "equalizer-bench":
                return cmd_equalizer_bench(cfg, argv)
            if cfg.mode == "loading-only":
                return cmd_loading(cfg, argv)
            return cmd_single(cfg, argv)
        if args.command == "wdm":
            if args.workers < 1:
                raise ConfigurationError("--workers must be positive")
            return cmd_wdm(_run_config(args, "wdm"), argv, args.workers)
        if args.command == "sweep":
            values = _floats(args.values, "--values")
            return cmd_sweep(_run_config(args, "single"), args.param, values, argv)
        if args.command == "loading":
            return cmd_loading(_run_config(args, "loading-only"), argv)
    except ConfigurationError as exc:
        print(f"lifisim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LifiSimError as exc:
        print(f"lifisim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
