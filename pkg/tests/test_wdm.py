import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import lifisim.wdm as wdm
from lifisim.dsp import OfdmConfig
from lifisim.errors import ConfigurationError
from lifisim.link import LinkConfig, LinkSimulator
from lifisim.wdm import (
    TABLE2_BERS,
    TABLE2_RATES_GBPS,
    TABLE3_BERS,
    TABLE3_RATES_GBPS,
    WdmPlan,
    aggregate,
    channel_seed,
    preset,
    run_wdm,
)

from oracles import rate_weighted

N_BITS = 20_000


def small(label, channel="lowpass-1g4", **kw):
    return LinkConfig(ofdm=OfdmConfig(fft_size=128, cp_length=4, bandwidth=1.0e9), channel=channel, label=label, **kw)


def small_plan(labels=("a", "b", "c")):
    return WdmPlan(tuple(small(l) for l in labels), name="small")


def channel_dicts(report):
    return {c["label"]: c for c in report.to_dict()["channels"]}


class TestAggregate:
    def test_table2_total(self):
        total, _ = aggregate(TABLE2_RATES_GBPS, TABLE2_BERS)
        assert total == pytest.approx(105.36, abs=1e-9)

    def test_table2_effective(self):
        _, eff = aggregate(TABLE2_RATES_GBPS, TABLE2_BERS)
        assert abs(eff - 0.0148) <= 1e-4

    def test_table3(self):
        total, eff = aggregate(TABLE3_RATES_GBPS, TABLE3_BERS)
        assert total == pytest.approx(4.84, abs=1e-9)
        assert abs(eff - 0.0032) <= 1e-4

    @given(st.lists(st.tuples(st.floats(1e-3, 1e3), st.floats(0, 0.5)), min_size=1, max_size=16))
    def test_matches_oracle_and_bounds(self, rows):
        rates, bers = zip(*rows)
        total, eff = aggregate(rates, bers)
        t_ref, e_ref = rate_weighted(rates, bers)
        assert total == pytest.approx(t_ref, rel=1e-12)
        assert eff == pytest.approx(e_ref, rel=1e-9, abs=1e-15)
        assert min(bers) - 1e-12 <= eff <= max(bers) + 1e-12

    @given(st.lists(st.tuples(st.floats(1e-3, 1e3), st.floats(0, 0.5)), min_size=2, max_size=12), st.data())
    def test_concatenation(self, rows, data):
        cut = data.draw(st.integers(1, len(rows) - 1))
        a, b = rows[:cut], rows[cut:]
        ta, ea = aggregate(*zip(*a))
        tb, eb = aggregate(*zip(*b))
        t, e = aggregate(*zip(*rows))
        assert t == pytest.approx(ta + tb, rel=1e-12)
        assert e == pytest.approx((ta * ea + tb * eb) / (ta + tb), rel=1e-9, abs=1e-15)

    @pytest.mark.parametrize("rates,bers", [([], []), ([1.0, 2.0], [0.1]), ([1.0, 0.0], [0.1, 0.1])])
    def test_invalid(self, rates, bers):
        with pytest.raises(ConfigurationError):
            aggregate(rates, bers)


class TestPresets:
    def test_table1(self):
        (c,) = preset("table1-905nm").channels
        o = c.ofdm
        assert (o.fft_size, o.cp_length, o.rolloff, o.bandwidth, o.clip_level) == (1024, 20, 0.1, 2.67e9, 3.2)
        assert c.volterra.q_max == 5

    def test_table2(self):
        chans = preset("table2-ten-channel").channels
        assert len(chans) == 10
        by = {c.label: c for c in chans}
        assert by["450nm"].volterra is None
        assert by["405nm"].volterra.q_max == 5
        for row, c in zip(wdm.TABLE2_ROWS, chans):
            label, vpp, bias, bw, kappa, order = row
            assert c.label == label
            assert (c.scaling.vpp_mv, c.scaling.bias_ma) == (vpp, bias)
            assert c.ofdm.bandwidth == bw * 1e9 and c.ofdm.clip_level == kappa
            assert (c.ofdm.fft_size, c.ofdm.cp_length, c.ofdm.rolloff) == (1024, 20, 0.1)
            assert (c.volterra.q_max if c.volterra else 0) == order

    def test_table3(self):
        chans = preset("table3-500m").channels
        assert [c.ofdm.bandwidth for c in chans] == [1.33e9, 1.14e9]
        assert [c.scaling.vpp_mv for c in chans] == [700, 450]
        assert all(c.volterra is None and c.channel == "longrange-apd" for c in chans)

    def test_unknown(self):
        with pytest.raises(ConfigurationError):
            preset("table4")


class TestPlan:
    def test_unique_labels(self):
        with pytest.raises(ConfigurationError):
            WdmPlan((small("a"), small("a")))

    @pytest.mark.parametrize("n", [0, 17])
    def test_channel_count(self, n):
        with pytest.raises(ConfigurationError):
            WdmPlan(tuple(small(str(i)) for i in range(n)))

    def test_seed_depends_on_master_and_label_only(self):
        assert channel_seed(1, "a") == channel_seed(1, "a")
        assert len({channel_seed(1, "a"), channel_seed(2, "a"), channel_seed(1, "b")}) == 3


class TestRun:
    def test_single_channel_equals_direct_run(self):
        rep = run_wdm(small_plan(("a",)), seed=5, n_bits=N_BITS)
        direct = LinkSimulator(small("a"), channel_seed(5, "a")).run(N_BITS)
        (c,) = rep.channels
        assert c.report.to_dict() == direct.to_dict()
        assert rep.aggregate_rate == direct.rate_bps
        assert rep.effective_ber == pytest.approx(direct.ber, rel=1e-12)

    def test_order_and_subset_invariance(self):
        full = channel_dicts(run_wdm(small_plan(), seed=3, n_bits=N_BITS))
        perm = channel_dicts(run_wdm(small_plan().reordered([2, 0, 1]), seed=3, n_bits=N_BITS))
        alone = channel_dicts(run_wdm(small_plan(("b",)), seed=3, n_bits=N_BITS))
        assert full == perm
        assert alone["b"] == full["b"]

    def test_two_identical_channels_add(self):
        rep = run_wdm(small_plan(("x", "y")), seed=0, n_bits=N_BITS)
        r = [c.report.rate_bps for c in rep.channels]
        assert rep.aggregate_rate == r[0] + r[1]
        # same configuration, different noise seeds: each carries about the same rate
        assert r[0] == pytest.approx(r[1], rel=0.03)

    def test_deterministic_json(self):
        a = run_wdm(small_plan(), seed=9, n_bits=N_BITS).to_dict()
        b = run_wdm(small_plan(), seed=9, n_bits=N_BITS).to_dict()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_parallel_matches_serial(self):
        a = run_wdm(small_plan(), seed=4, n_bits=N_BITS).to_dict()
        b = run_wdm(small_plan(), seed=4, n_bits=N_BITS, workers=3).to_dict()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_failure_is_isolated(self, monkeypatch):
        real = LinkSimulator.run

        def flaky(self, *a, **kw):
            if self.config.label == "b":
                raise FloatingPointError("injected")
            return real(self, *a, **kw)

        monkeypatch.setattr(wdm.LinkSimulator, "run", flaky)
        rep = run_wdm(small_plan(), seed=1, n_bits=N_BITS)
        assert [c.label for c in rep.failed] == ["b"]
        assert "injected" in rep.failed[0].error
        assert rep.aggregate_rate == sum(c.report.rate_bps for c in rep.completed)
        agg = rep.to_dict()["aggregate"]
        assert agg["n_completed"] == 2 and agg["n_failed"] == 1

    def test_effective_ber_is_rate_weighted(self):
        rep = run_wdm(small_plan(), seed=2, n_bits=N_BITS)
        rates = [c.report.rate_bps for c in rep.channels]
        bers = [c.report.ber for c in rep.channels]
        assert rep.effective_ber == pytest.approx(rate_weighted(rates, bers)[1], rel=1e-12)
        assert np.isfinite(rep.aggregate_rate)
