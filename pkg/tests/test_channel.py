import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import freqz

from lifisim.channel import (
    REFERENCE_NAMES,
    ChannelModel,
    MeasuredProfile,
    apply_channel,
    channel_with_profile,
    fir_from_profile,
    fir_response,
    load_profile,
    memory_polynomial,
    one_pole_fir,
    reference_channel,
    save_profile,
)
from lifisim.dsp import OfdmConfig, TimeWaveform
from lifisim.errors import ConfigurationError
from lifisim.tx import pilot_frames, transmit

from oracles import loop_memory_polynomial

FS = OfdmConfig().sample_rate


class TestApply:
    def test_identity(self, rng):
        x = rng.standard_normal(500)
        np.testing.assert_array_equal(apply_channel(x, ChannelModel()), x)

    def test_echo_impulse(self):
        x = np.zeros(6)
        x[0] = 1
        y = apply_channel(x, ChannelModel(echo_delay=3, echo_gain=0.5))
        np.testing.assert_allclose(y, [1, 0, 0, 0.5, 0, 0])

    def test_constant_through_cubic(self):
        y = apply_channel(np.ones(10), ChannelModel(nonlinearity=((1.0,), (0.0,), (-0.1,))))
        np.testing.assert_allclose(y, 0.9)

    def test_length_preserved_and_finite(self, rng):
        x = rng.standard_normal(1000) * 0.3
        y = apply_channel(x, reference_channel("nonlinear-echo", FS))
        assert y.shape == x.shape and np.all(np.isfinite(y))

    def test_waveform_in_waveform_out(self, rng):
        w = TimeWaveform(rng.standard_normal(100), FS)
        out = apply_channel(w, reference_channel("lowpass-1g4", FS))
        assert isinstance(out, TimeWaveform) and out.origin == "channel-out"

    def test_rate_mismatch(self, rng):
        w = TimeWaveform(rng.standard_normal(100), FS / 2)
        with pytest.raises(ConfigurationError):
            apply_channel(w, reference_channel("lowpass-1g4", FS))

    @given(st.integers(0, 2**32 - 1))
    def test_memory_polynomial_matches_loops(self, seed):
        r = np.random.default_rng(seed)
        x = r.uniform(-1, 1, 40)
        c = r.uniform(-0.5, 0.5, (3, 3))
        np.testing.assert_allclose(memory_polynomial(x, c), loop_memory_polynomial(x, c), atol=1e-12)

    @pytest.mark.parametrize("first", [True, False])
    def test_ordering(self, rng, first):
        x = rng.standard_normal(300) * 0.3
        c = ((1.0, 0.1), (0.2, 0.0), (-0.3, 0.0))
        fir = (0.5, 0.3, 0.2)
        m = ChannelModel(linear_fir=fir, nonlinearity=c, nonlinearity_first=first)
        from scipy.signal import lfilter

        if first:
            ref = lfilter(fir, [1.0], loop_memory_polynomial(x, c))
        else:
            ref = loop_memory_polynomial(lfilter(fir, [1.0], x), c)
        np.testing.assert_allclose(apply_channel(x, m), ref, atol=1e-12)

    def test_seed_changes_only_noise(self, rng):
        x = rng.standard_normal(5000) * 0.3
        m = reference_channel("nonlinear-echo", FS)
        a = apply_channel(x, m.with_seed(1))
        b = apply_channel(x, m.with_seed(2))
        clean = apply_channel(x, ChannelModel(**{**m.__dict__, "noise_std": 0.0}))
        np.testing.assert_array_equal(apply_channel(x, m.with_seed(1)), a)
        assert not np.array_equal(a, b)
        # both deviate from the noiseless output by noise of the configured size only
        for y in (a, b):
            assert np.std(y - clean) == pytest.approx(m.noise_std, rel=0.05)

    def test_noise_std(self):
        x = np.zeros(1_000_000)
        y = apply_channel(x, ChannelModel(noise_std=0.03, seed=5))
        assert np.std(y) == pytest.approx(0.03, rel=0.01)

    @pytest.mark.parametrize(
        "kw", [dict(linear_fir=()), dict(echo_gain=1.0), dict(echo_delay=-1), dict(noise_std=-0.1), dict(nonlinearity=((np.nan,),))]
    )
    def test_invalid_models(self, kw):
        with pytest.raises(ConfigurationError):
            ChannelModel(**kw)


class TestReferenceChannels:
    def test_ideal_is_identity(self):
        m = reference_channel("ideal", FS)
        assert m.linear_fir == (1.0,) and m.nonlinearity is None and m.noise_std == 0 and m.echo_gain == 0

    def test_unknown(self):
        with pytest.raises(ConfigurationError):
            reference_channel("nope")

    @pytest.mark.parametrize("name,f3", [("lowpass-1g4", 1.4e9), ("nonlinear-echo", 1.4e9), ("longrange-apd", 1.0e9)])
    def test_three_db_point(self, name, f3):
        h = reference_channel(name, FS).fir
        w, H = freqz(h, worN=1 << 16, fs=FS)
        mag = 20 * np.log10(np.abs(H))
        f_cross = w[np.argmax(mag <= -3.0)]
        assert f_cross == pytest.approx(f3, rel=0.05)

    def test_longrange_is_noisier(self):
        assert reference_channel("longrange-apd").noise_std > reference_channel("lowpass-1g4").noise_std

    def test_versioned_and_deterministic(self):
        assert reference_channel("nonlinear-echo", FS) == reference_channel("nonlinear-echo", FS)
        assert reference_channel("nonlinear-echo").version

    def test_intermodulation_above_noise(self):
        m = reference_channel("nonlinear-echo", FS)
        N = 1 << 16
        t = np.arange(N) / FS
        k1, k2 = round(300e6 / FS * N), round(400e6 / FS * N)
        x = 0.4 * np.cos(2 * np.pi * k1 / N * np.arange(N)) + 0.4 * np.cos(2 * np.pi * k2 / N * np.arange(N))
        assert len(t) == N
        Y = np.abs(np.fft.rfft(apply_channel(x, m) * np.hanning(N))) ** 2
        floor = np.median(Y)
        for k in (2 * k1 - k2, 2 * k2 - k1):
            assert 10 * np.log10(Y[k - 2 : k + 3].max() / floor) >= 20

    @pytest.mark.parametrize("name", REFERENCE_NAMES)
    def test_energy_bound(self, name, rng):
        m = reference_channel(name, FS)
        quiet = ChannelModel(**{**m.__dict__, "noise_std": 0.0})
        X, _ = pilot_frames(rng, OfdmConfig(), 4)
        _, wav = transmit(X, OfdmConfig())
        x = wav.samples / np.max(np.abs(wav.samples))
        y = apply_channel(x, quiet)
        bound = m.energy_gain_bound(1.0)
        assert np.isfinite(bound)
        assert np.sum(y**2) <= bound * np.sum(x**2)

    def test_energy_bound_values(self):
        # concrete numbers for the committed models at unit peak
        assert reference_channel("ideal", FS).energy_gain_bound(1.0) == 1.0
        assert reference_channel("lowpass-1g4", FS).energy_gain_bound(1.0) == pytest.approx(1.0)
        assert reference_channel("nonlinear-echo", FS).energy_gain_bound(1.0) == pytest.approx(
            (1.25**2) * (1.0 + 0.15 + 0.05 + (0.45 + 0.15) * 1.25 + (0.25 + 0.08) * 1.25**2) ** 2
        )

    def test_one_pole_validates(self):
        with pytest.raises(ConfigurationError):
            one_pole_fir(20e9, FS)


class TestProfiles:
    def test_csv_round_trip(self, tmp_path):
        p = MeasuredProfile(np.array([1e8, 2e8, 3e8, 4e8]), snr_db=np.array([25.0, 24.0, 20.5, 18.0]))
        save_profile(tmp_path / "s.csv", p)
        q = load_profile(tmp_path / "s.csv")
        np.testing.assert_array_equal(q.freq_hz, p.freq_hz)
        np.testing.assert_array_equal(q.snr_db, p.snr_db)
        r = MeasuredProfile(p.freq_hz, response=np.array([1, 0.9j, 0.5 - 0.1j, 0.2]))
        save_profile(tmp_path / "r.csv", r)
        np.testing.assert_array_equal(load_profile(tmp_path / "r.csv").response, r.response)

    def test_flat_profile_gives_impulse(self):
        f = np.linspace(0, FS / 2 * 0.9, 50)
        taps, res = fir_from_profile(MeasuredProfile(f, response=np.ones(50)), 31, FS)
        expected = np.zeros(31)
        expected[0] = 1
        np.testing.assert_allclose(taps, expected, atol=1e-6)
        assert res < 1e-6

    def test_single_pole_fit(self):
        f3 = 1.4e9
        f = np.linspace(0, 2.67e9, 200)
        H = 1 / (1 + 1j * f / f3)
        taps, res = fir_from_profile(MeasuredProfile(f, response=H), 255, FS)
        err = np.abs(20 * np.log10(np.abs(fir_response(taps, f, FS))) - 20 * np.log10(np.abs(H)))
        assert err.max() < 0.5
        assert res < 0.05

    def test_snr_profile_magnitude(self):
        f = np.linspace(1e8, 2.6e9, 40)
        snr = 30 - 8 * f / 2.6e9
        taps, _ = fir_from_profile(MeasuredProfile(f, snr_db=snr), 101, FS)
        got = 20 * np.log10(np.abs(fir_response(taps, f, FS)))
        # noise is flat, so SNR tracks |H|^2 and 20 log|H| = snr - max
        want = snr - snr.max()
        assert np.max(np.abs(got - want)) < 0.5

    @pytest.mark.parametrize(
        "freqs,vals",
        [
            ([1.0, 2.0], [0.0, 0.0]),
            ([1.0, 3.0, 2.0, 4.0], [0.0] * 4),
            ([1.0, 2.0, 3.0, 4.0], [0.0, np.nan, 0.0, 0.0]),
            ([], []),
        ],
    )
    def test_invalid_profiles(self, freqs, vals):
        with pytest.raises(ConfigurationError):
            MeasuredProfile(np.array(freqs), snr_db=np.array(vals))

    def test_empty_file(self, tmp_path):
        (tmp_path / "e.csv").write_text("")
        with pytest.raises(ConfigurationError):
            load_profile(tmp_path / "e.csv")

    def test_bad_header(self, tmp_path):
        (tmp_path / "b.csv").write_text("f,x\n1,2\n")
        with pytest.raises(ConfigurationError):
            load_profile(tmp_path / "b.csv")

    def test_even_taps_rejected(self):
        f = np.linspace(0, 1e9, 10)
        with pytest.raises(ConfigurationError):
            fir_from_profile(MeasuredProfile(f, response=np.ones(10)), 10, FS)

    def test_channel_with_profile(self):
        f = np.linspace(0, 2.6e9, 30)
        m = channel_with_profile(reference_channel("lowpass-1g4", FS), MeasuredProfile(f, response=np.ones(30)), 31)
        assert len(m.linear_fir) == 31 and m.name.endswith("+profile")
