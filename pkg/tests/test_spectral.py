import math

import numpy as np
import pytest

from eegworkload.errors import (
    DegenerateSignal,
    DoubleNormalization,
    EmptyBand,
    ShapeMismatch,
    SignalTooShort,
)
from eegworkload.spectral import (
    BandDef,
    Psd,
    SpectralFeatureVector,
    band_log_power,
    baseline_normalize_spectral,
    compute_psd,
    default_bands,
    extract_spectral,
)

from conftest import make_recording

THETA, ALPHA, BETA = default_bands()


def brute_force_band_log_power(x, fs, band):
    """Independent oracle: direct DFT (explicit exponential sums) of the raw
    signal, one-sided density normalization, summed over band bins, logged."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    freqs = np.arange(n // 2 + 1) * (fs / n)
    total = 0.0
    tgrid = np.arange(n)
    for k in np.nonzero((freqs >= band.lo_hz) & (freqs < band.hi_hz))[0]:
        coeff = np.sum(x * np.exp(-2j * np.pi * k * tgrid / n))
        density = (np.abs(coeff) ** 2) / (fs * n)
        if 0 < k < n / 2:
            density *= 2.0
        total += density
    return math.log(total)


class TestComputePsd:
    def test_sinusoid_peak_at_10hz(self):
        fs = 128.0
        t = np.arange(int(300 * fs)) / fs
        psd = compute_psd(np.sin(2 * np.pi * 10.0 * t), fs)
        assert psd.freqs[np.argmax(psd.values)] == pytest.approx(10.0, abs=0.25)

    def test_parseval_white_noise(self):
        # sum(psd) * df must recover the variance, seed-averaged
        fs = 128.0
        ratios = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = rng.normal(0.0, 1.0, int(300 * fs))
            psd = compute_psd(x, fs)
            df = psd.freqs[1] - psd.freqs[0]
            ratios.append(float(np.sum(psd.values) * df) / float(np.var(x)))
        assert all(0.8 <= r <= 1.2 for r in ratios)

    def test_zero_signal_zero_psd(self):
        psd = compute_psd(np.zeros(int(128 * 10)), 128.0)
        np.testing.assert_array_equal(psd.values, np.zeros_like(psd.values))

    def test_too_short_signal(self):
        with pytest.raises(SignalTooShort):
            compute_psd(np.ones(int(128 * 4)), 128.0)

    def test_periodogram_mode_matches_direct_dft(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=1024)
        fs = 128.0
        psd = compute_psd(x, fs, mode="periodogram")
        got = band_log_power(psd, ALPHA)
        want = brute_force_band_log_power(x, fs, ALPHA)
        assert got == pytest.approx(want, rel=1e-9)


class TestBandLogPower:
    def test_closed_form_example(self):
        psd = Psd(freqs=np.array([4.0, 9.0, 11.0, 20.0]),
                  values=np.array([0.0, math.e, math.e, 0.0]))
        assert band_log_power(psd, ALPHA) == pytest.approx(1.0 + math.log(2.0), abs=1e-12)

    def test_alpha_dominates_for_10hz_tone(self):
        # oracle: sinusoid power lands in the alpha band; window leakage into
        # the neighbours is orders of magnitude down
        fs = 128.0
        t = np.arange(int(300 * fs)) / fs
        psd = compute_psd(np.sin(2 * np.pi * 10.0 * t), fs)
        alpha = band_log_power(psd, ALPHA)
        assert alpha - band_log_power(psd, THETA) >= 3.0
        assert alpha - band_log_power(psd, BETA) >= 3.0

    def test_zero_signal_degenerate(self):
        psd = compute_psd(np.zeros(int(128 * 10)), 128.0)
        with pytest.raises(DegenerateSignal):
            band_log_power(psd, ALPHA)

    def test_empty_band(self):
        psd = Psd(freqs=np.array([1.0, 2.0]), values=np.array([1.0, 1.0]))
        with pytest.raises(EmptyBand):
            band_log_power(psd, ALPHA)

    def test_half_open_interval(self):
        # value at hi_hz itself is excluded, value at lo_hz included
        psd = Psd(freqs=np.array([8.0, 13.0]), values=np.array([2.0, 5.0]))
        assert band_log_power(psd, ALPHA) == pytest.approx(math.log(2.0))

    def test_amplitude_scaling_law(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=int(128 * 60))
        fs = 128.0
        for c in (0.5, 2.0, 17.0):
            base = band_log_power(compute_psd(x, fs), ALPHA)
            scaled = band_log_power(compute_psd(c * x, fs), ALPHA)
            assert scaled - base == pytest.approx(2.0 * math.log(c), abs=1e-9)


class TestExtractSpectral:
    def test_canonical_gives_42(self, rng):
        rec = make_recording(rng.normal(size=(14, int(128 * 20))))
        vec = extract_spectral(rec)
        assert len(vec) == 42
        assert vec.entry_names()[:3] == ["Theta F7", "Alpha F7", "Beta F7"]
        assert not vec.normalized

    def test_channel_permutation_invariance(self, rng):
        from eegworkload.recordings import canonical_montage, select_montage

        samples = rng.normal(size=(14, int(128 * 20)))
        rec = make_recording(samples)
        perm = rng.permutation(14)
        shuffled = make_recording(
            samples[perm], channels=[canonical_montage()[i] for i in perm],
        )
        v1 = extract_spectral(select_montage(rec, canonical_montage()))
        v2 = extract_spectral(select_montage(shuffled, canonical_montage()))
        np.testing.assert_array_equal(v1.values, v2.values)

    def test_tone_channel_beats_noise_channel(self, rng):
        fs = 128.0
        n = int(128 * 60)
        t = np.arange(n) / fs
        samples = rng.normal(0, 1.0, size=(14, n))
        pz = 9  # montage order: Pz
        samples[pz] = samples[pz] + 5.0 * np.sin(2 * np.pi * 10.0 * t)
        vec = extract_spectral(make_recording(samples, fs=fs))
        assert vec.value("Pz", "Alpha") > vec.value("Fz", "Alpha")

    def test_error_tagged_with_channel(self, rng):
        samples = rng.normal(size=(14, int(128 * 10)))
        samples[3] = 0.0  # F4 all-zero -> log of zero band power
        with pytest.raises(DegenerateSignal, match="F4"):
            extract_spectral(make_recording(samples))


class TestBaselineNormalize:
    def _vec(self, values, normalized=False):
        return SpectralFeatureVector(
            channel_names=["F7", "Fz"], band_names=["Theta", "Alpha", "Beta"],
            values=np.asarray(values, dtype=float), normalized=normalized,
        )

    def test_self_subtraction_zero(self):
        v = self._vec(np.arange(6.0))
        out = baseline_normalize_spectral(v, v)
        np.testing.assert_array_equal(out.values, np.zeros(6))
        assert out.normalized

    def test_arithmetic(self):
        t = self._vec([2.5] * 6)
        b = self._vec([1.0] * 6)
        out = baseline_normalize_spectral(t, b)
        np.testing.assert_allclose(out.values, 1.5)

    def test_double_normalization_rejected(self):
        v = self._vec(np.arange(6.0))
        n = baseline_normalize_spectral(v, v)
        with pytest.raises(DoubleNormalization):
            baseline_normalize_spectral(n, v)

    def test_shape_mismatch(self):
        a = self._vec(np.arange(6.0))
        b = SpectralFeatureVector(
            channel_names=["F7", "F3"], band_names=["Theta", "Alpha", "Beta"],
            values=np.arange(6.0),
        )
        with pytest.raises(ShapeMismatch):
            baseline_normalize_spectral(a, b)

    def test_scaled_pair_invariance(self, rng):
        # scaling test and baseline signals together leaves normalized
        # features unchanged (log power differences cancel the scale)
        fs = 128.0
        x_t = rng.normal(size=(1, int(fs * 20)))
        x_b = rng.normal(size=(1, int(fs * 20)))
        from eegworkload.recordings import Phase

        def feats(c):
            vt = extract_spectral(make_recording(c * x_t, fs=fs))
            vb = extract_spectral(make_recording(c * x_b, fs=fs, phase=Phase.BASELINE))
            return baseline_normalize_spectral(vt, vb).values

        np.testing.assert_allclose(feats(1.0), feats(3.7), atol=1e-9)


class TestSerialization:
    def test_feat1_round_trip_preserves_order(self, rng):
        rec = make_recording(rng.normal(size=(14, int(128 * 20))))
        vec = extract_spectral(rec)
        doc = vec.to_json_dict()
        assert doc["schema"] == "FEAT1"
        assert doc["kind"] == "spectral"
        assert len(doc["entries"]) == 42
        back = SpectralFeatureVector.from_json_dict(doc)
        assert back.entry_names() == vec.entry_names()
        np.testing.assert_array_equal(back.values, vec.values)
