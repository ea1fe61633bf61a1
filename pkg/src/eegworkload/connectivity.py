"""Fronto-parietal phase-locking features via complex Morlet wavelets.

The phase-locking value between two channels is the magnitude of the
time-averaged unit phasor of their phase difference, computed at a grid
of wavelet center frequencies per band and averaged across the grid.
Samples within half a wavelet support of either trial edge are excluded
from the average so convolution edge artifacts cannot inflate locking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .errors import (
    DegenerateSignal,
    DoubleNormalization,
    FrequencyMismatch,
    FrequencyAboveNyquist,
    LengthMismatch,
    MontageNotCanonical,
    ShapeMismatch,
    SignalShorterThanWavelet,
)
from .recordings import Recording, Region, frontal_channels, parietal_channels
from .spectral import BandDef, default_bands

DEFAULT_N_CYCLES = 7.0
DEFAULT_N_FREQS = 5
_TRUNCATION_SIGMAS = 5.0


@dataclass(frozen=True)
class PhaseSeries:
    """Per-sample phase of one channel at one wavelet center frequency.

    ``n_edge`` samples at each end are contaminated by the convolution edge
    and are skipped by PLV averaging.
    """

    channel: str
    freq_hz: float
    phases: np.ndarray
    n_edge: int

    @property
    def valid_slice(self) -> slice:
        return slice(self.n_edge, self.phases.size - self.n_edge)


def morlet_wavelet(fs: float, freq_hz: float, n_cycles: float) -> np.ndarray:
    """Complex Morlet wavelet sampled at fs, truncated at +-5 sigma_t."""
    sigma_t = n_cycles / (2.0 * np.pi * freq_hz)
    half = int(np.ceil(_TRUNCATION_SIGMAS * sigma_t * fs))
    t = np.arange(-half, half + 1) / fs
    return np.exp(2j * np.pi * freq_hz * t) * np.exp(-(t ** 2) / (2.0 * sigma_t ** 2))


def _morlet_coeffs(signals: np.ndarray, fs: float, freq_hz: float, n_cycles: float) -> tuple[np.ndarray, int]:
    """Complex wavelet coefficients for a (n_channels, n_samples) batch.

    Returns (coeffs, n_edge) where coeffs has the input shape and n_edge is
    half the wavelet support in samples.
    """
    if freq_hz >= fs / 2.0:
        raise FrequencyAboveNyquist(f"{freq_hz} Hz >= Nyquist {fs / 2.0} Hz")
    if n_cycles < 3:
        raise ShapeMismatch(f"n_cycles must be >= 3, got {n_cycles}")
    w = morlet_wavelet(fs, freq_hz, n_cycles)
    n = signals.shape[-1]
    if n <= w.size:
        raise SignalShorterThanWavelet(
            f"signal of {n} samples is not longer than the wavelet support "
            f"({w.size} samples at {freq_hz} Hz)"
        )
    nfft = sp_fft.next_fast_len(n + w.size - 1)
    spec = sp_fft.fft(signals, nfft, axis=-1)
    conv = sp_fft.ifft(spec * sp_fft.fft(w, nfft), axis=-1)
    start = (w.size - 1) // 2
    return conv[..., start:start + n], w.size // 2


def morlet_phase(
    signal: np.ndarray, fs: float, freq_hz: float,
    n_cycles: float = DEFAULT_N_CYCLES, channel: str = "",
) -> PhaseSeries:
    """Instantaneous phase of one channel at one center frequency.

    Raises DegenerateSignal when any retained coefficient has zero
    magnitude (phase undefined).
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("morlet_phase expects a single channel")
    coeffs, n_edge = _morlet_coeffs(x[np.newaxis, :], fs, freq_hz, n_cycles)
    coeffs = coeffs[0]
    if np.any(np.abs(coeffs[n_edge:coeffs.size - n_edge]) == 0.0):
        raise DegenerateSignal(
            f"zero-magnitude wavelet coefficients at {freq_hz} Hz; phase undefined"
        )
    phases = np.angle(coeffs)
    # np.angle returns [-pi, pi]; fold the single excluded endpoint
    phases = np.where(phases == -np.pi, np.pi, phases)
    return PhaseSeries(channel=channel, freq_hz=freq_hz, phases=phases, n_edge=n_edge)


def plv_pair(pk: PhaseSeries, pl: PhaseSeries) -> float:
    """Phase-locking value: |mean over retained samples of e^{j(phi_k - phi_l)}|."""
    if pk.phases.size != pl.phases.size:
        raise LengthMismatch(
            f"{pk.phases.size} vs {pl.phases.size} samples"
        )
    if pk.freq_hz != pl.freq_hz:
        raise FrequencyMismatch(f"{pk.freq_hz} Hz vs {pl.freq_hz} Hz")
    if pk.n_edge != pl.n_edge:
        raise LengthMismatch(
            f"edge exclusion differs: {pk.n_edge} vs {pl.n_edge} samples"
        )
    sl = pk.valid_slice
    return float(np.abs(np.mean(np.exp(1j * (pk.phases[sl] - pl.phases[sl])))))


def band_plv(
    x: np.ndarray, y: np.ndarray, fs: float, band: BandDef,
    n_freqs: int = DEFAULT_N_FREQS, n_cycles: float = DEFAULT_N_CYCLES,
) -> float:
    """PLV averaged over evenly spaced center frequencies spanning the band."""
    if n_freqs < 1:
        raise ShapeMismatch("n_freqs must be >= 1")
    plvs = []
    for f in band.center_grid(n_freqs):
        pk = morlet_phase(x, fs, f, n_cycles=n_cycles)
        pl = morlet_phase(y, fs, f, n_cycles=n_cycles)
        plvs.append(plv_pair(pk, pl))
    return float(np.mean(plvs))


@dataclass
class PlvMatrix:
    """5x5 fronto-parietal PLV grid for one band (frontal rows, parietal columns)."""

    band: str
    frontal_names: list[str]
    parietal_names: list[str]
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.frontal_names), len(self.parietal_names)):
            raise ShapeMismatch(
                f"PLV matrix shape {self.values.shape} does not match channel lists"
            )
        if not self.normalized:
            if np.any(self.values < -1e-9) or np.any(self.values > 1.0 + 1e-9):
                raise ShapeMismatch("unnormalized PLV values must lie in [0, 1]")

    def to_csv(self) -> str:
        lines = ["," + ",".join(self.parietal_names)]
        for name, row in zip(self.frontal_names, self.values):
            lines.append(name + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class PlvFeatureVector:
    """Ordered (channel, band) -> averaged PLV; 30 for the canonical montage."""

    channel_names: list[str]
    band_names: list[str]
    values: np.ndarray  # channel-major
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = len(self.channel_names) * len(self.band_names)
        if self.values.shape != (expected,):
            raise ShapeMismatch(f"expected {expected} entries, got {self.values.shape}")

    def __len__(self) -> int:
        return self.values.size

    def entry_names(self) -> list[str]:
        return [
            f"{band} {ch} (PLV)"
            for ch in self.channel_names
            for band in self.band_names
        ]

    def value(self, channel: str, band: str) -> float:
        i = self.channel_names.index(channel)
        j = self.band_names.index(band)
        return float(self.values[i * len(self.band_names) + j])

    def to_json_dict(self) -> dict:
        entries = []
        k = 0
        for ch in self.channel_names:
            for band in self.band_names:
                entries.append({"channel": ch, "band": band, "value": float(self.values[k])})
                k += 1
        return {
            "schema": "FEAT1",
            "kind": "plv",
            "normalized": self.normalized,
            "entries": entries,
        }


def _check_canonical_regions(rec: Recording) -> tuple[list[int], list[int]]:
    frontal = [i for i, c in enumerate(rec.channels) if c.region is Region.FRONTAL]
    parietal = [i for i, c in enumerate(rec.channels) if c.region is Region.PARIETAL]
    if len(frontal) != 5 or len(parietal) != 5:
        raise MontageNotCanonical(
            f"need exactly 5 frontal and 5 parietal channels, got "
            f"{len(frontal)} frontal / {len(parietal)} parietal"
        )
    return frontal, parietal


def _pair_matrices(
    rec: Recording, bands: tuple[BandDef, ...], n_freqs: int, n_cycles: float,
) -> dict[str, PlvMatrix]:
    """Per-band 5x5 PLV matrices, computed from one batched wavelet pass."""
    frontal_idx, parietal_idx = _check_canonical_regions(rec)
    names = rec.channel_names()
    used = frontal_idx + parietal_idx
    signals = np.asarray(rec.samples[used], dtype=np.float64)
    matrices: dict[str, PlvMatrix] = {}
    for band in bands:
        per_freq = []
        for f in band.center_grid(n_freqs):
            coeffs, n_edge = _morlet_coeffs(signals, rec.fs, f, n_cycles)
            core = coeffs[:, n_edge:coeffs.shape[1] - n_edge]
            mags = np.abs(core)
            if np.any(mags == 0.0):
                raise DegenerateSignal(
                    f"zero-magnitude wavelet coefficients at {f} Hz; phase undefined"
                )
            unit = core / mags
            fr = unit[:5]
            pa = unit[5:]
            # |mean_t e^{j(phi_f - phi_p)}| for every (frontal, parietal) pair
            per_freq.append(np.abs(fr @ pa.conj().T) / fr.shape[1])
        matrices[band.name] = PlvMatrix(
            band=band.name,
            frontal_names=[names[i] for i in frontal_idx],
            parietal_names=[names[i] for i in parietal_idx],
            values=np.mean(per_freq, axis=0),
        )
    return matrices


def _average_endpoints(
    matrices: dict[str, PlvMatrix], band_names: list[str], normalized: bool,
) -> PlvFeatureVector:
    """Row means for frontal endpoints, column means for parietal endpoints."""
    first = matrices[band_names[0]]
    channel_names = list(first.frontal_names) + list(first.parietal_names)
    values = np.empty(len(channel_names) * len(band_names))
    k = 0
    for ci in range(len(channel_names)):
        for band in band_names:
            m = matrices[band]
            if ci < len(first.frontal_names):
                values[k] = m.values[ci, :].mean()
            else:
                values[k] = m.values[:, ci - len(first.frontal_names)].mean()
            k += 1
    return PlvFeatureVector(
        channel_names=channel_names,
        band_names=list(band_names),
        values=values,
        normalized=normalized,
    )


def fronto_parietal_plv(
    rec: Recording,
    bands: tuple[BandDef, ...] = None,
    n_freqs: int = DEFAULT_N_FREQS,
    n_cycles: float = DEFAULT_N_CYCLES,
) -> tuple[dict[str, PlvMatrix], PlvFeatureVector]:
    """Per-band fronto-parietal PLV matrices plus the per-channel averages.

    Each frontal channel's feature is the mean of its row (its 5 parietal
    partners); each parietal channel's feature is the mean of its column.
    """
    if bands is None:
        bands = default_bands()
    matrices = _pair_matrices(rec, bands, n_freqs, n_cycles)
    vector = _average_endpoints(matrices, [b.name for b in bands], normalized=False)
    return matrices, vector


def baseline_normalize_plv(
    test: dict[str, PlvMatrix], baseline: dict[str, PlvMatrix],
) -> PlvFeatureVector:
    """Per-pair baseline subtraction, then the fronto-parietal averaging.

    Subtraction happens before averaging so baseline structure is removed
    pair by pair rather than mixed across pairs.
    """
    if set(test) != set(baseline):
        raise ShapeMismatch(f"band sets differ: {sorted(test)} vs {sorted(baseline)}")
    corrected: dict[str, PlvMatrix] = {}
    for band_name in test:
        t, b = test[band_name], baseline[band_name]
        if t.normalized or b.normalized:
            raise DoubleNormalization("PLV matrices are already normalized")
        if (
            t.frontal_names != b.frontal_names
            or t.parietal_names != b.parietal_names
        ):
            raise ShapeMismatch(f"channel lists differ in band {band_name}")
        corrected[band_name] = PlvMatrix(
            band=band_name,
            frontal_names=list(t.frontal_names),
            parietal_names=list(t.parietal_names),
            values=t.values - b.values,
            normalized=True,
        )
    return _average_endpoints(corrected, list(test), normalized=True)
