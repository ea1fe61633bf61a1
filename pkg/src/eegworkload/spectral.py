"""Band log-power spectral features with baseline normalization.

The per-band feature is the natural log of the summed power spectral
density over the band's frequency bins; task-phase features are
normalized by subtracting the baseline-phase value of the same entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal

from .errors import (
    DegenerateSignal,
    DoubleNormalization,
    EmptyBand,
    ShapeMismatch,
    SignalTooShort,
)
from .recordings import Recording

_WELCH_SEGMENT_S = 4.0
_MIN_SIGNAL_S = 8.0


@dataclass(frozen=True)
class BandDef:
    """Half-open frequency band [lo_hz, hi_hz)."""

    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not 0 < self.lo_hz < self.hi_hz:
            raise ShapeMismatch(f"invalid band {self.name}: [{self.lo_hz}, {self.hi_hz})")

    def contains(self, freqs: np.ndarray) -> np.ndarray:
        return (freqs >= self.lo_hz) & (freqs < self.hi_hz)

    def center_grid(self, n_freqs: int) -> np.ndarray:
        """Midpoints of n equal sub-intervals; stays inside the half-open band."""
        edges = np.linspace(self.lo_hz, self.hi_hz, n_freqs + 1)
        return (edges[:-1] + edges[1:]) / 2.0

    @property
    def median_center_hz(self) -> float:
        return (self.lo_hz + self.hi_hz) / 2.0


def default_bands() -> tuple[BandDef, BandDef, BandDef]:
    """Conventional clinical theta/alpha/beta bands, all below the 45 Hz cutoff."""
    return (
        BandDef("Theta", 4.0, 8.0),
        BandDef("Alpha", 8.0, 13.0),
        BandDef("Beta", 13.0, 30.0),
    )


@dataclass(frozen=True)
class Psd:
    """One-sided power spectral density on an ascending frequency grid."""

    freqs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.freqs.shape != self.values.shape:
            raise ShapeMismatch("freqs and values must have equal length")


def compute_psd(signal: np.ndarray, fs: float, mode: str = "welch") -> Psd:
    """Estimate the PSD of a single channel.

    mode="welch" uses Hann-windowed 4 s segments with 50% overlap and
    averages the periodograms. mode="periodogram" is a single full-length
    rectangular window without detrending, used by equivalence tests
    against a direct DFT.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("compute_psd expects a single channel")
    if not np.all(np.isfinite(x)):
        raise ShapeMismatch("signal contains non-finite values")
    if mode == "welch":
        if x.size < _MIN_SIGNAL_S * fs:
            raise SignalTooShort(
                f"need at least {_MIN_SIGNAL_S} s of samples, got {x.size / fs:.2f} s"
            )
        nperseg = int(round(_WELCH_SEGMENT_S * fs))
        freqs, values = sp_signal.welch(
            x, fs=fs, window="hann", nperseg=nperseg,
            noverlap=nperseg // 2, detrend="constant", scaling="density",
        )
    elif mode == "periodogram":
        freqs, values = sp_signal.welch(
            x, fs=fs, window="boxcar", nperseg=x.size,
            noverlap=0, detrend=False, scaling="density",
        )
    else:
        raise ValueError(f"unknown PSD mode {mode!r}")
    return Psd(freqs=freqs, values=values)


def band_log_power(psd: Psd, band: BandDef) -> float:
    """log of the PSD sum over the band's frequency bins.

    Raises EmptyBand when no grid frequency falls inside the band and
    DegenerateSignal when the band sum is exactly zero.
    """
    mask = band.contains(psd.freqs)
    if not mask.any():
        raise EmptyBand(f"no grid frequency in [{band.lo_hz}, {band.hi_hz})")
    total = float(np.sum(psd.values[mask]))
    if total == 0.0:
        raise DegenerateSignal(f"band {band.name} power is exactly zero")
    return math.log(total)


@dataclass
class SpectralFeatureVector:
    """Ordered (channel, band) -> log-power entries; 42 for the canonical montage."""

    channel_names: list[str]
    band_names: list[str]
    values: np.ndarray  # shape (n_channels * n_bands,), channel-major
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = len(self.channel_names) * len(self.band_names)
        if self.values.shape != (expected,):
            raise ShapeMismatch(
                f"expected {expected} entries, got {self.values.shape}"
            )

    def __len__(self) -> int:
        return self.values.size

    def entry_names(self) -> list[str]:
        return [
            f"{band} {ch}"
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
            "kind": "spectral",
            "normalized": self.normalized,
            "entries": entries,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SpectralFeatureVector":
        if doc.get("schema") != "FEAT1" or doc.get("kind") != "spectral":
            raise ShapeMismatch("not a FEAT1 spectral document")
        channels: list[str] = []
        bands: list[str] = []
        for e in doc["entries"]:
            if e["channel"] not in channels:
                channels.append(e["channel"])
            if e["band"] not in bands:
                bands.append(e["band"])
        values = np.empty(len(channels) * len(bands))
        for idx, e in enumerate(doc["entries"]):
            expected_ch = channels[idx // len(bands)]
            expected_band = bands[idx % len(bands)]
            if e["channel"] != expected_ch or e["band"] != expected_band:
                raise ShapeMismatch("entries are not in channel-major band order")
            values[idx] = e["value"]
        return cls(
            channel_names=channels,
            band_names=bands,
            values=values,
            normalized=bool(doc["normalized"]),
        )


def extract_spectral(
    rec: Recording,
    bands: tuple[BandDef, ...] = None,
    psd_mode: str = "welch",
) -> SpectralFeatureVector:
    """Band log-power for every (channel, band) over the full trial.

    One spectral estimate per trial; no sub-epoching. The recording should
    already be montage-selected and low-pass filtered.
    """
    if bands is None:
        bands = default_bands()
    values = np.empty(rec.n_channels * len(bands))
    k = 0
    for i, ch in enumerate(rec.channels):
        try:
            psd = compute_psd(rec.samples[i], rec.fs, mode=psd_mode)
            for band in bands:
                values[k] = band_log_power(psd, band)
                k += 1
        except (SignalTooShort, EmptyBand, DegenerateSignal) as exc:
            raise type(exc)(f"channel {ch.name}: {exc}") from exc
    return SpectralFeatureVector(
        channel_names=rec.channel_names(),
        band_names=[b.name for b in bands],
        values=values,
        normalized=False,
    )


def baseline_normalize_spectral(
    test: SpectralFeatureVector, baseline: SpectralFeatureVector
) -> SpectralFeatureVector:
    """Entrywise test - baseline; both inputs must be unnormalized."""
    if test.normalized or baseline.normalized:
        raise DoubleNormalization("one of the inputs is already normalized")
    if (
        test.channel_names != baseline.channel_names
        or test.band_names != baseline.band_names
    ):
        raise ShapeMismatch("test and baseline vectors use different entries")
    return SpectralFeatureVector(
        channel_names=list(test.channel_names),
        band_names=list(test.band_names),
        values=test.values - baseline.values,
        normalized=True,
    )
