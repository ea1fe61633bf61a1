"""EEG recording data model, EEGR file I/O, montage selection and low-pass filtering.

An EEGR file is a single UTF-8 JSON header line followed by raw IEEE-754
float32 little-endian samples in channel-major order (all samples of
channel 0, then channel 1, ...). Values are in microvolts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import signal as sp_signal

from .errors import (
    CutoffAboveNyquist,
    MalformedHeader,
    MissingBaseline,
    MissingChannel,
    NonFiniteSample,
    SampleCountMismatch,
    ShapeMismatch,
)


class Region(str, Enum):
    FRONTAL = "Frontal"
    PARIETAL = "Parietal"
    OTHER = "Other"


class Condition(str, Enum):
    VR = "VR"
    DESKTOP = "Desktop"


class TaskKind(str, Enum):
    MEDIUM_TURN = "MediumTurn"
    SPEED_CHANGE = "SpeedChange"


class Phase(str, Enum):
    BASELINE = "Baseline"
    TEST = "Test"


_REGION_BY_NAME = {
    "F7": Region.FRONTAL, "F3": Region.FRONTAL, "Fz": Region.FRONTAL,
    "F4": Region.FRONTAL, "F8": Region.FRONTAL,
    "P3": Region.PARIETAL, "Pz": Region.PARIETAL, "P4": Region.PARIETAL,
    "PO7": Region.PARIETAL, "PO8": Region.PARIETAL,
    "T7": Region.OTHER, "Cz": Region.OTHER, "T8": Region.OTHER, "Oz": Region.OTHER,
}

#: Electrode order used everywhere features are reported.
CANONICAL_MONTAGE_NAMES = (
    "F7", "F3", "Fz", "F4", "F8",
    "T7", "Cz", "T8",
    "P3", "Pz", "P4", "PO7", "PO8", "Oz",
)


@dataclass(frozen=True)
class Channel:
    name: str
    region: Region

    @classmethod
    def from_name(cls, name: str) -> "Channel":
        """Build a channel with its region looked up from the canonical map;
        unknown electrodes land in Region.OTHER."""
        return cls(name=name, region=_REGION_BY_NAME.get(name, Region.OTHER))


def canonical_montage() -> list[Channel]:
    return [Channel.from_name(n) for n in CANONICAL_MONTAGE_NAMES]


def frontal_channels(channels: list[Channel]) -> list[Channel]:
    return [c for c in channels if c.region is Region.FRONTAL]


def parietal_channels(channels: list[Channel]) -> list[Channel]:
    return [c for c in channels if c.region is Region.PARIETAL]


@dataclass(frozen=True)
class Recording:
    """One subject/condition/phase multichannel EEG segment.

    ``samples`` has shape (n_channels, n_samples); the array is made
    read-only on construction so recordings are safe to share.
    """

    subject_id: str
    condition: Condition
    task: TaskKind
    phase: Phase
    order: int
    fs: float
    channels: list[Channel] = field(repr=False)
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2 or samples.shape[0] != len(self.channels):
            raise ShapeMismatch(
                f"sample matrix {samples.shape} does not match "
                f"{len(self.channels)} channels"
            )
        if not np.all(np.isfinite(samples)):
            raise NonFiniteSample(
                f"recording {self.subject_id}/{self.condition.value}/"
                f"{self.phase.value} contains non-finite samples"
            )
        if self.fs <= 0:
            raise MalformedHeader(f"sample rate must be positive, got {self.fs}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def channel_index(self, name: str) -> int:
        try:
            return self.channel_names().index(name)
        except ValueError:
            raise MissingChannel(name) from None

    def with_samples(self, samples: np.ndarray, channels: list[Channel] | None = None) -> "Recording":
        return Recording(
            subject_id=self.subject_id,
            condition=self.condition,
            task=self.task,
            phase=self.phase,
            order=self.order,
            fs=self.fs,
            channels=self.channels if channels is None else channels,
            samples=samples,
        )


_HEADER_FIELDS = (
    "format", "subject_id", "condition", "task", "phase",
    "order", "fs", "n_channels", "n_samples", "channels",
)


def write_recording(rec: Recording, path: str | Path) -> None:
    """Write one recording to an EEGR file (header line + float32 LE payload)."""
    header = {
        "format": "EEGR1",
        "subject_id": rec.subject_id,
        "condition": rec.condition.value,
        "task": rec.task.value,
        "phase": rec.phase.value,
        "order": rec.order,
        "fs": rec.fs,
        "n_channels": rec.n_channels,
        "n_samples": rec.n_samples,
        "channels": rec.channel_names(),
    }
    payload = np.ascontiguousarray(rec.samples, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def load_recording(path: str | Path) -> Recording:
    """Load an EEGR file.

    Raises MalformedHeader, SampleCountMismatch or NonFiniteSample when the
    file violates the format contract.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise MalformedHeader(f"{path}: no header line terminator")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"{path}: unparseable header: {exc}") from exc
    missing = [k for k in _HEADER_FIELDS if k not in header]
    if missing:
        raise MalformedHeader(f"{path}: header missing fields {missing}")
    if header["format"] != "EEGR1":
        raise MalformedHeader(f"{path}: unknown format {header['format']!r}")
    n_channels = int(header["n_channels"])
    n_samples = int(header["n_samples"])
    names = list(header["channels"])
    if len(names) != n_channels:
        raise MalformedHeader(
            f"{path}: channel list length {len(names)} != n_channels {n_channels}"
        )
    payload = raw[nl + 1:]
    expected = n_channels * n_samples * 4
    if len(payload) != expected:
        raise SampleCountMismatch(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    samples = flat.reshape(n_channels, n_samples).astype(np.float32)
    if not np.all(np.isfinite(samples)):
        raise NonFiniteSample(f"{path}: payload contains non-finite samples")
    return Recording(
        subject_id=str(header["subject_id"]),
        condition=Condition(header["condition"]),
        task=TaskKind(header["task"]),
        phase=Phase(header["phase"]),
        order=int(header["order"]),
        fs=float(header["fs"]),
        channels=[Channel.from_name(n) for n in names],
        samples=samples,
    )


def select_montage(rec: Recording, montage: list[Channel]) -> Recording:
    """Reorder/filter channels to the given montage order.

    Raises MissingChannel naming the first absent electrode.
    """
    names = rec.channel_names()
    rows = []
    for ch in montage:
        if ch.name not in names:
            raise MissingChannel(ch.name)
        rows.append(names.index(ch.name))
    return rec.with_samples(rec.samples[rows, :], channels=list(montage))


_FILTER_ORDER = 4
# reflect padding of 3x the filter order soaks up the filtfilt startup
# transient without assuming long signals
_PAD_LEN = 3 * _FILTER_ORDER


def lowpass_filter(rec: Recording, cutoff_hz: float) -> Recording:
    """Zero-phase 4th-order Butterworth low-pass, applied forward then backward.

    Forward-backward application squares the magnitude response and cancels
    the phase response, which keeps downstream phase-locking estimates
    unbiased.
    """
    nyq = rec.fs / 2.0
    if not 0 < cutoff_hz < nyq:
        raise CutoffAboveNyquist(
            f"cutoff {cutoff_hz} Hz outside (0, {nyq}) for fs={rec.fs}"
        )
    b, a = sp_signal.butter(_FILTER_ORDER, cutoff_hz, btype="low", fs=rec.fs)
    filtered = sp_signal.filtfilt(
        b, a, np.asarray(rec.samples, dtype=np.float64),
        axis=1, padtype="even", padlen=_PAD_LEN,
    )
    return rec.with_samples(filtered)


@dataclass
class RecordingSet:
    """Collection of recordings indexed by (subject, condition, phase)."""

    recordings: list[Recording]

    def __post_init__(self):
        self._index: dict[tuple[str, Condition, Phase], Recording] = {}
        for rec in self.recordings:
            key = (rec.subject_id, rec.condition, rec.phase)
            if key in self._index:
                raise ShapeMismatch(f"duplicate recording for {key}")
            self._index[key] = rec

    def get(self, subject_id: str, condition: Condition, phase: Phase) -> Recording:
        return self._index[(subject_id, condition, phase)]

    def test_keys(self) -> list[tuple[str, Condition]]:
        """(subject, condition) pairs that have a Test recording, in sorted order."""
        keys = [(s, c) for (s, c, p) in self._index if p is Phase.TEST]
        return sorted(keys, key=lambda sc: (sc[0], sc[1].value))

    def validate(self, task_duration_s: float | None = None) -> None:
        """Check baseline pairing and, when given, the test-phase duration.

        Raises MissingBaseline naming the (subject, condition) without a
        matching baseline, or ShapeMismatch when a test recording does not
        span the configured task duration.
        """
        for (subject, condition) in self.test_keys():
            if (subject, condition, Phase.BASELINE) not in self._index:
                raise MissingBaseline(
                    f"no baseline recording for subject {subject!r}, "
                    f"condition {condition.value}"
                )
            if task_duration_s is not None:
                rec = self.get(subject, condition, Phase.TEST)
                expected = int(round(task_duration_s * rec.fs))
                if rec.n_samples != expected:
                    raise ShapeMismatch(
                        f"test recording {subject}/{condition.value} has "
                        f"{rec.n_samples} samples, expected {expected} "
                        f"({task_duration_s} s at {rec.fs} Hz)"
                    )


def load_recording_set(directory: str | Path) -> RecordingSet:
    """Load every *.eegr file under a directory (sorted by filename)."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.eegr"))
    if not paths:
        raise MalformedHeader(f"no .eegr files in {directory}")
    return RecordingSet([load_recording(p) for p in paths])
