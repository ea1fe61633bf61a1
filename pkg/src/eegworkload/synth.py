"""Synthetic EEG + NASA-TLX generator with planted effects.

Every channel is pink noise plus one oscillator per band. Oscillator
phases follow a slow Brownian walk so uncoupled channels decohere;
a coupling effect makes the parietal channel reuse the frontal channel's
phase walk plus blockwise von Mises jitter of class-dependent
concentration. Blockwise (rather than per-sample) jitter keeps the
oscillator's band power independent of the coupling strength, so a
connectivity-only effect leaves spectral features uninformative.

Power effects scale oscillator amplitudes in the test phase of the
high-workload class only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import signal as sp_signal

from .errors import InputError
from .labeling import ALL_SUBSCALES, LabelValue, TlxRecord
from .recordings import (
    Channel,
    Condition,
    Phase,
    Recording,
    RecordingSet,
    Region,
    TaskKind,
    canonical_montage,
    write_recording,
)
from .spectral import BandDef, default_bands

_OSC_AMPLITUDE = 4.0          # uV; keeps oscillator band power >> pink noise
_PHASE_WALK_SIGMA = 0.15      # rad per sample; decoheres independent channels
_JITTER_BLOCK_S = 2.0         # seconds per von Mises jitter draw
_JITTER_MAX_DEV_HZ = 1.0      # frequency excursion cap while ramping between draws


@dataclass(frozen=True)
class PowerEffect:
    channel: str
    band: str
    amplitude_ratio: float  # high-class test-phase amplitude multiplier

    def __post_init__(self):
        if self.amplitude_ratio <= 0:
            raise InputError("amplitude ratio must be positive")


@dataclass(frozen=True)
class CouplingEffect:
    frontal: str
    parietal: str
    band: str
    kappa_high: float
    kappa_low: float

    def __post_init__(self):
        if self.kappa_high < 0 or self.kappa_low < 0:
            raise InputError("von Mises concentrations must be nonnegative")


@dataclass
class EffectSpec:
    power_effects: list[PowerEffect] = field(default_factory=list)
    coupling_effects: list[CouplingEffect] = field(default_factory=list)
    noise_amplitude: float = 1.0
    fs: float = 128.0
    duration_s: float = 300.0
    baseline_duration_s: float = 60.0
    seed: int = 0
    bands: tuple[BandDef, ...] = field(default_factory=default_bands)
    osc_amplitude: float = _OSC_AMPLITUDE

    def __post_init__(self):
        if self.duration_s < 60.0:
            raise InputError("test duration must be at least 60 s")
        if self.baseline_duration_s <= 0 or self.fs <= 0:
            raise InputError("baseline duration and fs must be positive")
        band_names = {b.name for b in self.bands}
        montage_names = {c.name for c in canonical_montage()}
        region = {c.name: c.region for c in canonical_montage()}
        seen_parietal = set()
        for eff in self.coupling_effects:
            if eff.band not in band_names:
                raise InputError(f"unknown band {eff.band!r} in coupling effect")
            if region.get(eff.frontal) is not Region.FRONTAL:
                raise InputError(f"{eff.frontal!r} is not a frontal channel")
            if region.get(eff.parietal) is not Region.PARIETAL:
                raise InputError(f"{eff.parietal!r} is not a parietal channel")
            key = (eff.parietal, eff.band)
            if key in seen_parietal:
                raise InputError(f"channel {eff.parietal} coupled twice in {eff.band}")
            seen_parietal.add(key)
        for eff in self.power_effects:
            if eff.band not in band_names:
                raise InputError(f"unknown band {eff.band!r} in power effect")
            if eff.channel not in montage_names:
                raise InputError(f"unknown channel {eff.channel!r} in power effect")


@dataclass
class TlxParams:
    """Generative parameters for the questionnaire scores.

    Two constraints shape the defaults. The class shift sits inside the
    within-subject variance, so it caps the intercept shrinkage the mixed
    model can apply; whatever intercept spread survives shrinkage leaks
    into the residuals and can flip marginal labels. And the [0, 100] clip
    erodes the shift for subjects whose intercept pushes scores out of
    range. A large shift over small variances satisfies both, keeping the
    default median-split labels aligned with the planted classes. The
    larger reference variances (e.g. 258.82 / 50) remain valid inputs for
    recovery tests that do not need aligned labels.
    """

    sigma_g2: float = 25.0        # between-subject intercept variance
    sigma2: float = 9.0           # residual variance
    beta_condition: float = 4.0   # VR minus Desktop
    beta_task: float = 0.14       # SpeedChange minus MediumTurn
    workload_shift: float = 50.0  # high-class minus low-class latent workload
    subscale_noise_sd: float = 3.0
    misalignment_rate: float = 0.0  # fraction of samples whose TLX shift flips


@dataclass
class SynthDataset:
    recordings: RecordingSet
    tlx: list[TlxRecord]
    truth: list[dict]  # {subject_id, condition, class}
    effect_spec: EffectSpec
    tlx_params: TlxParams
    n_subjects: int

    def truth_map(self) -> dict[tuple[str, str], LabelValue]:
        return {(t["subject_id"], t["condition"]): LabelValue(t["class"]) for t in self.truth}

    def manifest(self) -> dict:
        return {
            "schema": "GT1",
            "seed": self.effect_spec.seed,
            "n_subjects": self.n_subjects,
            "fs": self.effect_spec.fs,
            "duration_s": self.effect_spec.duration_s,
            "baseline_duration_s": self.effect_spec.baseline_duration_s,
            "samples": self.truth,
            "power_effects": [asdict(e) for e in self.effect_spec.power_effects],
            "coupling_effects": [asdict(e) for e in self.effect_spec.coupling_effects],
            "tlx_params": asdict(self.tlx_params),
        }


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


def _pink_noise(rng: np.random.Generator, n: int, fs: float) -> np.ndarray:
    """1/f-power noise, unit standard deviation."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    shaped = np.fft.irfft(spec * scale, n)
    return shaped / shaped.std()


_PHASE_KEY, _JITTER_KEY, _NOISE_KEY = 11, 13, 17


def _phase_walk(rng: np.random.Generator, n: int, fs: float, freq_hz: float) -> np.ndarray:
    t = np.arange(n) / fs
    start = rng.uniform(-np.pi, np.pi)
    drift = np.cumsum(rng.normal(0.0, _PHASE_WALK_SIGMA, n))
    return 2.0 * np.pi * freq_hz * t + start + drift


def _block_jitter(rng: np.random.Generator, n: int, fs: float, kappa: float) -> np.ndarray:
    """Blockwise von Mises phase offsets with short linear ramps.

    Holding the offset constant within a block keeps the jittered
    oscillator's power inside its band regardless of the concentration, so
    a coupling effect cannot leak into spectral features. Abrupt jumps
    would splatter energy out of band by an amount that depends on kappa;
    the ramps cap the instantaneous frequency excursion instead.
    """
    block = max(1, int(round(_JITTER_BLOCK_S * fs)))
    n_blocks = -(-n // block)
    draws = rng.vonmises(0.0, kappa, n_blocks) if kappa > 0 else rng.uniform(-np.pi, np.pi, n_blocks)
    theta = np.repeat(draws, block)[:n]
    cum = draws[0]
    for b in range(1, n_blocks):
        start = b * block
        if start >= n:
            break
        # shortest-arc step over a smoothstep ramp: C1 transitions keep the
        # spectral skirts of the jitter far below the pink-noise floor in
        # the neighbouring bands, for every concentration
        step = np.angle(np.exp(1j * (draws[b] - draws[b - 1])))
        trans = max(2, int(round(abs(step) / (2.0 * np.pi * _JITTER_MAX_DEV_HZ) * fs)))
        end = min(start + trans, n)
        u = np.arange(end - start) / trans
        theta[start:end] = cum + step * 0.5 * (1.0 - np.cos(np.pi * u))
        theta[end:min((b + 1) * block, n)] = cum + step
        cum += step
    return theta


def gen_recording(
    spec: EffectSpec,
    cls: LabelValue,
    phase: Phase,
    subject_index: int,
    subject_id: str,
    condition: Condition,
    task: TaskKind,
    order: int,
) -> Recording:
    """One synthetic recording; deterministic given (seed, subject, condition, phase)."""
    fs = spec.fs
    duration = spec.duration_s if phase is Phase.TEST else spec.baseline_duration_s
    n = int(round(duration * fs))
    cond_idx = 0 if condition is Condition.DESKTOP else 1
    phase_idx = 0 if phase is Phase.BASELINE else 1
    montage = canonical_montage()
    ch_index = {c.name: i for i, c in enumerate(montage)}
    band_index = {b.name: j for j, b in enumerate(spec.bands)}

    coupling = {
        (eff.parietal, eff.band): eff for eff in spec.coupling_effects
    }
    power = {
        (eff.channel, eff.band): eff.amplitude_ratio for eff in spec.power_effects
    }

    # phase walks per (channel, band); coupled parietals reuse the frontal walk
    walks: dict[tuple[str, str], np.ndarray] = {}
    for ch in montage:
        for band in spec.bands:
            rng = _rng(spec.seed, subject_index, cond_idx, phase_idx,
                       ch_index[ch.name], band_index[band.name], _PHASE_KEY)
            walks[(ch.name, band.name)] = _phase_walk(rng, n, fs, band.median_center_hz)

    # each oscillator is band-limited and renormalized so its in-band power
    # is a^2/2 exactly, independent of phase jitter; otherwise the jitter
    # concentration would modulate how much of the line's tails leave the
    # band and leak the coupling class into spectral features
    filters = {
        band.name: sp_signal.butter(4, [band.lo_hz, band.hi_hz], btype="bandpass", fs=fs)
        for band in spec.bands
    }
    samples = np.empty((len(montage), n))
    for i, ch in enumerate(montage):
        rng_noise = _rng(spec.seed, subject_index, cond_idx, phase_idx,
                         ch_index[ch.name], 99, _NOISE_KEY)
        sig = spec.noise_amplitude * _pink_noise(rng_noise, n, fs)
        for band in spec.bands:
            key = (ch.name, band.name)
            amp = spec.osc_amplitude
            if key in power and phase is Phase.TEST and cls is LabelValue.HIGH:
                amp *= power[key]
            if key in coupling:
                eff = coupling[key]
                if phase is Phase.TEST and cls is LabelValue.HIGH:
                    kappa = eff.kappa_high
                else:
                    kappa = eff.kappa_low
                rng_j = _rng(spec.seed, subject_index, cond_idx, phase_idx,
                             ch_index[ch.name], band_index[band.name], _JITTER_KEY)
                theta = walks[(eff.frontal, band.name)] + _block_jitter(rng_j, n, fs, kappa)
            else:
                theta = walks[key]
            b, a = filters[band.name]
            osc = sp_signal.filtfilt(b, a, np.cos(theta))
            sig = sig + osc * (amp / np.sqrt(2.0)) / osc.std()
        samples[i] = sig
    return Recording(
        subject_id=subject_id,
        condition=condition,
        task=task,
        phase=phase,
        order=order,
        fs=fs,
        channels=montage,
        samples=samples.astype(np.float32),
    )


def gen_dataset(
    n_subjects: int,
    spec: EffectSpec,
    tlx_params: TlxParams | None = None,
) -> SynthDataset:
    """Subjects x {Desktop, VR} x {baseline, test} with TLX scores.

    Each subject carries one high- and one low-workload condition (so the
    merged design stays balanced), counterbalanced exposure order, and
    alternating condition-task pairing.
    """
    if n_subjects < 4:
        raise InputError(f"need at least 4 subjects, got {n_subjects}")
    tlx_params = tlx_params or TlxParams()
    recordings: list[Recording] = []
    tlx: list[TlxRecord] = []
    truth: list[dict] = []
    for s in range(n_subjects):
        subject_id = f"s{s + 1:03d}"
        rng_subj = _rng(spec.seed, 7, s)
        u = rng_subj.normal(0.0, np.sqrt(tlx_params.sigma_g2))
        vr_is_high = bool(rng_subj.integers(0, 2))
        vr_first = s % 2 == 0
        desktop_task = TaskKind.MEDIUM_TURN if s % 2 == 0 else TaskKind.SPEED_CHANGE
        for condition in (Condition.DESKTOP, Condition.VR):
            is_vr = condition is Condition.VR
            cls = LabelValue.HIGH if (is_vr == vr_is_high) else LabelValue.LOW
            task = desktop_task if not is_vr else (
                TaskKind.SPEED_CHANGE if desktop_task is TaskKind.MEDIUM_TURN
                else TaskKind.MEDIUM_TURN
            )
            order = 1 if (is_vr == vr_first) else 2
            for phase in (Phase.BASELINE, Phase.TEST):
                recordings.append(gen_recording(
                    spec, cls, phase, s, subject_id, condition, task, order,
                ))
            shift = tlx_params.workload_shift / 2.0
            shift = shift if cls is LabelValue.HIGH else -shift
            rng_tlx = _rng(spec.seed, 23, s, 0 if not is_vr else 1)
            if tlx_params.misalignment_rate > 0 and rng_tlx.uniform() < tlx_params.misalignment_rate:
                shift = -shift
            latent = (
                50.0 + shift + u
                + tlx_params.beta_condition * (1.0 if is_vr else 0.0)
                + tlx_params.beta_task * (1.0 if task is TaskKind.SPEED_CHANGE else 0.0)
                + rng_tlx.normal(0.0, np.sqrt(tlx_params.sigma2))
            )
            subscales = {
                sub: float(np.clip(latent + rng_tlx.normal(0.0, tlx_params.subscale_noise_sd), 0.0, 100.0))
                for sub in ALL_SUBSCALES
            }
            tlx.append(TlxRecord(
                subject_id=subject_id, condition=condition, task=task,
                order=order, subscales=subscales,
            ))
            truth.append({
                "subject_id": subject_id,
                "condition": condition.value,
                "task": task.value,
                "order": order,
                "class": cls.value,
            })
    return SynthDataset(
        recordings=RecordingSet(recordings),
        tlx=tlx,
        truth=truth,
        effect_spec=spec,
        tlx_params=tlx_params,
        n_subjects=n_subjects,
    )


def connectivity_effect(kappa_high: float = 4.0, kappa_low: float = 0.0) -> list[CouplingEffect]:
    """Three alpha-band fronto-parietal couplings; the standard planted effect."""
    return [
        CouplingEffect("F3", "P3", "Alpha", kappa_high, kappa_low),
        CouplingEffect("Fz", "Pz", "Alpha", kappa_high, kappa_low),
        CouplingEffect("F4", "P4", "Alpha", kappa_high, kappa_low),
    ]


def power_effect(ratio: float = 1.6) -> list[PowerEffect]:
    """Spectral amplitude effects across bands and regions."""
    return [
        PowerEffect("Pz", "Alpha", ratio),
        PowerEffect("P4", "Theta", ratio),
        PowerEffect("F7", "Alpha", ratio),
        PowerEffect("Oz", "Theta", ratio),
    ]


def effects_for(kind: str, **kwargs) -> EffectSpec:
    """EffectSpec presets: 'connectivity', 'power', 'both' or 'none'."""
    if kind == "connectivity":
        return EffectSpec(coupling_effects=connectivity_effect(), **kwargs)
    if kind == "power":
        return EffectSpec(power_effects=power_effect(), **kwargs)
    if kind == "both":
        return EffectSpec(
            coupling_effects=connectivity_effect(), power_effects=power_effect(), **kwargs
        )
    if kind == "none":
        return EffectSpec(**kwargs)
    raise InputError(f"unknown effect kind {kind!r}")


def write_dataset(dataset: SynthDataset, directory: str | Path) -> list[Path]:
    """EEGR files + tlx.csv + GT1 manifest; returns the written paths."""
    from .labeling import write_tlx_csv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for rec in dataset.recordings.recordings:
        name = f"{rec.subject_id}_{rec.condition.value}_{rec.phase.value}.eegr"
        path = directory / name
        write_recording(rec, path)
        written.append(path)
    tlx_path = directory / "tlx.csv"
    write_tlx_csv(dataset.tlx, tlx_path)
    written.append(tlx_path)
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(dataset.manifest(), sort_keys=True, indent=2) + "\n")
    written.append(manifest_path)
    return written
