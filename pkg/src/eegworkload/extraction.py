"""Per-sample feature assembly: montage, filtering, spectral + PLV features,
baseline normalization, and the dataset-level FEAT1 file."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .connectivity import (
    DEFAULT_N_CYCLES,
    DEFAULT_N_FREQS,
    baseline_normalize_plv,
    fronto_parietal_plv,
)
from .errors import InputError
from .recordings import (
    Condition,
    Phase,
    RecordingSet,
    canonical_montage,
    lowpass_filter,
    select_montage,
)
from .selection import FeatureMatrix
from .spectral import (
    BandDef,
    baseline_normalize_spectral,
    default_bands,
    extract_spectral,
)


@dataclass
class ExtractionConfig:
    bands: tuple[BandDef, ...] = None
    cutoff_hz: float = 45.0
    n_cycles: float = DEFAULT_N_CYCLES
    n_freqs: int = DEFAULT_N_FREQS
    spectral_only: bool = False
    task_duration_s: float | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.bands is None:
            self.bands = default_bands()


@dataclass
class FeatureSet:
    """Feature matrix plus per-sample metadata; serializes to a FEAT1 dataset file."""

    matrix: FeatureMatrix
    samples: list[dict]  # {subject_id, condition, task, order}
    normalized: bool = True

    def to_json_dict(self) -> dict:
        return {
            "schema": "FEAT1",
            "kind": "dataset",
            "normalized": self.normalized,
            "feature_names": list(self.matrix.names),
            "feature_kinds": list(self.matrix.kinds),
            "samples": [
                {**meta, "values": [float(v) for v in row]}
                for meta, row in zip(self.samples, self.matrix.X)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FeatureSet":
        if doc.get("schema") != "FEAT1" or doc.get("kind") != "dataset":
            raise InputError("not a FEAT1 dataset document")
        names = list(doc["feature_names"])
        kinds = list(doc["feature_kinds"])
        samples = []
        rows = []
        keys = []
        for s in doc["samples"]:
            samples.append({k: s[k] for k in ("subject_id", "condition", "task", "order")})
            rows.append(s["values"])
            keys.append((s["subject_id"], s["condition"]))
        matrix = FeatureMatrix(
            names=names, X=np.array(rows, dtype=np.float64), kinds=kinds, sample_keys=keys,
        )
        return cls(matrix=matrix, samples=samples, normalized=bool(doc["normalized"]))

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSet":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _sample_features(recset: RecordingSet, subject: str, condition: Condition,
                     cfg: ExtractionConfig):
    montage = canonical_montage()
    test = recset.get(subject, condition, Phase.TEST)
    base = recset.get(subject, condition, Phase.BASELINE)
    test_f = lowpass_filter(select_montage(test, montage), cfg.cutoff_hz)
    base_f = lowpass_filter(select_montage(base, montage), cfg.cutoff_hz)

    spec = baseline_normalize_spectral(
        extract_spectral(test_f, cfg.bands),
        extract_spectral(base_f, cfg.bands),
    )
    names = spec.entry_names()
    kinds = ["spectral"] * len(spec)
    values = list(spec.values)

    if not cfg.spectral_only:
        test_m, _ = fronto_parietal_plv(test_f, cfg.bands, cfg.n_freqs, cfg.n_cycles)
        base_m, _ = fronto_parietal_plv(base_f, cfg.bands, cfg.n_freqs, cfg.n_cycles)
        plv = baseline_normalize_plv(test_m, base_m)
        names += plv.entry_names()
        kinds += ["plv"] * len(plv)
        values += list(plv.values)
    meta = {
        "subject_id": subject,
        "condition": condition.value,
        "task": test.task.value,
        "order": test.order,
    }
    return names, kinds, np.array(values), meta


def extract_features(recset: RecordingSet, cfg: ExtractionConfig | None = None) -> FeatureSet:
    """Normalized features for every (subject, condition) with a test recording.

    Requires a matching baseline per (subject, condition); the error names
    the sample that lacks one.
    """
    cfg = cfg or ExtractionConfig()
    recset.validate(task_duration_s=cfg.task_duration_s)
    keys = recset.test_keys()
    if not keys:
        raise InputError("no test recordings present")

    def work(key):
        subject, condition = key
        return _sample_features(recset, subject, condition, cfg)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(work, keys))
    else:
        results = [work(k) for k in keys]

    names, kinds = results[0][0], results[0][1]
    rows = []
    samples = []
    for r_names, _, values, meta in results:
        if r_names != names:
            raise InputError("inconsistent feature names across samples")
        rows.append(values)
        samples.append(meta)
    matrix = FeatureMatrix(
        names=names,
        X=np.vstack(rows),
        kinds=kinds,
        sample_keys=[(m["subject_id"], m["condition"]) for m in samples],
    )
    return FeatureSet(matrix=matrix, samples=samples, normalized=True)
