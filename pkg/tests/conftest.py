import numpy as np
import pytest

from eegworkload.recordings import (
    Channel,
    Condition,
    Phase,
    Recording,
    TaskKind,
    canonical_montage,
)


def make_recording(samples, fs=128.0, channels=None, phase=Phase.TEST,
                   subject="s001", condition=Condition.VR, order=1):
    samples = np.asarray(samples, dtype=np.float64)
    if channels is None:
        channels = canonical_montage()[: samples.shape[0]]
    return Recording(
        subject_id=subject,
        condition=condition,
        task=TaskKind.MEDIUM_TURN,
        phase=phase,
        order=order,
        fs=fs,
        channels=channels,
        samples=samples,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def montage():
    return canonical_montage()
