import numpy as np
import pytest

from crymetrics import Waveform

FS = 11025.0


@pytest.fixture
def fs():
    return FS


def sine(freq, duration_s=1.0, fs_=FS, amplitude=1.0, phase=0.0):
    t = np.arange(int(round(duration_s * fs_))) / fs_
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t + phase), fs_)


def bl_sawtooth(freq, duration_s=1.0, fs_=FS, n_harmonics=None):
    """Band-limited sawtooth: harmonics up to 0.45*fs."""
    t = np.arange(int(round(duration_s * fs_))) / fs_
    if n_harmonics is None:
        n_harmonics = int(0.45 * fs_ / freq)
    x = np.zeros_like(t)
    for k in range(1, n_harmonics + 1):
        x += np.sin(2 * np.pi * k * freq * t) / k
    return Waveform(x / np.max(np.abs(x)), fs_)
