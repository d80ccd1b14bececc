"""Cross-correlation time alignment of the MIC and ACC channels."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sps

from .errors import DegenerateSignalError
from .signal_io import RecordingPair, Waveform

# voiced-band emphasis before correlating; raw signals are kept for analysis
BAND_LO_HZ = 200.0
BAND_HI_HZ = 1500.0
DEFAULT_MAX_LAG_S = 2.0


@dataclass(frozen=True)
class SyncResult:
    """Estimated channel offset. Positive lag means ACC lags MIC:
    acc[n] lines up with mic[n - lag_samples]."""

    lag_samples: int
    peak_correlation: float


def _bandpassed(x: np.ndarray, fs: float) -> np.ndarray:
    sos = sps.butter(4, [BAND_LO_HZ, BAND_HI_HZ], btype="bandpass", fs=fs, output="sos")
    # zero-phase filtering: any group delay here would bias the lag estimate
    y = sps.sosfiltfilt(sos, x)
    return y - y.mean()


def estimate_lag(mic: Waveform, acc: Waveform, max_lag_s: float = DEFAULT_MAX_LAG_S) -> SyncResult:
    """Lag of ACC relative to MIC maximizing normalized cross-correlation.

    The search covers integer lags in [-max_lag, +max_lag]. Both signals are
    band-passed to the voiced range first. peak_correlation is the globally
    normalized correlation value at the winning lag, in [-1, 1].
    """
    if mic.sample_rate_hz != acc.sample_rate_hz:
        raise ValueError("sample rates differ; resample before alignment")
    fs = mic.sample_rate_hz
    max_lag = int(round(max_lag_s * fs))
    if min(len(mic.samples), len(acc.samples)) <= max_lag:
        raise ValueError("signals shorter than the maximum lag")
    mf = _bandpassed(mic.samples, fs)
    af = _bandpassed(acc.samples, fs)
    e_m = float(np.dot(mf, mf))
    e_a = float(np.dot(af, af))
    if e_m <= 0.0 or e_a <= 0.0:
        raise DegenerateSignalError("all-zero signal, cannot estimate lag")
    c = sps.correlate(af, mf, mode="full", method="fft")
    lags = sps.correlation_lags(len(af), len(mf), mode="full")
    sel = np.abs(lags) <= max_lag
    c = c[sel]
    lags = lags[sel]
    i = int(np.argmax(c))
    peak = float(c[i] / np.sqrt(e_m * e_a))
    return SyncResult(lag_samples=int(lags[i]), peak_correlation=peak)


def apply_lag(pair: RecordingPair, sync: SyncResult) -> RecordingPair:
    """Shift the ACC channel onto the MIC timeline and truncate to common support.

    Segment times stay referenced to the MIC timeline. For a negative lag the
    ACC head has no recorded samples on that timeline; it is zero-filled, so
    windows there simply measure silence.
    """
    lag = sync.lag_samples
    mic_x = pair.mic.samples
    acc_x = pair.acc.samples
    if abs(lag) >= min(len(mic_x), len(acc_x)):
        raise ValueError("lag exceeds signal length")
    if lag >= 0:
        acc_aligned = acc_x[lag:]
    else:
        acc_aligned = np.concatenate([np.zeros(-lag), acc_x])
    n = min(len(mic_x), len(acc_aligned))
    return replace(
        pair,
        mic=Waveform(mic_x[:n].copy(), pair.mic.sample_rate_hz),
        acc=Waveform(acc_aligned[:n].copy(), pair.acc.sample_rate_hz),
    )
