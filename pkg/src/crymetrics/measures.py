"""Per-window vocal-function measures: F0, jitter, shimmer, CPP, HNR.

Analysis runs on contiguous, non-overlapping 50 ms windows inside clean-cry
segments. Failed or unvoiced measures are absent (None), never zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InsufficientCyclesError
from .pitch import PitchParams, PitchTrack, PointProcess, harmonic_strength, interp_peak
from .signal_io import Label, LabeledSegment, Waveform, rms

WINDOW_S = 0.050
RMS_GATE = 0.01
CPP_FRAME_S = 0.04096
CPP_QUEF_LO_S = 0.00067
CPP_QUEF_HI_S = 0.005
MEASURE_COLUMNS = (
    "f0_hz",
    "j_cv_pct",
    "j_local_pct",
    "s_cv_pct",
    "s_local_pct",
    "cpp_db",
    "hnr_db",
)


@dataclass(frozen=True)
class AnalysisWindow:
    subject_id: str
    age_group: str
    segment_index: int
    window_index: int
    start_s: float
    end_s: float
    modality: str  # "mic" or "acc"


@dataclass(frozen=True)
class WindowMeasures:
    f0_hz: float | None = None
    j_cv_pct: float | None = None
    j_local_pct: float | None = None
    s_cv_pct: float | None = None
    s_local_pct: float | None = None
    cpp_db: float | None = None
    hnr_db: float | None = None


@dataclass(frozen=True)
class CycleSeries:
    """Filtered per-cycle periods and peak-to-peak amplitudes of one window."""

    periods_s: np.ndarray
    amplitudes: np.ndarray


def make_windows(
    segments: list[LabeledSegment],
    mic: Waveform,
    rms_gate: float = RMS_GATE,
    window_s: float = WINDOW_S,
    subject_id: str = "",
    age_group: str = "m4",
    max_t: float | None = None,
) -> list[AnalysisWindow]:
    """Tile gated clean-cry segments with fixed windows, one per modality.

    Only cry_only segments whose MIC RMS reaches ``rms_gate`` are used; the
    trailing remainder shorter than one window is discarded. Windows are
    emitted in (segment, window, modality) order with identical time bounds
    for both modalities.
    """
    limit = mic.duration_s if max_t is None else min(max_t, mic.duration_s)
    out: list[AnalysisWindow] = []
    for seg_idx, seg in enumerate(segments):
        if seg.label is not Label.CRY_ONLY or seg.flagged:
            continue
        end = min(seg.end_s, limit)
        if end - seg.start_s < window_s:
            continue
        if rms(mic, seg.start_s, end) < rms_gate:
            continue
        n_win = int(np.floor((end - seg.start_s) / window_s + 1e-9))
        for k in range(n_win):
            t0 = seg.start_s + k * window_s
            t1 = t0 + window_s
            for modality in ("mic", "acc"):
                out.append(
                    AnalysisWindow(
                        subject_id, age_group, seg_idx, k, t0, t1, modality
                    )
                )
    return out


# ---------------------------------------------------------------------------
# Cycle series

def _iqr_keep(values: np.ndarray, k: float = 1.5) -> np.ndarray:
    if len(values) < 4:
        return np.ones(len(values), dtype=bool)
    q1, q3 = np.percentile(values, [25.0, 75.0])
    iqr = q3 - q1
    return (values >= q1 - k * iqr) & (values <= q3 + k * iqr)


def _smooth3(values: np.ndarray) -> np.ndarray:
    if len(values) < 3:
        return values.copy()
    out = np.empty_like(values)
    out[1:-1] = (values[:-2] + values[1:-1] + values[2:]) / 3.0
    out[0] = (values[0] + values[1]) / 2.0
    out[-1] = (values[-2] + values[-1]) / 2.0
    return out


def cycle_series(
    w: Waveform,
    pp: PointProcess,
    window: AnalysisWindow,
    smooth_periods: bool = True,
    iqr_filter_amplitudes: bool = True,
) -> CycleSeries:
    """Per-cycle periods and amplitudes for one window.

    Periods are differences of consecutive instants that both fall in the
    window; outliers beyond the 1.5 IQR Tukey fences are dropped and the
    survivors pass through a 3-point moving average (shrinking at the edges).
    Amplitudes are per-cycle peak-to-peak values measured over one cycle
    length centered around each instant (so a cycle's swing is its own
    pulse's, not the next one's); they get the same IQR filter but no
    smoothing. Fewer than 3 surviving periods raises InsufficientCyclesError.
    """
    u = pp.instants_s
    u = u[(u >= window.start_s) & (u < window.end_s)]
    if len(u) < 4:
        raise InsufficientCyclesError(
            f"{len(u)} instants in window [{window.start_s:.3f}, {window.end_s:.3f})"
        )
    periods = np.diff(u)
    kept = periods[_iqr_keep(periods)]
    if len(kept) < 3:
        raise InsufficientCyclesError("fewer than 3 periods survive IQR filtering")
    if smooth_periods:
        kept = _smooth3(kept)

    fs = w.sample_rate_hz
    x = w.samples
    amps = []
    for u0, u1 in zip(u[:-1], u[1:]):
        cyc = u1 - u0
        ia = int(np.floor((u0 - 0.25 * cyc) * fs))
        ib = int(np.ceil((u0 + 0.75 * cyc) * fs))
        if ia < 1 or ib > len(x) - 1 or ib - ia < 3:
            continue
        seg = x[ia:ib]
        _, peak = interp_peak(x, ia + int(np.argmax(seg)), +1.0)
        _, trough = interp_peak(x, ia + int(np.argmin(seg)), -1.0)
        amps.append(peak + trough)  # trough is the extremum of -x
    amps = np.asarray(amps, dtype=float)
    if iqr_filter_amplitudes and len(amps) >= 4:
        amps = amps[_iqr_keep(amps)]
    return CycleSeries(periods_s=kept, amplitudes=amps)


# ---------------------------------------------------------------------------
# The four perturbation measures

def jitter_cv(c: CycleSeries) -> float:
    """Coefficient of variation of periods, percent (sample std, N-1)."""
    p = c.periods_s
    if len(p) < 3:
        raise InsufficientCyclesError("jitter_cv needs >= 3 periods")
    return 100.0 * float(np.std(p, ddof=1) / np.mean(p))


def jitter_local(c: CycleSeries) -> float:
    """Mean absolute consecutive period difference over mean period, percent."""
    p = c.periods_s
    if len(p) < 3:
        raise InsufficientCyclesError("jitter_local needs >= 3 periods")
    return 100.0 * float(np.mean(np.abs(np.diff(p))) / np.mean(p))


def shimmer_cv(c: CycleSeries) -> float:
    """Coefficient of variation of amplitudes, percent (population std, N)."""
    a = c.amplitudes
    if len(a) < 3:
        raise InsufficientCyclesError("shimmer_cv needs >= 3 amplitudes")
    mean = float(np.mean(a))
    if mean <= 0.0:
        raise DegenerateDataError("non-positive mean amplitude")
    return 100.0 * float(np.std(a, ddof=0)) / mean


def shimmer_local(c: CycleSeries) -> float:
    """Mean absolute consecutive amplitude difference over mean amplitude, percent."""
    a = c.amplitudes
    if len(a) < 2:
        raise InsufficientCyclesError("shimmer_local needs >= 2 amplitudes")
    mean = float(np.mean(a))
    if mean <= 0.0:
        raise DegenerateDataError("non-positive mean amplitude")
    return 100.0 * float(np.mean(np.abs(np.diff(a)))) / mean


# ---------------------------------------------------------------------------
# Spectral measures

def _cpp_detail(w: Waveform, window: AnalysisWindow) -> tuple[float, float] | None:
    """(CPP dB, peak quefrency s) for one window, or None if silent."""
    fs = w.sample_rate_hz
    n = int(round(CPP_FRAME_S * fs))
    center = 0.5 * (window.start_s + window.end_s)
    start = int(round(center * fs)) - n // 2
    if start < 0 or start + n > len(w.samples):
        raise ValueError("CPP frame extends past the signal")
    frame = w.samples[start : start + n]
    if float(np.sqrt(np.mean(frame * frame))) < 1e-7:
        return None
    frame = frame * np.hamming(n)
    nfft = 1 << int(np.ceil(np.log2(n)))
    spectrum = np.fft.fft(frame, nfft)
    log_power_db = 10.0 * np.log10(np.maximum(np.abs(spectrum) ** 2, 1e-300))
    cep = np.fft.rfft(log_power_db)
    cep_db = 10.0 * np.log10(np.maximum(np.abs(cep) ** 2, 1e-300))
    quef = np.arange(len(cep_db)) / fs
    fit = quef > CPP_QUEF_LO_S
    design = np.vstack([quef[fit], np.ones(int(fit.sum()))]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, cep_db[fit], rcond=None)
    search = (quef >= CPP_QUEF_LO_S) & (quef <= CPP_QUEF_HI_S)
    peak_bin = np.where(search)[0][int(np.argmax(cep_db[search]))]
    baseline = slope * quef[peak_bin] + intercept
    return float(cep_db[peak_bin] - baseline), float(quef[peak_bin])


def cpp(w: Waveform, window: AnalysisWindow) -> float | None:
    """Cepstral peak prominence of the window, in dB.

    A 40.96 ms Hamming frame centered in the window is zero-padded to the
    next power of two; the cepstrum is the power of the Fourier transform of
    the dB log-power spectrum, again in dB. A least-squares line fitted over
    quefrencies above 0.67 ms is the baseline; CPP is the height of the
    cepstral peak in [0.67 ms, 5 ms] above that line at the peak quefrency.
    Returns None for an (effectively) silent frame.
    """
    detail = _cpp_detail(w, window)
    return None if detail is None else detail[0]


def hnr(w: Waveform, window: AnalysisWindow, p: PitchParams | None = None) -> float | None:
    """Harmonics-to-noise ratio at the window center, dB.

    r is the peak normalized correlation there; HNR = 10 log10(r / (1 - r)).
    None when the frame is unvoiced (r below the voicing threshold).
    """
    p = p or PitchParams()
    center = 0.5 * (window.start_s + window.end_s)
    r = harmonic_strength(w, center, p)
    if r < p.voicing_threshold:
        return None
    r = min(r, 1.0 - 1e-9)
    return float(10.0 * np.log10(r / (1.0 - r)))


def measure_window(
    w: Waveform,
    window: AnalysisWindow,
    track: PitchTrack,
    pp: PointProcess,
    p: PitchParams | None = None,
    smooth_periods: bool = True,
    iqr_filter_amplitudes: bool = True,
) -> WindowMeasures:
    """All seven measures for one window on one channel; absent on failure."""
    p = p or PitchParams()
    in_win = (track.frame_times_s >= window.start_s) & (track.frame_times_s < window.end_s)
    f0_vals = track.f0_hz[in_win]
    f0_vals = f0_vals[~np.isnan(f0_vals)]
    f0 = float(np.mean(f0_vals)) if len(f0_vals) else None

    j_cv = j_loc = s_cv = s_loc = None
    try:
        series = cycle_series(
            w, pp, window,
            smooth_periods=smooth_periods,
            iqr_filter_amplitudes=iqr_filter_amplitudes,
        )
    except InsufficientCyclesError:
        series = None
    if series is not None:
        try:
            j_cv = jitter_cv(series)
            j_loc = jitter_local(series)
        except InsufficientCyclesError:
            pass
        try:
            s_cv = shimmer_cv(series)
        except (InsufficientCyclesError, DegenerateDataError):
            pass
        try:
            s_loc = shimmer_local(series)
        except (InsufficientCyclesError, DegenerateDataError):
            pass

    return WindowMeasures(
        f0_hz=f0,
        j_cv_pct=j_cv,
        j_local_pct=j_loc,
        s_cv_pct=s_cv,
        s_local_pct=s_loc,
        cpp_db=cpp(w, window),
        hnr_db=hnr(w, window, p),
    )
