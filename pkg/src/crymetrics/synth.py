"""Synthetic paired-cry generator with exact ground truth.

The source is an impulse train convolved with a band-limited bipolar pulse,
built at 16x the target rate so cycle instants land on a fine grid; truth
records the quantized instants, so measured-vs-truth comparisons carry no
hidden placement error. Channel filters are applied zero-phase: the injected
inter-channel lag is then exactly the lag an aligner should recover.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .signal_io import (
    Label,
    LabeledSegment,
    Waveform,
    write_textgrid,
    write_wav,
)

_SQRT3 = np.sqrt(3.0)
_OVERSAMPLE = 16
MIC_RESONANCES_HZ = (1000.0, 3000.0)
MIC_RESONANCE_BW_HZ = 600.0


@dataclass(frozen=True)
class SynthSpec:
    duration_s: float = 3.0
    f0_hz: float = 450.0
    f0_drift: float = 0.0          # fractional depth of a 2 Hz F0 modulation
    jitter_cv: float = 0.0         # per-cycle period CV (fraction)
    shimmer_cv: float = 0.0        # per-cycle gain CV (fraction)
    hnr_db: float = float("inf")   # harmonics-to-noise target on the MIC channel
    lag_samples: int = 0           # positive: ACC lags MIC
    acc_lowpass_hz: float = 1000.0
    seed: int = 0
    sample_rate_hz: float = 11025.0
    acc_shimmer_scale: float = 1.0  # scales gain deviations on the ACC channel
    copy_mic_to_acc: bool = False   # ACC becomes a bit-exact copy of MIC

    def __post_init__(self):
        if not (0.0 <= self.jitter_cv <= 0.2 and 0.0 <= self.shimmer_cv <= 0.2):
            raise ValueError("jitter_cv and shimmer_cv must lie in [0, 0.2]")
        if self.duration_s < 0.5:
            raise ValueError("duration must be >= 0.5 s")
        if not (200.0 <= self.f0_hz <= 1500.0):
            raise ValueError("f0_hz must lie in [200, 1500]")


@dataclass
class GroundTruth:
    instants_s: list[float]
    periods_s: list[float]
    gains_mic: list[float]
    gains_acc: list[float]
    lag_samples: int
    f0_mean_hz: float
    jitter_cv_target: float
    jitter_cv_realized: float
    shimmer_cv_target: float
    shimmer_cv_realized: float
    hnr_db: float
    seed: int

    def to_json(self) -> str:
        payload = asdict(self)
        payload["hnr_db"] = "inf" if np.isinf(self.hnr_db) else self.hnr_db
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        payload = json.loads(text)
        if payload.get("hnr_db") == "inf":
            payload["hnr_db"] = float("inf")
        return cls(**payload)


def _decimation_fir(fs_hi: float, target_hz: float) -> np.ndarray:
    width = 0.1 * target_hz
    ntaps, beta = sps.kaiserord(65.0, width / (0.5 * fs_hi))
    ntaps |= 1
    return sps.firwin(ntaps, 0.45 * target_hz, window=("kaiser", beta), fs=fs_hi)


def _pulse_template(fs: float, f0: float, tau_r=0.00035, tau_d=0.0006):
    """Band-limited bipolar pulse at fs*_OVERSAMPLE, peak-normalized.

    The raw kernel is the time derivative of a smooth-onset exponential
    decay, faded to zero inside 0.85 of a period so neighboring cycles never
    interact at the source; low-pass filtering at 0.45*fs makes fractional
    placement alias-free.
    """
    fs_hi = fs * _OVERSAMPLE
    support = min(0.85 / f0, 8.0 * tau_d)
    n = int(round(support * fs_hi))
    t = np.arange(n) / fs_hi
    rise = 1.0 - np.exp(-t / tau_r)
    decay = np.exp(-t / tau_d)
    kernel = (np.exp(-t / tau_r) / tau_r) * decay - rise * decay / tau_d
    fade_from = 0.6 * support
    fade = np.ones(n)
    late = t > fade_from
    fade[late] = 0.5 + 0.5 * np.cos(np.pi * (t[late] - fade_from) / (support - fade_from))
    kernel *= fade
    h = _decimation_fir(fs_hi, fs)
    template = sps.fftconvolve(kernel, h)
    template /= np.max(np.abs(template))
    return template, (len(h) - 1) // 2


def _mic_color(x: np.ndarray, fs: float) -> np.ndarray:
    """Two-resonance vocal-tract coloring, zero phase."""
    y = x
    for f in MIC_RESONANCES_HZ:
        r = np.exp(-np.pi * MIC_RESONANCE_BW_HZ / fs)
        theta = 2.0 * np.pi * f / fs
        y = sps.filtfilt([1.0], [1.0, -2.0 * r * np.cos(theta), r * r], y)
    return y


def _acc_color(x: np.ndarray, fs: float, cutoff: float) -> np.ndarray:
    """Tissue-conduction low-pass, zero phase."""
    sos = sps.butter(4, cutoff, fs=fs, output="sos")
    return sps.sosfiltfilt(sos, x)


def synthesize_pair(spec: SynthSpec) -> tuple[Waveform, Waveform, GroundTruth]:
    """Generate one (mic, acc, truth) triple per the spec."""
    fs = spec.sample_rate_hz
    fs_hi = fs * _OVERSAMPLE
    rng = np.random.default_rng(spec.seed)
    margin = 0.1
    template, lead = _pulse_template(fs, spec.f0_hz)
    n_hi = int(round(spec.duration_s * fs_hi))

    instants: list[float] = []
    gains_mic: list[float] = []
    gains_acc: list[float] = []
    quantized: list[int] = []
    t = margin
    while t < spec.duration_s - margin:
        f_inst = spec.f0_hz * (1.0 + spec.f0_drift * np.sin(2.0 * np.pi * 2.0 * t))
        eta = rng.uniform(-_SQRT3, _SQRT3) * spec.jitter_cv if spec.jitter_cv else 0.0
        xi = rng.uniform(-_SQRT3, _SQRT3) * spec.shimmer_cv if spec.shimmer_cv else 0.0
        period = (1.0 / f_inst) * (1.0 + eta)
        iq = int(round(t * fs_hi))
        quantized.append(iq)
        instants.append(iq / fs_hi)
        gains_mic.append(1.0 + xi)
        gains_acc.append(1.0 + xi * spec.acc_shimmer_scale)
        t += period

    def render(gains):
        train = np.zeros(n_hi + len(template))
        for iq, g in zip(quantized, gains):
            train[iq] += g
        hi = sps.fftconvolve(train, template)[lead : lead + n_hi]
        return hi[::_OVERSAMPLE].copy()

    mic = _mic_color(render(gains_mic), fs)
    acc = _acc_color(render(gains_acc), fs, spec.acc_lowpass_hz)

    core = slice(int((margin + 0.05) * fs), int((spec.duration_s - margin - 0.05) * fs))
    if np.isfinite(spec.hnr_db):
        noise_power_mic = float(np.mean(mic[core] ** 2)) / 10.0 ** (spec.hnr_db / 10.0)
        noise_power_acc = float(np.mean(acc[core] ** 2)) / 10.0 ** ((spec.hnr_db + 4.0) / 10.0)
        mic = mic + rng.normal(0.0, np.sqrt(noise_power_mic), len(mic))
        acc = acc + rng.normal(0.0, np.sqrt(noise_power_acc), len(acc))

    # normalize each channel to a 0.5 peak; all measures are scale-invariant
    mic *= 0.5 / np.max(np.abs(mic))
    acc *= 0.5 / np.max(np.abs(acc))

    lag = int(spec.lag_samples)
    if spec.copy_mic_to_acc:
        acc = mic.copy()
        lag = 0
    d_mic, d_acc = max(-lag, 0), max(lag, 0)
    total = len(mic) + abs(lag)
    mic = np.concatenate([np.zeros(d_mic), mic, np.zeros(total - d_mic - len(mic))])
    acc = np.concatenate([np.zeros(d_acc), acc, np.zeros(total - d_acc - len(acc))])

    # truth times are reported on the MIC timeline
    mic_offset = d_mic / fs
    instants_mic = [u + mic_offset for u in instants]
    periods = list(np.diff(instants))
    p = np.asarray(periods)
    g = np.asarray(gains_mic)
    truth = GroundTruth(
        instants_s=instants_mic,
        periods_s=periods,
        gains_mic=gains_mic,
        gains_acc=gains_acc,
        lag_samples=lag,
        f0_mean_hz=float(1.0 / np.mean(p)) if len(p) else float("nan"),
        jitter_cv_target=spec.jitter_cv,
        jitter_cv_realized=float(np.std(p, ddof=1) / np.mean(p)) if len(p) > 1 else 0.0,
        shimmer_cv_target=spec.shimmer_cv,
        shimmer_cv_realized=float(np.std(g, ddof=0) / np.mean(g)) if len(g) else 0.0,
        hnr_db=spec.hnr_db,
        seed=spec.seed,
    )
    return Waveform(mic, fs), Waveform(acc, fs), truth


def annotation_segments(spec: SynthSpec, truth: GroundTruth, piece_s: float = 0.45):
    """Contiguous cry_only segments covering the voiced span, MIC timeline."""
    margin = 0.1
    mic_offset = max(-truth.lag_samples, 0) / spec.sample_rate_hz
    start = margin + 0.05 + mic_offset
    end = spec.duration_s - margin - 0.05 + mic_offset
    segments = []
    t = start
    while end - t >= 0.1:
        t1 = min(t + piece_s, end)
        segments.append(LabeledSegment(round(t, 6), round(t1, 6), Label.CRY_ONLY))
        t = t1
    return segments


def synthesize_corpus(
    out_dir,
    n_subjects: int,
    seed: int = 0,
    base: SynthSpec | None = None,
    vary: bool = True,
    copy_mic_to_acc: bool = False,
    acc_shimmer_scale: float = 1.0,
) -> list[Path]:
    """Write a corpus of subject directories (WAV pair, TextGrid, truth JSON).

    Each subject draws its own f0/jitter/shimmer/HNR/lag from fixed ranges
    (unless ``vary`` is off), deterministically in ``seed``. Age groups
    alternate m4/m12.
    """
    if n_subjects < 3:
        raise ValueError("a corpus needs at least 3 subjects")
    base = base or SynthSpec()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = np.random.default_rng(seed)
    written = []
    for i in range(n_subjects):
        sub_seed = int(master.integers(0, 2**31 - 1))
        rng = np.random.default_rng(sub_seed)
        if vary:
            spec = SynthSpec(
                duration_s=base.duration_s,
                f0_hz=float(rng.uniform(350.0, 600.0)),
                f0_drift=base.f0_drift,
                jitter_cv=float(rng.uniform(0.005, 0.03)),
                shimmer_cv=float(rng.uniform(0.02, 0.08)),
                hnr_db=float(rng.uniform(12.0, 25.0)),
                lag_samples=int(rng.integers(-300, 301)),
                acc_lowpass_hz=base.acc_lowpass_hz,
                seed=sub_seed,
                sample_rate_hz=base.sample_rate_hz,
                acc_shimmer_scale=acc_shimmer_scale,
                copy_mic_to_acc=copy_mic_to_acc,
            )
        else:
            spec = SynthSpec(
                **{
                    **asdict(base),
                    "seed": sub_seed,
                    "acc_shimmer_scale": acc_shimmer_scale,
                    "copy_mic_to_acc": copy_mic_to_acc,
                }
            )
        mic, acc, truth = synthesize_pair(spec)
        subject_id = f"s{i:03d}"
        age_group = "m4" if i % 2 == 0 else "m12"
        sub_dir = out / subject_id
        sub_dir.mkdir(exist_ok=True)
        write_wav(sub_dir / "mic.wav", mic, encoding="float32")
        write_wav(sub_dir / "acc.wav", acc, encoding="float32")
        segments = annotation_segments(spec, truth)
        write_textgrid(sub_dir / "labels.TextGrid", [("cry", segments)], mic.duration_s)
        (sub_dir / "meta.json").write_text(
            json.dumps({"subject_id": subject_id, "age_group": age_group}, sort_keys=True)
        )
        (sub_dir / "truth.json").write_text(truth.to_json())
        written.append(sub_dir)
    return written
