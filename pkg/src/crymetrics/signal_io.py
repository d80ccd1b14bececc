"""Audio and annotation I/O: WAV decode/encode, resampling, RMS, TextGrid parsing.

All waveforms are float64 mono in nominal [-1, 1]. Annotations are Praat
long-format ("ooTextFile") interval tiers mapped onto the three cry labels.
"""
from __future__ import annotations

import enum
import math
import re
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import TextGridParseError, UnsupportedWavError, WavFormatError

TARGET_RATE_HZ = 11025.0


class Label(str, enum.Enum):
    CRY_ONLY = "cry_only"
    CRY_NOISE = "cry_noise"
    NON_CRY = "non_cry"


# interval text <-> label, exact match
_TEXT_TO_LABEL = {"cry": Label.CRY_ONLY, "cry+noise": Label.CRY_NOISE, "": Label.NON_CRY}
_LABEL_TO_TEXT = {v: k for k, v in _TEXT_TO_LABEL.items()}


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled real signal."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if samples.ndim != 1:
            raise ValueError("waveform must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class LabeledSegment:
    """Annotated time interval. ``flagged`` marks an unrecognized raw label."""

    start_s: float
    end_s: float
    label: Label
    flagged: bool = False

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ValueError(f"bad segment bounds [{self.start_s}, {self.end_s}]")


@dataclass
class RecordingPair:
    """One subject's paired MIC/ACC recording with its annotation."""

    subject_id: str
    age_group: str  # "m4" or "m12"
    mic: Waveform
    acc: Waveform
    segments: list[LabeledSegment] = field(default_factory=list)

    def __post_init__(self):
        if self.age_group not in ("m4", "m12"):
            raise ValueError(f"age_group must be 'm4' or 'm12', got {self.age_group!r}")


# ---------------------------------------------------------------------------
# WAV reading/writing
#
# Hand-rolled RIFF parsing: the stdlib wave module rejects float WAV and
# cannot decode 24-bit PCM, both of which the loader contract requires.

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


def read_wav(path) -> Waveform:
    """Decode a linear-PCM WAV file to a mono float64 Waveform.

    Supports 16/24-bit integer and 32-bit float encodings, mono or stereo
    (stereo is averaged to mono). Integer samples are scaled by the full
    negative range (int16 by 1/32768, int24 by 1/2**23).
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        pos += 8
        if pos + size > len(data):
            raise WavFormatError(f"{path}: truncated {cid.decode(errors='replace')!r} chunk")
        body = data[pos : pos + size]
        pos += size + (size & 1)  # chunks are word-aligned
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _FMT_EXTENSIBLE:
                if size < 40:
                    raise WavFormatError(f"{path}: extensible fmt chunk too short")
                sub = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = body
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise WavFormatError(f"{path}: missing data chunk")

    audio_format, channels, rate, _byte_rate, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: {channels} channels (mono or stereo only)")
    if rate <= 0:
        raise WavFormatError(f"{path}: invalid sample rate {rate}")

    if audio_format == _FMT_PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (2 * channels)], dtype="<i2")
        x = raw.astype(np.float64) / 32768.0
    elif audio_format == _FMT_PCM and bits == 24:
        usable = len(payload) - len(payload) % (3 * channels)
        b = np.frombuffer(payload[:usable], dtype=np.uint8).reshape(-1, 3)
        raw = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int32) << 16)
        )
        raw = np.where(raw >= 1 << 23, raw - (1 << 24), raw)
        x = raw.astype(np.float64) / float(1 << 23)
    elif audio_format == _FMT_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (4 * channels)], dtype="<f4")
        x = raw.astype(np.float64)
    else:
        raise UnsupportedWavError(
            f"{path}: unsupported encoding (format {audio_format}, {bits}-bit)"
        )

    if channels == 2:
        x = x.reshape(-1, 2).mean(axis=1)
    if not np.all(np.isfinite(x)):
        raise WavFormatError(f"{path}: non-finite samples in data chunk")
    return Waveform(x, float(rate))


def write_wav(path, w: Waveform, encoding: str = "float32") -> None:
    """Write a Waveform as mono WAV (``float32`` or ``pcm16``)."""
    if encoding == "float32":
        fmt_code, bits = _FMT_FLOAT, 32
        payload = w.samples.astype("<f4").tobytes()
    elif encoding == "pcm16":
        fmt_code, bits = _FMT_PCM, 16
        q = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
        payload = q.tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    rate = int(round(w.sample_rate_hz))
    block = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, fmt_code, 1, rate, rate * block, block, bits,
        b"data", len(payload),
    )
    Path(path).write_bytes(header + payload + (b"\x00" if len(payload) & 1 else b""))


# ---------------------------------------------------------------------------
# Resampling

def _design_lowpass(cutoff_hz: float, fs_hz: float, atten_db: float = 65.0) -> np.ndarray:
    # cutoff sits at 0.45x the output rate; the transition ends at its Nyquist
    width = cutoff_hz / 4.5
    ntaps, beta = sps.kaiserord(atten_db, width / (0.5 * fs_hz))
    ntaps |= 1
    return sps.firwin(ntaps, cutoff_hz, window=("kaiser", beta), fs=fs_hz)


def resample(w: Waveform, target_hz: float) -> Waveform:
    """Polyphase resampling with a windowed-sinc anti-aliasing filter.

    Cutoff 0.45x the lower of the two rates, >= 60 dB stopband. The rational
    ratio is approximated to within 1e-9 relative (exact for 44100 -> 11025).
    """
    if target_hz <= 0:
        raise ValueError("target rate must be positive")
    if abs(target_hz - w.sample_rate_hz) < 1e-9 * w.sample_rate_hz:
        return Waveform(w.samples.copy(), float(target_hz))
    ratio = Fraction(target_hz / w.sample_rate_hz).limit_denominator(1000)
    up, down = ratio.numerator, ratio.denominator
    fs_work = w.sample_rate_hz * up
    cutoff = 0.45 * min(target_hz, w.sample_rate_hz)
    h = _design_lowpass(cutoff, fs_work)
    y = sps.resample_poly(w.samples, up, down, window=h)
    return Waveform(y, float(target_hz))


def rms(w: Waveform, t0: float, t1: float) -> float:
    """Root-mean-square amplitude over [t0, t1)."""
    if not (0.0 <= t0 < t1 <= w.duration_s + 0.5 / w.sample_rate_hz):
        raise ValueError(f"bad interval [{t0}, {t1}] for duration {w.duration_s}")
    i0 = int(round(t0 * w.sample_rate_hz))
    i1 = min(int(round(t1 * w.sample_rate_hz)), len(w.samples))
    if i1 <= i0:
        raise ValueError("empty interval")
    seg = w.samples[i0:i1]
    return float(np.sqrt(np.mean(seg * seg)))


# ---------------------------------------------------------------------------
# TextGrid parsing (Praat long "ooTextFile" format)

_NUM_RE = re.compile(r"(?:xmin|xmax|number)\s*=\s*(.*?)\s*$")
_STR_RE = re.compile(r'(?:class|name|text|mark)\s*=\s*"(.*)"\s*$')
_SIZE_RE = re.compile(r"(?:intervals|points):\s*size\s*=\s*(.*?)\s*$")


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.i = 0

    def next_matching(self, regex, what):
        while self.i < len(self.lines):
            line = self.lines[self.i]
            self.i += 1
            m = regex.search(line)
            if m:
                return m.group(1), self.i
        raise TextGridParseError(f"expected {what}, hit end of input")


def _parse_number(raw: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise TextGridParseError(f"expected a number, got {raw!r}", line=line) from None


def parse_textgrid(text: str) -> list[tuple[str, list[LabeledSegment]]]:
    """Parse long-format TextGrid text into (tier name, segments) pairs.

    Only interval tiers are returned; point tiers are skipped. Interval text
    is mapped by exact match: "cry" -> cry_only, "cry+noise" -> cry_noise,
    "" -> non_cry. Any other text is kept as non_cry with ``flagged=True``.
    """
    if "ooTextFile" not in text.split("\n", 1)[0]:
        raise TextGridParseError("missing ooTextFile header")
    if "<absent>" in text:
        return []
    lines = _Lines(text)
    out: list[tuple[str, list[LabeledSegment]]] = []
    while True:
        try:
            cls, _ = lines.next_matching(_STR_RE, "a tier class")
        except TextGridParseError:
            break  # no more tiers
        if cls == "TextGrid":
            continue  # the object-class header line
        name, _ = lines.next_matching(_STR_RE, "a tier name")
        lines.next_matching(_NUM_RE, "tier xmin")
        lines.next_matching(_NUM_RE, "tier xmax")
        raw_n, n_line = lines.next_matching(_SIZE_RE, "tier size")
        count = int(_parse_number(raw_n, n_line))
        if cls == "IntervalTier":
            segments: list[LabeledSegment] = []
            prev_end = None
            for k in range(count):
                raw0, l0 = lines.next_matching(_NUM_RE, "interval xmin")
                raw1, l1 = lines.next_matching(_NUM_RE, "interval xmax")
                raw_text, _ = lines.next_matching(_STR_RE, "interval text")
                xmin = _parse_number(raw0, l0)
                xmax = _parse_number(raw1, l1)
                if xmin > xmax:
                    raise TextGridParseError(
                        f"tier {name!r} interval {k + 1}: xmin {xmin} > xmax {xmax}",
                        line=l1,
                    )
                if prev_end is not None and xmin < prev_end - 1e-9:
                    raise TextGridParseError(
                        f"tier {name!r} interval {k + 1}: overlaps previous interval",
                        line=l0,
                    )
                prev_end = xmax
                if xmax == xmin:
                    continue  # degenerate interval carries no content
                raw_text = raw_text.replace('""', '"')
                label = _TEXT_TO_LABEL.get(raw_text)
                if label is None:
                    segments.append(LabeledSegment(xmin, xmax, Label.NON_CRY, flagged=True))
                else:
                    segments.append(LabeledSegment(xmin, xmax, label))
            out.append((name, segments))
        else:
            # point tier: consume number/mark pairs
            for _ in range(count):
                lines.next_matching(_NUM_RE, "point number")
                lines.next_matching(_STR_RE, "point mark")
    return out


def read_textgrid(path) -> list[tuple[str, list[LabeledSegment]]]:
    """Read a TextGrid file, handling UTF-8/UTF-16 with or without BOM."""
    raw = Path(path).read_bytes()
    if raw.startswith(b"\xff\xfe") or raw.startswith(b"\xfe\xff"):
        text = raw.decode("utf-16")
    elif raw.startswith(b"\xef\xbb\xbf"):
        text = raw.decode("utf-8-sig")
    else:
        text = raw.decode("utf-8")
    return parse_textgrid(text)


def format_textgrid(tiers: list[tuple[str, list[LabeledSegment]]], xmax: float) -> str:
    """Serialize interval tiers to long-format TextGrid text.

    Gaps between segments (and before/after them) are tiled with empty-text
    intervals so the tier covers [0, xmax], as Praat expects.
    """
    def tile(segments):
        intervals = []
        cursor = 0.0
        for seg in sorted(segments, key=lambda s: s.start_s):
            if seg.start_s > cursor + 1e-12:
                intervals.append((cursor, seg.start_s, ""))
            intervals.append((seg.start_s, seg.end_s, _LABEL_TO_TEXT[seg.label]))
            cursor = seg.end_s
        if cursor < xmax - 1e-12:
            intervals.append((cursor, xmax, ""))
        return intervals

    parts = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        "xmin = 0",
        f"xmax = {xmax!r}",
        "tiers? <exists>",
        f"size = {len(tiers)}",
        "item []:",
    ]
    for t_idx, (name, segments) in enumerate(tiers, start=1):
        intervals = tile(segments)
        parts += [
            f"    item [{t_idx}]:",
            '        class = "IntervalTier"',
            f'        name = "{name}"',
            "        xmin = 0",
            f"        xmax = {xmax!r}",
            f"        intervals: size = {len(intervals)}",
        ]
        for i, (a, b, text) in enumerate(intervals, start=1):
            parts += [
                f"        intervals [{i}]:",
                f"            xmin = {a!r}",
                f"            xmax = {b!r}",
                f'            text = "{text}"',
            ]
    return "\n".join(parts) + "\n"


def write_textgrid(path, tiers, xmax: float) -> None:
    Path(path).write_text(format_textgrid(tiers, xmax), encoding="utf-8")


# ---------------------------------------------------------------------------

def load_recording_pair(
    mic_path,
    acc_path,
    annotation_path,
    subject_id: str,
    age_group: str,
    tier_name: str | None = None,
    target_hz: float = TARGET_RATE_HZ,
) -> RecordingPair:
    """Load MIC + ACC + annotation, resampling both channels to ``target_hz``.

    The returned pair is NOT yet synchronized. Segments come from the tier
    named ``tier_name``, or the first interval tier when omitted.
    """
    mic = read_wav(mic_path)
    acc = read_wav(acc_path)
    if mic.sample_rate_hz != target_hz:
        mic = resample(mic, target_hz)
    if acc.sample_rate_hz != target_hz:
        acc = resample(acc, target_hz)
    tiers = read_textgrid(annotation_path)
    if not tiers:
        raise TextGridParseError(f"{annotation_path}: no interval tiers")
    if tier_name is None:
        segments = tiers[0][1]
    else:
        by_name = dict(tiers)
        if tier_name not in by_name:
            raise KeyError(f"{annotation_path}: no tier named {tier_name!r}")
        segments = by_name[tier_name]
    return RecordingPair(subject_id, age_group, mic, acc, segments)
