"""Dual-modality infant-cry analysis: vocal measures and cross-modal agreement."""

from .agreement import (
    BiasResult,
    IccResult,
    SubjectSummary,
    build_reports,
    classify_icc,
    exclude_outliers,
    icc,
    octave_error_rate,
    paired_t,
    sample_segments,
    summarize_subjects,
)
from .alignment import SyncResult, apply_lag, estimate_lag
from .errors import (
    CrymetricsError,
    DegenerateDataError,
    DegenerateSignalError,
    InsufficientCyclesError,
    InsufficientSubjectsError,
    TextGridParseError,
    UnsupportedWavError,
    WavFormatError,
)
from .measures import (
    AnalysisWindow,
    CycleSeries,
    WindowMeasures,
    cpp,
    cycle_series,
    hnr,
    jitter_cv,
    jitter_local,
    make_windows,
    measure_window,
    shimmer_cv,
    shimmer_local,
)
from .pitch import (
    PitchParams,
    PitchTrack,
    PointProcess,
    extract_point_process,
    harmonic_strength,
    track_pitch,
)
from .pipeline import RunConfig, run_analyze, run_validate
from .signal_io import (
    Label,
    LabeledSegment,
    RecordingPair,
    Waveform,
    load_recording_pair,
    parse_textgrid,
    read_textgrid,
    read_wav,
    resample,
    rms,
    write_textgrid,
    write_wav,
)
from .synth import GroundTruth, SynthSpec, synthesize_corpus, synthesize_pair

__version__ = "0.1.0"
