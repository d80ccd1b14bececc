"""End-to-end runs: analyze a corpus, validate synthetic corpora against truth.

Corpus layout: one directory per subject holding mic.wav, acc.wav,
labels.TextGrid and meta.json ({"age_group": "m4"|"m12"}); synthetic subjects
add truth.json. All outputs are deterministic given corpus + config + seed.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import agreement, measures
from .alignment import apply_lag, estimate_lag
from .errors import CrymetricsError, InsufficientSubjectsError
from .pitch import PitchParams, extract_point_process, track_pitch
from .signal_io import load_recording_pair
from .synth import GroundTruth

log = logging.getLogger("crymetrics")

HIST_BINS = 30


@dataclass
class RunConfig:
    corpus: str = ""
    out: str = ""
    seed: int = 0
    segments_per_subject: int = 20
    rms_gate: float = 0.01
    window_s: float = 0.050
    bias_gate_icc: float = 0.75
    bias_all_measures: bool = False
    tier: str | None = None
    max_lag_s: float = 2.0
    workers: int = 1
    sample_unit: str = "segments"
    smooth_periods: bool = True
    iqr_filter_amplitudes: bool = True
    pitch: PitchParams = field(default_factory=PitchParams)

    def flat_dict(self) -> dict:
        d = dataclasses.asdict(self)
        p = d.pop("pitch")
        for key, value in p.items():
            d[f"pitch.{key}"] = value
        return d


_CONFIG_COERCERS = {
    "seed": int,
    "segments_per_subject": int,
    "workers": int,
    "rms_gate": float,
    "window_s": float,
    "bias_gate_icc": float,
    "max_lag_s": float,
    "bias_all_measures": lambda v: str(v).lower() in ("1", "true", "yes"),
    "smooth_periods": lambda v: str(v).lower() in ("1", "true", "yes"),
    "iqr_filter_amplitudes": lambda v: str(v).lower() in ("1", "true", "yes"),
}
_PITCH_KEYS = {
    "pitch.floor_hz": "floor_hz",
    "pitch.ceiling_hz": "ceiling_hz",
    "pitch.time_step_s": "time_step_s",
    "pitch.voicing_threshold": "voicing_threshold",
    "pitch.octave_cost": "octave_cost",
    "pitch.silence_threshold": "silence_threshold",
}


def parse_config_file(path) -> dict:
    """Flat ``key = value`` config lines; '#' starts a comment."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key = value): {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def make_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Build RunConfig with precedence CLI overrides > config file > defaults."""
    merged: dict = {}
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if value is not None:
                merged[key] = value
    cfg = RunConfig()
    pitch_kwargs = dataclasses.asdict(cfg.pitch)
    for key, value in merged.items():
        if key in _PITCH_KEYS:
            pitch_kwargs[_PITCH_KEYS[key]] = float(value)
        elif key in _CONFIG_COERCERS:
            setattr(cfg, key, _CONFIG_COERCERS[key](value))
        elif key in ("corpus", "out", "sample_unit"):
            setattr(cfg, key, str(value))
        elif key == "tier":
            cfg.tier = str(value) if value not in ("", "None") else None
        else:
            raise ValueError(f"unknown config key {key!r}")
    cfg.pitch = PitchParams(**pitch_kwargs)
    return cfg


# ---------------------------------------------------------------------------
# Per-subject processing

def discover_subjects(corpus_root) -> list[Path]:
    root = Path(corpus_root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} does not exist")
    subjects = []
    for sub in sorted(root.iterdir()):
        if sub.is_dir() and (sub / "mic.wav").exists() and (sub / "acc.wav").exists():
            subjects.append(sub)
    return subjects


def process_subject(sub_dir: Path, cfg: RunConfig):
    """Load, synchronize and measure one subject.

    Returns (rows, sync_info) where rows is a list of dicts, one per
    window x modality.
    """
    meta = json.loads((sub_dir / "meta.json").read_text())
    subject_id = meta.get("subject_id", sub_dir.name)
    age_group = meta["age_group"]
    pair = load_recording_pair(
        sub_dir / "mic.wav",
        sub_dir / "acc.wav",
        sub_dir / "labels.TextGrid",
        subject_id,
        age_group,
        tier_name=cfg.tier,
    )
    sync = estimate_lag(pair.mic, pair.acc, cfg.max_lag_s)
    pair = apply_lag(pair, sync)
    windows = measures.make_windows(
        pair.segments,
        pair.mic,
        rms_gate=cfg.rms_gate,
        window_s=cfg.window_s,
        subject_id=subject_id,
        age_group=age_group,
        max_t=min(pair.mic.duration_s, pair.acc.duration_s),
    )
    channels = {"mic": pair.mic, "acc": pair.acc}
    tracks = {}
    points = {}
    for name, wave in channels.items():
        track = track_pitch(wave, cfg.pitch)
        tracks[name] = track
        points[name] = extract_point_process(wave, track, cfg.pitch)
    rows = []
    for win in windows:
        wave = channels[win.modality]
        wm = measures.measure_window(
            wave,
            win,
            tracks[win.modality],
            points[win.modality],
            cfg.pitch,
            smooth_periods=cfg.smooth_periods,
            iqr_filter_amplitudes=cfg.iqr_filter_amplitudes,
        )
        row = {
            "subject_id": win.subject_id,
            "age_group": win.age_group,
            "segment_index": win.segment_index,
            "window_index": win.window_index,
            "start_s": win.start_s,
            "end_s": win.end_s,
            "modality": win.modality,
        }
        row.update(dataclasses.asdict(wm))
        rows.append(row)
    info = {
        "subject_id": subject_id,
        "age_group": age_group,
        "lag_samples": sync.lag_samples,
        "peak_correlation": round(sync.peak_correlation, 6),
        "n_windows": len(rows) // 2,
    }
    return rows, info


# ---------------------------------------------------------------------------
# Histograms (plot-ready CSV, mirroring the paired/difference figures)

def _write_histograms(table: pd.DataFrame, out_dir: Path) -> None:
    wide = table.pivot_table(
        index=agreement.KEY_COLUMNS, columns="modality",
        values=list(measures.MEASURE_COLUMNS), aggfunc="first", dropna=False,
    )
    for measure in measures.MEASURE_COLUMNS:
        if (measure, "mic") not in wide.columns or (measure, "acc") not in wide.columns:
            continue
        mic_v = wide[(measure, "mic")]
        acc_v = wide[(measure, "acc")]
        both = mic_v.notna() & acc_v.notna()
        if not both.any():
            continue
        m = mic_v[both].to_numpy(float)
        a = acc_v[both].to_numpy(float)
        lo = float(min(m.min(), a.min()))
        hi = float(max(m.max(), a.max()))
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, HIST_BINS + 1)
        counts, _, _ = np.histogram2d(m, a, bins=[edges, edges])
        rows = []
        for i in range(HIST_BINS):
            for j in range(HIST_BINS):
                if counts[i, j] > 0:
                    rows.append(
                        {
                            "mic_bin_lo": edges[i],
                            "mic_bin_hi": edges[i + 1],
                            "acc_bin_lo": edges[j],
                            "acc_bin_hi": edges[j + 1],
                            "count": int(counts[i, j]),
                        }
                    )
        pd.DataFrame(
            rows, columns=["mic_bin_lo", "mic_bin_hi", "acc_bin_lo", "acc_bin_hi", "count"]
        ).to_csv(out_dir / f"hist2d_{measure}.csv", index=False)

        diff = a - m
        ages = wide.index.get_level_values("age_group")[both]
        span = float(max(abs(diff.min()), abs(diff.max()), 1e-9))
        dedges = np.linspace(-span, span, HIST_BINS + 1)
        rows = []
        for age in agreement.AGE_GROUPS:
            sel = ages == age
            if not sel.any():
                continue
            counts, _ = np.histogram(diff[sel], bins=dedges)
            for i in range(HIST_BINS):
                if counts[i] > 0:
                    rows.append(
                        {
                            "age_group": age,
                            "bin_lo": dedges[i],
                            "bin_hi": dedges[i + 1],
                            "count": int(counts[i]),
                        }
                    )
        pd.DataFrame(rows, columns=["age_group", "bin_lo", "bin_hi", "count"]).to_csv(
            out_dir / f"histdiff_{measure}.csv", index=False
        )


# ---------------------------------------------------------------------------

def run_analyze(cfg: RunConfig) -> int:
    """Full corpus analysis. Returns a process exit code."""
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        subjects = discover_subjects(cfg.corpus)
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2

    all_rows: list[dict] = []
    sync_infos: list[dict] = []
    skipped: list[dict] = []

    def safe(sub_dir: Path):
        try:
            return sub_dir.name, process_subject(sub_dir, cfg), None
        except Exception as exc:  # subject-level isolation
            return sub_dir.name, None, f"{type(exc).__name__}: {exc}"

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(safe, subjects))
    else:
        results = [safe(s) for s in subjects]
    for name, result, error in sorted(results, key=lambda r: r[0]):
        if error is not None:
            log.warning("skipping subject %s: %s", name, error)
            skipped.append({"subject_id": name, "error": error})
            continue
        rows, info = result
        all_rows.extend(rows)
        sync_infos.append(info)

    if len(sync_infos) < 3:
        log.error("only %d subjects processed successfully; need >= 3", len(sync_infos))
        return 2

    table = pd.DataFrame(all_rows)
    table = table.sort_values(
        ["subject_id", "segment_index", "window_index", "modality"]
    ).reset_index(drop=True)
    table.to_csv(out_dir / "window_measures.csv", index=False)

    filtered = agreement.exclude_outliers(table)
    sampled = agreement.sample_segments(
        filtered, cfg.segments_per_subject, cfg.seed, unit=cfg.sample_unit
    )
    summaries = agreement.summarize_subjects(sampled)
    try:
        icc_rows, bias_rows = agreement.build_reports(
            summaries, cfg.bias_gate_icc, cfg.bias_all_measures
        )
    except (InsufficientSubjectsError, CrymetricsError) as exc:
        log.error("report stage failed: %s", exc)
        return 2

    pd.DataFrame(
        [
            {
                "measure": r.measure,
                "scope": r.scope,
                "icc_a1": r.icc_a1,
                "icc_c1": r.icc_c1,
                "class_a1": r.classification_a1,
                "class_c1": r.classification_c1,
                "n": r.n_subjects,
            }
            for r in icc_rows
        ]
    ).to_csv(out_dir / "icc_report.csv", index=False)
    pd.DataFrame(
        [
            {
                "measure": r.measure,
                "age": r.age_group,
                "bias": r.bias,
                "t": r.t_stat,
                "p": r.p_value,
                "n": r.n,
                "degenerate": r.degenerate,
            }
            for r in bias_rows
        ],
        columns=["measure", "age", "bias", "t", "p", "n", "degenerate"],
    ).to_csv(out_dir / "bias_report.csv", index=False)

    _write_histograms(sampled, out_dir)
    octave = agreement.octave_error_rate(sampled)

    manifest = {
        "config": cfg.flat_dict(),
        "n_subjects_processed": len(sync_infos),
        "n_subjects_skipped": len(skipped),
        "n_window_rows": int(len(table)),
        "octave_errors": None
        if octave is None
        else {"halving_fraction": octave[0], "doubling_fraction": octave[1]},
        "skipped": skipped,
        "sync": sync_infos,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    )
    return 0


# ---------------------------------------------------------------------------
# Validation against synthetic ground truth

JITTER_CHECK_RANGE = (0.005, 0.05)
JITTER_TOL_REL = 0.20
F0_TOL_HZ = 1.0
LAG_TOL = 1


def run_validate(cfg: RunConfig) -> int:
    """Compare measured values against truth JSON; print a pass/fail table."""
    subjects = discover_subjects(cfg.corpus)
    if not subjects:
        log.error("no subjects under %s", cfg.corpus)
        return 2
    check_cfg = dataclasses.replace(cfg, smooth_periods=False)
    failures = 0
    checks = 0
    print(f"{'subject':<10} {'check':<14} {'measured':>12} {'expected':>12} {'verdict':>8}")
    for sub_dir in subjects:
        truth_path = sub_dir / "truth.json"
        if not truth_path.exists():
            log.error("%s: missing truth.json", sub_dir.name)
            return 2
        truth = GroundTruth.from_json(truth_path.read_text())
        rows, info = process_subject(sub_dir, check_cfg)

        def report(name, measured, expected, ok):
            nonlocal failures, checks
            checks += 1
            if not ok:
                failures += 1
            print(
                f"{sub_dir.name:<10} {name:<14} {measured:>12.4f} {expected:>12.4f}"
                f" {'pass' if ok else 'FAIL':>8}"
            )

        report(
            "lag_samples",
            info["lag_samples"],
            truth.lag_samples,
            abs(info["lag_samples"] - truth.lag_samples) <= LAG_TOL,
        )
        mic_rows = pd.DataFrame([r for r in rows if r["modality"] == "mic"])
        f0_measured = float(mic_rows["f0_hz"].dropna().mean()) if len(mic_rows) else float("nan")
        report(
            "mean_f0_hz",
            f0_measured,
            truth.f0_mean_hz,
            np.isfinite(f0_measured) and abs(f0_measured - truth.f0_mean_hz) <= F0_TOL_HZ,
        )
        lo, hi = JITTER_CHECK_RANGE
        if lo <= truth.jitter_cv_realized <= hi:
            j_measured = float(mic_rows["j_cv_pct"].dropna().mean()) / 100.0
            ok = (
                np.isfinite(j_measured)
                and abs(j_measured / truth.jitter_cv_realized - 1.0) <= JITTER_TOL_REL
            )
            report("jitter_cv", j_measured, truth.jitter_cv_realized, ok)
    print(f"{checks} checks, {failures} failures")
    return 0 if failures == 0 else 1
