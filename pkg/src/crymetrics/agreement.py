"""Cross-modal agreement statistics: ICC, bias t-tests, octave-error rates.

Operates on the pooled window-measure table (one row per window x modality)
and subject-level summaries derived from it.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import special

from .errors import DegenerateDataError, InsufficientSubjectsError
from .measures import MEASURE_COLUMNS

AGE_GROUPS = ("m4", "m12")
KEY_COLUMNS = ["subject_id", "age_group", "segment_index", "window_index"]


@dataclass
class SubjectSummary:
    subject_id: str
    age_group: str
    # measure -> (mic_mean, acc_mean); absent measures are missing keys
    means: dict[str, tuple[float, float]] = field(default_factory=dict)
    n_segments_used: int = 0


@dataclass(frozen=True)
class IccResult:
    measure: str
    scope: str  # "overall", "m4" or "m12"
    icc_a1: float
    icc_c1: float
    n_subjects: int
    classification_a1: str
    classification_c1: str


@dataclass(frozen=True)
class BiasResult:
    measure: str
    age_group: str
    bias: float  # ACC - MIC, measure units
    t_stat: float
    p_value: float
    n: int
    degenerate: bool = False


def classify_icc(value: float) -> str:
    """Koo-Li bands: <0.50 poor, 0.50-0.75 moderate, 0.75-0.90 good, >0.90 excellent."""
    if value < 0.50:
        return "poor"
    if value < 0.75:
        return "moderate"
    if value <= 0.90:
        return "good"
    return "excellent"


# ---------------------------------------------------------------------------
# Table-level filtering

def exclude_outliers(rows: pd.DataFrame, n_sigma: float = 3.0) -> pd.DataFrame:
    """Blank values more than ``n_sigma`` sample std from the grand mean.

    Applied independently per measure x modality; only the offending cell is
    set absent, the row stays.
    """
    out = rows.copy()
    for measure in MEASURE_COLUMNS:
        if measure not in out.columns:
            continue
        for modality in ("mic", "acc"):
            sel = out["modality"] == modality
            values = out.loc[sel, measure]
            ok = values.dropna()
            if len(ok) < 2:
                continue
            mean = ok.mean()
            std = ok.std(ddof=1)
            if std == 0 or not np.isfinite(std):
                continue
            bad = (values - mean).abs() > n_sigma * std
            out.loc[sel & bad.fillna(False), measure] = np.nan
    return out


def _subject_rng(seed: int, subject_id: str) -> np.random.Generator:
    digest = hashlib.sha256(subject_id.encode()).digest()
    sub = int.from_bytes(digest[:8], "big")
    return np.random.default_rng([seed, sub])


def sample_segments(
    rows: pd.DataFrame, k: int, seed: int, unit: str = "segments"
) -> pd.DataFrame:
    """Keep at most ``k`` randomly chosen segments (or windows) per subject.

    Selection is deterministic in (seed, subject_id) and independent of row
    order. Subjects with at most ``k`` units keep everything.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    if unit not in ("segments", "windows"):
        raise ValueError(f"unknown sampling unit {unit!r}")
    cols = ["segment_index"] if unit == "segments" else ["segment_index", "window_index"]
    keep_masks = []
    for subject_id, group in rows.groupby("subject_id", sort=True):
        units = group[cols].drop_duplicates().sort_values(cols)
        if len(units) <= k:
            keep_masks.append(group.index)
            continue
        rng = _subject_rng(seed, str(subject_id))
        chosen = rng.choice(len(units), size=k, replace=False)
        chosen_units = units.iloc[np.sort(chosen)]
        merged = group.reset_index().merge(chosen_units, on=cols, how="inner")
        keep_masks.append(pd.Index(merged["index"]))
    if not keep_masks:
        return rows.iloc[0:0]
    keep = keep_masks[0]
    for idx in keep_masks[1:]:
        keep = keep.union(idx)
    return rows.loc[rows.index.isin(keep)].copy()


def summarize_subjects(rows: pd.DataFrame) -> list[SubjectSummary]:
    """Per-subject mean of each measure over windows where BOTH modalities
    have the measure present."""
    if rows.empty:
        return []
    wide = rows.pivot_table(
        index=KEY_COLUMNS, columns="modality", values=list(MEASURE_COLUMNS),
        aggfunc="first", dropna=False,
    )
    summaries = []
    for (subject_id, age_group), grp in wide.groupby(level=[0, 1], sort=True):
        summary = SubjectSummary(str(subject_id), str(age_group))
        used_segments: set[int] = set()
        for measure in MEASURE_COLUMNS:
            if (measure, "mic") not in grp.columns or (measure, "acc") not in grp.columns:
                continue
            mic_v = grp[(measure, "mic")]
            acc_v = grp[(measure, "acc")]
            both = mic_v.notna() & acc_v.notna()
            if both.any():
                summary.means[measure] = (
                    float(mic_v[both].mean()),
                    float(acc_v[both].mean()),
                )
                used_segments.update(
                    idx[2] for idx in grp.index[both]
                )  # segment_index position in KEY_COLUMNS
        summary.n_segments_used = len(used_segments)
        if summary.means:
            summaries.append(summary)
    return summaries


# ---------------------------------------------------------------------------
# Core statistics

def icc(pairs) -> tuple[float, float]:
    """ICC(A,1) and ICC(C,1) from a two-way ANOVA on an (n, 2) table.

    Rows are subjects, columns the two modalities:
        icc_c1 = (MSR - MSE) / (MSR + (k-1) MSE)
        icc_a1 = (MSR - MSE) / (MSR + (k-1) MSE + (k/n)(MSC - MSE))
    """
    data = np.asarray(pairs, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("expected an (n, 2) table")
    n, k = data.shape
    if n < 3:
        raise InsufficientSubjectsError(f"ICC needs >= 3 subjects, got {n}")
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite values in ICC table")
    grand = data.mean()
    row_means = data.mean(axis=1)
    col_means = data.mean(axis=0)
    ss_total = float(((data - grand) ** 2).sum())
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    ss_err = ss_total - ss_rows - ss_cols
    if ss_total <= 0.0:
        raise DegenerateDataError("zero total variance in ICC table")
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = max(ss_err, 0.0) / ((n - 1) * (k - 1))
    den_c = msr + (k - 1) * mse
    den_a = msr + (k - 1) * mse + (k / n) * (msc - mse)
    if den_c == 0.0 or den_a == 0.0:
        raise DegenerateDataError("degenerate ICC denominator")
    return (msr - mse) / den_a, (msr - mse) / den_c


def paired_t(pairs) -> tuple[float, float, float, int, bool]:
    """Paired t-test of ACC - MIC differences.

    Returns (bias, t, p, n, degenerate). The two-sided p-value comes from the
    regularized incomplete beta form of the Student-t tail.
    """
    data = np.asarray(pairs, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("expected an (n, 2) table")
    n = data.shape[0]
    if n < 2:
        raise ValueError("paired t-test needs n >= 2")
    d = data[:, 1] - data[:, 0]
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if bias == 0.0:
            return 0.0, 0.0, 1.0, n, True
        return bias, math.copysign(math.inf, bias), 0.0, n, True
    t = bias / (sd / math.sqrt(n))
    dof = n - 1
    p = float(special.betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return bias, t, p, n, False


def octave_error_rate(rows: pd.DataFrame, tol: float = 0.05):
    """Fractions of paired windows whose ACC/MIC F0 ratio sits at 0.5 or 2.

    A ratio within ``tol`` (relative) of 0.5 counts as halving, of 2.0 as
    doubling. Returns (halving_fraction, doubling_fraction), or None when no
    window has F0 in both modalities.
    """
    wide = rows.pivot_table(
        index=KEY_COLUMNS, columns="modality", values="f0_hz",
        aggfunc="first", dropna=False,
    )
    if "mic" not in wide.columns or "acc" not in wide.columns:
        return None
    both = wide["mic"].notna() & wide["acc"].notna() & (wide["mic"] > 0)
    if not both.any():
        return None
    ratio = (wide.loc[both, "acc"] / wide.loc[both, "mic"]).to_numpy()
    halving = float(np.mean(np.abs(ratio / 0.5 - 1.0) <= tol))
    doubling = float(np.mean(np.abs(ratio / 2.0 - 1.0) <= tol))
    return halving, doubling


# ---------------------------------------------------------------------------
# Report assembly

def _pairs_for(summaries, measure, age_group=None):
    rows = [
        s.means[measure]
        for s in summaries
        if measure in s.means and (age_group is None or s.age_group == age_group)
    ]
    return np.asarray(rows, dtype=float)


def build_reports(
    summaries: list[SubjectSummary],
    bias_gate_icc: float = 0.75,
    bias_all_measures: bool = False,
) -> tuple[list[IccResult], list[BiasResult]]:
    """ICC rows per measure x {overall, m4, m12} and bias rows per age group.

    Bias t-tests run only for measures whose overall ICC(A,1) falls below
    ``bias_gate_icc`` unless ``bias_all_measures`` overrides. Age-scoped ICC
    rows are omitted (not an error) when an age group has too few subjects
    or degenerate data; the overall scope propagates its errors.
    """
    if not summaries:
        raise InsufficientSubjectsError("no subject summaries")
    icc_rows: list[IccResult] = []
    bias_rows: list[BiasResult] = []
    for measure in MEASURE_COLUMNS:
        pairs = _pairs_for(summaries, measure)
        if len(pairs) == 0:
            continue
        a1, c1 = icc(pairs)  # overall: propagate errors
        icc_rows.append(
            IccResult(measure, "overall", a1, c1, len(pairs),
                      classify_icc(a1), classify_icc(c1))
        )
        for age in AGE_GROUPS:
            age_pairs = _pairs_for(summaries, measure, age)
            if len(age_pairs) < 3:
                continue
            try:
                age_a1, age_c1 = icc(age_pairs)
            except DegenerateDataError:
                continue
            icc_rows.append(
                IccResult(measure, age, age_a1, age_c1, len(age_pairs),
                          classify_icc(age_a1), classify_icc(age_c1))
            )
        if bias_all_measures or a1 < bias_gate_icc:
            for age in AGE_GROUPS:
                age_pairs = _pairs_for(summaries, measure, age)
                if len(age_pairs) < 2:
                    continue
                bias, t, p, n, degenerate = paired_t(age_pairs)
                bias_rows.append(BiasResult(measure, age, bias, t, p, n, degenerate))
    return icc_rows, bias_rows
