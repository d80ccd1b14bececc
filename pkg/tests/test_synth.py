import hashlib
import json

import numpy as np
import pytest

from crymetrics import (
    GroundTruth,
    SynthSpec,
    estimate_lag,
    synthesize_corpus,
    synthesize_pair,
)


def dir_hashes(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestSynthSpec:
    def test_perturbation_bounds(self):
        with pytest.raises(ValueError):
            SynthSpec(jitter_cv=0.3)
        with pytest.raises(ValueError):
            SynthSpec(shimmer_cv=-0.1)
        with pytest.raises(ValueError):
            SynthSpec(duration_s=0.2)
        with pytest.raises(ValueError):
            SynthSpec(f0_hz=150.0)


class TestSynthesizePair:
    def test_perturbation_free_is_clean(self):
        spec = SynthSpec(duration_s=1.5, jitter_cv=0.0, shimmer_cv=0.0, seed=3)
        mic, acc, truth = synthesize_pair(spec)
        assert truth.jitter_cv_realized < 0.002  # only grid quantization left
        assert truth.shimmer_cv_realized == 0.0
        assert mic.duration_s == acc.duration_s

    def test_lag_recovered_by_aligner(self):
        spec = SynthSpec(duration_s=2.0, lag_samples=137, jitter_cv=0.01, seed=5)
        mic, acc, truth = synthesize_pair(spec)
        assert truth.lag_samples == 137
        sync = estimate_lag(mic, acc, max_lag_s=0.5)
        assert sync.lag_samples == 137

    def test_negative_lag(self):
        spec = SynthSpec(duration_s=2.0, lag_samples=-250, jitter_cv=0.01, seed=6)
        mic, acc, truth = synthesize_pair(spec)
        sync = estimate_lag(mic, acc, max_lag_s=0.5)
        assert sync.lag_samples == -250

    def test_truth_internal_consistency(self):
        spec = SynthSpec(duration_s=2.0, jitter_cv=0.03, shimmer_cv=0.05, seed=9)
        _, _, truth = synthesize_pair(spec)
        periods = np.diff(truth.instants_s)
        np.testing.assert_allclose(periods, truth.periods_s, atol=1e-12)
        realized = np.std(truth.periods_s, ddof=1) / np.mean(truth.periods_s)
        assert realized == pytest.approx(truth.jitter_cv_realized, rel=1e-9)
        # uniform draws with requested std: realized CV near target
        assert truth.jitter_cv_realized == pytest.approx(0.03, rel=0.15)
        assert truth.shimmer_cv_realized == pytest.approx(0.05, rel=0.15)

    def test_copy_mode_bit_exact(self):
        spec = SynthSpec(duration_s=1.0, jitter_cv=0.02, hnr_db=20.0,
                         lag_samples=99, copy_mic_to_acc=True, seed=2)
        mic, acc, truth = synthesize_pair(spec)
        np.testing.assert_array_equal(mic.samples, acc.samples)
        assert truth.lag_samples == 0

    def test_acc_shimmer_scale_recorded(self):
        spec = SynthSpec(duration_s=1.0, shimmer_cv=0.08, acc_shimmer_scale=0.5, seed=4)
        _, _, truth = synthesize_pair(spec)
        mic_dev = np.asarray(truth.gains_mic) - 1.0
        acc_dev = np.asarray(truth.gains_acc) - 1.0
        np.testing.assert_allclose(acc_dev, 0.5 * mic_dev, atol=1e-12)

    def test_deterministic_in_seed(self):
        spec = SynthSpec(duration_s=1.0, jitter_cv=0.02, shimmer_cv=0.04,
                         hnr_db=15.0, seed=11)
        a = synthesize_pair(spec)
        b = synthesize_pair(spec)
        np.testing.assert_array_equal(a[0].samples, b[0].samples)
        np.testing.assert_array_equal(a[1].samples, b[1].samples)

    def test_truth_json_roundtrip(self):
        spec = SynthSpec(duration_s=1.0, seed=1)  # hnr inf exercises encoding
        _, _, truth = synthesize_pair(spec)
        back = GroundTruth.from_json(truth.to_json())
        assert back == truth


class TestSynthesizeCorpus:
    def test_deterministic_corpus(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        synthesize_corpus(a, 4, seed=13, base=SynthSpec(duration_s=1.0))
        synthesize_corpus(b, 4, seed=13, base=SynthSpec(duration_s=1.0))
        assert dir_hashes(a) == dir_hashes(b)

    def test_layout_and_metadata(self, tmp_path):
        dirs = synthesize_corpus(tmp_path / "c", 4, seed=1, base=SynthSpec(duration_s=1.0))
        assert len(dirs) == 4
        for d in dirs:
            for name in ("mic.wav", "acc.wav", "labels.TextGrid", "meta.json", "truth.json"):
                assert (d / name).exists()
        ages = [json.loads((d / "meta.json").read_text())["age_group"] for d in dirs]
        assert set(ages) == {"m4", "m12"}

    def test_minimum_size_enforced(self, tmp_path):
        with pytest.raises(ValueError):
            synthesize_corpus(tmp_path / "x", 2, seed=0)
