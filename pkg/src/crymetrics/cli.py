"""Command-line interface: analyze, synth, validate."""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .synth import SynthSpec, synthesize_corpus


def _add_common(parser):
    parser.add_argument("--corpus", help="corpus root directory")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--segments-per-subject", type=int, dest="segments_per_subject")
    parser.add_argument("--rms-gate", type=float, dest="rms_gate")
    parser.add_argument("--pitch-floor", type=float, dest="pitch.floor_hz")
    parser.add_argument("--pitch-ceiling", type=float, dest="pitch.ceiling_hz")
    parser.add_argument("--tier")
    parser.add_argument("--max-lag", type=float, dest="max_lag_s")
    parser.add_argument("--workers", type=int)


def _config_from(args) -> pipeline.RunConfig:
    file_values = pipeline.parse_config_file(args.config) if args.config else {}
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config", "func") and value is not None
    }
    return pipeline.make_config(file_values, overrides)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(
        prog="crymetrics",
        description="Paired microphone/accelerometer cry analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="run the full agreement pipeline")
    _add_common(p_analyze)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--subjects", type=int, default=10)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--duration", type=float, default=3.0)
    p_synth.add_argument(
        "--copy-mic-to-acc", action="store_true",
        help="write the ACC channel as an exact copy of MIC",
    )
    p_synth.add_argument(
        "--acc-shimmer-scale", type=float, default=1.0,
        help="scale factor on ACC per-cycle gain deviations",
    )

    p_validate = sub.add_parser("validate", help="check measured values against truth JSON")
    _add_common(p_validate)

    args = parser.parse_args(argv)
    if args.command == "analyze":
        cfg = _config_from(args)
        if not cfg.corpus or not cfg.out:
            parser.error("analyze requires --corpus and --out")
        return pipeline.run_analyze(cfg)
    if args.command == "synth":
        base = SynthSpec(duration_s=args.duration)
        written = synthesize_corpus(
            args.out,
            args.subjects,
            seed=args.seed,
            base=base,
            copy_mic_to_acc=args.copy_mic_to_acc,
            acc_shimmer_scale=args.acc_shimmer_scale,
        )
        print(f"wrote {len(written)} subjects under {args.out}")
        return 0
    if args.command == "validate":
        cfg = _config_from(args)
        if not cfg.corpus:
            parser.error("validate requires --corpus")
        return pipeline.run_validate(cfg)
    return 2


if __name__ == "__main__":
    sys.exit(main())
