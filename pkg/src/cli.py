"""
Command-line entry point.

    python3 -m src.cli [-c config/srs_sense.ini] <command> ...

Commands: simulate, estimate, track, score, dataset, train, eval.
Exit codes: 0 success, 2 invalid config or input value, 3 corrupt input,
4 insufficient data, 1 anything else raised by the application.
"""
import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from . import __version__
from .artifacts import RunManifest, atomic_write_bytes, atomic_write_csv, atomic_write_json, manifest_path
from .config_loader import load_config, load_train_config, read_json_document
from .csi.trace_io import encode_trace, read_trace
from .exceptions import AppBaseException, ConfigError, CorruptTraceError
from .logger import setup_logger
from .movement.dataset import Dataset, samples_from_detections
from .movement.detector import EnergyConfig
from .nn.model import load_model, save_model
from .nn.training import evaluate, train
from .respiration.estimator import BandConfig, estimate_respiration, track_respiration
from .respiration.scoring import score_estimates
from .sim.channel import simulate
from .sim.config import SimulationConfig
from .sim.truth import read_truth, truth_sidecar_path
from .threads import run_per_file

SEED_ENV = "SRS_SENSE_SEED"


def _pair(text: str) -> Tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got '{text}'")
    return a, b


def resolve_seed(flag: Optional[int], document: Dict[str, Any], ini_seed: int) -> int:
    """--seed, then SRS_SENSE_SEED, then the document's own seed, then [run] SEED."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(key=SEED_ENV, value=env, message=f"{SEED_ENV} must be an integer, got '{env}'")
    if "seed" in document:
        return int(document["seed"])
    return ini_seed


def _band(args, cfg: Dict[str, Any], sample_rate_hz: float) -> BandConfig:
    low, high = args.band if args.band else (cfg["LOW_HZ"], cfg["HIGH_HZ"])
    return BandConfig(low, high, sample_rate_hz)


def _emit(doc: Any, out: Optional[str]) -> None:
    if out:
        atomic_write_json(out, doc)
    else:
        print(json.dumps(doc, indent=2))


def _finish(manifest: RunManifest, started: float, anchor: str, logger) -> None:
    manifest.wall_time_s = round(time.perf_counter() - started, 3)
    path = manifest.write(manifest_path(anchor))
    logger.info(f"Wrote manifest {path}")


def cmd_simulate(args, cfg, logger) -> int:
    started = time.perf_counter()
    document = read_json_document(args.config_json)
    seed = resolve_seed(args.seed, document, cfg["SEED"])
    config = SimulationConfig.from_dict({**document, "seed": seed})
    rec, truth = simulate(config)

    out = Path(args.out)
    atomic_write_bytes(out, encode_trace(rec))
    sidecar = atomic_write_json(truth_sidecar_path(out), truth.to_dict())
    logger.info(f"Wrote trace {out} ({rec.frame_count} frames) and {sidecar}")

    manifest = RunManifest("simulate", __version__, seed=seed, outputs=[str(out), str(sidecar)])
    manifest.set_config(args.config_json)
    _finish(manifest, started, str(out), logger)
    return 0


def cmd_estimate(args, cfg, logger) -> int:
    started = time.perf_counter()
    rec = read_trace(args.trace)
    band = _band(args, cfg, rec.sample_rate_hz)
    estimate = estimate_respiration(
        rec, args.window, band,
        ref_antenna=cfg["REF_ANTENNA"] if args.ref_antenna is None else args.ref_antenna,
        min_window_s=cfg["MIN_WINDOW_S"],
    )
    doc = {**estimate.to_dict(), "trace": str(args.trace)}
    _emit(doc, args.out)

    outputs = [args.out] if args.out else []
    if args.emit_series:
        start = estimate.window[0]
        n = len(estimate.signals.x_a)
        series = pd.DataFrame({
            "t": [start + i * rec.frame_interval for i in range(n)],
            "x_a": estimate.signals.x_a,
            "x_p": estimate.signals.x_p,
        })
        atomic_write_csv(args.emit_series, series)
        outputs.append(args.emit_series)

    if outputs:
        manifest = RunManifest("estimate", __version__, outputs=outputs)
        manifest.add_input(args.trace)
        _finish(manifest, started, outputs[0], logger)
    return 0


def cmd_track(args, cfg, logger) -> int:
    started = time.perf_counter()
    rec = read_trace(args.trace)
    band = _band(args, cfg, rec.sample_rate_hz)
    estimates = track_respiration(rec, args.window_s, args.hop_s, band, cfg["REF_ANTENNA"], cfg["MIN_WINDOW_S"])
    table = pd.DataFrame([
        {
            "window_start_s": e.window[0],
            "window_end_s": e.window[1],
            "rate_bpm": e.rate_bpm,
            "chosen_modality": e.chosen_modality.value,
            "q_amplitude": e.amplitude.q_spec,
            "q_phase": e.phase.q_spec,
        }
        for e in estimates
    ])
    if args.out:
        atomic_write_csv(args.out, table)
        manifest = RunManifest("track", __version__, outputs=[args.out])
        manifest.add_input(args.trace)
        _finish(manifest, started, args.out, logger)
    else:
        print(table.to_csv(index=False), end="")
    return 0


def cmd_score(args, cfg, logger) -> int:
    rows = []
    for path in sorted(args.estimates):
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            trace = doc["trace"]
            rate = float(doc["rate_bpm"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise CorruptTraceError(path, f"not an estimate document: {e}")
        truth = read_truth(trace)
        if truth.respiration_rate_bpm is None:
            logger.warning(f"{trace}: respiration disabled in truth, skipped")
            continue
        rows.append({"trace": trace, "rate_bpm": rate, "truth_bpm": truth.respiration_rate_bpm,
                     "location": truth.location})
    table = score_estimates(rows, args.tolerance, args.group_by)
    if args.out:
        atomic_write_csv(args.out, table)
    else:
        print(table.to_csv(index=False), end="")
    return 0


def cmd_dataset(args, cfg, logger) -> int:
    started = time.perf_counter()
    energy = EnergyConfig(cfg["WINDOW_W"], cfg["THRESHOLD_K"], cfg["MIN_EVENT_S"], cfg["MERGE_GAP_S"])
    baseline = args.baseline if args.baseline else (0.0, cfg["BASELINE_S"])

    def handle(path: Path):
        return samples_from_detections(
            read_trace(path), read_truth(path), str(path), energy, baseline,
            cfg["FREQ_BINS"], cfg["TIME_STEPS"], cfg["AGC_CORRECTION"],
        )

    outcomes = run_per_file(args.traces, handle, cfg["WORKERS"], logger)
    failures = [result for _, result in outcomes if isinstance(result, AppBaseException)]
    parts = [result for _, result in outcomes if not isinstance(result, AppBaseException)]
    if parts:
        dataset = Dataset.from_traces(parts)
        missed = [m for p in parts for m in p.missed]
        unmatched = [u for p in parts for u in p.unmatched]
        written = dataset.save(args.out, missed, unmatched)
        logger.info(f"Wrote {len(dataset)} samples to {args.out} ({len(missed)} truth events missed)")

        manifest = RunManifest("dataset", __version__, outputs=[str(written)])
        for path, _ in outcomes:
            manifest.add_input(path)
        _finish(manifest, started, args.out, logger)
    if failures:
        raise failures[0]
    return 0


def cmd_train(args, cfg, logger) -> int:
    started = time.perf_counter()
    document = read_json_document(args.train_json)
    seed = resolve_seed(args.seed, document, cfg["SEED"])
    config = load_train_config(args.train_json)
    config = type(config).from_dict({**config.to_dict(), "seed": seed})

    dataset = Dataset.load(args.dataset)
    train_set, test_set = dataset.split(config.test_fraction, seed=seed)
    logger.info(f"Training on {len(train_set)} samples, holding out {len(test_set)}")
    params, report = train(train_set, config, test_set, progress=not args.quiet)

    save_model(args.out_model, params)
    outputs = [args.out_model]
    report_doc = {**report.to_dict(), "train_count": len(train_set), "test_count": len(test_set), "seed": seed}
    if args.report:
        atomic_write_json(args.report, report_doc)
        outputs.append(args.report)

    manifest = RunManifest("train", __version__, seed=seed, outputs=outputs)
    manifest.set_config(args.train_json)
    manifest.add_input(Path(args.dataset) / "manifest.json")
    _finish(manifest, started, args.out_model, logger)
    return 0


def cmd_eval(args, cfg, logger) -> int:
    params = load_model(args.model)
    dataset = Dataset.load(args.dataset)
    result = evaluate(params, dataset, args.group_by)
    result["model"] = str(args.model)
    _emit(result, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Uplink CSI sleep sensing toolkit")
    parser.add_argument(
        "-c", "--config", default="config/srs_sense.ini",
        help="config/srs_sense.ini"
    )
    parser.add_argument("--log-level", default=None, help="overrides [logging] LOG_LEVEL")
    parser.add_argument("--log-file", default=None, help="overrides [logging] LOG_FILE")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a CSI trace and its truth sidecar")
    p.add_argument("config_json")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the respiration rate of a trace")
    p.add_argument("trace")
    p.add_argument("--window", type=_pair, default=None, help="start,end in seconds")
    p.add_argument("--band", type=_pair, default=None, help="low,high in Hz")
    p.add_argument("--out", default=None)
    p.add_argument("--emit-series", default=None, help="CSV of the filtered series")
    p.add_argument("--ref-antenna", type=int, default=None, help="overrides [run] REF_ANTENNA")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("track", help="respiration rate over sliding windows")
    p.add_argument("trace")
    p.add_argument("--window-s", type=float, default=30.0)
    p.add_argument("--hop-s", type=float, default=10.0)
    p.add_argument("--band", type=_pair, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("score", help="accuracy of estimate documents against truth")
    p.add_argument("estimates", nargs="+")
    p.add_argument("--tolerance", type=float, default=0.10)
    p.add_argument("--group-by", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("dataset", help="cut labelled classifier samples from traces")
    p.add_argument("traces", nargs="+")
    p.add_argument("--baseline", type=_pair, default=None, help="motion-free start,end in seconds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train the movement classifier")
    p.add_argument("dataset")
    p.add_argument("train_json")
    p.add_argument("--out-model", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quiet", action="store_true", help="no progress bar")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--group-by", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except AppBaseException as e:
        print(e, file=sys.stderr)
        return e.exit_code

    log_file = args.log_file if args.log_file is not None else cfg["LOG_FILE"]
    logger = setup_logger("src", args.log_level or cfg["LOG_LEVEL"], log_file or None)
    try:
        return args.func(args, cfg, logger)
    except AppBaseException as e:
        logger.error(str(e))
        print(e, file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
