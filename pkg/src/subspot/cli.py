"""Command-line front end for reproducible batch runs.

Subcommands: ``simulate`` (synthetic corpus + ground truth), ``merge``
(frame records -> manifest), ``filter`` (one noise-filter iteration),
``loop`` (the full iterative filter), ``eval`` (manifest vs ground truth),
``cer`` (two text files -> CER and error breakdown).

Exit codes: 0 success, 1 usage error, 2 data error, 3 oracle error.
Every run echoes its effective configuration and a config digest on
stderr; identical configs and inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys

from .curation import (
    ConfigError,
    Manifest,
    ManifestError,
    ManifestMetadata,
    filter_iteration,
    load_manifest,
    manifest_digest,
    run_curation_loop,
    score_noise,
    serialize_manifest,
    serialize_report,
    write_manifest,
)
from .frames import (
    DEFAULT_FRAME_INTERVAL,
    DEFAULT_JITTER_TOLERANCE,
    GapError,
    OrderError,
    ParseError,
    dump_frames,
    iter_lines,
    load_frames,
)
from .merging import HEURISTIC, MODEL, MergeConfig, merge_corpus
from .oracle import (
    NoisyChannelConfig,
    OracleError,
    SimulatedOracle,
    SubprocessOracle,
)
from .simulate import (
    DEFAULT_ALPHABET,
    SyntheticCorpusConfig,
    dump_ground_truth,
    evaluate_merge,
    generate_corpus,
    load_ground_truth,
)
from .textmetrics import (
    DEFAULT_NORMALIZATION,
    DegenerateInputError,
    cer,
    error_breakdown,
    normalize,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ORACLE = 3

ORACLE_CMD_ENV = "SUBSPOT_ORACLE_CMD"


class UsageError(Exception):
    """Bad invocation: flags, config file, or referenced paths."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the exit-code contract
    # reserves 2 for data errors, so usage problems become exceptions.
    def error(self, message):
        raise UsageError(message)


_ORACLE_DEFAULTS = {
    "oracle_cmd": None,
    "oracle_truth": None,
    "oracle_sub_rate": 0.0,
    "oracle_ins_rate": 0.0,
    "oracle_del_rate": 0.0,
    "oracle_seed": 0,
    "oracle_alphabet": DEFAULT_ALPHABET,
    "oracle_timeout": 30.0,
}

_DEFAULTS: dict[str, dict] = {
    "simulate": {
        "seed": 0,
        "num_videos": 10,
        "subtitles_per_video": 12,
        "gap_probability": 0.2,
        "sub_rate": 0.0,
        "ins_rate": 0.0,
        "del_rate": 0.0,
        "noise_seed": 0,
        "alphabet": DEFAULT_ALPHABET,
        "min_subtitle_duration": 1.0,
        "max_subtitle_duration": 6.0,
        "min_gap_duration": 0.5,
        "max_gap_duration": 3.0,
        "min_transcript_length": 4,
        "max_transcript_length": 20,
        "interval": DEFAULT_FRAME_INTERVAL,
        "out": None,
        "truth": None,
        "force": False,
    },
    "merge": {
        "frames": None,
        "out": None,
        "mode": HEURISTIC,
        "red_threshold": 0.3,
        "max_duration": 20.0,
        "min_duration": 0.3,
        "interval": DEFAULT_FRAME_INTERVAL,
        "jitter_tolerance": DEFAULT_JITTER_TOLERANCE,
        "domain": None,
        "jobs": os.cpu_count() or 1,
        "force": False,
        **_ORACLE_DEFAULTS,
    },
    "filter": {
        "manifest": None,
        "out": None,
        "report": None,
        "gamma": 0.01,
        "jobs": os.cpu_count() or 1,
        "force": False,
        **_ORACLE_DEFAULTS,
    },
    "loop": {
        "manifest": None,
        "out_dir": None,
        "gamma": 0.01,
        "iterations": 12,
        "jobs": os.cpu_count() or 1,
        "force": False,
        **_ORACLE_DEFAULTS,
    },
    "eval": {
        "manifest": None,
        "truth": None,
        "iou": 0.5,
    },
    "cer": {
        "reference": None,
        "hypothesis": None,
    },
}


def _add_oracle_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_argument_group("oracle backend")
    group.add_argument("--oracle-cmd", help="shell command for a line-protocol ASR backend "
                       f"(falls back to ${ORACLE_CMD_ENV})")
    group.add_argument("--oracle-truth", help="ground-truth file powering the simulated oracle")
    group.add_argument("--oracle-sub-rate", type=float, help="simulated oracle substitution rate")
    group.add_argument("--oracle-ins-rate", type=float, help="simulated oracle insertion rate")
    group.add_argument("--oracle-del-rate", type=float, help="simulated oracle deletion rate")
    group.add_argument("--oracle-seed", type=int, help="simulated oracle channel seed")
    group.add_argument("--oracle-alphabet", help="simulated oracle corruption alphabet")
    group.add_argument("--oracle-timeout", type=float, help="per-request backend timeout, seconds")


def build_parser() -> _Parser:
    parser = _Parser(prog="subspot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("simulate", help="generate a synthetic frame corpus with ground truth")
    p.add_argument("--config", help="JSON file of option defaults; flags override")
    p.add_argument("--seed", type=int)
    p.add_argument("--num-videos", type=int)
    p.add_argument("--subtitles-per-video", type=int)
    p.add_argument("--gap-probability", type=float)
    p.add_argument("--sub-rate", type=float, help="OCR substitution rate")
    p.add_argument("--ins-rate", type=float, help="OCR insertion rate")
    p.add_argument("--del-rate", type=float, help="OCR deletion rate")
    p.add_argument("--noise-seed", type=int)
    p.add_argument("--alphabet")
    p.add_argument("--min-subtitle-duration", type=float)
    p.add_argument("--max-subtitle-duration", type=float)
    p.add_argument("--min-gap-duration", type=float)
    p.add_argument("--max-gap-duration", type=float)
    p.add_argument("--min-transcript-length", type=int)
    p.add_argument("--max-transcript-length", type=int)
    p.add_argument("--interval", type=float, help="frame sampling interval, seconds")
    p.add_argument("--out", help="frame-record output path, '-' for stdout")
    p.add_argument("--truth", help="ground-truth output path")
    p.add_argument("--force", action="store_true", default=None)

    p = sub.add_parser("merge", help="merge frame records into an utterance manifest")
    p.add_argument("--config")
    p.add_argument("--frames", help="frame-record input path, '-' for stdin")
    p.add_argument("--out", help="manifest output path, '-' for stdout")
    p.add_argument("--mode", choices=[HEURISTIC, MODEL])
    p.add_argument("--red-threshold", type=float)
    p.add_argument("--max-duration", type=float)
    p.add_argument("--min-duration", type=float)
    p.add_argument("--interval", type=float)
    p.add_argument("--jitter-tolerance", type=float)
    p.add_argument("--domain", help="domain tag recorded in manifest metadata")
    p.add_argument("--jobs", type=int)
    p.add_argument("--force", action="store_true", default=None)
    _add_oracle_flags(p)

    p = sub.add_parser("filter", help="run one noise-filter iteration over a manifest")
    p.add_argument("--config")
    p.add_argument("--manifest", help="input manifest path, '-' for stdin")
    p.add_argument("--out", help="filtered manifest output path, '-' for stdout")
    p.add_argument("--report", help="filter report output path")
    p.add_argument("--gamma", type=float, help="drop ratio in [0, 1)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--force", action="store_true", default=None)
    _add_oracle_flags(p)

    p = sub.add_parser("loop", help="run the full iterative curation loop")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--out-dir", help="directory for per-iteration manifests and reports")
    p.add_argument("--gamma", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--force", action="store_true", default=None)
    _add_oracle_flags(p)

    p = sub.add_parser("eval", help="score a manifest against ground truth")
    p.add_argument("--config")
    p.add_argument("--manifest", help="utterance manifest path, '-' for stdin")
    p.add_argument("--truth", help="ground-truth path")
    p.add_argument("--iou", type=float, help="matching IoU threshold")

    p = sub.add_parser("cer", help="character error rate between two text files")
    p.add_argument("reference", nargs="?")
    p.add_argument("hypothesis", nargs="?")

    return parser


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        _require_inputs([config_path])
        try:
            with open(config_path, encoding="utf-8") as fp:
                file_config = json.load(fp)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {config_path}: {exc}") from exc
        if not isinstance(file_config, dict):
            raise UsageError(f"config file {config_path} must hold a JSON object")
        for key, value in file_config.items():
            key = key.replace("-", "_")
            if key not in resolved:
                raise UsageError(f"config file {config_path}: unknown key {key!r}")
            resolved[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _echo_config(command: str, resolved: dict) -> None:
    payload = json.dumps(
        {"subcommand": command, **resolved}, ensure_ascii=False, sort_keys=True
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]
    print(f"config: {payload}", file=sys.stderr)
    print(f"config digest: {digest}", file=sys.stderr)


def _require_inputs(paths: list[str | None]) -> None:
    for path in paths:
        if path and path != "-" and not os.path.exists(path):
            raise UsageError(f"input path does not exist: {path}")


def _check_output(path: str | None, force: bool) -> None:
    if path and path != "-" and os.path.exists(path) and not force:
        raise UsageError(f"output exists: {path} (use --force to overwrite)")


@contextlib.contextmanager
def _open_output(path: str, force: bool):
    if path == "-":
        yield sys.stdout
        return
    _check_output(path, force)
    with open(path, "w", encoding="utf-8") as fp:
        yield fp


def _usage_guard(builder, *args, **kwargs):
    # Config dataclass validation errors are invocation problems.
    try:
        return builder(*args, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _build_oracle(resolved: dict):
    command = resolved.get("oracle_cmd") or os.environ.get(ORACLE_CMD_ENV)
    truth_path = resolved.get("oracle_truth")
    if command and truth_path:
        raise UsageError("--oracle-cmd and --oracle-truth are mutually exclusive")
    if command:
        return SubprocessOracle(
            command, workers=resolved.get("jobs", 1), timeout=resolved["oracle_timeout"]
        )
    if truth_path:
        _require_inputs([truth_path])
        truth = load_ground_truth(iter_lines(truth_path))
        channel = _usage_guard(
            NoisyChannelConfig,
            substitution_rate=resolved["oracle_sub_rate"],
            insertion_rate=resolved["oracle_ins_rate"],
            deletion_rate=resolved["oracle_del_rate"],
            seed=resolved["oracle_seed"],
            alphabet=resolved["oracle_alphabet"],
        )
        return SimulatedOracle(truth.intervals, channel)
    return None


def _close_oracle(oracle) -> None:
    if isinstance(oracle, SubprocessOracle):
        oracle.close()


def _cmd_simulate(resolved: dict) -> None:
    if not resolved["out"]:
        raise UsageError("simulate requires --out")
    noise = _usage_guard(
        NoisyChannelConfig,
        substitution_rate=resolved["sub_rate"],
        insertion_rate=resolved["ins_rate"],
        deletion_rate=resolved["del_rate"],
        seed=resolved["noise_seed"],
        alphabet=resolved["alphabet"],
    )
    config = _usage_guard(
        SyntheticCorpusConfig,
        seed=resolved["seed"],
        num_videos=resolved["num_videos"],
        subtitles_per_video=resolved["subtitles_per_video"],
        subtitle_duration_range=(resolved["min_subtitle_duration"], resolved["max_subtitle_duration"]),
        transcript_length_range=(resolved["min_transcript_length"], resolved["max_transcript_length"]),
        gap_probability=resolved["gap_probability"],
        gap_duration_range=(resolved["min_gap_duration"], resolved["max_gap_duration"]),
        ocr_noise=noise,
        alphabet=resolved["alphabet"],
        frame_interval=resolved["interval"],
    )
    _check_output(resolved["out"], resolved["force"])
    _check_output(resolved["truth"], resolved["force"])
    frames_by_video, truth = generate_corpus(config)
    with _open_output(resolved["out"], resolved["force"]) as fp:
        dump_frames(frames_by_video, fp)
    if resolved["truth"]:
        with _open_output(resolved["truth"], resolved["force"]) as fp:
            dump_ground_truth(truth, fp)
    logger.info(
        "generated %d videos, %d frames, %d subtitle intervals",
        len(frames_by_video),
        sum(len(v) for v in frames_by_video.values()),
        truth.total_intervals,
    )


def _cmd_merge(resolved: dict) -> None:
    if not resolved["frames"] or not resolved["out"]:
        raise UsageError("merge requires --frames and --out")
    _require_inputs([resolved["frames"]])
    _check_output(resolved["out"], resolved["force"])
    config = _usage_guard(
        MergeConfig,
        mode=resolved["mode"],
        red_threshold=resolved["red_threshold"],
        max_utterance_duration=resolved["max_duration"],
        min_utterance_duration=resolved["min_duration"],
        frame_interval=resolved["interval"],
        normalization=DEFAULT_NORMALIZATION,
    )
    oracle = _build_oracle(resolved)
    if config.mode == MODEL and oracle is None:
        raise UsageError(
            f"model mode needs --oracle-cmd, --oracle-truth, or ${ORACLE_CMD_ENV}"
        )
    try:
        frames_by_video = load_frames(
            iter_lines(resolved["frames"]),
            interval=resolved["interval"],
            jitter_tolerance=resolved["jitter_tolerance"],
        )
        utterances = merge_corpus(frames_by_video, config, oracle, jobs=resolved["jobs"])
    finally:
        _close_oracle(oracle)
    manifest = Manifest(
        entries=utterances,
        metadata=ManifestMetadata(
            config_digest=config.digest(),
            normalization=config.normalization.digest(),
            merge_mode=config.mode,
            iteration=0,
            domain=resolved["domain"],
        ),
    )
    if resolved["out"] == "-":
        sys.stdout.write(serialize_manifest(manifest))
        digest = manifest_digest(manifest)
    else:
        digest = write_manifest(manifest, resolved["out"], force=True)
    logger.info("wrote %d utterances (manifest digest %s)", len(utterances), digest[:12])


def _cmd_filter(resolved: dict) -> None:
    if not resolved["manifest"] or not resolved["out"]:
        raise UsageError("filter requires --manifest and --out")
    _require_inputs([resolved["manifest"]])
    _check_output(resolved["out"], resolved["force"])
    _check_output(resolved["report"], resolved["force"])
    oracle = _build_oracle(resolved)
    if oracle is None:
        raise UsageError(f"filter needs --oracle-cmd, --oracle-truth, or ${ORACLE_CMD_ENV}")
    manifest = load_manifest(iter_lines(resolved["manifest"]))
    try:
        scores = score_noise(manifest, oracle, jobs=resolved["jobs"])
    finally:
        _close_oracle(oracle)
    filtered, report = filter_iteration(manifest, resolved["gamma"], scores)
    if resolved["out"] == "-":
        sys.stdout.write(serialize_manifest(filtered))
    else:
        write_manifest(filtered, resolved["out"], force=True)
    if resolved["report"]:
        with _open_output(resolved["report"], True) as fp:
            fp.write(serialize_report(report))
    logger.info(
        "iteration %d: dropped %d, retained %d",
        report.iteration,
        len(report.dropped_ids),
        report.retained_count,
    )


def _cmd_loop(resolved: dict) -> None:
    if not resolved["manifest"] or not resolved["out_dir"]:
        raise UsageError("loop requires --manifest and --out-dir")
    _require_inputs([resolved["manifest"]])
    oracle = _build_oracle(resolved)
    if oracle is None:
        raise UsageError(f"loop needs --oracle-cmd, --oracle-truth, or ${ORACLE_CMD_ENV}")
    manifest = load_manifest(iter_lines(resolved["manifest"]))
    try:
        lineage = run_curation_loop(
            manifest,
            resolved["gamma"],
            resolved["iterations"],
            oracle,
            jobs=resolved["jobs"],
        )
    finally:
        _close_oracle(oracle)
    os.makedirs(resolved["out_dir"], exist_ok=True)
    for step, (stage, report) in enumerate(lineage, 1):
        manifest_path = os.path.join(resolved["out_dir"], f"manifest.iter{step:02d}.jsonl")
        report_path = os.path.join(resolved["out_dir"], f"report.iter{step:02d}.json")
        _check_output(manifest_path, resolved["force"])
        write_manifest(stage, manifest_path, force=True)
        with _open_output(report_path, resolved["force"]) as fp:
            fp.write(serialize_report(report))
        logger.info(
            "iteration %d: dropped %d, retained %d",
            report.iteration,
            len(report.dropped_ids),
            report.retained_count,
        )


def _cmd_eval(resolved: dict) -> None:
    if not resolved["manifest"] or not resolved["truth"]:
        raise UsageError("eval requires --manifest and --truth")
    _require_inputs([resolved["manifest"], resolved["truth"]])
    manifest = load_manifest(iter_lines(resolved["manifest"]))
    truth = load_ground_truth(iter_lines(resolved["truth"]))
    result = evaluate_merge(manifest.entries, truth, iou_threshold=resolved["iou"])
    print(
        json.dumps(
            {
                "boundary_precision": result.boundary_precision,
                "boundary_recall": result.boundary_recall,
                "boundary_f1": result.boundary_f1,
                "transcript_cer": result.transcript_cer,
                "matched": result.matched,
                "degenerate": result.degenerate,
            },
            ensure_ascii=False,
        )
    )


def _cmd_cer(resolved: dict) -> None:
    if not resolved["reference"] or not resolved["hypothesis"]:
        raise UsageError("cer requires a reference file and a hypothesis file")
    _require_inputs([resolved["reference"], resolved["hypothesis"]])

    def read(path: str) -> str:
        if path == "-":
            return sys.stdin.read()
        with open(path, encoding="utf-8") as fp:
            return fp.read()

    reference = normalize(read(resolved["reference"]))
    hypothesis = normalize(read(resolved["hypothesis"]))
    value = cer(reference, hypothesis)
    breakdown = error_breakdown(reference, hypothesis)
    print(value)
    print(
        f"substitutions={breakdown.substitutions} "
        f"insertions={breakdown.insertions} "
        f"deletions={breakdown.deletions} "
        f"distance={breakdown.total}"
    )


_HANDLERS = {
    "simulate": _cmd_simulate,
    "merge": _cmd_merge,
    "filter": _cmd_filter,
    "loop": _cmd_loop,
    "eval": _cmd_eval,
    "cer": _cmd_cer,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        resolved = _resolve(args, _DEFAULTS[args.command])
        _echo_config(args.command, resolved)
        _HANDLERS[args.command](resolved)
        return EXIT_OK
    except (UsageError, ConfigError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (
        ParseError,
        OrderError,
        GapError,
        DegenerateInputError,
        ManifestError,
        ValueError,
        OSError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    sys.exit(run())


if __name__ == "__main__":
    main()
