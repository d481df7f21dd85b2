"""Frame merging: group consecutive frames that show one subtitle into utterances.

Two pairwise rules decide whether neighbouring text-bearing frames belong
together. The heuristic rule merges when the relative edit distance of the
two OCR texts falls below a threshold. The model rule asks an ASR oracle to
transcribe both frame spans and their concatenation, then compares the
split-wise error (sum of the two per-frame CERs) against the merged error
(best CER of either text vs the concatenated span's transcript): a larger
split-wise error means the frames sound like one utterance and should merge.

A video is scanned greedily left to right; runs close on a no-merge
decision, on a frame without text, or at the duration cap.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .frames import DEFAULT_FRAME_INTERVAL, AudioSpan, FrameRecord, span_of
from .oracle import AsrOracle
from .textmetrics import (
    DEFAULT_NORMALIZATION,
    NormalizationConfig,
    NormalizedText,
    cer,
    normalize,
    red,
)

logger = logging.getLogger(__name__)

HEURISTIC = "heuristic"
MODEL = "model"

# Chained 1/3 s spans accumulate ~1e-13 of float noise; duration limits
# must not split or drop runs over it.
_DURATION_EPS = 1e-9


@dataclass(frozen=True)
class MergeConfig:
    """Knobs for the merging pass.

    ``red_threshold`` above 1.0 is allowed and merges every text-bearing
    pair (relative edit distance never exceeds 1); 0.0 merges nothing in
    heuristic mode.
    """

    mode: str = HEURISTIC
    red_threshold: float = 0.3
    max_utterance_duration: float = 20.0
    min_utterance_duration: float = 0.3
    frame_interval: float = DEFAULT_FRAME_INTERVAL
    normalization: NormalizationConfig = DEFAULT_NORMALIZATION

    def __post_init__(self):
        if self.mode not in (HEURISTIC, MODEL):
            raise ValueError(f"unknown merge mode {self.mode!r}")
        if self.red_threshold < 0:
            raise ValueError("red_threshold must be non-negative")
        if not 0 < self.min_utterance_duration < self.max_utterance_duration:
            raise ValueError("need 0 < min_utterance_duration < max_utterance_duration")
        if self.frame_interval <= 0:
            raise ValueError("frame_interval must be positive")

    def digest(self) -> str:
        payload = json.dumps(
            {
                "mode": self.mode,
                "red_threshold": self.red_threshold,
                "max_utterance_duration": self.max_utterance_duration,
                "min_utterance_duration": self.min_utterance_duration,
                "frame_interval": self.frame_interval,
                "normalization": self.normalization.digest(),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class Provenance:
    """How an utterance came to be, for downstream auditing."""

    mode: str
    config_digest: str
    transcript_rule: str


@dataclass(frozen=True)
class Utterance:
    """One aligned (audio span, transcript) pair; the unit of a dataset."""

    id: str
    video_id: str
    span: AudioSpan
    transcript: NormalizedText
    source_frames: tuple[int, int]
    quality: float | None
    provenance: Provenance


def utterance_id(video_id: str, span: AudioSpan) -> str:
    payload = f"{video_id}\t{span.start!r}\t{span.end!r}".encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]


def should_merge_heuristic(prev: FrameRecord, nxt: FrameRecord, config: MergeConfig) -> bool:
    """Merge when the texts' relative edit distance is below the threshold.

    A frame whose text is missing or normalizes to nothing never merges.
    """
    prev_text = normalize(prev.text or "", config.normalization)
    nxt_text = normalize(nxt.text or "", config.normalization)
    if len(prev_text) == 0 or len(nxt_text) == 0:
        return False
    return red(prev_text, nxt_text) < config.red_threshold


def should_merge_model(
    prev: FrameRecord,
    nxt: FrameRecord,
    oracle: AsrOracle,
    config: MergeConfig = MergeConfig(mode=MODEL),
) -> bool:
    """Merge when the split-wise oracle error exceeds the merged error.

    Exactly three oracle requests per decision (both frame spans and their
    concatenation); the oracle memoizes per span, so chained decisions
    reuse neighbours' transcripts. Oracle failures propagate: a decision is
    aborted rather than defaulted.
    """
    prev_text = normalize(prev.text or "", config.normalization)
    nxt_text = normalize(nxt.text or "", config.normalization)
    if len(prev_text) == 0 or len(nxt_text) == 0:
        return False

    span_prev = span_of(prev, config.frame_interval)
    span_nxt = span_of(nxt, config.frame_interval)
    span_both = AudioSpan(span_prev.start, span_nxt.end)

    norm = config.normalization
    f_prev = normalize(oracle.transcribe(prev.video_id, span_prev).text, norm)
    f_nxt = normalize(oracle.transcribe(nxt.video_id, span_nxt).text, norm)
    f_both = normalize(oracle.transcribe(prev.video_id, span_both).text, norm)

    err_split = cer(prev_text, f_prev) + cer(nxt_text, f_nxt)
    err_merged = min(cer(prev_text, f_both), cer(nxt_text, f_both))
    return err_split > err_merged


def _pairwise_decision(
    prev: FrameRecord,
    prev_text: NormalizedText,
    nxt: FrameRecord,
    nxt_text: NormalizedText,
    config: MergeConfig,
    oracle: AsrOracle | None,
) -> bool:
    if config.mode == HEURISTIC:
        return red(prev_text, nxt_text) < config.red_threshold

    # Model mode refines the heuristic: identical texts are degenerate for
    # the error formulas and always merge; the oracle is consulted only in
    # the uncertainty band [threshold, 2*threshold] around the RED cut.
    if prev_text.chars == nxt_text.chars:
        return True
    distance = red(prev_text, nxt_text)
    if distance < config.red_threshold:
        return True
    if distance > 2 * config.red_threshold:
        return False
    return should_merge_model(prev, nxt, oracle, config)


def _select_transcript(
    run: list[tuple[FrameRecord, NormalizedText]],
    span: AudioSpan,
    config: MergeConfig,
    oracle: AsrOracle | None,
) -> tuple[NormalizedText, float | None, str]:
    """Pick the run's transcript; returns (text, quality, rule name)."""
    if config.mode == HEURISTIC:
        # OCR dropouts truncate strings, so the longest member is the
        # most complete reading; earliest wins ties.
        best = max(run, key=lambda item: len(item[1]))
        return best[1], None, "longest_text"

    distinct = {text.chars for _, text in run}
    if len(distinct) == 1:
        return run[0][1], None, "min_cer_vs_oracle"
    reference = normalize(
        oracle.transcribe(run[0][0].video_id, span).text, config.normalization
    )
    best_text, best_cer = None, None
    for _, text in run:
        score = cer(text, reference)
        if best_cer is None or score < best_cer:
            best_text, best_cer = text, score
    return best_text, best_cer, "min_cer_vs_oracle"


def merge_video(
    frames: list[FrameRecord],
    config: MergeConfig,
    oracle: AsrOracle | None = None,
) -> list[Utterance]:
    """Greedy left-to-right merge of one video's frames into utterances.

    Frames must already be validated and ordered (see frames.load_frames).
    Runs close on a no-merge decision, a frame with no usable text, or when
    extending would push the span past the duration cap; closed runs
    shorter than the minimum duration are discarded.
    """
    if config.mode == MODEL and oracle is None:
        raise ValueError("model mode requires an oracle")

    utterances: list[Utterance] = []
    run: list[tuple[FrameRecord, NormalizedText]] = []

    def close_run() -> None:
        if not run:
            return
        span = AudioSpan(
            span_of(run[0][0], config.frame_interval).start,
            span_of(run[-1][0], config.frame_interval).end,
        )
        if span.duration < config.min_utterance_duration - _DURATION_EPS:
            run.clear()
            return
        transcript, quality, rule = _select_transcript(run, span, config, oracle)
        utterances.append(
            Utterance(
                id=utterance_id(run[0][0].video_id, span),
                video_id=run[0][0].video_id,
                span=span,
                transcript=transcript,
                source_frames=(run[0][0].frame_index, run[-1][0].frame_index),
                quality=quality,
                provenance=Provenance(config.mode, config.digest(), rule),
            )
        )
        run.clear()

    for frame in frames:
        text = normalize(frame.text, config.normalization) if frame.text is not None else None
        if text is None or len(text) == 0:
            close_run()
            continue
        if run:
            prev_frame, prev_text = run[-1]
            extended = span_of(frame, config.frame_interval).end - span_of(
                run[0][0], config.frame_interval
            ).start
            fits = extended <= config.max_utterance_duration + _DURATION_EPS
            if not (fits and _pairwise_decision(prev_frame, prev_text, frame, text, config, oracle)):
                close_run()
        run.append((frame, text))
    close_run()
    return utterances


def merge_corpus(
    frames_by_video: dict[str, list[FrameRecord]],
    config: MergeConfig,
    oracle: AsrOracle | None = None,
    jobs: int = 1,
) -> list[Utterance]:
    """Merge every video and return utterances sorted by (video_id, start).

    Videos are independent, so they fan out over a thread pool; output
    order does not depend on completion order.
    """
    if jobs > 1 and len(frames_by_video) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            merged = pool.map(
                lambda item: merge_video(item[1], config, oracle),
                frames_by_video.items(),
            )
            per_video = list(merged)
    else:
        per_video = [merge_video(records, config, oracle) for records in frames_by_video.values()]

    utterances = [u for video in per_video for u in video]
    utterances.sort(key=lambda u: (u.video_id, u.span.start))
    return utterances
