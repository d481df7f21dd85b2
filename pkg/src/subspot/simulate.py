"""Synthetic subtitle corpora with ground truth, for desk-scale end-to-end runs.

The generator lays out non-overlapping subtitle intervals (with optional
silent gaps) on each video's timeline, samples frames on the regular grid,
and emits each frame's text through an independent seeded OCR-noise
channel. Ground truth travels alongside so merging quality can be scored
as boundary precision/recall plus corpus-level transcript CER.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import IO, Iterable

from .frames import DEFAULT_FRAME_INTERVAL, AudioSpan, FrameRecord
from .merging import Utterance
from .oracle import PERFECT_CHANNEL, NoisyChannelConfig, derive_seed, simulate_channel
from .textmetrics import (
    DEFAULT_NORMALIZATION,
    NormalizationConfig,
    edit_distance,
    normalize,
)

# Frequent hanzi; none of them normalize away, and any two halves of the
# set are disjoint, which the generator exploits for adjacent distinctness.
DEFAULT_ALPHABET = (
    "的一是不了人我在有他这为之大来以个中上们"
    "到说国和地也子时道出而要于就下得可你年生"
)


@dataclass(frozen=True)
class SyntheticCorpusConfig:
    seed: int = 0
    num_videos: int = 10
    subtitles_per_video: int = 12
    subtitle_duration_range: tuple[float, float] = (1.0, 6.0)
    transcript_length_range: tuple[int, int] = (4, 20)
    gap_probability: float = 0.2
    gap_duration_range: tuple[float, float] = (0.5, 3.0)
    ocr_noise: NoisyChannelConfig = PERFECT_CHANNEL
    alphabet: str = DEFAULT_ALPHABET
    frame_interval: float = DEFAULT_FRAME_INTERVAL

    def __post_init__(self):
        if self.num_videos < 0 or self.subtitles_per_video < 1:
            raise ValueError("need num_videos >= 0 and at least one subtitle per video")
        lo, hi = self.subtitle_duration_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad subtitle duration range ({lo}, {hi})")
        glo, ghi = self.gap_duration_range
        if not 0 < glo <= ghi:
            raise ValueError(f"bad gap duration range ({glo}, {ghi})")
        tlo, thi = self.transcript_length_range
        if not 1 <= tlo <= thi:
            raise ValueError(f"bad transcript length range ({tlo}, {thi})")
        if not 0 <= self.gap_probability <= 1:
            raise ValueError("gap_probability must lie in [0, 1]")
        if self.frame_interval <= 0:
            raise ValueError("frame_interval must be positive")
        usable = sorted(set(self.alphabet))
        if len(usable) < 2:
            raise ValueError("alphabet needs at least two distinct characters")
        stripped = normalize("".join(usable))
        if len(stripped.chars) != len(usable):
            raise ValueError("alphabet must not contain whitespace or punctuation")


@dataclass
class GroundTruth:
    """Per video: sorted, disjoint (span, true transcript) subtitle intervals."""

    intervals: dict[str, list[tuple[AudioSpan, str]]] = field(default_factory=dict)

    def validate(self) -> None:
        for video_id, spans in self.intervals.items():
            for (a, _), (b, _) in zip(spans, spans[1:]):
                if b.start < a.end:
                    raise ValueError(
                        f"video {video_id!r}: intervals overlap or are unsorted "
                        f"([{a.start}, {a.end}) then [{b.start}, {b.end}))"
                    )

    @property
    def total_intervals(self) -> int:
        return sum(len(spans) for spans in self.intervals.values())


def generate_corpus(
    config: SyntheticCorpusConfig,
) -> tuple[dict[str, list[FrameRecord]], GroundTruth]:
    """Build a deterministic corpus; equal configs give byte-equal corpora.

    Adjacent subtitles draw their transcripts from alternating disjoint
    halves of the alphabet, which forces their relative edit distance to
    exactly 1.0 and keeps boundary recovery well-posed.
    """
    alphabet = sorted(set(config.alphabet))
    pools = (alphabet[0::2], alphabet[1::2])

    frames_by_video: dict[str, list[FrameRecord]] = {}
    truth = GroundTruth()

    for v in range(config.num_videos):
        video_id = f"synth-{v:04d}"
        rng = random.Random(derive_seed(config.seed, "video", v))

        intervals: list[tuple[AudioSpan, str]] = []
        t = 0.0
        for i in range(config.subtitles_per_video):
            if rng.random() < config.gap_probability:
                t += rng.uniform(*config.gap_duration_range)
            duration = rng.uniform(*config.subtitle_duration_range)
            length = rng.randint(*config.transcript_length_range)
            pool = pools[i % 2]
            text = "".join(rng.choice(pool) for _ in range(length))
            intervals.append((AudioSpan(t, t + duration), text))
            t += duration

        records: list[FrameRecord] = []
        timeline_end = intervals[-1][0].end
        cursor = 0
        k = 0
        while True:
            timestamp = k * config.frame_interval
            if timestamp >= timeline_end:
                break
            while cursor < len(intervals) and intervals[cursor][0].end <= timestamp:
                cursor += 1
            text: str | None = None
            confidence = 0.0
            if cursor < len(intervals) and intervals[cursor][0].start <= timestamp:
                noise = NoisyChannelConfig(
                    substitution_rate=config.ocr_noise.substitution_rate,
                    insertion_rate=config.ocr_noise.insertion_rate,
                    deletion_rate=config.ocr_noise.deletion_rate,
                    seed=derive_seed(config.ocr_noise.seed, "ocr", video_id, k),
                    alphabet=config.ocr_noise.alphabet or config.alphabet,
                )
                text = simulate_channel(intervals[cursor][1], noise)
                confidence = round(rng.uniform(0.85, 0.99), 4)
            records.append(
                FrameRecord(
                    video_id=video_id,
                    frame_index=k,
                    timestamp=timestamp,
                    text=text,
                    ocr_confidence=confidence,
                )
            )
            k += 1

        frames_by_video[video_id] = records
        truth.intervals[video_id] = intervals

    truth.validate()
    return frames_by_video, truth


def truth_to_lines(truth: GroundTruth) -> Iterable[str]:
    for video_id, spans in truth.intervals.items():
        for span, text in spans:
            yield json.dumps(
                {"video_id": video_id, "start": span.start, "end": span.end, "transcript": text},
                ensure_ascii=False,
                separators=(",", ":"),
            )


def dump_ground_truth(truth: GroundTruth, out: IO[str]) -> None:
    for line in truth_to_lines(truth):
        out.write(line)
        out.write("\n")


def load_ground_truth(source: Iterable[str] | IO[str]) -> GroundTruth:
    truth = GroundTruth()
    for line_number, line in enumerate(source, 1):
        line = line.strip("\n")
        if not line:
            continue
        try:
            obj = json.loads(line)
            span = AudioSpan(obj["start"], obj["end"])
            video_id, text = obj["video_id"], obj["transcript"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"ground truth line {line_number}: {exc}") from exc
        truth.intervals.setdefault(video_id, []).append((span, text))
    for spans in truth.intervals.values():
        spans.sort(key=lambda pair: pair[0].start)
    truth.validate()
    return truth


@dataclass(frozen=True)
class MergeEvaluation:
    """Boundary-recovery and transcript quality of a merge run.

    ``degenerate`` marks zeros that stand in for undefined ratios (no
    utterances, no truth intervals, or no matched pairs).
    """

    boundary_precision: float
    boundary_recall: float
    boundary_f1: float
    transcript_cer: float
    matched: int
    degenerate: bool


def _iou(a: AudioSpan, b: AudioSpan) -> float:
    intersection = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = a.duration + b.duration - intersection
    return intersection / union if union > 0 else 0.0


def evaluate_merge(
    utterances: list[Utterance],
    truth: GroundTruth,
    iou_threshold: float = 0.5,
    normalization: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> MergeEvaluation:
    """Score utterances against ground truth by one-to-one interval matching.

    An utterance may match a truth interval of the same video when their
    temporal intersection-over-union reaches the threshold; pairs are
    matched greedily by descending IoU. Transcript CER is corpus-level over
    matched pairs: total edit distance / total reference length.
    """
    ordered = sorted(utterances, key=lambda u: (u.video_id, u.span.start, u.id))
    total_truth = truth.total_intervals

    candidates: list[tuple[float, str, int, int]] = []
    utts_by_video: dict[str, list[tuple[int, Utterance]]] = {}
    for ui, utt in enumerate(ordered):
        utts_by_video.setdefault(utt.video_id, []).append((ui, utt))
    for video_id, spans in truth.intervals.items():
        for ti, (span, _) in enumerate(spans):
            for ui, utt in utts_by_video.get(video_id, []):
                score = _iou(span, utt.span)
                if score >= iou_threshold:
                    candidates.append((score, video_id, ti, ui))
    candidates.sort(key=lambda item: (-item[0], item[1], item[2], item[3]))

    matched_truth: set[tuple[str, int]] = set()
    matched_utts: set[int] = set()
    pairs: list[tuple[str, int, int]] = []
    for score, video_id, ti, ui in candidates:
        if (video_id, ti) in matched_truth or ui in matched_utts:
            continue
        matched_truth.add((video_id, ti))
        matched_utts.add(ui)
        pairs.append((video_id, ti, ui))

    matched = len(pairs)
    precision = matched / len(ordered) if ordered else 0.0
    recall = matched / total_truth if total_truth else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    total_distance = 0
    total_reference = 0
    for video_id, ti, ui in pairs:
        reference = normalize(truth.intervals[video_id][ti][1], normalization)
        total_distance += edit_distance(reference, ordered[ui].transcript)
        total_reference += len(reference)
    transcript_cer = total_distance / total_reference if total_reference else 0.0

    return MergeEvaluation(
        boundary_precision=precision,
        boundary_recall=recall,
        boundary_f1=f1,
        transcript_cer=transcript_cer,
        matched=matched,
        degenerate=not ordered or not total_truth or not matched,
    )
