"""Frame-record ingestion and audio-span arithmetic.

A frame record is one sampled video frame: its timestamp, the subtitle text
OCR found there (if any), and the OCR confidence. Records travel as UTF-8
line-delimited JSON with keys ``video_id``, ``frame_index``, ``timestamp``,
``text`` (nullable), ``ocr_confidence``. Audio is referenced by
(video_id, span) only; nothing here ever touches a waveform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

DEFAULT_FRAME_INTERVAL = 1 / 3

# Spans must abut exactly up to float noise; frame jitter is a separate,
# much looser tolerance applied at load time.
ABUT_TOLERANCE = 1e-6
DEFAULT_JITTER_TOLERANCE = 0.05


class ParseError(ValueError):
    """A frame-record line is malformed. Carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class OrderError(ValueError):
    """Frame ordering or spacing within a video is violated."""

    def __init__(self, video_id: str, frame_index: int, message: str):
        super().__init__(f"video {video_id!r}, frame {frame_index}: {message}")
        self.video_id = video_id
        self.frame_index = frame_index


class GapError(ValueError):
    """Two spans that should abut do not. Carries the gap size in seconds."""

    def __init__(self, gap: float):
        super().__init__(f"spans do not abut (gap of {gap} s)")
        self.gap = gap


@dataclass(frozen=True)
class AudioSpan:
    """Half-open time interval [start, end) in seconds within one video."""

    start: float
    end: float

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class FrameRecord:
    """One sampled frame: ``text`` is None when no subtitle was detected."""

    video_id: str
    frame_index: int
    timestamp: float
    text: str | None
    ocr_confidence: float


def span_of(frame: FrameRecord, interval: float = DEFAULT_FRAME_INTERVAL) -> AudioSpan:
    """Audio span covered by one frame: [timestamp, timestamp + interval)."""
    if interval <= 0:
        raise ValueError(f"interval must be positive, got {interval}")
    return AudioSpan(frame.timestamp, frame.timestamp + interval)


def concat_spans(a: AudioSpan, b: AudioSpan) -> AudioSpan:
    """Concatenate two abutting spans into [a.start, b.end)."""
    gap = b.start - a.end
    if abs(gap) > ABUT_TOLERANCE:
        raise GapError(gap)
    return AudioSpan(a.start, b.end)


def _parse_line(line_number: int, line: str) -> FrameRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(line_number, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ParseError(line_number, "record is not an object")

    try:
        video_id = obj["video_id"]
        frame_index = obj["frame_index"]
        timestamp = obj["timestamp"]
        text = obj["text"]
        ocr_confidence = obj["ocr_confidence"]
    except KeyError as exc:
        raise ParseError(line_number, f"missing key {exc.args[0]!r}") from exc

    if not isinstance(video_id, str) or not video_id:
        raise ParseError(line_number, "video_id must be a non-empty string")
    if not isinstance(frame_index, int) or isinstance(frame_index, bool) or frame_index < 0:
        raise ParseError(line_number, "frame_index must be a non-negative integer")
    if not isinstance(timestamp, (int, float)) or isinstance(timestamp, bool) or timestamp < 0:
        raise ParseError(line_number, "timestamp must be a non-negative number")
    if text is not None and not isinstance(text, str):
        raise ParseError(line_number, "text must be a string or null")
    if (
        not isinstance(ocr_confidence, (int, float))
        or isinstance(ocr_confidence, bool)
        or not 0 <= ocr_confidence <= 1
    ):
        raise ParseError(line_number, "ocr_confidence must be a number in [0, 1]")

    return FrameRecord(
        video_id=video_id,
        frame_index=frame_index,
        timestamp=float(timestamp),
        text=text,
        ocr_confidence=float(ocr_confidence),
    )


def load_frames(
    source: Iterable[str] | IO[str],
    interval: float = DEFAULT_FRAME_INTERVAL,
    jitter_tolerance: float | None = DEFAULT_JITTER_TOLERANCE,
) -> dict[str, list[FrameRecord]]:
    """Read line-delimited frame records, grouped per video and validated.

    Videos may be interleaved in the stream; within each video frame_index
    must strictly increase and timestamps must step by ``interval`` within
    ``jitter_tolerance`` (pass None to skip the spacing check, e.g. for
    streams with a non-uniform sampling grid).
    """
    by_video: dict[str, list[FrameRecord]] = {}
    for line_number, line in enumerate(source, 1):
        line = line.strip("\n")
        if not line:
            continue
        record = _parse_line(line_number, line)
        by_video.setdefault(record.video_id, []).append(record)

    for video_id, records in by_video.items():
        for prev, cur in zip(records, records[1:]):
            if cur.frame_index <= prev.frame_index:
                raise OrderError(
                    video_id,
                    cur.frame_index,
                    f"frame_index does not increase (previous was {prev.frame_index})",
                )
            if cur.timestamp < prev.timestamp:
                raise OrderError(
                    video_id,
                    cur.frame_index,
                    f"timestamp decreases ({prev.timestamp} -> {cur.timestamp})",
                )
            if jitter_tolerance is not None:
                step = cur.timestamp - prev.timestamp
                if abs(step - interval) > jitter_tolerance:
                    raise OrderError(
                        video_id,
                        cur.frame_index,
                        f"timestamp step {step} deviates from the "
                        f"{interval} s sampling interval beyond jitter {jitter_tolerance}",
                    )
    return by_video


def frame_to_line(record: FrameRecord) -> str:
    """Canonical one-line JSON form of a record (fixed key order, compact)."""
    return json.dumps(
        {
            "video_id": record.video_id,
            "frame_index": record.frame_index,
            "timestamp": record.timestamp,
            "text": record.text,
            "ocr_confidence": record.ocr_confidence,
        },
        ensure_ascii=False,
        separators=(",", ":"),
    )


def dump_frames(frames_by_video: dict[str, list[FrameRecord]], out: IO[str]) -> None:
    """Write records in canonical form, videos in the mapping's order."""
    for records in frames_by_video.values():
        for record in records:
            out.write(frame_to_line(record))
            out.write("\n")


def iter_lines(path_or_stream) -> Iterator[str]:
    """Iterate lines from a path, '-' (stdin), or an open text stream."""
    import sys

    if path_or_stream == "-":
        yield from sys.stdin
    elif isinstance(path_or_stream, str):
        with open(path_or_stream, encoding="utf-8") as fp:
            yield from fp
    else:
        yield from path_or_stream
