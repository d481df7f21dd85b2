"""Shared test utilities: independent brute-force oracles and fixture builders.

The distance oracle here is the textbook recursive definition, kept free
of the library's DP implementation so the two can check each other.
"""

from functools import lru_cache

from subspot.frames import FrameRecord
from subspot.textmetrics import NormalizedText


@lru_cache(maxsize=None)
def naive_edit_distance(a: str, b: str) -> int:
    """Recursive Levenshtein definition, the independent reference."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        naive_edit_distance(a[1:], b) + 1,
        naive_edit_distance(a, b[1:]) + 1,
        naive_edit_distance(a[1:], b[1:]) + (a[0] != b[0]),
    )


def minimal_breakdowns(a: str, b: str) -> set[tuple[int, int, int]]:
    """All (substitutions, insertions, deletions) mixes over minimal alignments."""
    best = naive_edit_distance(a, b)
    found: set[tuple[int, int, int]] = set()

    def walk(i: int, j: int, subs: int, ins: int, dels: int) -> None:
        cost = subs + ins + dels
        if cost + naive_edit_distance(a[i:], b[j:]) > best:
            return
        if i == len(a) and j == len(b):
            found.add((subs, ins, dels))
            return
        if i < len(a) and j < len(b):
            if a[i] == b[j]:
                walk(i + 1, j + 1, subs, ins, dels)
            else:
                walk(i + 1, j + 1, subs + 1, ins, dels)
        if i < len(a):
            walk(i + 1, j, subs, ins, dels + 1)
        if j < len(b):
            walk(i, j + 1, subs, ins + 1, dels)

    walk(0, 0, 0, 0, 0)
    return found


def nt(chars: str) -> NormalizedText:
    """NormalizedText literal for strings that are already normal."""
    return NormalizedText(chars=chars, original=chars)


def make_frames(
    texts: list[str | None],
    video_id: str = "vid",
    interval: float = 1 / 3,
    start_index: int = 0,
) -> list[FrameRecord]:
    """Grid-spaced frames with the given per-frame texts (None = no subtitle)."""
    return [
        FrameRecord(
            video_id=video_id,
            frame_index=start_index + k,
            timestamp=(start_index + k) * interval,
            text=text,
            ocr_confidence=0.9 if text is not None else 0.0,
        )
        for k, text in enumerate(texts)
    ]
