"""Character-level string metrics: edit distance, RED, CER, and error-type breakdown.

All metrics operate on normalized text (composed Unicode, whitespace and
punctuation stripped) so that OCR spacing artifacts never count as errors.
Every function here is pure and safe to call from concurrent workers.
"""

from __future__ import annotations

import hashlib
import string
import unicodedata
from dataclasses import dataclass, field

# ASCII punctuation plus the CJK marks that subtitle OCR commonly emits.
CJK_PUNCTUATION = (
    "、。！？，；：（）．"  # 、。！？，；：（）．
    "「」『』〈〉《》【】"  # 「」『』〈〉《》【】
    "‘’“”…—–·～・"  # ‘’“”…—–·～・
    "＂＇／＼｜＆＠＃"              # ＂＇／＼｜＆＠＃
)
DEFAULT_STRIP_CHARS = string.punctuation + CJK_PUNCTUATION


class DegenerateInputError(ValueError):
    """A metric's denominator is zero (e.g. CER with an empty reference)."""


@dataclass(frozen=True)
class NormalizationConfig:
    """Controls how raw subtitle strings are canonicalized before comparison."""

    strip_chars: str = DEFAULT_STRIP_CHARS

    def digest(self) -> str:
        """Short stable identifier for this config, for manifest provenance."""
        payload = "".join(sorted(set(self.strip_chars))).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:12]


DEFAULT_NORMALIZATION = NormalizationConfig()


@dataclass(frozen=True)
class NormalizedText:
    """A subtitle string after canonical composition and stripping.

    ``chars`` is what every metric operates on; ``original`` is kept for
    provenance only and never participates in comparisons.
    """

    chars: str
    original: str = field(compare=False, default="")

    def __len__(self) -> int:
        return len(self.chars)


@dataclass(frozen=True)
class EditBreakdown:
    """Error counts from one minimal-cost alignment backtrace."""

    substitutions: int
    insertions: int
    deletions: int

    @property
    def total(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def normalize(raw: str, config: NormalizationConfig = DEFAULT_NORMALIZATION) -> NormalizedText:
    """Canonically compose ``raw`` and strip whitespace plus configured punctuation.

    Runs to a fixed point: stripping can expose new canonical compositions
    (a combining mark separated from its base by a space), so one pass of
    NFC is not enough to make the result idempotent.
    """
    strip = set(config.strip_chars)
    text = raw
    while True:
        cleaned = unicodedata.normalize("NFC", text)
        cleaned = "".join(c for c in cleaned if not c.isspace() and c not in strip)
        if cleaned == text:
            return NormalizedText(chars=cleaned, original=raw)
        text = cleaned


def edit_distance(a: NormalizedText, b: NormalizedText) -> int:
    """Levenshtein distance over chars with unit insert/delete/substitute costs."""
    s, t = a.chars, b.chars
    if s == t:
        return 0
    if not s:
        return len(t)
    if not t:
        return len(s)

    prev = list(range(len(t) + 1))
    for i, ca in enumerate(s, 1):
        cur = [i]
        for j, cb in enumerate(t, 1):
            cur.append(min(cur[j - 1] + 1, prev[j] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def red(a: NormalizedText, b: NormalizedText) -> float:
    """Relative edit distance: edit distance over the longer text's length.

    Always in [0, 1]. Undefined when both texts are empty.
    """
    longest = max(len(a), len(b))
    if longest == 0:
        raise DegenerateInputError("relative edit distance of two empty texts is undefined")
    return edit_distance(a, b) / longest


def cer(reference: NormalizedText, hypothesis: NormalizedText) -> float:
    """Character error rate: edit distance over the reference length.

    May exceed 1.0 when the hypothesis is much longer than the reference.
    Undefined for an empty reference.
    """
    if len(reference) == 0:
        raise DegenerateInputError("character error rate with an empty reference is undefined")
    return edit_distance(reference, hypothesis) / len(reference)


def error_breakdown(reference: NormalizedText, hypothesis: NormalizedText) -> EditBreakdown:
    """Substitution/insertion/deletion counts from one minimal alignment.

    Multiple backtraces can be minimal; this one is pinned for
    reproducibility: scanning backwards from the end of both strings, a
    diagonal step (match or substitution) is preferred over a deletion,
    which is preferred over an insertion.
    """
    ref, hyp = reference.chars, hypothesis.chars
    m, n = len(ref), len(hyp)

    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        dp[i][0] = i
    for j in range(1, n + 1):
        dp[0][j] = j
    for i in range(1, m + 1):
        row, above = dp[i], dp[i - 1]
        ca = ref[i - 1]
        for j in range(1, n + 1):
            row[j] = min(row[j - 1] + 1, above[j] + 1, above[j - 1] + (ca != hyp[j - 1]))

    subs = ins = dels = 0
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditBreakdown(substitutions=subs, insertions=ins, deletions=dels)
