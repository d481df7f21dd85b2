"""Manifest I/O and the iterative noise filter over pseudo-labeled datasets.

A manifest is the on-disk dataset: a metadata line followed by one JSON
line per utterance (keys ``id``, ``video_id``, ``start``, ``end``,
``transcript``, ``source_frames``, ``quality``, ``provenance``).
Serialization is canonical, so equal manifests are byte-equal and a
manifest's identity is the sha256 of its file bytes.

Filtering emulates the data side of self-training: each iteration scores
every entry by the oracle's character error rate against the pseudo-label
(higher = noisier), drops the floor(gamma * N) worst, and re-scores the
survivors on the next round.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Iterable

from .frames import AudioSpan
from .merging import Provenance, Utterance
from .oracle import AsrOracle, OracleError
from .textmetrics import DEFAULT_NORMALIZATION, NormalizationConfig, NormalizedText, cer, normalize

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """A curation parameter is out of range (gamma, iterations)."""


class ManifestError(ValueError):
    """A manifest file or in-memory manifest violates its contract."""


@dataclass(frozen=True)
class ManifestMetadata:
    """Provenance carried on the manifest's first line."""

    config_digest: str
    normalization: str
    merge_mode: str
    iteration: int = 0
    parent_digest: str | None = None
    domain: str | None = None
    scoring: str | None = None


@dataclass
class Manifest:
    entries: list[Utterance]
    metadata: ManifestMetadata

    def validate(self) -> None:
        seen: set[str] = set()
        for entry in self.entries:
            if entry.id in seen:
                raise ManifestError(f"duplicate entry id {entry.id!r}")
            seen.add(entry.id)
        keys = [(e.video_id, e.span.start) for e in self.entries]
        if keys != sorted(keys):
            raise ManifestError("entries are not sorted by (video_id, span.start)")


@dataclass(frozen=True)
class FilterReport:
    """What one filtering iteration did and why."""

    iteration: int
    drop_ratio: float
    dropped_ids: list[str] = field(default_factory=list)
    score_per_entry: dict[str, float] = field(default_factory=dict)
    retained_count: int = 0


def _metadata_to_obj(meta: ManifestMetadata) -> dict:
    return {
        "config_digest": meta.config_digest,
        "normalization": meta.normalization,
        "merge_mode": meta.merge_mode,
        "iteration": meta.iteration,
        "parent_digest": meta.parent_digest,
        "domain": meta.domain,
        "scoring": meta.scoring,
    }


def _utterance_to_obj(entry: Utterance) -> dict:
    return {
        "id": entry.id,
        "video_id": entry.video_id,
        "start": entry.span.start,
        "end": entry.span.end,
        "transcript": entry.transcript.chars,
        "source_frames": list(entry.source_frames),
        "quality": entry.quality,
        "provenance": {
            "mode": entry.provenance.mode,
            "config": entry.provenance.config_digest,
            "transcript_rule": entry.provenance.transcript_rule,
        },
    }


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def serialize_manifest(manifest: Manifest) -> str:
    """Canonical text form; the digest is taken over these exact bytes."""
    lines = [_dumps(_metadata_to_obj(manifest.metadata))]
    lines.extend(_dumps(_utterance_to_obj(entry)) for entry in manifest.entries)
    return "\n".join(lines) + "\n"


def manifest_digest(manifest: Manifest) -> str:
    return hashlib.sha256(serialize_manifest(manifest).encode("utf-8")).hexdigest()


def write_manifest(manifest: Manifest, path: str, force: bool = False) -> str:
    """Atomically write (temp file + rename); returns the content digest."""
    manifest.validate()
    if not force and os.path.exists(path):
        raise FileExistsError(f"{path} exists; pass force to overwrite")
    payload = serialize_manifest(manifest)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fp:
            fp.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _parse_entry(line_number: int, line: str) -> Utterance:
    try:
        obj = json.loads(line)
        provenance = obj["provenance"]
        entry = Utterance(
            id=obj["id"],
            video_id=obj["video_id"],
            span=AudioSpan(obj["start"], obj["end"]),
            transcript=NormalizedText(chars=obj["transcript"], original=obj["transcript"]),
            source_frames=(obj["source_frames"][0], obj["source_frames"][1]),
            quality=obj["quality"],
            provenance=Provenance(
                mode=provenance["mode"],
                config_digest=provenance["config"],
                transcript_rule=provenance["transcript_rule"],
            ),
        )
    except (json.JSONDecodeError, KeyError, TypeError, IndexError, ValueError) as exc:
        raise ManifestError(f"line {line_number}: malformed utterance ({exc})") from exc
    return entry


def load_manifest(source: Iterable[str] | IO[str]) -> Manifest:
    lines = [line.rstrip("\n") for line in source]
    lines = [line for line in lines if line]
    if not lines:
        raise ManifestError("empty manifest: missing metadata line")
    try:
        head = json.loads(lines[0])
        metadata = ManifestMetadata(
            config_digest=head["config_digest"],
            normalization=head["normalization"],
            merge_mode=head["merge_mode"],
            iteration=head["iteration"],
            parent_digest=head["parent_digest"],
            domain=head["domain"],
            scoring=head["scoring"],
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ManifestError(f"line 1: malformed metadata ({exc})") from exc

    manifest = Manifest(
        entries=[_parse_entry(i, line) for i, line in enumerate(lines[1:], 2)],
        metadata=metadata,
    )
    manifest.validate()
    return manifest


def score_noise(
    manifest: Manifest,
    oracle: AsrOracle,
    normalization: NormalizationConfig = DEFAULT_NORMALIZATION,
    jobs: int = 1,
) -> dict[str, float]:
    """Oracle CER of every entry against its own pseudo-label; higher = noisier.

    An entry whose oracle request fails is scored +inf (treated as
    noisiest) with a warning; it is never silently skipped.
    """

    def score_one(entry: Utterance) -> float:
        try:
            hypothesis = oracle.transcribe(entry.video_id, entry.span)
        except OracleError as exc:
            logger.warning("oracle failed for entry %s (%s); scoring +inf", entry.id, exc)
            return math.inf
        return cer(entry.transcript, normalize(hypothesis.text, normalization))

    entries = manifest.entries
    if jobs > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(score_one, entries))
    else:
        values = [score_one(entry) for entry in entries]
    return {entry.id: value for entry, value in zip(entries, values)}


def filter_iteration(
    manifest: Manifest, gamma: float, scores: dict[str, float]
) -> tuple[Manifest, FilterReport]:
    """Drop the floor(gamma * N) noisiest entries; ties break by id ascending.

    gamma == 0 is a true fixed point: the input manifest is returned
    unchanged (byte-identical), though a report is still produced for the
    lineage. Any positive gamma yields a new manifest with the iteration
    counter bumped and the parent digest recorded.
    """
    if not 0 <= gamma < 1:
        raise ConfigError(f"drop ratio must lie in [0, 1), got {gamma}")
    missing = [entry.id for entry in manifest.entries if entry.id not in scores]
    if missing:
        raise ConfigError(f"scores missing for {len(missing)} entries (first: {missing[0]!r})")

    step = manifest.metadata.iteration + 1
    ordered_scores = {entry.id: scores[entry.id] for entry in manifest.entries}
    drop_count = math.floor(gamma * len(manifest.entries))

    if gamma == 0:
        report = FilterReport(
            iteration=step,
            drop_ratio=gamma,
            dropped_ids=[],
            score_per_entry=ordered_scores,
            retained_count=len(manifest.entries),
        )
        return manifest, report

    ranked = sorted(manifest.entries, key=lambda e: (-scores[e.id], e.id))
    dropped_ids = [entry.id for entry in ranked[:drop_count]]
    dropped = set(dropped_ids)
    retained = [entry for entry in manifest.entries if entry.id not in dropped]

    out = Manifest(
        entries=retained,
        metadata=replace(
            manifest.metadata,
            iteration=step,
            parent_digest=manifest_digest(manifest),
            scoring="oracle_cer",
        ),
    )
    report = FilterReport(
        iteration=step,
        drop_ratio=gamma,
        dropped_ids=dropped_ids,
        score_per_entry=ordered_scores,
        retained_count=len(retained),
    )
    return out, report


def run_curation_loop(
    manifest: Manifest,
    gamma: float,
    iterations: int,
    oracle: AsrOracle,
    normalization: NormalizationConfig = DEFAULT_NORMALIZATION,
    jobs: int = 1,
) -> list[tuple[Manifest, FilterReport]]:
    """Score + filter repeatedly, re-scoring survivors each round.

    Returns the full lineage, one (manifest, report) pair per iteration.
    """
    if iterations < 1:
        raise ConfigError(f"need at least one iteration, got {iterations}")
    lineage: list[tuple[Manifest, FilterReport]] = []
    current = manifest
    for _ in range(iterations):
        scores = score_noise(current, oracle, normalization, jobs)
        current, report = filter_iteration(current, gamma, scores)
        lineage.append((current, report))
    return lineage


def serialize_report(report: FilterReport) -> str:
    """One-object JSON form of a filter report (infinite scores stay Infinity)."""
    return (
        json.dumps(
            {
                "iteration": report.iteration,
                "drop_ratio": report.drop_ratio,
                "retained_count": report.retained_count,
                "dropped_ids": report.dropped_ids,
                "score_per_entry": report.score_per_entry,
            },
            ensure_ascii=False,
            separators=(",", ":"),
        )
        + "\n"
    )
