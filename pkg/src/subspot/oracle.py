"""Pluggable ASR oracle: the external model that predicts a transcript for an audio span.

Three backends share one memoizing front end:

* ``SubprocessOracle`` drives a real recognizer over a line protocol
  (request ``video_id<TAB>start<TAB>end``, response = one hypothesis line).
* ``SimulatedOracle`` replays ground-truth subtitle intervals through a
  seeded noisy channel, standing in for a weak third-party model in tests
  and synthetic runs.
* ``ScriptedOracle`` returns fixed per-span responses, for exact-case tests.

All backends memoize by (video_id, span) for the process lifetime, and a
repeated request performs exactly one backend call even under concurrency.
"""

from __future__ import annotations

import hashlib
import queue
import random
import select
import shlex
import subprocess
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass
from typing import Protocol

from .frames import AudioSpan


class OracleError(Exception):
    """Base for oracle failures. A failed request is never defaulted."""


class OracleTimeout(OracleError):
    """The backend produced no response line within the timeout."""


class OracleProtocolViolation(OracleError):
    """The backend broke the line protocol (bad request key, truncated response)."""


class OracleBackendExit(OracleError):
    """The backend process died before answering."""


@dataclass(frozen=True)
class OracleHypothesis:
    """One predicted transcript for an audio span; latency is diagnostic only."""

    video_id: str
    span: AudioSpan
    text: str
    latency: float = 0.0


@dataclass(frozen=True)
class NoisyChannelConfig:
    """Seeded corruption rates emulating an imperfect recognizer or OCR stage."""

    substitution_rate: float = 0.0
    insertion_rate: float = 0.0
    deletion_rate: float = 0.0
    seed: int = 0
    alphabet: str = ""

    def __post_init__(self):
        rates = (self.substitution_rate, self.insertion_rate, self.deletion_rate)
        if any(not 0 <= r <= 1 for r in rates):
            raise ValueError(f"channel rates must each lie in [0, 1], got {rates}")
        if sum(rates) > 1:
            raise ValueError(f"channel rates must sum to at most 1, got {sum(rates)}")
        if (self.substitution_rate or self.insertion_rate) and not self.alphabet:
            raise ValueError("substitution/insertion require a non-empty alphabet")


#: Identity channel: hypotheses equal the spoken ground truth.
PERFECT_CHANNEL = NoisyChannelConfig()


def derive_seed(*parts) -> int:
    """Mix arbitrary components into a 64-bit seed, stable across processes.

    Built on sha256 rather than hash(), which is salted per process and
    would silently break run-to-run determinism.
    """
    payload = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def simulate_channel(truth: str, config: NoisyChannelConfig) -> str:
    """Corrupt ``truth`` at the configured rates; deterministic per (truth, config).

    One draw per character decides delete/substitute/keep, then one draw
    per gap (including both ends) decides insertions.
    """
    rng = random.Random(derive_seed("noisy-channel", config.seed, truth))

    kept: list[str] = []
    for ch in truth:
        u = rng.random()
        if u < config.deletion_rate:
            continue
        if u < config.deletion_rate + config.substitution_rate:
            kept.append(rng.choice(config.alphabet))
        else:
            kept.append(ch)

    out: list[str] = []
    for i in range(len(kept) + 1):
        if rng.random() < config.insertion_rate:
            out.append(rng.choice(config.alphabet))
        if i < len(kept):
            out.append(kept[i])
    return "".join(out)


class AsrOracle(Protocol):
    def transcribe(self, video_id: str, span: AudioSpan) -> OracleHypothesis: ...


class MemoizedOracle:
    """Caches hypotheses by (video_id, span); concurrent duplicates share one call.

    Failures are raised to every waiter but not cached, so the caller may
    issue a fresh request later if it chooses to.
    """

    def __init__(self):
        self._memo: dict[tuple[str, float, float], Future] = {}
        self._memo_lock = threading.Lock()
        self.backend_calls = 0

    def transcribe(self, video_id: str, span: AudioSpan) -> OracleHypothesis:
        key = (video_id, span.start, span.end)
        with self._memo_lock:
            fut = self._memo.get(key)
            if fut is None:
                fut = Future()
                self._memo[key] = fut
                self.backend_calls += 1
                owned = True
            else:
                owned = False
        if owned:
            try:
                fut.set_result(self._transcribe_backend(video_id, span))
            except Exception as exc:
                with self._memo_lock:
                    del self._memo[key]
                fut.set_exception(exc)
        return fut.result()

    def _transcribe_backend(self, video_id: str, span: AudioSpan) -> OracleHypothesis:
        raise NotImplementedError


class ScriptedOracle(MemoizedOracle):
    """Fixed span -> text responses; raises on any span that was not scripted."""

    def __init__(self, responses: dict[tuple[str, float, float], str]):
        super().__init__()
        self.responses = dict(responses)

    def _transcribe_backend(self, video_id: str, span: AudioSpan) -> OracleHypothesis:
        key = (video_id, span.start, span.end)
        if key not in self.responses:
            raise OracleProtocolViolation(f"no scripted response for {key}")
        return OracleHypothesis(video_id, span, self.responses[key])


class SimulatedOracle(MemoizedOracle):
    """Noisy-channel test double over a ground-truth subtitle timeline.

    The hypothesis for a span is the concatenation of every ground-truth
    transcript whose interval overlaps the span (in timeline order), passed
    through the channel with a seed derived from the request, so distinct
    spans are corrupted independently but reproducibly.
    """

    def __init__(
        self,
        ground_truth: dict[str, list[tuple[AudioSpan, str]]],
        channel: NoisyChannelConfig = PERFECT_CHANNEL,
    ):
        super().__init__()
        self.ground_truth = {
            video_id: sorted(intervals, key=lambda pair: pair[0].start)
            for video_id, intervals in ground_truth.items()
        }
        self.channel = channel

    def _transcribe_backend(self, video_id: str, span: AudioSpan) -> OracleHypothesis:
        t0 = time.perf_counter()
        spoken = "".join(
            text
            for interval, text in self.ground_truth.get(video_id, [])
            if interval.start < span.end and span.start < interval.end
        )
        seeded = NoisyChannelConfig(
            substitution_rate=self.channel.substitution_rate,
            insertion_rate=self.channel.insertion_rate,
            deletion_rate=self.channel.deletion_rate,
            seed=derive_seed(self.channel.seed, video_id, span.start, span.end),
            alphabet=self.channel.alphabet,
        )
        text = simulate_channel(spoken, seeded)
        return OracleHypothesis(video_id, span, text, latency=time.perf_counter() - t0)


class SubprocessOracle(MemoizedOracle):
    """Client for a recognizer spoken to over pipes, one line per request.

    Protocol: UTF-8, newline-terminated. Request ``video_id<TAB>start<TAB>end``
    (floats in repr form), response is the raw hypothesis line. Each worker
    process handles one request at a time; up to ``workers`` processes run
    concurrently. No retries: a dead or silent worker raises and is culled.
    """

    def __init__(self, command: str | list[str], workers: int = 1, timeout: float = 30.0):
        super().__init__()
        if workers < 1:
            raise ValueError("need at least one worker process")
        self._command = shlex.split(command) if isinstance(command, str) else list(command)
        self._timeout = timeout
        self._max_workers = workers
        self._spawned = 0
        self._procs: list[subprocess.Popen] = []
        self._idle: queue.Queue[subprocess.Popen] = queue.Queue()
        self._pool_lock = threading.Lock()

    def _acquire_worker(self) -> subprocess.Popen:
        # Polling get() so that a thread parked here can spawn a
        # replacement after another thread culls a failed worker.
        while True:
            try:
                return self._idle.get_nowait()
            except queue.Empty:
                pass
            with self._pool_lock:
                if self._spawned < self._max_workers:
                    self._spawned += 1
                    try:
                        proc = subprocess.Popen(
                            self._command,
                            stdin=subprocess.PIPE,
                            stdout=subprocess.PIPE,
                            text=True,
                            encoding="utf-8",
                            bufsize=1,
                        )
                    except OSError as exc:
                        self._spawned -= 1
                        raise OracleBackendExit(
                            f"cannot start backend {self._command!r}: {exc}"
                        ) from exc
                    self._procs.append(proc)
                    return proc
            try:
                return self._idle.get(timeout=0.05)
            except queue.Empty:
                continue

    def _discard_worker(self, proc: subprocess.Popen) -> None:
        with self._pool_lock:
            self._spawned -= 1
            if proc in self._procs:
                self._procs.remove(proc)
        proc.kill()

    def _transcribe_backend(self, video_id: str, span: AudioSpan) -> OracleHypothesis:
        if "\t" in video_id or "\n" in video_id:
            raise OracleProtocolViolation(f"video_id {video_id!r} cannot travel in the line protocol")
        proc = self._acquire_worker()
        t0 = time.perf_counter()
        try:
            try:
                proc.stdin.write(f"{video_id}\t{span.start!r}\t{span.end!r}\n")
                proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise OracleBackendExit(f"backend pipe closed: {exc}") from exc

            ready, _, _ = select.select([proc.stdout], [], [], self._timeout)
            if not ready:
                raise OracleTimeout(f"no response within {self._timeout} s")
            line = proc.stdout.readline()
            if line == "":
                code = proc.poll()
                if code is not None:
                    raise OracleBackendExit(f"backend exited with code {code}")
                raise OracleProtocolViolation("backend closed stdout without answering")
            if not line.endswith("\n"):
                raise OracleProtocolViolation("response line not newline-terminated")
        except OracleError:
            self._discard_worker(proc)
            raise
        self._idle.put(proc)
        return OracleHypothesis(video_id, span, line[:-1], latency=time.perf_counter() - t0)

    def close(self) -> None:
        with self._pool_lock:
            procs, self._procs = self._procs, []
            self._spawned = 0
        for proc in procs:
            proc.kill()
            proc.wait()

    def __enter__(self) -> "SubprocessOracle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
