"""Evaluator wire protocol: newline-delimited JSON over a plugin's stdio.

Message flow (UTF-8, one JSON object per line):

    <- {"type": "hello", "protocol_version": 1, "capabilities": [...]}
    -> {"type": "eval", "id": ..., "candidate": {...}, "epoch_budget": ..., "seed": ...}
    <- {"type": "progress", "id": ..., "epoch": ..., "accuracy": ...}   (once per epoch)
    <- {"type": "result", "id": ..., "curve": [...], "status": "ok"}
       or {"type": "result", "id": ..., "status": "failed", "reason": "..."}

The candidate payload carries recipe values in file units together with a
`units` map (including the SGD learning-rate multiplier) so a plugin needs
no access to the space file.
"""
from __future__ import annotations

import json
import queue
import subprocess
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from statistics import median
from typing import Sequence

from .errors import ProtocolError
from .space import Candidate, SearchSpaceDef, candidate_from_dict, candidate_to_dict

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class EvalRequest:
    id: int
    candidate: Candidate
    epoch_budget: int
    seed: int

    def __post_init__(self):
        if self.epoch_budget < 1:
            raise ValueError("epoch_budget must be >= 1")


@dataclass(frozen=True)
class EvalResult:
    id: int
    curve: tuple[float, ...]
    status: str  # "ok" | "failed"
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def final_accuracy(self) -> float:
        if not self.curve:
            raise ValueError("result has no curve")
        return self.curve[-1]


def recipe_units(space: SearchSpaceDef) -> dict[str, float]:
    units = dict(space.recipe.units)
    units["lr_sgd_multiplier"] = space.sgd_lr_multiplier
    return units


def serialize_request(req: EvalRequest, space: SearchSpaceDef) -> str:
    payload = candidate_to_dict(req.candidate)
    payload["units"] = recipe_units(space)
    return json.dumps({
        "type": "eval",
        "id": req.id,
        "candidate": payload,
        "epoch_budget": req.epoch_budget,
        "seed": req.seed,
    })


def parse_request(line: str) -> tuple[EvalRequest, dict[str, float]]:
    msg = _parse_line(line)
    if msg.get("type") != "eval":
        raise ProtocolError("expected an eval message", line)
    units = msg["candidate"].pop("units", {})
    req = EvalRequest(
        id=msg["id"],
        candidate=candidate_from_dict(msg["candidate"]),
        epoch_budget=msg["epoch_budget"],
        seed=msg["seed"],
    )
    return req, units


def serialize_result(res: EvalResult) -> str:
    if res.ok:
        return json.dumps({"type": "result", "id": res.id, "curve": list(res.curve), "status": "ok"})
    return json.dumps({"type": "result", "id": res.id, "status": "failed", "reason": res.reason or ""})


def parse_result(msg: dict, line: str = "") -> EvalResult:
    status = msg.get("status")
    if status == "ok":
        return EvalResult(id=msg["id"], curve=tuple(msg["curve"]), status="ok")
    if status == "failed":
        return EvalResult(id=msg["id"], curve=tuple(msg.get("curve", ())), status="failed",
                          reason=msg.get("reason", ""))
    raise ProtocolError(f"unknown result status {status!r}", line)


def _parse_line(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"malformed protocol line ({e.msg})", line) from e
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("protocol messages must be objects with a 'type'", line)
    return msg


# ---------------------------------------------------------------------------
# Subprocess plumbing


class _Plugin:
    """One plugin process with a line-reader thread."""

    def __init__(self, command: Sequence[str]):
        self.proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1,
        )
        self.lines: queue.Queue[str | None] = queue.Queue()
        self.reader = threading.Thread(target=self._read_loop, daemon=True)
        self.reader.start()
        hello_line = self.next_line(timeout=30.0)
        if hello_line is None:
            raise ProtocolError("plugin exited before sending hello")
        hello = _parse_line(hello_line)
        if hello.get("type") != "hello":
            raise ProtocolError("first plugin message must be hello", hello_line)
        if hello.get("protocol_version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: plugin speaks {hello.get('protocol_version')!r}, "
                f"engine speaks {PROTOCOL_VERSION}")

    def _read_loop(self) -> None:
        for line in self.proc.stdout:
            self.lines.put(line.rstrip("\n"))
        self.lines.put(None)  # EOF marker

    def send(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ProtocolError(f"cannot write to plugin: {e}") from e

    def next_line(self, timeout: float) -> str | None:
        """Next stdout line, None on EOF; raises TimeoutError."""
        try:
            return self.lines.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()
        if self.proc.stdin:
            self.proc.stdin.close()
        if self.proc.stdout:
            self.proc.stdout.close()


@dataclass
class ExternalEvaluator:
    """Runs eval requests through a wire-protocol plugin.

    Two concurrency modes: "per_slot" launches up to `parallelism` plugin
    processes, each handling one request at a time; "single" multiplexes up
    to `parallelism` outstanding requests over one process.  Results always
    come back in request order; a crashed or timed-out process fails its
    in-flight requests and a fresh process picks up the remainder.
    """

    space: SearchSpaceDef
    command: Sequence[str]
    parallelism: int = 1
    mode: str = "per_slot"  # "per_slot" | "single"
    timeout_floor: float = 60.0
    timeout_factor: float = 10.0
    calls: int = 0
    _durations: list = field(default_factory=list)

    def _deadline(self) -> float:
        if self._durations:
            return max(self.timeout_floor, self.timeout_factor * median(self._durations))
        return self.timeout_floor

    def evaluate(self, requests: Sequence[EvalRequest]) -> list[EvalResult]:
        if self.mode not in ("per_slot", "single"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.calls += len(requests)
        if not requests:
            return []
        ids = [r.id for r in requests]
        if len(set(ids)) != len(ids):
            raise ValueError("request ids must be unique within a batch")
        results: dict[int, EvalResult] = {}
        if self.mode == "per_slot":
            self._run_per_slot(requests, results)
        else:
            self._run_single(requests, results)
        return [results[r.id] for r in requests]

    # -- per_slot: one request in flight per process ------------------------

    def _run_per_slot(self, requests: Sequence[EvalRequest], results: dict[int, EvalResult]) -> None:
        pending = deque(requests)
        lock = threading.Lock()
        errors: list[Exception] = []

        def worker() -> None:
            plugin: _Plugin | None = None
            try:
                while True:
                    with lock:
                        if not pending:
                            break
                        req = pending.popleft()
                    if plugin is None:
                        plugin = _Plugin(self.command)
                    res, broken = self._roundtrip(plugin, req)
                    with lock:
                        results[req.id] = res
                    if broken:
                        plugin.close()
                        plugin = None
            except Exception as e:  # surfaced after join
                errors.append(e)
            finally:
                if plugin is not None:
                    plugin.close()

        n_workers = max(1, min(self.parallelism, len(requests)))
        threads = [threading.Thread(target=worker) for _ in range(n_workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        for req in requests:  # requests dropped by a raising worker
            results.setdefault(req.id, EvalResult(req.id, (), "failed", "worker aborted"))

    def _roundtrip(self, plugin: _Plugin, req: EvalRequest) -> tuple[EvalResult, bool]:
        """Send one request and read until its result; returns (result, process_broken)."""
        start = time.monotonic()
        deadline = start + self._deadline()
        progress: list[float] = []
        try:
            plugin.send(serialize_request(req, self.space))
        except ProtocolError:
            return EvalResult(req.id, (), "failed", "plugin unreachable"), True
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return EvalResult(req.id, tuple(progress), "failed", "timeout"), True
            try:
                line = plugin.next_line(timeout=remaining)
            except TimeoutError:
                return EvalResult(req.id, tuple(progress), "failed", "timeout"), True
            if line is None:
                return EvalResult(req.id, tuple(progress), "failed", "plugin exited"), True
            msg = _parse_line(line)
            if msg["type"] == "progress" and msg.get("id") == req.id:
                progress.append(msg["accuracy"])
            elif msg["type"] == "result" and msg.get("id") == req.id:
                self._durations.append(time.monotonic() - start)
                res = parse_result(msg, line)
                if res.status == "failed" and not res.curve and progress:
                    res = EvalResult(res.id, tuple(progress), "failed", res.reason)
                return res, False
            else:
                raise ProtocolError("unexpected message", line)

    # -- single: multiplex over one process ---------------------------------

    def _run_single(self, requests: Sequence[EvalRequest], results: dict[int, EvalResult]) -> None:
        remaining = deque(requests)
        plugin: _Plugin | None = None
        in_flight: dict[int, tuple[EvalRequest, float, float, list[float]]] = {}
        try:
            while remaining or in_flight:
                if plugin is None:
                    plugin = _Plugin(self.command)
                while remaining and len(in_flight) < max(1, self.parallelism):
                    req = remaining.popleft()
                    try:
                        plugin.send(serialize_request(req, self.space))
                        sent = time.monotonic()
                        in_flight[req.id] = (req, sent, sent + self._deadline(), [])
                    except ProtocolError:
                        remaining.appendleft(req)
                        break

                now = time.monotonic()
                expired = [rid for rid, (_, _, dl, _) in in_flight.items() if dl <= now]
                if expired or not in_flight:
                    for rid, (req, _, _, prog) in in_flight.items():
                        results[rid] = EvalResult(rid, tuple(prog), "failed",
                                                  "timeout" if rid in expired else "aborted with timed-out peer")
                    in_flight.clear()
                    plugin.close()
                    plugin = None
                    if not expired:  # could not even send: give up to avoid spinning
                        while remaining:
                            req = remaining.popleft()
                            results[req.id] = EvalResult(req.id, (), "failed", "plugin unreachable")
                    continue

                wait = min(dl for (_, _, dl, _) in in_flight.values()) - now
                try:
                    line = plugin.next_line(timeout=max(wait, 0.01))
                except TimeoutError:
                    continue
                if line is None:  # crash: fail in-flight, respawn for the rest
                    for rid, (req, _, _, prog) in in_flight.items():
                        results[rid] = EvalResult(rid, tuple(prog), "failed", "plugin exited")
                    in_flight.clear()
                    plugin.close()
                    plugin = None
                    continue
                msg = _parse_line(line)
                rid = msg.get("id")
                if msg["type"] == "progress" and rid in in_flight:
                    in_flight[rid][3].append(msg["accuracy"])
                elif msg["type"] == "result" and rid in in_flight:
                    req, sent, _, prog = in_flight.pop(rid)
                    self._durations.append(time.monotonic() - sent)
                    res = parse_result(msg, line)
                    if res.status == "failed" and not res.curve and prog:
                        res = EvalResult(res.id, tuple(prog), "failed", res.reason)
                    results[rid] = res
                else:
                    raise ProtocolError("unexpected message", line)
        finally:
            if plugin is not None:
                plugin.close()
