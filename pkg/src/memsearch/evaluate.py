"""Candidate accuracy evaluation.

Two interchangeable evaluators: a deterministic synthetic oracle for
desk-scale runs, and a client for an external trainer process speaking
newline-delimited JSON over its stdio (request: {"id","arch","seed","epochs"},
response: {"id","accuracy"} or {"id","error"}). Setting MEMNAS_TRAINER_DEBUG
traces the protocol to the log.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import queue
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .arch import NetworkArch, canonical_hash, from_json_obj, to_json_obj
from .memory import weight_count

log = logging.getLogger(__name__)

UNREACHABLE = "unreachable"
TIMEOUT = "timeout"
MALFORMED = "malformed"
TRAINER_ERROR = "error"


@dataclass(frozen=True)
class EvalRequest:
    id: str
    arch: NetworkArch
    seed: int
    budget: int = 3  # training epochs handed to the trainer


@dataclass(frozen=True)
class EvalResult:
    id: str
    accuracy: float
    wall_time: float | None = None


@dataclass(frozen=True)
class EvalFailure:
    id: str
    reason: str
    detail: str = ""


@dataclass
class EvalOutcome:
    results: list[EvalResult] = field(default_factory=list)
    failures: list[EvalFailure] = field(default_factory=list)

    def accuracy_by_id(self) -> dict[str, float]:
        return {r.id: r.accuracy for r in self.results}


# ---------------------------------------------------------------------------
# Synthetic oracle

@dataclass(frozen=True)
class SyntheticConfig:
    a_floor: float = 0.10
    a_ceil: float = 0.95
    alpha: float = 1.5
    beta: float = 0.3
    sigma: float = 0.005


def _op_mix(arch: NetworkArch) -> float:
    """Share of pooling/identity layers among all op layers."""
    total = 0
    weightless = 0
    for block in arch.blocks:
        for cell in block.cells:
            for op in (cell.op1, cell.op2):
                total += 1
                if op.is_pool or op.is_identity:
                    weightless += 1
    return weightless / total if total else 0.0


def synthetic_accuracy(arch: NetworkArch, seed: int, config: SyntheticConfig | None = None) -> float:
    """Deterministic stand-in for measured accuracy.

    Saturating in parameter count, penalized by the pooling/identity share,
    with optional seeded noise keyed on (canonical hash, seed); identical
    inputs give identical outputs on any platform.
    """
    cfg = config or SyntheticConfig()
    params_m = weight_count(arch) / 1e6
    growth = (cfg.a_ceil - cfg.a_floor) * (1.0 - math.exp(-cfg.alpha * params_m))
    acc = cfg.a_floor + growth * (1.0 - cfg.beta * _op_mix(arch))
    if cfg.sigma > 0:
        digest = hashlib.sha256(f"{canonical_hash(arch)}:{seed}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        acc += float(rng.normal(0.0, cfg.sigma))
    return min(1.0, max(0.0, acc))


class SyntheticEvaluator:
    """In-process evaluator backed by the synthetic oracle; never fails."""

    def __init__(self, config: SyntheticConfig | None = None):
        self.config = config or SyntheticConfig()

    def evaluate(self, requests: list[EvalRequest]) -> EvalOutcome:
        outcome = EvalOutcome()
        for req in requests:
            outcome.results.append(
                EvalResult(req.id, synthetic_accuracy(req.arch, req.seed, self.config))
            )
        return outcome


# ---------------------------------------------------------------------------
# External trainer client

def _trace() -> bool:
    return bool(os.environ.get("MEMNAS_TRAINER_DEBUG"))


def _run_shard(requests: list[EvalRequest], command: list[str], timeout: float) -> EvalOutcome:
    outcome = EvalOutcome()
    if not requests:
        return outcome
    try:
        proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
    except OSError as e:
        for req in requests:
            outcome.failures.append(EvalFailure(req.id, UNREACHABLE, str(e)))
        return outcome

    start = time.monotonic()
    pending: dict[str, EvalRequest] = {req.id: req for req in requests}
    lines: queue.Queue = queue.Queue()

    def reader():
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    thread = threading.Thread(target=reader, daemon=True)
    thread.start()

    try:
        for req in requests:
            payload = json.dumps(
                {
                    "id": req.id,
                    "arch": to_json_obj(req.arch),
                    "seed": req.seed,
                    "epochs": req.budget,
                }
            )
            if _trace():
                log.debug("trainer <- %s", payload)
            proc.stdin.write(payload + "\n")
        proc.stdin.flush()
        proc.stdin.close()
    except (BrokenPipeError, OSError) as e:
        log.debug("trainer stdin closed early: %s", e)

    eof = False
    while pending:
        remaining = start + timeout - time.monotonic()
        if remaining <= 0 or eof:
            reason = TIMEOUT if not eof else UNREACHABLE
            for rid in sorted(pending):
                outcome.failures.append(
                    EvalFailure(rid, reason, "no response before deadline" if not eof else
                                "trainer closed its output stream")
                )
            pending.clear()
            break
        try:
            line = lines.get(timeout=remaining)
        except queue.Empty:
            continue
        if line is None:
            eof = True
            continue
        if _trace():
            log.debug("trainer -> %s", line.rstrip("\n"))
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            log.warning("discarding unparseable trainer line: %r", line[:200])
            continue
        rid = obj.get("id")
        if rid not in pending:
            log.warning("trainer responded for unknown id %r", rid)
            continue
        del pending[rid]
        if "error" in obj:
            outcome.failures.append(EvalFailure(rid, TRAINER_ERROR, str(obj["error"])))
            continue
        acc = obj.get("accuracy")
        if not isinstance(acc, (int, float)) or not math.isfinite(acc) or not 0 <= acc <= 1:
            outcome.failures.append(
                EvalFailure(rid, MALFORMED, f"bad accuracy field: {obj.get('accuracy')!r}")
            )
            continue
        wall = obj.get("wall_time")
        outcome.results.append(
            EvalResult(rid, float(acc), float(wall) if isinstance(wall, (int, float)) else None)
        )

    # terminate first so the reader thread sees EOF; closing the pipe while
    # the thread is blocked in a read would wait on the read's own lock
    if proc.poll() is None:
        proc.terminate()
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
    thread.join(timeout=5)
    try:
        proc.stdout.close()
    except OSError:  # pragma: no cover - best-effort cleanup
        pass
    return outcome


def external_evaluate(
    requests: list[EvalRequest],
    command: list[str],
    timeout: float = 120.0,
    parallelism: int = 1,
) -> EvalOutcome:
    """Evaluate candidates with external trainer processes.

    Requests are sharded round-robin over `parallelism` worker processes, each
    handled sequentially by its process. Failures are reported per id
    (unreachable / timeout / malformed / error); results plus failures always
    cover every request, and aggregation order follows the request order.
    """
    ids = [r.id for r in requests]
    if len(set(ids)) != len(ids):
        raise ValueError("request ids must be unique within a batch")
    shards = [requests[i::parallelism] for i in range(max(1, parallelism))]
    shards = [s for s in shards if s]
    if len(shards) <= 1:
        merged = _run_shard(requests, command, timeout)
    else:
        merged = EvalOutcome()
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            for outcome in pool.map(lambda s: _run_shard(s, command, timeout), shards):
                merged.results.extend(outcome.results)
                merged.failures.extend(outcome.failures)
    by_id_result = {r.id: r for r in merged.results}
    by_id_failure = {f.id: f for f in merged.failures}
    ordered = EvalOutcome()
    for rid in ids:
        if rid in by_id_result:
            ordered.results.append(by_id_result[rid])
        else:
            ordered.failures.append(by_id_failure[rid])
    return ordered


class ExternalEvaluator:
    """Evaluator facade over external_evaluate with a fixed trainer command."""

    def __init__(self, command: list[str], timeout: float = 120.0, parallelism: int = 1):
        if not command:
            raise ValueError("trainer command must be non-empty")
        self.command = command
        self.timeout = timeout
        self.parallelism = parallelism

    def evaluate(self, requests: list[EvalRequest]) -> EvalOutcome:
        return external_evaluate(requests, self.command, self.timeout, self.parallelism)


def parse_request_line(line: str) -> EvalRequest:
    """Decode one wire-format request line (used by stub trainers and tests)."""
    obj = json.loads(line)
    return EvalRequest(
        id=str(obj["id"]),
        arch=from_json_obj(obj["arch"]),
        seed=int(obj.get("seed", 0)),
        budget=int(obj.get("epochs", 1)),
    )
