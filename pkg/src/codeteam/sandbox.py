"""Supervise out-of-process execution of candidate code against tests.

Each job is handed to a fresh harness child process as one JSON document
on stdin; the child replies with one JSON document on stdout and exits.
The supervisor enforces the wall-clock budget by killing the child's
process group, so a hanging candidate can never block a worker.

Wire schema (version 1, line-delimited JSON, one document per direction):

    job    {"schema_version", "job_id", "candidate_source", "test_source",
            "entry_point", "timeout_seconds", "memory_limit_mb"}
    result {"schema_version", "job_id", "status", "detail",
            "wall_time_seconds"}

``status`` is one of pass | fail | error | timeout | harness_failure.
The harness itself only ever emits pass/fail/error/harness_failure;
timeout is assigned here when the child has to be killed. Alternate
candidate-language harnesses only need to speak this schema.
"""
from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import threading
import time
from contextlib import nullcontext
from dataclasses import dataclass
from enum import Enum

WIRE_SCHEMA_VERSION = 1
DEFAULT_TIMEOUT_SECONDS = 10.0
DEFAULT_GRACE_SECONDS = 2.0
#: Works once the companion harness package is installed in the same
#: environment; point at any schema-speaking executable otherwise.
DEFAULT_HARNESS_COMMAND = (sys.executable, "-m", "exec_harness")

_DETAIL_LIMIT = 500


class ExecStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"
    TIMEOUT = "timeout"
    HARNESS_FAILURE = "harness_failure"


_HARNESS_STATUSES = {ExecStatus.PASS, ExecStatus.FAIL, ExecStatus.ERROR, ExecStatus.HARNESS_FAILURE}


@dataclass(frozen=True)
class ExecJob:
    job_id: str
    candidate_source: str
    test_source: str
    entry_point: str
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS
    memory_limit_mb: int | None = None

    def __post_init__(self) -> None:
        if not self.job_id:
            raise ValueError("job_id must be nonempty")
        if not self.candidate_source.strip():
            raise ValueError("candidate_source must be nonempty")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")


@dataclass(frozen=True)
class ExecutionResult:
    job_id: str
    status: ExecStatus
    detail: str
    wall_time_seconds: float


def encode_job(job: ExecJob) -> str:
    return json.dumps(
        {
            "schema_version": WIRE_SCHEMA_VERSION,
            "job_id": job.job_id,
            "candidate_source": job.candidate_source,
            "test_source": job.test_source,
            "entry_point": job.entry_point,
            "timeout_seconds": job.timeout_seconds,
            "memory_limit_mb": job.memory_limit_mb,
        },
        sort_keys=True,
    )


def execute(
    job: ExecJob,
    command: tuple[str, ...] | list[str] | None = None,
    grace: float = DEFAULT_GRACE_SECONDS,
    semaphore: threading.Semaphore | None = None,
) -> ExecutionResult:
    """Run one job in a fresh harness child and classify the outcome.

    Safe to call from many workers at once; an optional semaphore caps
    the number of live children. The child is killed (whole process
    group) once the job's wall-clock budget expires.
    """
    cmd = list(command if command is not None else DEFAULT_HARNESS_COMMAND)
    ctx = semaphore if semaphore is not None else nullcontext()
    with ctx:
        start = time.perf_counter()
        try:
            proc = subprocess.Popen(
                cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                start_new_session=True,
            )
        except OSError as exc:
            return ExecutionResult(
                job.job_id, ExecStatus.HARNESS_FAILURE, f"failed to launch harness: {exc}", 0.0
            )
        try:
            out, err = proc.communicate(encode_job(job) + "\n", timeout=job.timeout_seconds)
        except subprocess.TimeoutExpired:
            _kill_process_group(proc)
            try:
                proc.communicate(timeout=grace)
            except subprocess.TimeoutExpired:
                proc.kill()
            wall = time.perf_counter() - start
            return ExecutionResult(
                job.job_id,
                ExecStatus.TIMEOUT,
                f"killed after exceeding the {job.timeout_seconds}s budget",
                wall,
            )
        wall = time.perf_counter() - start
    return _classify(job, out, err, wall)


def _kill_process_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        proc.kill()


def _classify(job: ExecJob, out: str, err: str, wall: float) -> ExecutionResult:
    line = ""
    for candidate_line in reversed((out or "").splitlines()):
        if candidate_line.strip():
            line = candidate_line
            break
    if not line:
        detail = "harness emitted no result"
        if err and err.strip():
            detail += f" (stderr: {err.strip()[-_DETAIL_LIMIT:]})"
        return ExecutionResult(job.job_id, ExecStatus.HARNESS_FAILURE, detail, wall)
    try:
        doc = json.loads(line)
    except json.JSONDecodeError:
        return ExecutionResult(
            job.job_id,
            ExecStatus.HARNESS_FAILURE,
            f"unparseable harness output: {line[:_DETAIL_LIMIT]}",
            wall,
        )
    if not isinstance(doc, dict):
        return ExecutionResult(
            job.job_id, ExecStatus.HARNESS_FAILURE, "harness result is not an object", wall
        )
    if doc.get("schema_version") != WIRE_SCHEMA_VERSION:
        return ExecutionResult(
            job.job_id,
            ExecStatus.HARNESS_FAILURE,
            f"unsupported result schema_version: {doc.get('schema_version')!r}",
            wall,
        )
    if doc.get("job_id") != job.job_id:
        return ExecutionResult(
            job.job_id,
            ExecStatus.HARNESS_FAILURE,
            f"result job_id {doc.get('job_id')!r} does not match {job.job_id!r}",
            wall,
        )
    try:
        status = ExecStatus(doc.get("status"))
    except ValueError:
        return ExecutionResult(
            job.job_id,
            ExecStatus.HARNESS_FAILURE,
            f"unknown result status: {doc.get('status')!r}",
            wall,
        )
    if status not in _HARNESS_STATUSES:
        return ExecutionResult(
            job.job_id,
            ExecStatus.HARNESS_FAILURE,
            f"harness may not emit status {status.value!r}",
            wall,
        )
    detail = str(doc.get("detail", ""))[:_DETAIL_LIMIT]
    return ExecutionResult(job.job_id, status, detail, wall)
