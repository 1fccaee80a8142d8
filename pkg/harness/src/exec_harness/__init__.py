"""Run one candidate-plus-tests job and emit one result document.

Protocol (schema version 1): a single JSON job arrives on stdin with
fields {schema_version, job_id, candidate_source, test_source,
entry_point, timeout_seconds, memory_limit_mb}; exactly one JSON result
{schema_version, job_id, status, detail, wall_time_seconds} leaves on
stdout, and the process exits 0. Unknown job fields are ignored.

Classification: the candidate is exec'd in a fresh namespace; any
exception there is ``error``. The test source then runs in the same
namespace (if it defines a callable ``check``, it is invoked with the
entry-point object); the first AssertionError is ``fail``, any other
exception is ``error``, and a clean finish is ``pass``. Internal faults
produce a ``harness_failure`` result rather than non-schema output.

The real stdout is detached before anything runs, so candidate prints,
os-level writes, and stderr noise can never pollute the protocol
channel; set EXEC_HARNESS_TEE=<path> to keep that output in a side file
instead of discarding it. Timeouts are the supervisor's job: it kills
the whole process group, which is why there is no in-harness alarm.
"""
from __future__ import annotations

import json
import os
import sys
import time
import traceback

SCHEMA_VERSION = 1

STATUS_PASS = "pass"
STATUS_FAIL = "fail"
STATUS_ERROR = "error"
STATUS_HARNESS_FAILURE = "harness_failure"

_DETAIL_LIMIT = 500


def _result(job_id: str, status: str, detail: str, wall: float) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "job_id": job_id,
        "status": status,
        "detail": detail[:_DETAIL_LIMIT],
        "wall_time_seconds": wall,
    }


def _describe(exc: BaseException) -> str:
    summary = traceback.format_exception_only(type(exc), exc)
    text = summary[-1].strip() if summary else type(exc).__name__
    # Point at the failing candidate/test line when the traceback has one.
    tb = exc.__traceback__
    line = None
    where = None
    while tb is not None:
        frame_file = tb.tb_frame.f_code.co_filename
        if frame_file in ("<candidate>", "<tests>"):
            line = tb.tb_lineno
            where = frame_file
        tb = tb.tb_next
    if line is not None:
        text += f" (at {where}:{line})"
    return text


def _apply_memory_limit(limit_mb) -> None:
    if not limit_mb:
        return
    try:
        import resource

        limit = int(limit_mb) << 20
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    except (ImportError, ValueError, OSError):
        pass  # cap is best-effort; wall-clock enforcement lives upstream


def run_job(job: dict) -> dict:
    """Evaluate one job dict and return the result dict."""
    start = time.perf_counter()
    job_id = str(job.get("job_id", ""))
    version = job.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        return _result(job_id, STATUS_HARNESS_FAILURE,
                       f"unsupported job schema_version: {version!r}", 0.0)
    candidate = job.get("candidate_source")
    tests = job.get("test_source")
    entry_point = str(job.get("entry_point") or "")
    if not isinstance(candidate, str) or not isinstance(tests, str):
        return _result(job_id, STATUS_HARNESS_FAILURE,
                       "job lacks candidate_source/test_source strings", 0.0)
    _apply_memory_limit(job.get("memory_limit_mb"))

    namespace: dict = {"__name__": "__candidate__"}
    status = STATUS_PASS
    detail = ""
    try:
        exec(compile(candidate, "<candidate>", "exec"), namespace)
    except BaseException as exc:
        status, detail = STATUS_ERROR, _describe(exc)
    else:
        try:
            exec(compile(tests, "<tests>", "exec"), namespace)
            check = namespace.get("check")
            if callable(check):
                if entry_point:
                    if entry_point not in namespace:
                        raise NameError(f"entry point {entry_point!r} is not defined")
                    check(namespace[entry_point])
                else:
                    check()
        except AssertionError as exc:
            status, detail = STATUS_FAIL, _describe(exc)
        except BaseException as exc:
            status, detail = STATUS_ERROR, _describe(exc)
    return _result(job_id, status, detail, time.perf_counter() - start)


def main(argv: list[str] | None = None) -> int:
    """Read one job from stdin, emit one result on the real stdout, exit 0."""
    try:
        protocol_fd = os.dup(1)
        tee_path = os.environ.get("EXEC_HARNESS_TEE")
        if tee_path:
            sink_fd = os.open(tee_path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
        else:
            sink_fd = os.open(os.devnull, os.O_WRONLY)
        # From here on, fds 1 and 2 point at the sink: candidate output of
        # any kind (print, sys.stdout, os.write) stays off the protocol fd.
        os.dup2(sink_fd, 1)
        os.dup2(sink_fd, 2)
    except OSError:
        return 1  # catastrophic startup failure: cannot even set up the channel

    try:
        raw = sys.stdin.read()
        try:
            job = json.loads(raw)
            if not isinstance(job, dict):
                raise ValueError("job document is not an object")
        except ValueError as exc:
            result = _result("", STATUS_HARNESS_FAILURE, f"unparseable job: {exc}", 0.0)
        else:
            result = run_job(job)
    except BaseException as exc:  # internal fault: still answer in-schema
        result = _result("", STATUS_HARNESS_FAILURE, f"internal fault: {exc!r}", 0.0)

    try:
        os.write(protocol_fd, (json.dumps(result, sort_keys=True) + "\n").encode("utf-8"))
    except OSError:
        return 1
    return 0
