"""Durable run storage: transcripts, outcome records, and reports.

Everything on disk is line-delimited JSON stamped with a schema_version,
so stored runs stay readable across releases. A run directory looks like:

    out/
      transcripts/<task>.jsonl     one line per message-pool entry
      results/outcomes.jsonl       one summary line per (task, sample)
      reports/report.json, report.txt
"""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable

from .errors import NoCodeFound, SchemaError
from .orchestrator import SessionOutcome, Stage
from .roles import extract_code, parse_verdict

SCHEMA_VERSION = 1

TRANSCRIPTS_DIR = "transcripts"
RESULTS_DIR = "results"
REPORTS_DIR = "reports"
OUTCOMES_FILE = "outcomes.jsonl"

_SAFE_RE = re.compile(r"[^A-Za-z0-9._-]+")


def safe_task_id(task_id: str) -> str:
    return _SAFE_RE.sub("_", task_id)


def run_layout(out_dir: str | Path) -> dict[str, Path]:
    base = Path(out_dir)
    layout = {
        "base": base,
        "transcripts": base / TRANSCRIPTS_DIR,
        "results": base / RESULTS_DIR,
        "reports": base / REPORTS_DIR,
    }
    for key in ("transcripts", "results", "reports"):
        layout[key].mkdir(parents=True, exist_ok=True)
    return layout


# -- transcripts -----------------------------------------------------------

def transcript_records(task_id: str, outcome: SessionOutcome, with_ts: bool = True) -> list[dict]:
    records = []
    for entry in outcome.transcript:
        record = {
            "schema_version": SCHEMA_VERSION,
            "task_id": task_id,
            "stage": entry.stage.value,
            "round": entry.round,
            "role": entry.role.value,
            "content": entry.content,
        }
        if with_ts:
            record["ts"] = entry.ts
        records.append(record)
    return records


def transcript_bytes(task_id: str, outcome: SessionOutcome, with_ts: bool = True) -> bytes:
    lines = [json.dumps(r, sort_keys=True) for r in transcript_records(task_id, outcome, with_ts)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_transcript(transcripts_dir: str | Path, task_id: str, outcome: SessionOutcome,
                     name: str | None = None) -> Path:
    path = Path(transcripts_dir) / f"{name or safe_task_id(task_id)}.jsonl"
    path.write_bytes(transcript_bytes(task_id, outcome))
    return path


def read_transcript(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            record = json.loads(line)
            version = record.get("schema_version")
            if version != SCHEMA_VERSION:
                raise SchemaError(
                    f"{path}:{lineno}: transcript schema_version {version!r} "
                    f"is not supported (this build reads {SCHEMA_VERSION})"
                )
            for key in ("task_id", "stage", "round", "role", "content"):
                if key not in record:
                    raise SchemaError(f"{path}:{lineno}: transcript record lacks {key!r}")
            records.append(record)
    return records


# -- outcome summaries -----------------------------------------------------

def outcome_record(
    task_id: str,
    outcome: SessionOutcome,
    sample: int = 0,
    exec_status: str | None = None,
    exec_detail: str | None = None,
    wall_time_seconds: float | None = None,
    passed: bool | None = None,
) -> dict:
    final = outcome.final_code
    return {
        "schema_version": SCHEMA_VERSION,
        "task_id": task_id,
        "sample": sample,
        "approved": outcome.approved,
        "termination": outcome.termination.value,
        "rounds_used": outcome.rounds_used,
        "revision": final.revision if final else None,
        "final_source": final.source if final else None,
        "verdicts": _verdict_trail(outcome),
        "exec_status": exec_status,
        "exec_detail": exec_detail,
        "wall_time_seconds": wall_time_seconds,
        "passed": passed,
        "error": outcome.error,
    }


def error_record(task_id: str, sample: int, message: str) -> dict:
    """Summary line for a task whose pipeline failed before producing code."""
    return {
        "schema_version": SCHEMA_VERSION,
        "task_id": task_id,
        "sample": sample,
        "approved": False,
        "termination": None,
        "rounds_used": 0,
        "revision": None,
        "final_source": None,
        "verdicts": [],
        "exec_status": None,
        "exec_detail": None,
        "wall_time_seconds": None,
        "passed": False,
        "error": message,
    }


def _verdict_trail(outcome: SessionOutcome) -> list[dict]:
    trail = []
    for entry in outcome.transcript:
        if entry.stage is Stage.TESTING:
            report = parse_verdict(entry.content)
            trail.append(
                {"round": entry.round, "verdict": report.verdict.value,
                 "marker_found": report.marker_found}
            )
    return trail


def append_jsonl(path: str | Path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def load_outcomes(path: str | Path) -> dict[tuple[str, int], dict]:
    """Outcome records keyed by (task_id, sample); later lines win."""
    path = Path(path)
    if not path.exists():
        return {}
    out: dict[tuple[str, int], dict] = {}
    for record in read_jsonl(path):
        version = record.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(
                f"{path}: outcome schema_version {version!r} is not supported"
            )
        out[(record["task_id"], int(record.get("sample", 0)))] = record
    return out


# -- replay / parser-stability checks ---------------------------------------

def recompute_summary(transcript: Iterable[dict]) -> dict:
    """Re-derive code and verdicts from a stored transcript.

    Used by the replay command to confirm today's parsers still reduce an
    old transcript to the same artifacts it was stored with.
    """
    final_source = None
    revision = None
    verdicts = []
    approved = False
    for record in transcript:
        stage = record["stage"]
        if stage == Stage.CODING.value:
            try:
                final_source = extract_code(record["content"])
            except NoCodeFound:
                continue
            revision = 0 if revision is None else revision + 1
        elif stage == Stage.TESTING.value:
            report = parse_verdict(record["content"])
            verdicts.append(
                {"round": record["round"], "verdict": report.verdict.value,
                 "marker_found": report.marker_found}
            )
            approved = report.verdict.value == "pass"
    return {
        "final_source": final_source,
        "revision": revision,
        "verdicts": verdicts,
        "approved": approved,
    }


def summary_drift(stored: dict, recomputed: dict) -> list[str]:
    """Human-readable differences between a stored summary and a recompute."""
    drift = []
    for key in ("final_source", "revision", "verdicts", "approved"):
        if stored.get(key) != recomputed.get(key):
            drift.append(
                f"{key}: stored {stored.get(key)!r} != recomputed {recomputed.get(key)!r}"
            )
    return drift


# -- reports ----------------------------------------------------------------

def write_report(reports_dir: str | Path, report_dict: dict, table: str) -> tuple[Path, Path]:
    reports_dir = Path(reports_dir)
    json_path = reports_dir / "report.json"
    txt_path = reports_dir / "report.txt"
    payload = {"schema_version": SCHEMA_VERSION, **report_dict}
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    txt_path.write_text(table + "\n", encoding="utf-8")
    return json_path, txt_path


def load_report(reports_dir: str | Path) -> dict | None:
    path = Path(reports_dir) / "report.json"
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def reports_equal(a: dict | None, b: dict | None) -> bool:
    """Compare reports ignoring the generation timestamp."""
    if a is None or b is None:
        return False

    def scrub(d: dict) -> dict:
        d = json.loads(json.dumps(d))
        d.get("metadata", {}).pop("generated_at", None)
        return d

    return scrub(a) == scrub(b)
