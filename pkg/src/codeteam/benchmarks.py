"""Load benchmark task files and build requirements for both prompt settings.

Supported families (all line-delimited JSON, optionally gzipped):

HumanEval-shaped records
    {"task_id", "prompt", "entry_point", "test"} with optional
    "example_test" (a check function whose assert lines become public
    tests) or "public_tests" (assert strings, used as-is).

MBPP-shaped records
    {"task_id", "text", "test_list"} with optional "entry_point" and
    "signature". "prompt" is accepted as an alias for "text". The first
    three test_list entries are kept as the task's public tests.

Extended-test variants reuse the same shapes; they are replacement test
suites keyed by task_id (see with_test_suite).
"""
from __future__ import annotations

import ast
import gzip
import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, MissingSignature
from .roles import PromptSetting, Requirement


class BenchmarkKind(str, Enum):
    HUMANEVAL = "humaneval"
    HUMANEVAL_ET = "humaneval_et"
    MBPP = "mbpp"
    MBPP_SANITIZED = "mbpp_sanitized"
    MBPP_ET = "mbpp_et"


_HUMANEVAL_FAMILY = {BenchmarkKind.HUMANEVAL, BenchmarkKind.HUMANEVAL_ET}
_MBPP_FAMILY = {BenchmarkKind.MBPP, BenchmarkKind.MBPP_SANITIZED, BenchmarkKind.MBPP_ET}

# Names that show up inside asserts but are never the function under test.
_NOT_ENTRY_POINTS = frozenset(
    "assert abs all any bool dict enumerate float frozenset int isclose len list "
    "map math max min pow print range repr round set sorted str sum tuple type zip".split()
)
_CALL_RE = re.compile(r"\b([A-Za-z_]\w*)\s*\(")


@dataclass(frozen=True)
class Task:
    """One benchmark problem; hidden tests never reach a prompt."""

    task_id: str
    nl_description: str
    entry_point: str
    hidden_tests: str
    source_benchmark: BenchmarkKind
    signature: str | None = None
    public_tests: tuple[str, ...] = ()
    prompt: str | None = None

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be nonempty")
        if not self.hidden_tests.strip():
            raise ValueError(f"{self.task_id}: hidden tests must be nonempty")
        if not self.entry_point:
            raise ValueError(f"{self.task_id}: entry point must be nonempty")


def load_benchmark(path: str | Path, kind: BenchmarkKind | str) -> list[Task]:
    """Read one task per line; FormatError carries the offending line number."""
    kind = BenchmarkKind(kind)
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    tasks: list[Task] = []
    seen: set[str] = set()
    with opener(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                task = _task_from_record(record, kind)
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if task.task_id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate task_id {task.task_id!r}")
            seen.add(task.task_id)
            tasks.append(task)
    return tasks


def dump_benchmark(tasks: Iterable[Task], path: str | Path) -> None:
    """Re-serialize tasks; loading the result reproduces equal tasks."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(_record_from_task(task)) + "\n")


def _task_from_record(record: dict, kind: BenchmarkKind) -> Task:
    if kind in _HUMANEVAL_FAMILY:
        task_id = str(record["task_id"])
        prompt = record["prompt"]
        entry_point = record["entry_point"]
        test = record["test"]
        if not isinstance(prompt, str) or not isinstance(test, str):
            raise ValueError("'prompt' and 'test' must be strings")
        nl, signature = _parse_humaneval_prompt(prompt, entry_point)
        if "public_tests" in record:
            public = tuple(str(t) for t in record["public_tests"])
        elif "example_test" in record:
            public = _asserts_from_check(str(record["example_test"]), entry_point)
        else:
            public = ()
        return Task(
            task_id=task_id,
            nl_description=nl,
            entry_point=entry_point,
            hidden_tests=test,
            source_benchmark=kind,
            signature=signature,
            public_tests=public,
            prompt=prompt,
        )
    text = record.get("text", record.get("prompt"))
    if text is None:
        raise KeyError("'text'")
    test_list = record["test_list"]
    if not isinstance(test_list, list) or not test_list:
        raise ValueError("'test_list' must be a nonempty list")
    test_list = [str(t) for t in test_list]
    entry_point = record.get("entry_point") or _derive_entry_point(test_list)
    return Task(
        task_id=str(record["task_id"]),
        nl_description=str(text),
        entry_point=entry_point,
        hidden_tests="\n".join(test_list),
        source_benchmark=kind,
        signature=record.get("signature"),
        public_tests=tuple(test_list[:3]),
        prompt=str(text),
    )


def _record_from_task(task: Task) -> dict:
    if task.source_benchmark in _HUMANEVAL_FAMILY:
        record = {
            "task_id": task.task_id,
            "prompt": task.prompt,
            "entry_point": task.entry_point,
            "test": task.hidden_tests,
        }
        if task.public_tests:
            record["public_tests"] = list(task.public_tests)
        return record
    record = {
        "task_id": task.task_id,
        "text": task.nl_description,
        "test_list": task.hidden_tests.splitlines(),
        "entry_point": task.entry_point,
    }
    if task.signature is not None:
        record["signature"] = task.signature
    return record


def _parse_humaneval_prompt(prompt: str, entry_point: str) -> tuple[str, str | None]:
    """Split a prompt into (docstring text, def header) for the entry point."""
    try:
        tree = ast.parse(prompt + "    pass\n")
    except SyntaxError:
        try:
            tree = ast.parse(prompt)
        except SyntaxError:
            return prompt.strip(), None
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == entry_point:
            doc = ast.get_docstring(node)
            signature = _signature_text(prompt, entry_point)
            if doc:
                return doc.strip(), signature
            return prompt.strip(), signature
    return prompt.strip(), _signature_text(prompt, entry_point)


def _signature_text(prompt: str, entry_point: str) -> str | None:
    marker = f"def {entry_point}"
    start = prompt.rfind(marker)
    if start < 0:
        return None
    depth = 0
    for i in range(start, len(prompt)):
        ch = prompt[i]
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == ":" and depth == 0:
            return prompt[start : i + 1]
    return None


def _asserts_from_check(check_source: str, entry_point: str) -> tuple[str, ...]:
    lines = []
    for line in check_source.splitlines():
        stripped = line.strip()
        if stripped.startswith("assert"):
            lines.append(stripped.replace("candidate(", f"{entry_point}("))
    return tuple(lines)


def _derive_entry_point(test_list: Sequence[str]) -> str:
    for item in test_list:
        for name in _CALL_RE.findall(item):
            if name not in _NOT_ENTRY_POINTS:
                return name
    raise ValueError("could not derive an entry point from test_list")


def to_requirement(
    task: Task,
    setting: PromptSetting | str,
    *,
    mbpp_first_assert_public: bool = False,
) -> Requirement:
    """Build the prompt-facing requirement for a task under one setting.

    The MBPP flag controls whether the first listed assert is shown as a
    public test under the structured setting; it defaults to off because
    shown asserts are also members of the hidden suite.
    """
    setting = PromptSetting(setting)
    if setting is PromptSetting.NL_ONLY:
        return Requirement(text=task.nl_description, setting=setting)
    if not task.signature or not task.signature.strip():
        raise MissingSignature(
            f"{task.task_id}: no function signature available for the "
            "NL+signature+tests setting"
        )
    if task.source_benchmark in _MBPP_FAMILY:
        public = (task.public_tests[0],) if (mbpp_first_assert_public and task.public_tests) else ()
    else:
        public = task.public_tests
    return Requirement(
        text=task.nl_description,
        setting=setting,
        signature=task.signature,
        public_tests=public,
    )


def with_test_suite(base: Sequence[Task], replacements: Sequence[Task]) -> list[Task]:
    """Swap in replacement hidden-test suites (extended-test variants) by task_id."""
    by_id = {t.task_id: t for t in replacements}
    out = []
    for task in base:
        other = by_id.get(task.task_id)
        if other is None:
            out.append(task)
        else:
            out.append(
                replace(task, hidden_tests=other.hidden_tests, source_benchmark=other.source_benchmark)
            )
    return out


def find_test_leaks(prompts: Iterable[str], tasks: Iterable[Task], min_len: int = 10) -> list[tuple[str, str]]:
    """Scan rendered prompts for hidden-test substrings.

    Returns (task_id, leaked line) pairs; an empty list means no prompt
    revealed any meaningful hidden-test line.
    """
    prompt_blob = "\n".join(prompts)
    leaks: list[tuple[str, str]] = []
    for task in tasks:
        for line in task.hidden_tests.splitlines():
            needle = line.strip()
            if len(needle) >= min_len and needle in prompt_blob:
                leaks.append((task.task_id, needle))
    return leaks
