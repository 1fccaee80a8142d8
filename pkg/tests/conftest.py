from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from codeteam.roles import PromptSetting, Requirement, embed_in_fence


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): acceptance criterion, one pass/fail line each"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker:
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        line = f"ACCEPTANCE {marker.args[0]}: {status}"
        report.sections.append(("acceptance", line))
        print(f"\n{line}")

STUB_HARNESS = Path(__file__).parent / "stub_harness.py"
STUB_HARNESS_CMD = (sys.executable, str(STUB_HARNESS))

PLAN_MESSAGE = (
    "Subtasks:\n"
    "1. Parse the inputs.\n"
    "2. Compute the result.\n"
    "Plan:\n"
    "- Implement the function.\n"
    "- Return the value."
)


def code_message(source: str) -> str:
    return "Here is the program:\n\n" + embed_in_fence(source)


def reject_report(note: str = "the edge cases are not handled") -> str:
    return f"Issues found: {note}.\nVERDICT: FAIL"


def approve_report() -> str:
    return "All aspects look correct and readable. No remaining issues.\nVERDICT: PASS"


def team_scripts(
    coder: list[str],
    tester: list[str] | None = None,
    analyst: list[str] | None = None,
    prefix: str = "",
) -> dict[str, list[str]]:
    scripts = {f"{prefix}coder": coder}
    if tester is not None:
        scripts[f"{prefix}tester"] = tester
    if analyst is not None:
        scripts[f"{prefix}analyst"] = analyst
    return scripts


@pytest.fixture
def simple_requirement() -> Requirement:
    return Requirement(
        text="Return the sum of two integers.", setting=PromptSetting.NL_ONLY
    )


# -- toy benchmark ----------------------------------------------------------

TOY_SOLUTIONS = {
    "toy/add": "def add(a, b):\n    return a + b",
    "toy/double": "def double(x):\n    return 2 * x",
    "toy/last": "def last(items):\n    return items[-1]",
}

TOY_WRONG_SOLUTIONS = {
    "toy/add": "def add(a, b):\n    return a - b",
    "toy/double": "def double(x):\n    return x",
    "toy/last": "def last(items):\n    return items[0]",
}


def toy_humaneval_records() -> list[dict]:
    return [
        {
            "task_id": "toy/add",
            "prompt": 'def add(a, b):\n    """Return the sum of a and b."""\n',
            "entry_point": "add",
            "test": (
                "def check(candidate):\n"
                "    assert candidate(1, 2) == 3\n"
                "    assert candidate(-1, 1) == 0\n"
            ),
        },
        {
            "task_id": "toy/double",
            "prompt": 'def double(x):\n    """Return twice the value of x."""\n',
            "entry_point": "double",
            "test": (
                "def check(candidate):\n"
                "    assert candidate(2) == 4\n"
                "    assert candidate(0) == 0\n"
            ),
        },
        {
            "task_id": "toy/last",
            "prompt": 'def last(items):\n    """Return the final element of a nonempty list."""\n',
            "entry_point": "last",
            "test": (
                "def check(candidate):\n"
                "    assert candidate([1, 2, 3]) == 3\n"
                "    assert candidate(['x']) == 'x'\n"
            ),
        },
    ]


def write_benchmark(path: Path, records: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def toy_benchmark(tmp_path: Path) -> Path:
    return write_benchmark(tmp_path / "toy.jsonl", toy_humaneval_records())


def toy_bench_scripts(solutions: dict[str, str] | None = None) -> dict[str, list[str]]:
    """Per-task scripts: analyst plan, one coder solution, tester approval."""
    solutions = solutions or TOY_SOLUTIONS
    scripts: dict[str, list[str]] = {}
    for task_id, source in solutions.items():
        scripts[f"{task_id}:analyst"] = [PLAN_MESSAGE]
        scripts[f"{task_id}:coder"] = [code_message(source)]
        scripts[f"{task_id}:tester"] = [approve_report()]
    return scripts


def bench_config(tmp_path: Path, benchmark: Path, scripts: dict, **extra) -> dict:
    cfg = {
        "team": ["analyst", "coder", "tester"],
        "setting": "nl_signature_tests",
        "backend": {"kind": "mock", "scripts": scripts},
        "benchmark": str(benchmark),
        "kind": "humaneval",
        "out_dir": str(tmp_path / "out"),
        "job_timeout": 10.0,
        "harness_cmd": list(STUB_HARNESS_CMD),
    }
    cfg.update(extra)
    return cfg
