"""Role instructions, prompt rendering, and parsing of role outputs.

The three team roles (analyst, coder, tester) are plain chat sessions
primed with an instruction template shipped under ``codeteam/templates/``.
Everything they say back is free text; this module turns that free text
into structured results: a plan from the analyst, source code from the
coder, and a pass/fail verdict from the tester.
"""
from __future__ import annotations

import ast
import re
import string
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import ConfigError, IncompleteContext, NoCodeFound


class Role(str, Enum):
    ANALYST = "analyst"
    CODER = "coder"
    TESTER = "tester"


class PromptSetting(str, Enum):
    NL_ONLY = "nl_only"
    NL_SIGNATURE_TESTS = "nl_signature_tests"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"


#: Final-line markers the tester is instructed to emit. Parsing is
#: case-insensitive; anything without a marker counts as a rejection.
APPROVAL_MARKER = "VERDICT: PASS"
REJECTION_MARKER = "VERDICT: FAIL"

_VERDICT_RE = re.compile(r"^\s*verdict\s*:\s*(pass|fail)\b", re.IGNORECASE)
_FENCE_RE = re.compile(r"^\s{0,3}(```+|~~~+)\s*([A-Za-z0-9_+.-]*)\s*$")
_ITEM_RE = re.compile(r"^\s*(?:\d+\s*[.)]\s+|[-*•]\s+)(.*\S)\s*$")
_STEPS_HEADER_RE = re.compile(r"^\s*#*\s*(?:high[- ]?level\s+)?(?:plan|steps)\b[^:]*:?\s*$", re.IGNORECASE)
_SUBTASK_HEADER_RE = re.compile(r"^\s*#*\s*sub-?tasks?\b[^:]*:?\s*$", re.IGNORECASE)

_INPUT_SHAPE = {
    PromptSetting.NL_ONLY: (
        "Requirements arrive as a natural-language description only."
    ),
    PromptSetting.NL_SIGNATURE_TESTS: (
        "Requirements arrive as a natural-language description together "
        "with a function signature and public test cases."
    ),
}


@dataclass(frozen=True)
class Requirement:
    """One code-generation request, in either prompt setting.

    Under NL_SIGNATURE_TESTS the signature and public test list must be
    present (the list may be empty); under NL_ONLY both must be absent.
    """

    text: str
    setting: PromptSetting
    signature: str | None = None
    public_tests: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("requirement text must be nonempty")
        if self.public_tests is not None and not isinstance(self.public_tests, tuple):
            object.__setattr__(self, "public_tests", tuple(self.public_tests))
        structured = self.setting is PromptSetting.NL_SIGNATURE_TESTS
        if structured and (self.signature is None or self.public_tests is None):
            raise ValueError(
                "NL_SIGNATURE_TESTS requirements need a signature and a public test list"
            )
        if not structured and (self.signature is not None or self.public_tests is not None):
            raise ValueError("NL_ONLY requirements carry no signature or public tests")


@dataclass(frozen=True)
class RoleInstruction:
    """An instruction template bound to a role, sent once per session."""

    role_id: Role
    template: str
    constraints: str = ""

    def render(self, req: Requirement) -> str:
        mapping = {
            "requirement": req.text,
            "setting": req.setting.value,
            "input_shape": _INPUT_SHAPE[req.setting],
        }
        try:
            text = string.Template(self.template).substitute(mapping)
        except (KeyError, ValueError) as exc:
            raise ConfigError(
                f"role instruction for {self.role_id.value!r} has an "
                f"unresolved placeholder: {exc}"
            ) from exc
        if self.constraints.strip():
            text = text.rstrip() + "\n\n" + self.constraints.strip()
        return text.rstrip() + "\n"


def load_role_instruction(role: Role, assets_dir: str | Path | None = None) -> RoleInstruction:
    """Load a role's instruction template from disk.

    ``assets_dir`` overrides the packaged defaults, so operators can edit
    instructions without touching code.
    """
    name = f"{role.value}.txt"
    if assets_dir is not None:
        path = Path(assets_dir) / name
        if not path.is_file():
            raise ConfigError(f"no instruction template at {path}")
        text = path.read_text(encoding="utf-8")
    else:
        text = resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")
    return RoleInstruction(role_id=role, template=text)


def load_default_instructions(assets_dir: str | Path | None = None) -> dict[Role, RoleInstruction]:
    return {role: load_role_instruction(role, assets_dir) for role in Role}


@dataclass(frozen=True)
class Plan:
    """Structured view of an analyst message; ``raw`` is always verbatim."""

    subtasks: tuple[str, ...]
    steps: tuple[str, ...]
    raw: str


@dataclass(frozen=True)
class TestReport:
    raw: str
    verdict: Verdict
    marker_found: bool


@dataclass(frozen=True)
class PromptContext:
    """Prerequisite outputs handed to a role for one stage prompt."""

    plan: str | None = None
    code: str | None = None
    report: str | None = None


def embed_in_fence(source: str, lang: str = "python") -> str:
    """Wrap source in a fenced code block (the inverse of extract_code)."""
    return f"```{lang}\n{source}\n```"


def extract_code(message: str) -> str:
    """Pull candidate source out of a chat message.

    Picks the longest fenced block (ties broken by last occurrence),
    strips the fences, and normalizes trailing whitespace. Without any
    fence, the whole message is returned only when it plausibly parses
    as code; otherwise NoCodeFound is raised.
    """
    blocks = _fenced_blocks(message)
    if blocks:
        best = max(range(len(blocks)), key=lambda i: (len(blocks[i]), i))
        body = blocks[best].rstrip()
        if body.strip():
            return body
        raise NoCodeFound("fenced block was empty")
    text = message.strip()
    if _plausibly_code(text):
        return text
    raise NoCodeFound("message contains no fenced code block")


def _fenced_blocks(message: str) -> list[str]:
    # split("\n"), not splitlines(): extraction must be verbatim, and
    # splitlines() also breaks on \x1c-\x1e, \x85,  ,  .
    blocks: list[str] = []
    current: list[str] | None = None
    for line in message.split("\n"):
        if _FENCE_RE.match(line):
            if current is None:
                current = []
            else:
                blocks.append("\n".join(current))
                current = None
        elif current is not None:
            current.append(line)
    if current:
        # Unterminated fence, usually a truncated reply; keep what we got.
        blocks.append("\n".join(current))
    return blocks


def _plausibly_code(text: str) -> bool:
    if not text:
        return False
    try:
        tree = ast.parse(text)
    except (SyntaxError, ValueError):
        return False
    if not tree.body:
        return False
    # A bare name or string literal is prose that happens to parse.
    for node in tree.body:
        if not isinstance(node, ast.Expr):
            return True
        if not isinstance(node.value, (ast.Constant, ast.Name)):
            return True
    return False


def parse_verdict(report: str) -> TestReport:
    """Read the tester's final decision; no marker means no approval."""
    verdict = Verdict.FAIL
    found = False
    for line in report.splitlines():
        m = _VERDICT_RE.match(line)
        if m:
            verdict = Verdict(m.group(1).lower())
            found = True
    return TestReport(raw=report, verdict=verdict, marker_found=found)


def parse_plan(message: str) -> Plan:
    """Best-effort split of an analyst message into subtasks and steps.

    Unstructured messages degrade to empty lists with the raw text
    preserved, so the coder can still be given the message verbatim.
    """
    subtasks: list[str] = []
    steps: list[str] = []
    bucket = subtasks
    for line in message.splitlines():
        if _STEPS_HEADER_RE.match(line):
            bucket = steps
            continue
        if _SUBTASK_HEADER_RE.match(line):
            bucket = subtasks
            continue
        m = _ITEM_RE.match(line)
        if m:
            bucket.append(m.group(1))
    return Plan(subtasks=tuple(subtasks), steps=tuple(steps), raw=message)


def requirement_block(req: Requirement) -> str:
    """Render the requirement the way every stage prompt presents it.

    Section order is fixed: description, then signature, then public
    tests (the latter two only in the structured setting).
    """
    parts = [f"Requirement:\n{req.text.strip()}"]
    if req.setting is PromptSetting.NL_SIGNATURE_TESTS:
        if req.signature and req.signature.strip():
            parts.append(f"Function signature:\n{req.signature.strip()}")
        if req.public_tests:
            parts.append("Public tests:\n" + "\n".join(t.strip() for t in req.public_tests))
    return "\n\n".join(parts)


def render_prompt(role_id: Role, req: Requirement, context: PromptContext = PromptContext()) -> str:
    """Build the user message for one stage of one role's session.

    The role instruction itself is never repeated here; it lives at the
    top of the session. Rendering is pure text assembly.
    """
    if role_id is Role.ANALYST:
        return requirement_block(req) + "\n\nAnalyze this requirement as instructed."
    if role_id is Role.CODER:
        if context.report is not None:
            if context.code is None:
                raise IncompleteContext("coder repair prompt needs the prior code")
            return (
                "Test report on your previous code:\n"
                + context.report.strip()
                + "\n\nYour previous code:\n"
                + embed_in_fence(context.code)
                + "\n\nRevise the program so the report's issues are fixed. "
                "Reply with the complete program."
            )
        parts = [requirement_block(req)]
        if context.plan is not None:
            parts.append("Implementation outline from the analyst:\n" + context.plan.strip())
        parts.append("Write the complete program.")
        return "\n\n".join(parts)
    if role_id is Role.TESTER:
        if context.code is None:
            raise IncompleteContext("tester prompt needs the candidate code")
        return (
            requirement_block(req)
            + "\n\nCandidate program:\n"
            + embed_in_fence(context.code)
            + "\n\nWrite your test report."
        )
    raise ValueError(f"unknown role: {role_id!r}")
