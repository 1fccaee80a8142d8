"""Drive one collaboration session: stages, message pool, update rule.

A session walks an ordered stage list (analysis, coding, testing by
default), routing each stage's output through an append-only message
pool. The code deliverable changes only at coding stages. When a testing
stage exists, the testing->coding edge loops until the tester approves
or the interaction cap is hit; the last coder revision is returned
either way.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .chat import ChatBackend, ChatSession
from .errors import MissingPrerequisite, NoCodeFound, RoleFailure
from .roles import (
    PromptContext,
    Requirement,
    Role,
    RoleInstruction,
    Verdict,
    extract_code,
    load_default_instructions,
    parse_verdict,
    render_prompt,
)


class Stage(str, Enum):
    ANALYSIS = "analysis"
    CODING = "coding"
    TESTING = "testing"


class Termination(str, Enum):
    APPROVED = "approved"
    CAP_REACHED = "cap_reached"
    ROLE_ERROR = "role_error"


_STAGE_ROLE = {
    Stage.ANALYSIS: Role.ANALYST,
    Stage.CODING: Role.CODER,
    Stage.TESTING: Role.TESTER,
}

#: Message sent to the coder when its previous reply carried no code block.
RETRY_NUDGE = (
    "Your previous reply did not contain a usable code block. Reply again "
    "with the complete program in a single fenced code block."
)


@dataclass(frozen=True)
class StageGraph:
    """Stage order, stage->role assignment, loop edge, and interaction cap."""

    stages: tuple[Stage, ...]
    role_of: Mapping[Stage, Role]
    loop_edge: tuple[Stage, Stage] | None = None
    max_interactions: int = 4

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("a stage graph needs at least one stage")
        if len(set(self.stages)) != len(self.stages):
            raise ValueError("stages must be unique")
        if Stage.CODING not in self.stages:
            raise ValueError("a stage graph needs a coding stage")
        if set(self.role_of) != set(self.stages):
            raise ValueError("every stage must map to exactly one role")
        if self.loop_edge is not None:
            src, dst = self.loop_edge
            if src not in self.stages or dst not in self.stages:
                raise ValueError("loop edge endpoints must be member stages")
        if self.max_interactions < 1:
            raise ValueError("max_interactions must be >= 1")

    @classmethod
    def for_team(cls, team, max_interactions: int = 4) -> "StageGraph":
        """Build the canonical graph for a role subset; Coder is mandatory."""
        members = {Role(r) for r in team}
        if Role.CODER not in members:
            raise ValueError("the team must include the coder")
        stages: list[Stage] = []
        if Role.ANALYST in members:
            stages.append(Stage.ANALYSIS)
        stages.append(Stage.CODING)
        loop = None
        if Role.TESTER in members:
            stages.append(Stage.TESTING)
            loop = (Stage.TESTING, Stage.CODING)
        role_of = {s: _STAGE_ROLE[s] for s in stages}
        return cls(
            stages=tuple(stages),
            role_of=role_of,
            loop_edge=loop,
            max_interactions=max_interactions,
        )


@dataclass(frozen=True)
class PoolEntry:
    stage: Stage
    round: int
    role: Role
    content: str
    ts: float


class MessagePool:
    """Append-only record of stage outputs, totally ordered by insertion."""

    def __init__(self) -> None:
        self._entries: list[PoolEntry] = []

    def append(self, stage: Stage, round_index: int, role: Role, content: str) -> PoolEntry:
        entry = PoolEntry(stage=stage, round=round_index, role=role, content=content, ts=time.time())
        self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[PoolEntry, ...]:
        return tuple(self._entries)

    def latest(self, stage: Stage) -> PoolEntry | None:
        for entry in reversed(self._entries):
            if entry.stage is stage:
                return entry
        return None

    def count(self, stage: Stage) -> int:
        return sum(1 for e in self._entries if e.stage is stage)

    def snapshot(self) -> tuple[PoolEntry, ...]:
        return self.entries


@dataclass(frozen=True)
class CodeArtifact:
    """The evolving deliverable; source is verbatim from the last extraction."""

    source: str
    revision: int
    origin_round: int


@dataclass(frozen=True)
class SessionOutcome:
    final_code: CodeArtifact | None
    approved: bool
    rounds_used: int
    transcript: tuple[PoolEntry, ...]
    termination: Termination
    error: str | None = None


@dataclass(frozen=True)
class CollabConfig:
    """Per-session knobs that are not part of the stage graph."""

    parse_retries: int = 1
    tag_prefix: str = ""


def apply_update(output: str, artifact: CodeArtifact | None, stage: Stage,
                 round_index: int = 0) -> CodeArtifact | None:
    """Update the deliverable: replace it at coding stages, identity elsewhere.

    The first coding output creates revision 0; each later coding output
    bumps the revision by exactly one.
    """
    if stage is not Stage.CODING:
        return artifact
    source = extract_code(output)
    revision = 0 if artifact is None else artifact.revision + 1
    return CodeArtifact(source=source, revision=revision, origin_round=round_index)


class CollaborationSession:
    """One requirement's walk through the stage graph.

    Sessions are strictly sequential and share nothing; run several
    instances concurrently for distinct tasks.
    """

    def __init__(
        self,
        req: Requirement,
        graph: StageGraph,
        backend: ChatBackend,
        config: CollabConfig | None = None,
        instructions: Mapping[Role, RoleInstruction] | None = None,
    ) -> None:
        self.req = req
        self.graph = graph
        self.backend = backend
        self.config = config or CollabConfig()
        if instructions is None:
            instructions = load_default_instructions()
        self.pool = MessagePool()
        self.artifact: CodeArtifact | None = None
        self.rounds_used = 0
        self.sessions: dict[Role, ChatSession] = {}
        for stage in graph.stages:
            role = graph.role_of[stage]
            if role not in self.sessions:
                tag = f"{self.config.tag_prefix}{role.value}"
                self.sessions[role] = backend.open_session(
                    instructions[role].render(req), tag=tag
                )

    # -- stage stepping ---------------------------------------------------

    def step_stage(self, stage: Stage) -> str:
        """Ask the stage's role for its output and append it to the pool."""
        prompt = self._stage_prompt(stage)
        return self._send_and_pool(stage, prompt)

    def _send_and_pool(self, stage: Stage, prompt: str) -> str:
        role = self.graph.role_of[stage]
        reply = self.backend.send(self.sessions[role], prompt)
        self.pool.append(stage, self._round_for(stage), role, reply)
        return reply

    def _round_for(self, stage: Stage) -> int:
        if stage is Stage.ANALYSIS:
            return 0
        return self.rounds_used + 1

    def _stage_prompt(self, stage: Stage) -> str:
        role = self.graph.role_of[stage]
        if stage is Stage.ANALYSIS:
            return render_prompt(role, self.req, PromptContext())
        if stage is Stage.CODING:
            report = self.pool.latest(Stage.TESTING)
            if report is None:
                plan: str | None = None
                if Stage.ANALYSIS in self.graph.stages:
                    plan_entry = self.pool.latest(Stage.ANALYSIS)
                    if plan_entry is None:
                        raise MissingPrerequisite("coding needs the analysis output first")
                    plan = plan_entry.content
                return render_prompt(role, self.req, PromptContext(plan=plan))
            if self.artifact is None:
                raise MissingPrerequisite("repair round without a prior code artifact")
            return render_prompt(
                role, self.req, PromptContext(code=self.artifact.source, report=report.content)
            )
        if stage is Stage.TESTING:
            if self.artifact is None:
                raise MissingPrerequisite("testing needs a coding output first")
            return render_prompt(role, self.req, PromptContext(code=self.artifact.source))
        raise ValueError(f"unknown stage: {stage!r}")

    # -- the loop ----------------------------------------------------------

    def _coding_step(self) -> None:
        attempts = self.config.parse_retries + 1
        for attempt in range(attempts):
            if attempt == 0:
                output = self.step_stage(Stage.CODING)
            else:
                output = self._send_and_pool(Stage.CODING, RETRY_NUDGE)
            try:
                self.artifact = apply_update(
                    output, self.artifact, Stage.CODING, self._round_for(Stage.CODING)
                )
                return
            except NoCodeFound:
                continue
        raise RoleFailure(
            f"coder produced no extractable code in {attempts} attempt(s)"
        )

    def run(self) -> SessionOutcome:
        try:
            if Stage.ANALYSIS in self.graph.stages:
                self.step_stage(Stage.ANALYSIS)
            while True:
                self._coding_step()
                if Stage.TESTING not in self.graph.stages:
                    # No tester, so nothing can approve: single coding pass,
                    # returned unapproved with the interaction budget unused.
                    termination = Termination.CAP_REACHED
                    break
                report = self.step_stage(Stage.TESTING)
                self.rounds_used += 1
                if parse_verdict(report).verdict is Verdict.PASS:
                    termination = Termination.APPROVED
                    break
                if (
                    self.rounds_used >= self.graph.max_interactions
                    or self.graph.loop_edge != (Stage.TESTING, Stage.CODING)
                ):
                    # Budget spent, or the graph has no repair edge back to
                    # coding: return the last revision unapproved.
                    termination = Termination.CAP_REACHED
                    break
        except RoleFailure as exc:
            return SessionOutcome(
                final_code=self.artifact,
                approved=False,
                rounds_used=self.rounds_used,
                transcript=self.pool.snapshot(),
                termination=Termination.ROLE_ERROR,
                error=str(exc),
            )
        return SessionOutcome(
            final_code=self.artifact,
            approved=termination is Termination.APPROVED,
            rounds_used=self.rounds_used,
            transcript=self.pool.snapshot(),
            termination=termination,
        )


def run_collaboration(
    req: Requirement,
    graph: StageGraph,
    backend: ChatBackend,
    config: CollabConfig | None = None,
    instructions: Mapping[Role, RoleInstruction] | None = None,
) -> SessionOutcome:
    """Run one full collaboration session and return its outcome.

    Transport failures (BackendError) propagate; unparseable role output
    ends the session with a ROLE_ERROR outcome carrying the partial
    transcript.
    """
    return CollaborationSession(req, graph, backend, config, instructions).run()
