from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codeteam.chat import MockChatBackend
from codeteam.errors import BackendError, MissingPrerequisite, NoCodeFound
from codeteam.orchestrator import (
    CodeArtifact,
    CollabConfig,
    CollaborationSession,
    MessagePool,
    Stage,
    StageGraph,
    Termination,
    apply_update,
    run_collaboration,
)
from codeteam.persistence import transcript_bytes
from codeteam.roles import Role

from conftest import PLAN_MESSAGE, approve_report, code_message, reject_report, team_scripts


def loop_oracle(verdicts: list[bool], n: int) -> dict:
    """Independent hand-model of the repair loop.

    Walks the coder/tester alternation for a scripted verdict sequence
    and returns the expected call counts, rounds, termination, and final
    revision. Kept deliberately separate from the implementation.
    """
    coder_calls = 0
    tester_calls = 0
    rounds = 0
    while True:
        coder_calls += 1
        tester_calls += 1
        rounds += 1
        if verdicts[rounds - 1]:
            termination = "approved"
            break
        if rounds >= n:
            termination = "cap_reached"
            break
    return {
        "coder_calls": coder_calls,
        "tester_calls": tester_calls,
        "rounds_used": rounds,
        "termination": termination,
        "revision": coder_calls - 1,
    }


def full_graph(n: int = 4) -> StageGraph:
    return StageGraph.for_team([Role.ANALYST, Role.CODER, Role.TESTER], max_interactions=n)


def scripted_run(simple_requirement, verdicts: list[bool], n: int = 4):
    rounds_scripted = len(verdicts)
    coder = [code_message(f"def f():\n    return {i}") for i in range(rounds_scripted)]
    tester = [approve_report() if v else reject_report() for v in verdicts]
    backend = MockChatBackend(team_scripts(coder, tester, [PLAN_MESSAGE]))
    outcome = run_collaboration(simple_requirement, full_graph(n), backend)
    return outcome, backend


# -- loop contract ---------------------------------------------------------------

def test_approve_on_first_report(simple_requirement) -> None:
    outcome, backend = scripted_run(simple_requirement, [True])
    assert outcome.approved is True
    assert outcome.rounds_used == 1
    assert outcome.termination is Termination.APPROVED
    assert backend.call_count("analyst") == 1
    assert backend.call_count("coder") == 1
    assert backend.call_count("tester") == 1


def test_reject_twice_then_approve(simple_requirement) -> None:
    outcome, backend = scripted_run(simple_requirement, [False, False, True])
    assert outcome.rounds_used == 3
    assert backend.call_count("coder") == 3  # 1 initial + 2 repairs
    assert backend.call_count("tester") == 3
    assert outcome.termination is Termination.APPROVED


def test_always_reject_hits_cap(simple_requirement) -> None:
    expected = loop_oracle([False] * 4, 4)
    outcome, backend = scripted_run(simple_requirement, [False] * 4)
    assert outcome.termination is Termination.CAP_REACHED
    assert outcome.approved is False
    assert outcome.rounds_used == expected["rounds_used"] == 4
    assert backend.call_count("coder") == expected["coder_calls"] == 4
    assert backend.call_count("tester") == expected["tester_calls"] == 4
    assert outcome.final_code is not None
    assert outcome.final_code.revision == expected["revision"] == 3
    assert outcome.final_code.source == "def f():\n    return 3"


@given(st.integers(1, 4), st.lists(st.booleans(), min_size=4, max_size=4))
@settings(max_examples=60, deadline=None)
def test_loop_matches_oracle(n: int, verdicts: list[bool]) -> None:
    from codeteam.roles import PromptSetting, Requirement

    req = Requirement(text="Do the thing.", setting=PromptSetting.NL_ONLY)
    expected = loop_oracle(verdicts, n)
    outcome, backend = scripted_run(req, verdicts, n)
    assert outcome.rounds_used == expected["rounds_used"]
    assert outcome.termination.value == expected["termination"]
    assert backend.call_count("coder") == expected["coder_calls"]
    assert backend.call_count("tester") == expected["tester_calls"]
    assert outcome.final_code.revision == expected["revision"]


def test_transcript_structure(simple_requirement) -> None:
    outcome, _ = scripted_run(simple_requirement, [False, True])
    stages = [e.stage for e in outcome.transcript]
    assert stages == [Stage.ANALYSIS, Stage.CODING, Stage.TESTING, Stage.CODING, Stage.TESTING]
    assert [e.round for e in outcome.transcript] == [0, 1, 1, 2, 2]
    analyst_entries = [e for e in outcome.transcript if e.role is Role.ANALYST]
    assert len(analyst_entries) == 1  # analyst speaks exactly once


def test_determinism_byte_identical_transcripts(simple_requirement) -> None:
    first, _ = scripted_run(simple_requirement, [False, True])
    second, _ = scripted_run(simple_requirement, [False, True])
    assert transcript_bytes("t", first, with_ts=False) == transcript_bytes("t", second, with_ts=False)


def test_pool_monotonicity(simple_requirement) -> None:
    coder = [code_message("def f():\n    return 0"), code_message("def f():\n    return 1")]
    backend = MockChatBackend(team_scripts(coder, [reject_report(), approve_report()], [PLAN_MESSAGE]))
    session = CollaborationSession(simple_requirement, full_graph(), backend)
    snapshots = [session.pool.snapshot()]
    session.step_stage(Stage.ANALYSIS)
    snapshots.append(session.pool.snapshot())
    session.step_stage(Stage.CODING)
    snapshots.append(session.pool.snapshot())
    for earlier, later in zip(snapshots, snapshots[1:]):
        assert later[: len(earlier)] == earlier
        assert len(later) == len(earlier) + 1


def test_update_locality_revision_counts_coding_entries(simple_requirement) -> None:
    outcome, _ = scripted_run(simple_requirement, [False, False, True])
    coding_entries = sum(1 for e in outcome.transcript if e.stage is Stage.CODING)
    assert outcome.final_code.revision == coding_entries - 1
    testing_entries = sum(1 for e in outcome.transcript if e.stage is Stage.TESTING)
    assert testing_entries == outcome.rounds_used


def test_role_instruction_first_and_once(simple_requirement) -> None:
    coder = [code_message("def f():\n    return 0")]
    backend = MockChatBackend(team_scripts(coder, [approve_report()], [PLAN_MESSAGE]))
    session = CollaborationSession(simple_requirement, full_graph(), backend)
    session.run()
    for chat in session.sessions.values():
        instruction = chat.history[0]
        assert instruction[0] == "system"
        occurrences = sum(1 for _, text in chat.history if text == instruction[1])
        assert occurrences == 1


# -- step_stage ------------------------------------------------------------------

def test_step_coding_first_iteration_carries_plan(simple_requirement) -> None:
    backend = MockChatBackend(team_scripts([code_message("def f(): pass")], None, [PLAN_MESSAGE]))
    graph = StageGraph.for_team([Role.ANALYST, Role.CODER], max_interactions=1)
    session = CollaborationSession(simple_requirement, graph, backend)
    session.step_stage(Stage.ANALYSIS)
    session.step_stage(Stage.CODING)
    coder_prompt = backend.log[-1][1]
    assert "Return the sum of two integers." in coder_prompt
    assert PLAN_MESSAGE.splitlines()[1] in coder_prompt


def test_step_coding_repair_carries_report_and_prior_code(simple_requirement) -> None:
    coder = [code_message("def f():\n    return 0"), code_message("def f():\n    return 1")]
    backend = MockChatBackend(team_scripts(coder, [reject_report("off by one"), approve_report()], [PLAN_MESSAGE]))
    session = CollaborationSession(simple_requirement, full_graph(), backend)
    session.step_stage(Stage.ANALYSIS)
    session.step_stage(Stage.CODING)
    session.artifact = apply_update(session.pool.latest(Stage.CODING).content, None, Stage.CODING, 1)
    session.step_stage(Stage.TESTING)
    session.rounds_used += 1
    session.step_stage(Stage.CODING)
    repair_prompt = backend.log[-1][1]
    assert "off by one" in repair_prompt
    assert "return 0" in repair_prompt


def test_step_testing_with_empty_pool_raises(simple_requirement) -> None:
    backend = MockChatBackend(team_scripts(["x"], ["y"], ["z"]))
    session = CollaborationSession(simple_requirement, full_graph(), backend)
    with pytest.raises(MissingPrerequisite):
        session.step_stage(Stage.TESTING)


def test_step_coding_before_analysis_raises(simple_requirement) -> None:
    backend = MockChatBackend(team_scripts(["x"], ["y"], ["z"]))
    session = CollaborationSession(simple_requirement, full_graph(), backend)
    with pytest.raises(MissingPrerequisite):
        session.step_stage(Stage.CODING)


# -- apply_update ----------------------------------------------------------------

def test_apply_update_coding_increments_revision() -> None:
    first = apply_update(code_message("def f():\n    return 1"), None, Stage.CODING, 1)
    assert first.revision == 0
    assert first.source == "def f():\n    return 1"
    second = apply_update(code_message("def f():\n    return 2"), first, Stage.CODING, 2)
    assert second.revision == 1


def test_apply_update_identity_for_non_coding() -> None:
    artifact = CodeArtifact(source="x = 1", revision=0, origin_round=1)
    assert apply_update("report text", artifact, Stage.TESTING) is artifact
    assert apply_update("analysis text", None, Stage.ANALYSIS) is None


def test_apply_update_requires_code() -> None:
    with pytest.raises(NoCodeFound):
        apply_update("no code here, sorry.", None, Stage.CODING, 1)


# -- team ablations ---------------------------------------------------------------

def test_coder_only_team(simple_requirement) -> None:
    backend = MockChatBackend(team_scripts([code_message("def f():\n    return 7")]))
    graph = StageGraph.for_team([Role.CODER], max_interactions=4)
    outcome = run_collaboration(simple_requirement, graph, backend)
    assert backend.call_count("coder") == 1
    assert backend.call_count("analyst") == 0
    assert backend.call_count("tester") == 0
    assert outcome.approved is False
    assert outcome.rounds_used == 0
    assert outcome.termination is Termination.CAP_REACHED
    assert outcome.final_code.source == "def f():\n    return 7"


def test_coder_tester_team_loops(simple_requirement) -> None:
    coder = [code_message("def f():\n    return 0"), code_message("def f():\n    return 1")]
    backend = MockChatBackend(team_scripts(coder, [reject_report(), approve_report()]))
    graph = StageGraph.for_team([Role.CODER, Role.TESTER], max_interactions=4)
    outcome = run_collaboration(simple_requirement, graph, backend)
    assert outcome.approved is True
    assert outcome.rounds_used == 2
    assert backend.call_count("analyst") == 0


def test_analyst_coder_team_single_pass(simple_requirement) -> None:
    backend = MockChatBackend(team_scripts([code_message("def f(): pass")], None, [PLAN_MESSAGE]))
    graph = StageGraph.for_team([Role.ANALYST, Role.CODER], max_interactions=4)
    outcome = run_collaboration(simple_requirement, graph, backend)
    assert backend.call_count("analyst") == 1
    assert backend.call_count("coder") == 1
    assert outcome.termination is Termination.CAP_REACHED


def test_graph_without_loop_edge_tests_once(simple_requirement) -> None:
    graph = StageGraph(
        stages=(Stage.CODING, Stage.TESTING),
        role_of={Stage.CODING: Role.CODER, Stage.TESTING: Role.TESTER},
        loop_edge=None,
        max_interactions=4,
    )
    backend = MockChatBackend(team_scripts([code_message("def f(): pass")], [reject_report()]))
    outcome = run_collaboration(simple_requirement, graph, backend)
    assert outcome.termination is Termination.CAP_REACHED
    assert outcome.rounds_used == 1
    assert backend.call_count("coder") == 1


def test_team_requires_coder() -> None:
    with pytest.raises(ValueError):
        StageGraph.for_team([Role.ANALYST, Role.TESTER])


def test_graph_validation() -> None:
    with pytest.raises(ValueError):
        StageGraph(stages=(Stage.CODING,), role_of={Stage.CODING: Role.CODER}, max_interactions=0)
    with pytest.raises(ValueError):
        StageGraph(stages=(Stage.CODING,), role_of={}, max_interactions=1)
    with pytest.raises(ValueError):
        StageGraph(
            stages=(Stage.CODING,),
            role_of={Stage.CODING: Role.CODER},
            loop_edge=(Stage.TESTING, Stage.CODING),
            max_interactions=1,
        )


# -- malformed coder output --------------------------------------------------------

def test_malformed_coder_output_role_error(simple_requirement) -> None:
    backend = MockChatBackend(
        team_scripts(["I cannot help with that.", "still refusing, no code."],
                     [approve_report()], [PLAN_MESSAGE])
    )
    outcome = run_collaboration(
        simple_requirement, full_graph(), backend, CollabConfig(parse_retries=1)
    )
    assert outcome.termination is Termination.ROLE_ERROR
    assert outcome.approved is False
    assert outcome.final_code is None
    assert outcome.error
    assert backend.call_count("coder") == 2  # initial + one retry
    assert backend.call_count("tester") == 0
    # partial transcript still carries what happened
    assert [e.stage for e in outcome.transcript] == [Stage.ANALYSIS, Stage.CODING, Stage.CODING]


def test_retry_then_success_recovers(simple_requirement) -> None:
    backend = MockChatBackend(
        team_scripts(["oops, prose only.", code_message("def f():\n    return 1")],
                     [approve_report()], [PLAN_MESSAGE])
    )
    outcome = run_collaboration(simple_requirement, full_graph(), backend, CollabConfig(parse_retries=1))
    assert outcome.termination is Termination.APPROVED
    assert outcome.final_code.revision == 0
    assert backend.call_count("coder") == 2


def test_backend_error_propagates(simple_requirement) -> None:
    backend = MockChatBackend(team_scripts([code_message("def f(): pass")], [], [PLAN_MESSAGE]))
    with pytest.raises(BackendError):
        run_collaboration(simple_requirement, full_graph(), backend)


def test_message_pool_latest_and_count() -> None:
    pool = MessagePool()
    assert pool.latest(Stage.CODING) is None
    pool.append(Stage.CODING, 1, Role.CODER, "a")
    pool.append(Stage.CODING, 2, Role.CODER, "b")
    assert pool.latest(Stage.CODING).content == "b"
    assert pool.count(Stage.CODING) == 2
