"""Command-line entry points: run, bench, eval, replay.

Configuration comes from an optional JSON file plus flags (flags win).
Benchmark runs are resumable: tasks with a stored outcome record are
skipped, and a completed run is never rewritten except for a log line.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import persistence
from .benchmarks import BenchmarkKind, Task, load_benchmark, to_requirement
from .chat import (
    BackendConfig,
    CassetteRecorder,
    ChatBackend,
    HttpChatBackend,
    MockChatBackend,
    ReplayChatBackend,
)
from .errors import BackendError, CodeTeamError, ConfigError, MissingSignature, SchemaError
from .evaluation import TaskSamples, aggregate
from .orchestrator import CollabConfig, SessionOutcome, StageGraph, run_collaboration
from .roles import PromptSetting, Requirement, Role, load_default_instructions
from .sandbox import DEFAULT_HARNESS_COMMAND, ExecJob, ExecStatus, execute

log = logging.getLogger("codeteam")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_ROLE_ERROR = 2
EXIT_DRIFT = 2


@dataclass
class RunConfig:
    """Effective settings for a run; echoed verbatim into every report."""

    team: tuple[str, ...] = ("analyst", "coder", "tester")
    max_interactions: int = 4
    setting: str = PromptSetting.NL_SIGNATURE_TESTS.value
    backend: dict = field(default_factory=lambda: {"kind": "openai"})
    benchmark: str | None = None
    kind: str | None = None
    out_dir: str = "codeteam-out"
    job_timeout: float = 10.0
    grace: float = 2.0
    concurrency: int = 1
    parse_retries: int = 1
    samples_per_task: int = 1
    k: int = 1
    seed: int = 0
    mbpp_first_assert_public: bool = False
    harness_cmd: tuple[str, ...] | None = None
    templates_dir: str | None = None

    def validate(self) -> None:
        if Role.CODER.value not in self.team:
            raise ConfigError("the team must include the coder")
        for member in self.team:
            if member not in {r.value for r in Role}:
                raise ConfigError(f"unknown team member: {member!r}")
        if self.max_interactions < 1:
            raise ConfigError("max_interactions must be >= 1")
        PromptSetting(self.setting)
        if self.samples_per_task < self.k:
            raise ConfigError("samples_per_task must be >= k")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.job_timeout <= 0:
            raise ConfigError("job_timeout must be positive")

    def effective(self) -> dict:
        data = asdict(self)
        data["team"] = list(self.team)
        data["harness_cmd"] = list(self.harness_cmd) if self.harness_cmd else None
        return data

    @classmethod
    def load(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        data: dict = {}
        if config_path:
            try:
                data = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot load config file {config_path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        for key in ("team", "harness_cmd"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        cfg = cls(**data)
        cfg.validate()
        return cfg


def backend_from_config(mapping: dict, seed: int = 0) -> ChatBackend:
    """Build a chat backend from its config mapping.

    kinds: openai (any compatible endpoint), mock (inline scripts or a
    script_file), replay (cassette). An openai backend with "record"
    set writes a cassette as it goes.
    """
    kind = mapping.get("kind", "openai")
    if kind == "mock":
        scripts = mapping.get("scripts")
        if scripts is None and mapping.get("script_file"):
            scripts = json.loads(Path(mapping["script_file"]).read_text(encoding="utf-8"))
        if not isinstance(scripts, dict):
            raise ConfigError("mock backend needs 'scripts' or a 'script_file'")
        return MockChatBackend(scripts)
    if kind == "replay":
        cassette = mapping.get("cassette")
        if not cassette:
            raise ConfigError("replay backend needs a 'cassette' path")
        return ReplayChatBackend(cassette, _backend_config(mapping, seed))
    if kind == "openai":
        cfg = _backend_config(mapping, seed)
        recorder = CassetteRecorder(mapping["record"]) if mapping.get("record") else None
        return HttpChatBackend(cfg, recorder=recorder)
    raise ConfigError(f"unknown backend kind: {kind!r}")


def _backend_config(mapping: dict, seed: int) -> BackendConfig:
    allowed = {f.name for f in fields(BackendConfig)}
    kwargs = {k: v for k, v in mapping.items() if k in allowed}
    kwargs.setdefault("seed", seed)
    return BackendConfig(**kwargs)


# -- per-task pipeline -------------------------------------------------------

def _collaborate(task_tag: str, req: Requirement, cfg: RunConfig,
                 backend: ChatBackend) -> SessionOutcome:
    graph = StageGraph.for_team([Role(r) for r in cfg.team], cfg.max_interactions)
    collab = CollabConfig(parse_retries=cfg.parse_retries, tag_prefix=f"{task_tag}:")
    instructions = load_default_instructions(cfg.templates_dir)
    return run_collaboration(req, graph, backend, collab, instructions)


def _execute_candidate(task: Task, source: str, cfg: RunConfig):
    job = ExecJob(
        job_id=f"{task.task_id}",
        candidate_source=source,
        test_source=task.hidden_tests,
        entry_point=task.entry_point,
        timeout_seconds=cfg.job_timeout,
    )
    return execute(job, command=cfg.harness_cmd or DEFAULT_HARNESS_COMMAND, grace=cfg.grace)


def _run_one_task(task: Task, sample: int, cfg: RunConfig, backend: ChatBackend,
                  layout: dict) -> dict:
    """Produce one outcome record; never raises (failures become records)."""
    tag = task.task_id if cfg.samples_per_task == 1 else f"{task.task_id}#{sample}"
    try:
        req = to_requirement(
            task, cfg.setting, mbpp_first_assert_public=cfg.mbpp_first_assert_public
        )
        outcome = _collaborate(tag, req, cfg, backend)
    except (CodeTeamError, ValueError) as exc:
        log.warning("%s: pipeline failed: %s", tag, exc)
        return persistence.error_record(task.task_id, sample, str(exc))
    name = persistence.safe_task_id(task.task_id)
    if cfg.samples_per_task > 1:
        name = f"{name}.s{sample}"
    persistence.write_transcript(layout["transcripts"], task.task_id, outcome, name=name)
    if outcome.final_code is None:
        return persistence.outcome_record(task.task_id, outcome, sample, passed=False)
    result = _execute_candidate(task, outcome.final_code.source, cfg)
    return persistence.outcome_record(
        task.task_id,
        outcome,
        sample,
        exec_status=result.status.value,
        exec_detail=result.detail,
        wall_time_seconds=result.wall_time_seconds,
        passed=result.status is ExecStatus.PASS,
    )


def run_benchmark(cfg: RunConfig, backend: ChatBackend | None = None) -> dict:
    """Run (or resume) a full benchmark and return the report dict."""
    if not cfg.benchmark or not cfg.kind:
        raise ConfigError("bench needs a benchmark path and kind")
    tasks = load_benchmark(cfg.benchmark, BenchmarkKind(cfg.kind))
    layout = persistence.run_layout(cfg.out_dir)
    outcomes_path = layout["results"] / persistence.OUTCOMES_FILE
    existing = persistence.load_outcomes(outcomes_path)
    if backend is None:
        backend = backend_from_config(cfg.backend, cfg.seed)

    pending = [
        (task, sample)
        for task in tasks
        for sample in range(cfg.samples_per_task)
        if (task.task_id, sample) not in existing
    ]
    log.info(
        "benchmark %s: %d task-samples total, %d already done, %d to run",
        cfg.benchmark, len(tasks) * cfg.samples_per_task, len(existing), len(pending),
    )

    write_lock = threading.Lock()
    if pending:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            futures = {
                pool.submit(_run_one_task, task, sample, cfg, backend, layout): (task, sample)
                for task, sample in pending
            }
            for future in as_completed(futures):
                record = future.result()
                with write_lock:
                    persistence.append_jsonl(outcomes_path, record)
                existing[(record["task_id"], record["sample"])] = record

    return _finalize_report(cfg, tasks, existing, layout)


def _finalize_report(cfg: RunConfig, tasks: list[Task], records: dict, layout: dict) -> dict:
    samples = []
    partial = False
    for task in tasks:
        c = 0
        n = 0
        for sample in range(cfg.samples_per_task):
            record = records.get((task.task_id, sample))
            if record is None:
                partial = True
                continue
            n += 1
            if record.get("error"):
                partial = True
            if record.get("passed"):
                c += 1
        if n:
            samples.append(TaskSamples(task_id=task.task_id, n=n, c=c))
        else:
            partial = True
    report = aggregate(
        samples,
        cfg.k,
        benchmark=f"{cfg.kind}:{cfg.benchmark}",
        setting=cfg.setting,
        metadata={
            "model": cfg.backend.get("model"),
            "n": cfg.samples_per_task,
            "k": cfg.k,
            "max_interactions": cfg.max_interactions,
            "partial": partial,
            "config": cfg.effective(),
        },
    )
    report_dict = report.to_dict()
    stored = persistence.load_report(layout["reports"])
    if not persistence.reports_equal(stored, {"schema_version": persistence.SCHEMA_VERSION, **report_dict}):
        persistence.write_report(layout["reports"], report_dict, report.table())
        log.info("report written to %s", layout["reports"])
    else:
        log.info("report unchanged; nothing to do")
    return report_dict


# -- commands ----------------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    text = args.requirement
    if args.requirement_file:
        text = Path(args.requirement_file).read_text(encoding="utf-8")
    if not text or not text.strip():
        raise ConfigError("provide a requirement via --requirement or --requirement-file")
    if args.signature:
        req = Requirement(
            text=text,
            setting=PromptSetting.NL_SIGNATURE_TESTS,
            signature=args.signature,
            public_tests=tuple(args.public_test or ()),
        )
    else:
        req = Requirement(text=text, setting=PromptSetting.NL_ONLY)
    backend = backend_from_config(cfg.backend, cfg.seed)
    outcome = _collaborate("adhoc", req, cfg, backend)
    layout = persistence.run_layout(cfg.out_dir)
    persistence.write_transcript(layout["transcripts"], "adhoc", outcome)
    persistence.append_jsonl(
        layout["results"] / persistence.OUTCOMES_FILE,
        persistence.outcome_record("adhoc", outcome),
    )
    if outcome.termination.value == "role_error":
        _diag("role_error", outcome.error or "role output unparseable")
        return EXIT_ROLE_ERROR
    if outcome.final_code is not None:
        print(outcome.final_code.source)
    log.info(
        "termination=%s approved=%s rounds=%d",
        outcome.termination.value, outcome.approved, outcome.rounds_used,
    )
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    report = run_benchmark(cfg)
    print(f"pass@{report['k']} = {report['aggregate']:.4f} over {len(report['per_task'])} tasks")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    outcomes_path = out_dir / persistence.RESULTS_DIR / persistence.OUTCOMES_FILE
    records = persistence.load_outcomes(outcomes_path)
    if not records:
        raise ConfigError(f"no outcome records under {outcomes_path}")
    by_task: dict[str, list[dict]] = {}
    for (task_id, _sample), record in sorted(records.items()):
        by_task.setdefault(task_id, []).append(record)
    samples = [
        TaskSamples(task_id=t, n=len(rs), c=sum(1 for r in rs if r.get("passed")))
        for t, rs in by_task.items()
    ]
    report = aggregate(samples, args.k, benchmark=str(out_dir), setting="",
                       metadata={"k": args.k, "recomputed": True})
    print(report.table())
    persistence.write_report(out_dir / persistence.REPORTS_DIR, report.to_dict(), report.table())
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    transcript = persistence.read_transcript(args.transcript)
    if not transcript:
        raise SchemaError(f"{args.transcript}: empty transcript")
    task_id = transcript[0]["task_id"]
    recomputed = persistence.recompute_summary(transcript)
    outcomes_path = Path(args.outcomes) if args.outcomes else (
        Path(args.transcript).parent.parent / persistence.RESULTS_DIR / persistence.OUTCOMES_FILE
    )
    stored_all = persistence.load_outcomes(outcomes_path)
    stored = stored_all.get((task_id, args.sample))
    if stored is None:
        raise ConfigError(f"no stored outcome for {task_id!r} sample {args.sample} in {outcomes_path}")
    drift = persistence.summary_drift(stored, recomputed)
    if drift:
        print(f"DRIFT in {task_id}:")
        for line in drift:
            print(f"  {line}")
        return EXIT_DRIFT
    print(f"{task_id}: transcript replays cleanly (revision {recomputed['revision']})")
    return EXIT_OK


def _diag(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "team": tuple(args.team.split(",")) if getattr(args, "team", None) else None,
        "max_interactions": getattr(args, "max_interactions", None),
        "setting": getattr(args, "setting", None),
        "benchmark": getattr(args, "benchmark", None),
        "kind": getattr(args, "kind", None),
        "out_dir": getattr(args, "out_dir", None),
        "job_timeout": getattr(args, "job_timeout", None),
        "concurrency": getattr(args, "concurrency", None),
        "parse_retries": getattr(args, "parse_retries", None),
        "samples_per_task": getattr(args, "samples_per_task", None),
        "k": getattr(args, "k", None),
        "seed": getattr(args, "seed", None),
        "harness_cmd": tuple(args.harness_cmd.split()) if getattr(args, "harness_cmd", None) else None,
        "templates_dir": getattr(args, "templates_dir", None),
    }
    if getattr(args, "mbpp_first_assert_public", False):
        overrides["mbpp_first_assert_public"] = True
    if getattr(args, "grace", None) is not None:
        overrides["grace"] = args.grace
    cfg = RunConfig.load(getattr(args, "config", None), overrides)
    for key in ("backend_kind", "endpoint", "model", "auth_env", "cassette", "record"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.backend["kind" if key == "backend_kind" else key] = value
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codeteam",
        description="Role-playing LLM team for code generation with benchmark evaluation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--team", help="comma-separated subset of analyst,coder,tester")
        p.add_argument("--max-interactions", dest="max_interactions", type=int)
        p.add_argument("--setting", choices=[s.value for s in PromptSetting])
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--parse-retries", dest="parse_retries", type=int)
        p.add_argument("--templates-dir", dest="templates_dir")
        p.add_argument("--backend-kind", dest="backend_kind",
                       choices=["openai", "mock", "replay"])
        p.add_argument("--endpoint", help="chat-completions base URL")
        p.add_argument("--model")
        p.add_argument("--auth-env", dest="auth_env",
                       help="environment variable holding the bearer token")
        p.add_argument("--cassette", help="cassette path (replay backend)")
        p.add_argument("--record", help="record live traffic to this cassette")

    p_run = sub.add_parser("run", help="solve a single requirement")
    common(p_run)
    p_run.add_argument("--requirement", help="requirement text")
    p_run.add_argument("--requirement-file", dest="requirement_file")
    p_run.add_argument("--signature", help="function signature (switches to the structured setting)")
    p_run.add_argument("--public-test", dest="public_test", action="append")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run a benchmark end to end (resumable)")
    common(p_bench)
    p_bench.add_argument("--benchmark", help="path to the task file")
    p_bench.add_argument("--kind", choices=[k.value for k in BenchmarkKind])
    p_bench.add_argument("--job-timeout", dest="job_timeout", type=float)
    p_bench.add_argument("--grace", type=float, help="supervisor kill/reap allowance (seconds)")
    p_bench.add_argument("--concurrency", type=int)
    p_bench.add_argument("--samples-per-task", dest="samples_per_task", type=int)
    p_bench.add_argument("--k", type=int)
    p_bench.add_argument("--harness-cmd", dest="harness_cmd",
                         help="harness command line (default: python -m exec_harness)")
    p_bench.add_argument("--mbpp-first-assert-public", dest="mbpp_first_assert_public",
                         action="store_true")
    p_bench.set_defaults(func=cmd_bench)

    p_eval = sub.add_parser("eval", help="recompute the report from stored outcomes")
    p_eval.add_argument("--out-dir", dest="out_dir", required=True)
    p_eval.add_argument("--k", type=int, default=1)
    p_eval.set_defaults(func=cmd_eval)

    p_replay = sub.add_parser("replay", help="re-derive artifacts from a stored transcript")
    p_replay.add_argument("--transcript", required=True)
    p_replay.add_argument("--outcomes", help="outcomes.jsonl (default: sibling results dir)")
    p_replay.add_argument("--sample", type=int, default=0)
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, SchemaError, MissingSignature) as exc:
        _diag("config_error", str(exc))
        return EXIT_FAILURE
    except BackendError as exc:
        _diag("backend_error", str(exc))
        return EXIT_FAILURE
    except CodeTeamError as exc:
        _diag("error", str(exc))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
