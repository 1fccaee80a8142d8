"""Role-playing LLM team for code generation.

One base chat model is cast as an analyst, a coder, and a tester via
role instructions; the roles coordinate through a message pool under a
bounded repair loop, and the resulting programs are scored with an
unbiased pass@k over sandboxed test runs.
"""

from .benchmarks import BenchmarkKind, Task, load_benchmark, to_requirement
from .chat import BackendConfig, ChatSession, HttpChatBackend, MockChatBackend, ReplayChatBackend
from .errors import (
    BackendError,
    CodeTeamError,
    ConfigError,
    DomainError,
    FormatError,
    IncompleteContext,
    MissingPrerequisite,
    MissingSignature,
    NoCodeFound,
    RateLimited,
    RoleFailure,
    SchemaError,
)
from .evaluation import EvalReport, TaskSamples, aggregate, pass_at_k
from .orchestrator import (
    CodeArtifact,
    CollabConfig,
    MessagePool,
    SessionOutcome,
    Stage,
    StageGraph,
    Termination,
    apply_update,
    run_collaboration,
)
from .roles import (
    Plan,
    PromptContext,
    PromptSetting,
    Requirement,
    Role,
    RoleInstruction,
    TestReport,
    Verdict,
    extract_code,
    parse_plan,
    parse_verdict,
    render_prompt,
)
from .sandbox import ExecJob, ExecStatus, ExecutionResult, execute

__version__ = "0.1.0"
