"""Unbiased pass@k estimation and benchmark report assembly.

For a task with n generated samples of which c passed every hidden
test, the chance that at least one of k drawn samples is correct is
1 - C(n-c, k) / C(n, k); the benchmark score is the arithmetic mean of
that quantity over tasks. The estimator is computed in product form so
no large binomials are ever materialized.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import DomainError


@dataclass(frozen=True)
class TaskSamples:
    """Per-task sample counts: n generated, c passing all hidden tests."""

    task_id: str
    n: int
    c: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DomainError(f"{self.task_id}: need at least one sample")
        if not 0 <= self.c <= self.n:
            raise DomainError(f"{self.task_id}: c={self.c} outside [0, n={self.n}]")


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that at least one of k samples out of n is correct.

    Exact for n - c < k (returns 1.0) and at the boundaries c=0 / c=n.
    """
    if k < 1 or k > n:
        raise DomainError(f"k={k} outside [1, n={n}]")
    if c < 0 or c > n:
        raise DomainError(f"c={c} outside [0, n={n}]")
    if n - c < k:
        return 1.0
    prod = 1.0
    for i in range(n - c + 1, n + 1):
        prod *= 1.0 - k / i
    return 1.0 - prod


@dataclass
class EvalReport:
    """Per-task and aggregate pass@k for one benchmark run."""

    benchmark: str
    setting: str
    k: int
    per_task: dict[str, float]
    aggregate: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "setting": self.setting,
            "k": self.k,
            "per_task": dict(sorted(self.per_task.items())),
            "aggregate": self.aggregate,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        """Fixed-width, human-readable rendering."""
        width = max([len("Task"), *(len(t) for t in self.per_task)], default=4)
        header = f"{'Task':<{width}}  Pass@{self.k}"
        rule = "-" * len(header)
        lines = [header, rule]
        for task_id in sorted(self.per_task):
            lines.append(f"{task_id:<{width}}  {self.per_task[task_id]:.4f}")
        lines.append(rule)
        lines.append(f"{'Mean':<{width}}  {self.aggregate:.4f}")
        return "\n".join(lines)


def aggregate(
    samples: Sequence[TaskSamples],
    k: int,
    *,
    benchmark: str = "",
    setting: str = "",
    metadata: Mapping | None = None,
) -> EvalReport:
    """Mean pass@k over tasks; every task must have n >= k samples."""
    if not samples:
        raise DomainError("cannot aggregate an empty task list")
    per_task: dict[str, float] = {}
    for s in samples:
        if s.n < k:
            raise DomainError(f"{s.task_id}: n={s.n} < k={k}")
        per_task[s.task_id] = pass_at_k(s.n, s.c, k)
    meta = dict(metadata or {})
    meta.setdefault("generated_at", time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    return EvalReport(
        benchmark=benchmark,
        setting=setting,
        k=k,
        per_task=per_task,
        aggregate=sum(per_task.values()) / len(per_task),
        metadata=meta,
    )
