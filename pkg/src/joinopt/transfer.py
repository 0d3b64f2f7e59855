"""Knowledge transfer: workload partitioning and meta-learned initialization.

Queries are scored by one of four partitioning policies, sorted ascending and
chunked into equally sized tasks (the remainder joins the last task).  Each
candidate partition is rated with the Davies-Bouldin index over a shared
4-feature query embedding, and the lowest-DBI policy wins.  The winning tasks
feed first-order MAML: per-task inner SGD adaptation followed by an outer
step on the summed post-adaptation gradients.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .catalog import Catalog, Query
from .model import ModelParams, TrainBatch, batch_grad, grad_sum, sgd_step
from .simulator import CostModelConfig, estimate_cardinality, expert_plan, plan_cost

__all__ = [
    "PartitioningPolicy",
    "TaskSet",
    "MetaTask",
    "TransferError",
    "halstead_complexity",
    "policy_score",
    "partition_workload",
    "query_embeddings",
    "davies_bouldin",
    "score_all_policies",
    "select_partitioning",
    "maml_inner",
    "maml_outer",
]

DBI_EPSILON = 1e-9


class TransferError(ValueError):
    """Raised for invalid partitioning or meta-training inputs."""


class PartitioningPolicy(Enum):
    # Declaration order doubles as the tie-break order.
    HALSTEAD = "halstead"
    OPERATOR_COUNT = "operator_count"
    ESTIMATED_COST = "estimated_cost"
    ESTIMATED_ROWS = "estimated_rows"


@dataclass(frozen=True)
class TaskSet:
    """Disjoint query-id groups produced by one partitioning policy."""

    tasks: tuple[tuple[str, ...], ...]
    policy: PartitioningPolicy
    dbi_score: float | None = None


def halstead_complexity(query: Query) -> float:
    """Token-count complexity: (n1/2) * (N/n2) * log2(n1 + n2), where n1/n2
    are distinct operator/operand counts and N is total operand occurrences."""
    eta1 = len(query.operator_tokens)
    eta2 = len(query.operand_tokens)
    if eta2 == 0:
        raise TransferError(f"query {query.id!r}: empty operand bag")
    total_operands = sum(query.operand_tokens.values())
    return (eta1 / 2.0) * (total_operands / eta2) * math.log2(eta1 + eta2)


def policy_score(
    query: Query,
    policy: PartitioningPolicy,
    catalog: Catalog,
    cfg: CostModelConfig,
) -> float:
    if policy is PartitioningPolicy.HALSTEAD:
        return halstead_complexity(query)
    if policy is PartitioningPolicy.OPERATOR_COUNT:
        return float(sum(query.operator_tokens.values()))
    if policy is PartitioningPolicy.ESTIMATED_COST:
        return plan_cost(expert_plan(query, catalog, cfg), query, catalog, cfg)
    if policy is PartitioningPolicy.ESTIMATED_ROWS:
        return estimate_cardinality(query.relations, query, catalog)
    raise TransferError(f"unknown partitioning policy {policy!r}")


def partition_workload(
    workload: list[Query],
    policy: PartitioningPolicy,
    k_tasks: int,
    catalog: Catalog,
    cfg: CostModelConfig,
) -> TaskSet:
    """Sort by policy score (ties by query id) and chunk into k_tasks groups
    of floor(|W|/k) queries each; the remainder extends the last task."""
    if k_tasks < 2:
        raise TransferError("k_tasks must be >= 2")
    if len(workload) < k_tasks:
        raise TransferError(
            f"workload of {len(workload)} queries cannot fill {k_tasks} tasks"
        )
    ranked = sorted(
        workload, key=lambda q: (policy_score(q, policy, catalog, cfg), q.id)
    )
    size = len(workload) // k_tasks
    tasks = []
    for i in range(k_tasks):
        chunk = ranked[i * size : (i + 1) * size] if i < k_tasks - 1 else ranked[(k_tasks - 1) * size :]
        tasks.append(tuple(q.id for q in chunk))
    return TaskSet(tasks=tuple(tasks), policy=policy)


def query_embeddings(
    workload: list[Query], catalog: Catalog, cfg: CostModelConfig
) -> dict[str, np.ndarray]:
    """Shared 4-feature embedding per query: z-scored (halstead, operator
    count, log1p expert cost, log1p estimated rows).  Constant columns map
    to zero."""
    raw = np.array(
        [
            [
                halstead_complexity(q),
                float(sum(q.operator_tokens.values())),
                math.log1p(policy_score(q, PartitioningPolicy.ESTIMATED_COST, catalog, cfg)),
                math.log1p(policy_score(q, PartitioningPolicy.ESTIMATED_ROWS, catalog, cfg)),
            ]
            for q in workload
        ]
    )
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    std[std == 0] = 1.0
    normalized = (raw - mean) / std
    return {q.id: normalized[i] for i, q in enumerate(workload)}


def davies_bouldin(tasks: TaskSet, embeddings: dict[str, np.ndarray]) -> float:
    """Mean over clusters of the worst (sigma_i + sigma_j) / dist(c_i, c_j)
    ratio, with the centroid distance floored at DBI_EPSILON."""
    if len(tasks.tasks) < 2:
        raise TransferError("DBI needs at least 2 tasks")
    centroids = []
    scatters = []
    for task in tasks.tasks:
        if not task:
            raise TransferError("DBI is undefined for an empty task")
        points = np.stack([embeddings[qid] for qid in task])
        center = points.mean(axis=0)
        centroids.append(center)
        scatters.append(float(np.linalg.norm(points - center, axis=1).mean()))
    k = len(tasks.tasks)
    ratios = []
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if i == j:
                continue
            dist = max(DBI_EPSILON, float(np.linalg.norm(centroids[i] - centroids[j])))
            worst = max(worst, (scatters[i] + scatters[j]) / dist)
        ratios.append(worst)
    return float(np.mean(ratios))


def score_all_policies(
    workload: list[Query], k_tasks: int, catalog: Catalog, cfg: CostModelConfig
) -> list[TaskSet]:
    """Partition under every policy and fill in DBI scores, in enum order."""
    embeddings = query_embeddings(workload, catalog, cfg)
    scored = []
    for policy in PartitioningPolicy:
        tasks = partition_workload(workload, policy, k_tasks, catalog, cfg)
        scored.append(
            dataclasses.replace(tasks, dbi_score=davies_bouldin(tasks, embeddings))
        )
    return scored


def select_partitioning(
    workload: list[Query], k_tasks: int, catalog: Catalog, cfg: CostModelConfig
) -> TaskSet:
    """The minimum-DBI partition across all four policies; ties keep the
    earliest policy in enum order."""
    scored = score_all_policies(workload, k_tasks, catalog, cfg)
    best = scored[0]
    for candidate in scored[1:]:
        if candidate.dbi_score < best.dbi_score:
            best = candidate
    return best


@dataclass(frozen=True)
class MetaTask:
    """Pool of (features, label) rows for one task; support and query batches
    are drawn from this pool during meta-training."""

    features: np.ndarray  # [n, d]
    labels: np.ndarray  # [n]

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise TransferError("meta task needs a nonempty [n, d] feature matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise TransferError("meta task labels must match feature rows")

    def sample(self, rng: np.random.Generator, batch_size: int) -> TrainBatch:
        n = self.features.shape[0]
        take = min(batch_size, n)
        idx = rng.choice(n, size=take, replace=False)
        return TrainBatch(self.features[idx], self.labels[idx])


def maml_inner(
    params: ModelParams,
    task_batches: list[TrainBatch],
    inner_lr: float,
    n_inner: int,
) -> ModelParams:
    """n_inner SGD steps on the task's loss starting from params, cycling
    through the given batches; the input params are untouched."""
    if n_inner < 0:
        raise TransferError("n_inner must be >= 0")
    if n_inner > 0 and not task_batches:
        raise TransferError("maml_inner needs at least one batch")
    adapted = params
    for step in range(n_inner):
        batch = task_batches[step % len(task_batches)]
        adapted = sgd_step(adapted, batch_grad(adapted, batch), inner_lr)
    return adapted


def maml_outer(
    params: ModelParams,
    tasks: list[MetaTask],
    inner_lr: float,
    outer_lr: float,
    n_inner: int,
    n_outer: int,
    batch_size: int = 64,
    rng_seed: int = 0,
) -> ModelParams:
    """First-order MAML: each outer iteration adapts to every task on a
    support batch, evaluates the loss gradient at the adapted parameters on a
    query batch, and applies one outer step on the summed gradients (the
    adaptation Jacobian is treated as identity)."""
    if not tasks:
        raise TransferError("maml_outer needs at least one task")
    if n_outer < 1:
        raise TransferError("n_outer must be >= 1")
    rng = np.random.default_rng(rng_seed)
    for _ in range(n_outer):
        grads = []
        for task in tasks:
            support = task.sample(rng, batch_size)
            query_batch = task.sample(rng, batch_size)
            adapted = maml_inner(params, [support], inner_lr, n_inner)
            grads.append(batch_grad(adapted, query_batch))
        params = sgd_step(params, grad_sum(grads), outer_lr)
    return params
