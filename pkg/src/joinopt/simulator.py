"""Deterministic cost-model execution environment standing in for the DBMS.

Cardinalities follow the textbook independence model: base rows scaled by
per-table filter selectivities, multiplied by the selectivity of every join
edge internal to the relation set.  Execution latency is cost times a
configurable unit, perturbed by seeded multiplicative Gaussian noise floored
at 1% so latency stays positive.  The expert optimizer is an exhaustive
dynamic program over connected relation subsets, minimizing this same cost
model, with fixed lexicographic tie-breaking so results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .catalog import Catalog, Query
from .plans import JOIN_OP_RANK, JOIN_OPS, Join, JoinOp, PlanNode, Scan, plan_relations

__all__ = [
    "CostModelConfig",
    "ExpertBaseline",
    "SimulatorError",
    "estimate_cardinality",
    "scan_cost",
    "join_cost_increment",
    "plan_cost",
    "execute",
    "expert_plan",
    "expert_baseline",
]

DEFAULT_DP_LIMIT = 12


class SimulatorError(ValueError):
    """Raised for plan/query mismatches and exceeded DP limits."""


@dataclass(frozen=True)
class CostModelConfig:
    cpu_cost_per_row: float = 0.2
    hash_build_cost_per_row: float = 0.3
    nlj_cost_per_row_pair: float = 0.001
    merge_sort_cost_per_row_log_row: float = 0.05
    scan_cost_per_row: float = 0.1
    latency_per_cost_unit: float = 0.001  # milliseconds per cost unit
    noise_rel_sigma: float = 0.05

    def __post_init__(self):
        for name in (
            "cpu_cost_per_row",
            "hash_build_cost_per_row",
            "nlj_cost_per_row_pair",
            "merge_sort_cost_per_row_log_row",
            "scan_cost_per_row",
            "noise_rel_sigma",
        ):
            if getattr(self, name) < 0:
                raise SimulatorError(f"{name} must be >= 0")
        if self.latency_per_cost_unit <= 0:
            raise SimulatorError("latency_per_cost_unit must be > 0")


@dataclass(frozen=True)
class ExpertBaseline:
    """Expert-plan latency statistics; tolerance is the 2-sigma band width."""

    query_id: str
    mean_latency_ms: float
    std_latency_ms: float
    tolerance_ms: float
    n_runs: int

    def __post_init__(self):
        if self.std_latency_ms < 0:
            raise SimulatorError("std must be >= 0")
        if self.n_runs < 2:
            raise SimulatorError("baseline needs at least 2 runs")


def estimate_cardinality(
    relations: Iterable[str], query: Query, catalog: Catalog
) -> float:
    """Estimated output rows for joining a relation set of the query.

    Depends only on the set: product of filtered base rows times the
    selectivity of every query join edge internal to the set.
    """
    relset = frozenset(relations)
    if not relset:
        raise SimulatorError("cannot estimate cardinality of an empty relation set")
    unknown = relset - set(query.relations)
    if unknown:
        raise SimulatorError(
            f"relations {sorted(unknown)} are not part of query {query.id!r}"
        )
    # Multiply in canonical order so equal sets give bitwise-equal results
    # regardless of how the input container was built.
    rows = 1.0
    for rel in sorted(relset):
        rows *= catalog.table(rel).base_rows
    for a, b in sorted(query.join_edges):
        if a in relset and b in relset:
            rows *= catalog.edge_selectivity(a, b)
    return rows


def scan_cost(base_rows: float, cfg: CostModelConfig) -> float:
    """Scans are charged for every base row; filtering happens afterwards."""
    return cfg.scan_cost_per_row * base_rows


def join_cost_increment(
    op: JoinOp,
    left_rows: float,
    right_rows: float,
    out_rows: float,
    cfg: CostModelConfig,
) -> float:
    """Cost added by one join node on top of its children's costs."""
    if op is JoinOp.HASH:
        return cfg.hash_build_cost_per_row * left_rows + cfg.cpu_cost_per_row * (
            left_rows + right_rows + out_rows
        )
    if op is JoinOp.NESTED_LOOP:
        return cfg.nlj_cost_per_row_pair * left_rows * right_rows
    if op is JoinOp.MERGE:
        sort = cfg.merge_sort_cost_per_row_log_row * (
            left_rows * math.log2(1.0 + left_rows)
            + right_rows * math.log2(1.0 + right_rows)
        )
        return sort + cfg.cpu_cost_per_row * out_rows
    raise SimulatorError(f"unknown join operator {op!r}")


def _tree_cost(node: PlanNode, query: Query, catalog: Catalog, cfg: CostModelConfig):
    """Recursive (cost, relation set) of any plan fragment."""
    if isinstance(node, Scan):
        relset = frozenset((node.table,))
        return scan_cost(catalog.table(node.table).row_count, cfg), relset
    left_cost, left_rels = _tree_cost(node.left, query, catalog, cfg)
    right_cost, right_rels = _tree_cost(node.right, query, catalog, cfg)
    if left_rels & right_rels:
        raise SimulatorError("plan joins overlapping relation sets")
    out_rels = left_rels | right_rels
    increment = join_cost_increment(
        node.op,
        estimate_cardinality(left_rels, query, catalog),
        estimate_cardinality(right_rels, query, catalog),
        estimate_cardinality(out_rels, query, catalog),
        cfg,
    )
    return left_cost + right_cost + increment, out_rels


def plan_cost(
    plan: PlanNode, query: Query, catalog: Catalog, cfg: CostModelConfig
) -> float:
    """Deterministic cost of a complete plan for the query."""
    cost, rels = _tree_cost(plan, query, catalog, cfg)
    if rels != frozenset(query.relations):
        raise SimulatorError(
            f"plan covers {sorted(rels)} but query {query.id!r} "
            f"requires {sorted(query.relations)}"
        )
    return cost


def execute(
    plan: PlanNode,
    query: Query,
    catalog: Catalog,
    cfg: CostModelConfig,
    rng_seed: int,
) -> float:
    """Simulated execution latency in milliseconds.

    Multiplicative Gaussian noise with relative sigma ``noise_rel_sigma``,
    floored at 1% of the noiseless latency; the same seed always yields the
    same latency.
    """
    cost = plan_cost(plan, query, catalog, cfg)
    if cfg.noise_rel_sigma > 0:
        eps = float(np.random.default_rng(rng_seed).normal(0.0, cfg.noise_rel_sigma))
    else:
        eps = 0.0
    return cost * cfg.latency_per_cost_unit * max(0.01, 1.0 + eps)


def noiseless_latency(
    plan: PlanNode, query: Query, catalog: Catalog, cfg: CostModelConfig
) -> float:
    """Latency with the noise term removed: cost times the latency unit."""
    return plan_cost(plan, query, catalog, cfg) * cfg.latency_per_cost_unit


def expert_plan(
    query: Query,
    catalog: Catalog,
    cfg: CostModelConfig,
    dp_limit: int = DEFAULT_DP_LIMIT,
) -> PlanNode:
    """Cost-minimal cross-product-free bushy plan by exhaustive DP.

    Considers every connected relation subset, every split into two connected
    edge-linked parts (both orders), and all three join operators.  Ties are
    broken by the lexicographically smallest (left, right) relation-set
    encoding, then by operator rank Hash < Merge < NLJ.
    """
    rels = tuple(sorted(query.relations))
    n = len(rels)
    if n > dp_limit:
        raise SimulatorError(
            f"query {query.id!r} joins {n} relations, above the DP limit {dp_limit}"
        )
    index = {r: i for i, r in enumerate(rels)}
    adjacency = [0] * n
    for a, b in query.join_edges:
        adjacency[index[a]] |= 1 << index[b]
        adjacency[index[b]] |= 1 << index[a]

    def names(mask: int) -> tuple[str, ...]:
        return tuple(rels[i] for i in range(n) if mask >> i & 1)

    card = {}

    def cardinality(mask: int) -> float:
        got = card.get(mask)
        if got is None:
            got = card[mask] = estimate_cardinality(names(mask), query, catalog)
        return got

    # best[mask] = (cost, plan); built in increasing mask order so every
    # proper submask is ready.  Only connected masks ever gain an entry.
    best: dict[int, tuple[float, PlanNode]] = {}
    for i in range(n):
        mask = 1 << i
        best[mask] = (scan_cost(catalog.table(rels[i]).row_count, cfg), Scan(rels[i]))
    full = (1 << n) - 1
    for mask in range(1, full + 1):
        if mask & (mask - 1) == 0 or mask in best:
            continue
        out_rows = None
        chosen = None
        chosen_key = None
        sub = (mask - 1) & mask
        while sub:
            rest = mask ^ sub
            left = best.get(sub)
            right = best.get(rest)
            if left is not None and right is not None:
                linked = any(
                    adjacency[i] & rest for i in range(n) if sub >> i & 1
                )
                if linked:
                    if out_rows is None:
                        out_rows = cardinality(mask)
                    left_rows = cardinality(sub)
                    right_rows = cardinality(rest)
                    base = left[0] + right[0]
                    for op in JOIN_OPS:
                        cost = base + join_cost_increment(
                            op, left_rows, right_rows, out_rows, cfg
                        )
                        key = (cost, names(sub), names(rest), JOIN_OP_RANK[op])
                        if chosen_key is None or key < chosen_key:
                            chosen_key = key
                            chosen = (cost, Join(left[1], right[1], op))
            sub = (sub - 1) & mask
        if chosen is not None:
            best[mask] = chosen
    if full not in best:
        raise SimulatorError(f"query {query.id!r} has no cross-product-free plan")
    return best[full][1]


def expert_baseline(
    query: Query,
    catalog: Catalog,
    cfg: CostModelConfig,
    n_runs: int = 10,
    base_seed: int = 0,
) -> ExpertBaseline:
    """Execute the expert plan ``n_runs`` times (seeds base_seed + i) and
    summarize latency variability; tolerance is twice the sample std."""
    if n_runs < 2:
        raise SimulatorError("expert baseline needs n_runs >= 2")
    plan = expert_plan(query, catalog, cfg)
    latencies = np.array(
        [execute(plan, query, catalog, cfg, base_seed + i) for i in range(n_runs)]
    )
    mean = float(latencies.mean())
    std = float(latencies.std(ddof=1))
    return ExpertBaseline(
        query_id=query.id,
        mean_latency_ms=mean,
        std_latency_ms=std,
        tolerance_ms=2.0 * std,
        n_runs=n_runs,
    )
