import math

import numpy as np
import pytest

from joinopt.catalog import edge_key
from joinopt.plans import Join, JoinOp, Scan, plan_relations
from joinopt.simulator import (
    CostModelConfig,
    SimulatorError,
    estimate_cardinality,
    execute,
    expert_baseline,
    expert_plan,
    noiseless_latency,
    plan_cost,
)

from conftest import make_catalog, make_query, random_tree_catalog_and_query


# --- independent brute-force oracle -----------------------------------------

def enumerate_plans(query):
    """Every cross-product-free bushy plan tree, by exhaustive recursion.

    Independent of the DP in the package: no memoized best-cost table, just
    full enumeration of (left, right, op) splits.
    """

    def plans_for(relset):
        rels = sorted(relset)
        if len(rels) == 1:
            yield Scan(rels[0])
            return
        seen_splits = []
        n = len(rels)
        for mask in range(1, 2 ** n - 1):
            left = frozenset(r for i, r in enumerate(rels) if mask >> i & 1)
            right = relset - left
            if not query.edges_between(left, right):
                continue
            seen_splits.append((left, right))
        for left, right in seen_splits:
            for lp in plans_for(left):
                for rp in plans_for(right):
                    for op in (JoinOp.HASH, JoinOp.MERGE, JoinOp.NESTED_LOOP):
                        yield Join(lp, rp, op)

    yield from plans_for(frozenset(query.relations))


def brute_force_min_cost(query, catalog, cfg):
    """Minimum cost over every cross-product-free plan, by exhaustive
    enumeration of per-tree costs (no pruning, no best-per-subset table; the
    min is taken only at the end, over complete plans).  Costs compose as
    (left + right) + increment, matching plan_cost's recursion bitwise."""
    from joinopt.plans import JOIN_OPS
    from joinopt.simulator import estimate_cardinality, join_cost_increment, scan_cost

    rels = sorted(query.relations)
    n = len(rels)
    index = {r: i for i, r in enumerate(rels)}
    adjacency = [0] * n
    for a, b in query.join_edges:
        adjacency[index[a]] |= 1 << index[b]
        adjacency[index[b]] |= 1 << index[a]
    card = {}

    def cardinality(mask):
        if mask not in card:
            names = [rels[i] for i in range(n) if mask >> i & 1]
            card[mask] = estimate_cardinality(names, query, catalog)
        return card[mask]

    costs = {
        1 << i: [scan_cost(catalog.table(rels[i]).row_count, cfg)] for i in range(n)
    }
    full = (1 << n) - 1
    for mask in range(1, full + 1):
        if mask & (mask - 1) == 0:
            continue
        out = []
        sub = (mask - 1) & mask
        while sub:
            rest = mask ^ sub
            if (
                sub in costs
                and rest in costs
                and any(adjacency[i] & rest for i in range(n) if sub >> i & 1)
            ):
                lrows, rrows, orows = cardinality(sub), cardinality(rest), cardinality(mask)
                for op in JOIN_OPS:
                    inc = join_cost_increment(op, lrows, rrows, orows, cfg)
                    for lc in costs[sub]:
                        for rc in costs[rest]:
                            out.append(lc + rc + inc)
            sub = (sub - 1) & mask
        if out:
            costs[mask] = out
    return min(costs[full])


# --- cardinality -------------------------------------------------------------

def test_cardinality_single_relation(pair_catalog, pair_query):
    assert estimate_cardinality({"r"}, pair_query, pair_catalog) == 100.0


def test_cardinality_two_relations(pair_catalog, pair_query):
    # 100 x 200 x 0.01 = 200
    assert estimate_cardinality({"r", "s"}, pair_query, pair_catalog) == pytest.approx(200.0)


def test_cardinality_three_relation_chain(chain3_catalog, chain3_query):
    # 100^3 x 0.1 x 0.05 = 5000 (hand arithmetic)
    got = estimate_cardinality({"a", "b", "c"}, chain3_query, chain3_catalog)
    assert got == pytest.approx(5000.0)


def test_cardinality_rejects_empty(pair_catalog, pair_query):
    with pytest.raises(SimulatorError, match="empty"):
        estimate_cardinality(set(), pair_query, pair_catalog)


def test_cardinality_is_set_function(rng):
    """Invariant under any ordering of the same relation set."""
    for trial in range(20):
        catalog, query = random_tree_catalog_and_query(rng, int(rng.integers(2, 6)))
        rels = list(query.relations)
        rng.shuffle(rels)
        k = int(rng.integers(1, len(rels) + 1))
        subset = rels[:k]
        a = estimate_cardinality(subset, query, catalog)
        b = estimate_cardinality(reversed(subset), query, catalog)
        c = estimate_cardinality(frozenset(subset), query, catalog)
        assert a == b == c


# --- plan cost ---------------------------------------------------------------

def test_scan_cost_charges_unfiltered_rows(unit_cost):
    """Scans read every base row; the filter applies to the output, so a 50%
    filter halves downstream cardinalities but not the scan itself."""
    catalog = make_catalog(
        [("r", 100, 16, 0.5), ("s", 200, 16, 1.0)], {("r", "s"): 0.01}
    )
    query = make_query("pair", ["r", "s"], [("r", "s")])
    plan = Join(Scan("r"), Scan("s"), JoinOp.HASH)
    # scans 100 + 200; |left| = 50, |right| = 200, |out| = 100
    expected = 300.0 + 50.0 + (50.0 + 200.0 + 100.0)
    assert plan_cost(plan, query, catalog, unit_cost) == pytest.approx(expected)


def test_hash_join_cost_hand_value(pair_catalog, pair_query, unit_cost):
    # scans 100 + 200, build 100, cpu (100 + 200 + 200) -> 900
    plan = Join(Scan("r"), Scan("s"), JoinOp.HASH)
    assert plan_cost(plan, pair_query, pair_catalog, unit_cost) == pytest.approx(900.0)


def test_zero_coefficients_zero_cost(pair_catalog, pair_query):
    cfg = CostModelConfig(
        cpu_cost_per_row=0,
        hash_build_cost_per_row=0,
        nlj_cost_per_row_pair=0,
        merge_sort_cost_per_row_log_row=0,
        scan_cost_per_row=0,
        latency_per_cost_unit=1.0,
        noise_rel_sigma=0.0,
    )
    for op in JoinOp:
        plan = Join(Scan("r"), Scan("s"), op)
        assert plan_cost(plan, pair_query, pair_catalog, cfg) == 0.0


def test_nlj_and_merge_cost_formulas(pair_catalog, pair_query, unit_cost):
    nlj = Join(Scan("r"), Scan("s"), JoinOp.NESTED_LOOP)
    assert plan_cost(nlj, pair_query, pair_catalog, unit_cost) == pytest.approx(
        300.0 + 100.0 * 200.0
    )
    merge = Join(Scan("r"), Scan("s"), JoinOp.MERGE)
    expected = (
        300.0
        + 100.0 * math.log2(101.0)
        + 200.0 * math.log2(201.0)
        + 200.0
    )
    assert plan_cost(merge, pair_query, pair_catalog, unit_cost) == pytest.approx(expected)


def test_plan_query_mismatch(chain3_catalog, chain3_query, unit_cost):
    partial = Join(Scan("a"), Scan("b"), JoinOp.HASH)
    with pytest.raises(SimulatorError, match="covers"):
        plan_cost(partial, chain3_query, chain3_catalog, unit_cost)


def test_plan_cost_monotone_in_coefficients(rng):
    """Doubling any one coefficient never decreases any plan's cost."""
    fields = (
        "cpu_cost_per_row",
        "hash_build_cost_per_row",
        "nlj_cost_per_row_pair",
        "merge_sort_cost_per_row_log_row",
        "scan_cost_per_row",
    )
    import dataclasses

    for trial in range(10):
        catalog, query = random_tree_catalog_and_query(rng, int(rng.integers(2, 5)))
        base = CostModelConfig(noise_rel_sigma=0.0)
        plans = list(enumerate_plans(query))[:50]
        for name in fields:
            doubled = dataclasses.replace(base, **{name: getattr(base, name) * 2})
            for plan in plans:
                assert plan_cost(plan, query, catalog, doubled) >= plan_cost(
                    plan, query, catalog, base
                )


# --- execute -----------------------------------------------------------------

def test_execute_noiseless_equals_cost_times_unit(pair_catalog, pair_query):
    cfg = CostModelConfig(noise_rel_sigma=0.0)
    plan = Join(Scan("r"), Scan("s"), JoinOp.HASH)
    expected = plan_cost(plan, pair_query, pair_catalog, cfg) * cfg.latency_per_cost_unit
    assert execute(plan, pair_query, pair_catalog, cfg, rng_seed=7) == expected
    assert noiseless_latency(plan, pair_query, pair_catalog, cfg) == expected


def test_execute_deterministic_per_seed(pair_catalog, pair_query, default_cost):
    plan = Join(Scan("r"), Scan("s"), JoinOp.HASH)
    a = execute(plan, pair_query, pair_catalog, default_cost, rng_seed=42)
    b = execute(plan, pair_query, pair_catalog, default_cost, rng_seed=42)
    c = execute(plan, pair_query, pair_catalog, default_cost, rng_seed=43)
    assert a == b
    assert a != c


def test_execute_noise_statistics(pair_catalog, pair_query):
    """Statistical oracle: over 1e4 seeds, sample std/mean within [0.04, 0.06]
    for sigma = 0.05."""
    cfg = CostModelConfig(noise_rel_sigma=0.05)
    plan = Join(Scan("r"), Scan("s"), JoinOp.HASH)
    draws = np.array(
        [execute(plan, pair_query, pair_catalog, cfg, rng_seed=s) for s in range(10_000)]
    )
    ratio = draws.std(ddof=1) / draws.mean()
    assert 0.04 <= ratio <= 0.06


def test_execute_floor_prevents_nonpositive(pair_catalog, pair_query):
    cfg = CostModelConfig(noise_rel_sigma=5.0)  # many draws below -1
    plan = Join(Scan("r"), Scan("s"), JoinOp.HASH)
    base = noiseless_latency(plan, pair_query, pair_catalog, cfg)
    lats = [execute(plan, pair_query, pair_catalog, cfg, rng_seed=s) for s in range(200)]
    assert min(lats) >= 0.01 * base > 0


# --- expert plan -------------------------------------------------------------

def test_expert_two_relations_exhaustive(pair_catalog, pair_query, default_cost):
    plan = expert_plan(pair_query, pair_catalog, default_cost)
    best = brute_force_min_cost(pair_query, pair_catalog, default_cost)
    assert plan_cost(plan, pair_query, pair_catalog, default_cost) == pytest.approx(best)


def test_expert_four_relation_chain_matches_brute_force(default_cost):
    catalog = make_catalog(
        [("a", 1000, 8, 1.0), ("b", 50, 8, 1.0), ("c", 2000, 8, 0.5), ("d", 10, 8, 1.0)],
        {("a", "b"): 0.01, ("b", "c"): 0.002, ("c", "d"): 0.3},
    )
    query = make_query("c4", ["a", "b", "c", "d"], [("a", "b"), ("b", "c"), ("c", "d")])
    plan = expert_plan(query, catalog, default_cost)
    got = plan_cost(plan, query, catalog, default_cost)
    assert got == pytest.approx(brute_force_min_cost(query, catalog, default_cost))


def test_expert_matches_brute_force_random(rng, default_cost):
    for trial in range(25):
        catalog, query = random_tree_catalog_and_query(rng, int(rng.integers(2, 6)))
        plan = expert_plan(query, catalog, default_cost)
        got = plan_cost(plan, query, catalog, default_cost)
        best = brute_force_min_cost(query, catalog, default_cost)
        assert got == pytest.approx(best, rel=1e-12)


def test_expert_tie_break_deterministic(pair_catalog, pair_query):
    cfg = CostModelConfig(
        cpu_cost_per_row=0,
        hash_build_cost_per_row=0,
        nlj_cost_per_row_pair=0,
        merge_sort_cost_per_row_log_row=0,
        scan_cost_per_row=1.0,
        latency_per_cost_unit=1.0,
        noise_rel_sigma=0.0,
    )
    # All joins cost the same (only scans are charged): full tie.
    first = expert_plan(pair_query, pair_catalog, cfg)
    second = expert_plan(pair_query, pair_catalog, cfg)
    assert first == second
    assert first == Join(Scan("r"), Scan("s"), JoinOp.HASH)


def test_expert_dp_limit(chain3_catalog, chain3_query, default_cost):
    with pytest.raises(SimulatorError, match="DP limit"):
        expert_plan(chain3_query, chain3_catalog, default_cost, dp_limit=2)


def test_expert_covers_query(rng, default_cost):
    catalog, query = random_tree_catalog_and_query(rng, 6)
    plan = expert_plan(query, catalog, default_cost)
    assert plan_relations(plan) == frozenset(query.relations)


# --- expert baseline ----------------------------------------------------------

def test_baseline_noiseless_zero_tolerance(pair_catalog, pair_query):
    cfg = CostModelConfig(noise_rel_sigma=0.0)
    baseline = expert_baseline(pair_query, pair_catalog, cfg, n_runs=10)
    assert baseline.std_latency_ms == 0.0
    assert baseline.tolerance_ms == 0.0
    assert baseline.n_runs == 10


def test_baseline_deterministic(pair_catalog, pair_query, default_cost):
    a = expert_baseline(pair_query, pair_catalog, default_cost, n_runs=10, base_seed=5)
    b = expert_baseline(pair_query, pair_catalog, default_cost, n_runs=10, base_seed=5)
    assert a == b


def test_baseline_tolerance_tracks_sigma(pair_catalog, pair_query):
    """Statistical oracle: averaged over many baselines, tolerance/mean is
    close to 2 x sigma."""
    cfg = CostModelConfig(noise_rel_sigma=0.05)
    ratios = []
    for base_seed in range(0, 4000, 20):
        b = expert_baseline(pair_query, pair_catalog, cfg, n_runs=10, base_seed=base_seed)
        ratios.append(b.tolerance_ms / b.mean_latency_ms)
    mean_ratio = float(np.mean(ratios))
    # E[sample std] of a normal with n=10 is ~0.9727 sigma.
    assert 0.08 <= mean_ratio <= 0.12


def test_baseline_requires_two_runs(pair_catalog, pair_query, default_cost):
    with pytest.raises(SimulatorError, match="n_runs"):
        expert_baseline(pair_query, pair_catalog, default_cost, n_runs=1)
