import math

import numpy as np
import pytest

from covrepair.datagen import random_dataset
from covrepair.errors import NotUncovered, SizeLimit
from covrepair.patterns import InvertedIndex, MupSet, Pattern, parse_pattern
from covrepair.schema import Attribute, AttributeSchema, TupleRecord
from covrepair.selection import (
    GapTable,
    compute_gaps,
    export_plan,
    greedy_plan,
    max_matching_combination,
    min_gap_plan,
    optimal_plan_bruteforce,
    random_plan,
    vc_decision,
    vc_reduce,
)

from oracles import min_vertex_cover_size, random_connected_graph


def schema_of(cards, ordinal=()):
    return AttributeSchema(
        tuple(
            Attribute(f"a{i}", i in ordinal, tuple(str(v) for v in range(c)))
            for i, c in enumerate(cards)
        ),
        " ".join("{a%d}" % i for i in range(len(cards))),
    )


def empty_index(schema):
    return InvertedIndex(schema, [])


def dataset_index(schema, rows):
    tuples = [
        TupleRecord(id=f"t{i}", values=tuple(r), embedding=np.zeros(2))
        for i, r in enumerate(rows)
    ]
    return InvertedIndex(schema, tuples)


def plan_feasible(plan, gaps):
    for m, need in gaps.entries.items():
        got = sum(n for c, n in plan.sigma.items() if c.refines(m))
        if got < need:
            return False
    return True


def harmonic(n):
    return sum(1.0 / i for i in range(1, n + 1))


class TestComputeGaps:
    def test_face_fixture_gaps(self, faces, faces_index, faces_schema):
        from covrepair.patterns import find_mups, min_level_mups

        mstar = min_level_mups(find_mups(faces_index, faces_schema, 100))
        gaps = compute_gaps(mstar, faces_index, 100)
        by_str = {
            str(p): g for p, g in gaps.entries.items()
        }
        assert by_str == {"1|X": 60, "3|X": 81, "4|X": 90}
        assert gaps.eta() == 231

    def test_boundary_gap(self):
        schema = schema_of([2, 2])
        rows = [(0, 0)] * 4
        index = dataset_index(schema, rows)
        gaps = compute_gaps(MupSet([Pattern((1, None))], 1), index, 1)
        assert gaps.entries[Pattern((1, None))] == 1

    def test_not_uncovered(self):
        schema = schema_of([2, 2])
        index = dataset_index(schema, [(0, 0)] * 5)
        with pytest.raises(NotUncovered):
            compute_gaps(MupSet([Pattern((0, None))], 3), index, 3)


class TestMaxMatchingCombination:
    def test_compatible_pair(self):
        schema = schema_of([2, 2, 2])
        mups = MupSet([Pattern((1, None, None)), Pattern((None, 1, None))], 2)
        combo, exact = max_matching_combination(mups, schema, empty_index(schema))
        assert exact
        assert combo.cells[0] == 1 and combo.cells[1] == 1

    def test_conflicting_pair_matches_one(self):
        schema = schema_of([2, 2])
        mups = MupSet([Pattern((0, None)), Pattern((1, None))], 2)
        combo, _ = max_matching_combination(mups, schema, empty_index(schema))
        matched = [m for m in mups if combo.refines(m)]
        assert len(matched) == 1

    def test_match_count_equals_exhaustive_scan(self):
        rng = np.random.default_rng(1234)
        schema = schema_of([3, 2, 4, 2])
        from covrepair.patterns import enumerate_combinations

        for trial in range(20):
            mups = []
            seen = set()
            while len(mups) < 10:
                cells = tuple(
                    int(rng.integers(0, c)) if rng.random() < 0.5 else None
                    for c in schema.cardinalities
                )
                if cells not in seen and any(x is not None for x in cells):
                    seen.add(cells)
                    mups.append(Pattern(cells))
            mupset = MupSet(mups, 2)
            combo, exact = max_matching_combination(mupset, schema, empty_index(schema))
            assert exact
            got = sum(combo.refines(m) for m in mups)
            best = max(
                sum(c.refines(m) for m in mups)
                for c in enumerate_combinations(schema)
            )
            assert got == best


class TestGreedyPlan:
    def test_two_binary_mups_reuse(self):
        # 1X needs 2, X1 needs 3: one combination 11 serves both, total 3
        schema = schema_of([2, 2])
        mups = MupSet([Pattern((1, None)), Pattern((None, 1))], 5)
        gaps = GapTable({Pattern((1, None)): 2, Pattern((None, 1)): 3}, 5)
        plan = greedy_plan(mups, gaps, schema, empty_index(schema))
        assert plan.sigma == {Pattern((1, 1)): 3}
        assert plan.total == 3
        opt = optimal_plan_bruteforce(mups, gaps, schema)
        assert opt.total == 3

    def test_face_fixture_totals(self, faces, faces_index, faces_schema):
        from covrepair.patterns import find_mups, min_level_mups

        mstar = min_level_mups(find_mups(faces_index, faces_schema, 100))
        gaps = compute_gaps(mstar, faces_index, 100)
        plan = greedy_plan(mstar, gaps, faces_schema, faces_index)
        assert plan.total == 231
        assert len(plan.sigma) == 3
        # free gender cells fill toward the larger existing side
        sigma_by_str = {str(c): n for c, n in plan.sigma.items()}
        assert sigma_by_str == {"1|0": 60, "3|0": 81, "4|0": 90}

    def test_single_mup(self):
        schema = schema_of([2, 3])
        mups = MupSet([Pattern((None, 2))], 9)
        gaps = GapTable({Pattern((None, 2)): 5}, 9)
        plan = greedy_plan(mups, gaps, schema, empty_index(schema))
        assert plan.total == 5
        assert len(plan.sigma) == 1

    def test_feasibility_and_eta_bound_random(self):
        rng = np.random.default_rng(77)
        for trial in range(40):
            d = int(rng.integers(2, 5))
            cards = [int(rng.integers(2, 4)) for _ in range(d)]
            schema = schema_of(cards)
            level = int(rng.integers(1, d + 1))
            mups = []
            seen = set()
            for _ in range(int(rng.integers(1, 6))):
                attrs = rng.choice(d, size=level, replace=False)
                cells = [None] * d
                for a in attrs:
                    cells[a] = int(rng.integers(0, cards[a]))
                if tuple(cells) not in seen:
                    seen.add(tuple(cells))
                    mups.append(Pattern(tuple(cells)))
            gaps = GapTable({m: int(rng.integers(1, 6)) for m in mups}, 10)
            mupset = MupSet(mups, 10)
            plan = greedy_plan(mupset, gaps, schema, empty_index(schema))
            assert plan_feasible(plan, gaps)
            assert plan.total <= gaps.eta()

    def test_determinism(self, faces, faces_index, faces_schema):
        from covrepair.patterns import find_mups, min_level_mups

        mstar = min_level_mups(find_mups(faces_index, faces_schema, 100))
        gaps = compute_gaps(mstar, faces_index, 100)
        a = greedy_plan(mstar, gaps, faces_schema, faces_index)
        b = greedy_plan(mstar, gaps, faces_schema, faces_index)
        assert a.sigma == b.sigma


class TestRandomPlan:
    def test_single_trivial_mup(self):
        schema = schema_of([2, 2])
        m = Pattern((None, None))
        plan = random_plan(MupSet([m], 1), GapTable({m: 1}, 1), schema, seed=4)
        assert plan.total == 1

    def test_seed_determinism(self):
        schema = schema_of([3, 3])
        m = Pattern((2, None))
        gaps = GapTable({m: 4}, 6)
        a = random_plan(MupSet([m], 6), gaps, schema, seed=123)
        b = random_plan(MupSet([m], 6), gaps, schema, seed=123)
        assert a.sigma == b.sigma

    def test_feasible(self):
        rng = np.random.default_rng(5)
        schema = schema_of([3, 2, 3])
        for trial in range(10):
            m1 = Pattern((int(rng.integers(0, 3)), None, None))
            m2 = Pattern((None, None, int(rng.integers(0, 3))))
            gaps = GapTable({m1: 3, m2: 2}, 5)
            plan = random_plan(MupSet([m1, m2], 5), gaps, schema, seed=trial)
            assert plan_feasible(plan, gaps)

    def test_expected_cost_dominates_greedy(self):
        schema = schema_of([4, 4])
        m1, m2 = Pattern((1, None)), Pattern((None, 2))
        gaps = GapTable({m1: 3, m2: 4}, 9)
        mups = MupSet([m1, m2], 9)
        greedy_total = greedy_plan(mups, gaps, schema, empty_index(schema)).total
        totals = [
            random_plan(mups, gaps, schema, seed=s).total for s in range(50)
        ]
        assert np.mean(totals) >= greedy_total


class TestMinGapPlan:
    def test_two_mups_hand_trace(self):
        # Serving 1X first: the free cell filling decides whether X1 profits.
        schema = schema_of([2, 2])
        m1, m2 = Pattern((1, None)), Pattern((None, 1))
        gaps = GapTable({m1: 2, m2: 3}, 5)
        # dataset pushes the fill of 1X toward (1,1): column 1 dominated by value 1
        index = dataset_index(schema, [(1, 1), (0, 1), (0, 1)])
        plan = min_gap_plan(MupSet([m1, m2], 5), gaps, schema, index)
        assert plan_feasible(plan, gaps)
        assert 3 <= plan.total <= 5
        # with that fill the first combination is (1,1), so one more unit of
        # X1 remains afterwards
        assert plan.total == 3

    def test_fill_away_from_other_mup(self):
        schema = schema_of([2, 2])
        m1, m2 = Pattern((1, None)), Pattern((None, 1))
        gaps = GapTable({m1: 2, m2: 3}, 5)
        index = dataset_index(schema, [(1, 0), (1, 0), (0, 0)])
        plan = min_gap_plan(MupSet([m1, m2], 5), gaps, schema, index)
        assert plan_feasible(plan, gaps)
        assert plan.total == 5

    def test_single_mup_matches_greedy(self):
        schema = schema_of([3, 2])
        m = Pattern((2, None))
        gaps = GapTable({m: 4}, 8)
        mups = MupSet([m], 8)
        index = empty_index(schema)
        assert (
            min_gap_plan(mups, gaps, schema, index).total
            == greedy_plan(mups, gaps, schema, index).total
        )

    def test_determinism(self):
        schema = schema_of([3, 3])
        m1, m2 = Pattern((0, None)), Pattern((None, 1))
        gaps = GapTable({m1: 2, m2: 2}, 4)
        index = dataset_index(schema, [(0, 1), (1, 1), (2, 2)])
        a = min_gap_plan(MupSet([m1, m2], 4), gaps, schema, index)
        b = min_gap_plan(MupSet([m1, m2], 4), gaps, schema, index)
        assert a.sigma == b.sigma


class TestOptimalBruteforce:
    def test_single_mup_total_is_gap(self):
        schema = schema_of([2, 2])
        m = Pattern((1, None))
        plan = optimal_plan_bruteforce(MupSet([m], 9), GapTable({m: 7}, 9), schema)
        assert plan.total == 7

    def test_size_limit(self):
        schema = schema_of([2, 2])
        m = Pattern((1, None))
        with pytest.raises(SizeLimit):
            optimal_plan_bruteforce(MupSet([m], 99), GapTable({m: 50}, 99), schema)

    def test_empty_instance(self):
        schema = schema_of([2, 2])
        plan = optimal_plan_bruteforce(MupSet([], 1), GapTable({}, 1), schema)
        assert plan.total == 0

    def test_at_most_greedy(self):
        rng = np.random.default_rng(202)
        for trial in range(30):
            cards = [int(rng.integers(2, 4)) for _ in range(3)]
            schema = schema_of(cards)
            mups, seen = [], set()
            for _ in range(int(rng.integers(1, 5))):
                a = int(rng.integers(0, 3))
                cells = [None, None, None]
                cells[a] = int(rng.integers(0, cards[a]))
                if tuple(cells) not in seen:
                    seen.add(tuple(cells))
                    mups.append(Pattern(tuple(cells)))
            gaps = GapTable({m: int(rng.integers(1, 4)) for m in mups}, 9)
            if gaps.eta() > 12:
                continue
            mupset = MupSet(mups, 9)
            opt = optimal_plan_bruteforce(mupset, gaps, schema)
            greedy = greedy_plan(mupset, gaps, schema, empty_index(schema))
            assert plan_feasible(opt, gaps)
            assert opt.total <= greedy.total


class TestVcReduction:
    def test_triangle(self):
        edges = [(0, 1), (1, 2), (0, 2)]
        inst = vc_reduce(3, edges, k=2)
        # every edge column has exactly two 1-rows
        for col in range(3):
            assert sum(c.cells[col] for c in inst.combinations) == 2
        plan = optimal_plan_bruteforce(
            inst.mups, inst.gaps, inst.schema, combinations=inst.combinations,
            max_total=3, max_combos=3,
        )
        assert plan.total == 2
        assert vc_decision(inst)
        assert not vc_decision(vc_reduce(3, edges, k=1))

    def test_edgeless(self):
        inst = vc_reduce(4, [], k=0)
        assert len(inst.mups) == 0
        plan = optimal_plan_bruteforce(
            inst.mups, inst.gaps, inst.schema, combinations=inst.combinations
        )
        assert plan.total == 0

    def test_matches_min_vertex_cover(self):
        rng = np.random.default_rng(321)
        for trial in range(12):
            n = int(rng.integers(2, 7))
            edges = random_connected_graph(n, rng)
            inst = vc_reduce(n, edges, k=n)
            plan = optimal_plan_bruteforce(
                inst.mups,
                inst.gaps,
                inst.schema,
                combinations=inst.combinations,
                max_total=len(edges),
                max_combos=n,
            )
            assert plan.total == min_vertex_cover_size(n, edges)


class TestHarmonicBound:
    def test_greedy_within_harmonic_factor(self):
        rng = np.random.default_rng(999)
        checked = 0
        while checked < 60:
            cards = [int(rng.integers(2, 4)) for _ in range(int(rng.integers(2, 5)))]
            schema = schema_of(cards)
            d = len(cards)
            mups, seen = [], set()
            level = int(rng.integers(1, min(d, 2) + 1))
            for _ in range(int(rng.integers(1, 6))):
                attrs = rng.choice(d, size=level, replace=False)
                cells = [None] * d
                for a in attrs:
                    cells[a] = int(rng.integers(0, cards[a]))
                if tuple(cells) not in seen:
                    seen.add(tuple(cells))
                    mups.append(Pattern(tuple(cells)))
            gaps = GapTable({m: int(rng.integers(1, 5)) for m in mups}, 9)
            if gaps.eta() > 12:
                continue
            mupset = MupSet(mups, 9)
            try:
                opt = optimal_plan_bruteforce(mupset, gaps, schema)
            except SizeLimit:
                continue
            greedy = greedy_plan(mupset, gaps, schema, empty_index(schema))
            eta = gaps.eta()
            assert greedy.total <= opt.total * harmonic(eta) + 1e-9
            checked += 1


class TestPlanExport:
    def test_roundtrip_document(self, faces, faces_index, faces_schema, tmp_path):
        import json

        from covrepair.patterns import find_mups, min_level_mups
        from covrepair.selection import write_plan

        mstar = min_level_mups(find_mups(faces_index, faces_schema, 100))
        gaps = compute_gaps(mstar, faces_index, 100)
        plan = greedy_plan(mstar, gaps, faces_schema, faces_index)
        doc = export_plan(plan, faces_schema, solver="greedy", eta=gaps.eta(), seed=0)
        assert doc["total"] == 231
        assert doc["solver"] == "greedy"
        assert doc["eta"] == 231
        path = tmp_path / "plan.json"
        write_plan(doc, path)
        assert json.loads(path.read_text()) == doc
