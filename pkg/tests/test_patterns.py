import numpy as np
import pytest

from covrepair.datagen import random_dataset, survey_schema
from covrepair.errors import EmptyMupSet, UnknownValue, WrongArity
from covrepair.patterns import (
    InvertedIndex,
    Pattern,
    coverage_count,
    find_mups,
    matches,
    min_level_mups,
    parse_pattern,
    pattern_to_string,
)
from covrepair.schema import Attribute, AttributeSchema, TupleRecord

from oracles import brute_force_mups, naive_coverage, all_patterns


def binary_schema(d=3):
    return AttributeSchema(
        tuple(Attribute(f"b{i}", False, ("0", "1")) for i in range(d)),
        "bits " + " ".join("{b%d}" % i for i in range(d)),
    )


def make_tuples(schema, rows):
    return [
        TupleRecord(id=f"t{i}", values=tuple(r), embedding=np.zeros(2))
        for i, r in enumerate(rows)
    ]


class TestParsePattern:
    def test_compact_form(self):
        p = parse_pattern("X01", binary_schema())
        assert p.cells == (None, 0, 1)
        assert p.level == 2

    def test_all_unspecified(self):
        p = parse_pattern("XXX", binary_schema())
        assert p.level == 0

    def test_out_of_domain_token(self):
        with pytest.raises(UnknownValue):
            parse_pattern("X09", binary_schema())

    def test_wrong_arity(self):
        with pytest.raises(WrongArity):
            parse_pattern("X0", binary_schema())
        with pytest.raises(WrongArity):
            parse_pattern("X|0", binary_schema())

    def test_label_tokens_roundtrip(self, faces_schema):
        p = parse_pattern("Black|X", faces_schema)
        assert p.cells == (1, None)
        assert pattern_to_string(p, faces_schema) == "Black|X"

    def test_numeric_tokens_with_separator(self):
        p = parse_pattern("1|X|0", binary_schema())
        assert p.cells == (1, None, 0)


class TestMatches:
    def test_specified_cells_must_agree(self):
        schema = binary_schema()
        p = parse_pattern("X01", schema)
        t = make_tuples(schema, [(1, 0, 1)])[0]
        assert matches(p, t)

    def test_all_unspecified_matches_everything(self):
        schema = binary_schema()
        p = parse_pattern("XXX", schema)
        for row in [(0, 0, 0), (1, 1, 1), (0, 1, 0)]:
            assert matches(p, make_tuples(schema, [row])[0])

    def test_mismatch(self):
        schema = binary_schema()
        p = parse_pattern("X01", schema)
        t = make_tuples(schema, [(0, 1, 1)])[0]
        assert not matches(p, t)


class TestCoverageCount:
    def test_face_fixture_black(self, faces, faces_index, faces_schema):
        p = parse_pattern("Black|X", faces_schema)
        assert coverage_count(faces_index, p) == 40

    def test_empty_dataset(self):
        schema = binary_schema()
        index = InvertedIndex(schema, [])
        assert coverage_count(index, parse_pattern("X0X", schema)) == 0
        assert coverage_count(index, parse_pattern("XXX", schema)) == 0

    def test_matches_naive_scan_on_random_data(self):
        schema = binary_schema(3)
        ds = random_dataset(schema, 50, seed=3)
        index = InvertedIndex.from_dataset(ds)
        rows = [t.values for t in ds]
        for p in all_patterns(schema.cardinalities):
            assert index.count(p) == naive_coverage(rows, p)

    def test_matches_naive_scan_large(self):
        schema = survey_schema()
        ds = random_dataset(schema, 10_000, seed=11)
        index = InvertedIndex.from_dataset(ds)
        rows = [t.values for t in ds]
        for p in all_patterns(schema.cardinalities):
            assert index.count(p) == naive_coverage(rows, p)

    def test_level1_counts_partition_catalog(self, faces, faces_index, faces_schema):
        for attr in range(faces_schema.d):
            total = sum(
                faces_index.count(Pattern((None,) * attr + (v,) + (None,) * (faces_schema.d - attr - 1)))
                for v in range(len(faces_schema.attributes[attr].values))
            )
            assert total == len(faces)

    def test_members_agree_with_count(self):
        schema = survey_schema()
        ds = random_dataset(schema, 500, seed=5)
        index = InvertedIndex.from_dataset(ds)
        p = Pattern((0, None, 2))
        members = index.members(p)
        assert len(members) == index.count(p)
        for i in members:
            assert matches(p, ds.tuples[i])


class TestSortedIdFallback:
    def test_large_catalog_uses_sorted_ids(self, monkeypatch):
        import covrepair.patterns as pat

        monkeypatch.setattr(pat, "_BITSET_MAX", 100)
        schema = binary_schema(2)
        ds = random_dataset(schema, 300, seed=9, embedding_dim=2)
        index = pat.InvertedIndex(schema, ds.tuples)
        assert not index._bitset
        rows = [t.values for t in ds]
        for p in all_patterns(schema.cardinalities):
            assert index.count(p) == naive_coverage(rows, p)
        members = index.members(Pattern((1, None)))
        assert len(members) == index.count(Pattern((1, None)))


class TestFindMups:
    def test_face_fixture_level1(self, faces_index, faces_schema):
        mups = find_mups(faces_index, faces_schema, tau=100)
        level1 = [pattern_to_string(p, faces_schema) for p in mups if p.level == 1]
        assert level1 == ["Black|X", "Hispanic|X", "MiddleEastern|X"]

    def test_face_fixture_full_set(self, faces, faces_index, faces_schema):
        mups = find_mups(faces_index, faces_schema, tau=100)
        got = {pattern_to_string(p, faces_schema) for p in mups}
        rows = [t.values for t in faces]
        expected = {
            pattern_to_string(p, faces_schema)
            for p in brute_force_mups(rows, faces_schema.cardinalities, 100)
        }
        assert got == expected
        assert "Asian|Male" in got and "Asian|Female" in got

    def test_everything_covered(self):
        schema = binary_schema(2)
        rows = [(a, b) for a in (0, 1) for b in (0, 1)]
        ds = make_tuples(schema, rows)
        index = InvertedIndex(schema, ds)
        assert len(find_mups(index, schema, tau=1)) == 0

    def test_level0_sole_mup(self):
        schema = binary_schema(2)
        ds = make_tuples(schema, [(0, 0)])
        index = InvertedIndex(schema, ds)
        mups = find_mups(index, schema, tau=5)
        assert len(mups) == 1
        assert mups.mups[0].level == 0

    def test_matches_bruteforce_enumeration(self):
        rng = np.random.default_rng(42)
        for trial in range(25):
            d = int(rng.integers(2, 5))
            cards = [int(rng.integers(2, 5)) for _ in range(d)]
            schema = AttributeSchema(
                tuple(Attribute(f"a{i}", False, tuple(str(v) for v in range(c))) for i, c in enumerate(cards)),
                " ".join("{a%d}" % i for i in range(d)),
            )
            n = int(rng.integers(1, 400))
            ds = random_dataset(schema, n, seed=int(rng.integers(0, 1 << 30)), embedding_dim=2)
            tau = int(rng.integers(1, max(2, n // 3)))
            index = InvertedIndex.from_dataset(ds)
            got = find_mups(index, schema, tau).mups
            rows = [t.values for t in ds]
            expected = brute_force_mups(rows, schema.cardinalities, tau)
            assert got == expected

    def test_uncovered_refinements_stay_uncovered(self):
        schema = survey_schema()
        ds = random_dataset(schema, 300, seed=17)
        index = InvertedIndex.from_dataset(ds)
        tau = 30
        for p in all_patterns(schema.cardinalities):
            if index.count(p) < tau:
                for attr in range(schema.d):
                    if p.cells[attr] is not None:
                        continue
                    for v in range(len(schema.attributes[attr].values)):
                        child = p.with_cell(attr, v)
                        assert index.count(child) <= index.count(p)
                break


class TestMinLevelMups:
    def test_face_fixture(self, faces_index, faces_schema):
        mups = find_mups(faces_index, faces_schema, tau=100)
        mstar = min_level_mups(mups)
        assert [p.level for p in mstar] == [1, 1, 1]

    def test_single_member(self):
        from covrepair.patterns import MupSet

        p = Pattern((0, None))
        assert min_level_mups(MupSet([p], 5)).mups == [p]

    def test_mixed_levels(self):
        from covrepair.patterns import MupSet

        p2a = Pattern((0, 1, None))
        p2b = Pattern((1, 0, None))
        p3 = Pattern((1, 1, 1))
        got = min_level_mups(MupSet([p2a, p2b, p3], 4)).mups
        assert got == [p2a, p2b]

    def test_empty_raises(self):
        from covrepair.patterns import MupSet

        with pytest.raises(EmptyMupSet):
            min_level_mups(MupSet([], 3))
