"""Combination-selection solvers.

Given the minimum-level MUPs of a catalog and their gaps (tuples missing to
reach the coverage threshold), decide how many synthetic tuples to request
from each full combination so that every MUP receives at least its gap,
minimizing the total.  The problem is a covering integer program; the greedy
solver repeatedly picks the combination refining the most remaining MUPs,
which needs a maximum clique of the pairwise-compatibility graph (two
patterns admit a common refinement iff they agree wherever both specify).

Solvers here are pure functions of their inputs: same input, same plan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NotUncovered, SizeLimit
from .patterns import InvertedIndex, MupSet, Pattern
from .schema import Attribute, AttributeSchema


@dataclass
class GapTable:
    """Remaining tuples needed per MUP: gap = tau - current coverage."""

    entries: dict[Pattern, int]
    tau: int

    def eta(self) -> int:
        """Total residual demand; the harmonic bound argument runs over it."""
        return sum(self.entries.values())


@dataclass
class AugmentationPlan:
    """Counts of synthetic tuples to generate per full combination."""

    sigma: dict[Pattern, int] = field(default_factory=dict)
    clique_exact: bool = True

    @property
    def total(self) -> int:
        return sum(self.sigma.values())

    def to_dict(self, schema: AttributeSchema) -> dict:
        from .patterns import pattern_to_string

        return {
            "sigma": {
                pattern_to_string(c, schema): n
                for c, n in sorted(self.sigma.items(), key=lambda kv: kv[0].sort_key())
            },
            "total": self.total,
            "clique_exact": self.clique_exact,
        }


def compute_gaps(mups: MupSet, index: InvertedIndex, tau: int) -> GapTable:
    entries: dict[Pattern, int] = {}
    for p in mups:
        count = index.count(p)
        if count >= tau:
            raise NotUncovered(f"pattern {p} has {count} tuples at threshold {tau}")
        entries[p] = tau - count
    return GapTable(entries, tau)


def _compatible(a: Pattern, b: Pattern) -> bool:
    return all(
        ca is None or cb is None or ca == cb for ca, cb in zip(a.cells, b.cells)
    )


def _merge(patterns: list[Pattern], d: int) -> Pattern:
    cells: list[int | None] = [None] * d
    for p in patterns:
        for i, c in enumerate(p.cells):
            if c is not None:
                cells[i] = c
    return Pattern(tuple(cells))


def _maximal_cliques(adj: list[set[int]]) -> list[list[int]]:
    """Bron-Kerbosch with pivoting; exact for the instance sizes we accept."""
    n = len(adj)
    cliques: list[list[int]] = []

    def expand(r: list[int], p: set[int], x: set[int]) -> None:
        if not p and not x:
            cliques.append(sorted(r))
            return
        pivot = max(p | x, key=lambda u: len(adj[u] & p))
        for v in sorted(p - adj[pivot]):
            expand(r + [v], p & adj[v], x & adj[v])
            p = p - {v}
            x = x | {v}

    expand([], set(range(n)), set())
    return cliques


def _greedy_clique(adj: list[set[int]]) -> list[int]:
    """Degree-ordered greedy clique; used past the exact-search size cap."""
    n = len(adj)
    order = sorted(range(n), key=lambda u: -len(adj[u]))
    best: list[int] = []
    for start in order:
        clique = [start]
        for u in order:
            if u != start and all(u in adj[v] for v in clique):
                clique.append(u)
        if len(clique) > len(best):
            best = clique
    return sorted(best)


_EXACT_CLIQUE_CAP = 64


def _fill_free_cells(
    partial: Pattern, schema: AttributeSchema, index: InvertedIndex
) -> Pattern:
    """Specify remaining cells with the value of highest current coverage.

    Filling toward dense regions keeps the guide pool for the filled
    combination as large as possible.  Ties go to the smallest value index.
    """
    cells = list(partial.cells)
    for attr in range(schema.d):
        if cells[attr] is not None:
            continue
        best_v, best_count = 0, -1
        probe = Pattern(tuple(cells))
        for v in range(len(schema.attributes[attr].values)):
            count = index.count(probe.with_cell(attr, v))
            if count > best_count:
                best_v, best_count = v, count
        cells[attr] = best_v
    return Pattern(tuple(cells))


def max_matching_combination(
    mstar: MupSet,
    schema: AttributeSchema,
    index: InvertedIndex,
    prefer: set[Pattern] | None = None,
) -> tuple[Pattern, bool]:
    """A full combination refining as many MUPs in mstar as possible.

    Returns (combination, exact) where exact is False when the clique search
    fell back to the greedy heuristic.  Tie order among maximum cliques:
    a combination already in `prefer` (the plan under construction), then
    lexicographically smallest cells.
    """
    pats = list(mstar)
    if not pats:
        raise ValueError("mstar is empty")
    adj: list[set[int]] = [set() for _ in pats]
    for i in range(len(pats)):
        for j in range(i + 1, len(pats)):
            if _compatible(pats[i], pats[j]):
                adj[i].add(j)
                adj[j].add(i)

    exact = len(pats) <= _EXACT_CLIQUE_CAP
    if exact:
        cliques = _maximal_cliques(adj)
        best_size = max(len(c) for c in cliques)
        top = [c for c in cliques if len(c) == best_size]
    else:
        top = [_greedy_clique(adj)]

    prefer = prefer or set()
    candidates: list[Pattern] = []
    for clique in top:
        merged = _merge([pats[i] for i in clique], schema.d)
        reuse = sorted(
            (c for c in prefer if c.refines(merged)), key=Pattern.sort_key
        )
        candidates.append(reuse[0] if reuse else _fill_free_cells(merged, schema, index))

    def rank(c: Pattern) -> tuple:
        return (0 if c in prefer else 1, c.sort_key())

    return min(candidates, key=rank), exact


def _matched(combination: Pattern, mups) -> list[Pattern]:
    return [m for m in mups if combination.refines(m)]


def greedy_plan(
    mstar: MupSet,
    gaps: GapTable,
    schema: AttributeSchema,
    index: InvertedIndex,
) -> AugmentationPlan:
    """Iterative max-coverage assignment.

    Each round picks the combination matching the most remaining MUPs, adds
    the smallest matched gap to its count, and decrements every matched MUP
    (clamped at zero).  Terminates because at least one MUP hits zero per
    round; the result is feasible by construction.
    """
    remaining = dict(gaps.entries)
    plan = AugmentationPlan()
    while remaining:
        live = MupSet(sorted(remaining, key=Pattern.sort_key), gaps.tau)
        combo, exact = max_matching_combination(
            live, schema, index, prefer=set(plan.sigma)
        )
        plan.clique_exact = plan.clique_exact and exact
        matched = _matched(combo, remaining)
        gamma = min(remaining[m] for m in matched)
        plan.sigma[combo] = plan.sigma.get(combo, 0) + gamma
        for m in matched:
            remaining[m] = max(0, remaining[m] - gamma)
            if remaining[m] == 0:
                del remaining[m]
    return plan


def random_plan(
    mstar: MupSet,
    gaps: GapTable,
    schema: AttributeSchema,
    seed: int,
) -> AugmentationPlan:
    """Uniform combination draws until every gap is exhausted."""
    rng = np.random.default_rng(seed)
    remaining = dict(gaps.entries)
    card = schema.cardinalities
    plan = AugmentationPlan()
    while remaining:
        combo = Pattern(tuple(int(rng.integers(0, c)) for c in card))
        plan.sigma[combo] = plan.sigma.get(combo, 0) + 1
        for m in _matched(combo, remaining):
            remaining[m] -= 1
            if remaining[m] <= 0:
                del remaining[m]
    return plan


def min_gap_plan(
    mstar: MupSet,
    gaps: GapTable,
    schema: AttributeSchema,
    index: InvertedIndex,
) -> AugmentationPlan:
    """Serve the closest-to-covered MUP first, one combination per pick."""
    remaining = dict(gaps.entries)
    plan = AugmentationPlan()
    while remaining:
        target = min(remaining, key=lambda m: (remaining[m],) + m.sort_key())
        amount = remaining[target]
        combo = _fill_free_cells(target, schema, index)
        plan.sigma[combo] = plan.sigma.get(combo, 0) + amount
        for m in _matched(combo, remaining):
            remaining[m] = max(0, remaining[m] - amount)
            if remaining[m] == 0:
                del remaining[m]
    return plan


def optimal_plan_bruteforce(
    mstar: MupSet,
    gaps: GapTable,
    schema: AttributeSchema,
    combinations: list[Pattern] | None = None,
    max_total: int = 12,
    max_combos: int = 10,
) -> AugmentationPlan:
    """Exact minimum-total plan by exhaustive search.

    Only one representative combination per matched-MUP set matters, and the
    realizable matched sets are exactly the cliques of the compatibility
    graph, so candidates default to one combination per maximal clique.  A
    caller may instead pin the candidate set (`combinations`), e.g. for
    reduction instances where only given rows are legal.

    Refuses instances beyond (max_total, max_combos); the defaults keep the
    search at interactive size.
    """
    pats = sorted(gaps.entries, key=Pattern.sort_key)
    if not pats:
        return AugmentationPlan()
    demand = [gaps.entries[p] for p in pats]
    if sum(demand) > max_total:
        raise SizeLimit(f"total demand {sum(demand)} exceeds {max_total}")

    if combinations is None:
        adj: list[set[int]] = [set() for _ in pats]
        for i in range(len(pats)):
            for j in range(i + 1, len(pats)):
                if _compatible(pats[i], pats[j]):
                    adj[i].add(j)
                    adj[j].add(i)
        cliques = _maximal_cliques(adj)
        candidates = []
        for clique in cliques:
            merged = _merge([pats[i] for i in clique], schema.d)
            cells = tuple(0 if c is None else c for c in merged.cells)
            candidates.append(Pattern(cells))
    else:
        candidates = list(combinations)

    matched_sets = [frozenset(i for i, p in enumerate(pats) if c.refines(p)) for c in candidates]
    # Drop duplicates and dominated candidates; a dominating combination can
    # always absorb a dominated one's count without raising the total.
    keep: list[int] = []
    for i, ms in enumerate(matched_sets):
        dominated = any(
            j != i and (ms < matched_sets[j] or (ms == matched_sets[j] and j < i))
            for j in range(len(matched_sets))
        )
        if not dominated:
            keep.append(i)
    candidates = [candidates[i] for i in keep]
    matched_sets = [matched_sets[i] for i in keep]
    if len(candidates) > max_combos:
        raise SizeLimit(f"{len(candidates)} candidate combinations exceed {max_combos}")
    if any(all(i not in ms for ms in matched_sets) for i in range(len(pats))):
        raise ValueError("some MUP is matched by no candidate combination")

    order = sorted(range(len(candidates)), key=lambda i: -len(matched_sets[i]))
    best_counts: list[int] | None = None
    best_total = sum(demand) + 1  # greedy-free upper bound: eta is always feasible

    def search(pos: int, residual: list[int], counts: list[int], total: int) -> None:
        nonlocal best_counts, best_total
        need = max(residual)
        if need <= 0:
            if total < best_total:
                best_total = total
                best_counts = counts.copy()
            return
        if total + need >= best_total or pos == len(order):
            return
        ci = order[pos]
        cap = max((residual[m] for m in matched_sets[ci]), default=0)
        for x in range(min(cap, best_total - total - 1), -1, -1):
            if x:
                for m in matched_sets[ci]:
                    residual[m] -= x
            counts.append(x)
            search(pos + 1, residual, counts, total + x)
            counts.pop()
            if x:
                for m in matched_sets[ci]:
                    residual[m] += x

    search(0, demand.copy(), [], 0)
    if best_counts is None:
        # Feasible instances always admit the all-demand assignment.
        raise ValueError("no feasible assignment found")
    plan = AugmentationPlan()
    for pos, x in enumerate(best_counts):
        if x > 0:
            plan.sigma[candidates[order[pos]]] = x
    return plan


@dataclass
class VcInstance:
    """A vertex-cover decision problem rewritten as combination selection.

    One binary attribute per edge; one candidate combination per vertex with
    ones exactly at its incident edges; one single-cell MUP per edge with a
    gap of one.  A plan of total k over the vertex rows exists iff the graph
    has a vertex cover of size k.
    """

    num_vertices: int
    edges: list[tuple[int, int]]
    k: int
    schema: AttributeSchema
    combinations: list[Pattern]
    mups: MupSet
    gaps: GapTable


def vc_reduce(num_vertices: int, edges: list[tuple[int, int]], k: int) -> VcInstance:
    m = len(edges)
    names = [f"e{i + 1}" for i in range(max(m, 1))]
    attrs = tuple(Attribute(n, False, ("0", "1")) for n in names)
    template = "synthetic cover instance " + " ".join("{" + n + "}" for n in names)
    schema = AttributeSchema(attrs, template)
    d = len(names)

    combos = []
    for v in range(num_vertices):
        cells = [0] * d
        for i, (a, b) in enumerate(edges):
            if v in (a, b):
                cells[i] = 1
        combos.append(Pattern(tuple(cells)))

    mups = []
    for i in range(m):
        cells: list[int | None] = [None] * d
        cells[i] = 1
        mups.append(Pattern(tuple(cells)))
    mupset = MupSet(mups, tau=1)
    gaps = GapTable({p: 1 for p in mups}, tau=1)
    return VcInstance(num_vertices, list(edges), k, schema, combos, mupset, gaps)


def vc_decision(instance: VcInstance) -> bool:
    """True iff the reduced instance admits a plan of total at most k."""
    plan = optimal_plan_bruteforce(
        instance.mups,
        instance.gaps,
        instance.schema,
        combinations=instance.combinations,
        max_total=max(len(instance.edges), 1),
        max_combos=max(instance.num_vertices, 1),
    )
    return plan.total <= instance.k


def export_plan(
    plan: AugmentationPlan,
    schema: AttributeSchema,
    solver: str,
    eta: int,
    seed: int | None = None,
) -> dict:
    doc = plan.to_dict(schema)
    doc.update({"solver": solver, "eta": eta, "seed": seed})
    return doc


def write_plan(doc: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
