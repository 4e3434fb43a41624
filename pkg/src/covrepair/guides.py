"""Guide selection: which existing tuple (and mask) to hand the generator.

Strategies, from blunt to adaptive:

- no_guide: prompt only, nothing to anchor the generation.
- random_guide: a uniform tuple from the catalog; follows the catalog
  distribution but ignores the target combination.
- similar_tuple: a tuple from a sibling combination (differs in exactly one
  attribute, ordinal neighbors only at distance one), pool-weighted by
  combination size so every pooled tuple is equally likely.
- linucb: a contextual bandit picks which attribute to relax; the context is
  the one-hot target combination and the reward is whether the generated
  candidate passed the gates.

One-hot contexts keep each arm's design matrix diagonal (entry 1 + pulls per
combination), so the bandit state is stored as per-arm pull/success counters
while the dense ridge-regression view stays available for cross-checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyNeighborhood, EmptyPool, MissingPayload
from .masks import MaskLevel, delineate_mask, read_pgm_mask
from .patterns import InvertedIndex, Pattern
from .schema import AttributeSchema, TupleRecord

STRATEGIES = ("no_guide", "random_guide", "similar_tuple", "linucb")


def similar(c1: Pattern, c2: Pattern, schema: AttributeSchema) -> bool:
    """Sibling combinations, with ordinal attributes at distance one."""
    diff = [i for i, (a, b) in enumerate(zip(c1.cells, c2.cells)) if a != b]
    if len(diff) != 1:
        return False
    i = diff[0]
    if schema.attributes[i].ordinal:
        return abs(c1.cells[i] - c2.cells[i]) == 1
    return True


@dataclass
class SimilarPool:
    """Sibling combinations of a target with at least one catalog tuple."""

    combinations: list[Pattern]
    weights: list[float]


def build_similar_pool(
    c: Pattern, schema: AttributeSchema, index: InvertedIndex
) -> SimilarPool:
    """Weights are combination sizes normalized to one, so a tuple's overall
    sampling probability is uniform across the pool."""
    members: list[Pattern] = []
    counts: list[int] = []
    for attr in range(schema.d):
        for v in range(len(schema.attributes[attr].values)):
            if v == c.cells[attr]:
                continue
            sibling = c.with_cell(attr, v)
            if not similar(c, sibling, schema):
                continue
            count = index.count(sibling)
            if count >= 1:
                members.append(sibling)
                counts.append(count)
    if not members:
        raise EmptyPool(f"no similar combination of {c} has catalog tuples")
    total = sum(counts)
    return SimilarPool(members, [n / total for n in counts])


@dataclass
class BanditState:
    """LinUCB with disjoint per-arm linear models over one-hot contexts.

    arms = attributes; per (arm, combination) we keep the pull count n and
    success count s, which are exactly the diagonal of A_a - I and the
    nonzero entries of b_a.
    """

    schema: AttributeSchema
    alpha_ucb: float = 0.5
    counts: list[dict[int, list[int]]] = field(default_factory=list)  # ctx -> [n, s]
    pull_log: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.counts:
            self.counts = [dict() for _ in range(self.schema.d)]

    def context_index(self, c: Pattern) -> int:
        idx = 0
        for value, card in zip(c.cells, self.schema.cardinalities):
            idx = idx * card + value
        return idx

    def arm_stats(self, arm: int, ctx: int) -> tuple[int, int]:
        n, s = self.counts[arm].get(ctx, (0, 0))
        return n, s

    def ucb_scores(self, c: Pattern) -> list[float]:
        ctx = self.context_index(c)
        scores = []
        for arm in range(self.schema.d):
            n, s = self.arm_stats(arm, ctx)
            scores.append(s / (1 + n) + self.alpha_ucb / np.sqrt(1 + n))
        return scores

    def dense_design(self, arm: int) -> tuple[np.ndarray, np.ndarray]:
        """Materialize A_a = I + sum f f' and b_a = sum r f for cross-checks.

        Only usable while the combination space is small."""
        k = self.schema.combination_count()
        A = np.eye(k)
        b = np.zeros(k)
        for ctx, (n, s) in self.counts[arm].items():
            A[ctx, ctx] += n
            b[ctx] = s
        return A, b

    def to_dict(self) -> dict:
        return {
            "alpha_ucb": self.alpha_ucb,
            "counts": [
                {str(ctx): list(ns) for ctx, ns in sorted(per_arm.items())}
                for per_arm in self.counts
            ],
            "pull_log": [list(entry) for entry in self.pull_log],
        }

    @classmethod
    def from_dict(cls, doc: dict, schema: AttributeSchema) -> "BanditState":
        state = cls(schema, alpha_ucb=float(doc["alpha_ucb"]))
        state.counts = [
            {int(ctx): [int(ns[0]), int(ns[1])] for ctx, ns in per_arm.items()}
            for per_arm in doc["counts"]
        ]
        state.pull_log = [tuple(int(x) for x in e) for e in doc["pull_log"]]
        return state


def save_bandit(state: BanditState, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(state.to_dict(), fh, sort_keys=True)
        fh.write("\n")


def load_bandit(path: str | Path, schema: AttributeSchema) -> BanditState:
    with open(path) as fh:
        return BanditState.from_dict(json.load(fh), schema)


def linucb_select_arm(state: BanditState, c: Pattern) -> int:
    """Highest upper confidence bound; ties go to the lowest arm index."""
    scores = state.ucb_scores(c)
    best = max(scores)
    return next(i for i, v in enumerate(scores) if v == best)


def linucb_update(state: BanditState, arm: int, c: Pattern, reward: int) -> None:
    if reward not in (0, 1):
        raise ValueError("reward must be 0 or 1")
    ctx = state.context_index(c)
    n, s = state.arm_stats(arm, ctx)
    state.counts[arm][ctx] = [n + 1, s + reward]
    state.pull_log.append((arm, ctx, reward))


@dataclass
class Guide:
    """What accompanies the prompt: a tuple to edit and the region to redo.

    tuple_id is None for the no-guide strategy; a mask is attached only when
    a delineation level was requested.
    """

    tuple_id: str | None
    mask: np.ndarray | None
    source_combination: Pattern
    arm: int | None = None
    fallback: bool = False


def _uniform_member(
    combination: Pattern,
    tuples: list[TupleRecord],
    index: InvertedIndex,
    rng: np.random.Generator,
) -> TupleRecord:
    members = index.members(combination)
    pick = members[int(rng.integers(0, len(members)))]
    return tuples[pick]


def _attach_mask(
    guide: Guide, tuple_rec: TupleRecord, mask_level: MaskLevel | str | None
) -> Guide:
    if mask_level is None:
        return guide
    if tuple_rec.mask_path is None or tuple_rec.payload_path is None:
        raise MissingPayload(
            f"tuple {tuple_rec.id!r} has no payload/mask but masking was requested"
        )
    accurate = read_pgm_mask(tuple_rec.mask_path)
    guide.mask = delineate_mask(accurate, MaskLevel(mask_level), accurate.shape[1])
    return guide


def _modify_for_arm(
    state: BanditState,
    c: Pattern,
    arm: int,
    schema: AttributeSchema,
    index: InvertedIndex,
    rng: np.random.Generator,
) -> Pattern:
    """Swap the arm's attribute to a similar neighbor value, weighted by how
    much catalog support the resulting combination has."""
    values = []
    weights = []
    for v in range(len(schema.attributes[arm].values)):
        if v == c.cells[arm]:
            continue
        if schema.attributes[arm].ordinal and abs(v - c.cells[arm]) != 1:
            continue
        candidate = c.with_cell(arm, v)
        count = index.count(candidate)
        if count >= 1:
            values.append(candidate)
            weights.append(count)
    if not values:
        raise EmptyNeighborhood(f"no populated neighbor on attribute {arm} for {c}")
    probs = np.array(weights, dtype=float)
    probs /= probs.sum()
    pick = int(rng.choice(len(values), p=probs))
    return values[pick]


def select_guide(
    strategy: str,
    c: Pattern,
    schema: AttributeSchema,
    tuples: list[TupleRecord],
    index: InvertedIndex,
    rng: np.random.Generator,
    state: BanditState | None = None,
    mask_level: MaskLevel | str | None = None,
) -> Guide:
    """Pick the guide for one generation request.

    `tuples` and `index` must describe the same catalog snapshot (the
    orchestrator passes the real tuples only, so synthetic output never
    guides later generations).  Strategies that find no usable pool fall
    back: similar_tuple and linucb degrade to random_guide, linucb first
    trying its remaining arms in UCB order.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "no_guide":
        return Guide(None, None, c)
    if not tuples:
        raise EmptyPool("catalog has no tuples to guide with")

    if strategy == "random_guide":
        pick = tuples[int(rng.integers(0, len(tuples)))]
        guide = Guide(pick.id, None, Pattern(tuple(pick.values)))
        return _attach_mask(guide, pick, mask_level)

    if strategy == "similar_tuple":
        try:
            pool = build_similar_pool(c, schema, index)
        except EmptyPool:
            guide = select_guide(
                "random_guide", c, schema, tuples, index, rng, mask_level=mask_level
            )
            guide.fallback = True
            return guide
        pick_idx = int(rng.choice(len(pool.combinations), p=pool.weights))
        source = pool.combinations[pick_idx]
        pick = _uniform_member(source, tuples, index, rng)
        guide = Guide(pick.id, None, source, arm=None)
        return _attach_mask(guide, pick, mask_level)

    # linucb
    if state is None:
        raise ValueError("linucb requires a BanditState")
    scores = state.ucb_scores(c)
    order = sorted(range(schema.d), key=lambda a: (-scores[a], a))
    for arm in order:
        try:
            source = _modify_for_arm(state, c, arm, schema, index, rng)
        except EmptyNeighborhood:
            continue
        pick = _uniform_member(source, tuples, index, rng)
        guide = Guide(pick.id, None, source, arm=arm)
        return _attach_mask(guide, pick, mask_level)
    guide = select_guide(
        "random_guide", c, schema, tuples, index, rng, mask_level=mask_level
    )
    guide.fallback = True
    guide.arm = order[0]
    return guide
