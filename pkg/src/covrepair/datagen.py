"""Synthetic catalog builders for experiments, demos, and tests.

Real deployments ingest schema + tuple files; everything here fabricates
catalogs with controlled demographics and embedding geometry so pipeline
behavior can be studied without any image data.
"""

from __future__ import annotations

import numpy as np

from .schema import Attribute, AttributeSchema, Dataset, TupleRecord

FACE_PROMPT = "A realistic frontal photo of a {race} {gender} person"

# Demographic counts of the face-catalog fixture: one well-covered majority,
# one mid-size group, and three sparse groups, 756 rows total.
FACE_COUNTS: dict[tuple[str, str], int] = {
    ("White", "Male"): 331,
    ("White", "Female"): 229,
    ("Black", "Male"): 21,
    ("Black", "Female"): 19,
    ("Asian", "Male"): 80,
    ("Asian", "Female"): 47,
    ("Hispanic", "Male"): 11,
    ("Hispanic", "Female"): 8,
    ("MiddleEastern", "Male"): 9,
    ("MiddleEastern", "Female"): 1,
}


def face_schema() -> AttributeSchema:
    return AttributeSchema(
        (
            Attribute(
                "race",
                False,
                ("White", "Black", "Asian", "Hispanic", "MiddleEastern"),
            ),
            Attribute("gender", False, ("Male", "Female")),
        ),
        FACE_PROMPT,
    )


def face_dataset(
    seed: int = 7,
    embedding_dim: int = 8,
    clustered: bool = False,
    cluster_spread: float = 2.5,
    cluster_sigma: float = 0.6,
) -> Dataset:
    """The face-catalog fixture.

    With clustered=False every embedding is a standard normal draw.  With
    clustered=True each combination gets its own center, so tuples of sparse
    combinations sit in sparse embedding regions, the geometry that makes
    guide choice matter for the distribution gate.
    """
    schema = face_schema()
    rng = np.random.default_rng(seed)
    centers: dict[tuple[int, int], np.ndarray] = {}
    if clustered:
        for r in range(5):
            for g in range(2):
                centers[(r, g)] = cluster_spread * rng.standard_normal(embedding_dim)
    tuples = []
    i = 0
    for (race, gender), count in FACE_COUNTS.items():
        r = schema.attributes[0].values.index(race)
        g = schema.attributes[1].values.index(gender)
        for _ in range(count):
            if clustered:
                emb = centers[(r, g)] + cluster_sigma * rng.standard_normal(embedding_dim)
            else:
                emb = rng.standard_normal(embedding_dim)
            tuples.append(TupleRecord(id=f"t{i:04d}", values=(r, g), embedding=emb))
            i += 1
    return Dataset(schema, tuples)


def survey_schema() -> AttributeSchema:
    """Three attributes with an ordinal age group, for guide-pool tests."""
    return AttributeSchema(
        (
            Attribute("gender", False, ("Male", "Female")),
            Attribute(
                "race", False, ("White", "Black", "Asian", "Indian", "Other")
            ),
            Attribute(
                "age_group",
                True,
                ("child", "teen", "adult", "middle_aged", "senior"),
            ),
        ),
        "A realistic frontal photo of a {age_group} {race} {gender} person",
    )


def random_dataset(
    schema: AttributeSchema,
    n: int,
    seed: int,
    embedding_dim: int = 4,
    value_probs: list[np.ndarray] | None = None,
) -> Dataset:
    """n tuples with independently drawn attribute values."""
    rng = np.random.default_rng(seed)
    if value_probs is None:
        value_probs = [None] * schema.d
    tuples = []
    for i in range(n):
        values = tuple(
            int(rng.choice(len(schema.attributes[a].values), p=value_probs[a]))
            for a in range(schema.d)
        )
        tuples.append(
            TupleRecord(
                id=f"r{i:05d}",
                values=values,
                embedding=rng.standard_normal(embedding_dim),
            )
        )
    return Dataset(schema, tuples)


def skewed_survey_dataset(seed: int, n: int = 3000) -> Dataset:
    """Skewed category frequencies over the survey schema.

    Small thresholds leave only level-2 patterns uncovered; large thresholds
    push several values of each attribute below coverage, the two regimes
    the solver comparisons need.  Base frequencies are jittered per seed.
    """
    rng = np.random.default_rng(seed)
    base = [
        np.array([0.62, 0.38]),
        np.array([0.48, 0.22, 0.14, 0.10, 0.06]),
        np.array([0.40, 0.25, 0.19, 0.11, 0.05]),
    ]
    probs = []
    for p in base:
        jitter = p * (1 + 0.15 * rng.standard_normal(p.size))
        jitter = np.clip(jitter, 0.01, None)
        probs.append(jitter / jitter.sum())
    return random_dataset(
        survey_schema(), n, seed=int(rng.integers(0, 2**31)), value_probs=probs
    )


def gaussian_cloud(
    n: int, dim: int, seed: int, mean: float = 0.0, scale: float = 1.0
) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return mean + scale * rng.standard_normal((n, dim))
