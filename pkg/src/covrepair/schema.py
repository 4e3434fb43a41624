"""Attribute schema, tuple records, and dataset ingestion.

A dataset is a catalog of tuples annotated with d categorical attributes of
interest (values stored as domain indices) plus an embedding vector per tuple.
Schemas and tuples are ingested from a JSON schema file and a JSON-lines
tuple file; see `load_schema` / `load_tuples` for the field contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from string import Formatter
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError


@dataclass(frozen=True)
class Attribute:
    name: str
    ordinal: bool
    values: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) < 2:
            raise SchemaError(f"attribute {self.name!r} needs at least two values")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"attribute {self.name!r} has duplicate values")


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attributes of interest plus the prompt template.

    The template must contain exactly one ``{name}`` placeholder per
    attribute; it is filled with value labels when prompts are built.
    """

    attributes: tuple[Attribute, ...]
    prompt_template: str

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        placeholders = {
            fname
            for _, fname, _, _ in Formatter().parse(self.prompt_template)
            if fname is not None
        }
        if placeholders != set(names):
            raise SchemaError(
                f"prompt template placeholders {sorted(placeholders)} do not match "
                f"attribute names {sorted(names)}"
            )

    @property
    def d(self) -> int:
        return len(self.attributes)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(len(a.values) for a in self.attributes)

    def attribute_index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"no attribute named {name!r}")

    def value_label(self, attr: int, value: int) -> str:
        return self.attributes[attr].values[value]

    def combination_count(self) -> int:
        n = 1
        for a in self.attributes:
            n *= len(a.values)
        return n

    def to_dict(self) -> dict:
        return {
            "attributes": [
                {"name": a.name, "ordinal": a.ordinal, "values": list(a.values)}
                for a in self.attributes
            ],
            "prompt_template": self.prompt_template,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AttributeSchema":
        try:
            attrs = tuple(
                Attribute(a["name"], bool(a.get("ordinal", False)), tuple(a["values"]))
                for a in doc["attributes"]
            )
            template = doc["prompt_template"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc
        return cls(attrs, template)


@dataclass
class TupleRecord:
    """One catalog row: attribute values (domain indices) plus embedding."""

    id: str
    values: tuple[int, ...]
    embedding: np.ndarray
    payload_path: str | None = None
    mask_path: str | None = None
    synthetic: bool = False

    def to_dict(self) -> dict:
        doc = {
            "id": self.id,
            "values": list(self.values),
            "embedding": [float(x) for x in self.embedding],
        }
        if self.payload_path is not None:
            doc["payload_path"] = self.payload_path
        if self.mask_path is not None:
            doc["mask_path"] = self.mask_path
        if self.synthetic:
            doc["synthetic"] = True
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TupleRecord":
        return cls(
            id=str(doc["id"]),
            values=tuple(int(v) for v in doc["values"]),
            embedding=np.asarray(doc["embedding"], dtype=float),
            payload_path=doc.get("payload_path"),
            mask_path=doc.get("mask_path"),
            synthetic=bool(doc.get("synthetic", False)),
        )


class Dataset:
    """Schema plus tuple catalog, with append-only augmentation."""

    def __init__(self, schema: AttributeSchema, tuples: Iterable[TupleRecord] = ()):
        self.schema = schema
        self.tuples: list[TupleRecord] = []
        self._by_id: dict[str, int] = {}
        for t in tuples:
            self.append(t)

    def append(self, t: TupleRecord) -> None:
        validate_tuple(self.schema, t)
        if t.id in self._by_id:
            raise SchemaError(f"duplicate tuple id {t.id!r}")
        if self.tuples and len(t.embedding) != self.embedding_dim:
            raise SchemaError(
                f"tuple {t.id!r} embedding has dimension {len(t.embedding)}, "
                f"dataset uses {self.embedding_dim}"
            )
        self._by_id[t.id] = len(self.tuples)
        self.tuples.append(t)

    def __len__(self) -> int:
        return len(self.tuples)

    def __iter__(self):
        return iter(self.tuples)

    def get(self, tuple_id: str) -> TupleRecord:
        return self.tuples[self._by_id[tuple_id]]

    def __contains__(self, tuple_id: str) -> bool:
        return tuple_id in self._by_id

    @property
    def embedding_dim(self) -> int:
        if not self.tuples:
            raise SchemaError("empty dataset has no embedding dimension")
        return len(self.tuples[0].embedding)

    def real_tuples(self) -> list[TupleRecord]:
        return [t for t in self.tuples if not t.synthetic]

    def embeddings(self, real_only: bool = False) -> np.ndarray:
        rows = self.real_tuples() if real_only else self.tuples
        return np.array([t.embedding for t in rows], dtype=float)


def validate_tuple(schema: AttributeSchema, t: TupleRecord) -> None:
    if len(t.values) != schema.d:
        raise SchemaError(
            f"tuple {t.id!r} has {len(t.values)} values, schema has {schema.d} attributes"
        )
    for i, v in enumerate(t.values):
        if not 0 <= v < len(schema.attributes[i].values):
            raise SchemaError(
                f"tuple {t.id!r} value {v} out of range for attribute "
                f"{schema.attributes[i].name!r}"
            )
    emb = np.asarray(t.embedding, dtype=float)
    if emb.ndim != 1 or emb.size == 0:
        raise SchemaError(f"tuple {t.id!r} embedding must be a nonempty vector")


def load_schema(path: str | Path) -> AttributeSchema:
    """Read a schema JSON file: {"attributes": [...], "prompt_template": "..."}."""
    with open(path) as fh:
        return AttributeSchema.from_dict(json.load(fh))


def save_schema(schema: AttributeSchema, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


def load_tuples(path: str | Path) -> list[TupleRecord]:
    """Read a JSON-lines tuple file, one record per line.

    Required fields: id, values, embedding. Optional: payload_path,
    mask_path, synthetic.
    """
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(TupleRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad tuple record: {exc}") from exc
    return records


def save_tuples(tuples: Sequence[TupleRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for t in tuples:
            fh.write(json.dumps(t.to_dict()) + "\n")


def load_dataset(schema_path: str | Path, tuples_path: str | Path) -> Dataset:
    return Dataset(load_schema(schema_path), load_tuples(tuples_path))
