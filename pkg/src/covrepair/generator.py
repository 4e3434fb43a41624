"""Generation backends and the per-query cost ledger.

Every generation request is billed at a fixed unit cost the moment it
reaches a backend, successful or not; money is decimal arithmetic
throughout.  Two backends share one interface: a mock simulator whose
embedding placement mirrors how guided and unguided generations behave
against the distribution gate, and a live HTTP client speaking to an
image-generation endpoint plus an embedding endpoint.
"""

from __future__ import annotations

import base64
import random
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np

from .errors import (
    AuthFailure,
    BackendUnavailable,
    ContentRejected,
    DimensionMismatch,
    EmbeddingUnavailable,
    MissingPlaceholderValue,
)
from .guides import Guide
from .patterns import Pattern
from .schema import AttributeSchema

GENERATOR_URL_ENV = "CHAMELEON_GENERATOR_URL"
EMBEDDER_URL_ENV = "CHAMELEON_EMBEDDER_URL"
API_KEY_ENV = "CHAMELEON_GENERATOR_API_KEY"


def build_prompt(c: Pattern, schema: AttributeSchema) -> str:
    """Fill the schema's template with the combination's value labels."""
    if not c.is_combination():
        raise ValueError("prompts are built from full combinations only")
    values = {
        schema.attributes[i].name: schema.value_label(i, v)
        for i, v in enumerate(c.cells)
    }
    try:
        return schema.prompt_template.format(**values)
    except (KeyError, IndexError) as exc:
        raise MissingPlaceholderValue(str(exc)) from exc


@dataclass
class GenerationRequest:
    prompt: str
    guide: Guide
    target_combination: Pattern
    request_id: str

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be nonempty")


@dataclass
class GeneratedCandidate:
    request_id: str
    embedding: np.ndarray
    payload_path: str | None
    provenance: str  # "mock" | "live"
    latency_ms: float


@dataclass
class CostLedger:
    """queries * unit_cost, exactly. unit_cost is a Decimal."""

    unit_cost: Decimal
    queries: int = 0

    def __post_init__(self):
        if not isinstance(self.unit_cost, Decimal):
            self.unit_cost = Decimal(str(self.unit_cost))

    def charge(self) -> None:
        self.queries += 1

    @property
    def total(self) -> Decimal:
        return self.queries * self.unit_cost


def ledger_total(ledger: CostLedger) -> Decimal:
    return ledger.total


@dataclass
class MockScenario:
    """Placement parameters for simulated generations.

    Guided candidates stay close to their guide embedding; unguided ones are
    centered on the catalog mean pushed by a fixed offset with wider noise,
    so they fail the distribution gate more often.  All parameters are data
    so experiment shapes live in run configuration.
    """

    sigma_guided: float = 0.05
    sigma_unguided: float = 1.0
    unguided_offset: float = 2.0
    write_payloads: bool = False

    def to_dict(self) -> dict:
        return {
            "sigma_guided": self.sigma_guided,
            "sigma_unguided": self.sigma_unguided,
            "unguided_offset": self.unguided_offset,
            "write_payloads": self.write_payloads,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MockScenario":
        return cls(
            sigma_guided=float(doc.get("sigma_guided", 0.05)),
            sigma_unguided=float(doc.get("sigma_unguided", 1.0)),
            unguided_offset=float(doc.get("unguided_offset", 2.0)),
            write_payloads=bool(doc.get("write_payloads", False)),
        )


class MockGenerator:
    """Deterministic simulator: same rng stream, same candidates."""

    provenance = "mock"

    def __init__(
        self,
        scenario: MockScenario,
        dataset_mean: np.ndarray,
        embedding_dim: int,
        embedding_by_id=None,
        payload_dir: str | Path | None = None,
    ):
        self.scenario = scenario
        self.dataset_mean = np.asarray(dataset_mean, dtype=float)
        self.embedding_dim = embedding_dim
        self._embedding_by_id = embedding_by_id or {}
        self.payload_dir = Path(payload_dir) if payload_dir else None

    def _offset_vector(self) -> np.ndarray:
        v = np.ones(self.embedding_dim) / np.sqrt(self.embedding_dim)
        return self.scenario.unguided_offset * v

    def generate(
        self, req: GenerationRequest, ledger: CostLedger, rng: np.random.Generator
    ) -> GeneratedCandidate:
        ledger.charge()
        if req.guide.tuple_id is not None:
            anchor = np.asarray(self._embedding_by_id[req.guide.tuple_id], dtype=float)
            emb = anchor + self.scenario.sigma_guided * rng.standard_normal(
                self.embedding_dim
            )
        else:
            emb = (
                self.dataset_mean
                + self._offset_vector()
                + self.scenario.sigma_unguided * rng.standard_normal(self.embedding_dim)
            )
        payload_path = None
        if self.scenario.write_payloads and self.payload_dir is not None:
            payload_path = str(self.payload_dir / f"{req.request_id}.pgm")
            _write_placeholder_payload(payload_path, req.request_id)
        return GeneratedCandidate(
            request_id=req.request_id,
            embedding=emb,
            payload_path=payload_path,
            provenance=self.provenance,
            latency_ms=0.0,
        )


def _write_placeholder_payload(path: str, request_id: str) -> None:
    """A tiny 16x16 PGM whose bytes depend only on the request id."""
    seed = sum(request_id.encode())
    raster = bytes(((seed + 7 * i) % 256 for i in range(256)))
    header = b"P5\n16 16\n255\n"
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(header + raster)


@dataclass
class LiveEndpoints:
    generator_url: str
    embedder_url: str
    api_key: str

    @classmethod
    def from_env(cls) -> "LiveEndpoints":
        import os

        missing = [
            name
            for name in (GENERATOR_URL_ENV, EMBEDDER_URL_ENV, API_KEY_ENV)
            if not os.environ.get(name)
        ]
        if missing:
            raise BackendUnavailable(f"missing environment variables: {missing}")
        return cls(
            os.environ[GENERATOR_URL_ENV],
            os.environ[EMBEDDER_URL_ENV],
            os.environ[API_KEY_ENV],
        )


class LiveGenerator:
    """Generic image-edit HTTP client.

    The generation and embedding services are independent dependencies with
    independent retry policies (3 attempts, exponential backoff with
    jitter).  A generation that reached the backend is billed even when it
    fails afterwards; a candidate whose embedding cannot be obtained is
    still billed and surfaces as EmbeddingUnavailable.
    """

    provenance = "live"
    max_attempts = 3
    backoff_base = 0.5

    def __init__(
        self,
        endpoints: LiveEndpoints,
        embedding_dim: int,
        payload_dir: str | Path,
        client=None,
        sleep=time.sleep,
    ):
        import httpx

        self.endpoints = endpoints
        self.embedding_dim = embedding_dim
        self.payload_dir = Path(payload_dir)
        self.client = client or httpx.Client(timeout=60.0)
        self._sleep = sleep

    def _post_with_retry(self, url: str, body: dict, service: str, on_response=None):
        import httpx

        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                resp = self.client.post(
                    url,
                    json=body,
                    headers={"Authorization": f"Bearer {self.endpoints.api_key}"},
                )
            except httpx.HTTPError as exc:
                last_error = exc
                self._sleep(self.backoff_base * 2**attempt * (1 + random.random()))
                continue
            if on_response is not None:
                on_response()  # the request reached the service; billing point
            if resp.status_code in (401, 403):
                raise AuthFailure(f"{service} rejected the API key")
            if resp.status_code >= 500:
                last_error = BackendUnavailable(f"{service} returned {resp.status_code}")
                self._sleep(self.backoff_base * 2**attempt * (1 + random.random()))
                continue
            return resp
        raise BackendUnavailable(f"{service} unreachable: {last_error}")

    def generate(
        self, req: GenerationRequest, ledger: CostLedger, rng: np.random.Generator
    ) -> GeneratedCandidate:
        started = time.monotonic()
        charged = False

        def charge_once():
            nonlocal charged
            if not charged:
                ledger.charge()
                charged = True

        body = {"prompt": req.prompt}
        if req.guide.tuple_id is not None:
            body["guide_tuple_id"] = req.guide.tuple_id
            if req.guide.mask is not None:
                from .masks import write_pgm_mask

                mask_path = self.payload_dir / f"{req.request_id}.mask.pgm"
                self.payload_dir.mkdir(parents=True, exist_ok=True)
                write_pgm_mask(req.guide.mask, mask_path)
                body["mask_b64"] = base64.b64encode(mask_path.read_bytes()).decode()
        resp = self._post_with_retry(
            self.endpoints.generator_url, body, "generator", on_response=charge_once
        )
        if resp.status_code >= 400:
            raise ContentRejected(f"generator refused: {resp.status_code} {resp.text[:200]}")
        doc = resp.json()
        if "image_b64" not in doc:
            raise ContentRejected("generator response carries no image")
        payload = base64.b64decode(doc["image_b64"])
        self.payload_dir.mkdir(parents=True, exist_ok=True)
        payload_path = self.payload_dir / f"{req.request_id}.img"
        payload_path.write_bytes(payload)

        try:
            emb_resp = self._post_with_retry(
                self.endpoints.embedder_url, {"image_b64": doc["image_b64"]}, "embedder"
            )
        except BackendUnavailable as exc:
            raise EmbeddingUnavailable(str(exc)) from exc
        if emb_resp.status_code >= 400:
            raise EmbeddingUnavailable(f"embedder refused: {emb_resp.status_code}")
        embedding = np.asarray(emb_resp.json().get("embedding", []), dtype=float)
        if embedding.shape != (self.embedding_dim,):
            raise EmbeddingUnavailable(
                f"embedding has shape {embedding.shape}, dataset uses ({self.embedding_dim},)"
            )
        return GeneratedCandidate(
            request_id=req.request_id,
            embedding=embedding,
            payload_path=str(payload_path),
            provenance=self.provenance,
            latency_ms=(time.monotonic() - started) * 1000.0,
        )


def generate(req: GenerationRequest, backend, ledger: CostLedger, rng) -> GeneratedCandidate:
    """Dispatch one request; enforces the dataset embedding dimension."""
    candidate = backend.generate(req, ledger, rng)
    if candidate.embedding.shape != (backend.embedding_dim,):
        raise DimensionMismatch(
            f"candidate embedding {candidate.embedding.shape} does not match "
            f"dataset dimension {backend.embedding_dim}"
        )
    return candidate
