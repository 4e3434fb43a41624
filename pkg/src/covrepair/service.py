"""HTTP facade: dataset ingestion, run control, and the evaluation queue.

Single-process deployment over file persistence.  Run state is mutated only
by each run's driver thread; request handlers either read snapshots (status)
or go through the task queue, whose claim/submit transitions are atomic
under its own lock.  Human evaluators interact solely through
/evaluations/next and /evaluations; the queue guarantees a tuple is never
handed to the same evaluator twice and that scoring fires exactly once when
the label budget is reached.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response

from .errors import CovRepairError, RunPaused, SchemaError
from .orchestrator import RepairRun, RunConfig
from .patterns import parse_pattern
from .schema import AttributeSchema, Dataset, TupleRecord, save_schema, save_tuples

DEFAULT_TASK_EXPIRY_S = 600.0


@dataclass
class EvaluationTask:
    task_id: str
    tuple_id: str
    payload_path: str | None
    evaluator: str
    assigned_at: float
    state: str = "pending"  # pending | labeled | expired
    label: bool | None = None


@dataclass
class _TupleSlot:
    tuple_id: str
    payload_path: str | None
    needed: int
    labels: list[tuple[str, bool]] = field(default_factory=list)
    evaluators: set[str] = field(default_factory=set)
    pending: int = 0
    done: threading.Event = field(default_factory=threading.Event)


class EvaluationQueue:
    """Round-robin label collection with per-evaluator dedup and expiry."""

    def __init__(self, expiry_s: float = DEFAULT_TASK_EXPIRY_S):
        self.expiry_s = expiry_s
        self._lock = threading.Lock()
        self._slots: dict[str, _TupleSlot] = {}
        self._order: list[str] = []
        self._rr_cursor = 0
        self._tasks: dict[str, EvaluationTask] = {}

    def enqueue(self, tuple_id: str, payload_path: str | None, needed: int) -> _TupleSlot:
        with self._lock:
            slot = _TupleSlot(tuple_id, payload_path, needed)
            self._slots[tuple_id] = slot
            self._order.append(tuple_id)
            return slot

    def _expire_stale(self, now: float) -> None:
        for task in self._tasks.values():
            if task.state == "pending" and now - task.assigned_at > self.expiry_s:
                task.state = "expired"
                slot = self._slots.get(task.tuple_id)
                if slot is not None:
                    slot.pending -= 1
                    slot.evaluators.discard(task.evaluator)

    def claim(self, evaluator: str) -> EvaluationTask | None:
        now = time.time()
        with self._lock:
            self._expire_stale(now)
            n = len(self._order)
            for step in range(n):
                tid = self._order[(self._rr_cursor + step) % n]
                slot = self._slots[tid]
                if slot.done.is_set():
                    continue
                if evaluator in slot.evaluators:
                    continue
                if len(slot.labels) + slot.pending >= slot.needed:
                    continue
                self._rr_cursor = (self._rr_cursor + step + 1) % n
                task = EvaluationTask(
                    task_id=uuid.uuid4().hex[:16],
                    tuple_id=tid,
                    payload_path=slot.payload_path,
                    evaluator=evaluator,
                    assigned_at=now,
                )
                self._tasks[task.task_id] = task
                slot.pending += 1
                slot.evaluators.add(evaluator)
                return task
            return None

    def submit(self, task_id: str, label: bool) -> EvaluationTask:
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise KeyError(task_id)
            if task.state == "labeled":
                raise ValueError("task already labeled")
            if task.state == "expired":
                raise ValueError("task expired")
            task.state = "labeled"
            task.label = label
            slot = self._slots[task.tuple_id]
            slot.pending -= 1
            slot.labels.append((task.evaluator, label))
            if len(slot.labels) >= slot.needed and not slot.done.is_set():
                slot.done.set()  # scoring fires exactly once, on the driver side
            return task

    def wait(self, slot: _TupleSlot, timeout: float | None = None) -> list[tuple[str, bool]]:
        if not slot.done.wait(timeout):
            raise TimeoutError(f"labels for {slot.tuple_id} did not arrive")
        with self._lock:
            return list(slot.labels[: slot.needed])

    def pending_count(self) -> int:
        with self._lock:
            return sum(
                1 for s in self._slots.values() if not s.done.is_set()
            )


class QueueLabelSource:
    """Bridges a repair run to the evaluation queue (human evaluators)."""

    def __init__(self, queue: EvaluationQueue, timeout: float | None = None):
        self.queue = queue
        self.timeout = timeout

    def collect(self, tuple_id, payload_path, n_labels, rng, keys):
        slot = self.queue.enqueue(tuple_id, payload_path, n_labels)
        return self.queue.wait(slot, self.timeout)


@dataclass
class RunHandle:
    run_id: str
    run: RepairRun
    queue: EvaluationQueue | None
    thread: threading.Thread | None = None
    report: dict | None = None
    error: str | None = None
    pause_requested: bool = False


class ServiceState:
    def __init__(self, root_dir: str | Path, task_expiry_s: float = DEFAULT_TASK_EXPIRY_S):
        self.root = Path(root_dir)
        (self.root / "datasets").mkdir(parents=True, exist_ok=True)
        (self.root / "runs").mkdir(parents=True, exist_ok=True)
        self.task_expiry_s = task_expiry_s
        self.datasets: dict[str, Dataset] = {}
        self.runs: dict[str, RunHandle] = {}

    # -- datasets ---------------------------------------------------------

    def ingest_dataset(self, doc: dict) -> str:
        schema = AttributeSchema.from_dict(doc["schema"])
        dataset = Dataset(schema, (TupleRecord.from_dict(t) for t in doc["tuples"]))
        dataset_id = doc.get("dataset_id") or uuid.uuid4().hex[:12]
        ddir = self.root / "datasets" / dataset_id
        ddir.mkdir(parents=True, exist_ok=True)
        save_schema(schema, ddir / "schema.json")
        save_tuples(dataset.tuples, ddir / "tuples.jsonl")
        self.datasets[dataset_id] = dataset
        return dataset_id

    # -- runs -------------------------------------------------------------

    def start_run(self, dataset_id: str, config: RunConfig) -> str:
        dataset = self.datasets[dataset_id]
        run_id = uuid.uuid4().hex[:12]
        run_dir = self.root / "runs" / run_id
        queue = None
        label_source = None
        if config.evaluator_mode == "human":
            queue = EvaluationQueue(self.task_expiry_s)
            label_source = QueueLabelSource(queue)
        run = RepairRun(dataset, config, run_dir, label_source=label_source, run_id=run_id)
        handle = RunHandle(run_id=run_id, run=run, queue=queue)
        run.suspend_requested = lambda: handle.pause_requested
        self.runs[run_id] = handle
        self._launch(handle)
        return run_id

    def _launch(self, handle: RunHandle) -> None:
        def drive():
            try:
                handle.report = handle.run.execute()
            except RunPaused:
                pass
            except CovRepairError as exc:
                handle.error = f"{type(exc).__name__}: {exc}"

        handle.thread = threading.Thread(target=drive, daemon=True)
        handle.thread.start()

    def pause_run(self, run_id: str) -> None:
        self.runs[run_id].pause_requested = True

    def resume_run(self, run_id: str) -> None:
        handle = self.runs[run_id]
        if handle.thread is not None and handle.thread.is_alive():
            return
        handle.pause_requested = False
        label_source = QueueLabelSource(handle.queue) if handle.queue else None
        handle.run = RepairRun.resume(
            self.root / "runs" / run_id, label_source=label_source
        )
        handle.run.suspend_requested = lambda: handle.pause_requested
        self._launch(handle)

    def run_summary(self, run_id: str) -> dict:
        handle = self.runs[run_id]
        st = handle.run.state
        schema = handle.run.dataset.schema
        index = handle.run.index_all
        remaining = {}
        for p_str, gap in st.gaps.items():
            p = parse_pattern(p_str, schema)
            got = sum(
                n
                for c_str, n in st.accepted_per_combo.items()
                if parse_pattern(c_str, schema).refines(p)
            )
            remaining[p_str] = max(0, gap - got)
        queries = st.queries
        dist_evaluated = queries - st.backend_errors
        dist_accepted = dist_evaluated - st.distribution_rejected
        return {
            "run_id": run_id,
            "phase": st.phase,
            "mup_count": len(st.mups),
            "gaps_remaining": remaining,
            "queries": queries,
            "accepted": st.accepted,
            "distribution_rejected": st.distribution_rejected,
            "quality_rejected": st.quality_rejected,
            "backend_errors": st.backend_errors,
            "distribution_pass_rate": (
                dist_accepted / dist_evaluated if dist_evaluated else None
            ),
            "quality_pass_rate": (st.accepted / dist_accepted) if dist_accepted else None,
            "ledger_total": str(handle.run.ledger.total),
            "plan": dict(st.plan_sigma),
            "accepted_per_combination": dict(st.accepted_per_combo),
            "pending_evaluations": handle.queue.pending_count() if handle.queue else 0,
            "error": handle.error,
        }

    def find_payload(self, tuple_id: str) -> Path | None:
        for handle in self.runs.values():
            if tuple_id in handle.run.dataset:
                rec = handle.run.dataset.get(tuple_id)
                if rec.payload_path:
                    return Path(rec.payload_path)
            # pending candidates: payloads are named after the request id
            for suffix in (".pgm", ".img"):
                candidate = handle.run.run_dir / "payloads" / f"{tuple_id}{suffix}"
                if candidate.exists():
                    return candidate
        for dataset in self.datasets.values():
            if tuple_id in dataset:
                rec = dataset.get(tuple_id)
                if rec.payload_path:
                    return Path(rec.payload_path)
        return None


def create_app(
    root_dir: str | Path, task_expiry_s: float = DEFAULT_TASK_EXPIRY_S
) -> FastAPI:
    state = ServiceState(root_dir, task_expiry_s)
    app = FastAPI(title="covrepair")
    app.state.service = state

    @app.post("/datasets")
    def post_dataset(doc: dict):
        try:
            dataset_id = state.ingest_dataset(doc)
        except (SchemaError, KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"dataset_id": dataset_id}

    @app.post("/runs")
    def post_run(doc: dict):
        dataset_id = doc.get("dataset_id")
        if dataset_id not in state.datasets:
            raise HTTPException(status_code=404, detail=f"no dataset {dataset_id!r}")
        try:
            config = RunConfig.from_dict(doc.get("config", {}))
            config.validate()
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        run_id = state.start_run(dataset_id, config)
        return {"run_id": run_id}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        if run_id not in state.runs:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        return state.run_summary(run_id)

    @app.post("/runs/{run_id}/pause")
    def pause(run_id: str):
        if run_id not in state.runs:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        state.pause_run(run_id)
        return {"status": "pausing"}

    @app.post("/runs/{run_id}/resume")
    def resume(run_id: str):
        if run_id not in state.runs:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        state.resume_run(run_id)
        return {"status": "resumed"}

    @app.get("/evaluations/next")
    def next_task(evaluator: str):
        for handle in state.runs.values():
            if handle.queue is None:
                continue
            task = handle.queue.claim(evaluator)
            if task is not None:
                return {
                    "task_id": task.task_id,
                    "tuple_id": task.tuple_id,
                    "payload_url": f"/tuples/{task.tuple_id}/payload",
                    "assigned_at": task.assigned_at,
                }
        return Response(status_code=204)

    @app.post("/evaluations")
    def submit_evaluation(doc: dict):
        task_id = doc.get("task_id")
        label = doc.get("label")
        if label not in ("realistic", "unrealistic"):
            raise HTTPException(status_code=422, detail="label must be realistic|unrealistic")
        for handle in state.runs.values():
            if handle.queue is None:
                continue
            try:
                task = handle.queue.submit(task_id, label == "realistic")
            except KeyError:
                continue
            except ValueError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            return {"status": "ok", "tuple_id": task.tuple_id}
        raise HTTPException(status_code=404, detail=f"no task {task_id!r}")

    @app.get("/tuples/{tuple_id}/payload")
    def get_payload(tuple_id: str):
        path = state.find_payload(tuple_id)
        if path is None or not path.exists():
            raise HTTPException(status_code=404, detail=f"no payload for {tuple_id!r}")
        return Response(content=path.read_bytes(), media_type="application/octet-stream")

    return app
