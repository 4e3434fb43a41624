"""End-to-end repair runs: detect, plan, generate, gate, account.

A run walks the pipeline: find the maximal uncovered patterns, take the
minimum level, compute gaps, solve for an augmentation plan, then per
combination generate candidates until its quota is accepted.  Every
candidate passes the distribution gate first (it is free) and the quality
gate second (human labels are the scarce resource); only joint passes enter
the catalog, always as appended synthetic tuples.

State is persisted to the run directory after every candidate verdict, so a
killed run resumes exactly where it stopped: per-candidate randomness is
derived from (seed, candidate index), never from a shared stream, which
makes an interrupted-and-resumed run byte-identical to an uninterrupted
one, ledger included.
"""

from __future__ import annotations

import hashlib
import json
import time
import uuid
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import distribution
from .distribution import KernelSpec, OcsvmModel
from .errors import (
    AuthFailure,
    BackendUnavailable,
    ContentRejected,
    CorruptState,
    EmbeddingUnavailable,
    RunPaused,
    ZeroOverallMetric,
)
from .generator import (
    CostLedger,
    GenerationRequest,
    LiveEndpoints,
    LiveGenerator,
    MockGenerator,
    MockScenario,
    build_prompt,
    generate,
)
from .guides import BanditState, Guide, linucb_update, select_guide
from .patterns import (
    InvertedIndex,
    Pattern,
    coverage_count,
    find_mups,
    min_level_mups,
    parse_pattern,
    pattern_to_string,
)
from .quality import EvaluationBatch, SimulatedEvaluator, quality_test
from .schema import Dataset, TupleRecord, save_schema, save_tuples
from .selection import compute_gaps, greedy_plan, min_gap_plan, random_plan

PHASES = ("planning", "generating", "awaiting_evaluations", "done", "exhausted")


def disparity(metric_overall: float, metric_group: float) -> float:
    """Performance ratio gap of a group against the overall metric,
    clamped at zero when the group does at least as well."""
    if metric_overall <= 0:
        raise ZeroOverallMetric("overall metric must be positive")
    return max(0.0, 1.0 - metric_group / metric_overall)


@dataclass
class RunConfig:
    tau: int
    alpha_quality: float = 0.1
    n_eval: int = 5
    nu: float = 0.3
    kernel: str = "rbf"
    gamma: float | None = None
    strategy: str = "linucb"
    mask_level: str | None = None
    alpha_ucb: float = 0.5
    seed: int = 0
    max_attempts_per_tuple: int = 20
    backend: str = "mock"
    evaluator_mode: str = "simulated"
    unit_cost: str = "0.016"
    iterate_levels: bool = False
    solver: str = "greedy"
    realism_p: float = 0.86
    evaluator_realism: dict | float = 0.8
    reward_joint: bool = True
    ocsvm_tol: float = 1e-6
    mock: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = dict(self.__dict__)
        doc["mock"] = dict(self.mock)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        return cls(**doc)

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.gamma)

    def validate(self) -> None:
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not 0 < self.alpha_quality <= 0.5:
            raise ValueError("alpha_quality must lie in (0, 0.5]")
        if self.n_eval < 2:
            raise ValueError("n_eval must be >= 2")
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")
        if self.strategy not in ("no_guide", "random_guide", "similar_tuple", "linucb"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.backend not in ("mock", "live"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.evaluator_mode not in ("simulated", "human"):
            raise ValueError(f"unknown evaluator mode {self.evaluator_mode!r}")
        if self.solver not in ("greedy", "min_gap", "random"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.max_attempts_per_tuple < 1:
            raise ValueError("max_attempts_per_tuple must be >= 1")
        Decimal(self.unit_cost)  # must parse as exact decimal money


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def candidate_rng(seed: int, candidate_index: int) -> np.random.Generator:
    """Independent stream per candidate; resumption replays it exactly."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(candidate_index,))
    )


@dataclass
class RunState:
    run_id: str
    config: RunConfig
    phase: str = "planning"
    level_iteration: int = 0
    mups: list[str] = field(default_factory=list)
    gaps: dict[str, int] = field(default_factory=dict)
    plan_sigma: dict[str, int] = field(default_factory=dict)
    plan_meta: dict = field(default_factory=dict)
    combo_order: list[str] = field(default_factory=list)
    accepted_per_combo: dict[str, int] = field(default_factory=dict)
    combo_cursor: int = 0
    slot_attempts: int = 0
    exhausted_combos: list[str] = field(default_factory=list)
    candidate_index: int = 0
    queries: int = 0
    accepted: int = 0
    distribution_rejected: int = 0
    quality_rejected: int = 0
    backend_errors: int = 0
    candidate_log: list[dict] = field(default_factory=list)
    bandit: dict | None = None
    levels_resolved: int = 0
    event_seq: int = 0
    target_history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = dict(self.__dict__)
        doc["config"] = self.config.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunState":
        doc = dict(doc)
        doc["config"] = RunConfig.from_dict(doc["config"])
        return cls(**doc)


def persist_state(state: RunState, run_dir: str | Path) -> None:
    """Snapshot with embedded checksum; canonical bytes for round-trips."""
    body = state.to_dict()
    checksum = hashlib.sha256(_canonical(body).encode()).hexdigest()
    payload = _canonical({"checksum": checksum, "state": body}) + "\n"
    path = Path(run_dir) / "state.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(payload)
    tmp.replace(path)


def resume_run(run_dir: str | Path) -> RunState:
    path = Path(run_dir) / "state.json"
    if not path.exists():
        raise CorruptState(f"no state snapshot under {run_dir}")
    try:
        doc = json.loads(path.read_text())
        body = doc["state"]
        checksum = doc["checksum"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise CorruptState(f"unreadable state snapshot: {exc}") from exc
    if hashlib.sha256(_canonical(body).encode()).hexdigest() != checksum:
        raise CorruptState("state snapshot failed its checksum")
    return RunState.from_dict(body)


class _SimulatedLabels:
    """Label source backed by the Bernoulli evaluator; one synthetic
    evaluator identity per label so queue semantics stay comparable."""

    def __init__(self, evaluator: SimulatedEvaluator):
        self.evaluator = evaluator

    def collect(self, tuple_id, payload_path, n_labels, rng, keys) -> list[tuple[str, bool]]:
        labels = self.evaluator.evaluate(n_labels, rng, keys)
        return [(f"sim-{i}", lab) for i, lab in enumerate(labels)]


class RepairRun:
    """Single-writer driver for one run directory."""

    def __init__(
        self,
        dataset: Dataset,
        config: RunConfig,
        run_dir: str | Path,
        backend=None,
        label_source=None,
        run_id: str | None = None,
        _resume_state: RunState | None = None,
    ):
        config.validate()
        self.dataset = dataset
        self.config = config
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "payloads").mkdir(exist_ok=True)

        if _resume_state is not None:
            self.state = _resume_state
        else:
            self.state = RunState(
                run_id=run_id or uuid.uuid4().hex[:12], config=config
            )
            self._snapshot_dataset()
            (self.run_dir / "config.json").write_text(
                _canonical(config.to_dict()) + "\n"
            )
            (self.run_dir / "events.jsonl").write_text("")
            (self.run_dir / "accepted.jsonl").write_text("")
            self._event("run_started", run_id=self.state.run_id)
            persist_state(self.state, self.run_dir)

        self.real_rows = dataset.real_tuples()
        self.index_real = InvertedIndex(dataset.schema, self.real_rows)
        self.index_all = InvertedIndex(dataset.schema, dataset.tuples)
        self.model = self._distribution_model()
        self.ledger = CostLedger(Decimal(config.unit_cost), queries=self.state.queries)
        self.backend = backend or self._default_backend()
        self.label_source = label_source or _SimulatedLabels(
            SimulatedEvaluator(config.evaluator_realism)
        )
        self.bandit = self._load_bandit()
        self.suspend_requested = None  # optional callable checked per candidate
        self._patterns_cache: dict[str, Pattern] = {}

    # -- construction helpers -------------------------------------------------

    def _snapshot_dataset(self) -> None:
        snap = self.run_dir / "dataset"
        snap.mkdir(exist_ok=True)
        save_schema(self.dataset.schema, snap / "schema.json")
        save_tuples(self.dataset.tuples, snap / "tuples.jsonl")

    def _distribution_model(self) -> OcsvmModel:
        model_path = self.run_dir / "ocsvm.json"
        if model_path.exists():
            return distribution.load_model(model_path)
        embeddings = np.array([t.embedding for t in self.dataset.real_tuples()])
        model = distribution.train_ocsvm(
            embeddings,
            nu=self.config.nu,
            kernel=self.config.kernel_spec(),
            tol=self.config.ocsvm_tol,
        )
        distribution.save_model(model, model_path)
        return model

    def _default_backend(self):
        if self.config.backend == "mock":
            scenario = MockScenario.from_dict(self.config.mock)
            mean = np.array([t.embedding for t in self.real_rows]).mean(axis=0)
            return MockGenerator(
                scenario,
                dataset_mean=mean,
                embedding_dim=self.dataset.embedding_dim,
                embedding_by_id={t.id: t.embedding for t in self.real_rows},
                payload_dir=self.run_dir / "payloads",
            )
        return LiveGenerator(
            LiveEndpoints.from_env(),
            embedding_dim=self.dataset.embedding_dim,
            payload_dir=self.run_dir / "payloads",
        )

    def _load_bandit(self) -> BanditState | None:
        if self.config.strategy != "linucb":
            return None
        if self.state.bandit is not None:
            return BanditState.from_dict(self.state.bandit, self.dataset.schema)
        return BanditState(self.dataset.schema, alpha_ucb=self.config.alpha_ucb)

    @classmethod
    def resume(cls, run_dir: str | Path, backend=None, label_source=None) -> "RepairRun":
        run_dir = Path(run_dir)
        state = resume_run(run_dir)
        snap = run_dir / "dataset"
        from .schema import load_dataset

        dataset = load_dataset(snap / "schema.json", snap / "tuples.jsonl")
        for rec in _read_jsonl(run_dir / "accepted.jsonl"):
            if rec["id"] not in dataset:
                dataset.append(TupleRecord.from_dict(rec))
        return cls(
            dataset,
            state.config,
            run_dir,
            backend=backend,
            label_source=label_source,
            _resume_state=state,
        )

    # -- event log -------------------------------------------------------------

    def _event(self, kind: str, **payload) -> None:
        self.state.event_seq += 1
        record = {"seq": self.state.event_seq, "type": kind, "ts": time.time()}
        record.update(payload)
        with open(self.run_dir / "events.jsonl", "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    # -- pattern helpers -------------------------------------------------------

    def _pat(self, text: str) -> Pattern:
        if text not in self._patterns_cache:
            self._patterns_cache[text] = parse_pattern(text, self.dataset.schema)
        return self._patterns_cache[text]

    def _str(self, p: Pattern) -> str:
        return pattern_to_string(p, self.dataset.schema)

    # -- planning --------------------------------------------------------------

    def _plan_level(self) -> bool:
        """Detect MUPs and build the plan for the current minimum level.
        Returns False when nothing is uncovered."""
        mupset = find_mups(self.index_all, self.dataset.schema, self.config.tau)
        if not len(mupset):
            return False
        mstar = min_level_mups(mupset)
        gaps = compute_gaps(mstar, self.index_all, self.config.tau)
        solver = self.config.solver
        if solver == "greedy":
            plan = greedy_plan(mstar, gaps, self.dataset.schema, self.index_all)
        elif solver == "min_gap":
            plan = min_gap_plan(mstar, gaps, self.dataset.schema, self.index_all)
        elif solver == "random":
            plan = random_plan(mstar, gaps, self.dataset.schema, self.config.seed)
        else:
            raise ValueError(f"unknown solver {solver!r} for run planning")
        combos = sorted(plan.sigma, key=Pattern.sort_key)
        self.state.mups = [self._str(p) for p in mstar]
        self.state.gaps = {self._str(p): g for p, g in gaps.entries.items()}
        for p in mstar:
            self.state.target_history.append(
                {
                    "pattern": self._str(p),
                    "gap": gaps.entries[p],
                    "level": p.level,
                    "iteration": self.state.level_iteration,
                }
            )
        self.state.plan_sigma = {self._str(c): plan.sigma[c] for c in combos}
        self.state.plan_meta = {
            "solver": solver,
            "eta": gaps.eta(),
            "clique_exact": plan.clique_exact,
            "level": mstar.min_level(),
        }
        self.state.combo_order = [self._str(c) for c in combos]
        self.state.accepted_per_combo = {self._str(c): 0 for c in combos}
        self.state.combo_cursor = 0
        self.state.slot_attempts = 0
        self._event(
            "plan_ready",
            level=self.state.plan_meta["level"],
            eta=self.state.plan_meta["eta"],
            sigma=self.state.plan_sigma,
        )
        return True

    # -- generation loop -------------------------------------------------------

    def _persist(self) -> None:
        if self.bandit is not None:
            self.state.bandit = self.bandit.to_dict()
        self.state.queries = self.ledger.queries
        persist_state(self.state, self.run_dir)

    def _accept_candidate(self, combo: Pattern, cand) -> TupleRecord:
        rec = TupleRecord(
            id=f"{self.state.run_id}-s{self.state.accepted:05d}",
            values=tuple(combo.cells),
            embedding=np.asarray(cand.embedding, dtype=float),
            payload_path=cand.payload_path,
            synthetic=True,
        )
        self.dataset.append(rec)
        self.index_all.add_tuple(rec)
        with open(self.run_dir / "accepted.jsonl", "a") as fh:
            fh.write(json.dumps(rec.to_dict()) + "\n")
        return rec

    def _evaluate_quality(self, tuple_id, payload_path, rng, keys):
        self.state.phase = "awaiting_evaluations"
        labels = self.label_source.collect(
            tuple_id, payload_path, self.config.n_eval, rng, keys
        )
        for evaluator_id, label in labels:
            self._event(
                "evaluation",
                evaluator=evaluator_id,
                tuple_id=tuple_id,
                label="realistic" if label else "unrealistic",
            )
        self.state.phase = "generating"
        batch = EvaluationBatch(tuple_id, [lab for _, lab in labels])
        return quality_test(batch, self.config.realism_p, self.config.alpha_quality)

    def _run_combination(self, combo_str: str) -> None:
        combo = self._pat(combo_str)
        target = self.state.plan_sigma[combo_str]
        cfg = self.config
        while self.state.accepted_per_combo[combo_str] < target:
            if self.suspend_requested is not None and self.suspend_requested():
                self._persist()
                self._event("paused", candidate=self.state.candidate_index)
                raise RunPaused(self.state.run_id)
            if self.state.slot_attempts >= cfg.max_attempts_per_tuple:
                self.state.exhausted_combos.append(combo_str)
                self._event(
                    "combination_exhausted",
                    combination=combo_str,
                    accepted=self.state.accepted_per_combo[combo_str],
                    target=target,
                )
                self.state.slot_attempts = 0
                self._persist()
                return
            idx = self.state.candidate_index
            rng = candidate_rng(cfg.seed, idx)
            guide = select_guide(
                cfg.strategy,
                combo,
                self.dataset.schema,
                self.real_rows,
                self.index_real,
                rng,
                state=self.bandit,
                mask_level=cfg.mask_level,
            )
            req = GenerationRequest(
                prompt=build_prompt(combo, self.dataset.schema),
                guide=guide,
                target_combination=combo,
                request_id=f"{self.state.run_id}-q{idx:05d}",
            )
            record = {
                "candidate": idx,
                "combination": combo_str,
                "strategy": cfg.strategy,
                "guide_tuple": guide.tuple_id,
                "arm": guide.arm,
            }
            try:
                cand = generate(req, self.backend, self.ledger, rng)
            except BackendUnavailable:
                self._persist()  # nothing billed: the backend was never reached
                self._event("suspended", candidate=idx)
                raise
            except (ContentRejected, EmbeddingUnavailable, AuthFailure) as exc:
                # Billed failures: the request reached the backend.
                self.state.backend_errors += 1
                self.state.candidate_index += 1
                self.state.slot_attempts += 1
                record.update(outcome="backend_error", error=type(exc).__name__)
                self.state.candidate_log.append(record)
                self._reward(guide, combo, 0)
                self._event("candidate", **record)
                self._persist()
                if isinstance(exc, AuthFailure):
                    raise
                continue

            dist_verdict = distribution.distribution_test(self.model, cand.embedding)
            record["distribution"] = {
                "accept": dist_verdict.accept,
                "score": dist_verdict.score,
            }
            quality_verdict = None
            # The quality gate spends evaluator budget, so it only runs for
            # candidates that already passed the free distribution gate; the
            # quality-only reward ablation evaluates everything instead.
            if dist_verdict.accept or not cfg.reward_joint:
                keys = [
                    f"{cfg.strategy}:arm{guide.arm}" if guide.arm is not None else None,
                    f"{cfg.strategy}:{cfg.mask_level}" if cfg.mask_level else None,
                    cfg.strategy,
                    "default",
                ]
                keys = [k for k in keys if k]
                quality_verdict = self._evaluate_quality(
                    req.request_id, cand.payload_path, rng, keys
                )
                record["quality"] = {
                    "accept": quality_verdict.accept,
                    "t_stat": _json_float(quality_verdict.t_stat),
                    "p_value": quality_verdict.p_value,
                }
            accepted = dist_verdict.accept and quality_verdict is not None and quality_verdict.accept
            if not dist_verdict.accept:
                self.state.distribution_rejected += 1
            elif not accepted:
                self.state.quality_rejected += 1

            self.state.candidate_index += 1
            if accepted:
                rec = self._accept_candidate(combo, cand)
                record.update(outcome="accepted", tuple_id=rec.id)
                self.state.accepted += 1
                self.state.accepted_per_combo[combo_str] += 1
                self.state.slot_attempts = 0
            else:
                record["outcome"] = (
                    "distribution_rejected"
                    if not dist_verdict.accept
                    else "quality_rejected"
                )
                self.state.slot_attempts += 1
            if cfg.reward_joint:
                reward = 1 if accepted else 0
            else:
                reward = 1 if (quality_verdict is not None and quality_verdict.accept) else 0
            self._reward(guide, combo, reward)
            self.state.candidate_log.append(record)
            self._event("candidate", **record)
            self._persist()
        self.state.slot_attempts = 0

    def _reward(self, guide: Guide, combo: Pattern, reward: int) -> None:
        if self.bandit is None or guide.arm is None:
            return
        linucb_update(self.bandit, guide.arm, combo, reward)

    # -- driving ---------------------------------------------------------------

    def execute(self) -> dict:
        """Run to completion (or exhaustion); returns the report document."""
        cfg = self.config
        if self.state.phase == "planning":
            has_work = self._plan_level()
            if not has_work:
                self.state.phase = "done"
                self._persist()
                return self._finish()
            self.state.phase = "generating"
            self._persist()
        while self.state.phase in ("generating", "awaiting_evaluations"):
            while self.state.combo_cursor < len(self.state.combo_order):
                combo_str = self.state.combo_order[self.state.combo_cursor]
                self._run_combination(combo_str)
                self.state.combo_cursor += 1
                self._persist()
            self.state.levels_resolved += 1
            if self.state.exhausted_combos:
                self.state.phase = "exhausted"
                break
            if cfg.iterate_levels:
                self.state.level_iteration += 1
                self._event("level_done", iteration=self.state.level_iteration)
                if self._plan_level():
                    continue
            self.state.phase = "done"
        self._persist()
        return self._finish()

    def _finish(self) -> dict:
        report = self.build_report()
        (self.run_dir / "report.json").write_text(_canonical(report) + "\n")
        self._event("run_done", phase=self.state.phase)
        return report

    def build_report(self) -> dict:
        st = self.state
        dist_evaluated = st.queries - st.backend_errors
        dist_accepted = dist_evaluated - st.distribution_rejected
        targeted = []
        for entry in st.target_history:
            p = self._pat(entry["pattern"])
            targeted.append(
                {
                    **entry,
                    "coverage_now": coverage_count(self.index_all, p),
                }
            )
        report = {
            "run_id": st.run_id,
            "phase": st.phase,
            "tau": self.config.tau,
            "strategy": self.config.strategy,
            "solver": st.plan_meta.get("solver"),
            "seed": self.config.seed,
            "eta": st.plan_meta.get("eta"),
            "clique_exact": st.plan_meta.get("clique_exact", True),
            "levels_resolved": st.levels_resolved,
            "queries": st.queries,
            "accepted": st.accepted,
            "distribution_rejected": st.distribution_rejected,
            "quality_rejected": st.quality_rejected,
            "backend_errors": st.backend_errors,
            "distribution_pass_rate": (
                dist_accepted / dist_evaluated if dist_evaluated else None
            ),
            "quality_pass_rate": (
                (st.accepted / dist_accepted) if dist_accepted else None
            ),
            "joint_pass_rate": (st.accepted / st.queries) if st.queries else None,
            "unit_cost": str(self.ledger.unit_cost),
            "cost_total": str(self.ledger.total),
            "plan": st.plan_sigma,
            "targeted": targeted,
            "exhausted_combinations": st.exhausted_combos,
        }
        return report


def _json_float(x: float):
    if x == float("inf"):
        return "inf"
    if x == float("-inf"):
        return "-inf"
    return x


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def repair_run(
    dataset: Dataset,
    config: RunConfig,
    run_dir: str | Path,
    backend=None,
    label_source=None,
) -> dict:
    """Convenience wrapper: construct a driver and run it to completion."""
    run = RepairRun(dataset, config, run_dir, backend=backend, label_source=label_source)
    return run.execute()


def attach_disparity(report: dict, overall: float, groups: dict[str, float]) -> dict:
    """Extend a report with performance-ratio gaps for externally supplied
    group metrics (the downstream model itself is out of scope here)."""
    report = dict(report)
    report["disparity"] = {
        name: disparity(overall, value) for name, value in sorted(groups.items())
    }
    report["disparity_overall_metric"] = overall
    return report
