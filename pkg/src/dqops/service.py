"""HTTP facade for interactive sessions and batch jobs.

The service adds no algorithmic logic: every response is the result of the
same library calls the CLI makes, so the two entry points agree byte for
byte. Sessions (cleaning, labeling) are long-lived human loops; they are
snapshotted to JSON under the data directory after every mutation and are
rebuilt lazily after a restart. Mutations carry the expected version of the
session (optimistic concurrency): a stale version gets 409 and exactly one
of any set of racing writers succeeds.

Artifacts are content-addressed: PUT /artifacts hashes the body, stores it
under the hash, and the hash is the reference other payloads use.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel

from dqops.ci import (
    CiLedger,
    RefreshRequiredError,
    ReusePolicy,
    commit_result_dict,
    evaluate_commit,
    parse_condition,
    score_variables,
)
from dqops.cleaning import (
    CleaningSession,
    DEFAULT_WORLD_CAP,
    IncompleteDataset,
    WorldCapError,
    load_incomplete_dataset,
)
from dqops.core import DataError, LabelSpace, load_dataset, load_feature_table
from dqops.feasibility import EmbeddingSpec, full_report_dict
from dqops.knn import KnnConfig
from dqops.picker import ModelPicker, StreamItem, default_eta, load_stream

DEFAULT_JOB_TTL = 86400.0


class Store:
    """Content-addressed artifacts plus JSON snapshots of sessions and jobs."""

    def __init__(self, root: Path):
        self.root = root
        for sub in ("artifacts", "sessions", "jobs"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def put_artifact(self, body: bytes) -> str:
        ref = hashlib.sha256(body).hexdigest()
        path = self.root / "artifacts" / ref
        if not path.exists():
            path.write_bytes(body)
        return ref

    def artifact_path(self, ref: str) -> Path:
        if not ref or "/" in ref or "\\" in ref or "." in ref:
            raise HTTPException(400, f"bad artifact reference {ref!r}")
        path = self.root / "artifacts" / ref
        if not path.exists():
            raise HTTPException(404, f"unknown artifact {ref!r}")
        return path

    def save_doc(self, kind: str, doc_id: str, doc: dict) -> None:
        path = self.root / kind / f"{doc_id}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc))
        tmp.replace(path)

    def load_doc(self, kind: str, doc_id: str) -> dict | None:
        path = self.root / kind / f"{doc_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())


class LabelingLoop:
    """Stream cursor plus picker state for one labeling session."""

    def __init__(
        self,
        stream: list[StreamItem],
        picker: ModelPicker,
        position: int = 0,
        budget: int = 0,
        class_names: list[str] | None = None,
    ):
        self.stream = stream
        self.picker = picker
        self.position = position
        self.budget = budget
        self.class_names = class_names

    def advance_to_query(self) -> StreamItem | None:
        """Return the pending queried item, consuming skips along the way."""
        pending = self.picker.pending_item_id()
        if pending is not None:
            index = int(pending)
            return self.stream[index]
        while self.position < len(self.stream):
            item = self.stream[self.position]
            internal = StreamItem(str(self.position), item.predictions)
            self.position += 1
            if self.picker.observe(internal) == "query":
                return item
        return None

    def submit_label(self, label: int) -> None:
        pending = self.picker.pending_item_id()
        internal = StreamItem(pending, self.stream[int(pending)].predictions)
        self.picker.feed_label(internal, label)

    def class_count(self) -> int:
        if self.class_names:
            return len(self.class_names)
        return 1 + max(max(item.predictions) for item in self.stream)

    def to_json_dict(self) -> dict:
        return {
            "stream": [[item.item_id, *item.predictions] for item in self.stream],
            "position": self.position,
            "budget": self.budget,
            "class_names": self.class_names,
            "picker": self.picker.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LabelingLoop":
        stream = [StreamItem(str(row[0]), tuple(int(p) for p in row[1:])) for row in doc["stream"]]
        return cls(
            stream,
            ModelPicker.from_json_dict(doc["picker"]),
            int(doc["position"]),
            int(doc.get("budget", 0)),
            doc.get("class_names"),
        )


class CleaningSessionRequest(BaseModel):
    dataset: str
    validation: str
    candidates: str | None = None
    knn: dict | None = None
    world_cap: int = DEFAULT_WORLD_CAP


class RepairRequest(BaseModel):
    cell: tuple[int, int]
    value: float
    expected_version: int


class LabelingSessionRequest(BaseModel):
    stream: str
    budget: int
    m: int | None = None
    eta: float | None = None
    seed: int = 0
    query_floor: float = 0.05
    class_names: list[str] | None = None


class LabelRequest(BaseModel):
    item_id: str
    label: int
    expected_version: int


class FeasibilityJobRequest(BaseModel):
    train: str
    validation: str
    embeddings: list[dict] = [{"name": "identity"}]
    noise_sweep: list[float] | None = None
    seed: int = 0
    normalization: str = "minmax"


class CiJobRequest(BaseModel):
    ledger: dict
    old: str
    new: str
    test: str
    condition: str


def create_app(data_dir=None) -> FastAPI:
    root = Path(data_dir or os.environ.get("DQOPS_DATA_DIR") or "dqops_data")
    store = Store(root)
    app = FastAPI(title="dqops", version="0.1.0")
    app.state.store = store
    app.state.cleaning = {}
    app.state.labeling = {}
    app.state.versions = {}
    app.state.jobs = {}
    job_ttl = float(os.environ.get("DQOPS_JOB_TTL", DEFAULT_JOB_TTL))

    ui_dir = os.environ.get("DQOPS_UI_DIR")
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.exception_handler(DataError)
    async def data_error_handler(_request, exc: DataError):
        from fastapi.responses import JSONResponse

        if isinstance(exc, WorldCapError):
            return JSONResponse(
                status_code=413,
                content={"detail": str(exc), "cap": exc.cap, "world_count": exc.world_count},
            )
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    # ------------------------------------------------------------------ artifacts

    @app.put("/artifacts")
    async def put_artifact(request: Request):
        body = await request.body()
        if not body:
            raise HTTPException(400, "empty artifact body")
        return {"ref": store.put_artifact(body)}

    @app.get("/artifacts/{ref}")
    def get_artifact(ref: str):
        return Response(store.artifact_path(ref).read_bytes(), media_type="application/octet-stream")

    # ------------------------------------------------------------------ cleaning

    def cleaning_snapshot(sid: str) -> dict:
        session = app.state.cleaning[sid]
        return {
            "id": sid,
            "kind": "cleaning",
            "version": app.state.versions[sid],
            "data": {
                "features": [
                    [None if math.isnan(v) else float(v) for v in row]
                    for row in session.data.features
                ],
                "labels": [int(v) for v in session.data.labels],
                "classes": list(session.data.classes.names),
                "candidates": {
                    f"{r},{c}": list(v) for (r, c), v in sorted(session.data.candidates.items())
                },
            },
            "validation": [[float(v) for v in row] for row in session.validation],
            "knn": session.cfg.to_json_dict(),
            "world_cap": session.world_cap,
            "log": [[list(cell), value] for cell, value in session.cleaned_log],
            "entropy_trace": list(session.entropy_trace),
        }

    def restore_cleaning(doc: dict) -> CleaningSession:
        features = np.array(
            [[math.nan if v is None else float(v) for v in row] for row in doc["data"]["features"]]
        )
        data = IncompleteDataset(
            features,
            np.array(doc["data"]["labels"], dtype=np.int64),
            LabelSpace(tuple(doc["data"]["classes"])),
            {
                (int(k.split(",")[0]), int(k.split(",")[1])): tuple(v)
                for k, v in doc["data"]["candidates"].items()
            },
        )
        session = CleaningSession(
            data,
            np.array(doc["validation"]),
            KnnConfig.from_json_dict(doc["knn"]),
            int(doc["world_cap"]),
        )
        session.cleaned_log = [((int(c[0]), int(c[1])), float(v)) for c, v in doc["log"]]
        session.entropy_trace = [float(v) for v in doc["entropy_trace"]]
        return session

    def get_cleaning(sid: str) -> CleaningSession:
        if sid not in app.state.cleaning:
            doc = store.load_doc("sessions", sid)
            if doc is None or doc.get("kind") != "cleaning":
                raise HTTPException(404, f"unknown cleaning session {sid!r}")
            app.state.cleaning[sid] = restore_cleaning(doc)
            app.state.versions[sid] = int(doc["version"])
        return app.state.cleaning[sid]

    def cleaning_metrics(sid: str) -> dict:
        session = app.state.cleaning[sid]
        return {
            "session_id": sid,
            "version": app.state.versions[sid],
            "world_count": session.world_count(),
            "entropy": session.prediction_entropy(),
            "certain_count": session.certain_count(),
            "validation_count": session.n_validation,
            "dirty_count": len(session.dirty_cells()),
            "entropy_trace": list(session.entropy_trace),
        }

    @app.post("/sessions/cleaning", status_code=201)
    def create_cleaning_session(body: CleaningSessionRequest):
        data = load_incomplete_dataset(
            store.artifact_path(body.dataset),
            store.artifact_path(body.candidates) if body.candidates else None,
        )
        validation = load_feature_table(store.artifact_path(body.validation))
        session = CleaningSession(
            data, validation, KnnConfig.from_json_dict(body.knn), int(body.world_cap)
        )
        sid = uuid.uuid4().hex[:12]
        app.state.cleaning[sid] = session
        app.state.versions[sid] = 0
        store.save_doc("sessions", sid, cleaning_snapshot(sid))
        return cleaning_metrics(sid)

    @app.get("/sessions/cleaning/{sid}")
    def get_cleaning_session(sid: str):
        with store.lock(sid):
            get_cleaning(sid)
            return cleaning_metrics(sid)

    def record_preview(session: CleaningSession, row: int) -> list[float | None]:
        """Feature row with repaired singletons filled and open cells as None."""
        preview: list[float | None] = []
        for col in range(session.data.dimension):
            value = session.data.features[row, col]
            if not math.isnan(value):
                preview.append(float(value))
                continue
            candidates = session.data.candidates.get((row, col), ())
            preview.append(float(candidates[0]) if len(candidates) == 1 else None)
        return preview

    @app.get("/sessions/cleaning/{sid}/suggestion")
    def get_suggestion(sid: str):
        with store.lock(sid):
            session = get_cleaning(sid)
            if session.is_all_clean() or session.is_all_certain():
                return Response(status_code=204)
            cell = session.suggest_next()
            return {
                "cell": list(cell),
                "candidates": list(session.data.candidates[cell]),
                "conditional_entropy": session.conditional_entropy(cell),
                "version": app.state.versions[sid],
                "record": record_preview(session, cell[0]),
                "record_label": session.data.classes.names[session.data.labels[cell[0]]],
            }

    @app.post("/sessions/cleaning/{sid}/repairs")
    def post_repair(sid: str, body: RepairRequest):
        with store.lock(sid):
            session = get_cleaning(sid)
            if body.expected_version != app.state.versions[sid]:
                raise HTTPException(409, "version conflict: session changed elsewhere")
            cell = (int(body.cell[0]), int(body.cell[1]))
            if cell not in session.data.candidates:
                raise HTTPException(404, f"unknown cell {cell}")
            if not math.isfinite(body.value):
                raise HTTPException(400, "repair value must be finite")
            session.apply_repair(cell, body.value)
            app.state.versions[sid] += 1
            store.save_doc("sessions", sid, cleaning_snapshot(sid))
            metrics = cleaning_metrics(sid)
            metrics["cell"] = list(cell)
            return metrics

    # ------------------------------------------------------------------ labeling

    def labeling_snapshot(sid: str) -> dict:
        loop = app.state.labeling[sid]
        doc = loop.to_json_dict()
        doc.update({"id": sid, "kind": "labeling", "version": app.state.versions[sid]})
        return doc

    def get_labeling(sid: str) -> LabelingLoop:
        if sid not in app.state.labeling:
            doc = store.load_doc("sessions", sid)
            if doc is None or doc.get("kind") != "labeling":
                raise HTTPException(404, f"unknown labeling session {sid!r}")
            app.state.labeling[sid] = LabelingLoop.from_json_dict(doc)
            app.state.versions[sid] = int(doc["version"])
        return app.state.labeling[sid]

    def labeling_metrics(sid: str) -> dict:
        loop = app.state.labeling[sid]
        picker = loop.picker
        pending = picker.pending_item_id()
        return {
            "session_id": sid,
            "version": app.state.versions[sid],
            "m": picker.model_count,
            "pick": picker.current_pick(),
            "weights": [float(w) for w in picker.weights],
            "budget": loop.budget,
            "budget_remaining": picker.budget_remaining,
            "class_count": loop.class_count(),
            "class_names": loop.class_names,
            "stream_length": len(loop.stream),
            "position": loop.position,
            "queries": sum(1 for r in picker.query_log if r.queried),
            "pending_item": None if pending is None else loop.stream[int(pending)].item_id,
        }

    @app.post("/sessions/labeling", status_code=201)
    def create_labeling_session(body: LabelingSessionRequest):
        stream = load_stream(store.artifact_path(body.stream))
        m = len(stream[0].predictions)
        if body.m is not None and body.m != m:
            raise HTTPException(400, f"stream has {m} models, request says {body.m}")
        if any(len(item.predictions) != m for item in stream):
            raise HTTPException(400, "ragged stream: rows disagree on model count")
        eta = body.eta if body.eta is not None else default_eta(m, min(body.budget, len(stream)))
        picker = ModelPicker(m, body.budget, eta, body.seed, body.query_floor)
        sid = uuid.uuid4().hex[:12]
        app.state.labeling[sid] = LabelingLoop(
            stream, picker, budget=body.budget, class_names=body.class_names
        )
        app.state.versions[sid] = 0
        store.save_doc("sessions", sid, labeling_snapshot(sid))
        return labeling_metrics(sid)

    @app.get("/sessions/labeling/{sid}")
    def get_labeling_session(sid: str):
        with store.lock(sid):
            get_labeling(sid)
            return labeling_metrics(sid)

    @app.get("/sessions/labeling/{sid}/next")
    def next_query(sid: str):
        with store.lock(sid):
            loop = get_labeling(sid)
            had_pending = loop.picker.has_pending()
            item = loop.advance_to_query()
            if item is None:
                store.save_doc("sessions", sid, labeling_snapshot(sid))
                return Response(status_code=204)
            if not had_pending:
                app.state.versions[sid] += 1
            store.save_doc("sessions", sid, labeling_snapshot(sid))
            return {
                "item_id": item.item_id,
                "predictions": list(item.predictions),
                "version": app.state.versions[sid],
                "budget_remaining": loop.picker.budget_remaining,
            }

    @app.post("/sessions/labeling/{sid}/labels")
    def post_label(sid: str, body: LabelRequest):
        with store.lock(sid):
            loop = get_labeling(sid)
            if body.expected_version != app.state.versions[sid]:
                raise HTTPException(409, "version conflict: session changed elsewhere")
            known = {item.item_id for item in loop.stream}
            if body.item_id not in known:
                raise HTTPException(404, f"unknown item {body.item_id!r}")
            pending = loop.picker.pending_item_id()
            pending_id = None if pending is None else loop.stream[int(pending)].item_id
            if pending_id != body.item_id:
                raise HTTPException(409, f"item {body.item_id!r} was not queried")
            if not 0 <= body.label:
                raise HTTPException(400, "label must be a nonnegative index")
            loop.submit_label(body.label)
            app.state.versions[sid] += 1
            store.save_doc("sessions", sid, labeling_snapshot(sid))
            return labeling_metrics(sid)

    # ------------------------------------------------------------------ jobs

    def run_job(job_id: str, work) -> None:
        def target():
            doc = app.state.jobs[job_id]
            try:
                doc["result"] = work()
                doc["status"] = "done"
            except Exception as exc:  # keep the job record even on bugs
                doc["status"] = "error"
                doc["error"] = str(exc)
            doc["finished_at"] = time.time()
            store.save_doc("jobs", job_id, doc)

        thread = threading.Thread(target=target, daemon=True)
        thread.start()

    def new_job(work) -> dict:
        job_id = uuid.uuid4().hex[:12]
        doc = {
            "job_id": job_id,
            "status": "pending",
            "result": None,
            "error": None,
            "created_at": time.time(),
            "finished_at": None,
        }
        app.state.jobs[job_id] = doc
        store.save_doc("jobs", job_id, doc)
        run_job(job_id, work)
        return {"job_id": job_id}

    @app.post("/jobs/feasibility", status_code=202)
    def post_feasibility_job(body: FeasibilityJobRequest):
        train_path = store.artifact_path(body.train)
        validation_path = store.artifact_path(body.validation)
        specs = []
        for entry in body.embeddings:
            name = entry.get("name", "")
            if name == "identity":
                specs.append(EmbeddingSpec.identity())
            else:
                specs.append(
                    EmbeddingSpec(
                        name,
                        str(store.artifact_path(entry["train"])),
                        str(store.artifact_path(entry["validation"])),
                    )
                )
        cfg = KnnConfig(normalization=body.normalization)
        rhos = body.noise_sweep
        seed = body.seed

        def work():
            train = load_dataset(train_path)
            validation = load_dataset(validation_path, classes=list(train.classes.names))
            return full_report_dict(train, validation, specs, cfg, rhos, seed)

        return new_job(work)

    @app.post("/jobs/ci", status_code=202)
    def post_ci_job(body: CiJobRequest):
        ledger = CiLedger.from_json_dict(body.ledger)
        condition = parse_condition(body.condition)
        old_path = store.artifact_path(body.old)
        new_path = store.artifact_path(body.new)
        test_path = store.artifact_path(body.test)

        def work():
            test = load_dataset(test_path)
            old_preds = _prediction_column(old_path)
            new_preds = _prediction_column(new_path)
            try:
                decision = evaluate_commit(ledger, old_preds, new_preds, test, condition)
            except RefreshRequiredError:
                return commit_result_dict("refresh_required", ledger)
            values = score_variables(old_preds, new_preds, test.labels)
            return commit_result_dict(decision, ledger, condition, values)

        return new_job(work)

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        doc = app.state.jobs.get(job_id) or store.load_doc("jobs", job_id)
        if doc is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        finished = doc.get("finished_at")
        if finished is not None and time.time() - finished > job_ttl:
            raise HTTPException(410, f"job {job_id!r} expired")
        return {k: doc[k] for k in ("job_id", "status", "result", "error")}

    return app


def _prediction_column(path: Path) -> list[int]:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, list):
        raise DataError(f"{path}: expected a JSON array of label indices")
    return [int(v) for v in doc]
