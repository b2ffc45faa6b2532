"""HTTP service for the human-in-the-loop caption quality check.

State is the dataset file plus an append-only decision log; replaying the log
over the dataset reconstructs the store, so decisions survive restarts.
Writes are serialized through a single lock and an already-decided item
returns a conflict.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .core import (
    CaptionRecord,
    DatasetRecord,
    ReviewerDecision,
    SpectracastError,
)
from .corpus import load_dataset, save_dataset
from .embedding import cosine, encode_series, encode_text
from .gateway import judge_heuristic


class ReviewConflictError(SpectracastError):
    pass


class UnknownItemError(SpectracastError):
    pass


class ReviewStore:
    """Dataset-backed review queue with a write-ahead decision log."""

    def __init__(self, dataset_path: str | Path, decisions_path: str | Path | None = None):
        self.dataset_path = Path(dataset_path)
        self.decisions_path = (
            Path(decisions_path)
            if decisions_path
            else self.dataset_path.with_suffix(self.dataset_path.suffix + ".decisions")
        )
        self._lock = threading.Lock()
        self._records: dict[str, DatasetRecord] = {}
        self._order: list[str] = []
        self._decided: dict[str, dict] = {}
        records = load_dataset(self.dataset_path)
        self.enqueue(records)
        self._replay_log()

    # -- queue management ------------------------------------------------

    def enqueue(self, records: list[DatasetRecord]) -> list[str]:
        """Idempotent per series_ref; returns the ids actually added."""
        added = []
        with self._lock:
            for record in records:
                ref = record.series_ref
                if ref in self._records:
                    continue
                self._records[ref] = record
                self._order.append(ref)
                added.append(ref)
        return added

    def _replay_log(self):
        if not self.decisions_path.exists():
            return
        with self.decisions_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = json.loads(line)
                self._apply(entry["item_id"], entry["decision"], entry["decided_at"], log=False)

    def _append_log(self, item_id: str, decision: dict, decided_at: str):
        with self.decisions_path.open("a", encoding="utf-8") as fh:
            fh.write(
                json.dumps({"item_id": item_id, "decision": decision, "decided_at": decided_at})
                + "\n"
            )
            fh.flush()

    # -- reads -------------------------------------------------------------

    def pending_ids(self, limit: int | None = None) -> list[str]:
        with self._lock:
            ids = [ref for ref in self._order if ref not in self._decided]
        return ids[:limit] if limit else ids

    def get_item(self, item_id: str) -> dict:
        with self._lock:
            record = self._records.get(item_id)
            if record is None:
                raise UnknownItemError(f"unknown item {item_id!r}")
            decided = self._decided.get(item_id)
        return self._render_item(record, decided)

    def _render_item(self, record: DatasetRecord, decided: dict | None) -> dict:
        series = record.series
        series_vec = encode_series(series)
        facts = {"direction": "flat", "period": None, "first_anomaly_t": None, "precip_max": 0.0}
        candidates = []
        for i, c in enumerate(record.captions):
            sim = cosine(series_vec, encode_text(c.text)) if c.text.strip() else 0.0
            candidates.append(
                {
                    "index": i,
                    "text": c.text,
                    "generator_role": c.generator_role.value,
                    "backend_id": c.backend_id,
                    "reflector_status": c.reflector_status.value,
                    "reflector_feedback": c.reflector_feedback,
                    "refine_round": c.refine_round,
                    "utility_score": c.utility_score,
                    "sim_term": sim,
                    "judge_term": judge_heuristic(c.text, facts),
                    "reviewer_decision": c.reviewer_decision.value,
                    "s_pa": c.s_pa,
                    "s_sr": c.s_sr,
                }
            )
        return {
            "item_id": record.series_ref,
            "status": "decided" if decided else "pending",
            "decided_at": decided["decided_at"] if decided else None,
            "series": {
                "station_id": series.station_id,
                "start_time": series.start_time.isoformat(),
                "step_seconds": int(series.step.total_seconds()),
                "values": series.values.tolist(),
                "category": record.category.value,
                "complexity": record.complexity,
            },
            "candidates": candidates,
        }

    # -- decisions -----------------------------------------------------------

    def decide(self, item_id: str, decision: dict) -> dict:
        decided_at = datetime.now(timezone.utc).isoformat()
        with self._lock:
            item = self._apply(item_id, decision, decided_at, log=True)
        return item

    def _apply(self, item_id: str, decision: dict, decided_at: str, log: bool) -> dict:
        record = self._records.get(item_id)
        if record is None:
            raise UnknownItemError(f"unknown item {item_id!r}")
        if item_id in self._decided:
            raise ReviewConflictError(f"item {item_id!r} is already decided")
        self._validate(record, decision)
        captions = list(record.captions)
        s_pa = int(decision["s_pa"])
        s_sr = int(decision["s_sr"])
        if decision.get("reject_all"):
            captions = [
                replace(c, reviewer_decision=ReviewerDecision.REJECT, s_pa=s_pa, s_sr=s_sr)
                for c in captions
            ]
        elif decision.get("edited_text"):
            base = captions[int(decision["selected_caption_index"])]
            captions.append(
                replace(
                    base,
                    text=decision["edited_text"],
                    reviewer_decision=ReviewerDecision.EDIT,
                    reflector_status="pass",
                    s_pa=s_pa,
                    s_sr=s_sr,
                )
            )
        else:
            idx = int(decision["selected_caption_index"])
            captions[idx] = replace(
                captions[idx],
                reviewer_decision=ReviewerDecision.APPROVE,
                s_pa=s_pa,
                s_sr=s_sr,
            )
        self._records[item_id] = replace(record, captions=tuple(captions))
        self._decided[item_id] = {"decided_at": decided_at, "decision": decision}
        if log:
            self._append_log(item_id, decision, decided_at)
        return self._render_item(self._records[item_id], self._decided[item_id])

    @staticmethod
    def _validate(record: DatasetRecord, decision: dict):
        for key in ("s_pa", "s_sr"):
            value = decision.get(key)
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise SpectracastError(f"{key} must be an integer in 1..5")
        if decision.get("reject_all"):
            return
        idx = decision.get("selected_caption_index")
        if idx is None:
            raise SpectracastError("decision needs selected_caption_index, edited_text, or reject_all")
        if not 0 <= int(idx) < len(record.captions):
            raise SpectracastError(f"selected_caption_index {idx} out of range")
        edited = decision.get("edited_text")
        if edited is not None and not str(edited).strip():
            raise SpectracastError("edited_text must be nonempty when provided")

    # -- stats and persistence --------------------------------------------

    def stats(self) -> dict:
        with self._lock:
            decided = len(self._decided)
            pending = len(self._order) - decided
            s_pa, s_sr, passed = [], [], 0
            for ref in self._decided:
                decision = self._decided[ref]["decision"]
                s_pa.append(decision["s_pa"])
                s_sr.append(decision["s_sr"])
                if not decision.get("reject_all"):
                    passed += 1
        return {
            "decided": decided,
            "pending": pending,
            "pass_rate": (100.0 * passed / decided) if decided else None,
            "mean_s_pa": (sum(s_pa) / len(s_pa)) if s_pa else None,
            "mean_s_sr": (sum(s_sr) / len(s_sr)) if s_sr else None,
        }

    def records(self) -> list[DatasetRecord]:
        with self._lock:
            return [self._records[ref] for ref in self._order]

    def save_dataset(self, path: str | Path | None = None):
        save_dataset(path or self.dataset_path, self.records())


class DecisionIn(BaseModel):
    selected_caption_index: Optional[int] = None
    edited_text: Optional[str] = None
    reject_all: bool = False
    s_pa: int = Field(ge=1, le=5)
    s_sr: int = Field(ge=1, le=5)
    reviewer_id: str = ""


def create_app(store: ReviewStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="spectracast review service")

    @app.get("/api/queue")
    def queue(limit: int = 50):
        ids = store.pending_ids(limit)
        return {"pending": ids, "count": len(ids)}

    @app.get("/api/items/{item_id}")
    def item(item_id: str):
        try:
            return store.get_item(item_id)
        except UnknownItemError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.post("/api/items/{item_id}/decision")
    def decide(item_id: str, decision: DecisionIn):
        try:
            return store.decide(item_id, decision.model_dump())
        except UnknownItemError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except ReviewConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except SpectracastError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None

    @app.get("/api/stats")
    def stats():
        return store.stats()

    if ui_dir is not None and Path(ui_dir).exists():
        ui_path = Path(ui_dir)

        @app.get("/")
        def index():
            return FileResponse(ui_path / "index.html")

        app.mount("/ui", StaticFiles(directory=ui_path, html=True), name="ui")

    return app


def serve(
    dataset: str | Path,
    port: int = 8787,
    host: str = "127.0.0.1",
    ui_dir: str | Path | None = None,
):
    import uvicorn

    store = ReviewStore(dataset)
    app = create_app(store, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
