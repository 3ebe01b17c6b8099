"""Human annotation service: ranked review queue, durable labels, live
top-k precision.

Labels go to an append-only newline-delimited log that is fsynced before
a submission is acknowledged and replayed on startup, so an acknowledged
label survives a crash. The newest record per (sample, annotator) wins.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from pydantic import BaseModel

from .datagen import CONGRUENT, INCONGRUENT
from .errors import MissingLabelsError
from .evaluation import PrecisionCurve, top_k_precision
from .ingest import ArticleRecord

AGREEMENT_RULES = ("single", "unanimous")


class LabelSubmission(BaseModel):
    """POST /api/labels request body."""

    sample_id: str
    annotator: str
    label: str


@dataclass(frozen=True)
class QueueItem:
    sample_id: str
    title: str
    image_url: str
    prediction_score: float
    rank: int


@dataclass(frozen=True)
class AnnotationRecord:
    sample_id: str
    annotator: str
    label: str
    labeled_at: str

    def __post_init__(self):
        if self.label not in (CONGRUENT, INCONGRUENT):
            raise ValueError(f"bad label {self.label!r}")
        if not self.annotator:
            raise ValueError("annotator must be non-empty")


@dataclass(frozen=True)
class PrecisionReport:
    curve: PrecisionCurve
    rule: str
    disagreements: tuple[str, ...]


class LabelLog:
    """Append-only JSONL label log with startup replay."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._latest: dict[tuple[str, str], AnnotationRecord] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    raw = json.loads(line)
                    record = AnnotationRecord(**raw)
                    self._latest[(record.sample_id, record.annotator)] = record

    def append(self, record: AnnotationRecord) -> None:
        """Durably persist one label before it becomes visible."""
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(record), ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._latest[(record.sample_id, record.annotator)] = record

    def latest(self) -> Mapping[tuple[str, str], AnnotationRecord]:
        return dict(self._latest)

    def __len__(self) -> int:
        return len(self._latest)


def build_queue(
    ranked: Sequence[tuple[str, float]], corpus: Mapping[str, ArticleRecord]
) -> list[QueueItem]:
    """Join a ranked (record_id, prediction_score) list with the corpus."""
    items = []
    for rank, (record_id, score) in enumerate(ranked, start=1):
        record = corpus.get(record_id)
        if record is None:
            raise KeyError(f"ranked id {record_id!r} is not in the corpus")
        items.append(
            QueueItem(
                sample_id=record_id,
                title=record.title,
                image_url=f"/thumbnails/{record_id}",
                prediction_score=score,
                rank=rank,
            )
        )
    return items


class AnnotationService:
    """Queue and label bookkeeping behind the HTTP API."""

    def __init__(self, queue: Sequence[QueueItem], log: LabelLog):
        self.queue = list(queue)
        self._by_id = {item.sample_id: item for item in self.queue}
        if len(self._by_id) != len(self.queue):
            raise ValueError("queue sample ids must be unique")
        self.log = log
        self._write_lock = threading.Lock()

    def next_unlabeled(self, annotator: str, limit: int) -> list[QueueItem]:
        """This annotator's frontier: top-ranked items they have not labeled."""
        if limit < 1:
            raise ValueError("limit must be >= 1")
        labeled = {
            sample_id for (sample_id, who) in self.log.latest() if who == annotator
        }
        out = []
        for item in self.queue:
            if item.sample_id not in labeled:
                out.append(item)
                if len(out) == limit:
                    break
        return out

    def submit_label(
        self, sample_id: str, annotator: str, label: str, labeled_at: str | None = None
    ) -> AnnotationRecord:
        if sample_id not in self._by_id:
            raise KeyError(f"unknown sample_id {sample_id!r}")
        if labeled_at is None:
            labeled_at = datetime.now(timezone.utc).isoformat()
        record = AnnotationRecord(sample_id, annotator, label, labeled_at)
        with self._write_lock:
            self.log.append(record)
        return record

    def sample_detail(self, sample_id: str) -> dict:
        item = self._by_id.get(sample_id)
        if item is None:
            raise KeyError(f"unknown sample_id {sample_id!r}")
        labels = [
            asdict(record)
            for (sid, _), record in sorted(self.log.latest().items())
            if sid == sample_id
        ]
        return {**asdict(item), "labels": labels}

    def effective_labels(self, rule: str) -> tuple[dict[str, str], list[str]]:
        """Resolve per-annotator labels into one label per sample.

        Under "single", any incongruent vote makes the sample positive.
        Under "unanimous", annotators must agree; disagreeing samples are
        returned separately and excluded from the label map.
        """
        if rule not in AGREEMENT_RULES:
            raise ValueError(f"rule must be one of {AGREEMENT_RULES}")
        votes: dict[str, set[str]] = {}
        for (sample_id, _), record in self.log.latest().items():
            votes.setdefault(sample_id, set()).add(record.label)
        labels: dict[str, str] = {}
        disagreements: list[str] = []
        for sample_id, cast in votes.items():
            if len(cast) == 1:
                labels[sample_id] = next(iter(cast))
            elif rule == "single":
                labels[sample_id] = INCONGRUENT
            else:
                disagreements.append(sample_id)
        return labels, sorted(disagreements)

    def precision_report(self, ks: Sequence[int], rule: str = "unanimous") -> PrecisionReport:
        """Live top-k precision; delegates the curve to the evaluation module.

        Raises :class:`MissingLabelsError` when the requested ranks contain
        unlabeled samples or (under the unanimous rule) unresolved
        disagreements; its payload lists both groups.
        """
        labels, disagreements = self.effective_labels(rule)
        ranked_ids = [item.sample_id for item in self.queue]
        try:
            curve = top_k_precision(ranked_ids, labels, ks)
        except MissingLabelsError as exc:
            flagged = [s for s in exc.missing_ids if s in set(disagreements)]
            truly_missing = [s for s in exc.missing_ids if s not in set(disagreements)]
            raise MissingLabelsError(truly_missing, flagged) from None
        return PrecisionReport(curve=curve, rule=rule, disagreements=tuple(disagreements))


def create_app(
    service: AnnotationService,
    thumbnail_paths: Mapping[str, str] | None = None,
    static_dir: str | Path | None = None,
):
    """FastAPI app exposing the annotation HTTP API.

    thumbnail_paths maps record ids to local image files; static_dir, when
    given, serves the browser UI at the root path.
    """
    from fastapi import FastAPI, HTTPException, Query, Response
    from fastapi.responses import FileResponse

    app = FastAPI(title="congruity annotation service")
    thumbnail_paths = thumbnail_paths or {}

    @app.get("/api/queue")
    def get_queue(annotator: str = Query(min_length=1), limit: int = Query(20, ge=1)):
        return [asdict(item) for item in service.next_unlabeled(annotator, limit)]

    @app.post("/api/labels", status_code=201)
    def post_label(submission: LabelSubmission):
        try:
            record = service.submit_label(
                submission.sample_id, submission.annotator, submission.label
            )
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return asdict(record)

    @app.get("/api/report/precision")
    def get_precision(ks: str = Query(...), rule: str = Query("unanimous")):
        try:
            k_values = [int(k) for k in ks.split(",") if k.strip()]
        except ValueError:
            raise HTTPException(status_code=422, detail=f"bad ks value {ks!r}") from None
        if rule not in AGREEMENT_RULES:
            raise HTTPException(status_code=422, detail=f"rule must be one of {AGREEMENT_RULES}")
        try:
            report = service.precision_report(k_values, rule)
        except MissingLabelsError as exc:
            raise HTTPException(
                status_code=409,
                detail={"missing": exc.missing_ids, "disagreed": exc.disagreed_ids},
            ) from None
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {
            "points": [[k, p] for k, p in report.curve.points],
            "annotated_count": report.curve.annotated_count,
            "rule": report.rule,
            "disagreements": list(report.disagreements),
        }

    @app.get("/api/samples/{sample_id}")
    def get_sample(sample_id: str):
        try:
            return service.sample_detail(sample_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.get("/thumbnails/{record_id}")
    def get_thumbnail(record_id: str):
        path = thumbnail_paths.get(record_id)
        if path is None or not Path(path).exists():
            raise HTTPException(status_code=404, detail=f"no thumbnail for {record_id!r}")
        return FileResponse(path)

    @app.get("/healthz")
    def healthz():
        return {"queue_size": len(service.queue), "labels": len(service.log)}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return Response(
                "congruity annotation service; see /api/queue", media_type="text/plain"
            )

    return app
