"""Job records, disk persistence, and the single compute worker.

Jobs move QUEUED -> RUNNING -> DONE | FAILED, one JSON file per job under
the data directory, rewritten atomically on every transition. One worker
thread drains the queue, so at most one compute-heavy job runs at a time.
On startup, jobs found RUNNING are marked FAILED with reason "interrupted"
(the process died mid-run); QUEUED jobs are re-enqueued.
"""

from __future__ import annotations

import hashlib
import json
import os
import queue
import tempfile
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field

from ..editing import EditRequest, ModelBundle, Rect, run_edit
from ..embedders import get_embedder
from ..errors import JobCancelledError, SineditError
from ..imaging import load_image, load_mask, save_image
from ..metrics import score_images, write_report
from ..training import TrainConfig, Trainer

QUEUED = "QUEUED"
RUNNING = "RUNNING"
DONE = "DONE"
FAILED = "FAILED"

RESULT_MEDIA_TYPES = {
    "edit": "image/png",
    "train": "application/octet-stream",
    "score": "application/x-ndjson",
}


@dataclass
class JobRecord:
    id: str
    kind: str
    state: str = QUEUED
    progress: float = 0.0
    error: str | None = None
    request: dict = field(default_factory=dict)
    artifact: str | None = None
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)

    def to_info(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "error": self.error,
            "result_available": self.state == DONE and self.artifact is not None,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


class JobStore:
    """Thread-safe job registry persisted as one JSON file per job."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        self.jobs_dir = os.path.join(data_dir, "jobs")
        self.artifacts_dir = os.path.join(data_dir, "artifacts")
        self.uploads_dir = os.path.join(data_dir, "uploads")
        self.checkpoints_dir = os.path.join(data_dir, "checkpoints")
        for d in (self.jobs_dir, self.artifacts_dir, self.uploads_dir, self.checkpoints_dir):
            os.makedirs(d, exist_ok=True)
        self._lock = threading.RLock()
        self._jobs: dict[str, JobRecord] = {}
        self._cancel_requested: set[str] = set()
        self.recovered_queue: list[str] = []
        self._recover()

    def _recover(self) -> None:
        for name in sorted(os.listdir(self.jobs_dir)):
            if not name.endswith(".json"):
                continue
            path = os.path.join(self.jobs_dir, name)
            try:
                with open(path, encoding="utf-8") as fh:
                    record = JobRecord(**json.load(fh))
            except (json.JSONDecodeError, TypeError, OSError):
                continue
            if record.state == RUNNING:
                record.state = FAILED
                record.error = "interrupted"
                record.updated_at = time.time()
                self._persist(record)
            self._jobs[record.id] = record
        queued = [r for r in self._jobs.values() if r.state == QUEUED]
        self.recovered_queue = [r.id for r in sorted(queued, key=lambda r: r.created_at)]

    def _persist(self, record: JobRecord) -> None:
        path = os.path.join(self.jobs_dir, f"{record.id}.json")
        fd, tmp = tempfile.mkstemp(dir=self.jobs_dir, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(asdict(record), fh)
        os.replace(tmp, path)

    def create(self, kind: str, request: dict) -> JobRecord:
        record = JobRecord(id=uuid.uuid4().hex[:12], kind=kind, request=request)
        with self._lock:
            self._jobs[record.id] = record
            self._persist(record)
        return record

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            return self._jobs.get(job_id)

    def update(self, job_id: str, **fields) -> JobRecord:
        with self._lock:
            record = self._jobs[job_id]
            for key, value in fields.items():
                setattr(record, key, value)
            record.updated_at = time.time()
            self._persist(record)
            return record

    def request_cancel(self, job_id: str) -> JobRecord | None:
        """Cancel a queued or running job; returns None for unknown ids."""
        with self._lock:
            record = self._jobs.get(job_id)
            if record is None:
                return None
            self._cancel_requested.add(job_id)
            if record.state == QUEUED:
                return self.update(job_id, state=FAILED, error="cancelled")
            return record

    def cancel_requested(self, job_id: str) -> bool:
        with self._lock:
            return job_id in self._cancel_requested

    # -- file helpers -----------------------------------------------------

    def save_upload(self, data: bytes, suffix: str) -> str:
        """Content-addressed storage: identical uploads share one file."""
        digest = hashlib.sha256(data).hexdigest()
        path = os.path.join(self.uploads_dir, f"{digest}{suffix}")
        if not os.path.exists(path):
            fd, tmp = tempfile.mkstemp(dir=self.uploads_dir, suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        return path

    def checkpoint_path(self, name: str) -> str:
        return os.path.join(self.checkpoints_dir, f"{name}.ckpt")

    def artifact_path(self, job_id: str, suffix: str) -> str:
        return os.path.join(self.artifacts_dir, f"{job_id}{suffix}")


def _progress_writer(store: JobStore, job_id: str):
    """Returns a callback that throttles persistence to whole percents."""
    last = {"pct": -1}

    def set_progress(fraction: float) -> None:
        pct = int(max(0.0, min(1.0, fraction)) * 100)
        if pct != last["pct"]:
            last["pct"] = pct
            store.update(job_id, progress=pct / 100.0)

    return set_progress


def run_train_job(store: JobStore, record: JobRecord) -> str:
    req = record.request
    source = load_image(req["image_path"])
    config = TrainConfig(
        epochs=req["epochs"],
        batch_size=req["batch_size"],
        lr=req["lr"],
        loss=req["loss"],
        seed=req["seed"],
        channels=req["channels"],
        blocks=req["blocks"],
        embed_dim=req["embed_dim"],
        t0=req["t0"],
        ts=req.get("ts"),
        beta_min=req["beta_min"],
        beta_max=req["beta_max"],
        factor=req["factor"],
        min_dim=req["min_dim"],
    )
    trainer = Trainer.new(source, config)
    set_progress = _progress_writer(store, record.id)
    trainer.run(
        progress=lambda step, loss: set_progress(step / config.epochs),
        should_stop=lambda: store.cancel_requested(record.id),
    )
    path = store.checkpoint_path(req["name"])
    trainer.save(path)
    return path


def run_edit_job(store: JobStore, record: JobRecord) -> str:
    req = record.request
    mask = load_mask(req["mask_path"]) if req.get("mask_path") else None
    edit = EditRequest(
        checkpoint=req["checkpoint_path"],
        mode=req["mode"],
        prompt=req.get("prompt"),
        use_pe=req.get("use_pe", False),
        variant_count=req.get("variant_count", 5),
        mask=mask,
        source_rect=Rect(**req["source_rect"]) if req.get("source_rect") else None,
        dest_rects=[Rect(**r) for r in req.get("dest_rects", [])],
        eta=req.get("eta", 0.3),
        momentum=req.get("momentum", 0.05),
        seed=req.get("seed", 0),
        scales=req.get("scales"),
        sigma_mode=req.get("sigma_mode", "auto"),
        embedder_name=req.get("embedder", "mock"),
    ).validate()

    bundle = ModelBundle.load(edit.checkpoint)
    total_steps = sum(bundle.sampler.schedule.steps_per_scale)
    done = {"n": 0}
    set_progress = _progress_writer(store, record.id)

    def on_step(state) -> None:
        if store.cancel_requested(record.id):
            raise JobCancelledError(f"edit job {record.id} cancelled")
        done["n"] += 1
        set_progress(done["n"] / total_steps)

    image = run_edit(edit, bundle=bundle, on_step=on_step)
    path = store.artifact_path(record.id, ".png")
    save_image(image, path)
    return path


def run_score_job(store: JobStore, record: JobRecord) -> str:
    req = record.request
    embedder = get_embedder(req.get("embedder", "mock"))
    images = [
        (name, load_image(path))
        for name, path in zip(req["image_names"], req["image_paths"])
    ]
    report = score_images(
        images,
        req["prompt"],
        embedder,
        embedder_id=req.get("embedder", "mock"),
        omega=req.get("omega", 1.0),
    )
    path = store.artifact_path(record.id, ".jsonl")
    write_report(path, report)
    return path


_RUNNERS = {
    "train": run_train_job,
    "edit": run_edit_job,
    "score": run_score_job,
}

_STOP = object()


class JobWorker:
    """Single background thread executing jobs strictly one at a time."""

    def __init__(self, store: JobStore):
        self.store = store
        self.queue: queue.Queue = queue.Queue()
        self.thread = threading.Thread(target=self._loop, daemon=True, name="sinedit-worker")

    def start(self) -> None:
        for job_id in self.store.recovered_queue:
            self.queue.put(job_id)
        self.thread.start()

    def stop(self) -> None:
        self.queue.put(_STOP)

    def submit(self, job_id: str) -> None:
        self.queue.put(job_id)

    def _loop(self) -> None:
        while True:
            item = self.queue.get()
            if item is _STOP:
                return
            self._execute(item)

    def _execute(self, job_id: str) -> None:
        record = self.store.get(job_id)
        if record is None or record.state != QUEUED:
            return
        self.store.update(job_id, state=RUNNING, progress=0.0)
        try:
            artifact = _RUNNERS[record.kind](self.store, record)
        except JobCancelledError:
            self.store.update(job_id, state=FAILED, error="cancelled")
        except SineditError as exc:
            self.store.update(job_id, state=FAILED, error=str(exc))
        except Exception as exc:  # noqa: BLE001 - job isolation boundary
            self.store.update(job_id, state=FAILED, error=f"internal: {exc}")
        else:
            self.store.update(job_id, state=DONE, progress=1.0, artifact=artifact)
