"""Local HTTP job service.

Submission endpoints accept multipart forms with a "request" field holding
the JSON body plus any image uploads. Compute runs on the store's single
worker thread; clients poll GET /jobs/{id} and fetch results when DONE.
"""

from __future__ import annotations

import io
import json
import os
from contextlib import asynccontextmanager

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import ValidationError

from ..checkpoint import read_checkpoint_meta
from ..errors import CheckpointError, InvalidInputError, SineditError
from ..imaging import load_image, load_mask
from ..prompts import generate_variants
from .jobs import DONE, FAILED, RESULT_MEDIA_TYPES, JobStore, JobWorker
from .schemas import (
    CheckpointInfo,
    CheckpointListResponse,
    EditJobRequest,
    ErrorItem,
    ErrorResponse,
    JobInfo,
    ScoreJobRequest,
    TrainJobRequest,
    VariantsRequest,
    VariantsResponse,
)


def _error_response(status: int, errors: list[ErrorItem]) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content=ErrorResponse(errors=errors).model_dump(),
    )


def _field_errors(exc: ValidationError | RequestValidationError) -> list[ErrorItem]:
    items = []
    for err in exc.errors():
        loc = [str(part) for part in err.get("loc", ()) if part != "body"]
        items.append(ErrorItem(field=".".join(loc) or "request", message=err.get("msg", "invalid")))
    return items


class RequestRejected(Exception):
    """Maps directly to an HTTP error response at the route boundary."""

    def __init__(self, status: int, field: str, message: str):
        super().__init__(message)
        self.status = status
        self.field = field
        self.message = message


class RequestRejectedMulti(Exception):
    def __init__(self, errors: list[ErrorItem]):
        super().__init__("validation failed")
        self.errors = errors


def _parse_request(model_cls, raw: str):
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RequestRejected(400, "request", f"invalid JSON: {exc}") from exc
    try:
        return model_cls.model_validate(payload)
    except ValidationError as exc:
        raise RequestRejectedMulti(_field_errors(exc)) from exc


def _decoded_image(data: bytes, field: str):
    try:
        return load_image(io.BytesIO(data))
    except (OSError, SineditError) as exc:
        raise RequestRejected(400, field, f"not a decodable image: {exc}") from exc


def _decoded_mask(data: bytes, field: str):
    try:
        return load_mask(io.BytesIO(data))
    except (OSError, SineditError) as exc:
        raise RequestRejected(400, field, f"not a binary mask image: {exc}") from exc


def create_app(data_dir: str, frontend_dir: str | None = None) -> FastAPI:
    store = JobStore(data_dir)
    worker = JobWorker(store)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        worker.stop()

    app = FastAPI(title="sinedit", lifespan=lifespan)
    app.state.store = store
    app.state.worker = worker
    worker.start()

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request, exc: RequestValidationError):
        return _error_response(400, _field_errors(exc))

    @app.exception_handler(RequestRejected)
    async def _on_rejected(request, exc: RequestRejected):
        return _error_response(exc.status, [ErrorItem(field=exc.field, message=exc.message)])

    @app.exception_handler(RequestRejectedMulti)
    async def _on_rejected_multi(request, exc: RequestRejectedMulti):
        return _error_response(400, exc.errors)

    @app.exception_handler(SineditError)
    async def _on_sinedit_error(request, exc: SineditError):
        field = getattr(exc, "field", "request")
        return _error_response(400, [ErrorItem(field=field, message=str(exc))])

    def _job_or_reject(job_id: str):
        record = store.get(job_id)
        if record is None:
            raise RequestRejected(404, "id", f"unknown job {job_id!r}")
        return record

    def _checkpoint_path_or_reject(name: str) -> str:
        if "/" in name or "\\" in name or ".." in name:
            raise RequestRejected(400, "checkpoint", f"invalid checkpoint name {name!r}")
        path = store.checkpoint_path(name)
        if not os.path.exists(path):
            raise RequestRejected(404, "checkpoint", f"unknown checkpoint {name!r}")
        return path

    # -- submission --------------------------------------------------------

    @app.post("/jobs/train", response_model=JobInfo, status_code=202)
    async def submit_train(
        request: str = Form(...),
        image: UploadFile | None = File(default=None),
    ):
        body = _parse_request(TrainJobRequest, request)
        if image is None:
            raise RequestRejected(400, "image", "training image upload is required")
        data = await image.read()
        _decoded_image(data, "image")
        image_path = store.save_upload(data, ".png")
        payload = body.model_dump()
        payload["image_path"] = image_path
        record = store.create("train", payload)
        worker.submit(record.id)
        return JobInfo(**record.to_info())

    @app.post("/jobs/edit", response_model=JobInfo, status_code=202)
    async def submit_edit(
        request: str = Form(...),
        mask: UploadFile | None = File(default=None),
    ):
        body = _parse_request(EditJobRequest, request)
        if body.mode in ("text-full", "text-roi") and not (body.prompt and body.prompt.strip()):
            raise RequestRejected(400, "prompt", f"{body.mode} requires a prompt")
        checkpoint_path = _checkpoint_path_or_reject(body.checkpoint)
        mask_path = None
        if mask is not None:
            data = await mask.read()
            _decoded_mask(data, "mask")
            mask_path = store.save_upload(data, ".png")
        if body.mode == "text-roi" and mask_path is None:
            raise RequestRejected(400, "mask", "text-roi requires a mask upload")
        payload = body.model_dump()
        payload["checkpoint_path"] = checkpoint_path
        payload["mask_path"] = mask_path
        record = store.create("edit", payload)
        worker.submit(record.id)
        return JobInfo(**record.to_info())

    @app.post("/jobs/score", response_model=JobInfo, status_code=202)
    async def submit_score(
        request: str = Form(...),
        images: list[UploadFile] = File(default=[]),
    ):
        body = _parse_request(ScoreJobRequest, request)
        if not images:
            raise RequestRejected(400, "images", "at least one image upload is required")
        names, paths = [], []
        for i, upload in enumerate(images):
            data = await upload.read()
            _decoded_image(data, "images")
            paths.append(store.save_upload(data, ".png"))
            names.append(upload.filename or f"image-{i}.png")
        payload = body.model_dump()
        payload["image_names"] = names
        payload["image_paths"] = paths
        record = store.create("score", payload)
        worker.submit(record.id)
        return JobInfo(**record.to_info())

    # -- inspection and results --------------------------------------------

    @app.get("/jobs/{job_id}", response_model=JobInfo)
    async def job_status(job_id: str):
        return JobInfo(**_job_or_reject(job_id).to_info())

    @app.get("/jobs/{job_id}/result")
    async def job_result(job_id: str):
        record = _job_or_reject(job_id)
        if record.state != DONE or not record.artifact:
            raise RequestRejected(
                409, "id", f"job {job_id} is {record.state}, result not available"
            )
        return FileResponse(
            record.artifact,
            media_type=RESULT_MEDIA_TYPES[record.kind],
            filename=os.path.basename(record.artifact),
        )

    @app.delete("/jobs/{job_id}", response_model=JobInfo)
    async def cancel_job(job_id: str):
        record = _job_or_reject(job_id)
        if record.state in (DONE, FAILED):
            raise RequestRejected(409, "id", f"job {job_id} already {record.state}")
        record = store.request_cancel(job_id)
        return JobInfo(**record.to_info())

    # -- auxiliary ---------------------------------------------------------

    @app.get("/checkpoints", response_model=CheckpointListResponse)
    async def list_checkpoints():
        infos = []
        for name in sorted(os.listdir(store.checkpoints_dir)):
            if not name.endswith(".ckpt"):
                continue
            info = CheckpointInfo(name=name[: -len(".ckpt")])
            try:
                meta = read_checkpoint_meta(os.path.join(store.checkpoints_dir, name))
                info.step = meta.get("step")
                shape = meta.get("source_shape")
                if shape:
                    info.height, info.width = int(shape[0]), int(shape[1])
            except (CheckpointError, OSError):
                continue
            infos.append(info)
        return CheckpointListResponse(checkpoints=infos)

    @app.post("/variants", response_model=VariantsResponse)
    async def variants(body: VariantsRequest):
        try:
            out = generate_variants(body.prompt, k=body.k)
        except InvalidInputError as exc:
            raise RequestRejected(400, "prompt", str(exc)) from exc
        return VariantsResponse(prompt=body.prompt, variants=out)

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    if frontend_dir and os.path.isdir(frontend_dir):
        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
