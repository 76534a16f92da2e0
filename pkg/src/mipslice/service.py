"""HTTP backend for the annotation UI.

Serves MIP image pairs from a dataset directory, stores click
annotations (one JSON file per image, atomic write-temp-rename), and
exposes prediction JSONs for review. Writes to the same image are
serialized; the last writer wins per (image_id, annotator).
"""

from __future__ import annotations

import csv
import io
import json
import os
import threading
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from pydantic import BaseModel

VIEWS = ("frontal", "sagittal")


class AnnotationIn(BaseModel):
    y_mm: float
    ambiguous: bool = False


class _Store:
    """One JSON file per image under <data_dir>/annotations/."""

    def __init__(self, data_dir: Path):
        self.dir = data_dir / "annotations"
        self.dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, image_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(image_id, threading.Lock())

    def _path(self, image_id: str) -> Path:
        return self.dir / f"{image_id}.json"

    def read(self, image_id: str) -> dict:
        path = self._path(image_id)
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, image_id: str, annotator: str, y_mm: float, ambiguous: bool) -> dict:
        with self._lock(image_id):
            records = self.read(image_id)
            record = {
                "image_id": image_id,
                "annotator": annotator,
                "y_mm": y_mm,
                "ambiguous": ambiguous,
                "timestamp": time.time(),
            }
            records[annotator] = record
            tmp = self._path(image_id).with_suffix(".json.tmp")
            tmp.write_text(json.dumps(records, indent=2), encoding="utf-8")
            os.replace(tmp, self._path(image_id))
            return record

    def all_records(self):
        for path in sorted(self.dir.glob("*.json")):
            yield from json.loads(path.read_text(encoding="utf-8")).values()


def _mip_dir(data_dir: Path) -> Path:
    return data_dir / "mips" if (data_dir / "mips").is_dir() else data_dir


def create_app(data_dir) -> FastAPI:
    data_dir = Path(data_dir)
    mips = _mip_dir(data_dir)
    store = _Store(data_dir)
    app = FastAPI(title="mipslice annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def image_ids() -> list[str]:
        return sorted(p.name[: -len("_frontal.png")] for p in mips.glob("*_frontal.png"))

    def image_height_mm(image_id: str) -> float | None:
        sidecar = mips / f"{image_id}_frontal.json"
        if sidecar.exists():
            return float(json.loads(sidecar.read_text(encoding="utf-8"))["height_mm"])
        return None

    def prediction_path(image_id: str) -> Path | None:
        base = data_dir / "predictions"
        if not base.is_dir():
            return None
        for candidate in (
            base / f"{image_id}_frontal.json",
            base / f"{image_id}_sagittal.json",
            base / f"{image_id}.json",
        ):
            if candidate.exists():
                return candidate
        return None

    @app.get("/api/images")
    def list_images():
        out = []
        for image_id in image_ids():
            records = store.read(image_id)
            out.append(
                {
                    "image_id": image_id,
                    "height_mm": image_height_mm(image_id),
                    "annotated_by": sorted(records.keys()),
                    "has_prediction": prediction_path(image_id) is not None,
                }
            )
        return out

    @app.get("/api/images/{image_id}/mip/{view}")
    def get_mip(image_id: str, view: str):
        if view not in VIEWS:
            raise HTTPException(status_code=404, detail=f"unknown view {view!r}")
        path = mips / f"{image_id}_{view}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no {view} MIP for {image_id!r}")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/images/{image_id}/annotation")
    def get_annotation(image_id: str, annotator: str = Query(...)):
        if image_id not in image_ids():
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        record = store.read(image_id).get(annotator)
        if record is None:
            raise HTTPException(status_code=404, detail="no annotation yet")
        return record

    @app.put("/api/images/{image_id}/annotation")
    def put_annotation(image_id: str, body: AnnotationIn, annotator: str = Query(...)):
        if image_id not in image_ids():
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        height = image_height_mm(image_id)
        if body.y_mm < 0 or (height is not None and body.y_mm > height):
            raise HTTPException(
                status_code=422,
                detail=f"y_mm {body.y_mm} outside [0, {height}]",
            )
        return store.put(image_id, annotator, body.y_mm, body.ambiguous)

    @app.get("/api/images/{image_id}/prediction")
    def get_prediction(image_id: str):
        path = prediction_path(image_id)
        if path is None:
            raise HTTPException(status_code=404, detail="no prediction")
        return json.loads(path.read_text(encoding="utf-8"))

    @app.get("/api/export/annotations.csv")
    def export_csv():
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["image_id", "annotator", "y_mm", "ambiguous"])
        for rec in store.all_records():
            writer.writerow(
                [rec["image_id"], rec["annotator"], rec["y_mm"], int(rec["ambiguous"])]
            )
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    return app


def serve(data_dir, port: int = 8000, host: str = "127.0.0.1") -> None:
    """Run the annotation backend (blocking)."""
    import uvicorn

    uvicorn.run(create_app(data_dir), host=host, port=port)
