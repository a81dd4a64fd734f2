"""HTTP service: recognition, patrol runs and event queries."""

from __future__ import annotations

import base64
import binascii
import json
import logging
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import AppConfig
from .imaging import ImageDecodeError
from .patrol import Scenario, run_scenario
from .recognizer import PipelineConfig, build_recognizer
from .registry import EventStore, RegistryError, load_registry
from .validation import check_image

log = logging.getLogger(__name__)

FAILURE_STATUS = {"decode": 400, "detect": 422, "ocr": 422, "format": 422, "lmm": 502}


def api_error(status: int, code: str, message: str, stage: str | None = None) -> JSONResponse:
    return JSONResponse({"error": {"code": code, "message": message, "stage": stage}}, status_code=status)


class ServiceState:
    def __init__(self, cfg: AppConfig, lmm_client=None):
        self.cfg = cfg
        self.registry = None
        self.store = EventStore(cfg.event_log_path) if cfg.event_log_path else None
        self.lmm_client = lmm_client
        self._recognizers = {}
        self._lock = threading.Lock()

    @property
    def ready(self) -> bool:
        return self.registry is not None

    def load_registry(self):
        if self.cfg.registry_path is None:
            raise RegistryError("registry_path is not configured")
        self.registry = load_registry(self.cfg.registry_path)

    def recognizer(self, pcfg: PipelineConfig):
        with self._lock:
            if pcfg not in self._recognizers:
                client = self.lmm_client
                if pcfg.backend == "lmm" and client is None:
                    client = self.lmm_client = self.cfg.make_lmm_client()
                self._recognizers[pcfg] = build_recognizer(pcfg, lmm_client=client)
            return self._recognizers[pcfg]


def _pipeline_from(params: dict) -> PipelineConfig:
    backend = params.get("backend", "dual")
    if backend == "lmm":
        return PipelineConfig.lmm()
    return PipelineConfig(backend, params.get("detector", "heuristic"), params.get("ocr", "baseline"),
                          params.get("variant", "binary_roi"))


def create_app(cfg: AppConfig, autoload: bool = True, lmm_client=None) -> FastAPI:
    state = ServiceState(cfg, lmm_client)
    if autoload:
        state.load_registry()
    app = FastAPI(title="platepatrol")
    app.state.svc = state

    @app.get("/healthz")
    def healthz():
        if not state.ready:
            return api_error(503, "not_ready", "registry not loaded", "startup")
        return {"status": "ok", "config_digest": cfg.digest(), "registry_size": len(state.registry)}

    @app.post("/v1/recognize")
    async def recognize(request: Request):
        if not state.ready:
            return api_error(503, "not_ready", "registry not loaded", "startup")
        params = dict(request.query_params)
        body = await request.body()
        annotation = None
        if request.headers.get("content-type", "").startswith("application/json"):
            try:
                doc = json.loads(body)
                params.update({k: v for k, v in doc.items() if k in ("backend", "detector", "ocr", "variant")})
                body = base64.b64decode(doc["image_base64"], validate=True)
                annotation = tuple(doc["box"]) if doc.get("box") else None
            except (ValueError, KeyError, TypeError, binascii.Error) as exc:
                return api_error(400, "bad_request", f"expected JSON with image_base64: {exc}", "decode")
        try:
            pcfg = _pipeline_from(params)
        except ValueError as exc:
            return api_error(400, "bad_request", str(exc), "config")
        try:
            image = check_image(body)
        except (ImageDecodeError, TypeError) as exc:
            return api_error(400, "decode", str(exc), "decode")
        result = state.recognizer(pcfg).recognize(image, annotation=annotation)
        doc = result.to_dict()
        if result.ok:
            return doc
        status = FAILURE_STATUS.get(result.failure, 422)
        code = "upstream" if status == 502 else ("unreadable_plate" if status == 422 else result.failure)
        return JSONResponse({"error": {"code": code, "message": result.detail or result.failure,
                                       "stage": result.failure}, "result": doc}, status_code=status)

    @app.post("/v1/patrol")
    async def patrol(request: Request):
        if not state.ready:
            return api_error(503, "not_ready", "registry not loaded", "startup")
        try:
            doc = json.loads(await request.body())
            paths = doc.setdefault("paths", {})
            if cfg.registry_path:
                paths.setdefault("registry", str(cfg.registry_path))
            if cfg.event_log_path:
                paths.setdefault("event_log", str(cfg.event_log_path))
            sc = Scenario.from_dict(doc)
        except (ValueError, TypeError, AttributeError) as exc:
            return api_error(400, "bad_scenario", str(exc), "config")
        try:
            report = run_scenario(sc, lmm_client=state.lmm_client, store=state.store)
        except (RegistryError, OSError, ValueError) as exc:
            return api_error(400, "bad_scenario", str(exc), "patrol")
        return report.to_dict()

    @app.get("/v1/events")
    def events(since: int = 0):
        if state.store is None:
            return api_error(503, "not_ready", "event log not configured", "startup")
        return {"events": [ev.to_dict() for ev in state.store.read(since)]}

    return app
