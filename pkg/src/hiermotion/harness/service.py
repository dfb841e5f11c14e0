"""HTTP service powering the graph-refinement studio.

Checkpoints load once; requests share read-only parameters and each request
derives its randomness from its own seed, so identical (graph, edits, seed)
always return identical motion payloads.
"""

from __future__ import annotations

import time
import uuid
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .. import semgraph
from ..diffusion import GenerationResult
from ..parser import NoVerbFound
from ..semgraph import EditOp, GraphError, SchemaViolation, SemanticGraph
from .experiment import Bundle


class ParseRequest(BaseModel):
    text: str


class GenerateRequest(BaseModel):
    text: Optional[str] = None
    graph: Optional[dict] = None
    seed: int = 0
    length: Optional[int] = None
    sampler: Optional[dict] = None
    expected_checkpoint: Optional[str] = None


class RefineRequest(BaseModel):
    graph: dict
    edits: list[dict] = Field(default_factory=list)
    seed: int = 0
    length: Optional[int] = None
    sampler: Optional[dict] = None
    expected_checkpoint: Optional[str] = None


def _motion_payload(result: GenerationResult) -> dict[str, Any]:
    def frames_of(m):
        return {"fps": m.fps, "frames": m.frames.tolist(),
                "joint_count": m.layout.joint_count}

    return {
        "graph": semgraph.to_dict(result.graph),
        "seed": result.seed,
        "motion": frames_of(result.final),
        "levels": {level: frames_of(motion)
                   for level, motion in result.motions.items()},
    }


def create_app(bundle: Bundle, static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="hiermotion service")
    denoiser_hash = bundle.checkpoint_hashes.get("denoiser", "")

    @app.exception_handler(GraphError)
    async def graph_error_handler(request: Request, exc: GraphError):
        return JSONResponse(status_code=400,
                            content={"error": type(exc).__name__, "message": str(exc)})

    @app.exception_handler(Exception)
    async def internal_error_handler(request: Request, exc: Exception):
        error_id = uuid.uuid4().hex[:12]
        return JSONResponse(status_code=500,
                            content={"error": "internal", "error_id": error_id,
                                     "message": str(exc)})

    def check_pin(expected: Optional[str]):
        if expected is not None and expected != denoiser_hash:
            raise HTTPException(status_code=409,
                                detail={"error": "checkpoint-mismatch",
                                        "expected": expected,
                                        "loaded": denoiser_hash})

    def graph_from_request(req: GenerateRequest) -> SemanticGraph:
        if req.graph is not None:
            graph = semgraph.from_dict(req.graph)
        elif req.text:
            try:
                graph = bundle.parse(req.text)
            except NoVerbFound as exc:
                raise SchemaViolation("$.text", str(exc))
        else:
            raise SchemaViolation("$", "request needs either text or graph")
        problems = semgraph.validate(graph)
        if problems:
            raise SchemaViolation(
                "$.graph", "; ".join(f"{v.invariant}({v.subject}): {v.message}"
                                     for v in problems))
        return graph

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoints": bundle.checkpoint_hashes}

    @app.post("/parse")
    def parse(req: ParseRequest):
        if not req.text or not req.text.strip():
            raise SchemaViolation("$.text", "text must be non-empty")
        graph = bundle.parse(req.text)
        return {"graph": semgraph.to_dict(graph)}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        check_pin(req.expected_checkpoint)
        graph = graph_from_request(req)
        t0 = time.perf_counter()
        result = bundle.generate(graph, seed=req.seed, length=req.length,
                                 sampler_overrides=req.sampler)
        payload = _motion_payload(result)
        payload["latency_ms"] = round(1000 * (time.perf_counter() - t0), 3)
        return payload

    @app.post("/refine")
    def refine(req: RefineRequest):
        check_pin(req.expected_checkpoint)
        graph = semgraph.from_dict(req.graph)
        problems = semgraph.validate(graph)
        if problems:
            raise SchemaViolation(
                "$.graph", "; ".join(f"{v.invariant}({v.subject})" for v in problems))
        edits = [EditOp.from_dict(e) for e in req.edits]
        t0 = time.perf_counter()
        result = bundle.refine(graph, edits, seed=req.seed, length=req.length,
                               sampler_overrides=req.sampler)
        payload = _motion_payload(result)
        payload["edits"] = [e.to_dict() for e in edits]
        payload["latency_ms"] = round(1000 * (time.perf_counter() - t0), 3)
        return payload

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=Path(static_dir), html=True),
                  name="studio")

    return app
