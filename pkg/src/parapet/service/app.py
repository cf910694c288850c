"""HTTP front end: thin wrappers that map requests onto the mode dispatch.

Every endpoint builds a RunConfig through the same override path as the
command line, runs :func:`parapet.runner.dispatch`, and returns the
JSON payload.  Package errors become structured JSON bodies; usage
problems are 400, numerical failures 422.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import load_run_config
from ..errors import ParapetError, UsageError
from ..runner import dispatch
from .schemas import (
    HealthResponse,
    LinearSolveRequest,
    LPCalibrateRequest,
    NonlinearSolveRequest,
    PetrovskiiCheckRequest,
    RunRequest,
    RunResponse,
    SKTStructureRequest,
)


def create_app():
    app = FastAPI(title="parapet", version=__version__)

    @app.exception_handler(ParapetError)
    async def _parapet_error(request: Request, exc: ParapetError):
        status = 400 if isinstance(exc, UsageError) else 422
        body = {
            "message": str(exc),
            "kind": type(exc).__name__,
            "exit_code": exc.exit_code,
        }
        report = getattr(exc, "report", None)
        if isinstance(report, dict):
            from ..runner import _jsonable

            body["report"] = _jsonable(report)
        return JSONResponse(status_code=status, content={"error": body})

    @app.get("/healthz", response_model=HealthResponse)
    async def healthz():
        return HealthResponse(status="ok", version=__version__)

    def _run(config_text, overrides):
        cfg = load_run_config(text=config_text, overrides=overrides)
        result = dispatch(cfg)
        return RunResponse(**result.to_payload())

    @app.post("/run", response_model=RunResponse)
    async def run(req: RunRequest):
        overrides = dict(req.overrides)
        if req.mode is not None:
            overrides["mode"] = req.mode
        return _run(req.config, overrides)

    @app.post("/petrovskii/check", response_model=RunResponse)
    async def petrovskii_check(req: PetrovskiiCheckRequest):
        return _run("", req.to_overrides())

    @app.post("/solve/linear", response_model=RunResponse)
    async def solve_linear(req: LinearSolveRequest):
        return _run("", req.to_overrides())

    @app.post("/solve/nonlinear", response_model=RunResponse)
    async def solve_nonlinear(req: NonlinearSolveRequest):
        return _run("", req.to_overrides())

    @app.post("/models/skt/structure", response_model=RunResponse)
    async def skt_structure(req: SKTStructureRequest):
        return _run("", req.to_overrides())

    @app.post("/lp/calibrate", response_model=RunResponse)
    async def lp_calibrate(req: LPCalibrateRequest):
        return _run("", req.to_overrides())

    return app


app = create_app()
