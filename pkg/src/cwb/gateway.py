"""REST gateway: experimenter API, agent endpoints, process entry point.

Auth is two-tier: one operator token for /api, per-execution bearer
tokens for /agent. State-changing calls funnel through the engine's
kernel, GETs read the store directly. Live logs are a cursor poll:
GET .../log?after=N returns only lines with seq > N, so successive polls
never overlap or reorder.
"""

from __future__ import annotations

import json

from fastapi import Body, Depends, FastAPI, Header, HTTPException, Query, Request, Response

from . import model, results
from .config import ServerConfig
from .orchestrator import (
    AlreadyTerminal, AuthError, BenchmarkInactive, BenchmarkNotFound, ConflictError,
    Engine, ExecutionNotFound, InvalidState, NotInDevMode, OrchestratorError,
    ResourcesAlreadyReleased,
)
from .statemachine import ExecutionState, allowed_events


def _bearer(header: str | None) -> str | None:
    if not header:
        return None
    if header.lower().startswith("bearer "):
        return header[7:].strip()
    return header.strip()


def create_app(engine: Engine) -> FastAPI:
    config = engine.config
    app = FastAPI(title="cwb", docs_url=None, redoc_url=None)

    def operator(authorization: str | None = Header(default=None)) -> None:
        if _bearer(authorization) != config.operator_token:
            raise HTTPException(401, "operator token required")

    def agent_token(authorization: str | None = Header(default=None)) -> str:
        token = _bearer(authorization)
        if not token:
            raise HTTPException(401, "agent token required")
        return token

    # -- error translation --------------------------------------------------

    @app.exception_handler(OrchestratorError)
    async def _orchestrator_error(request: Request, exc: OrchestratorError):
        status = 500
        if isinstance(exc, (BenchmarkNotFound, ExecutionNotFound)):
            status = 404
        elif isinstance(exc, AuthError):
            status = 401
        elif isinstance(exc, (BenchmarkInactive, ConflictError, InvalidState,
                              AlreadyTerminal, NotInDevMode, ResourcesAlreadyReleased)):
            status = 409
        return Response(json.dumps({"detail": str(exc), "error": type(exc).__name__}),
                        status_code=status, media_type="application/json")

    @app.exception_handler(model.DefinitionError)
    async def _definition_error(request: Request, exc: model.DefinitionError):
        return Response(json.dumps({"detail": str(exc),
                                    "violations": [v.as_dict() for v in exc.violations]}),
                        status_code=422, media_type="application/json")

    @app.exception_handler(results.ResultsError)
    async def _results_error(request: Request, exc: results.ResultsError):
        status = 409 if isinstance(exc, results.ExecutionNotAcceptingResults) else 422
        return Response(json.dumps({"detail": str(exc), "error": type(exc).__name__}),
                        status_code=status, media_type="application/json")

    @app.exception_handler(model.InvalidOverridePath)
    async def _override_error(request: Request, exc: model.InvalidOverridePath):
        return Response(json.dumps({"detail": str(exc), "error": "InvalidOverridePath"}),
                        status_code=422, media_type="application/json")

    # -- views ----------------------------------------------------------------

    def benchmark_view(definition: model.BenchmarkDefinition) -> dict:
        doc = model.to_document(definition)
        return {"id": definition.id, "active": definition.active,
                "created_at": engine.store.benchmark_created_at(definition.id), **doc}

    def execution_view(execution, detail: bool = False) -> dict:
        state = ExecutionState(execution.state)
        view = {
            "id": execution.id,
            "benchmark_id": execution.benchmark_id,
            "state": execution.state,
            "displayed_status": engine.displayed_status_of(execution.id),
            "trigger_cause": execution.trigger_cause,
            "created_at": execution.created_at,
            "deadline_at": execution.deadline_at,
            "dev_mode": execution.dev_mode,
            "terminal": execution.terminal,
        }
        if detail:
            view["events"] = engine.store.get_events(execution.id)
            view["resources"] = [
                {k: r[k] for k in ("id", "provider", "role", "kind", "status")}
                for r in engine.store.handles_for(execution.id)]
            view["allowed_actions"] = engine.allowed_actions(execution)
            view["allowed_events"] = sorted(
                e.value for e in allowed_events(state, execution.dev_mode))
            view["observation_count"] = engine.store.observation_count(execution.id)
        return view

    # -- health ------------------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok", "clock": config.clock, "now": engine.kernel.clock.now()}

    # -- benchmarks -----------------------------------------------------------------

    @app.post("/api/benchmarks", status_code=201, dependencies=[Depends(operator)])
    def create_benchmark(doc: dict = Body(...)):
        doc = dict(doc)
        doc.setdefault("timeout_minutes", config.default_timeout_minutes)
        doc.setdefault("release_grace_minutes", config.default_release_grace_minutes)
        definition = model.validate_definition(doc, engine.registry.ids())
        saved = engine.store.save_benchmark(definition, engine.kernel.clock.now())
        return benchmark_view(saved)

    @app.get("/api/benchmarks", dependencies=[Depends(operator)])
    def list_benchmarks():
        return [benchmark_view(b) for b in engine.store.list_benchmarks()]

    @app.get("/api/benchmarks/{benchmark_id}", dependencies=[Depends(operator)])
    def get_benchmark(benchmark_id: str):
        definition = engine.store.get_benchmark(benchmark_id)
        if definition is None:
            raise BenchmarkNotFound(benchmark_id)
        return benchmark_view(definition)

    @app.patch("/api/benchmarks/{benchmark_id}", dependencies=[Depends(operator)])
    def patch_benchmark(benchmark_id: str, body: dict = Body(...)):
        if "active" in body:
            if not engine.store.set_benchmark_active(benchmark_id, bool(body["active"])):
                raise BenchmarkNotFound(benchmark_id)
        definition = engine.store.get_benchmark(benchmark_id)
        if definition is None:
            raise BenchmarkNotFound(benchmark_id)
        return benchmark_view(definition)

    @app.post("/api/benchmarks/{benchmark_id}/clone", status_code=201,
              dependencies=[Depends(operator)])
    def clone_benchmark(benchmark_id: str, body: dict = Body(default={})):
        base = engine.store.get_benchmark(benchmark_id)
        if base is None:
            raise BenchmarkNotFound(benchmark_id)
        overrides = body.get("overrides", body) or {}
        clone = model.clone_with_overrides(base, overrides, engine.registry.ids())
        saved = engine.store.save_benchmark(clone, engine.kernel.clock.now())
        return benchmark_view(saved)

    # -- executions ---------------------------------------------------------------------

    @app.post("/api/benchmarks/{benchmark_id}/executions", status_code=201,
              dependencies=[Depends(operator)])
    def trigger_execution(benchmark_id: str):
        execution = engine.trigger(benchmark_id, cause="manual")
        return execution_view(execution, detail=True)

    @app.get("/api/executions", dependencies=[Depends(operator)])
    def list_executions(state: str | None = None, benchmark: str | None = None,
                        created_from: float | None = Query(default=None, alias="from"),
                        created_to: float | None = Query(default=None, alias="to")):
        rows = engine.store.list_executions(benchmark_id=benchmark, state=state,
                                            created_from=created_from, created_to=created_to)
        return [execution_view(e) for e in rows]

    @app.get("/api/executions/{execution_id}", dependencies=[Depends(operator)])
    def get_execution(execution_id: str):
        execution = engine.store.get_execution(execution_id)
        if execution is None:
            raise ExecutionNotFound(execution_id)
        return execution_view(execution, detail=True)

    @app.get("/api/executions/{execution_id}/log", dependencies=[Depends(operator)])
    def get_log(execution_id: str, after: int = 0, limit: int = 500):
        if engine.store.get_execution(execution_id) is None:
            raise ExecutionNotFound(execution_id)
        lines = engine.store.get_logs(execution_id, after=after, limit=limit)
        next_cursor = lines[-1]["seq"] if lines else after
        return {"lines": lines, "next_cursor": next_cursor}

    @app.get("/api/executions/{execution_id}/observations", dependencies=[Depends(operator)])
    def get_observations(execution_id: str, metric: str | None = None):
        if engine.store.get_execution(execution_id) is None:
            raise ExecutionNotFound(execution_id)
        rows = engine.store.observations_for(execution_id, metric)
        return [{"metric": r["metric"],
                 "value": r["value_text"] if r["value_text"] is not None else r["value_num"],
                 "offset_ms": r["offset_ms"], "recorded_at": r["recorded_at"]} for r in rows]

    @app.get("/api/executions/{execution_id}/metrics.csv", dependencies=[Depends(operator)])
    def export_csv(execution_id: str, metric: str | None = None):
        if engine.store.get_execution(execution_id) is None:
            raise ExecutionNotFound(execution_id)
        return Response(engine.results.export_csv(execution_id, metric),
                        media_type="text/csv; charset=utf-8")

    @app.post("/api/executions/{execution_id}/dev_mode", dependencies=[Depends(operator)])
    def enter_dev_mode(execution_id: str):
        engine.enter_dev_mode(execution_id)
        return execution_view(engine.store.get_execution(execution_id), detail=True)

    @app.delete("/api/executions/{execution_id}/dev_mode", dependencies=[Depends(operator)])
    def exit_dev_mode(execution_id: str):
        engine.exit_dev_mode(execution_id)
        return execution_view(engine.store.get_execution(execution_id), detail=True)

    @app.post("/api/executions/{execution_id}/reprovision", dependencies=[Depends(operator)])
    def reprovision(execution_id: str):
        reports = engine.reprovision(execution_id)
        return {"reports": reports,
                "execution": execution_view(engine.store.get_execution(execution_id), detail=True)}

    @app.post("/api/executions/{execution_id}/release", dependencies=[Depends(operator)])
    def release_now(execution_id: str):
        engine.release_now(execution_id)
        return execution_view(engine.store.get_execution(execution_id), detail=True)

    # -- statistics --------------------------------------------------------------------------

    @app.get("/api/benchmarks/{benchmark_id}/metrics/{metric_name}/variability",
             dependencies=[Depends(operator)])
    def variability(benchmark_id: str, metric_name: str):
        definition = engine.store.get_benchmark(benchmark_id)
        if definition is None:
            raise BenchmarkNotFound(benchmark_id)
        row = engine.results.variability_summary(definition, metric_name)
        return {"group": row.group, "across_cv_pct": row.across_cv_pct,
                "within_cv_min_pct": row.within_cv_min_pct,
                "within_cv_max_pct": row.within_cv_max_pct,
                "executions": row.executions, "rendered": row.rendered()}

    # -- recipes -------------------------------------------------------------------------------

    @app.get("/api/recipes", dependencies=[Depends(operator)])
    def list_recipes():
        return [{"name": n, "version": v} for n, v in engine.recipes.list()]

    @app.get("/api/recipes/{name}/{version}", dependencies=[Depends(operator)])
    def get_recipe(name: str, version: str):
        doc = engine.store.get_recipe(name, version)
        if doc is None:
            raise HTTPException(404, f"recipe {name}@{version} not found")
        return doc

    @app.post("/api/recipes", status_code=201, dependencies=[Depends(operator)])
    def add_recipe(doc: dict = Body(...)):
        try:
            recipe = engine.recipes.add(doc)
        except Exception as exc:
            raise HTTPException(422, str(exc))
        return {"name": recipe.name, "version": recipe.version}

    # -- agent protocol ------------------------------------------------------------------------

    @app.put("/agent/executions/{execution_id}/state")
    def agent_state(execution_id: str, body: dict = Body(...),
                    token: str = Depends(agent_token)):
        ack = engine.agent_event(execution_id, token, body.get("event", ""),
                                 body.get("note", "") or "")
        return ack

    @app.post("/agent/executions/{execution_id}/metrics")
    def agent_metric(execution_id: str, body: dict = Body(...),
                     token: str = Depends(agent_token)):
        obs = engine.record_metric(execution_id, token, body.get("metric", ""),
                                   body.get("value"), body.get("offset_ms"),
                                   batch_id=body.get("batch_id"))
        return {"recorded": 1, "metric": obs.metric}

    @app.post("/agent/executions/{execution_id}/metrics/csv")
    async def agent_csv(execution_id: str, request: Request,
                        batch_id: str | None = None,
                        token: str = Depends(agent_token)):
        payload = (await request.body()).decode("utf-8")
        count = engine.ingest_csv(execution_id, token, payload, batch_id=batch_id)
        return {"recorded": count}

    # -- optional static dashboard ----------------------------------------------------------------

    if config.ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app


def build_engine(config: ServerConfig):
    from .store import Store

    store = Store(config.store_path)
    return Engine(store, config)


def serve(config: ServerConfig) -> None:
    """Run the service until interrupted; drains the kernel on shutdown."""
    import uvicorn

    engine = build_engine(config)
    app = create_app(engine)

    @app.on_event("startup")
    def _start():
        engine.start()

    @app.on_event("shutdown")
    def _stop():
        engine.stop()

    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
