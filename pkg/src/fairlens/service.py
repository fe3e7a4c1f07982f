"""HTTP JSON API over a report store.

Reads are plain retrieval. Inspections for groups outside the stored top-K
and all explanations are computed on demand against the black box recorded in
the report metadata, then cached back into the report file; concurrent
requests for the same (group, code, direction) coalesce onto one computation.
"""

from __future__ import annotations

import asyncio
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from .blackbox import BlackBoxAdapter, make_blackbox
from .data_model import (
    AttributeSchema,
    CodeGroupMap,
    CodeOntology,
    load_patients,
)
from .errors import AuditError, BlackBoxError, DataError, FairLensError
from .explain import DIRECTIONS, explain_group
from .inspection import load_descriptions, inspect_group
from .report import (
    AuditConfig,
    AuditReport,
    ReportStore,
    build_instances,
    explanation_key,
    groups_by_id,
)
from .strata import Group


class ExplainRequest(BaseModel):
    group: str
    code: str
    direction: str = "over"


class AuditContext:
    """Rebuilt pipeline state for one report, for on-demand computations."""

    def __init__(self, report: AuditReport, data_root: Path | None, token: str | None):
        meta = report.metadata
        paths = meta.get("paths") or {}

        def resolve(kind: str, required: bool) -> Path | None:
            name = paths.get(kind)
            if not name:
                if required:
                    raise DataError(
                        f"report {report.report_id} records no {kind} path; "
                        "re-run the audit with data paths or pass --data"
                    )
                return None
            candidates = [Path(name)]
            if data_root is not None:
                candidates.insert(0, data_root / Path(name).name)
            for candidate in candidates:
                if candidate.exists():
                    return candidate
            raise DataError(f"{kind} file {name!r} not found (searched {candidates})")

        self.config = AuditConfig.from_json(meta["config"])
        schema = AttributeSchema.from_json(meta["schema"])
        self.schema = schema
        self.patients = load_patients(resolve("patients", required=True), schema)
        self.group_map = CodeGroupMap.from_csv(resolve("group_map", required=True))
        ontology_path = resolve("ontology", required=False)
        self.ontology = CodeOntology.from_tsv(ontology_path) if ontology_path else None
        descriptions_path = resolve("descriptions", required=False)
        self.descriptions = (
            load_descriptions(descriptions_path) if descriptions_path else {}
        )
        from .synth import BiasSpec

        bias = BiasSpec.from_json(meta["bias"]) if meta.get("bias") else None
        self.blackbox: BlackBoxAdapter = make_blackbox(
            meta["blackbox"], self.patients, self.group_map, token
        )
        instances = build_instances(
            self.patients, self.blackbox, schema, self.group_map, self.config, bias
        )
        self.groups: dict[str, Group] = groups_by_id(self.patients, instances, schema)

    def group(self, gid: str) -> Group:
        try:
            return self.groups[gid]
        except KeyError:
            raise AuditError(f"no group {gid!r} in this report's lattice") from None


def build_app(
    store: ReportStore,
    *,
    data_root: str | None = None,
    token: str | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="fairlens report service")
    root = Path(data_root) if data_root else None

    contexts: dict[str, AuditContext] = {}
    context_guard = threading.Lock()
    inflight: dict[tuple[str, str], asyncio.Lock] = {}
    inflight_guard = asyncio.Lock()

    def get_report(report_id: str) -> AuditReport:
        if not store.exists(report_id):
            raise _NotFound(f"no report {report_id!r}")
        return store.load(report_id)

    def get_context(report_id: str) -> AuditContext:
        # Blocking: call from worker threads only.
        with context_guard:
            context = contexts.get(report_id)
            if context is None:
                context = AuditContext(store.load(report_id), root, token)
                contexts[report_id] = context
            return context

    class _NotFound(Exception):
        pass

    @app.exception_handler(_NotFound)
    async def on_not_found(request: Request, exc: _NotFound):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(AuditError)
    async def on_audit_error(request: Request, exc: AuditError):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(BlackBoxError)
    async def on_blackbox_error(request: Request, exc: BlackBoxError):
        return JSONResponse(status_code=502, content={"error": str(exc)})

    @app.exception_handler(FairLensError)
    async def on_fairlens_error(request: Request, exc: FairLensError):
        return JSONResponse(status_code=502, content={"error": str(exc)})

    @app.get("/reports")
    async def list_reports():
        return store.list_reports()

    @app.get("/reports/{report_id}")
    async def get_full_report(report_id: str):
        return get_report(report_id).to_json()

    @app.get("/reports/{report_id}/scatter")
    async def get_scatter(report_id: str):
        return get_report(report_id).scatter

    @app.get("/reports/{report_id}/groups")
    async def get_groups(report_id: str):
        return get_report(report_id).ranking

    @app.get("/reports/{report_id}/groups/{gid}/inspection")
    async def get_inspection(report_id: str, gid: str):
        report = get_report(report_id)
        cached = report.inspections.get(gid)
        if cached is not None:
            return cached
        if not any(row["group"] == gid for row in report.ranking):
            raise _NotFound(f"no group {gid!r} in report {report_id}")

        def compute() -> dict:
            context = get_context(report_id)
            group = context.group(gid)
            payload = inspect_group(
                group.members, gid, context.descriptions, context.config.freq_mode
            ).to_json()
            store.put_inspection(report_id, gid, payload)
            return payload

        return await run_in_threadpool(compute)

    @app.post("/reports/{report_id}/explain")
    async def post_explain(report_id: str, body: ExplainRequest):
        if body.direction not in DIRECTIONS:
            raise AuditError(f"direction must be one of {DIRECTIONS}")
        report = get_report(report_id)
        if not any(row["group"] == body.group for row in report.ranking):
            raise _NotFound(f"no group {body.group!r} in report {report_id}")
        key = explanation_key(body.group, body.code, body.direction)
        cached = report.explanations.get(key)
        if cached is not None:
            return cached

        async with inflight_guard:
            lock = inflight.setdefault((report_id, key), asyncio.Lock())
        async with lock:
            cached = store.get_explanation(report_id, key)
            if cached is not None:  # a coalesced duplicate: first caller filled it
                return cached

            def compute() -> dict:
                context = get_context(report_id)
                if context.ontology is None:
                    raise DataError(
                        "explanations require the ontology file recorded at audit time"
                    )
                group = context.group(body.group)
                result = explain_group(
                    group.members,
                    body.group,
                    body.code,
                    body.direction,
                    context.blackbox,
                    context.ontology,
                    context.config.explain,
                    seed=context.config.seed,
                ).to_json()
                store.put_explanation(report_id, key, result)
                return result

            return await run_in_threadpool(compute)

    if ui_dir:
        ui_path = Path(ui_dir)
        if not ui_path.is_dir():
            raise DataError(f"UI directory {ui_dir!r} does not exist")
        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")

    return app
