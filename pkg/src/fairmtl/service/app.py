"""FastAPI service wrapping the core package.

All endpoints are synchronous compute calls: the service loads corpus and
embedding files from its own filesystem (paths in the request), runs the
pipeline, and returns every artifact in the response body so clients can
persist them wherever they like.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..corpus import (
    AttributeSchema,
    SyntheticSpec,
    make_synthetic,
    render_corpus_csv,
    render_embeddings_txt,
)
from ..harness import METHODS, PipelineError, report_from_payload, run_method, sweep
from ..metrics import render_table, report_csv
from . import schemas

_CLIENT_ERRORS = (ValueError, PipelineError, FileNotFoundError, KeyError)


def create_app() -> FastAPI:
    app = FastAPI(title="fairmtl", version=__version__)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/methods", response_model=schemas.MethodsResponse)
    def methods() -> schemas.MethodsResponse:
        return schemas.MethodsResponse(
            methods=dict(METHODS),
            note=(
                "A -DW variant of any method is the same method id run with a "
                "debiased embedding file and dw=true; it only changes the inputs "
                "and the display name."
            ),
        )

    @app.post("/run", response_model=schemas.RunResponse)
    def run(request: schemas.RunRequest) -> schemas.RunResponse:
        try:
            result = run_method(request.to_config())
        except _CLIENT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        payload = result.to_payload()
        payload["report_csv"] = result.report_csv()
        payload["checkpoint"] = result.checkpoint
        return schemas.RunResponse(**payload)

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def run_sweep(request: schemas.SweepRequest) -> schemas.SweepResponse:
        try:
            cfg = schemas.RunRequest(
                **request.model_dump(by_alias=True, exclude={"parameter", "values", "repeats"})
            ).to_config()
            result = sweep(cfg, request.parameter, request.values, request.repeats)
        except _CLIENT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.SweepResponse(
            parameter=result.parameter, rows=result.rows, csv_text=result.csv_text
        )

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(request: schemas.SynthRequest) -> schemas.SynthResponse:
        try:
            schema = AttributeSchema.from_pairs(
                [(a.name, a.values) for a in request.attributes]
            )
            spec = SyntheticSpec(
                label_count=request.label_count,
                schema=schema,
                per_cell=request.per_cell,
                separation=request.separation,
                bias=request.bias,
                dimension=request.dimension,
                sigma=request.sigma,
                biased_labels=tuple(request.biased_labels),
                designated_combo=request.designated_combo,
                label_names=tuple(request.label_names) if request.label_names else None,
            )
            corpus = make_synthetic(spec, request.seed)
        except _CLIENT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.SynthResponse(
            corpus_csv=render_corpus_csv(corpus),
            embeddings_txt=render_embeddings_txt(corpus),
            n_instances=len(corpus),
            label_names=list(corpus.label_names),
            combination_count=schema.combination_count,
        )

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(request: schemas.ReportRequest) -> schemas.ReportResponse:
        try:
            entries = [report_from_payload(payload) for payload in request.results]
        except _CLIENT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=f"bad result payload: {exc}") from exc
        return schemas.ReportResponse(
            table=render_table(entries), csv_text=report_csv(entries)
        )

    return app
