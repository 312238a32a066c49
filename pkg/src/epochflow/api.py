"""Stateless HTTP query service over stored runs.

Wire conventions (see README for the full schema reference):

* epochs are 1-based inclusive on the wire and 0-based in the engine;
* class selections travel as label lists; responses always include the Other
  bin, possibly empty;
* bins serialize as ``{"class": "<label>"}`` or ``{"other": true}``; band
  lookups accept a class label or the token ``Other`` (a class literally
  labeled Other takes precedence);
* difficulty measures serialize as full-precision floats and accept the
  aliases S/V/F anywhere a measure name is expected.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any, Mapping

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .core import BinId, ClassSelection, EpochRange, OTHER_BIN, TrainingRun, build_run
from .errors import (
    EngineError,
    InvalidRegexError,
    InvalidTransitionError,
    InvalidWeightsError,
    NotFoundError,
    ParseError,
    SchemaError,
    UnknownAttributeError,
    UnknownInstanceError,
    ValidationError,
)
from .flow import FlowFrame, band_members, compute_flow, glyph_layout, trace
from .ingest import RunStore, parse_run_document
from .metrics import score_all
from .table import (
    ClassEquals,
    CombinedSort,
    EverPredicted,
    HasIncorrect,
    NumericRange,
    SequenceRegex,
    SortKey,
    TableMode,
    TablePage,
    TableSpec,
    confusion_summary,
    query_table,
)

DEFAULT_MAX_BODY_BYTES = 64 * 1024 * 1024


class RequestDecodeError(EngineError):
    """A query parameter or request body could not be decoded at all."""


_ERROR_CODES: tuple[tuple[type[EngineError], str, int], ...] = (
    (RequestDecodeError, "bad_request", 400),
    (NotFoundError, "not_found", 404),
    (UnknownInstanceError, "not_found", 404),
    (ParseError, "unprocessable", 422),
    (SchemaError, "unprocessable", 422),
    (ValidationError, "unprocessable", 422),
    (InvalidRegexError, "unprocessable", 422),
    (InvalidWeightsError, "unprocessable", 422),
    (UnknownAttributeError, "unprocessable", 422),
    (InvalidTransitionError, "unprocessable", 422),
)


def error_payload(exc: EngineError) -> tuple[int, dict[str, Any]]:
    for kind, code, status in _ERROR_CODES:
        if isinstance(exc, kind):
            return status, {"error": {"code": code, "message": str(exc)}}
    return 500, {"error": {"code": "internal", "message": str(exc)}}


# ---------------------------------------------------------------------------
# parameter decoding (wire -> engine)
# ---------------------------------------------------------------------------


def _decode_epoch(value: str | None, name: str) -> int | None:
    if value is None or value == "":
        return None
    try:
        epoch = int(value)
    except ValueError:
        raise RequestDecodeError(f"{name} must be an integer epoch, got {value!r}") from None
    if epoch < 1:
        raise RequestDecodeError(f"{name} is 1-based and must be >= 1, got {epoch}")
    return epoch


def decode_range(run: TrainingRun, from_param: str | None, to_param: str | None) -> EpochRange:
    first = _decode_epoch(from_param, "from")
    last = _decode_epoch(to_param, "to")
    return EpochRange(
        (first - 1) if first is not None else 0,
        (last - 1) if last is not None else run.epoch_count - 1,
    )


def decode_selection(run: TrainingRun, classes_param: str | list[str] | None) -> ClassSelection:
    if classes_param is None or classes_param == "":
        return ClassSelection.all_classes(run.class_count)
    labels = (
        [part for part in classes_param.split(",") if part != ""]
        if isinstance(classes_param, str)
        else list(classes_param)
    )
    if not labels:
        return ClassSelection.all_classes(run.class_count)
    return ClassSelection(selected=tuple(run.class_index(label) for label in labels))


def decode_filter_ids(filter_param: str | None) -> list[str] | None:
    if filter_param is None or filter_param == "":
        return None
    return [part for part in filter_param.split(",") if part != ""]


def decode_bin(run: TrainingRun, sel: ClassSelection, value: str, name: str) -> BinId:
    if value in run.class_labels:
        return BinId(run.class_index(value))
    if value == "Other":
        return OTHER_BIN
    raise RequestDecodeError(f"{name} must be a class label or 'Other', got {value!r}")


# ---------------------------------------------------------------------------
# result encoding (engine -> wire)
# ---------------------------------------------------------------------------


def _encode_fraction(value: Fraction) -> float:
    return float(value)


def encode_bin(bin_id: BinId, run: TrainingRun) -> dict[str, Any]:
    if bin_id.is_other:
        return {"other": True}
    return {"class": run.class_labels[bin_id.class_idx]}


def encode_flow_frame(frame: FlowFrame, run: TrainingRun) -> dict[str, Any]:
    return {
        "run_id": frame.run_id,
        "from": frame.window.first + 1,
        "to": frame.window.last + 1,
        "instance_count": frame.instance_count,
        "bins": [encode_bin(b, run) for b in frame.bins],
        "distributions": [
            {
                "epoch": epoch + 1,
                "counts": [
                    {"correct": c.correct, "incorrect": c.incorrect} for c in distribution
                ],
            }
            for epoch, distribution in zip(frame.window.epochs(), frame.distributions)
        ],
        "transitions": [
            {
                "from_epoch": epoch + 1,
                "to_epoch": epoch + 2,
                "counts": [list(row) for row in matrix],
            }
            for epoch, matrix in zip(frame.window.transition_starts(), frame.transitions)
        ],
    }


def encode_table_page(page: TablePage, run: TrainingRun) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "mode": page.mode.value,
        "total": page.total,
        "classes": list(run.class_labels),
    }
    if page.mode is TableMode.GROUP_SUMMARY:
        payload["groups"] = [
            {
                "key": run.class_labels[group.key],
                "size": group.size,
                "prediction_histogram": list(group.prediction_histogram),
                "measures": {
                    name: {
                        "min": summary.minimum,
                        "q1": summary.q1,
                        "median": summary.median,
                        "q3": summary.q3,
                        "max": summary.maximum,
                    }
                    for name, summary in group.measure_summaries.items()
                },
            }
            for group in page.groups
        ]
    else:
        payload["rows"] = [
            {
                "instance_id": row.instance_id,
                "payload_ref": row.payload_ref,
                "true_class": row.true_class,
                "misclassification": _encode_fraction(row.misclassification),
                "variability": _encode_fraction(row.variability),
                "frequency": _encode_fraction(row.frequency),
                "prediction_sequence": list(row.prediction_sequence),
                "correctness_sequence": [mark.value for mark in row.correctness_sequence],
                "correctness_histogram": {
                    "correct": row.correctness_histogram.correct,
                    "incorrect": row.correctness_histogram.incorrect,
                    "other": row.correctness_histogram.other,
                },
            }
            for row in page.rows
        ]
    return payload


def decode_table_spec(run: TrainingRun, body: Mapping[str, Any]) -> TableSpec:
    if not isinstance(body, Mapping):
        raise SchemaError("table spec must be a JSON object")
    window = decode_range(
        run,
        str(body["from"]) if "from" in body and body["from"] is not None else None,
        str(body["to"]) if "to" in body and body["to"] is not None else None,
    )
    sel = decode_selection(run, body.get("classes"))

    sort_raw = body.get("sort")
    sort: tuple[SortKey, ...] | CombinedSort
    if sort_raw is None:
        sort = ()
    elif isinstance(sort_raw, Mapping) and "combined" in sort_raw:
        combined = sort_raw["combined"]
        if not isinstance(combined, Mapping) or "weights" not in combined:
            raise SchemaError("combined sort needs a weights object", path="sort.combined")
        sort = CombinedSort(
            weights=dict(combined["weights"]),
            directions=dict(combined.get("directions") or {}),
        )
    elif isinstance(sort_raw, list):
        keys = []
        for position, entry in enumerate(sort_raw):
            if not isinstance(entry, Mapping) or "by" not in entry:
                raise SchemaError("sort entries need a 'by' attribute", path=f"sort[{position}]")
            keys.append(SortKey(entry["by"], entry.get("direction", "desc")))
        sort = tuple(keys)
    else:
        raise SchemaError("sort must be a list of keys or a combined object", path="sort")

    filters = []
    for position, entry in enumerate(body.get("filters") or []):
        path = f"filters[{position}]"
        if not isinstance(entry, Mapping) or "type" not in entry:
            raise SchemaError("filter entries need a 'type'", path=path)
        kind = entry["type"]
        if kind == "numeric_range":
            filters.append(
                NumericRange(entry.get("attribute", "misclassification"), entry.get("lo"), entry.get("hi"))
            )
        elif kind == "class_equals":
            filters.append(ClassEquals(entry.get("attribute", "true_class"), entry["value"]))
        elif kind == "sequence_regex":
            filters.append(SequenceRegex(entry["pattern"]))
        elif kind == "ever_predicted":
            filters.append(EverPredicted(entry["value"]))
        elif kind == "has_incorrect":
            filters.append(HasIncorrect(bool(entry.get("flag", True))))
        else:
            raise SchemaError(f"unknown filter type {kind!r}", path=path)

    mode_raw = body.get("mode", "full")
    try:
        mode = TableMode(mode_raw)
    except ValueError:
        raise SchemaError(f"unknown table mode {mode_raw!r}", path="mode") from None

    limit = body.get("limit")
    offset = body.get("offset", 0)
    if not isinstance(offset, int) or (limit is not None and not isinstance(limit, int)):
        raise SchemaError("offset and limit must be integers", path="offset")

    return TableSpec(
        window=window,
        sel=sel,
        sort=sort,
        filters=tuple(filters),
        group_by=body.get("group_by"),
        mode=mode,
        offset=offset,
        limit=limit,
    )


# ---------------------------------------------------------------------------
# application
# ---------------------------------------------------------------------------


def create_app(store: RunStore, max_body_bytes: int = DEFAULT_MAX_BODY_BYTES) -> FastAPI:
    app = FastAPI(title="epochflow", version="0.1.0", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(EngineError)
    async def engine_error_handler(_request: Request, exc: EngineError) -> JSONResponse:
        status, payload = error_payload(exc)
        return JSONResponse(status_code=status, content=payload)

    def load(run_id: str) -> TrainingRun:
        return store.load_run(run_id)

    async def read_body(request: Request) -> bytes:
        declared = request.headers.get("content-length")
        if declared is not None and declared.isdigit() and int(declared) > max_body_bytes:
            raise RequestDecodeError(f"request body exceeds limit of {max_body_bytes} bytes")
        body = await request.body()
        if len(body) > max_body_bytes:
            raise RequestDecodeError(f"request body exceeds limit of {max_body_bytes} bytes")
        return body

    @app.post("/runs", status_code=201)
    async def post_run(request: Request) -> dict[str, Any]:
        doc = parse_run_document(await read_body(request))
        run = build_run(doc)
        run_id = store.store_run(doc)
        return {"run_id": run_id, "m": run.instance_count, "n": run.class_count, "E": run.epoch_count}

    @app.get("/runs")
    async def list_runs() -> dict[str, Any]:
        return {
            "runs": [
                {
                    "run_id": entry.run_id,
                    "metadata": dict(entry.metadata),
                    "m": entry.instance_count,
                    "n": entry.class_count,
                    "E": entry.epoch_count,
                    "created_at": entry.created_at,
                }
                for entry in store.list_runs()
            ]
        }

    @app.get("/runs/{run_id}")
    async def get_run(run_id: str) -> dict[str, Any]:
        run = load(run_id)
        return {
            "run_id": run.run_id,
            "metadata": dict(run.metadata),
            "m": run.instance_count,
            "n": run.class_count,
            "E": run.epoch_count,
            "classes": list(run.class_labels),
        }

    @app.get("/runs/{run_id}/flow")
    async def flow_endpoint(run_id: str, request: Request) -> dict[str, Any]:
        run = load(run_id)
        params = request.query_params
        sel = decode_selection(run, params.get("classes"))
        window = decode_range(run, params.get("from"), params.get("to"))
        ids = decode_filter_ids(params.get("filter"))
        frame = compute_flow(run, sel, window, instance_filter=ids)
        return encode_flow_frame(frame, run)

    @app.get("/runs/{run_id}/flow/band")
    async def band_endpoint(run_id: str, request: Request) -> dict[str, Any]:
        run = load(run_id)
        params = request.query_params
        sel = decode_selection(run, params.get("classes"))
        window = decode_range(run, params.get("from"), params.get("to"))
        epoch = _decode_epoch(params.get("epoch"), "epoch")
        if epoch is None:
            raise RequestDecodeError("epoch parameter is required")
        from_raw, to_raw = params.get("fromBin"), params.get("toBin")
        if from_raw is None or to_raw is None:
            raise RequestDecodeError("fromBin and toBin parameters are required")
        members = band_members(
            run,
            sel,
            window,
            epoch - 1,
            decode_bin(run, sel, from_raw, "fromBin"),
            decode_bin(run, sel, to_raw, "toBin"),
            instance_filter=decode_filter_ids(params.get("filter")),
        )
        return {
            "epoch": epoch,
            "from_bin": from_raw,
            "to_bin": to_raw,
            "instance_ids": sorted(members),
        }

    @app.get("/runs/{run_id}/glyphs")
    async def glyphs_endpoint(run_id: str, request: Request) -> dict[str, Any]:
        run = load(run_id)
        params = request.query_params
        sel = decode_selection(run, params.get("classes"))
        window = decode_range(run, params.get("from"), params.get("to"))
        rank_by = params.get("rankBy") or "misclassification"
        glyphs = glyph_layout(
            run, sel, window, rank_by=rank_by, instance_filter=decode_filter_ids(params.get("filter"))
        )
        return {
            "run_id": run.run_id,
            "rank_by": rank_by,
            "glyphs": [
                {
                    "instance_id": g.instance_id,
                    "epoch": g.epoch + 1,
                    "bin": encode_bin(g.bin, run),
                    "category": g.category.value,
                    "rank_measure": _encode_fraction(g.rank_measure),
                    "slot": g.slot.value,
                    "vertical_order": g.vertical_order,
                }
                for g in glyphs
            ],
        }

    @app.get("/runs/{run_id}/traces")
    async def traces_endpoint(run_id: str, request: Request) -> dict[str, Any]:
        run = load(run_id)
        params = request.query_params
        ids_raw = params.get("ids")
        if not ids_raw:
            raise RequestDecodeError("ids parameter is required")
        sel = decode_selection(run, params.get("classes"))
        window = decode_range(run, params.get("from"), params.get("to"))
        segments = trace(run, sel, window, [p for p in ids_raw.split(",") if p])
        return {
            "run_id": run.run_id,
            "segments": [
                {
                    "instance_id": s.instance_id,
                    "from_epoch": s.from_epoch + 1,
                    "from_bin": encode_bin(s.from_bin, run),
                    "to_bin": encode_bin(s.to_bin, run),
                    "correct": s.correct,
                }
                for s in segments
            ],
        }

    @app.post("/runs/{run_id}/table")
    async def table_endpoint(run_id: str, request: Request) -> dict[str, Any]:
        run = load(run_id)
        body = await read_body(request)
        try:
            decoded = json.loads(body.decode("utf-8") or "{}")
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None
        spec = decode_table_spec(run, decoded)
        return encode_table_page(query_table(run, spec), run)

    @app.get("/runs/{run_id}/confusion")
    async def confusion_endpoint(run_id: str, request: Request) -> dict[str, Any]:
        run = load(run_id)
        params = request.query_params
        window = decode_range(run, params.get("from"), params.get("to"))
        matrix = confusion_summary(run, window)
        return {
            "run_id": run.run_id,
            "from": window.first + 1,
            "to": window.last + 1,
            "classes": list(run.class_labels),
            "matrix": matrix.tolist(),
        }

    @app.get("/runs/{run_id}/metrics")
    async def metrics_endpoint(run_id: str, request: Request) -> dict[str, Any]:
        run = load(run_id)
        params = request.query_params
        window = decode_range(run, params.get("from"), params.get("to"))
        scores = score_all(run, window)
        return {
            "run_id": run.run_id,
            "from": window.first + 1,
            "to": window.last + 1,
            "scores": {
                instance_id: {
                    "misclassification": _encode_fraction(triple.misclassification),
                    "variability": _encode_fraction(triple.variability),
                    "frequency": _encode_fraction(triple.frequency),
                }
                for instance_id, triple in scores.by_id.items()
            },
        }

    return app
