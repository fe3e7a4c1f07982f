"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/pipeline error, 3 black-box
error. Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .blackbox import make_blackbox
from .data_model import (
    AttributeSchema,
    CodeGroupMap,
    CodeOntology,
    convert_csv_patients,
    dump_patients,
    load_patients,
)
from .errors import AuditError, BlackBoxError, DataError
from .inspection import load_descriptions
from .report import AuditConfig, AuditReport, ReportStore, run_audit
from .synth import (
    BiasSpec,
    GeneratorConfig,
    default_schema,
    generate,
    make_vocabularies,
)

BUNDLE_FILES = {
    "patients": "patients.jsonl",
    "schema": "schema.json",
    "group_map": "group_map.csv",
    "ontology": "ontology.tsv",
    "descriptions": "descriptions.csv",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI's contract says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="fairlens", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_synth = sub.add_parser("synth",
                             help="generate a synthetic data bundle")
    p_synth.add_argument("--out", required=True, help="bundle directory to create")
    p_synth.add_argument("--seed", type=int, help="generator seed")
    p_synth.add_argument("--patients", type=int, help="number of patients")
    p_synth.add_argument("--config", help="GeneratorConfig JSON file")
    p_synth.add_argument("--chapters", type=int, default=6)
    p_synth.add_argument("--groups-per-chapter", type=int, default=10)
    p_synth.add_argument("--fine-per-group", type=int, default=8)

    p_audit = sub.add_parser("audit", help="run a full audit")
    p_audit.add_argument("--data", help="bundle directory from `fairlens synth`")
    p_audit.add_argument("--patients", help="patients JSONL (overrides --data)")
    p_audit.add_argument("--schema", help="schema JSON (overrides --data)")
    p_audit.add_argument("--group-map", help="fine→group CSV (overrides --data)")
    p_audit.add_argument("--ontology", help="ontology TSV (overrides --data)")
    p_audit.add_argument("--descriptions", help="code descriptions CSV")
    p_audit.add_argument("--blackbox", default="mock:frequency",
                         help="mock:frequency | mock:planted:TRIGGER:BETA | "
                              "mock:uniform:SEED | http(s)://...")
    p_audit.add_argument("--config", help="AuditConfig JSON file")
    p_audit.add_argument("--seed", type=int, help="audit seed (required here or in --config)")
    p_audit.add_argument("--metric", choices=["tv", "wasserstein", "f1"],
                         help="disparity metric (recall@K also accepted)", metavar="METRIC")
    p_audit.add_argument("--ground", choices=["unit", "ontology"])
    p_audit.add_argument("--min-group-size", type=int)
    p_audit.add_argument("--inspect-top", type=int)
    p_audit.add_argument("--freq-mode", choices=["occurrence", "incidence"])
    p_audit.add_argument("--declared", help="declared recalls, e.g. 10=0.643,20=0.743")
    p_audit.add_argument("--bias", help="BiasSpec JSON file (planted-bias fixtures)")
    p_audit.add_argument("--threads", type=int)
    p_audit.add_argument("--out", help="report JSON output path")
    p_audit.add_argument("--store", help="report store directory (content-addressed)")

    p_inspect = sub.add_parser("inspect",
                               help="print a group's inspection from a report")
    p_inspect.add_argument("--report", required=True, help="report JSON path")
    p_inspect.add_argument("--group", required=True, help="condition-set text, e.g. gender=F")
    p_inspect.add_argument("--data", help="bundle directory override for recomputation")

    p_explain = sub.add_parser("explain",
                               help="explain a group/code misclassification")
    p_explain.add_argument("--report", required=True, help="report JSON path")
    p_explain.add_argument("--group", required=True)
    p_explain.add_argument("--code", required=True, help="focus code (grouped vocabulary)")
    p_explain.add_argument("--direction", choices=["over", "under"], default="over")
    p_explain.add_argument("--data", help="bundle directory override for recomputation")

    p_serve = sub.add_parser("serve", help="serve stored reports")
    p_serve.add_argument("--store", required=True, help="report store directory")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--data", help="bundle directory override")
    p_serve.add_argument("--ui", help="static UI directory to mount at /")

    p_convert = sub.add_parser("convert",
                               help="convert a patients CSV to JSONL")
    p_convert.add_argument("--csv", required=True)
    p_convert.add_argument("--schema", required=True)
    p_convert.add_argument("--out", required=True)

    return parser


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None


def _bundle_path(args, kind: str, required: bool) -> str | None:
    explicit = getattr(args, kind, None)
    if explicit:
        return explicit
    if args.data:
        candidate = Path(args.data) / BUNDLE_FILES[kind]
        if candidate.exists():
            return str(candidate)
        if required:
            raise DataError(f"bundle {args.data} is missing {BUNDLE_FILES[kind]}")
        return None
    if required:
        raise UsageError(f"--data or --{kind.replace('_', '-')} is required")
    return None


class UsageError(Exception):
    pass


def _cmd_synth(args) -> int:
    payload = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.patients is not None:
        payload["n_patients"] = args.patients
    if "seed" not in payload or "n_patients" not in payload:
        raise UsageError("synth requires --seed and --patients (or a --config providing them)")
    config = GeneratorConfig.from_json(payload)
    schema = default_schema()
    group_map, ontology = make_vocabularies(
        args.chapters, args.groups_per_chapter, args.fine_per_group
    )
    records = generate(config, schema, group_map)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_patients(records, out / BUNDLE_FILES["patients"])
    with open(out / BUNDLE_FILES["schema"], "w", encoding="utf-8") as fh:
        json.dump(schema.to_json(), fh, indent=1)  # key order = attribute order
    group_map.to_csv(out / BUNDLE_FILES["group_map"])
    ontology.to_tsv(out / BUNDLE_FILES["ontology"])
    manifest = {
        "bundle": str(out),
        "patients": len(records),
        "visits": sum(len(r.history) for r in records),
        "fine_codes": len(group_map.fine_codes),
        "grouped_codes": len(group_map.grouped_codes),
        "seed": config.seed,
    }
    json.dump(manifest, sys.stdout, indent=1)
    print()
    return 0


def _parse_declared(text: str) -> dict[int, float]:
    out: dict[int, float] = {}
    for part in text.split(","):
        if not part.strip():
            continue
        try:
            k, v = part.split("=")
            out[int(k.strip())] = float(v.strip())
        except ValueError:
            raise UsageError(f"bad --declared entry {part!r}; expected K=RECALL") from None
    return out


def _audit_config(args) -> AuditConfig:
    payload = _load_json(args.config) if args.config else {}
    overrides = {
        "seed": args.seed,
        "metric": args.metric,
        "ground": args.ground,
        "min_group_size": args.min_group_size,
        "inspect_top": args.inspect_top,
        "freq_mode": args.freq_mode,
        "threads": args.threads,
    }
    for key, value in overrides.items():
        if value is not None:
            payload[key] = value
    if args.declared:
        payload["declared_recalls"] = {
            str(k): v for k, v in _parse_declared(args.declared).items()
        }
    if "seed" not in payload:
        raise UsageError("audit requires --seed (or a --config providing one)")
    return AuditConfig.from_json(payload)


def _cmd_audit(args) -> int:
    if not args.out and not args.store:
        raise UsageError("audit requires --out and/or --store")
    config = _audit_config(args)
    paths = {
        kind: _bundle_path(args, kind, required=(kind in ("patients", "schema", "group_map")))
        for kind in BUNDLE_FILES
    }
    schema = AttributeSchema.from_json(_load_json(paths["schema"]))
    patients = load_patients(paths["patients"], schema)
    group_map = CodeGroupMap.from_csv(paths["group_map"])
    ontology = CodeOntology.from_tsv(paths["ontology"]) if paths["ontology"] else None
    descriptions = load_descriptions(paths["descriptions"]) if paths["descriptions"] else None
    bias = BiasSpec.from_json(_load_json(args.bias)) if args.bias else None
    token = os.environ.get("FAIRLENS_TOKEN")
    bb = make_blackbox(args.blackbox, patients, group_map, token)

    report = run_audit(
        patients, bb, schema, group_map, config,
        descriptions=descriptions, ontology=ontology, bias=bias,
        paths={k: v for k, v in paths.items() if v},
    )
    outcome = {"id": report.report_id, "groups": len(report.ranking)}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=1)
        outcome["out"] = args.out
    if args.store:
        ReportStore(args.store).save(report)
        outcome["store"] = args.store
    json.dump(outcome, sys.stdout, indent=1)
    print()
    return 0


def _report_context(args, report: AuditReport):
    from .service import AuditContext

    return AuditContext(report, Path(args.data) if args.data else None, None)


def _load_report(path: str) -> AuditReport:
    return AuditReport.from_json(_load_json(path))


def _save_report(path: str, report: AuditReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1)


def _cmd_inspect(args) -> int:
    report = _load_report(args.report)
    payload = report.inspections.get(args.group)
    if payload is None:
        if not any(row["group"] == args.group for row in report.ranking):
            raise AuditError(f"no group {args.group!r} in report {args.report}")
        from .inspection import inspect_group

        context = _report_context(args, report)
        group = context.group(args.group)
        payload = inspect_group(
            group.members, args.group, context.descriptions, context.config.freq_mode
        ).to_json()
        report.inspections[args.group] = payload
        _save_report(args.report, report)
    json.dump(payload, sys.stdout, indent=1, sort_keys=True)
    print()
    return 0


def _cmd_explain(args) -> int:
    from .explain import explain_group
    from .report import explanation_key

    report = _load_report(args.report)
    key = explanation_key(args.group, args.code, args.direction)
    payload = report.explanations.get(key)
    if payload is None:
        context = _report_context(args, report)
        if context.ontology is None:
            raise DataError("explanations require the audit's ontology file")
        group = context.group(args.group)
        payload = explain_group(
            group.members, args.group, args.code, args.direction,
            context.blackbox, context.ontology, context.config.explain,
            seed=context.config.seed,
        ).to_json()
        report.explanations[key] = payload
        _save_report(args.report, report)
    json.dump(payload, sys.stdout, indent=1, sort_keys=True)
    print()
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    store = ReportStore(args.store)
    if not store.list_reports():
        raise DataError(f"store {args.store} holds no reports; run `fairlens audit` first")
    app = build_app(
        store,
        data_root=args.data,
        token=os.environ.get("FAIRLENS_TOKEN"),
        ui_dir=args.ui,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_convert(args) -> int:
    schema = AttributeSchema.from_json(_load_json(args.schema))
    count = convert_csv_patients(args.csv, args.out, schema)
    json.dump({"out": args.out, "patients": count}, sys.stdout, indent=1)
    print()
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "audit": _cmd_audit,
    "inspect": _cmd_inspect,
    "explain": _cmd_explain,
    "serve": _cmd_serve,
    "convert": _cmd_convert,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fairlens: error: {exc}", file=sys.stderr)
        return 1
    except BlackBoxError as exc:
        print(f"fairlens: black-box error: {exc}", file=sys.stderr)
        return 3
    except (DataError, AuditError) as exc:
        print(f"fairlens: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fairlens: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
