"""Audit orchestration and the persisted report artifact.

``run_audit`` wires the pipeline: build prediction instances, query the black
box, optionally inject a planted bias (test fixtures), compute global recalls,
stratify into the condition-set lattice, score and rank groups, and inspect
the top-ranked ones. The result is a JSON-serializable ``AuditReport`` stored
in a directory of content-addressed files; explanations and non-top
inspections are derived caches appended to the report file on demand.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .blackbox import BlackBoxAdapter, PredictionInstance, make_instances, predict_instances
from .data_model import (
    AttributeSchema,
    CodeGroupMap,
    CodeOntology,
    PatientRecord,
    dataset_hash,
)
from .disparity import metric_from_name, recall_at_k, score_and_rank
from .errors import AuditError, DataError
from .explain import ExplainConfig
from .inspection import inspect_group
from .strata import Group, enumerate_lattice, stratify
from .synth import BiasSpec, apply_bias

REPORT_VERSION = 1


@dataclass(frozen=True)
class AuditConfig:
    seed: int
    metric: str = "tv"
    ground: str = "unit"
    min_group_size: int = 10
    inspect_top: int = 10
    freq_mode: str = "occurrence"
    recall_ks: tuple[int, ...] = (10, 20, 30)
    declared_recalls: Mapping[int, float] = field(default_factory=dict)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    threads: int = 1

    def validate(self) -> None:
        if self.min_group_size < 1 or self.inspect_top < 1 or self.threads < 1:
            raise DataError("min_group_size, inspect_top and threads must be >= 1")
        if any(k < 1 for k in self.recall_ks):
            raise DataError("recall ks must be >= 1")
        for k in self.declared_recalls:
            if k not in self.recall_ks:
                raise DataError(f"declared recall for k={k} has no matching recall k")
        self.explain.validate()

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "metric": self.metric,
            "ground": self.ground,
            "min_group_size": self.min_group_size,
            "inspect_top": self.inspect_top,
            "freq_mode": self.freq_mode,
            "recall_ks": list(self.recall_ks),
            "declared_recalls": {str(k): v for k, v in self.declared_recalls.items()},
            "explain": {
                "n_samples": self.explain.n_samples,
                "p_drop": self.explain.p_drop,
                "p_swap": self.explain.p_swap,
                "max_depth": self.explain.max_depth,
                "min_leaf": self.explain.min_leaf,
                "max_instances": self.explain.max_instances,
                "fidelity_floor": self.explain.fidelity_floor,
                "encoding": self.explain.encoding,
            },
            "threads": self.threads,
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "AuditConfig":
        known = {
            "seed", "metric", "ground", "min_group_size", "inspect_top",
            "freq_mode", "recall_ks", "declared_recalls", "explain", "threads",
        }
        unknown = set(payload) - known
        if unknown:
            raise DataError(f"unknown audit config keys: {sorted(unknown)}")
        if "seed" not in payload:
            raise DataError("audit config requires an explicit seed")
        try:
            explain = ExplainConfig(**payload.get("explain", {}))
        except TypeError as exc:
            raise DataError(f"bad explain config: {exc}") from None
        return cls(
            seed=int(payload["seed"]),
            metric=payload.get("metric", "tv"),
            ground=payload.get("ground", "unit"),
            min_group_size=int(payload.get("min_group_size", 10)),
            inspect_top=int(payload.get("inspect_top", 10)),
            freq_mode=payload.get("freq_mode", "occurrence"),
            recall_ks=tuple(int(k) for k in payload.get("recall_ks", (10, 20, 30))),
            declared_recalls={
                int(k): float(v) for k, v in payload.get("declared_recalls", {}).items()
            },
            explain=explain,
            threads=int(payload.get("threads", 1)),
        )


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def explanation_key(group: str, code: str, direction: str) -> str:
    return f"{group}|{code}|{direction}"


@dataclass
class AuditReport:
    """The full audit artifact; explanations/extra inspections are caches."""

    metadata: dict
    recalls: list[dict]
    scatter: list[dict]
    ranking: list[dict]
    excluded: list[dict]
    inspections: dict[str, dict]
    explanations: dict[str, dict] = field(default_factory=dict)

    @property
    def report_id(self) -> str:
        core = {
            "metadata": {k: v for k, v in self.metadata.items() if k != "created"},
            "recalls": self.recalls,
            "scatter": self.scatter,
            "ranking": self.ranking,
            "excluded": self.excluded,
        }
        return hashlib.sha256(_canonical(core).encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "id": self.report_id,
            "metadata": self.metadata,
            "recalls": self.recalls,
            "scatter": self.scatter,
            "ranking": self.ranking,
            "excluded": self.excluded,
            "inspections": self.inspections,
            "explanations": self.explanations,
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "AuditReport":
        if payload.get("version") != REPORT_VERSION:
            raise DataError(f"unsupported report version {payload.get('version')!r}")
        return cls(
            metadata=dict(payload["metadata"]),
            recalls=list(payload["recalls"]),
            scatter=list(payload["scatter"]),
            ranking=list(payload["ranking"]),
            excluded=list(payload["excluded"]),
            inspections=dict(payload["inspections"]),
            explanations=dict(payload.get("explanations", {})),
        )


def build_instances(
    patients: Sequence[PatientRecord],
    bb: BlackBoxAdapter,
    schema: AttributeSchema,
    group_map: CodeGroupMap,
    config: AuditConfig,
    bias: BiasSpec | None = None,
) -> list[PredictionInstance]:
    """Instances with predictions attached (and any planted bias replayed)."""
    if not patients:
        raise DataError("no patients to audit")
    instances = make_instances(patients, group_map)
    if not instances:
        raise DataError("no predictable visits (all histories too short)")
    need_k = max(len(inst.truth) for inst in instances)
    if config.recall_ks:
        need_k = max(need_k, max(config.recall_ks))
    instances = predict_instances(bb, instances, top_k=need_k)
    if bias is not None:
        bias.validate(schema, group_map)
        by_id = {p.patient_id: p for p in patients}
        instances = apply_bias(instances, by_id, bias, seed=config.seed)
    return instances


def run_audit(
    patients: Sequence[PatientRecord],
    bb: BlackBoxAdapter,
    schema: AttributeSchema,
    group_map: CodeGroupMap,
    config: AuditConfig,
    *,
    descriptions: Mapping[str, str] | None = None,
    ontology: CodeOntology | None = None,
    bias: BiasSpec | None = None,
    paths: Mapping[str, str] | None = None,
) -> AuditReport:
    """Run the full pipeline and assemble the report."""
    config.validate()
    metric = metric_from_name(config.metric, config.ground, ontology)
    instances = build_instances(patients, bb, schema, group_map, config, bias)

    recalls = [
        {
            "k": k,
            "declared": config.declared_recalls.get(k),
            "observed": recall_at_k(instances, k),
        }
        for k in config.recall_ks
    ]

    conditions = enumerate_lattice(schema)
    groups = stratify(patients, instances, conditions)
    scores, small = score_and_rank(groups, metric, config.min_group_size)

    ranking = [
        {
            "rank": rank,
            "group": s.condition_text,
            "size": s.size,
            "raw": s.raw,
            "normalized": s.normalized,
        }
        for rank, s in enumerate(scores, start=1)
    ]
    scatter = sorted(
        (
            {"group": s.condition_text, "size": s.size,
             "raw": s.raw, "normalized": s.normalized}
            for s in scores
        ),
        key=lambda row: row["group"],
    )
    excluded = [{"group": g.gid, "size": g.size} for g in small]

    inspections = {
        s.condition_text: inspect_group(
            s.group.members, s.condition_text, descriptions, config.freq_mode
        ).to_json()
        for s in scores[: config.inspect_top]
    }

    metadata = {
        "version": REPORT_VERSION,
        "created": datetime.now(timezone.utc).isoformat(),
        "dataset_hash": dataset_hash(patients),
        "n_patients": len(patients),
        "n_instances": len(instances),
        "n_groups_total": len(groups),
        "blackbox": getattr(bb, "name", bb.__class__.__name__),
        "schema": schema.to_json(),
        "config": config.to_json(),
        "bias": bias.to_json() if bias is not None else None,
        "paths": dict(paths) if paths else {},
    }
    return AuditReport(
        metadata=metadata,
        recalls=recalls,
        scatter=scatter,
        ranking=ranking,
        excluded=excluded,
        inspections=inspections,
    )


def groups_by_id(
    patients: Sequence[PatientRecord],
    instances: Sequence[PredictionInstance],
    schema: AttributeSchema,
) -> dict[str, Group]:
    """Rebuild the lattice grouping keyed by condition text (serve-time)."""
    groups = stratify(patients, instances, enumerate_lattice(schema))
    return {g.gid: g for g in groups}


class ReportStore:
    """Directory of content-addressed report files with cache append."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, report_id: str) -> Path:
        if not report_id.isalnum():
            raise DataError(f"malformed report id {report_id!r}")
        return self.root / f"{report_id}.json"

    def _write(self, path: Path, payload: dict) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                # Key order is semantic in metadata["schema"] (attribute order
                # drives condition-text normalization), so never sort here.
                json.dump(payload, fh, indent=1)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def save(self, report: AuditReport) -> str:
        report_id = report.report_id
        with self._lock:
            self._write(self._path(report_id), report.to_json())
        return report_id

    def exists(self, report_id: str) -> bool:
        return self._path(report_id).exists()

    def load(self, report_id: str) -> AuditReport:
        path = self._path(report_id)
        if not path.exists():
            raise DataError(f"no report {report_id!r} in {self.root}")
        with open(path, encoding="utf-8") as fh:
            return AuditReport.from_json(json.load(fh))

    def list_reports(self) -> list[dict]:
        out = []
        for path in sorted(self.root.glob("*.json")):
            try:
                with open(path, encoding="utf-8") as fh:
                    payload = json.load(fh)
                out.append(
                    {
                        "id": payload["id"],
                        "created": payload["metadata"].get("created"),
                        "metric": payload["metadata"]["config"]["metric"],
                        "n_groups": len(payload["ranking"]),
                        "n_patients": payload["metadata"].get("n_patients"),
                    }
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"corrupt report file {path}: {exc}") from exc
        return out

    def _append(self, report_id: str, section: str, key: str, payload: dict) -> None:
        with self._lock:
            report = self.load(report_id)
            getattr(report, section)[key] = payload
            self._write(self._path(report_id), report.to_json())

    def put_explanation(self, report_id: str, key: str, payload: dict) -> None:
        self._append(report_id, "explanations", key, payload)

    def put_inspection(self, report_id: str, gid: str, payload: dict) -> None:
        self._append(report_id, "inspections", gid, payload)

    def get_explanation(self, report_id: str, key: str) -> dict | None:
        return self.load(report_id).explanations.get(key)


def render_recall_table(recalls: Iterable[Mapping]) -> str:
    """Declared-vs-observed recall comparison as fixed-width text rows."""
    lines = [f"{'':12}" + "".join(f"@{row['k']:<9}" for row in recalls)]
    declared = "".join(
        f"{row['declared']:<10.3f}" if row.get("declared") is not None else f"{'-':<10}"
        for row in recalls
    )
    observed = "".join(f"{row['observed']:<10.3f}" for row in recalls)
    lines.append(f"{'Declared':12}" + declared)
    lines.append(f"{'On audit':12}" + observed)
    return "\n".join(line.rstrip() for line in lines)
