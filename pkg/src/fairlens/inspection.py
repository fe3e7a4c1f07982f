"""Per-group systematic-error analysis.

For each grouped code the misdiagnosis score is the code's relative frequency
in the black-box predicted sets minus its relative frequency in the ground
truth: positive means over-predicted, negative under-predicted.
"""

from __future__ import annotations

import csv
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .blackbox import PredictionInstance
from .disparity import code_distribution, predicted_set
from .errors import AuditError, DataError

FREQ_MODES = ("occurrence", "incidence")


@dataclass(frozen=True)
class MisdiagnosisEntry:
    code: str
    description: str
    pred_freq: float
    true_freq: float

    @property
    def score(self) -> float:
        return self.pred_freq - self.true_freq

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "description": self.description,
            "pred_freq": self.pred_freq,
            "true_freq": self.true_freq,
            "score": self.score,
        }


@dataclass(frozen=True)
class InspectionReport:
    group: str
    freq_mode: str
    entries: tuple[MisdiagnosisEntry, ...]
    top_over: tuple[MisdiagnosisEntry, ...]
    top_under: tuple[MisdiagnosisEntry, ...]

    def to_json(self) -> dict:
        return {
            "group": self.group,
            "freq_mode": self.freq_mode,
            "entries": [e.to_json() for e in self.entries],
            "top_over": [e.to_json() for e in self.top_over],
            "top_under": [e.to_json() for e in self.top_under],
        }


def load_descriptions(path: str) -> dict[str, str]:
    """Optional `code,description` CSV; absent codes fall back to the token."""
    out: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["code", "description"]:
            raise DataError(f"{path}: expected header 'code,description'")
        for row in reader:
            if not row:
                continue
            if len(row) < 2:
                raise DataError(f"{path}: malformed row {row!r}")
            out[row[0].strip()] = row[1].strip()
    return out


def _incidence(instances: Sequence[PredictionInstance], source: str) -> dict[str, float]:
    # Fraction of visits whose set contains the code; does NOT sum to 1.
    counts: dict[str, int] = {}
    for inst in instances:
        codes = inst.truth if source == "truth" else predicted_set(inst)
        for code in codes:
            counts[code] = counts.get(code, 0) + 1
    n = len(instances)
    return {code: c / n for code, c in counts.items()}


def inspect_group(
    instances: Sequence[PredictionInstance],
    group_id: str = "*",
    descriptions: Mapping[str, str] | None = None,
    freq_mode: str = "occurrence",
    top_n: int = 3,
) -> InspectionReport:
    """Misdiagnosis scores over the union of predicted and true codes."""
    if not instances:
        raise AuditError(f"cannot inspect empty group {group_id}")
    if freq_mode not in FREQ_MODES:
        raise DataError(f"unknown freq mode {freq_mode!r}; expected one of {FREQ_MODES}")
    if freq_mode == "occurrence":
        pred = code_distribution(instances, "predicted")
        true = code_distribution(instances, "truth")
    else:
        pred = _incidence(instances, "predicted")
        true = _incidence(instances, "truth")
    descriptions = descriptions or {}
    entries = tuple(
        MisdiagnosisEntry(
            code=code,
            description=descriptions.get(code, code),
            pred_freq=pred.get(code, 0.0),
            true_freq=true.get(code, 0.0),
        )
        for code in sorted(set(pred) | set(true))
    )
    top_over = tuple(sorted(entries, key=lambda e: (-e.score, e.code))[:top_n])
    top_under = tuple(sorted(entries, key=lambda e: (e.score, e.code))[:top_n])
    return InspectionReport(
        group=group_id,
        freq_mode=freq_mode,
        entries=entries,
        top_over=top_over,
        top_under=top_under,
    )
