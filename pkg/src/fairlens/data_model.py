"""Patients, visits, code vocabularies, code grouping and the code ontology.

File formats handled here:

* Patients: JSONL, one patient per line:
  ``{"patient_id": str, "attributes": {str: str}, "history": [{"codes": [str, ...]}, ...]}``
* Code group map: CSV with header ``fine_code,group_code``.
* Ontology: tab-separated edge list, one ``child<TAB>parent`` per line, with a
  single root node named ``ROOT``.

Everything is immutable after load and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import DataError

ROOT = "ROOT"

# Categorical age bands used when ingesting raw numeric ages. Band edges are
# lower-inclusive; ages 1-24 all fall in the first non-infant band.
AGE_BINS = ("0", "15-25", "25-45", "45-65", "65+")


def bin_age(age: float) -> str:
    if age < 0:
        raise DataError(f"negative age {age!r}")
    if age < 1:
        return "0"
    if age < 25:
        return "15-25"
    if age < 45:
        return "25-45"
    if age < 65:
        return "45-65"
    return "65+"


@dataclass(frozen=True)
class Visit:
    """One admission: a non-empty set of fine-grained codes."""

    codes: frozenset[str]

    def __post_init__(self):
        if not self.codes:
            raise DataError("visit has no codes")
        for code in self.codes:
            if not code or not isinstance(code, str):
                raise DataError(f"invalid code {code!r}")

    def sorted_codes(self) -> list[str]:
        return sorted(self.codes)


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    attributes: Mapping[str, str]
    history: tuple[Visit, ...]

    def __post_init__(self):
        if not self.patient_id:
            raise DataError("empty patient_id")
        if len(self.history) < 2:
            raise DataError(f"patient {self.patient_id}: history length < 2")


class AttributeSchema:
    """Ordered attribute names, each with an ordered list of admissible values."""

    def __init__(self, values_by_attribute: Mapping[str, Sequence[str]]):
        self._values: dict[str, tuple[str, ...]] = {}
        for attr, values in values_by_attribute.items():
            values = tuple(values)
            if len(set(values)) != len(values):
                raise DataError(f"attribute {attr!r}: duplicate values")
            for v in values:
                if "," in v or "=" in v:
                    raise DataError(
                        f"attribute {attr!r}: value {v!r} may not contain ',' or '='"
                    )
            if "," in attr or "=" in attr:
                raise DataError(f"attribute name {attr!r} may not contain ',' or '='")
            self._values[attr] = values

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(self._values)

    def values(self, attribute: str) -> tuple[str, ...]:
        try:
            return self._values[attribute]
        except KeyError:
            raise DataError(f"unknown attribute {attribute!r}") from None

    def __contains__(self, attribute: str) -> bool:
        return attribute in self._values

    def __eq__(self, other) -> bool:
        return isinstance(other, AttributeSchema) and self._values == other._values

    def validate_attributes(self, patient_id: str, attributes: Mapping[str, str]) -> None:
        for attr in self._values:
            if attr not in attributes:
                raise DataError(f"patient {patient_id}: missing attribute {attr!r}")
            value = attributes[attr]
            if value not in self._values[attr]:
                raise DataError(
                    f"patient {patient_id}: attribute {attr!r} has value {value!r} "
                    f"not in schema"
                )
        for attr in attributes:
            if attr not in self._values:
                raise DataError(f"patient {patient_id}: unknown attribute {attr!r}")

    def to_json(self) -> dict:
        return {attr: list(values) for attr, values in self._values.items()}

    @classmethod
    def from_json(cls, payload: Mapping[str, Sequence[str]]) -> "AttributeSchema":
        return cls(payload)


class CodeGroupMap:
    """Total map from the fine-grained vocabulary onto the grouped vocabulary."""

    def __init__(self, mapping: Mapping[str, str]):
        if not mapping:
            raise DataError("empty code group map")
        self._map = dict(mapping)
        fine = set(self._map)
        grouped = set(self._map.values())
        overlap = fine & grouped
        if overlap:
            raise DataError(
                f"codes in both vocabularies: {sorted(overlap)[:5]}"
            )
        self._fine = tuple(sorted(fine))
        self._grouped = tuple(sorted(grouped))

    @property
    def fine_codes(self) -> tuple[str, ...]:
        return self._fine

    @property
    def grouped_codes(self) -> tuple[str, ...]:
        return self._grouped

    def group(self, fine_code: str) -> str:
        try:
            return self._map[fine_code]
        except KeyError:
            raise DataError(f"code {fine_code!r} not in the fine-grained vocabulary") from None

    def group_codes_of(self, codes: Iterable[str]) -> frozenset[str]:
        mapping = self._map
        try:
            return frozenset(mapping[c] for c in codes)
        except KeyError as exc:
            raise DataError(f"code {exc.args[0]!r} not in the fine-grained vocabulary") from None

    def items(self):
        return self._map.items()

    @classmethod
    def from_csv(cls, path) -> "CodeGroupMap":
        mapping: dict[str, str] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["fine_code", "group_code"]:
                raise DataError(f"{path}: expected header 'fine_code,group_code'")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 2:
                    raise DataError(f"{path}:{lineno}: expected two columns")
                fine, grouped = row
                if fine in mapping:
                    raise DataError(f"{path}:{lineno}: duplicate fine code {fine!r}")
                mapping[fine] = grouped
        return cls(mapping)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fine_code", "group_code"])
            for fine in self._fine:
                writer.writerow([fine, self._map[fine]])


class CodeOntology:
    """Rooted tree over codes; gives Wu-Palmer style distances and siblings."""

    def __init__(self, parents: Mapping[str, str]):
        self._parent = dict(parents)
        if ROOT in self._parent:
            raise DataError(f"{ROOT} must not have a parent")
        self._children: dict[str, list[str]] = {ROOT: []}
        for child, parent in self._parent.items():
            self._children.setdefault(parent, []).append(child)
            self._children.setdefault(child, [])
        for node in self._children:
            if node != ROOT and node not in self._parent:
                raise DataError(f"node {node!r} is unreachable from {ROOT}")
        for kids in self._children.values():
            kids.sort()
        self._depth: dict[str, int] = {ROOT: 0}
        for node in self._parent:
            self._resolve_depth(node)

    def _resolve_depth(self, node: str) -> int:
        chain = []
        cursor = node
        while cursor not in self._depth:
            chain.append(cursor)
            cursor = self._parent.get(cursor)
            if cursor is None:
                raise DataError(f"node {chain[-1]!r} has no path to {ROOT}")
            if cursor in chain:
                raise DataError(f"ontology cycle through {cursor!r}")
        depth = self._depth[cursor]
        for item in reversed(chain):
            depth += 1
            self._depth[item] = depth
        return self._depth[node]

    def __contains__(self, code: str) -> bool:
        return code in self._depth

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(sorted(self._depth))

    def depth(self, code: str) -> int:
        self._require(code)
        return self._depth[code]

    def parent(self, code: str) -> str | None:
        self._require(code)
        return self._parent.get(code)

    def children(self, code: str) -> tuple[str, ...]:
        self._require(code)
        return tuple(self._children[code])

    def siblings(self, code: str) -> tuple[str, ...]:
        """Other children of the same parent (empty for the root)."""
        self._require(code)
        parent = self._parent.get(code)
        if parent is None:
            return ()
        return tuple(c for c in self._children[parent] if c != code)

    def _require(self, code: str) -> None:
        if code not in self._depth:
            raise DataError(f"code {code!r} not in ontology")

    def _ancestors(self, code: str) -> list[str]:
        chain = [code]
        while chain[-1] in self._parent:
            chain.append(self._parent[chain[-1]])
        return chain

    def lowest_common_ancestor(self, a: str, b: str) -> str:
        self._require(a)
        self._require(b)
        seen = set(self._ancestors(a))
        for node in self._ancestors(b):
            if node in seen:
                return node
        return ROOT

    def wu_palmer(self, a: str, b: str) -> float:
        """2*depth(lca) / (depth(a) + depth(b)); 1.0 on identical codes."""
        self._require(a)
        self._require(b)
        if a == b:
            return 1.0
        lca = self.lowest_common_ancestor(a, b)
        denom = self._depth[a] + self._depth[b]
        if denom == 0:
            return 1.0
        return 2.0 * self._depth[lca] / denom

    def distance(self, a: str, b: str) -> float:
        """1 - WuPalmer(a, b): symmetric, zero exactly on identical codes."""
        return 1.0 - self.wu_palmer(a, b)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]]) -> "CodeOntology":
        parents: dict[str, str] = {}
        for child, parent in edges:
            if child in parents and parents[child] != parent:
                raise DataError(f"node {child!r} has two parents")
            parents[child] = parent
        return cls(parents)

    @classmethod
    def from_tsv(cls, path) -> "CodeOntology":
        edges = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0] or not parts[1]:
                    raise DataError(f"{path}:{lineno}: expected 'child<TAB>parent'")
                edges.append((parts[0], parts[1]))
        if not edges:
            raise DataError(f"{path}: empty ontology")
        return cls.from_edges(edges)

    def to_tsv(self, path) -> None:
        with open(path, "w") as fh:
            for child in sorted(self._parent):
                fh.write(f"{child}\t{self._parent[child]}\n")


def ontology_distance(a: str, b: str, onto: CodeOntology) -> float:
    return onto.distance(a, b)


def _record_to_dict(record: PatientRecord) -> dict:
    return {
        "patient_id": record.patient_id,
        "attributes": {k: record.attributes[k] for k in sorted(record.attributes)},
        "history": [{"codes": v.sorted_codes()} for v in record.history],
    }


def record_to_json(record: PatientRecord) -> str:
    """Canonical single-line JSON: sorted keys, sorted codes, no whitespace."""
    return json.dumps(_record_to_dict(record), sort_keys=True, separators=(",", ":"))


def _record_from_dict(payload: dict, schema: AttributeSchema,
                      vocabulary: Iterable[str] | None = None) -> PatientRecord:
    try:
        patient_id = payload["patient_id"]
        raw_attrs = dict(payload["attributes"])
        history = payload["history"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"missing field: {exc}") from None
    if not isinstance(history, list):
        raise DataError(f"patient {patient_id}: history must be a list")

    # Raw numeric ages are pre-binned and not retained.
    if "age" in raw_attrs and "age" not in schema and "age_group" in schema:
        try:
            age = float(raw_attrs.pop("age"))
        except (TypeError, ValueError):
            raise DataError(f"patient {patient_id}: non-numeric age") from None
        raw_attrs["age_group"] = bin_age(age)

    schema.validate_attributes(patient_id, raw_attrs)

    visits = []
    known = frozenset(vocabulary) if vocabulary is not None else None
    for visit in history:
        if not isinstance(visit, dict) or "codes" not in visit:
            raise DataError(f"patient {patient_id}: visit without 'codes'")
        codes = frozenset(visit["codes"])
        if known is not None:
            unknown = codes - known
            if unknown:
                raise DataError(
                    f"patient {patient_id}: unknown code {sorted(unknown)[0]!r}"
                )
        visits.append(Visit(codes))
    return PatientRecord(patient_id, raw_attrs, tuple(visits))


def load_patients(path, schema: AttributeSchema,
                  vocabulary: Iterable[str] | None = None) -> list[PatientRecord]:
    """Load and validate a patients JSONL file; order is preserved."""
    records = []
    known = tuple(vocabulary) if vocabulary is not None else None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            try:
                records.append(_record_from_dict(payload, schema, known))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise DataError(f"{path}: no patient records")
    return records


def dump_patients(records: Iterable[PatientRecord], path) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(record_to_json(record) + "\n")


def dataset_hash(records: Iterable[PatientRecord]) -> str:
    """Content hash of the canonical serialization, for report metadata."""
    import hashlib

    digest = hashlib.sha256()
    for record in records:
        digest.update(record_to_json(record).encode())
        digest.update(b"\n")
    return digest.hexdigest()


def convert_csv_patients(csv_path, jsonl_path, schema: AttributeSchema) -> int:
    """Thin CSV -> JSONL converter.

    Expected columns: ``patient_id``, one column per schema attribute (or a raw
    ``age`` column), and ``codes`` with visit code-sets separated by ``|`` and
    codes within a visit separated by ``;``. Returns the number of patients.
    """
    records = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "patient_id" not in reader.fieldnames:
            raise DataError(f"{csv_path}: missing 'patient_id' column")
        for row in reader:
            codes_field = row.pop("codes", None)
            if codes_field is None:
                raise DataError(f"{csv_path}: missing 'codes' column")
            patient_id = row.pop("patient_id")
            history = [
                {"codes": [c for c in visit.split(";") if c]}
                for visit in codes_field.split("|")
            ]
            payload = {
                "patient_id": patient_id,
                "attributes": {k: v for k, v in row.items() if v != ""},
                "history": history,
            }
            records.append(_record_from_dict(payload, schema))
    dump_patients(records, jsonl_path)
    return len(records)
