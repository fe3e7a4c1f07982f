"""Condition sets and the subgroup lattice.

A condition set is a conjunction of ``attribute = value`` constraints;
attributes it does not mention are wildcards. Groups collect the prediction
instances of every matching patient, so one patient can sit in many groups
and a group's size is a visit count, not a patient count.

Text syntax (CLI and report ids): comma-separated ``attr=value`` pairs in
schema order; the all-wildcard set is spelled ``*``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, Sequence

from .blackbox import PredictionInstance
from .data_model import AttributeSchema, PatientRecord
from .errors import DataError

WILDCARD_TEXT = "*"


@dataclass(frozen=True)
class ConditionSet:
    """Immutable (attribute, value) constraints; missing attributes match anything."""

    conditions: tuple[tuple[str, str], ...]

    @classmethod
    def of(cls, mapping: Mapping[str, str], schema: AttributeSchema) -> "ConditionSet":
        for attr, value in mapping.items():
            if attr not in schema:
                raise DataError(f"condition on unknown attribute {attr!r}")
            if value not in schema.values(attr):
                raise DataError(f"condition value {value!r} not in schema for {attr!r}")
        ordered = tuple(
            (attr, mapping[attr]) for attr in schema.attributes if attr in mapping
        )
        return cls(ordered)

    @classmethod
    def parse(cls, text: str, schema: AttributeSchema) -> "ConditionSet":
        text = text.strip()
        if text in ("", WILDCARD_TEXT):
            return cls(())
        mapping: dict[str, str] = {}
        for part in text.split(","):
            if "=" not in part:
                raise DataError(f"bad condition {part!r}: expected attr=value")
            attr, _, value = part.partition("=")
            attr, value = attr.strip(), value.strip()
            if attr in mapping:
                raise DataError(f"attribute {attr!r} constrained twice")
            mapping[attr] = value
        return cls.of(mapping, schema)

    def as_text(self) -> str:
        if not self.conditions:
            return WILDCARD_TEXT
        return ",".join(f"{a}={v}" for a, v in self.conditions)

    def matches(self, attributes: Mapping[str, str]) -> bool:
        return all(attributes.get(a) == v for a, v in self.conditions)

    def refines(self, other: "ConditionSet") -> bool:
        """True if this set adds constraints to (or equals) ``other``."""
        mine = dict(self.conditions)
        return all(mine.get(a) == v for a, v in other.conditions)

    def __str__(self) -> str:
        return self.as_text()


def matches(patient: PatientRecord, condition_set: ConditionSet) -> bool:
    return condition_set.matches(patient.attributes)


def enumerate_lattice(schema: AttributeSchema) -> list[ConditionSet]:
    """Every combination of one-value-or-wildcard per attribute.

    Produces exactly prod(|values(a)| + 1) condition sets in a deterministic
    order (schema attribute order, wildcard option last), including the
    all-wildcard set.
    """
    attrs = schema.attributes
    option_lists = [list(schema.values(a)) + [None] for a in attrs]
    lattice = []
    for combo in product(*option_lists):
        conditions = tuple(
            (attr, value) for attr, value in zip(attrs, combo) if value is not None
        )
        lattice.append(ConditionSet(conditions))
    return lattice


@dataclass(frozen=True)
class Group:
    condition: ConditionSet
    members: tuple[PredictionInstance, ...]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def gid(self) -> str:
        return self.condition.as_text()


def stratify(patients: Sequence[PatientRecord],
             instances: Sequence[PredictionInstance],
             conditions: Iterable[ConditionSet]) -> list[Group]:
    """Materialize one group per condition set. Groups may overlap; patients
    matching no condition set simply appear nowhere. Members keep the order
    of the incoming instance sequence."""
    indices_by_patient: dict[str, list[int]] = {}
    for idx, instance in enumerate(instances):
        indices_by_patient.setdefault(instance.patient_id, []).append(idx)

    # Bucket patients by their attribute tuple once; condition sets are then
    # matched against the (few) distinct tuples instead of every patient.
    buckets: dict[tuple[tuple[str, str], ...], list[int]] = {}
    for patient in patients:
        key = tuple(sorted(patient.attributes.items()))
        buckets.setdefault(key, []).extend(indices_by_patient.get(patient.patient_id, ()))
    keyed = [(dict(key), indices) for key, indices in buckets.items()]

    groups = []
    for condition in conditions:
        member_indices: list[int] = []
        for attrs, bucket in keyed:
            if condition.matches(attrs):
                member_indices.extend(bucket)
        member_indices.sort()
        groups.append(Group(condition, tuple(instances[i] for i in member_indices)))
    return groups
