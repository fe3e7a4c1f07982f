"""Synthetic patient corpora and planted-bias fixtures.

The generator produces validated patient records from a seeded config, so
every downstream claim (group ranking, misdiagnosis scores, explanation
drivers) can be tested against a known planted signal instead of restricted
clinical data. Defaults mirror the marginals of a large ICU cohort: 54/46
gender split, 3.76 visits per patient, 11.22 codes per visit.

Each patient is drawn from its own derived stream (see ``rng.derive_seed``),
so generation is order-independent per patient and trivially shardable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .data_model import AttributeSchema, CodeGroupMap, CodeOntology, PatientRecord, Visit
from .errors import DataError
from .rng import Xoshiro256StarStar, derive_seed

DEFAULT_ATTRIBUTE_MARGINALS: dict[str, dict[str, float]] = {
    "gender": {"Female": 0.54, "Male": 0.46},
    "ethnicity": {
        "White": 0.69,
        "Black": 0.18,
        "Hispanic": 0.07,
        "Asian": 0.03,
        "Other": 0.03,
    },
    "age_group": {
        "0": 0.005,
        "15-25": 0.032,
        "25-45": 0.183,
        "45-65": 0.36,
        "65+": 0.42,
    },
    "insurance": {"Medicare": 0.41, "Medicaid": 0.12, "Other": 0.47},
}


def default_schema() -> AttributeSchema:
    return AttributeSchema(
        {attr: list(values) for attr, values in DEFAULT_ATTRIBUTE_MARGINALS.items()}
    )


def make_vocabularies(n_chapters: int = 6, groups_per_chapter: int = 10,
                      fine_per_group: int = 8) -> tuple[CodeGroupMap, CodeOntology]:
    """Build an aligned synthetic vocabulary pair plus its ontology.

    Grouped codes ("G01", "G02", ...) are the internal category layer of the
    ontology; fine codes ("G01.0", ...) are its leaves. The group map simply
    follows the tree: a fine code's category is its ontology parent.
    """
    edges = []
    mapping: dict[str, str] = {}
    group_index = 0
    for chapter in range(n_chapters):
        chapter_node = f"CH{chapter + 1}"
        edges.append((chapter_node, "ROOT"))
        for _ in range(groups_per_chapter):
            group_index += 1
            group_code = f"G{group_index:02d}"
            edges.append((group_code, chapter_node))
            for leaf in range(fine_per_group):
                fine_code = f"{group_code}.{leaf}"
                edges.append((fine_code, group_code))
                mapping[fine_code] = group_code
    return CodeGroupMap(mapping), CodeOntology.from_edges(edges)


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int
    n_patients: int
    attribute_marginals: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: DEFAULT_ATTRIBUTE_MARGINALS
    )
    mean_visits: float = 3.76
    mean_codes_per_visit: float = 11.22
    zipf_exponent: float = 1.05

    def validate(self, schema: AttributeSchema) -> None:
        if self.n_patients <= 0:
            raise DataError("n_patients must be positive")
        if self.mean_visits < 2.0:
            raise DataError("mean_visits must be >= 2 (histories need 2 visits)")
        if self.mean_codes_per_visit <= 0:
            raise DataError("mean_codes_per_visit must be positive")
        for attr in schema.attributes:
            if attr not in self.attribute_marginals:
                raise DataError(f"no marginals for attribute {attr!r}")
            marginals = self.attribute_marginals[attr]
            if set(marginals) != set(schema.values(attr)):
                raise DataError(f"marginals for {attr!r} do not match the schema values")
            total = sum(marginals.values())
            if abs(total - 1.0) > 1e-9:
                raise DataError(f"marginals for {attr!r} sum to {total}, not 1")
            if any(p < 0 for p in marginals.values()):
                raise DataError(f"negative marginal under {attr!r}")

    @classmethod
    def from_json(cls, payload: Mapping) -> "GeneratorConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known - {"schema"}
        if unknown:
            raise DataError(f"unknown generator config keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in payload.items() if k in known}
        if "seed" not in kwargs or "n_patients" not in kwargs:
            raise DataError("generator config requires 'seed' and 'n_patients'")
        return cls(**kwargs)


def _zipf_cumulative(n: int, exponent: float) -> list[float]:
    weights = [1.0 / (rank ** exponent) for rank in range(1, n + 1)]
    total = sum(weights)
    cumulative = []
    acc = 0.0
    for w in weights:
        acc += w / total
        cumulative.append(acc)
    cumulative[-1] = 1.0
    return cumulative


def generate(config: GeneratorConfig, schema: AttributeSchema,
             group_map: CodeGroupMap) -> list[PatientRecord]:
    """Deterministic synthetic corpus; same config and seed, same bytes."""
    config.validate(schema)
    fine_codes = group_map.fine_codes
    cumulative = _zipf_cumulative(len(fine_codes), config.zipf_exponent)
    attrs = schema.attributes
    # Per-attribute value lists in schema order with their cumulative weights.
    attr_values: list[tuple[str, tuple[str, ...], list[float]]] = []
    for attr in attrs:
        values = schema.values(attr)
        acc, cum = 0.0, []
        for v in values:
            acc += config.attribute_marginals[attr][v]
            cum.append(acc)
        cum[-1] = 1.0
        attr_values.append((attr, values, cum))

    geometric_p = 1.0 / (config.mean_visits - 1.0)
    max_codes = len(fine_codes)
    records = []
    for i in range(config.n_patients):
        rng = Xoshiro256StarStar(derive_seed(config.seed, 1, i))
        attributes = {
            attr: values[rng.categorical(cum)] for attr, values, cum in attr_values
        }
        # Visit count = 1 + Geometric(mean_visits - 1), so histories always
        # have the two visits the pipeline needs.
        n_visits = 1 + rng.geometric(geometric_p)
        history = []
        for _ in range(n_visits):
            k = 0
            while k == 0:  # zero-truncated Poisson
                k = rng.poisson(config.mean_codes_per_visit)
            k = min(k, max_codes)
            codes: set[str] = set()
            while len(codes) < k:
                codes.add(fine_codes[rng.categorical(cumulative)])
            history.append(Visit(frozenset(codes)))
        records.append(PatientRecord(f"P{i:06d}", attributes, tuple(history)))
    return records


@dataclass(frozen=True)
class BiasSpec:
    """Planted prediction bias: push ``beta`` into (or out of) the ranking for
    instances of patients matching ``conditions``.

    ``over_rate`` is the probability of promoting ``beta`` to rank 1,
    ``under_rate`` the probability of deleting it from the ranking; the two
    draws share one uniform so their sum must stay <= 1. ``trigger`` further
    restricts the injection to instances whose prefix contains that
    fine-grained code.
    """

    conditions: Mapping[str, str]
    beta: str
    over_rate: float = 0.0
    under_rate: float = 0.0
    trigger: str | None = None

    def validate(self, schema: AttributeSchema, group_map: CodeGroupMap) -> None:
        for rate, name in ((self.over_rate, "over_rate"), (self.under_rate, "under_rate")):
            if not 0.0 <= rate <= 1.0:
                raise DataError(f"{name} must be in [0, 1]")
        if self.over_rate + self.under_rate > 1.0 + 1e-12:
            raise DataError("over_rate + under_rate must not exceed 1")
        for attr, value in self.conditions.items():
            if attr not in schema:
                raise DataError(f"bias condition on unknown attribute {attr!r}")
            if value not in schema.values(attr):
                raise DataError(f"bias condition value {value!r} not in schema for {attr!r}")
        if self.beta not in group_map.grouped_codes:
            raise DataError(f"bias code {self.beta!r} not in the grouped vocabulary")

    def matches(self, attributes: Mapping[str, str]) -> bool:
        return all(attributes.get(a) == v for a, v in self.conditions.items())

    def to_json(self) -> dict:
        payload = {
            "conditions": dict(self.conditions),
            "beta": self.beta,
            "over_rate": self.over_rate,
            "under_rate": self.under_rate,
        }
        if self.trigger is not None:
            payload["trigger"] = self.trigger
        return payload

    @classmethod
    def from_json(cls, payload: Mapping) -> "BiasSpec":
        return cls(
            conditions=dict(payload["conditions"]),
            beta=payload["beta"],
            over_rate=payload.get("over_rate", 0.0),
            under_rate=payload.get("under_rate", 0.0),
            trigger=payload.get("trigger"),
        )


def _promote(ranking: tuple[tuple[str, float], ...], beta: str) -> tuple:
    """Move (or insert) beta to rank 1 with a score above the current top."""
    rest = tuple(entry for entry in ranking if entry[0] != beta)
    top = rest[0][1] if rest else 0.0
    return ((beta, top + 1.0),) + rest


def _remove(ranking: tuple[tuple[str, float], ...], beta: str) -> tuple:
    return tuple(entry for entry in ranking if entry[0] != beta)


def apply_bias(instances: Sequence, patients_by_id: Mapping[str, PatientRecord],
               spec: BiasSpec, seed: int):
    """Return instances with the planted bias applied to matching ones.

    Non-matching instances are returned untouched (the same objects). The
    per-instance draw comes from a single stream consumed in instance order,
    only on matching instances, so results are deterministic for a fixed
    (instances, seed) pair.
    """
    rng = Xoshiro256StarStar(derive_seed(seed, 2))
    out = []
    for instance in instances:
        patient = patients_by_id[instance.patient_id]
        if not spec.matches(patient.attributes):
            out.append(instance)
            continue
        if spec.trigger is not None and not any(
            spec.trigger in visit.codes for visit in instance.prefix
        ):
            out.append(instance)
            continue
        u = rng.random()
        if u < spec.over_rate:
            out.append(replace(instance, prediction=_promote(instance.prediction, spec.beta)))
        elif u < spec.over_rate + spec.under_rate:
            out.append(replace(instance, prediction=_remove(instance.prediction, spec.beta)))
        else:
            out.append(instance)
    return out
