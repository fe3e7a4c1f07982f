import pytest

from fairlens.data_model import AttributeSchema, CodeGroupMap, CodeOntology, PatientRecord, Visit
from fairlens.synth import GeneratorConfig, default_schema, generate, make_vocabularies


@pytest.fixture(scope="session")
def tiny_schema() -> AttributeSchema:
    return AttributeSchema({"gender": ["F", "M"], "site": ["a", "b", "c"]})


@pytest.fixture(scope="session")
def five_node_ontology() -> CodeOntology:
    # ROOT -> P -> {A, B}; ROOT -> Q. Depths: P,Q=1; A,B=2.
    return CodeOntology.from_edges([("P", "ROOT"), ("Q", "ROOT"), ("A", "P"), ("B", "P")])


@pytest.fixture(scope="session")
def small_world():
    """A small but fully wired synthetic corpus shared by read-only tests."""
    schema = default_schema()
    group_map, ontology = make_vocabularies(4, 5, 6)
    config = GeneratorConfig(seed=424242, n_patients=250)
    patients = generate(config, schema, group_map)
    return {
        "schema": schema,
        "group_map": group_map,
        "ontology": ontology,
        "config": config,
        "patients": patients,
    }


def make_record(patient_id: str, attributes: dict, visits: list[list[str]]) -> PatientRecord:
    return PatientRecord(
        patient_id=patient_id,
        attributes=attributes,
        history=tuple(Visit(codes=frozenset(v)) for v in visits),
    )
