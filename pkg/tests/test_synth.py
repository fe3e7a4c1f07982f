import math
from collections import Counter

import pytest

from fairlens.blackbox import FrequencyMock, make_instances, predict_instances
from fairlens.data_model import record_to_json
from fairlens.errors import DataError
from fairlens.synth import (
    DEFAULT_ATTRIBUTE_MARGINALS,
    BiasSpec,
    GeneratorConfig,
    apply_bias,
    default_schema,
    generate,
    make_vocabularies,
)


def test_generate_is_deterministic_byte_identical(small_world):
    w = small_world
    again = generate(w["config"], w["schema"], w["group_map"])
    assert [record_to_json(r) for r in again] == [
        record_to_json(r) for r in w["patients"]
    ]


def test_generated_records_are_valid(small_world):
    w = small_world
    fine = set(w["group_map"].fine_codes)
    for record in w["patients"]:
        w["schema"].validate_attributes(record.patient_id, record.attributes)
        assert len(record.history) >= 2
        for visit in record.history:
            assert visit.codes
            assert visit.codes <= fine


def test_attribute_marginals_within_3_sigma():
    schema = default_schema()
    group_map, _ = make_vocabularies(2, 3, 4)
    n = 10000
    patients = generate(GeneratorConfig(seed=17, n_patients=n), schema, group_map)
    counts: dict[str, Counter] = {a: Counter() for a in schema.attributes}
    for p in patients:
        for attr, value in p.attributes.items():
            counts[attr][value] += 1
    for attr, marginals in DEFAULT_ATTRIBUTE_MARGINALS.items():
        for value, prob in marginals.items():
            if prob == 0:
                continue
            observed = counts[attr][value] / n
            sigma = math.sqrt(prob * (1 - prob) / n)
            assert abs(observed - prob) <= 3 * sigma, (attr, value, observed, prob)


def test_visit_and_code_means_track_config():
    schema = default_schema()
    group_map, _ = make_vocabularies(3, 4, 5)
    config = GeneratorConfig(seed=23, n_patients=10000)
    patients = generate(config, schema, group_map)
    visit_mean = sum(len(p.history) for p in patients) / len(patients)
    assert abs(visit_mean - config.mean_visits) / config.mean_visits < 0.05
    code_counts = [len(v.codes) for p in patients for v in p.history]
    code_mean = sum(code_counts) / len(code_counts)
    # Distinct-codes-per-visit sits below the raw Poisson mean because the
    # vocabulary is finite and Zipf-concentrated; it must still be close.
    assert code_mean == pytest.approx(config.mean_codes_per_visit, rel=0.20)
    assert min(code_counts) >= 1


def test_generator_config_validation():
    schema = default_schema()
    with pytest.raises(DataError):
        GeneratorConfig(seed=1, n_patients=0).validate(schema)
    with pytest.raises(DataError):
        GeneratorConfig(seed=1, n_patients=5, mean_visits=1.5).validate(schema)
    bad = {"gender": {"Female": 0.7, "Male": 0.7}}
    merged = dict(DEFAULT_ATTRIBUTE_MARGINALS, **bad)
    with pytest.raises(DataError, match="sum"):
        GeneratorConfig(seed=1, n_patients=5, attribute_marginals=merged).validate(schema)
    with pytest.raises(DataError, match="unknown generator config keys"):
        GeneratorConfig.from_json({"seed": 1, "n_patients": 5, "bogus": 2})
    with pytest.raises(DataError, match="requires"):
        GeneratorConfig.from_json({"seed": 1})


@pytest.fixture(scope="module")
def world(small_world):
    w = small_world
    instances = make_instances(w["patients"], w["group_map"])
    bb = FrequencyMock.from_patients(w["patients"], w["group_map"])
    instances = predict_instances(bb, instances, top_k=20)
    by_id = {p.patient_id: p for p in w["patients"]}
    return w, instances, by_id


class TestApplyBias:
    def test_over_promotes_to_rank_one(self, world):
        w, instances, by_id = world
        beta = w["group_map"].grouped_codes[0]
        spec = BiasSpec(conditions={"gender": "Female"}, beta=beta, over_rate=1.0)
        spec.validate(w["schema"], w["group_map"])
        biased = apply_bias(instances, by_id, spec, seed=1)
        assert len(biased) == len(instances)
        for before, after in zip(instances, biased):
            if by_id[before.patient_id].attributes["gender"] == "Female":
                assert after.prediction[0][0] == beta
                assert after.prediction[0][1] > after.prediction[1][1]
                # the rest of the ranking is preserved in order
                rest = [c for c, _ in before.prediction if c != beta]
                assert [c for c, _ in after.prediction[1:]] == rest
            else:
                assert after is before

    def test_under_removes_from_ranking(self, world):
        w, instances, by_id = world
        beta = w["group_map"].grouped_codes[0]
        spec = BiasSpec(conditions={"gender": "Male"}, beta=beta, under_rate=1.0)
        biased = apply_bias(instances, by_id, spec, seed=1)
        for before, after in zip(instances, biased):
            if by_id[before.patient_id].attributes["gender"] == "Male":
                assert all(c != beta for c, _ in after.prediction)
            else:
                assert after is before

    def test_rates_partition_one_uniform(self, world):
        # over + under = 1 means every matching instance is modified.
        w, instances, by_id = world
        beta = w["group_map"].grouped_codes[1]
        spec = BiasSpec(
            conditions={"gender": "Female"}, beta=beta, over_rate=0.5, under_rate=0.5
        )
        biased = apply_bias(instances, by_id, spec, seed=9)
        promoted = removed = 0
        for after in biased:
            if by_id[after.patient_id].attributes["gender"] != "Female":
                continue
            if after.prediction[0][0] == beta:
                promoted += 1
            else:
                assert all(c != beta for c, _ in after.prediction)
                removed += 1
        total = promoted + removed
        assert total > 100
        assert abs(promoted / total - 0.5) < 3 * math.sqrt(0.25 / total)

    def test_trigger_gates_injection(self, world):
        w, instances, by_id = world
        beta = w["group_map"].grouped_codes[2]
        trigger = w["group_map"].fine_codes[0]
        spec = BiasSpec(conditions={}, beta=beta, over_rate=1.0, trigger=trigger)
        biased = apply_bias(instances, by_id, spec, seed=2)
        for before, after in zip(instances, biased):
            has_trigger = any(trigger in v.codes for v in before.prefix)
            if has_trigger:
                assert after.prediction[0][0] == beta
            else:
                assert after is before

    def test_apply_bias_deterministic(self, world):
        w, instances, by_id = world
        beta = w["group_map"].grouped_codes[3]
        spec = BiasSpec(conditions={"gender": "Female"}, beta=beta, over_rate=0.3)
        one = apply_bias(instances, by_id, spec, seed=5)
        two = apply_bias(instances, by_id, spec, seed=5)
        assert [i.prediction for i in one] == [i.prediction for i in two]

    def test_spec_validation(self, world):
        w, _, _ = world
        gm, schema = w["group_map"], w["schema"]
        with pytest.raises(DataError, match="exceed"):
            BiasSpec(conditions={}, beta=gm.grouped_codes[0],
                     over_rate=0.7, under_rate=0.7).validate(schema, gm)
        with pytest.raises(DataError, match="unknown attribute"):
            BiasSpec(conditions={"zz": "1"}, beta=gm.grouped_codes[0]).validate(schema, gm)
        with pytest.raises(DataError, match="grouped vocabulary"):
            BiasSpec(conditions={}, beta="nope").validate(schema, gm)
        spec = BiasSpec(conditions={"gender": "Female"}, beta=gm.grouped_codes[0],
                        over_rate=0.8, trigger="G01.0")
        assert BiasSpec.from_json(spec.to_json()) == spec
