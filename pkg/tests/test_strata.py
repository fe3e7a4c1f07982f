import pytest

from conftest import make_record
from fairlens.blackbox import make_instances
from fairlens.data_model import AttributeSchema, CodeGroupMap
from fairlens.errors import DataError
from fairlens.strata import ConditionSet, enumerate_lattice, matches, stratify
from fairlens.synth import default_schema


class TestConditionSet:
    def test_parse_and_text_round_trip(self, tiny_schema):
        cs = ConditionSet.parse("gender=F,site=b", tiny_schema)
        assert cs.as_text() == "gender=F,site=b"
        assert ConditionSet.parse(cs.as_text(), tiny_schema) == cs
        # attribute order is normalized to schema order
        assert ConditionSet.parse("site=b,gender=F", tiny_schema) == cs

    def test_wildcard_forms(self, tiny_schema):
        for text in ("", "*"):
            cs = ConditionSet.parse(text, tiny_schema)
            assert cs.conditions == ()
            assert cs.as_text() == "*"
            assert cs.matches({"gender": "F", "site": "a"})

    def test_parse_errors(self, tiny_schema):
        with pytest.raises(DataError):
            ConditionSet.parse("gender=X", tiny_schema)
        with pytest.raises(DataError):
            ConditionSet.parse("zz=1", tiny_schema)
        with pytest.raises(DataError, match="constrained twice"):
            ConditionSet.parse("gender=F,gender=M", tiny_schema)
        with pytest.raises(DataError):
            ConditionSet.parse("gender", tiny_schema)

    def test_matches_and_refines(self, tiny_schema):
        broad = ConditionSet.parse("gender=F", tiny_schema)
        narrow = ConditionSet.parse("gender=F,site=a", tiny_schema)
        other = ConditionSet.parse("gender=M", tiny_schema)
        assert broad.matches({"gender": "F", "site": "c"})
        assert not broad.matches({"gender": "M", "site": "c"})
        assert narrow.refines(broad)
        assert not broad.refines(narrow)
        assert not narrow.refines(other)
        wildcard = ConditionSet.parse("*", tiny_schema)
        assert broad.refines(wildcard)


class TestLattice:
    def test_count_formula_small(self, tiny_schema):
        # (2+1) * (3+1) = 12 condition sets including the full wildcard.
        lattice = enumerate_lattice(tiny_schema)
        assert len(lattice) == 12
        assert len(set(lattice)) == 12
        texts = [cs.as_text() for cs in lattice]
        assert "*" in texts
        assert "gender=F,site=b" in texts

    def test_default_cardinalities_give_432(self):
        # Attribute cardinalities {2, 5, 5, 3} -> 3*6*6*4 = 432.
        schema = default_schema()
        sizes = [len(schema.values(a)) for a in schema.attributes]
        assert sorted(sizes) == [2, 3, 5, 5]
        assert len(enumerate_lattice(schema)) == 432


def _tiny_world(tiny_schema):
    gm = CodeGroupMap({"x.1": "X", "y.1": "Y"})
    patients = [
        make_record("p1", {"gender": "F", "site": "a"}, [["x.1"], ["y.1"]]),
        make_record("p2", {"gender": "F", "site": "b"}, [["x.1"], ["x.1"], ["y.1"]]),
        make_record("p3", {"gender": "M", "site": "a"}, [["y.1"], ["x.1"]]),
    ]
    instances = make_instances(patients, gm)
    return patients, instances


class TestStratify:
    def test_groups_match_brute_force(self, tiny_schema):
        patients, instances = _tiny_world(tiny_schema)
        lattice = enumerate_lattice(tiny_schema)
        groups = {g.gid: g for g in stratify(patients, instances, lattice)}
        assert len(groups) == 12
        by_id = {p.patient_id: p for p in patients}
        for cs in lattice:
            expected = [
                inst for inst in instances if matches(by_id[inst.patient_id], cs)
            ]
            assert list(groups[cs.as_text()].members) == expected

    def test_wildcard_group_holds_everything(self, tiny_schema):
        patients, instances = _tiny_world(tiny_schema)
        groups = {g.gid: g for g in stratify(patients, instances, enumerate_lattice(tiny_schema))}
        assert groups["*"].size == len(instances) == 4
        assert groups["gender=F"].size == 3
        assert groups["gender=F,site=b"].size == 2
        assert groups["gender=M,site=b"].size == 0

    def test_group_members_keep_instance_order(self, small_world):
        w = small_world
        instances = make_instances(w["patients"], w["group_map"])
        lattice = enumerate_lattice(w["schema"])
        for group in stratify(w["patients"], instances, lattice):
            positions = [instances.index(m) for m in group.members[:5]]
            assert positions == sorted(positions)
