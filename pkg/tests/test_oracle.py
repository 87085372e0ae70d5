import pytest

from prism.errors import ParameterError
from prism.oracle import PlainInstance, oracle_eval
from prism.query import QueryResult, QuerySpec, average, lower_median, scale_value

from instances import hospitals


@pytest.fixture
def inst():
    return PlainInstance.from_relations(hospitals())


def test_set_ops(inst):
    assert oracle_eval(inst, QuerySpec(op="psi", set_attr="disease")).groups == ("Cancer",)
    assert oracle_eval(inst, QuerySpec(op="psu", set_attr="disease")).groups == ("Cancer", "Fever", "Heart")
    assert oracle_eval(inst, QuerySpec(op="count", set_attr="disease")).count == 1
    assert oracle_eval(inst, QuerySpec(op="count", set_attr="disease", over="psu")).count == 3


def test_aggregates(inst):
    r = oracle_eval(inst, QuerySpec(op="sum", set_attr="disease", agg_attrs="cost"))
    assert r.values == {"cost": (1400,)}
    r = oracle_eval(inst, QuerySpec(op="sum", set_attr="disease", agg_attrs="cost", over="psu"))
    assert r.values == {"cost": (1400, 120, 800)}
    assert oracle_eval(inst, QuerySpec(op="avg", set_attr="disease", agg_attrs="cost")).values == {"cost": (280.0,)}
    r = oracle_eval(inst, QuerySpec(op="max", set_attr="disease", agg_attrs="age", reveal_max_identity=True))
    assert r.values == {"age": (8,)} and r.holders == {"age": ((2, 3),)}
    r = oracle_eval(inst, QuerySpec(op="max", set_attr="disease", agg_attrs="age"))
    assert r.holders is None
    r = oracle_eval(inst, QuerySpec(op="median", set_attr="disease", agg_attrs="cost"))
    assert r.values == {"cost": (300,)}


def test_two_attribute_groups(inst):
    r = oracle_eval(PlainInstance(owners=[[{"a": "x", "b": "1"}], [{"a": "x", "b": "1"}, {"a": "y", "b": "0"}]],
                                  domains={"a": ["x", "y"], "b": ["0", "1"]}),
                    QuerySpec(op="psu", set_attr="a,b"))
    assert r.groups == (("x", "1"), ("y", "0"))


def test_relations_round_trip(inst):
    assert PlainInstance.from_relations(inst.relations()) == inst


def test_helpers():
    assert scale_value(1234, 0) == 1234 and isinstance(scale_value(5, 0), int)
    assert scale_value(1234, 2) == 12.34
    assert average(10, 4, 0) == 2.5
    assert average(1050, 2, 2) == 5.25
    assert lower_median([4, 1, 3, 2]) == 2
    with pytest.raises(ParameterError):
        average(1, 0, 0)
    with pytest.raises(ParameterError):
        lower_median([])


def test_result_json_round_trip():
    r = QueryResult(op="max", groups=(("a", "1"),), values={"x": (3,)}, holders={"x": ((1, 2),)},
                    metadata={"k": 1})
    back = QueryResult.from_json(r.to_json())
    assert back == r and back.metadata == {"k": 1}


@pytest.mark.parametrize("kwargs", [
    dict(op="nope", set_attr="a"),
    dict(op="sum", set_attr="a"),
    dict(op="psi", set_attr="a", agg_attrs="b"),
    dict(op="sum", set_attr="a", agg_attrs="b", verify=True),
    dict(op="psi", set_attr="a", reveal_max_identity=True),
    dict(op="median", set_attr="a", agg_attrs="b", over="psu"),
    dict(op="psi", set_attr="a", bucketize=1),
    dict(op="psi", set_attr="a", bucketize=4, verify=True),
    dict(op="sum", set_attr="a", agg_attrs="a"),
    dict(op="psi", set_attr=""),
])
def test_invalid_specs(kwargs):
    with pytest.raises(ParameterError):
        QuerySpec(**kwargs)


def test_spec_normalisation():
    spec = QuerySpec(op="psu", set_attr="a, b", over="psi")
    assert spec.set_attr == ("a", "b") and spec.over == "psu"
    assert QuerySpec.from_json(spec.to_json()) == spec
