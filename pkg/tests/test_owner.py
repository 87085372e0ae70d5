import numpy as np
import pytest

from prism.errors import IngestionError, ParameterError, ProtocolError, TamperAlarm
from prism.owner import (PresenceTable, bucket_children, build_bucket_tree, build_presence_table,
                         build_sum_table, check_psi, count_finalize, decode_max, fpos_combine,
                         make_z_shares, max_encode, max_finalize, max_round3_flag, psi_finalize,
                         psu_finalize, read_share_bundle, share_tables, sum_finalize, verify_psi,
                         write_share_bundle)
from prism.params import generate_params, view_for
from prism.query import Domain, QuerySpec
from prism.server import sum_eval
from prism.sharing import RandomStream, ScriptedStream

from instances import DISEASES, max_example_params, tiny_group_params


@pytest.fixture
def tiny():
    return view_for(tiny_group_params(), "owner")


@pytest.fixture
def maxv():
    return view_for(max_example_params(), "owner")


def test_presence_table_from_column():
    t = build_presence_table(["Cancer", "Heart", "Cancer"], DISEASES)
    assert t.bits.tolist() == [1, 0, 1]
    assert t.domain == DISEASES
    with pytest.raises(IngestionError, match="Flu"):
        build_presence_table(["Flu"], DISEASES)


def test_sum_table_accumulates():
    t = build_sum_table([("Cancer", 100), ("Cancer", 200), ("Heart", 300)], DISEASES)
    assert t.bits.tolist() == [1, 0, 1]
    assert t.payload_count.tolist() == [2, 0, 1]
    assert list(t.payload_sum[0]) == [300, 0, 300]
    two = build_sum_table([("Fever", (1, 2)), ("Fever", (3, 4))], DISEASES)
    assert [list(c) for c in two.payload_sum] == [[0, 4, 0], [0, 6, 0]]
    with pytest.raises(IngestionError):
        build_sum_table([("Fever", (1, 2)), ("Heart", 3)], DISEASES)
    with pytest.raises(IngestionError):
        build_sum_table([("Fever", -1)], DISEASES)


def test_share_tables_scripted_example(tiny):
    table = PresenceTable(bits=np.array([1, 0, 1]), domain=DISEASES)
    bundle = share_tables(table, tiny, ScriptedStream([4, 2, 3, 2, 0, 1]), verify=True)
    assert bundle["server1"]["bits"].tolist() == [4, 2, 3]
    assert bundle["server2"]["bits"].tolist() == [(-3) % 5, (-2) % 5, (-2) % 5]
    assert bundle["server1"]["comp"].tolist() == [2, 0, 1]
    assert bundle["server2"]["comp"].tolist() == [(-2) % 5, 1, (-1) % 5]
    assert "server3" not in bundle


def test_share_tables_payloads_go_to_three_servers():
    view = view_for(generate_params(3, 3, seed=1), "owner")
    table = build_sum_table([("Cancer", 5)], DISEASES)
    bundle = share_tables(table, view, RandomStream(0))
    assert set(bundle["server3"]) == {"sum.0", "count"}
    assert set(bundle["server1"]) == {"bits", "sum.0", "count"}


def test_psi_finalize_golden(tiny):
    res = psi_finalize([27, 27, 81], [9, 1, 1], tiny)
    assert res.fop.tolist() == [1, 5, 4]
    assert res.common.tolist() == [1, 0, 0]


def test_finalize_length_mismatch(tiny):
    with pytest.raises(ProtocolError):
        psi_finalize([1, 2], [1], tiny)
    with pytest.raises(ProtocolError):
        psu_finalize([1, 2], [1], 5)


def test_psu_finalize():
    assert psu_finalize([3, 0, 4], [2, 0, 2], 5).tolist() == [0, 0, 1]


def test_verification_golden(tiny):
    fop = np.array([1, 5, 4])
    verdict = check_psi(fop, [27, 81, 3], [9, 27, 1], tiny)
    assert verdict.passed and verdict.cells == ()
    assert verify_psi(fop, [27, 81, 3], [9, 27, 1], tiny).passed


def test_verification_flags_forged_cell(tiny):
    fop = np.array([1, 5, 4])
    verdict = check_psi(fop, [27, 81, 9], [9, 27, 1], tiny)
    assert not verdict.passed and verdict.cells == (2,)
    with pytest.raises(TamperAlarm) as err:
        verify_psi(fop, [27, 81, 9], [9, 27, 1], tiny)
    assert err.value.cells == (2,)


def test_sum_pipeline_interpolates(hosp_params):
    view = view_for(hosp_params, "owner")
    p = view.shamir_p
    rng = RandomStream(3)
    tables = [build_sum_table(rows, DISEASES) for rows in (
        [("Cancer", 100), ("Cancer", 200)], [("Cancer", 100), ("Fever", 70)], [("Cancer", 700)])]
    bundles = [share_tables(t, view, rng) for t in tables]
    z = make_z_shares([1, 0, 0], view, rng)
    outs = [sum_eval(p, [b[f"server{k}"]["sum.0"] for b in bundles], z[k - 1]) for k in (1, 2, 3)]
    assert [int(v) for v in sum_finalize(outs, view)] == [1100, 0, 0]
    with pytest.raises(ProtocolError):
        sum_finalize(outs[:2], view)


def test_max_encode_golden(maxv):
    enc, shares = max_encode(6, maxv, ScriptedStream([216, 5000]))
    assert (enc.v, shares) == (1771, (5000, 1774))
    enc, shares = max_encode(8, maxv, ScriptedStream([1, 5500]))
    assert (enc.v, shares) == (4682, (497, 4185))
    enc, shares = max_encode(8, maxv, ScriptedStream([319, 2500]))
    assert (enc.v, shares) == (5000, (2500, 2500))


def test_max_encode_absent_and_bounds(maxv):
    enc, shares = max_encode(0, maxv, RandomStream(1), present=False)
    assert enc.v == 0 and sum(shares) % 5003 == 0
    with pytest.raises(ParameterError):
        max_encode(9, maxv, RandomStream(1))
    with pytest.raises(ParameterError):
        max_encode(-1, maxv, RandomStream(1))


def test_decode_max(maxv):
    assert decode_max(5000, maxv) == 8
    assert decode_max(4681, maxv) == 8
    assert decode_max(4680, maxv) == 7
    assert decode_max(1, maxv) == 0
    with pytest.raises(ProtocolError):
        decode_max(0, maxv)


def test_max_finalize_golden(maxv):
    assert max_finalize((4000, 1000), (200, 4804), maxv) == (8, 2)
    assert max_finalize((4000, 1000), None, maxv) == (8, None)
    with pytest.raises(ProtocolError):
        max_finalize((4000, 1000), (2, 4), maxv)


def test_holder_flags_golden(maxv):
    f1 = [200, 300, 200]
    f2 = [(-200) % 5003, (-299) % 5003, (-199) % 5003]
    assert fpos_combine(f1, f2, 5003).tolist() == [0, 1, 1]
    with pytest.raises(ProtocolError):
        fpos_combine([5], [5], 5003)


def test_round3_flag_reconstructs(maxv):
    rng = RandomStream(8)
    for bit in (False, True):
        a, b = max_round3_flag(bit, maxv, rng)
        assert (a + b) % 5003 == int(bit)


def test_count_finalize(tiny):
    assert count_finalize([27, 27, 81], [9, 1, 1], tiny, "psi") == 1
    assert count_finalize([3, 0, 4], [2, 0, 2], tiny, "psu") == 1


def test_bucket_tree_shape():
    bits = np.zeros(16, dtype=np.int64)
    bits[[6, 14, 15]] = 1
    levels = build_bucket_tree(bits, 4)
    assert [lv.tolist() for lv in levels[1:]] == [[0, 1, 0, 1]]
    levels = build_bucket_tree(np.ones(10), 3)
    assert [len(lv) for lv in levels] == [10, 4, 2]
    with pytest.raises(ParameterError):
        build_bucket_tree(bits, 1)


def test_bucket_children():
    assert bucket_children([1, 3], 4, 16).tolist() == [4, 5, 6, 7, 12, 13, 14, 15]
    assert bucket_children([2], 4, 10).tolist() == [8, 9]
    assert bucket_children([], 4, 10).size == 0


def test_share_bundle_file_round_trip(tmp_path):
    spec = QuerySpec(op="avg", set_attr="disease", agg_attrs="cost")
    items = {"bits": np.array([1, 2, 3]), "sum.0": np.array([2**70, 1, 0], dtype=object),
             "count": np.array([4, 5, 6])}
    path = tmp_path / "server1.csv"
    write_share_bundle(path, items, spec)
    assert path.read_text().splitlines()[0] == "disease,cost,adisease"
    back = read_share_bundle(path, spec)
    assert {k: [int(x) for x in v] for k, v in back.items()} == {k: [int(x) for x in v] for k, v in items.items()}
    path.write_text("nope\n1\n")
    with pytest.raises(IngestionError):
        read_share_bundle(path, spec)


def test_domain_for_two_attributes():
    dom = Domain(("a", "b"), {"a": ["x", "y"], "b": ["0", "1", "2"]})
    assert len(dom) == 6
    assert dom.cell(("y", "1")) == 4
    assert dom.label(4) == ("y", "1")
