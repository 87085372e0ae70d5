"""Randomised invariants checked against plain recomputation."""
from functools import lru_cache

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from prism.announcer import combine_and_findmax, median_select
from prism.oracle import PlainInstance, oracle_eval
from prism.orchestrator import run_query
from prism.owner import (PresenceTable, check_psi, decode_max, max_encode, psi_finalize, psu_finalize,
                         share_tables)
from prism.params import encode_view, generate_params, noise_cap, view_for
from prism.messages import MsgType, RoundMessage, json_item
from prism.query import QuerySpec
from prism.server import ServerNode, max_collect_permute, psi_eval, psu_eval, vout_eval
from prism.sharing import RandomStream

from instances import random_instance, random_spec

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@lru_cache(maxsize=None)
def _params(m, b, domain_max=100):
    return generate_params(m, b, domain_max=domain_max, seed=m * 1000 + b)


def _views(m, b):
    p = _params(m, b)
    return view_for(p, "owner"), view_for(p, "server1"), view_for(p, "server2")


bit_matrices = st.integers(2, 6).flatmap(
    lambda m: st.integers(1, 64).flatmap(
        lambda b: st.lists(st.lists(st.integers(0, 1), min_size=b, max_size=b), min_size=m, max_size=m)))


def _share_all(bits, owner, seed, verify=False):
    return [share_tables(PresenceTable(bits=np.array(row), domain=[]), owner, RandomStream([seed, j]), verify)
            for j, row in enumerate(bits)]


@SETTINGS
@given(bit_matrices, st.integers(0, 2**32))
def test_psi_marks_exactly_the_full_cells(bits, seed):
    m, b = len(bits), len(bits[0])
    owner, s1, s2 = _views(m, b)
    bundles = _share_all(bits, owner, seed, verify=True)
    out1 = psi_eval(s1, [bd["server1"]["bits"] for bd in bundles], s1.m_share)
    out2 = psi_eval(s2, [bd["server2"]["bits"] for bd in bundles], s2.m_share)
    res = psi_finalize(out1, out2, owner)
    truth = np.array(bits).sum(axis=0)
    assert res.common.tolist() == (truth == m).astype(int).tolist()
    assert np.all(res.fop[truth < m] != 1)
    v1 = vout_eval(s1, [bd["server1"]["comp"] for bd in bundles])
    v2 = vout_eval(s2, [bd["server2"]["comp"] for bd in bundles])
    assert check_psi(res.fop, v1, v2, owner).passed


@SETTINGS
@given(bit_matrices, st.integers(0, 2**32), st.integers(0, 1000))
def test_psu_is_bitwise_or(bits, seed, qid):
    m, b = len(bits), len(bits[0])
    owner, s1, s2 = _views(m, b)
    bundles = _share_all(bits, owner, seed)
    out1 = psu_eval(s1, [bd["server1"]["bits"] for bd in bundles], qid)
    out2 = psu_eval(s2, [bd["server2"]["bits"] for bd in bundles], qid)
    assert psu_finalize(out1, out2, owner.delta).tolist() == np.array(bits).max(axis=0).tolist()


@SETTINGS
@given(st.integers(2, 6), st.integers(0, 2**20))
def test_encoding_preserves_strict_order(m, seed):
    owner = view_for(_params(m, 4), "owner")
    for x in range(owner.domain_max):
        assert owner.F(x) < owner.F(x + 1)
        assert owner.F(x) + noise_cap(owner.F_coeffs, x, m) < owner.F(x + 1)
    rng = RandomStream(seed)
    for x in range(0, owner.domain_max + 1, 7):
        enc, _ = max_encode(x, owner, rng)
        assert decode_max(enc.v, owner) == x


@SETTINGS
@given(st.integers(2, 6).flatmap(lambda m: st.lists(st.integers(0, 100), min_size=m, max_size=m)),
       st.integers(0, 2**32), st.booleans())
def test_announcer_argmax_and_median_follow_true_values(maxima, seed, absent_first):
    m = len(maxima)
    p = _params(m, 4)
    owner = view_for(p, "owner")
    rng = RandomStream(seed)
    present = [not (absent_first and j == 0) for j in range(m)]
    if not any(present[1:]) and not present[0]:
        present[1] = True
    shares = [max_encode(v, owner, rng, ok)[1] for v, ok in zip(maxima, present)]
    col1 = max_collect_permute([[s[0]] for s in shares], p.pf_shared)
    col2 = max_collect_permute([[s[1]] for s in shares], p.pf_shared)
    res = combine_and_findmax(col1[0], col2[0], p.max_modulus, True, rng)
    best = max(v for v, ok in zip(maxima, present) if ok)
    assert decode_max(res.value, owner) == best
    pos = p.pf_shared.inverse()(res.index)
    assert present[pos] and maxima[pos] == best
    if all(present):
        med = median_select(col1[0], col2[0], p.max_modulus, rng)
        assert decode_max(med.value, owner) == sorted(maxima)[(m - 1) // 2]


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 6), st.integers(1, 64), st.integers(0, 2**30))
def test_param_files_reproducible(m, b, seed):
    a, c = generate_params(m, b, seed=seed), generate_params(m, b, seed=seed)
    for role in ("owner", "server1", "server2", "server3", "announcer"):
        assert encode_view(view_for(a, role)) == encode_view(view_for(c, role))


@SETTINGS
@given(bit_matrices, st.integers(0, 2**32))
def test_server_is_deterministic(bits, seed):
    m, b = len(bits), len(bits[0])
    owner, s1, _ = _views(m, b)
    bundles = _share_all(bits, owner, seed)
    spec = QuerySpec(op="psi", set_attr="k")
    outs = []
    for _ in range(2):
        node = ServerNode("server1", s1)
        for j, bd in enumerate(bundles, start=1):
            node.handle(RoundMessage(MsgType.STORE_SHARES, f"owner{j}", "server1", 1, bd["server1"]))
        replies = node.handle(RoundMessage(MsgType.PSI_EVAL, "owner1", "server1", 1,
                                           {"spec": json_item(spec.to_json())}))
        outs.append([r.vector("out").tolist() for r in replies])
    assert outs[0] == outs[1]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["psi", "psu", "count", "sum", "avg", "max", "median"]))
def test_protocol_matches_oracle(seed, op):
    rng = np.random.default_rng(seed)
    owners, m, b, dmax = random_instance(rng, m=int(rng.integers(2, 5)), b=int(rng.integers(4, 17)))
    spec = random_spec(rng, op)
    out = run_query(spec, owners, _params(m, b, dmax), seed=seed)
    assert out.result == oracle_eval(PlainInstance.from_relations(owners), spec)
    assert out.transcript.server_edges() == []
